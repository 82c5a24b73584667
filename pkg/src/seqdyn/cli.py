"""Command line: ``seqdyn run <config> [--threads N] [--out DIR]``, ``seqdyn describe <preset>``, ``seqdyn list``.

Exit status: 0 when every declared check passes, 1 when a check fails or the
experiment aborts, 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import ConfigParse, ExperimentFailure, SeqdynError, UnknownPreset
from .output import write_json
from .presets import PRESETS, Check


@dataclass(frozen=True)
class RunResult:
    summary: dict
    checks: tuple[Check, ...]
    out: Path

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def status(self) -> int:
        return 0 if self.passed else 1


def describe(preset: str) -> str:
    if preset not in PRESETS:
        raise UnknownPreset(f"unknown preset {preset!r}; valid presets: {', '.join(PRESETS)}")
    return PRESETS[preset].describe()


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, threads: int = 1) -> RunResult:
    """Execute the configured preset and write its artifacts plus summary.json.

    Artifacts go to ``out/<config file stem>`` (``out/<preset>`` for configs
    parsed from text).

    Raises :class:`ExperimentFailure` when some check fails; the summary is
    written first and the exception carries the result.
    """
    out = Path(out or "results") / (Path(cfg.source).stem if cfg.source else cfg.preset)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    checks = tuple(PRESETS[cfg.preset].run(cfg, out, max(1, int(threads))))
    summary = {
        "preset": cfg.preset,
        "version": __version__,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "checks": [c.to_record() for c in checks],
        "pass": all(c.passed for c in checks),
        "metadata": {
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "runtime_s": round(time.perf_counter() - t0, 3),
            "threads": int(threads),
            "source": cfg.source,
        },
    }
    write_json(out / "summary.json", summary)
    result = RunResult(summary, checks, out)
    if not result.passed:
        failed = ", ".join(c.name for c in checks if not c.passed)
        exc = ExperimentFailure(f"{cfg.preset}: failed checks: {failed}")
        exc.result = result
        raise exc
    return result


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqdyn", description="Experiments on sequential dynamical systems.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=1, help="worker cap (output does not depend on it)")
    r.add_argument("--out", default="results", help="output directory (default: results)")
    d = sub.add_parser("describe", help="describe a preset")
    d.add_argument("preset")
    sub.add_parser("list", help="list presets")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        for name, p in PRESETS.items():
            print(f"{name}: {p.anchor}")
        return 0
    if args.command == "describe":
        try:
            print(describe(args.preset))
        except UnknownPreset as exc:
            print(f"error: {exc.args[0]}", file=sys.stderr)
            return 2
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigParse as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        res = run_experiment(cfg, args.out, args.threads)
    except ExperimentFailure as exc:
        for c in exc.result.checks:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value!r} ({c.relation} {c.tolerance!r})")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SeqdynError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for c in res.checks:
        print(f"PASS {c.name}: {c.value!r} ({c.relation} {c.tolerance!r})")
    print(f"summary: {res.out / 'summary.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
