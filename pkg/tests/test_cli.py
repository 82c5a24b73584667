import hashlib
import json
import subprocess
import sys

import pytest

from seqdyn import __version__
from seqdyn.cli import describe, main, run_experiment
from seqdyn.config import parse_config
from seqdyn.errors import ConfigParse, ExperimentFailure, UnknownPreset
from seqdyn.presets import PRESETS

SMALL = """
# small shadowing run
[experiment]
preset = shadowing-lipschitz
seed = 3
F = doubling
deltas = 1e-2, 1e-3
trials = 5
length = 50
{extra}

[map.f]
family = doubling

[sequence.doubling]
form = constant
map = f
"""


def _write(tmp_path, text, name="small.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_list_and_describe(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in PRESETS)
    assert main(["describe", "entropy"]) == 0
    assert "knobs" in capsys.readouterr().out
    assert "roles" in describe("clt-asip")


def test_describe_unknown(capsys):
    assert main(["describe", "nope"]) == 2
    assert "valid presets" in capsys.readouterr().err
    with pytest.raises(UnknownPreset):
        describe("nope")


@pytest.mark.parametrize(
    "text",
    [
        SMALL.format(extra="bogus = 1"),
        SMALL.format(extra="trials = many"),
        SMALL.replace("shadowing-lipschitz", "no-such-preset").format(extra=""),
        SMALL.replace("F = doubling", "F = missing").format(extra=""),
        SMALL.format(extra="") + "\n[weird]\nx = 1\n",
        SMALL.replace("family = doubling", "family = tent").format(extra=""),
        "not an ini file",
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, text):
    assert main(["run", str(_write(tmp_path, text)), "--out", str(tmp_path / "out")]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "absent.ini")]) == 2


def test_run_writes_summary(tmp_path):
    path = _write(tmp_path, SMALL.format(extra=""))
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == 0
    d = tmp_path / "out" / "small"
    summary = json.loads((d / "summary.json").read_text())
    cfg = parse_config(path.read_text(), str(path), env={})
    assert summary["config_hash"] == hashlib.sha256(cfg.canonical.encode()).hexdigest()
    assert summary["version"] == __version__
    assert summary["pass"] is True
    assert set(summary["metadata"]) == {"timestamp", "runtime_s", "threads", "source"}
    assert "timestamp" not in {k for k in summary if k != "metadata"}
    assert (d / "shadowing.csv").read_text().startswith("delta,trial,beta")


def test_failing_check_exit_1(tmp_path, capsys):
    path = _write(tmp_path, SMALL.format(extra="bound_slack = -1"))
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == 1
    assert "FAIL beta_minus_bound" in capsys.readouterr().out
    summary = json.loads((tmp_path / "out" / "small" / "summary.json").read_text())
    assert summary["pass"] is False
    with pytest.raises(ExperimentFailure) as info:
        run_experiment(parse_config(path.read_text(), str(path), env={}), tmp_path / "again")
    assert not info.value.result.passed


def test_canonical_hash_ignores_layout():
    a = parse_config(SMALL.format(extra=""), env={})
    b = parse_config(SMALL.format(extra="").replace("trials = 5", "trials   =   5").replace("# small shadowing run", ""), env={})
    assert a.config_hash == b.config_hash
    c = parse_config(SMALL.format(extra="").replace("trials = 5", "trials = 6"), env={})
    assert a.config_hash != c.config_hash


def test_seed_override():
    a = parse_config(SMALL.format(extra=""), env={})
    b = parse_config(SMALL.format(extra=""), env={"SEQDYN_SEED": "99"})
    assert (a.seed, b.seed) == (3, 99)
    assert a.config_hash != b.config_hash
    with pytest.raises(ConfigParse):
        parse_config(SMALL.format(extra=""), env={"SEQDYN_SEED": "x"})


def test_rerun_byte_identical(tmp_path):
    path = _write(tmp_path, SMALL.format(extra=""))
    cfg = parse_config(path.read_text(), str(path), env={})
    r1 = run_experiment(cfg, tmp_path / "one", threads=1)
    r2 = run_experiment(cfg, tmp_path / "two", threads=3)
    assert (r1.out / "shadowing.csv").read_bytes() == (r2.out / "shadowing.csv").read_bytes()


def test_required_observable_and_roles():
    text = """
[experiment]
preset = birkhoff-stability
F = s
[map.f]
family = doubling
[sequence.s]
map = f
"""
    with pytest.raises(ConfigParse, match="observable"):
        parse_config(text, env={})
    with pytest.raises(ConfigParse, match="role"):
        parse_config(text.replace("F = s\n", "") + "[observable]\ncos = 1\n", env={})


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "seqdyn.cli", "list"], capture_output=True, text=True, check=True)
    assert "entropy" in out.stdout
