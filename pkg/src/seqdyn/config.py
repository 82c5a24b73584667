"""Experiment configuration: a sectioned key-value text file.

Example::

    [experiment]
    preset = conjugacy-residual
    seed = 42
    F = f_seq
    G = g_seq
    R = 4096

    [map.f]
    family = doubling

    [map.g]
    family = circle
    degree = 2
    sin = 0.05

    [sequence.f_seq]
    form = constant
    map = f

    [sequence.g_seq]
    form = constant
    map = g

Sections: ``[experiment]`` (preset, seed, role bindings and numeric knobs),
``[map.NAME]``, ``[field.NAME]``, ``[sequence.NAME]`` and ``[observable]``.
Unknown sections and keys are rejected.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigParse
from .phase_maps import (
    CAT_MATRIX,
    CircleField,
    CircleMap,
    DecayLaw,
    MapSequence,
    Observable,
    TorusField,
    TorusMap,
)

MAP_KEYS = {"family", "degree", "sin", "cos", "shift", "matrix", "amp", "coeffs"}
FIELD_KEYS = {"family", "sin", "cos", "shift", "amp", "coeffs"}
SEQUENCE_KEYS = {"form", "map", "maps", "limit", "direction", "decay", "C", "ratio", "exponent", "eps", "alpha", "leading"}
OBSERVABLE_KEYS = {"cos", "sin", "const"}


def floats(text: str) -> tuple[float, ...]:
    """Comma or whitespace separated reals; empty text gives ()."""
    parts = text.replace(",", " ").split()
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigParse(f"expected numbers, got {text!r}") from exc


def ints(text: str) -> tuple[int, ...]:
    parts = text.replace(",", " ").split()
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ConfigParse(f"expected integers, got {text!r}") from exc


def names(text: str) -> tuple[str, ...]:
    return tuple(p for p in text.replace(",", " ").split() if p)


def _one(text: str, conv, key: str):
    try:
        return conv(text)
    except ValueError as exc:
        raise ConfigParse(f"bad value for {key}: {text!r}") from exc


def boolean(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


KNOB_TYPES = {"int": int, "float": float, "floats": floats, "ints": ints, "str": str, "bool": boolean}


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str
    seed: int
    knobs: dict
    roles: dict[str, str]
    sequences: dict[str, MapSequence]
    maps: dict
    observable: Observable | None
    canonical: str = field(repr=False, default="")
    source: str | None = None

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical.encode()).hexdigest()

    def sequence(self, role: str) -> MapSequence:
        return self.sequences[self.roles[role]]

    def has(self, role: str) -> bool:
        return role in self.roles


def _check_keys(section: str, keys, allowed) -> None:
    bad = sorted(set(keys) - set(allowed))
    if bad:
        raise ConfigParse(f"unknown key(s) {', '.join(bad)} in [{section}]; allowed: {', '.join(sorted(allowed))}")


def _circle_field(sec, name) -> CircleField:
    return CircleField(_one(sec.get("shift", "0"), float, f"{name}.shift"), floats(sec.get("sin", "")), floats(sec.get("cos", "")))


def _torus_field(sec, name) -> TorusField:
    if "coeffs" in sec:
        c = floats(sec["coeffs"])
        if len(c) != 4:
            raise ConfigParse(f"[{name}] coeffs needs four numbers")
        return TorusField((c[:2], c[2:]))
    return TorusField.diagonal(_one(sec.get("amp", "0"), float, f"{name}.amp"))


def _build_map(sec, name):
    _check_keys(name, sec.keys(), MAP_KEYS)
    fam = sec.get("family", "circle")
    try:
        if fam == "doubling":
            return CircleMap(2)
        if fam == "circle":
            return CircleMap(_one(sec.get("degree", "2"), int, f"{name}.degree"), _circle_field(sec, name))
        if fam in ("cat", "torus"):
            m = ints(sec["matrix"]) if "matrix" in sec else sum(CAT_MATRIX, ())
            if len(m) != 4:
                raise ConfigParse(f"[{name}] matrix needs four integers")
            return TorusMap((m[:2], m[2:]), _torus_field(sec, name))
    except (ValueError, ArithmeticError) as exc:
        raise ConfigParse(f"[{name}]: {exc}") from exc
    raise ConfigParse(f"[{name}] unknown family {fam!r}; expected doubling, circle, cat or torus")


def _build_field(sec, name):
    _check_keys(name, sec.keys(), FIELD_KEYS)
    fam = sec.get("family", "circle")
    if fam == "circle":
        return _circle_field(sec, name)
    if fam == "torus":
        return _torus_field(sec, name)
    raise ConfigParse(f"[{name}] unknown family {fam!r}; expected circle or torus")


def _lookup(table: dict, key: str, kind: str, where: str):
    if key not in table:
        raise ConfigParse(f"[{where}] refers to undefined {kind} {key!r}")
    return table[key]


def _decay(sec, name) -> DecayLaw:
    kind = sec.get("decay", "geometric")
    C = _one(sec.get("C", "1"), float, f"{name}.C")
    try:
        if kind == "geometric":
            return DecayLaw.geometric(C, _one(sec.get("ratio", "0.5"), float, f"{name}.ratio"))
        if kind == "power":
            return DecayLaw.power(C, _one(sec.get("exponent", "1"), float, f"{name}.exponent"))
        if kind == "asip":
            return DecayLaw.asip(C, _one(sec.get("eps", "0.1"), float, f"{name}.eps"), _one(sec.get("alpha", "1"), float, f"{name}.alpha"))
        if kind == "zero":
            return DecayLaw()
    except ValueError as exc:
        raise ConfigParse(f"[{name}]: {exc}") from exc
    raise ConfigParse(f"[{name}] unknown decay {kind!r}; expected geometric, power, asip or zero")


def _build_sequence(sec, name, maps, fields) -> MapSequence:
    _check_keys(name, sec.keys(), SEQUENCE_KEYS)
    form = sec.get("form", "constant")
    try:
        if form == "constant":
            return MapSequence.constant(_lookup(maps, sec.get("map", ""), "map", name))
        if form == "periodic":
            return MapSequence.periodic([_lookup(maps, m, "map", name) for m in names(sec.get("maps", ""))])
        if form == "convergent-tail":
            limit = _lookup(maps, sec.get("limit", ""), "map", name)
            direction = _lookup(fields, sec.get("direction", ""), "field", name)
            leading = [_lookup(maps, m, "map", name) for m in names(sec.get("leading", ""))]
            return MapSequence.convergent_tail(limit, direction, _decay(sec, name), leading)
    except ConfigParse:
        raise
    except Exception as exc:  # construction errors are configuration errors
        raise ConfigParse(f"[{name}]: {exc}") from exc
    raise ConfigParse(f"[{name}] unknown form {form!r}; expected constant, periodic or convergent-tail")


def _canonical(cp: configparser.ConfigParser, seed: int) -> str:
    lines = []
    for s in sorted(cp.sections()):
        lines.append(f"[{s}]")
        for k in sorted(cp[s]):
            v = str(seed) if (s == "experiment" and k == "seed") else " ".join(cp[s][k].split())
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, source: str | None = None, env: dict | None = None) -> ExperimentConfig:
    """Parse and validate a configuration against its preset's schema."""
    from .presets import PRESETS  # late import: presets depend on every module

    env = os.environ if env is None else env
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source or "<config>")
    except configparser.Error as exc:
        raise ConfigParse(str(exc).splitlines()[0]) from exc
    if "experiment" not in cp:
        raise ConfigParse("missing [experiment] section")
    exp = cp["experiment"]
    preset_name = exp.get("preset", "")
    if preset_name not in PRESETS:
        raise ConfigParse(f"unknown preset {preset_name!r}; valid presets: {', '.join(PRESETS)}")
    preset = PRESETS[preset_name]
    seed_text = env.get("SEQDYN_SEED") or exp.get("seed", "0")
    seed = _one(seed_text, int, "seed")

    for s in cp.sections():
        head = s.split(".", 1)[0]
        if s not in ("experiment", "observable") and (head not in ("map", "field", "sequence") or "." not in s):
            raise ConfigParse(f"unknown section [{s}]")
    maps = {s.split(".", 1)[1]: _build_map(cp[s], s) for s in cp.sections() if s.startswith("map.")}
    fields = {s.split(".", 1)[1]: _build_field(cp[s], s) for s in cp.sections() if s.startswith("field.")}
    seqs = {s.split(".", 1)[1]: _build_sequence(cp[s], s, maps, fields) for s in cp.sections() if s.startswith("sequence.")}

    observable = None
    if "observable" in cp:
        sec = cp["observable"]
        _check_keys("observable", sec.keys(), OBSERVABLE_KEYS)
        observable = Observable.trig(floats(sec.get("cos", "")), floats(sec.get("sin", "")), _one(sec.get("const", "0"), float, "const"))

    allowed = {"preset", "seed"} | set(preset.roles) | set(preset.optional_roles) | set(preset.knobs)
    _check_keys("experiment", exp.keys(), allowed)
    roles = {}
    for r in preset.roles + preset.optional_roles:
        if r in exp:
            _lookup(seqs, exp[r], "sequence", "experiment")
            roles[r] = exp[r]
        elif r in preset.roles:
            raise ConfigParse(f"preset {preset_name} needs role {r!r} bound to a [sequence.NAME]")
    if preset.needs_observable and observable is None:
        raise ConfigParse(f"preset {preset_name} needs an [observable] section")
    knobs = {}
    for k, (kind, default, _help) in preset.knobs.items():
        if k in exp:
            knobs[k] = _one(exp[k], KNOB_TYPES[kind], k)
        else:
            knobs[k] = default
    return ExperimentConfig(preset_name, seed, knobs, roles, seqs, maps, observable, _canonical(cp, seed), source)


def load_config(path, env: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, str(path), env)
