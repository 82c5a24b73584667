"""Experiment presets: schema (roles, knobs) and runner for each named experiment.

A runner receives the parsed configuration, an output directory and a worker
cap, writes its CSV/JSON artifacts and returns a list of :class:`Check`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import conjugacy as cj
from . import entropy as en
from . import ergodic as eg
from . import limit_stats as ls
from . import shadowing as sh
from .output import write_csv, write_json
from .phase_maps import CircleMap, MapSequence, dist, uniform_grid

NAN = math.nan


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    relation: str  # how value is compared with tolerance: "<", "<=", ">=", "|x|<=", "true"
    passed: bool

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "tolerance": self.tolerance,
            "relation": self.relation,
            "verdict": "pass" if self.passed else "fail",
        }


def check(name: str, value, tolerance, relation: str) -> Check:
    v = float(value)
    t = float(tolerance)
    ok = {
        "<": v < t,
        "<=": v <= t,
        ">=": v >= t,
        "|x|<=": abs(v) <= t,
        "true": bool(value),
    }[relation]
    return Check(name, v, t, relation, bool(ok and math.isfinite(v)))


@dataclass(frozen=True)
class Preset:
    name: str
    anchor: str
    description: str
    roles: tuple[str, ...]
    knobs: dict  # name -> (type, default, help)
    outputs: tuple[str, ...]
    run: Callable = field(repr=False)
    optional_roles: tuple[str, ...] = ()
    needs_observable: bool = False

    def describe(self) -> str:
        lines = [f"{self.name}", f"  anchor: {self.anchor}", f"  {self.description}"]
        roles = ", ".join(self.roles) or "none"
        lines.append(f"  roles (bind to [sequence.NAME]): {roles}")
        if self.optional_roles:
            lines.append(f"  optional roles: {', '.join(self.optional_roles)}")
        if self.needs_observable:
            lines.append("  needs [observable]")
        lines.append("  knobs:")
        for k, (kind, default, help_) in self.knobs.items():
            d = ", ".join(str(v) for v in default) if isinstance(default, tuple) else default
            lines.append(f"    {k} ({kind}, default {d}): {help_}")
        lines.append(f"  outputs: {', '.join(self.outputs)}, summary.json")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _scaled_family(F: MapSequence, G: MapSequence, amp: float) -> MapSequence:
    """G with its maps' offsets from F's limit rescaled to C0 size ``amp``.

    G must be constant or periodic; the common scale is the largest grid C0
    distance between a map of G and the limit of F.
    """
    f = F.limit if F.limit is not None else F.at(0)
    maps = G.maps
    g = uniform_grid(1024, f.dim)
    ref = max(float(np.max(dist(m(g), f(g), f.dim))) for m in maps)
    out = [f.perturbed(m.field + f.field.scaled(-1.0), amp / ref) for m in maps]
    return MapSequence.constant(out[0]) if G.form == "constant" else MapSequence.periodic(out)


def _limit_map(F: MapSequence):
    return F.limit if F.limit is not None else F.at(0)


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def run_shadowing(cfg, out: Path, threads: int):
    F = cfg.sequence("F")
    k = cfg.knobs
    fit = sh.lipschitz_fit(F, k["deltas"], k["trials"], cfg.seed, k["length"], threads)
    write_csv(out / "shadowing.csv", ("delta", "trial", "beta", "iterations", "certified"), fit.rows())
    checks = [check("failures", fit.failure_fraction, 0.0, "<=")]
    record = {
        "slope": fit.slope,
        "L_hat": fit.L_hat,
        "deltas": fit.deltas,
        "max_beta": fit.max_beta,
        "failure_fraction": fit.failure_fraction,
        "all_certified": fit.all_certified,
    }
    if F.dim == 1:
        lam = F.lam
        excess = max(b - lam / (1.0 - lam) * d for d, b in zip(fit.deltas, fit.max_beta))
        record["lam"] = lam
        checks.append(check("beta_minus_bound", excess, k["bound_slack"], "<="))
    else:
        checks.append(check("uniqueness_certified", fit.all_certified, 1.0, "true"))
    if k["slope_tol"] > 0 and not fit.exact:
        checks.append(check("slope_minus_one", fit.slope - 1.0, k["slope_tol"], "|x|<="))
    write_json(out / "shadowing.json", record)
    return checks


def run_conjugacy(cfg, out: Path, threads: int):
    F, G = cfg.sequence("F"), cfg.sequence("G")
    k = cfg.knobs
    checks = []
    res = cj.conjugacy_residual(F, G, k["k_max"], k["R"], k["depth"])
    checks.append(check("residual", res, k["tol"], "<"))
    h = cj.sequential_conjugacy(G, F, k["oracle_points"], k["depth"])
    h.write(out / "conjugacy")
    f, g = _limit_map(F), _limit_map(G)
    if F.form == G.form == "constant" and isinstance(f, CircleMap):
        o = cj.itinerary_oracle(f, g, h.grid)
        checks.append(check("oracle_distance", float(np.max(dist(o, h.images, 1))), k["tol"], "<"))
    rows = []
    if k["amplitudes"]:
        ratios = []
        for a in k["amplitudes"]:
            s = cj.sequential_conjugacy(F, _scaled_family(F, G, a), k["R"], k["depth"])
            ratios.append(s.sup_dist_to_identity / a)
            rows.append((a, s.sup_dist_to_identity, ratios[-1]))
        write_csv(out / "proximity.csv", ("amplitude", "sup_dist", "ratio"), rows)
        spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
        checks.append(check("lipschitz_ratio_spread", spread, k["lipschitz_spread"], "<"))
    if cfg.has("tail"):
        T = cfg.sequence("tail")
        L = MapSequence.constant(_limit_map(T))
        d = [cj.shifted_conjugacy(T, L, j, k["R"], k["depth"]).sup_dist_to_identity for j in range(1, k["tail_k"] + 1)]
        write_csv(out / "tail.csv", ("k", "sup_dist"), zip(range(1, k["tail_k"] + 1), d))
        worst_rise = max((b - a for a, b in zip(d, d[1:])), default=0.0)
        checks.append(check("tail_monotone_rise", worst_rise, 0.0, "<="))
        checks.append(check("tail_final", d[-1], k["tail_tol"], "<"))
    return checks


def run_quasi(cfg, out: Path, threads: int):
    F, G = cfg.sequence("F"), cfg.sequence("G")
    k = cfg.knobs
    fams = [(a, _scaled_family(F, G, a)) for a in k["amplitudes"]] or [(NAN, G)]
    rows, checks = [], []
    for a, Ga in fams:
        q = cj.quasi_conjugacy_expanding(F, Ga, k["R"], k["depth"], k["n_max"])
        rows.append((a, q.eps, q.delta, q.defect, q.bound, q.sample.sup_dist_to_identity))
        tag = "given" if math.isnan(a) else repr(a)
        checks.append(check(f"defect_minus_bound[{tag}]", q.defect - q.bound, 0.0, "<="))
    write_csv(out / "quasi.csv", ("amplitude", "eps", "delta", "defect", "bound", "sup_dist"), rows)
    return checks


def run_birkhoff(cfg, out: Path, threads: int):
    F = cfg.sequence("F")
    k = cfg.knobs
    avg, hist = eg.typical_ensemble(
        F, cfg.observable, k["n"], k["starts"], cfg.seed, k["burn"], k["depth"], k["bins"], threads
    )
    ks = np.array([eg.ks_to_uniform(eg.EmpiricalMeasure.from_histogram(h)) for h in hist])
    write_csv(out / "birkhoff.csv", ("start", "average", "ks"), zip(range(len(avg)), avg, ks))
    frac = float(np.mean(np.abs(avg) <= k["band"]))
    return [
        check("fraction_in_band", frac, k["fraction"], ">="),
        check("median_ks", float(np.median(ks)), k["ks_tol"], "<"),
    ]


def run_periodic(cfg, out: Path, threads: int):
    F = cfg.sequence("F")
    k = cfg.knobs
    deg = eg._degree(F)
    pts = eg.coded_orbit(F, eg.random_digits(deg, k["n"] + k["depth"], cfg.seed, 0), k["n"], k["depth"])
    direct = eg.EmpiricalMeasure.from_samples(pts)
    ref_map = MapSequence.constant(CircleMap(deg))  # Lebesgue is invariant for x -> deg x
    hs = [cj.shifted_conjugacy(F, ref_map, i, k["R"]) for i in range(F.period)]
    ref = eg.EmpiricalMeasure.from_samples(sh.rng_for(cfg.seed, 1).random(k["reference"]), "reference")
    mix = eg.periodic_limit_measure(hs, ref)
    d = eg.measure_distance(direct, mix)
    bins = 1024
    write_csv(out / "periodic.csv", ("bin", "direct", "mixture"), zip(range(bins), direct.histogram(bins), mix.histogram(bins)))
    return [check("ks_direct_vs_mixture", d, k["ks_tol"], "<")]


def run_irregular(cfg, out: Path, threads: int):
    k = cfg.knobs
    F = cfg.sequence("F") if cfg.has("F") else None
    probe = eg.irregular_point(cfg.observable, k["trace_len"], k["growth"], F, k["depth"])
    probe.write(out / "irregular", k["every"])
    checks = [
        check("limsup", probe.limsup, k["limsup_min"], ">="),
        check("liminf", probe.liminf, k["liminf_max"], "<="),
    ]
    if probe.transport is not None:
        t = probe.transport
        checks.append(check("transport_excess", t["max_excess"], 0.0, "<="))
        checks.append(check("transport_budget", t["budget_max"], k["budget"], "<="))
        checks.append(check("transport_limsup", t["limsup"], k["limsup_min"] - k["budget"], ">="))
        checks.append(check("transport_liminf", t["liminf"], k["liminf_max"] + k["budget"], "<="))
    return checks


def run_entropy(cfg, out: Path, threads: int):
    F = cfg.sequence("F")
    k = cfg.knobs
    cand = k["candidates"]
    if k["candidate_kind"] == "random":
        cand = en.random_candidates(cand if F.dim == 1 else cand * cand, F.dim, cfg.seed)
    elif k["candidate_kind"] != "grid":
        raise ValueError("candidate_kind must be grid or random")
    est = en.entropy_estimate(F, k["eps"], k["n"], cand)
    est.write(out / "entropy")
    checks = []
    if math.isfinite(k["target"]):
        checks.append(check("estimate_minus_target", est.estimate - k["target"], k["tolerance"], "|x|<="))
    if k["compare"]:
        rep = en.entropy_comparison(F, _limit_map(F), k["compare_eps"], k["compare_n"], candidates=k["compare_candidates"])
        write_json(out / "comparison.json", rep.to_record())
        checks.append(check("forward_inequality", rep.forward_ok, 1.0, "true"))
        checks.append(check("reciprocal_inequality", rep.reciprocal_ok, 1.0, "true"))
    return checks


def run_clt(cfg, out: Path, threads: int):
    k = cfg.knobs
    phi = cfg.observable
    F = cfg.sequence("F")
    gk = ls.sigma_green_kubo(_limit_map(F), phi, k["n_samples"], k["lag_max"], cfg.seed, threads)
    write_json(out / "green_kubo.json", gk.to_record())
    checks = []
    if math.isfinite(k["sigma2_target"]):
        checks.append(check("sigma2_minus_target", gk.sigma2 - k["sigma2_target"], k["sigma2_tol"], "|x|<="))
    records = {}
    for role in ("F", "tail"):
        if not cfg.has(role):
            continue
        stats = ls.partial_sum_ensemble(cfg.sequence(role), phi, k["n"], k["ensemble"], cfg.seed, threads=threads)
        rep = ls.clt_check(stats, gk.sigma2, k["level"])
        stats.write(out / f"sums_{role}")
        records[role] = rep.to_record()
        if rep.degenerate:
            checks.append(check(f"collapse_variance[{role}]", rep.sample_variance[-1], 0.05, "<"))
        else:
            checks.append(check(f"ks_pvalue[{role}]", rep.pvalues[-1], k["level"], ">="))
    write_json(out / "clt.json", records)
    rate = ls.asip_rate_schedule(k["rate_C"], k["rate_eps"], k["rate_alpha"], k["rate_nmax"])
    ns = 2 ** np.arange(0, int(math.log2(k["rate_nmax"])) + 1)
    write_csv(out / "rate.csv", ("n", "a_n", "drift"), zip(ns, rate.a[ns - 1], rate.drift[ns - 1]))
    write_json(out / "rate.json", rate.to_record())
    checks.append(check("drift_exponent_error", rate.exponent - (0.5 - rate.eps), k["exponent_tol"], "|x|<="))
    checks.append(check("drift_within_budget", rate.within_budget, 1.0, "true"))
    return checks


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

PRESETS: dict[str, Preset] = {}


def _register(p: Preset) -> None:
    PRESETS[p.name] = p


_register(
    Preset(
        "shadowing-lipschitz",
        "Lipschitz shadowing for expanding and Anosov map sequences",
        "Shadows random delta-pseudo-orbits and fits log beta against log delta.",
        ("F",),
        {
            "deltas": ("floats", (1e-2, 1e-3, 1e-4), "pseudo-orbit defect schedule"),
            "trials": ("int", 100, "pseudo-orbits per delta"),
            "length": ("int", 500, "pseudo-orbit length"),
            "bound_slack": ("float", 1e-9, "allowance over lam/(1-lam)*delta on the circle"),
            "slope_tol": ("float", 0.1, "allowed |slope - 1| of the log-log fit (0 disables)"),
        },
        ("shadowing.csv", "shadowing.json"),
        run_shadowing,
    )
)
_register(
    Preset(
        "conjugacy-residual",
        "sequential conjugacy between nearby expanding or Anosov sequences",
        "Checks h_n o F_n = G_n o h on a grid, the itinerary oracle, Lipschitz proximity and tail decay.",
        ("F", "G"),
        {
            "R": ("int", 4096, "grid resolution"),
            "depth": ("int", 40, "pullback truncation depth"),
            "k_max": ("int", 20, "largest time index in the residual"),
            "tol": ("float", 1e-6, "residual and oracle tolerance"),
            "oracle_points": ("int", 1024, "grid size for the itinerary oracle"),
            "amplitudes": ("floats", (), "C0 sizes of G - F for the proximity schedule"),
            "lipschitz_spread": ("float", 2.0, "largest allowed ratio spread of sup_dist/amplitude"),
            "tail_k": ("int", 12, "shifts measured for the tail sequence"),
            "tail_tol": ("float", 1e-4, "sup_dist bound at the last shift"),
        },
        ("conjugacy.csv", "conjugacy.json", "proximity.csv", "tail.csv"),
        run_conjugacy,
        optional_roles=("tail",),
    )
)
_register(
    Preset(
        "quasi-conjugacy",
        "quasi-conjugacy of an expanding map to a nearby sequence",
        "Measures max_n d_C0(G_n o h, h o F_n) against 2 lam eps / (1 - lam).",
        ("F", "G"),
        {
            "R": ("int", 4096, "grid resolution"),
            "depth": ("int", 40, "pullback truncation depth"),
            "n_max": ("int", 20, "largest time index"),
            "amplitudes": ("floats", (), "rescale G to these C0 distances (empty: use G as given)"),
        },
        ("quasi.csv",),
        run_quasi,
    )
)
_register(
    Preset(
        "birkhoff-stability",
        "stability of Birkhoff averages and invariant measures under convergent tails",
        "Birkhoff averages and empirical measures for starts drawn from h_* Lebesgue.",
        ("F",),
        {
            "n": ("int", 1_000_000, "orbit length"),
            "starts": ("int", 200, "number of starts"),
            "band": ("float", 0.01, "half-width around the limit average"),
            "fraction": ("float", 0.95, "required fraction of starts in the band"),
            "ks_tol": ("float", 0.01, "bound on the median KS distance to Lebesgue"),
            "bins": ("int", 4096, "histogram bins per start"),
            "burn": ("int", 64, "symbolically coded head length"),
            "depth": ("int", 48, "coding depth"),
        },
        ("birkhoff.csv",),
        run_birkhoff,
        needs_observable=True,
    )
)
_register(
    Preset(
        "periodic-measure",
        "invariant measure of a periodic sequence as an average of conjugated pushforwards",
        "Compares a direct empirical measure with (1/N) sum (h_i)_* Lebesgue.",
        ("F",),
        {
            "n": ("int", 1_000_000, "orbit length"),
            "R": ("int", 4096, "conjugacy grid resolution"),
            "reference": ("int", 1 << 18, "reference Lebesgue sample size"),
            "ks_tol": ("float", 0.02, "KS tolerance"),
            "depth": ("int", 48, "coding depth"),
        },
        ("periodic.csv",),
        run_periodic,
    )
)
_register(
    Preset(
        "irregular-point",
        "Birkhoff-irregular points and their transport along a convergent tail",
        "Digit-program point with oscillating averages; optional transport along F.",
        (),
        {
            "trace_len": ("int", 1_000_000, "trace length"),
            "growth": ("int", 32, "block growth factor"),
            "limsup_min": ("float", 0.9, "required limsup"),
            "liminf_max": ("float", -0.4, "required liminf"),
            "budget": ("float", 0.1, "transport budget"),
            "depth": ("int", 48, "coding depth"),
            "every": ("int", 1000, "trace stride in the CSV"),
        },
        ("irregular.csv", "irregular.json"),
        run_irregular,
        optional_roles=("F",),
        needs_observable=True,
    )
)
_register(
    Preset(
        "entropy",
        "topological entropy of sequences and its invariance under convergent tails",
        "Separated-set counting: slopes of log s_n(eps) over eps and n schedules, "
        "and the comparison s_n(F, eps/3) >= s_n(f, eps).",
        ("F",),
        {
            "eps": ("floats", (0.125, 0.0625), "decreasing eps schedule"),
            "n": ("ints", (6, 7, 8, 9, 10, 11, 12), "increasing n schedule"),
            "candidates": ("int", 1 << 20, "candidates (per axis on the torus)"),
            "candidate_kind": ("str", "grid", "grid or random"),
            "target": ("float", NAN, "expected entropy (nan: no check)"),
            "tolerance": ("float", 0.05, "allowed |estimate - target|"),
            "compare": ("bool", False, "run the separated-count comparison with the limit map"),
            "compare_eps": ("float", 0.125, "comparison scale"),
            "compare_n": ("ints", (8, 9, 10, 11, 12), "comparison n schedule"),
            "compare_candidates": ("int", 1 << 20, "comparison candidate grid"),
        },
        ("entropy.csv", "entropy.json", "comparison.json"),
        run_entropy,
    )
)
_register(
    Preset(
        "clt-asip",
        "almost sure invariance principle (ASIP) for Birkhoff sums of sequences",
        "Green-Kubo sigma^2 output, CLT normality of S_n/(sigma sqrt n), coboundary collapse "
        "and the drift budget sum a_j^alpha = O(n^{1/2-eps}).",
        ("F",),
        {
            "n": ("int", 1 << 16, "partial-sum length"),
            "ensemble": ("int", 2000, "ensemble size"),
            "n_samples": ("int", 1 << 23, "Green-Kubo samples"),
            "lag_max": ("int", 40, "Green-Kubo truncation"),
            "sigma2_target": ("float", NAN, "expected sigma^2 (nan: no check)"),
            "sigma2_tol": ("float", 0.01, "allowed |sigma^2 - target|"),
            "level": ("float", 0.01, "KS p-value threshold"),
            "rate_C": ("float", 1.0, "rate schedule constant C"),
            "rate_eps": ("float", 0.1, "rate schedule eps"),
            "rate_alpha": ("float", 1.0, "Hoelder exponent alpha"),
            "rate_nmax": ("int", 1 << 16, "rate schedule length"),
            "exponent_tol": ("float", 0.05, "allowed error of the fitted drift exponent"),
        },
        ("sums_F.csv", "sums_tail.csv", "rate.csv", "green_kubo.json", "clt.json", "rate.json"),
        run_clt,
        optional_roles=("tail",),
        needs_observable=True,
    )
)
