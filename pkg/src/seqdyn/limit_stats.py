"""Limit laws for Birkhoff sums: Green-Kubo variance, partial-sum ensembles, CLT checks.

The Brownian coupling of the almost sure invariance principle is not built;
what is tested are its consequences (normality of S_n / sqrt(n), collapse for
coboundaries, variance stability under admissible perturbations) together with
the drift budget sum_{j<n} a_j^alpha = O(n^{1/2 - eps}).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from . import _kernels as K
from .conjugacy import conjugacy_distances
from .ergodic import CHUNK, _degree, _obs_table, _tables, coded_heads, coded_orbit, random_digits
from .errors import DegenerateVariance, NotMeanZero, ParameterOutOfRange, RatePreconditionUnchecked
from .output import write_csv, write_json
from .phase_maps import MapSequence, Observable
from .shadowing import rng_for, run_indexed

GK_ORBIT = 1 << 14  # points per reference orbit in the Green-Kubo estimator
GK_BURN = 64
GROUP = 256  # ensemble members advanced together


# ---------------------------------------------------------------------------
# Green-Kubo variance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GreenKubo:
    """sigma^2 = c_0 + 2 sum_{1<=j<=lag_max} c_j with c_j = int phi (phi o f^j) dmu."""

    sigma2: float
    stderr: float
    lags: np.ndarray  # c_0, ..., c_lag_max
    mean: float
    mean_stderr: float
    n_samples: int

    def __float__(self) -> float:
        return self.sigma2

    def to_record(self) -> dict:
        return {
            "sigma2": self.sigma2,
            "stderr": self.stderr,
            "lags": self.lags,
            "mean": self.mean,
            "mean_stderr": self.mean_stderr,
            "n_samples": self.n_samples,
        }


def _reference_orbits(F: MapSequence, count: int, length: int, seed: int, keys: Sequence[int]) -> np.ndarray:
    """Orbit points after a burn-in, from uniform starts with low-bit reseeding.

    Orbit b uses streams (seed, keys[b], 0) for its start and (seed, keys[b], 1)
    for reseeding, so the result does not depend on grouping.
    """
    total = GK_BURN + length
    tabs = _tables(F, 0, total)
    x = np.array([rng_for(seed, k, 0).random() for k in keys])
    jit = np.stack([rng_for(seed, k, 1).random(total) for k in keys])
    out = np.empty((count, total))
    K.orbit_points(x, *tabs, jit, out)
    return out[:, GK_BURN:]


def sigma_green_kubo(
    f, phi: Observable, n_samples: int = 1 << 22, lag_max: int = 40, seed: int = 0, threads: int = 1
) -> GreenKubo:
    """Monte Carlo Green-Kubo variance along reference-distributed orbits.

    Lagged products are pooled along orbits of ``GK_ORBIT`` points started
    uniformly and run past a burn-in, so the orbit-ergodic average stands in
    for the invariant measure.  The standard error comes from the spread of the
    per-orbit estimates.
    """
    F = f if isinstance(f, MapSequence) else MapSequence.constant(f)
    L = GK_ORBIT
    B = max(2, -(-int(n_samples) // L))
    groups = [list(range(s, min(B, s + 64))) for s in range(0, B, 64)]

    def work(g):
        keys = groups[g]
        v = phi(_reference_orbits(F, len(keys), L + lag_max, seed, keys))
        c = np.stack([np.mean(v[:, :L] * v[:, j : j + L], axis=1) for j in range(lag_max + 1)], axis=1)
        return c, np.mean(v[:, :L], axis=1)

    parts = run_indexed(work, len(groups), threads)
    c = np.concatenate([p[0] for p in parts])
    m = np.concatenate([p[1] for p in parts])
    w = np.full(lag_max + 1, 2.0)
    w[0] = 1.0
    per_orbit = c @ w
    mean = float(np.mean(m))
    mean_se = float(np.std(m, ddof=1) / math.sqrt(B))
    if abs(mean) > 3.0 * mean_se and abs(mean) > 1e-12:
        raise NotMeanZero(f"observable mean {mean:.3g} exceeds 3 standard errors ({mean_se:.3g})")
    return GreenKubo(
        float(np.mean(per_orbit)),
        float(np.std(per_orbit, ddof=1) / math.sqrt(B)),
        np.mean(c, axis=0),
        mean,
        mean_se,
        B * L,
    )


# ---------------------------------------------------------------------------
# Partial-sum ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesStats:
    """Partial sums S_n for an ensemble of h_* Lebesgue-typical starts."""

    checkpoints: tuple[int, ...]
    sums: np.ndarray  # (ensemble, len(checkpoints))
    seed: int
    drift: np.ndarray  # sum_{j<n} d_C0(f_j, f) at each checkpoint (zeros for constant sequences)
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def ensemble(self) -> int:
        return self.sums.shape[0]

    @property
    def sample_variance(self) -> np.ndarray:
        """Sample variance of S_n / sqrt(n) at each checkpoint."""
        n = np.asarray(self.checkpoints, dtype=float)
        return np.var(self.sums / np.sqrt(n), axis=0, ddof=1)

    def rows(self):
        for k, n in enumerate(self.checkpoints):
            for i in range(self.ensemble):
                yield (n, i, self.sums[i, k])

    def write(self, stem) -> None:
        write_csv(f"{stem}.csv", ("n", "member", "S_n"), self.rows())


def log_checkpoints(n: int, first: int = 64) -> tuple[int, ...]:
    """Powers of two from ``first`` up to n, always ending at n."""
    pts = []
    k = first
    while k < n:
        pts.append(k)
        k *= 2
    return tuple(pts) + (int(n),)


def rate_admissible(F: MapSequence) -> bool:
    """True when the tail decay is known to satisfy a_j <= C j^{-(1/2 + eps)} for some eps > 0."""
    if F.form in ("constant", "periodic"):
        return True
    if F.form != "convergent-tail" or F.decay is None:
        return False
    if F.decay.kind in ("zero", "geometric"):
        return True
    return F.decay.exponent > 0.5


def _drift(F: MapSequence, checkpoints) -> np.ndarray:
    """Cumulative grid C0 distance of f_j to the limit (zeros unless convergent-tail)."""
    if F.form != "convergent-tail" or F.dim != 1:
        return np.zeros(len(checkpoints))
    g = np.linspace(0.0, 1.0, 1024, endpoint=False)
    a = F.decay(np.arange(max(checkpoints))) * float(np.max(np.abs(F.direction.value(g))))
    for i in range(min(len(F.maps), len(a))):
        a[i] = float(np.max(np.abs(F.at(i).lift(g) - F.limit.lift(g))))
    c = np.concatenate([[0.0], np.cumsum(a)])
    return c[np.asarray(checkpoints)]


def partial_sum_ensemble(
    F: MapSequence,
    phi: Observable,
    n: int,
    ensemble: int,
    seed: int = 0,
    checkpoints: Sequence[int] | None = None,
    burn: int = 64,
    depth: int = 48,
    threads: int = 1,
) -> SeriesStats:
    """S_n(x) = sum_{j<n} phi(F_j x) at logarithmic checkpoints for random starts.

    Starts are drawn from h_* Lebesgue through the symbolic coding (stream
    (seed, i, 1)); after ``burn`` coded points the orbit continues with
    reseeded float iteration (stream (seed, i, 2)).
    """
    if not rate_admissible(F):
        warnings.warn(
            "tail decay rate not verified against the invariance-principle precondition",
            RatePreconditionUnchecked,
            stacklevel=2,
        )
    cps = tuple(sorted(set(int(c) for c in (checkpoints or log_checkpoints(n, min(64, n)))))) or (n,)
    if cps[0] < 1 or cps[-1] > n:
        raise ValueError("checkpoints must lie in [1, n]")
    burn = min(burn, n)
    out = np.zeros((ensemble, len(cps)))
    oc = _obs_table(phi)
    # segment boundaries: checkpoints and chunk edges past the coded head
    edges = sorted(set([burn, n] + [c for c in cps if c > burn] + list(range(burn, n, CHUNK))))
    segments = [(a, b) for a, b in zip(edges, edges[1:]) if b > a]
    tabs = [_tables(F, a, b - a) for a, b in segments]
    head_cps = [(k, c) for k, c in enumerate(cps) if c <= burn]
    tail_cps = {c: k for k, c in enumerate(cps) if c > burn}
    groups = [range(s, min(ensemble, s + GROUP)) for s in range(0, ensemble, GROUP)]

    def work(g):
        idx = groups[g]
        x, heads = coded_heads(F, len(idx), burn, seed, depth, idx.start)
        cum = np.cumsum(phi(heads), axis=1) if burn else np.zeros((len(idx), 0))
        res = np.zeros((len(idx), len(cps)))
        for k, c in head_cps:
            res[:, k] = cum[:, c - 1]
        sums = cum[:, -1].copy() if burn else np.zeros(len(idx))
        rngs = [rng_for(seed, i, 2) for i in idx]
        empty_hist = np.zeros((len(idx), 0))
        for (a, b), tab in zip(segments, tabs):
            jit = np.stack([r.random(b - a) for r in rngs])
            K.run_orbits(x, *tab, jit, *oc, sums, empty_hist, np.empty(0), a)
            if b in tail_cps:
                res[:, tail_cps[b]] = sums
        return res

    parts = run_indexed(work, len(groups), threads)
    for g, res in zip(groups, parts):
        out[g.start : g.stop] = res
    return SeriesStats(cps, out, int(seed), _drift(F, cps), {"burn": burn, "depth": depth})


# ---------------------------------------------------------------------------
# CLT check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CLTReport:
    sigma2: float
    checkpoints: tuple[int, ...]
    ks: tuple[float, ...]
    pvalues: tuple[float, ...]
    sample_variance: tuple[float, ...]
    degenerate: bool
    passed: bool

    def to_record(self) -> dict:
        return {
            "sigma2": self.sigma2,
            "n": list(self.checkpoints),
            "ks": list(self.ks),
            "p": list(self.pvalues),
            "sample_variance": list(self.sample_variance),
            "degenerate": self.degenerate,
            "pass": self.passed,
        }


def clt_check(
    stats: SeriesStats,
    sigma2: float,
    level: float = 0.01,
    degenerate_below: float = 0.02,
    collapse_below: float = 0.05,
    strict: bool = False,
) -> CLTReport:
    """KS test of S_n / (sigma sqrt n) against N(0, 1) at every checkpoint.

    Passes iff the p-value at the last checkpoint exceeds ``level``.  When
    sigma^2 is below ``degenerate_below`` the sums must instead collapse: the
    sample variance of S_n / sqrt(n) at the last checkpoint stays below
    ``collapse_below``.  With ``strict`` a failed collapse raises
    :class:`DegenerateVariance`.
    """
    if stats.ensemble < 500:
        raise ValueError("CLT check needs an ensemble of at least 500")
    sigma2 = float(sigma2)
    var = stats.sample_variance
    n = np.asarray(stats.checkpoints, dtype=float)
    if sigma2 < degenerate_below:
        collapsed = bool(var[-1] < collapse_below)
        if strict and not collapsed:
            raise DegenerateVariance(f"sigma^2 = {sigma2:.3g} but S_n/sqrt(n) has variance {var[-1]:.3g}")
        nan = (math.nan,) * len(n)
        return CLTReport(sigma2, stats.checkpoints, nan, nan, tuple(var.tolist()), True, collapsed)
    z = stats.sums / (math.sqrt(sigma2) * np.sqrt(n))
    tests = [sps.kstest(z[:, k], "norm") for k in range(len(n))]
    ks = tuple(float(t.statistic) for t in tests)
    pv = tuple(float(t.pvalue) for t in tests)
    return CLTReport(sigma2, stats.checkpoints, ks, pv, tuple(var.tolist()), False, pv[-1] > level)


# ---------------------------------------------------------------------------
# Rate bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateSchedule:
    """Admissible tail schedule a_j = C j^{-(1/2+eps)/alpha} and its drift budget."""

    C: float
    eps: float
    alpha: float
    a: np.ndarray  # a_1, ..., a_{n_max}
    drift: np.ndarray  # sum_{j=1}^{n} a_j^alpha for n = 1..n_max
    bound_constant: float  # C' with drift(n) <= C' n^{1/2 - eps}
    max_ratio: float  # max_n drift(n) / n^{1/2 - eps}
    exponent: float  # fitted growth exponent of the drift
    fit_window: tuple[int, int]
    boundary: bool

    @property
    def within_budget(self) -> bool:
        return self.max_ratio <= self.bound_constant

    def to_record(self) -> dict:
        return {
            "C": self.C,
            "eps": self.eps,
            "alpha": self.alpha,
            "bound_constant": self.bound_constant,
            "max_ratio": self.max_ratio,
            "exponent": self.exponent,
            "target_exponent": 0.5 - self.eps,
            "fit_window": list(self.fit_window),
            "within_budget": self.within_budget,
            "boundary": self.boundary,
        }


def asip_rate_schedule(C: float, eps: float, alpha: float, n_max: int, boundary_eps: float = 0.45) -> RateSchedule:
    """Emit a_j for j <= n_max and check the drift budget.

    sum_{j<=n} j^{-(1/2+eps)} <= n^{1/2-eps} / (1/2 - eps), so C' = C^alpha / (1/2 - eps)
    bounds the drift for every n.  The growth exponent is fitted over powers
    of two in the upper half of the log range.  Schedules with eps above
    ``boundary_eps`` are flagged: their budget grows only logarithmically.
    """
    if not 0.0 < eps < 0.5:
        raise ParameterOutOfRange("eps must lie in (0, 1/2)")
    if not 0.0 < alpha <= 1.0:
        raise ParameterOutOfRange("alpha must lie in (0, 1]")
    if not C > 0.0:
        raise ParameterOutOfRange("C must be positive")
    if n_max < 16:
        raise ParameterOutOfRange("n_max must be at least 16")
    j = np.arange(1, n_max + 1, dtype=float)
    a = C * j ** (-(0.5 + eps) / alpha)
    drift = np.cumsum(a**alpha)
    target = 0.5 - eps
    ratio = drift / j**target
    top = int(math.log2(n_max))
    lo = max(4, top - 6)
    ns = 2 ** np.arange(lo, top + 1)
    slope = float(np.polyfit(np.log(ns), np.log(drift[ns - 1]), 1)[0])
    return RateSchedule(
        float(C),
        float(eps),
        float(alpha),
        a,
        drift,
        C**alpha / target,
        float(np.max(ratio)),
        slope,
        (int(ns[0]), int(ns[-1])),
        eps > boundary_eps,
    )


# ---------------------------------------------------------------------------
# Pathwise perturbation estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathwiseDrift:
    n: int
    max_gap: float  # max over starts of |S_n^F(x) - S_n^f(h^{-1} x)|
    budget: float  # |phi|_Lip * sum_{j<n} d_C0(h_j, id)

    @property
    def ok(self) -> bool:
        return self.max_gap <= self.budget


def pathwise_drift(F: MapSequence, phi: Observable, n: int, count: int = 64, seed: int = 0, depth: int = 48) -> PathwiseDrift:
    """Compare Birkhoff sums of F and of its limit along orbits with one itinerary.

    Points sharing an itinerary are related by the sequential conjugacy, so
    their time-j positions differ by at most d_C0(h_j, id).
    """
    f = MapSequence.constant(F.limit)
    d = _degree(F)
    gaps = []
    for i in range(count):
        digits = random_digits(d, n + depth, seed, i, 3)
        gaps.append(abs(float(np.sum(phi(coded_orbit(F, digits, n, depth)) - phi(coded_orbit(f, digits, n, depth))))))
    budget = phi.holder_constant * float(np.sum(conjugacy_distances(F, n)))
    return PathwiseDrift(n, max(gaps), budget)


def write_report(stem, stats: SeriesStats, report: CLTReport, extra: dict | None = None) -> None:
    stats.write(stem)
    write_json(f"{stem}.json", {**report.to_record(), **(extra or {})})
