"""Topological entropy of map sequences from (n, eps)-separated sets.

Separated sets are built greedily over a fixed candidate grid, so every count
is a certified lower bound for the maximal separated subset of the grid.
Greedy packing is within a factor of the maximum at half the scale, which is
why counts at matched scales are compared rather than absolute values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .conjugacy import conjugacy_distances
from .errors import GridTooCoarse, InequalityViolated
from .output import write_csv, write_json
from .phase_maps import MapSequence, diameter, uniform_grid, wrap


@dataclass(frozen=True)
class OrbitTable:
    """Orbit segments F_0(x), ..., F_{n-1}(x) of every candidate, computed once."""

    points: np.ndarray  # (P, n_max, dim)
    spacing: float
    dim: int
    lams: tuple[float, ...] = ()  # inverse-branch contraction per step (circle)
    Ms: tuple[float, ...] = ()

    def contraction(self, n: int, eps: float) -> float:
        """Factor c with d(x_0, y_0) <= c * eps whenever d_n(x, y) <= eps.

        On the circle, an arc shorter than 1/(2 M_j) maps onto the short arc
        between the images, which is then at least 1/lam_j times longer.
        """
        if self.dim != 1 or not self.lams:
            return 1.0
        c = 1.0
        for j in range(n - 1):
            if eps * self.Ms[j] >= 0.5:
                break
            c *= self.lams[j]
        return c * (1.0 + 1e-9)

    @property
    def n_max(self) -> int:
        return self.points.shape[1]


def candidate_grid(size: int, dim: int = 1) -> tuple[np.ndarray, float]:
    """Uniform grid with ``size`` points per axis and its spacing."""
    return uniform_grid(size, dim), 1.0 / size


def random_candidates(count: int, dim: int, seed: int = 0) -> np.ndarray:
    """Seeded uniform candidates.

    Lattice grids k/R are invariant under integer-matrix torus maps, which
    caps counts at lattice-determined values; random candidates avoid that.
    """
    x = np.random.default_rng(np.random.SeedSequence([int(seed), 7])).random((count, dim))
    return x[:, 0] if dim == 1 else x


def orbit_table(F: MapSequence, n_max: int, candidates: int | np.ndarray, seed: int | None = None) -> OrbitTable:
    """Tabulate orbits of the candidates; ``seed`` permutes the greedy order."""
    if isinstance(candidates, (int, np.integer)):
        x, spacing = candidate_grid(int(candidates), F.dim)
    else:
        x = wrap(np.asarray(candidates, dtype=float))
        spacing = _grid_spacing(x, F.dim)
    if seed is not None:
        x = x[np.random.default_rng(seed).permutation(len(x))]
    P = len(x)
    pts = np.empty((P, n_max, F.dim))
    y = x
    for j in range(n_max):
        pts[:, j] = np.reshape(y, (P, F.dim))
        y = F.at(j)(y)
    lams, Ms = (), ()
    if F.dim == 1:
        maps = [F.at(j) for j in range(n_max)]
        lams = tuple(f.lam if f.min_derivative > 1.0 else 1.0 for f in maps)
        Ms = tuple(f.M for f in maps)
    return OrbitTable(pts, spacing, F.dim, lams, Ms)


def _grid_spacing(x: np.ndarray, dim: int) -> float:
    """Largest gap between neighbouring candidates along each axis."""
    cols = [x] if dim == 1 else [x[:, k] for k in range(dim)]
    gaps = []
    for c in cols:
        u = np.unique(c)
        gaps.append(float(np.max(np.diff(np.concatenate([u, [u[0] + 1.0]])))) if len(u) > 1 else 1.0)
    return max(gaps)


def _count(table: OrbitTable, n: int, eps: float) -> int:
    """Greedy count using the certified time-0 pruning radius of the table."""
    if table.spacing >= eps / 4:
        raise GridTooCoarse(f"candidate spacing {table.spacing:.3g} must be below eps/4 = {eps / 4:.3g}")
    if n > table.n_max or n < 1:
        raise ValueError("n outside the tabulated range")
    r0 = min(eps * table.contraction(n, eps), diameter(table.dim))
    return int(K.greedy_separated(table.points[:, :n], float(eps), float(r0), table.dim))


def separated_count(
    F: MapSequence, n: int, eps: float, candidates: int | np.ndarray = 4096, table: OrbitTable | None = None
) -> int:
    """Size of a greedy maximal (n, eps)-separated subset of the candidates under d_n."""
    table = table or orbit_table(F, n, candidates)
    return _count(table, n, eps)


@dataclass(frozen=True)
class EntropyEstimate:
    eps: tuple[float, ...]
    ns: tuple[int, ...]
    counts: np.ndarray  # (len(eps), len(ns))
    slopes: tuple[float, ...]
    slope_errors: tuple[float, ...]
    estimate: float
    error: float
    window: tuple[int, int]
    grid_spacing: float
    order_seed: int | None = None
    extrapolated: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def rows(self):
        for i, e in enumerate(self.eps):
            for k, n in enumerate(self.ns):
                yield (e, n, int(self.counts[i, k]), self.slopes[i])

    def to_record(self) -> dict:
        return {
            "estimate": self.estimate,
            "error": self.error,
            "window": list(self.window),
            "eps": list(self.eps),
            "slopes": list(self.slopes),
            "extrapolated": self.extrapolated,
            "grid_spacing": self.grid_spacing,
            "order_seed": self.order_seed,
        }

    def write(self, stem) -> None:
        write_csv(f"{stem}.csv", ("epsilon", "n", "count", "slope"), self.rows())
        write_json(f"{stem}.json", self.to_record())


def _fit(ns, counts):
    ns = np.asarray(ns, dtype=float)
    y = np.log(np.asarray(counts, dtype=float))
    if len(ns) < 2:
        return math.nan, math.inf
    A = np.stack([ns, np.ones_like(ns)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(ns) - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        se = math.sqrt(s2 / float(np.sum((ns - ns.mean()) ** 2)))
    else:
        se = 0.0
    return float(coef[0]), se


def entropy_estimate(
    F: MapSequence,
    eps_schedule: Sequence[float],
    n_schedule: Sequence[int],
    candidates: int | np.ndarray = 4096,
    seed: int | None = None,
    window: tuple[int, int] | None = None,
) -> EntropyEstimate:
    """Least-squares slopes of log s_n(eps) in n; the smallest eps gives the headline value.

    The error bar combines the slope standard error with half the spread of
    the slopes across the eps schedule (a finite-scale allowance).
    """
    eps = tuple(float(e) for e in eps_schedule)
    ns = tuple(int(n) for n in n_schedule)
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n schedule must be strictly increasing")
    table = orbit_table(F, max(ns), candidates, seed)
    counts = np.array([[_count(table, n, e) for n in ns] for e in eps], dtype=np.int64)
    lo, hi = window or (ns[0], ns[-1])
    sel = [k for k, n in enumerate(ns) if lo <= n <= hi]
    fits = [_fit([ns[k] for k in sel], counts[i, sel]) for i in range(len(eps))]
    slopes = tuple(f[0] for f in fits)
    errs = tuple(f[1] for f in fits)
    est = slopes[-1]
    spread = 0.5 * (max(slopes) - min(slopes)) if len(slopes) > 1 else 0.0
    extrap = None
    if len(eps) >= 2:
        # linear extrapolation of the slope in eps toward eps = 0
        e1, e2 = eps[-2], eps[-1]
        s1, s2 = slopes[-2], slopes[-1]
        extrap = float(s2 + (s2 - s1) * e2 / (e1 - e2))
    return EntropyEstimate(
        eps, ns, counts, slopes, errs, est, float(errs[-1] + spread), (lo, hi), table.spacing, seed, extrap
    )


@dataclass(frozen=True)
class ComparisonReport:
    eps: float
    N_eps: int
    ns: tuple[int, ...]
    forward: tuple[tuple[int, int], ...]  # (s_n(F, eps/3), s_n(f, eps))
    reciprocal: tuple[tuple[int, int], ...]  # (s_n(f, eps/3), s_n(F, eps))
    forward_ok: bool
    reciprocal_ok: bool

    @property
    def ok(self) -> bool:
        return self.forward_ok and self.reciprocal_ok

    def margins(self, which: str = "forward") -> np.ndarray:
        pairs = self.forward if which == "forward" else self.reciprocal
        return np.array([math.log(a / b) for a, b in pairs])

    def to_record(self) -> dict:
        return {
            "eps": self.eps,
            "N_eps": self.N_eps,
            "n": list(self.ns),
            "forward": [list(p) for p in self.forward],
            "reciprocal": [list(p) for p in self.reciprocal],
            "forward_margin": self.margins("forward").tolist(),
            "reciprocal_margin": self.margins("reciprocal").tolist(),
            "forward_ok": self.forward_ok,
            "reciprocal_ok": self.reciprocal_ok,
        }


def threshold_index(F: MapSequence, eps: float, horizon: int = 64, R: int = 1024) -> int:
    """Smallest N with d_C0(h_n, id) < eps/3 for all measured n >= N."""
    d = conjugacy_distances(F, horizon, R)
    bad = np.nonzero(d >= eps / 3.0)[0]
    return int(bad[-1] + 1) if len(bad) else 0


def entropy_comparison(
    F: MapSequence,
    f,
    eps: float,
    n_schedule: Sequence[int],
    N_eps: int | None = None,
    candidates: int | np.ndarray = 1 << 16,
    strict: bool = False,
) -> ComparisonReport:
    """Check s_n(F, eps/3) >= s_n(f, eps) and s_n(f, eps/3) >= s_n(F, eps) for n >= N_eps.

    ``f`` is the limit map of the convergent-tail sequence ``F``.  With
    ``strict`` a violated inequality raises :class:`InequalityViolated`.
    """
    if N_eps is None:
        N_eps = threshold_index(F, eps)
    ns = tuple(int(n) for n in n_schedule if n >= N_eps)
    fseq = MapSequence.constant(f)
    nmax = max(ns)
    tF = orbit_table(F, nmax, candidates)
    tf = orbit_table(fseq, nmax, candidates)
    fwd = tuple((_count(tF, n, eps / 3), _count(tf, n, eps)) for n in ns)
    rec = tuple((_count(tf, n, eps / 3), _count(tF, n, eps)) for n in ns)
    fok = all(a >= b for a, b in fwd)
    rok = all(a >= b for a, b in rec)
    report = ComparisonReport(eps, N_eps, ns, fwd, rec, fok, rok)
    if strict and not report.ok:
        raise InequalityViolated(f"separated-count inequality failed: {report.to_record()}")
    return report
