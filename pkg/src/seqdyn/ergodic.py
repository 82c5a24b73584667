"""Birkhoff averages, empirical measures and irregular points along map sequences.

Long float orbits of the doubling map collapse to 0 after about 53 steps, so
orbits are iterated with round-off reseeding: after every step the bits below
2^-44 are replaced by seeded uniform bits.  For doubling this reproduces an
exact orbit of a random real; for other expanding maps the result is a
2^-44 pseudo-orbit, which is traced by a true orbit.  Orbits of points drawn from h_* Lebesgue, where h is a
sequential conjugacy, are built symbolically instead: random digits are
turned into points by pulling back through the inverse branches of the
sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _kernels as K
from .conjugacy import ConjugacySample, conjugacy_distances
from .errors import DegenerateObservable, EmptyList, GridMismatch
from .output import write_csv, write_json
from .phase_maps import MapSequence, Observable, wrap
from .shadowing import rng_for, run_indexed

RESEED = float(2**K.RESEED_BITS)
CHUNK = 1 << 15


# ---------------------------------------------------------------------------
# Empirical measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud or fixed-bin histogram on S^1 / T^2."""

    dim: int
    samples: np.ndarray | None = None
    weights: np.ndarray | None = None
    masses: np.ndarray | None = None
    provenance: str = "orbit"
    count: int = 0

    def __post_init__(self):
        if (self.samples is None) == (self.masses is None):
            raise ValueError("give either samples or histogram masses")
        if self.masses is not None:
            if np.any(self.masses < 0):
                raise ValueError("histogram masses must be nonnegative")
            total = float(np.sum(self.masses))
            if abs(total - 1.0) > 1e-12:
                object.__setattr__(self, "masses", self.masses / total)
        if self.samples is not None and self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            object.__setattr__(self, "weights", w / w.sum())

    @classmethod
    def from_samples(cls, x, provenance: str = "orbit", weights=None) -> "EmpiricalMeasure":
        x = wrap(np.asarray(x, dtype=float))
        dim = 1 if x.ndim == 1 else x.shape[-1]
        return cls(dim, samples=x, weights=weights, provenance=provenance, count=len(x))

    @classmethod
    def from_histogram(cls, counts, dim: int = 1, provenance: str = "orbit") -> "EmpiricalMeasure":
        counts = np.asarray(counts, dtype=float)
        return cls(dim, masses=counts / counts.sum(), provenance=provenance, count=int(round(counts.sum())))

    @classmethod
    def point_mass(cls, x) -> "EmpiricalMeasure":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls.from_samples(x[None] if x.size > 1 else x, "orbit")

    @classmethod
    def uniform(cls, dim: int = 1) -> "EmpiricalMeasure":
        return cls(dim, masses=np.ones((1,) * dim), provenance="reference", count=0)

    @property
    def is_histogram(self) -> bool:
        return self.masses is not None

    @property
    def bins(self) -> int:
        return 0 if self.masses is None else self.masses.shape[0]

    def sample_weights(self) -> np.ndarray:
        if self.weights is not None:
            return self.weights
        n = len(self.samples)
        return np.full(n, 1.0 / n)

    def total_mass(self) -> float:
        return float(np.sum(self.masses) if self.is_histogram else np.sum(self.sample_weights()))

    def as_samples(self) -> "EmpiricalMeasure":
        """Histograms become weighted bin-centre samples."""
        if not self.is_histogram:
            return self
        B = self.bins
        c = (np.arange(B) + 0.5) / B
        if self.dim == 1:
            pts = c
        else:
            gx, gy = np.meshgrid(c, c, indexing="ij")
            pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        return EmpiricalMeasure(self.dim, samples=pts, weights=self.masses.ravel(), provenance=self.provenance, count=self.count)

    def marginal(self, axis: int) -> "EmpiricalMeasure":
        if self.dim == 1:
            return self
        if self.is_histogram:
            return EmpiricalMeasure(1, masses=self.masses.sum(axis=1 - axis), provenance=self.provenance, count=self.count)
        return EmpiricalMeasure(1, samples=self.samples[:, axis], weights=self.weights, provenance=self.provenance, count=self.count)

    def cdf(self, t, left: bool = False) -> np.ndarray:
        """mu([0, t]) (or mu([0, t)) with ``left``) on the circle cut at 0."""
        t = np.asarray(t, dtype=float)
        if self.is_histogram:
            B = self.bins
            cum = np.concatenate([[0.0], np.cumsum(self.masses)])
            u = np.clip(t, 0.0, 1.0) * B
            k = np.minimum(np.floor(u).astype(int), B - 1)
            return cum[k] + (u - k) * self.masses[k]
        order = np.argsort(self.samples, kind="stable")
        xs = self.samples[order]
        cw = np.concatenate([[0.0], np.cumsum(self.sample_weights()[order])])
        idx = np.searchsorted(xs, t, side="left" if left else "right")
        return cw[idx]

    def histogram(self, bins: int = 256) -> np.ndarray:
        if self.is_histogram and self.bins == bins:
            return self.masses
        if self.dim != 1:
            raise TypeError("rebinning is provided for circle measures")
        m = self.as_samples()
        h, _ = np.histogram(m.samples, bins=bins, range=(0.0, 1.0), weights=m.sample_weights())
        return h

    def write_csv(self, path, bins: int = 256):
        h = self.histogram(bins)
        return write_csv(path, ("bin_left", "mass"), zip(np.arange(len(h)) / len(h), h))


def _circle_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    pts = [np.zeros(1)]
    for m in (mu, nu):
        if m.is_histogram:
            pts.append(np.arange(m.bins + 1) / m.bins)
        else:
            pts.append(m.samples)
    t = np.unique(np.concatenate(pts))
    D = np.concatenate([mu.cdf(t) - nu.cdf(t), mu.cdf(t, left=True) - nu.cdf(t, left=True), [0.0]])
    return float(0.5 * (D.max() - D.min()))


def measure_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Rotation-invariant circle distance: half the Kuiper statistic, (sup D - inf D)/2.

    D is the CDF gap.  This is a lower bound for the Kolmogorov-Smirnov gap
    minimized over the cut point, and the two agree when D attains its
    midpoint (e.g. for continuous measures); for point masses at 0 and 1/2 it
    gives 1/2.  On the torus the maximum over the two coordinate marginals is
    used.
    """
    if mu.dim != nu.dim:
        raise GridMismatch("measures live on different phase spaces")
    if mu.dim == 1:
        return _circle_distance(mu, nu)
    return max(_circle_distance(mu.marginal(a), nu.marginal(a)) for a in range(mu.dim))


def ks_to_uniform(mu: EmpiricalMeasure) -> float:
    return measure_distance(mu, EmpiricalMeasure.uniform(mu.dim))


# ---------------------------------------------------------------------------
# Orbit engines
# ---------------------------------------------------------------------------


def _obs_table(phi: Observable):
    c0, c, s = phi.circle_coefficients()
    return float(c0), np.ascontiguousarray(c), np.ascontiguousarray(s)


def _tables(F: MapSequence, start: int, count: int):
    deg, sh, sn, cs = F.circle_coefficients(start, count)
    return (
        np.ascontiguousarray(deg, dtype=np.int64),
        np.ascontiguousarray(sh, dtype=float),
        np.ascontiguousarray(sn, dtype=float),
        np.ascontiguousarray(cs, dtype=float),
    )


def _is_rational_affine(F: MapSequence) -> bool:
    if F.dim != 1 or F.form == "formulaic":
        return False
    maps = list(F.maps) + ([F.limit] if F.limit is not None else [])
    if F.form == "convergent-tail":
        return False
    return all(f.field.is_zero for f in maps)


def _rational_average(F: MapSequence, phi: Observable, x: Fraction, n: int) -> np.ndarray:
    """Exact orbit of a rational point under pure degree-d maps (integer numerators)."""
    q = x.denominator
    p = x.numerator % q
    pts = np.empty(n)
    for j in range(n):
        pts[j] = p / q
        p = (F.at(j).degree * p) % q
    return np.cumsum(phi(pts)) / np.arange(1, n + 1)


def birkhoff_average(
    F: MapSequence, phi: Observable, x, n: int, seed: int = 0, jitter: bool = True
) -> np.ndarray:
    """Running averages (1/m) sum_{j<m} phi(F_j(x)) for m = 1..n in one forward pass.

    A :class:`fractions.Fraction` start on a sequence of pure degree-d maps is
    iterated exactly.  Otherwise the orbit is iterated in floats with
    round-off reseeding (``jitter``) drawn from the stream ``seed``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(x, Fraction):
        if not _is_rational_affine(F):
            raise TypeError("exact rational orbits need pure degree-d circle maps")
        return _rational_average(F, phi, x, n)
    if F.dim == 2 or phi.kind != "trig":
        return _generic_average(F, phi, x, n, seed, jitter)
    oc = _obs_table(phi)
    trace = np.empty(n)
    xs = np.array([float(wrap(x))])
    sums = np.zeros(1)
    rng = rng_for(seed, 0)
    empty_hist = np.zeros((1, 0))
    for j0 in range(0, n, CHUNK):
        c = min(CHUNK, n - j0)
        jit = rng.random((1, c)) if jitter else np.zeros((1, 0))
        K.run_orbits(xs, *_tables(F, j0, c), jit, *oc, sums, empty_hist, trace[j0 : j0 + c], j0)
    return trace


def _reseed(y, rng):
    y = (np.floor(y * RESEED) + rng.random(np.shape(y))) / RESEED
    return np.where(y >= 1.0, 0.0, y)


def _generic_average(F, phi, x, n, seed, jitter):
    rng = rng_for(seed, 0)
    y = wrap(np.asarray(x, dtype=float))
    vals = np.empty(n)
    for j in range(n):
        vals[j] = phi(y)
        y = wrap(F.at(j).lift(y))
        if jitter:
            y = _reseed(y, rng)
    return np.cumsum(vals) / np.arange(1, n + 1)


def orbit_points(F: MapSequence, x, n: int, seed: int = 0, jitter: bool = True) -> np.ndarray:
    """F_j(x) for j < n (jittered float iteration; circle sequences use compiled steps)."""
    if F.dim == 2:
        rng = rng_for(seed, 0)
        y = wrap(np.asarray(x, dtype=float))
        out = np.empty((n, 2))
        for j in range(n):
            out[j] = y
            y = wrap(F.at(j).lift(y))
            if jitter:
                y = _reseed(y, rng)
        return out
    out = np.empty((1, n))
    xs = np.array([float(wrap(x))])
    rng = rng_for(seed, 0)
    for j0 in range(0, n, CHUNK):
        c = min(CHUNK, n - j0)
        jit = rng.random((1, c)) if jitter else np.zeros((1, 0))
        K.orbit_points(xs, *_tables(F, j0, c), jit, out[:, j0 : j0 + c])
    return out[0]


def empirical_measure(F: MapSequence, x, n: int, bins: int = 0, seed: int = 0, jitter: bool = True) -> EmpiricalMeasure:
    """Empirical measure of the first n orbit points (histogram when ``bins`` > 0)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = orbit_points(F, x, n, seed, jitter)
    if bins <= 0:
        return EmpiricalMeasure.from_samples(pts, "orbit")
    if F.dim == 1:
        h, _ = np.histogram(pts, bins=bins, range=(0.0, 1.0))
    else:
        h, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=bins, range=((0, 1), (0, 1)))
    return EmpiricalMeasure.from_histogram(h, F.dim, "orbit")


# -- orbits of h_*Lebesgue-typical points -----------------------------------


def coded_orbit(F: MapSequence, digits, n: int, depth: int = 48) -> np.ndarray:
    """F_j(x) for j < n, where x has F-itinerary ``digits``.

    If the digits are those of u in base d, x = h(u) for the sequential
    conjugacy h between F and the constant degree-d linear map, so the orbit
    is h_j(d^j u).  Accuracy is lam^depth per point.
    """
    digits = np.ascontiguousarray(digits, dtype=np.int64)
    if len(digits) < n + depth:
        raise ValueError("need at least n + depth digits")
    out = np.empty(n)
    K.coded_points(digits, *_tables(F, 0, n + depth), depth, out)
    return out


def random_digits(degree: int, count: int, seed: int, *keys: int) -> np.ndarray:
    return rng_for(seed, *keys).integers(0, degree, size=count)


def _degree(F: MapSequence) -> int:
    deg = _tables(F, 0, 64)[0]
    if np.any(deg != deg[0]):
        raise ValueError("symbolic coding needs a common degree")
    return int(deg[0])


def coded_heads(F: MapSequence, count: int, burn: int, seed: int, depth: int = 48, first: int = 0):
    """Starts drawn from h_* Lebesgue: first ``burn`` orbit points and the point at time ``burn``.

    Member ``first + i`` uses the digit stream (seed, first + i, 1).  Returns ``(x_burn, heads)``
    with heads of shape (count, burn).
    """
    d = _degree(F)
    x = np.empty(count)
    heads = np.empty((count, burn))
    for i in range(count):
        digits = random_digits(d, burn + 1 + depth, seed, first + i, 1)
        head = coded_orbit(F, digits, burn + 1, depth)
        x[i] = head[burn]
        heads[i] = head[:burn]
    return x, heads


def typical_ensemble(
    F: MapSequence,
    phi: Observable,
    n: int,
    count: int,
    seed: int = 0,
    burn: int = 64,
    depth: int = 48,
    bins: int = 0,
    threads: int = 1,
):
    """Birkhoff averages at time n for ``count`` starts drawn from h_* Lebesgue.

    The first ``burn`` points of each orbit come from the symbolic coding;
    afterwards the orbit continues with jittered float iteration, which is
    valid once the tail maps are within round-off of their limit (sequences
    whose C^1 tail distance at ``burn`` is below 2^-52).
    Returns ``(averages, histograms)``; histograms is None unless ``bins``.
    """
    oc = _obs_table(phi)
    burn = min(burn, n)
    x, heads = coded_heads(F, count, burn, seed, depth)
    sums = np.sum(phi(heads), axis=1) if count else np.zeros(0)
    hist = np.zeros((count, bins))
    if bins:
        for i in range(count):
            hist[i] += np.histogram(heads[i], bins=bins, range=(0.0, 1.0))[0]
    rngs = [rng_for(seed, i, 2) for i in range(count)]
    parts = np.array_split(np.arange(count), max(1, min(threads, count)))
    for j0 in range(burn, n, CHUNK):
        c = min(CHUNK, n - j0)
        tabs = _tables(F, j0, c)
        jit = np.stack([r.random(c) for r in rngs]) if count else np.zeros((0, c))

        def work(p, tabs=tabs, jit=jit, j0=j0):
            idx = parts[p]
            if len(idx) == 0:
                return
            lo, hi = idx[0], idx[-1] + 1
            K.run_orbits(x[lo:hi], *tabs, jit[lo:hi], *oc, sums[lo:hi], hist[lo:hi], np.empty(0), j0)

        run_indexed(work, len(parts), threads)
    return sums / n, (hist if bins else None)


# ---------------------------------------------------------------------------
# Pushforwards and invariance
# ---------------------------------------------------------------------------


def pushforward(h: ConjugacySample, mu: EmpiricalMeasure) -> EmpiricalMeasure:
    """h_* mu, applying the interpolated conjugacy to every sample."""
    if h.dim != mu.dim:
        raise GridMismatch("conjugacy and measure live on different phase spaces")
    m = mu.as_samples()
    return EmpiricalMeasure(mu.dim, samples=h(m.samples), weights=m.weights, provenance="pushforward", count=m.count)


def average_invariance_defect(F: MapSequence, mu: EmpiricalMeasure, n: int) -> float:
    """distance((1/n) sum_{j<n} (f_j)_* mu, mu)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = mu.as_samples()
    w = m.sample_weights()
    clouds = [F.at(j)(m.samples) for j in range(n)]
    pts = np.concatenate(clouds)
    mixed = EmpiricalMeasure(mu.dim, samples=pts, weights=np.tile(w, n), provenance="mixture", count=len(pts))
    return measure_distance(mixed, mu)


def periodic_limit_measure(h_list: Sequence[ConjugacySample], mu: EmpiricalMeasure) -> EmpiricalMeasure:
    """(1/N) sum_i (h_i)_* mu."""
    if not h_list:
        raise EmptyList("need at least one conjugacy")
    pushed = [pushforward(h, mu) for h in h_list]
    pts = np.concatenate([p.samples for p in pushed])
    w = np.concatenate([p.sample_weights() for p in pushed])
    return EmpiricalMeasure(mu.dim, samples=pts, weights=w, provenance="mixture", count=len(pts))


# ---------------------------------------------------------------------------
# Irregular points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IrregularProbe:
    """Birkhoff-irregular point of the doubling map given by a digit program.

    Blocks alternate between runs of 0 (tracking the fixed point 0) and runs
    of 01 (tracking the period-2 orbit {1/3, 2/3}).
    """

    blocks: tuple[tuple[str, int], ...]
    trace: np.ndarray = field(repr=False)
    limsup: float = 0.0
    liminf: float = 0.0
    skip: int = 0
    fixed_average: float = 0.0
    period2_average: float = 0.0
    transport: dict | None = None

    @property
    def gap(self) -> float:
        return self.limsup - self.liminf

    def digits(self, count: int | None = None) -> np.ndarray:
        return program_digits(self.blocks, count)

    def to_record(self) -> dict:
        out = {
            "blocks": [{"pattern": p, "length": L} for p, L in self.blocks],
            "trace_len": int(len(self.trace)),
            "limsup": self.limsup,
            "liminf": self.liminf,
            "skip": self.skip,
            "fixed_average": self.fixed_average,
            "period2_average": self.period2_average,
        }
        if self.transport is not None:
            out["transport"] = {k: v for k, v in self.transport.items() if not isinstance(v, np.ndarray)}
        return out

    def write(self, stem, every: int = 1000) -> None:
        m = np.arange(every, len(self.trace) + 1, every)
        write_csv(f"{stem}.csv", ("m", "running_avg"), zip(m, self.trace[m - 1]))
        write_json(f"{stem}.json", self.to_record())


def block_schedule(total: int, growth: int = 32) -> tuple[tuple[str, int], ...]:
    """Alternating blocks of lengths growth^k (k = 0, 1, ...) covering ``total`` digits.

    Each new block is growth - 1 times longer than everything before it, so
    the running average at its end is within about 1/growth of the block's
    own average; with growth 4 the previous blocks still carry a quarter of
    the weight, which caps the swing well short of the periodic averages.
    """
    if growth < 2:
        raise ValueError("growth must be >= 2")
    blocks = []
    k = 0
    covered = 0
    while covered < total:
        L = growth**k
        blocks.append(("0" if k % 2 == 0 else "01", L))
        covered += L
        k += 1
    return tuple(blocks)


def program_digits(blocks, count: int | None = None) -> np.ndarray:
    parts = []
    for pat, L in blocks:
        unit = np.array([int(c) for c in pat], dtype=np.int64)
        parts.append(np.resize(unit, L))
    d = np.concatenate(parts)
    return d if count is None else d[:count]


def _running(vals: np.ndarray) -> np.ndarray:
    return np.cumsum(vals) / np.arange(1, len(vals) + 1)


def irregular_point(
    phi: Observable,
    trace_len: int = 1_000_000,
    growth: int = 32,
    F: MapSequence | None = None,
    depth: int = 48,
    conj_R: int = 1024,
    conj_terms: int = 32,
) -> IrregularProbe:
    """Digit-program point of the doubling map with oscillating phi-averages.

    With ``F`` (a convergent-tail sequence whose limit is the doubling map)
    the same digits are evaluated along F via the sequential conjugacy, and
    the transport budget (1/m) sum_{j<m} |phi|_Lip d_C0(h_j, id) is reported.
    """
    fixed = float(phi(0.0))
    per2 = float((phi(1.0 / 3.0) + phi(2.0 / 3.0)) / 2.0)
    if abs(fixed - per2) < 1e-12:
        raise DegenerateObservable("fixed-point and period-2 averages coincide; no oscillation to build")
    blocks = block_schedule(trace_len + 53 + depth, growth)
    digits = program_digits(blocks)
    pts = np.empty(trace_len)
    K.shift_window_points(digits, pts)
    trace = _running(phi(pts))
    skip = min(blocks[0][1] + blocks[1][1], trace_len - 1)
    tail = trace[skip:]
    probe = dict(
        blocks=blocks,
        trace=trace,
        limsup=float(tail.max()),
        liminf=float(tail.min()),
        skip=skip,
        fixed_average=fixed,
        period2_average=per2,
    )
    if F is not None:
        probe["transport"] = _transport(F, phi, digits, trace, skip, depth, conj_R, conj_terms)
    return IrregularProbe(**probe)


def _transport(F, phi, digits, trace_f, skip, depth, R, terms):
    n = len(trace_f)
    pts = coded_orbit(F, digits, n, depth)
    trace_F = _running(phi(pts))
    hd = conjugacy_distances(F, n, R, terms)
    budget = _running(phi.holder_constant * hd)
    diff = np.abs(trace_F - trace_f)
    tail = trace_F[skip:]
    gap_f = float(trace_f[skip:].max() - trace_f[skip:].min())
    gap_F = float(tail.max() - tail.min())
    return {
        "limsup": float(tail.max()),
        "liminf": float(tail.min()),
        "gap": gap_F,
        "gap_shrink": gap_f - gap_F,
        "budget_max": float(budget[skip:].max()),
        "budget_final": float(budget[-1]),
        "max_excess": float(np.max(diff - budget)),
        "within_budget": bool(np.all(diff <= budget + 1e-9)),
        "trace": trace_F,
    }
