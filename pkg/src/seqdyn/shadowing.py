"""Pseudo-orbits and their shadowing points.

Expanding circle sequences are shadowed by pulling the terminal point back
through the inverse branches selected along the pseudo-orbit.  Hyperbolic
torus sequences are shadowed by solving the orbit-correction equation with
the stable/unstable splitting of the linear part: stable corrections are
propagated forward from the first point, unstable ones backward from the
last point.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DefectTooLarge, NonConvergence, NoSeparationWithinCap, TruncationDominates
from .phase_maps import (
    MapSequence,
    diameter,
    dist,
    local_inverse,
    swrap,
    uniform_grid,
    wrap,
)


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream keyed by (seed, keys...); scheduling-independent."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))


def run_indexed(fn, n: int, threads: int = 1) -> list:
    """Evaluate ``fn(i)`` for i < n, results in index order regardless of worker count."""
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


# ---------------------------------------------------------------------------
# Pseudo-orbits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PseudoOrbit:
    """Points x_0..x_k where x_n sits at time ``start + n`` of ``sequence``."""

    points: np.ndarray
    delta: float
    sequence: MapSequence
    seed: int | None = None
    start: int = 0

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a pseudo-orbit needs at least two points")

    @property
    def length(self) -> int:
        return len(self.points) - 1

    @property
    def dim(self) -> int:
        return self.sequence.dim


def orbit_defects(F: MapSequence, points, start: int = 0) -> np.ndarray:
    """d(f_n(x_n), x_{n+1}) for every step (works on batches: time is axis 1 if ndim > dim)."""
    pts = np.asarray(points, dtype=float)
    k = pts.shape[0] - 1
    out = np.empty((k,) + pts.shape[1 : pts.ndim - (F.dim - 1)])
    for n in range(k):
        out[n] = dist(F.at(start + n)(pts[n]), pts[n + 1], F.dim)
    return out


def perturbed_orbit(F: MapSequence, x0, delta: float, length: int, seed: int = 0, start: int = 0) -> PseudoOrbit:
    """x_{n+1} = f_n(x_n) + noise with |noise| <= delta, deterministic per seed."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = rng_for(seed)
    dim = F.dim
    x = wrap(np.asarray(x0, dtype=float))
    pts = np.empty((length + 1,) + x.shape)
    pts[0] = x
    # magnitudes kept strictly below delta so rounding never pushes the defect over it
    scale = delta * (1.0 - 1e-9)
    if dim == 1:
        noise = scale * rng.uniform(-1.0, 1.0, size=length)
    else:
        ang = rng.uniform(0.0, 2 * math.pi, size=length)
        rad = scale * rng.uniform(0.0, 1.0, size=length)
        noise = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
    for n in range(length):
        x = wrap(F.at(start + n).lift(x) + noise[n])
        pts[n + 1] = x
    rec = float(orbit_defects(F, pts, start).max())
    return PseudoOrbit(pts, rec, F, seed, start)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShadowResult:
    point: np.ndarray
    beta: float
    iterations: int
    depth: int
    certified_unique: bool
    orbit: np.ndarray = field(repr=False)
    delta: float = 0.0
    residual: float = 0.0

    def recompute_beta(self, p: PseudoOrbit) -> float:
        m = self.depth + 1
        return float(np.max(dist(self.orbit[:m], p.points[:m], p.dim)))

    def to_record(self) -> dict:
        return {
            "point": [float(v) for v in np.atleast_1d(self.point)],
            "beta": float(self.beta),
            "delta": float(self.delta),
            "iterations": int(self.iterations),
            "depth": int(self.depth),
            "residual": float(self.residual),
            "certified": bool(self.certified_unique),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


# ---------------------------------------------------------------------------
# Expanding sequences
# ---------------------------------------------------------------------------


def expansiveness_constant(F: MapSequence) -> float:
    """Orbits that stay this close forever coincide (short arcs map to short arcs)."""
    if F.dim == 1:
        return 0.5 / F.M
    return 0.5 / F.M


def pullback(F: MapSequence, anchors, terminal, start: int = 0):
    """Pull ``terminal`` back along inverse branches of f_{start+k-1}, ..., f_start.

    ``anchors`` has shape (k+1, ...): the branch of f_n used at step n is the one
    through anchors[n].  Returns the pulled-back points y_0..y_k (y_k = terminal).
    """
    anchors = np.asarray(anchors, dtype=float)
    k = anchors.shape[0] - 1
    ys = np.empty_like(anchors)
    ys[k] = terminal
    y = np.asarray(terminal, dtype=float)
    for n in range(k - 1, -1, -1):
        y = local_inverse(F.at(start + n), anchors[n], y)
        ys[n] = y
    return ys


def shadow_expanding(F: MapSequence, p: PseudoOrbit, tol: float = 1e-12, depth: int | None = None) -> ShadowResult:
    """Shadow a pseudo-orbit of an expanding circle sequence by nested pullback.

    With ``depth = D`` only x_0..x_D are used: the pullback starts at x_D.
    """
    if F.dim != 1:
        raise TypeError("shadow_expanding needs a circle sequence; use shadow_anosov")
    Fs = F.shift(p.start)
    lam = Fs.lam
    if p.delta / (1.0 - lam) >= 0.5:
        raise DefectTooLarge(
            f"defect {p.delta:.3g} too large: inverse-branch choice ambiguous (needs delta/(1-lambda) < 1/2)"
        )
    D = p.length if depth is None else int(depth)
    if not 1 <= D <= p.length:
        raise ValueError("depth must lie in 1..len")
    ys = pullback(Fs, p.points[: D + 1], p.points[D])
    beta = float(np.max(circle_d(ys, p.points[: D + 1])))
    residual = float(np.max(orbit_defects(Fs, ys))) if D > 0 else 0.0
    certified = 2 * beta < expansiveness_constant(Fs)
    return ShadowResult(ys[0], beta, D, D, certified, ys, p.delta, residual)


def circle_d(a, b):
    return dist(a, b, 1)


def expanding_bound(lam: float, delta: float, depth: int, delta1: float = 0.0) -> float:
    """lambda/(1-lambda) * delta + lambda**depth * delta1."""
    return lam / (1.0 - lam) * delta + lam**depth * delta1


# ---------------------------------------------------------------------------
# Hyperbolic torus sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HyperbolicSplitting:
    """Splitting data of the common linear model A of a torus sequence."""

    unstable: np.ndarray
    stable: np.ndarray
    lam_u: float  # expanding eigenvalue (|.| > 1)
    lam_s: float  # contracting eigenvalue (|.| < 1)
    lam_tilde: float
    cone_a: float
    delta1: float
    M: float
    N: int
    theta: float
    cone_ok: bool

    @property
    def basis(self) -> np.ndarray:
        return np.stack([self.unstable, self.stable], axis=1)

    @property
    def lam_linear(self) -> float:
        return max(1.0 / abs(self.lam_u), abs(self.lam_s))

    def admissible_defect(self, beta: float | None = None, L: float = 1.0) -> float:
        """zeta = (1 - lam~) / (8 L M^N) * beta."""
        beta = self.delta1 if beta is None else beta
        return (1.0 - self.lam_tilde) / (8.0 * L * self.M**self.N) * beta

    def default_depth(self, tol: float) -> int:
        """Smallest k with lam~^k * delta1 < tol / 10."""
        return max(1, math.ceil(math.log(tol / (10.0 * self.delta1)) / math.log(self.lam_tilde)))

    @property
    def dichotomy_constant(self) -> float:
        """Norm bound of the linear orbit-correction solve (error <= K * defect)."""
        P = self.basis
        Pinv = np.linalg.inv(P)
        cu = 1.0 / (abs(self.lam_u) - 1.0)
        cs = 1.0 / (1.0 - abs(self.lam_s))
        return float(np.linalg.norm(P, 2) * np.linalg.norm(Pinv, 2) * max(cu, cs))


def _linear_model(F: MapSequence) -> np.ndarray:
    maps = _sample_maps(F)
    A = maps[0].A
    for f in maps[1:]:
        if not np.array_equal(f.A, A):
            raise ValueError("torus maps of a sequence must share the linear model A")
    return A


def _sample_maps(F: MapSequence):
    if F.form in ("constant", "periodic"):
        return list(F.maps)
    if F.form == "convergent-tail":
        return list(F.maps) + [F.at(F.tail_start()), F.limit]
    return [F.at(n) for n in range(16)]


def hyperbolic_splitting(
    F: MapSequence, cone_a: float = 0.25, delta1: float = 0.1, N: int = 1, grid: int = 64
) -> HyperbolicSplitting:
    """Eigen-splitting of A, certified by the cone condition on a sample grid."""
    if F.dim != 2:
        raise TypeError("hyperbolic splitting is defined for torus sequences")
    A = _linear_model(F)
    w, V = np.linalg.eig(A)
    w = w.real
    V = V.real
    iu = int(np.argmax(np.abs(w)))
    is_ = 1 - iu
    eu = V[:, iu] / np.linalg.norm(V[:, iu])
    es = V[:, is_] / np.linalg.norm(V[:, is_])
    P = np.stack([eu, es], axis=1)
    Pinv = np.linalg.inv(P)
    z = uniform_grid(grid, 2)
    a = cone_a
    rates = [1.0 / abs(w[iu]), abs(w[is_])]
    for f in _sample_maps(F):
        D = Pinv @ f.jac(z) @ P  # (G, 2, 2) in (u, s) coordinates
        al, be, ga, de = D[:, 0, 0], D[:, 0, 1], D[:, 1, 0], D[:, 1, 1]
        for t in (-a, a):
            uu = np.abs(al + be * t)
            rates.append(float(np.max(1.0 / uu)))  # unstable expansion in C+
            rates.append(float(np.max(np.abs(ga + de * t) / (a * uu))))  # C+ aperture
            ss = np.abs(ga * t + de)
            rates.append(float(np.max(ss)))  # stable contraction in C-
        Dinv = np.linalg.inv(D)
        al, be, ga, de = Dinv[:, 0, 0], Dinv[:, 0, 1], Dinv[:, 1, 0], Dinv[:, 1, 1]
        for t in (-a, a):
            rates.append(float(np.max(np.abs(al * t + be) / (a * np.abs(ga * t + de)))))  # C- aperture under Df^-1
    lam_tilde = max(rates)
    M = max(f.M for f in _sample_maps(F))
    theta = math.acos(min(1.0, abs(float(eu @ es))))
    return HyperbolicSplitting(eu, es, float(w[iu]), float(w[is_]), lam_tilde, a, delta1, M, N, theta, lam_tilde < 1.0)


def _correction_solve(r, bs, bu, lam_u, lam_s):
    """Solve e_{n+1} = diag(lam_u, lam_s) e_n + r_n with s(e_0) = bs, u(e_k) = bu.

    ``r`` has shape (B, k, 2) in (u, s) coordinates; returns e with shape (B, k+1, 2).
    """
    B, k, _ = r.shape
    e = np.empty((B, k + 1, 2))
    s = bs
    e[:, 0, 1] = s
    for n in range(k):
        s = lam_s * s + r[:, n, 1]
        e[:, n + 1, 1] = s
    u = bu
    e[:, k, 0] = u
    for n in range(k - 1, -1, -1):
        u = (u - r[:, n, 0]) / lam_u
        e[:, n, 0] = u
    return e


def anosov_solve(
    F: MapSequence,
    x,
    split: HyperbolicSplitting,
    start: int = 0,
    init=None,
    tol: float = 1e-13,
    max_iter: int = 200,
):
    """Exact orbits near a batch of torus pseudo-orbits.

    ``x`` has shape (B, k+1, 2) (or (k+1, 2)).  Returns ``(y, iterations)``
    where y is the corrected batch; boundary conditions: the stable component
    of y_0 - x_0 and the unstable component of y_k - x_k vanish.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
        init = None if init is None else np.asarray(init, dtype=float)[None]
    B, kp1, _ = x.shape
    k = kp1 - 1
    P = split.basis
    Pinv = np.linalg.inv(P)
    maps = [F.at(start + n) for n in range(k)]
    y = x.copy() if init is None else wrap(np.asarray(init, dtype=float)).copy()
    prev = np.inf
    for it in range(1, max_iter + 1):
        r = np.empty((B, k, 2))
        for n, f in enumerate(maps):
            r[:, n] = swrap(f.lift(y[:, n]) - y[:, n + 1])
        b0 = swrap(y[:, 0] - x[:, 0]) @ Pinv.T
        bk = swrap(y[:, k] - x[:, k]) @ Pinv.T
        err = max(np.max(np.abs(r)), np.max(np.abs(b0[:, 1])), np.max(np.abs(bk[:, 0])))
        if err < tol:
            return (y[0] if single else y), it - 1
        if not np.isfinite(err) or (it > 8 and err > 0.5 * prev and err > 1e3 * tol) or err > 0.25:
            raise NonConvergence(f"orbit-correction iteration stalled (residual {err:.3e})")
        prev = err
        e = _correction_solve(r @ Pinv.T, -b0[:, 1], -bk[:, 0], split.lam_u, split.lam_s)
        y = wrap(y + e @ P.T)
    raise NonConvergence(f"orbit correction did not converge in {max_iter} iterations")


def shadow_anosov(
    F: MapSequence,
    p: PseudoOrbit,
    split: HyperbolicSplitting | None = None,
    tol: float = 1e-13,
    restart_offset: float = 1e-3,
    L: float = 1.0,
) -> ShadowResult:
    """Shadow a torus pseudo-orbit; uniqueness is certified by a perturbed restart."""
    if F.dim != 2:
        raise TypeError("shadow_anosov needs a torus sequence")
    split = split or hyperbolic_splitting(F)
    if not split.cone_ok:
        raise NonConvergence("cone condition fails: splitting invalid for this sequence")
    zeta = split.admissible_defect(L=L)
    if p.delta > zeta:
        raise NonConvergence(f"defect {p.delta:.3g} exceeds admissible zeta {zeta:.3g}")
    y, iters = anosov_solve(F, p.points, split, p.start, tol=tol)
    y2, iters2 = anosov_solve(F, p.points, split, p.start, init=p.points + restart_offset, tol=tol)
    certified = bool(np.max(dist(y, y2, 2)) < 1e-10)
    beta = float(np.max(dist(y, p.points, 2)))
    residual = float(np.max(orbit_defects(F, y, p.start)))
    return ShadowResult(y[0], beta, iters + iters2, p.length, certified, y, p.delta, residual)


def shadow(F: MapSequence, p: PseudoOrbit, tol: float = 1e-12, split: HyperbolicSplitting | None = None) -> ShadowResult:
    if F.dim == 1:
        return shadow_expanding(F, p, tol)
    return shadow_anosov(F, p, split, tol=min(tol, 1e-13))


def two_sided_shadow(F: MapSequence, window, split: HyperbolicSplitting, depth: int, tol: float = 1e-12):
    """Centre points of exact orbits shadowing symmetric windows x_{-D..D} (batch, 2D+1, 2)."""
    if split.lam_tilde**depth * split.delta1 >= tol:
        raise TruncationDominates(
            f"depth {depth} leaves truncation error {split.lam_tilde**depth * split.delta1:.2e} above tol {tol:.1e}"
        )
    y, _ = anosov_solve(F, window, split, start=-depth)
    return y[:, depth]


# ---------------------------------------------------------------------------
# Probes and fits
# ---------------------------------------------------------------------------


def expansiveness_probe(
    F: MapSequence, eps0: float, delta: float, grid: int = 10_000, cap: int = 200, n_offsets: int = 16
) -> int:
    """Smallest N such that sampled pairs with d(x,y) >= delta separate to >= eps0 within N steps.

    Two-sided sequences are probed in both time directions.
    """
    dim = F.dim
    if dim == 1:
        x = uniform_grid(grid)
        offs = np.unique(np.concatenate([[delta], np.linspace(delta, 0.5, n_offsets)]))
        offs = np.concatenate([offs, -offs])
        xs = np.repeat(x, len(offs))
        ys = wrap(xs + np.tile(offs, len(x)))
    else:
        side = max(int(math.isqrt(grid)), 2)
        x = uniform_grid(side, 2)
        radii = np.unique(np.concatenate([[delta], np.linspace(delta, diameter(2), n_offsets // 2 + 1)]))
        angles = np.linspace(0.0, math.pi, 4 * n_offsets, endpoint=False)
        if F.form != "formulaic":
            split = hyperbolic_splitting(F)
            extra = [math.atan2(v[1], v[0]) for v in (split.unstable, split.stable)]
            angles = np.concatenate([angles, np.mod(extra, math.pi)])
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        vecs = (radii[:, None, None] * dirs[None]).reshape(-1, 2)
        vecs = np.concatenate([vecs, -vecs])
        vecs = vecs[np.sqrt(np.sum(swrap(vecs) ** 2, axis=-1)) >= delta * (1 - 1e-12)]
        xs = np.repeat(x, len(vecs), axis=0)
        ys = wrap(xs + np.tile(vecs, (len(x), 1)))
    sep = dist(xs, ys, dim) >= eps0
    N = 0
    fx, fy = xs.copy(), ys.copy()
    bx, by = xs.copy(), ys.copy()
    while not np.all(sep):
        N += 1
        if N > cap:
            raise NoSeparationWithinCap(f"{np.count_nonzero(~sep)} pairs did not separate within {cap} steps")
        f = F.at(N - 1)
        fx, fy = f(fx), f(fy)
        sep |= dist(fx, fy, dim) >= eps0
        if F.two_sided:
            g = F.at(-N)
            bx, by = g.inverse(bx), g.inverse(by)
            sep |= dist(bx, by, dim) >= eps0
    return N


BATCH = 50  # circle pseudo-orbits shadowed together


def _circle_batch(F: MapSequence, d: float, starts, trials, length: int) -> list[dict]:
    """Batched :func:`perturbed_orbit` plus :func:`shadow_expanding` for circle trials.

    Each trial draws its start and noise from the same streams as the scalar path.
    """
    B = len(starts)
    scale = d * (1.0 - 1e-9)
    noise = np.stack([scale * rng_for(ns).uniform(-1.0, 1.0, size=length) for _, ns in starts], axis=1)
    pts = np.empty((length + 1, B))
    x = wrap(np.array([x0 for x0, _ in starts], dtype=float))
    pts[0] = x
    for n in range(length):
        x = wrap(F.at(n).lift(x) + noise[n])
        pts[n + 1] = x
    rec = np.max(orbit_defects(F, pts), axis=0)
    lam = F.lam
    ys = pullback(F, pts, pts[-1])
    beta = np.max(circle_d(ys, pts), axis=0)
    eps0 = expansiveness_constant(F)
    out = []
    for b, t in enumerate(trials):
        if rec[b] / (1.0 - lam) >= 0.5:
            msg = f"defect {rec[b]:.3g} too large: inverse-branch choice ambiguous (needs delta/(1-lambda) < 1/2)"
            out.append({"delta": d, "trial": t, "beta": math.nan, "iterations": 0, "certified": False, "error": msg})
            continue
        out.append(
            {
                "delta": d,
                "trial": t,
                "beta": float(beta[b]),
                "iterations": length,
                "certified": bool(2 * beta[b] < eps0),
            }
        )
    return out


@dataclass(frozen=True)
class LipschitzFit:
    slope: float
    intercept: float
    L_hat: float
    deltas: tuple[float, ...]
    max_beta: tuple[float, ...]
    failure_fraction: float
    all_certified: bool
    exact: bool
    records: tuple = field(repr=False, default=())

    def rows(self):
        """CSV rows: delta, trial, beta, iterations, certified."""
        return [
            (r["delta"], r["trial"], r["beta"], r["iterations"], int(r["certified"]))
            for r in self.records
        ]


def lipschitz_fit(
    F: MapSequence,
    deltas: Sequence[float],
    trials: int,
    seed: int = 0,
    length: int = 200,
    threads: int = 1,
    split: HyperbolicSplitting | None = None,
) -> LipschitzFit:
    """Shadow ``trials`` random pseudo-orbits per delta and fit log(beta) against log(delta).

    Trial t uses the stream (seed, t) for both its start point and its noise
    pattern, so the noise shapes are shared across the delta schedule.
    """
    if F.dim == 2 and split is None:
        split = hyperbolic_splitting(F)
    deltas = tuple(float(d) for d in deltas)

    def start(t):
        rng = rng_for(seed, t, 0)
        x0 = rng.random(F.dim) if F.dim == 2 else float(rng.random())
        return x0, int(rng.integers(2**31))

    def one(job):
        i, t = divmod(job, trials)
        d = deltas[i]
        x0, noise_seed = start(t)
        p = perturbed_orbit(F, x0, d, length, seed=noise_seed)
        try:
            res = shadow(F, p, split=split)
        except (NonConvergence, DefectTooLarge) as exc:
            return [{"delta": d, "trial": t, "beta": math.nan, "iterations": 0, "certified": False, "error": str(exc)}]
        return [
            {
                "delta": d,
                "trial": t,
                "beta": res.beta,
                "iterations": res.iterations,
                "certified": res.certified_unique,
            }
        ]

    if F.dim == 1:
        # fixed batches, so the vectorized root finder sees the same arrays for any thread count
        batches = [(i, range(t0, min(trials, t0 + BATCH))) for i in range(len(deltas)) for t0 in range(0, trials, BATCH)]

        def job(b):
            i, ts = batches[b]
            return _circle_batch(F, deltas[i], [start(t) for t in ts], ts, length)

        parts = run_indexed(job, len(batches), threads)
    else:
        parts = run_indexed(one, len(deltas) * trials, threads)
    records = [r for part in parts for r in part]
    failures = sum(1 for r in records if "error" in r)
    max_beta = []
    for d in deltas:
        vals = [r["beta"] for r in records if r["delta"] == d and "error" not in r]
        max_beta.append(max(vals) if vals else math.nan)
    ok = [(d, b) for d, b in zip(deltas, max_beta) if d > 0 and b > 0 and np.isfinite(b)]
    if len(ok) < 2:
        exact = all(b == 0 for b in max_beta if np.isfinite(b))
        slope = intercept = math.nan
    else:
        exact = False
        lx = np.log([d for d, _ in ok])
        ly = np.log([b for _, b in ok])
        slope, intercept = (float(v) for v in np.polyfit(lx, ly, 1))
    L_hat = max((b / d for d, b in ok), default=0.0)
    return LipschitzFit(
        slope,
        intercept,
        float(L_hat),
        deltas,
        tuple(float(b) for b in max_beta),
        failures / max(len(records), 1),
        all(r["certified"] for r in records),
        exact,
        tuple(records),
    )
