"""Sequential conjugacies computed pointwise as shadowing points.

``sequential_conjugacy(F, G)`` samples h = h_{F,G}: h(x) is the point whose
F-orbit shadows the G-orbit of x, so that f_n-images of h track G_n(x).
Both orientations are available by swapping the arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AdmissibilityViolated,
    BoundaryItinerary,
    GridMismatch,
    NonConvergence,
    SeqdynError,
    ShadowFailure,
    StabilityThresholdExceeded,
)
from .output import write_csv, write_json
from .phase_maps import (
    CircleMap,
    MapSequence,
    branch_index,
    dist,
    inverse_branch,
    orbit,
    seq_distance,
    swrap,
    tail_decay,
    uniform_grid,
    wrap,
)
from .shadowing import anosov_solve, hyperbolic_splitting, pullback


@dataclass(frozen=True)
class ConjugacySample:
    grid: np.ndarray
    images: np.ndarray
    sup_dist_to_identity: float
    shift: int
    residual: float
    depth: int
    R: int
    dim: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    def displacement(self) -> np.ndarray:
        return swrap(self.images - self.grid)

    def lifted(self) -> np.ndarray:
        """Lifted images x + (h(x) - x) on the circle."""
        return self.grid + self.displacement()

    def is_monotone(self) -> bool:
        """Degree-one orientation-preserving certificate on the circle grid."""
        if self.dim != 1:
            raise TypeError("monotonicity certificate is defined on the circle")
        L = self.lifted()
        return bool(np.all(np.diff(L) > 0) and L[-1] < L[0] + 1.0)

    def __call__(self, x):
        """Interpolated h at arbitrary points (monotone/bilinear on the displacement)."""
        x = np.asarray(x, dtype=float)
        return wrap(x + interpolate_displacement(self, x))

    def metadata(self) -> dict:
        out = {
            "sup_dist": self.sup_dist_to_identity,
            "residual": self.residual,
            "depth": self.depth,
            "R": self.R,
            "shift": self.shift,
        }
        out.update(self.meta)
        return out

    def write(self, stem) -> None:
        if self.dim == 1:
            header = ("grid_x", "image_x")
            rows = zip(self.grid, self.images)
        else:
            header = ("grid_x", "grid_y", "image_x", "image_y")
            rows = (tuple(g) + tuple(i) for g, i in zip(self.grid, self.images))
        write_csv(f"{stem}.csv", header, rows)
        write_json(f"{stem}.json", self.metadata())


def interpolate_displacement(sample: ConjugacySample, x) -> np.ndarray:
    R = sample.R
    disp = sample.displacement()
    if sample.dim == 1:
        return np.interp(wrap(x), sample.grid, disp, period=1.0)
    D = disp.reshape(R, R, 2)
    u = wrap(x) * R
    i0 = np.floor(u).astype(int)
    t = u - i0
    i0 %= R
    i1 = (i0 + 1) % R
    a, b = i0[..., 0], i0[..., 1]
    c, d = i1[..., 0], i1[..., 1]
    tx, ty = t[..., 0:1], t[..., 1:2]
    return (
        (1 - tx) * (1 - ty) * D[a, b]
        + tx * (1 - ty) * D[c, b]
        + (1 - tx) * ty * D[a, d]
        + tx * ty * D[c, d]
    )


def stability_threshold(F: MapSequence) -> float:
    """Largest C^0 distance |||F-G||| for which G-orbits are shadowed consistently by F.

    On the circle this keeps the pullback inside the inverse-branch domains
    (delta/(1-lam) < 1/2); on the torus it keeps the orbit-correction
    iteration contracting.
    """
    if F.dim == 1:
        return (1.0 - F.lam) * 0.5
    split = hyperbolic_splitting(F)
    P = split.basis
    cond = float(np.linalg.norm(P, 2) * np.linalg.norm(np.linalg.inv(P), 2))
    return (1.0 - split.lam_tilde) / (4.0 * cond)


def _check_threshold(F: MapSequence, G: MapSequence) -> float:
    """Pre-check for h_{F,G}; returns the C^0 distance."""
    eps = seq_distance(F, G, order=0)
    thr = stability_threshold(F)
    if eps >= thr:
        raise StabilityThresholdExceeded(f"|||F-G||| = {eps:.3g} exceeds stability threshold {thr:.3g}")
    try:
        ok = G.lam < 1.0 if G.dim == 1 else hyperbolic_splitting(G).cone_ok
    except ValueError:
        ok = False
    if not ok:
        raise StabilityThresholdExceeded("perturbed sequence lost expansion/hyperbolicity")
    return eps


def _finite_or_fail(images, grid):
    bad = ~np.all(np.isfinite(np.reshape(images, (len(grid), -1))), axis=-1)
    if np.any(bad):
        raise ShadowFailure("shadowing failed at some grid points", locations=grid[bad].tolist())


def _two_sided_window(S: MapSequence, x, lo: int, hi: int):
    """Orbit of S through x (at time 0) on times lo..hi, time on axis 1."""
    fwd = orbit(S, x, hi) if hi > 0 else x[None]
    back = []
    y = x
    for m in range(1, -lo + 1):
        y = S.at(-m).inverse(y)
        back.append(y)
    parts = back[::-1] + list(fwd)
    return np.stack(parts, axis=1)


def _torus_depth(split, depth, tol):
    return split.default_depth(tol) if depth is None else int(depth)


def sequential_conjugacy(
    F: MapSequence, G: MapSequence, R: int = 4096, depth: int | None = None, tol: float = 1e-12, shift: int = 0
) -> ConjugacySample:
    """Sample h_{F,G} on a uniform grid (R points on the circle, R x R on the torus)."""
    if F.dim != G.dim:
        from .errors import IncompatiblePhaseSpaces

        raise IncompatiblePhaseSpaces("sequences act on different phase spaces")
    if R < 2 or R & (R - 1):
        raise ValueError("R must be a power of two")
    _check_threshold(F, G)
    grid = uniform_grid(R, F.dim)
    if F.dim == 1:
        D = 40 if depth is None else int(depth)
        xs = orbit(G, grid, D)
        try:
            ys = pullback(F, xs, xs[-1])
        except NonConvergence as exc:
            raise ShadowFailure(str(exc)) from exc
        images = ys[0]
        _finite_or_fail(images, grid)
        res = max(
            (float(np.max(dist(F.at(n)(ys[n]), ys[n + 1], 1))) for n in range(D)), default=0.0
        )
    else:
        split = hyperbolic_splitting(F)
        D = _torus_depth(split, depth, tol)
        win = _two_sided_window(G, grid, -D, D)
        try:
            ys, _ = anosov_solve(F, win, split, start=-D)
        except NonConvergence as exc:
            raise ShadowFailure(str(exc)) from exc
        images = ys[:, D]
        _finite_or_fail(images, grid)
        res = max(float(np.max(dist(F.at(n - D)(ys[:, n]), ys[:, n + 1], 2))) for n in range(2 * D))
    sup = float(np.max(dist(images, grid, F.dim)))
    return ConjugacySample(grid, images, sup, shift, res, D, R, F.dim)


def shifted_conjugacy(F: MapSequence, G: MapSequence, k: int, R: int = 4096, depth: int | None = None) -> ConjugacySample:
    """Sample h^{(k)} = h_{F^(k), G^(k)}."""
    return sequential_conjugacy(F.shift(k), G.shift(k), R, depth, shift=k)


def conjugacy_residual(F: MapSequence, G: MapSequence, k_max: int, R: int = 4096, depth: int | None = None) -> float:
    """max_{n<=k_max, x} d(h^{(n)}(F_n x), G_n(h(x))) with h^{(n)} = h_{G^(n),F^(n)}.

    Both sides are evaluated pointwise: h^{(n)}(F_n x) by pulling back the
    F-orbit of x from time n + depth, and G_n(h(x)) as the time-n point of the
    G-shadow of the same F-orbit pulled back from time k_max + depth.
    """
    _check_threshold(G, F)
    grid = uniform_grid(R, F.dim)
    out = 0.0
    if F.dim == 1:
        D = 40 if depth is None else int(depth)
        xs = orbit(F, grid, k_max + D)
        deep = pullback(G, xs, xs[-1])
        for n in range(k_max + 1):
            hn = pullback(G, xs[n : n + D + 1], xs[n + D], start=n)[0]
            out = max(out, float(np.max(dist(hn, deep[n], 1))))
        return out
    split = hyperbolic_splitting(G)
    D = _torus_depth(split, depth, 1e-12)
    win = _two_sided_window(F, grid, -D, k_max + D)
    deep, _ = anosov_solve(G, win, split, start=-D)
    for n in range(k_max + 1):
        sub, _ = anosov_solve(G, win[:, n : n + 2 * D + 1], split, start=n - D)
        out = max(out, float(np.max(dist(sub[:, D], deep[:, n + D], 2))))
    return out


@dataclass(frozen=True)
class QuasiConjugacyReport:
    sample: ConjugacySample
    eps: float
    lam: float
    delta: float
    defect: float
    bound: float
    within_delta: bool
    within_bound: bool

    @property
    def ok(self) -> bool:
        return self.within_delta and self.within_bound


def quasi_conjugacy_expanding(
    F: MapSequence, G: MapSequence, R: int = 4096, depth: int = 40, n_max: int = 20
) -> QuasiConjugacyReport:
    """h(x) is the G-shadow of the F-orbit of x; checks ||h - id|| <= delta and the 2 lam/(1-lam) eps defect."""
    if F.dim != 1:
        raise TypeError("quasi-conjugacy construction is for expanding circle sequences")
    lam = F.lam
    # the construction only uses d(g_n(x_n), f_n(x_n)) < eps, so eps is the C^0 distance
    eps = seq_distance(F, G, order=0)
    try:
        lam_g = G.lam
    except ValueError:
        lam_g = 1.0
    if lam_g >= 1.0:
        raise AdmissibilityViolated("G is not uniformly expanding")
    limit = (1.0 - lam) * 0.5 * 0.5 / lam  # delta < delta0 / 2
    if eps >= limit:
        raise AdmissibilityViolated(f"eps = {eps:.3g} must be below (1-lam) delta0 / (2 lam) = {limit:.3g}")
    delta = lam * eps / (1.0 - lam)
    bound = 2.0 * delta
    grid = uniform_grid(R)
    xs = orbit(F, grid, n_max + depth)
    deep = pullback(G, xs, xs[-1])
    images = deep[0]
    defect = 0.0
    for n in range(n_max + 1):
        sub = orbit(F, xs[n], depth)
        h_at = pullback(G, sub, sub[-1])[0]
        defect = max(defect, float(np.max(dist(deep[n], h_at, 1))))
    sup = float(np.max(dist(images, grid, 1)))
    sample = ConjugacySample(grid, images, sup, 0, defect, depth, R, 1, {"eps": eps, "bound": bound})
    tiny = 1e-12
    return QuasiConjugacyReport(sample, eps, lam, delta, defect, bound, sup <= delta + tiny, defect <= bound + tiny)


def inverse_check(hFG: ConjugacySample, hGF: ConjugacySample) -> float:
    """max_x d(hGF(hFG(x)), x), interpolating hGF off the grid."""
    if hFG.R != hGF.R or hFG.dim != hGF.dim or not np.array_equal(hFG.grid, hGF.grid):
        raise GridMismatch("conjugacy samples live on different grids")
    back = hGF(hFG.images)
    return float(np.max(dist(back, hFG.grid, hFG.dim)))


# ---------------------------------------------------------------------------
# Symbolic oracle
# ---------------------------------------------------------------------------


def itinerary(f: CircleMap, x, depth: int, guard: float = 1e-13) -> np.ndarray:
    """Branch digits of the f-orbit of x, shape (depth,) + x.shape."""
    x = np.asarray(x, dtype=float)
    L0 = f.lift(0.0)
    out = np.empty((depth,) + x.shape, dtype=np.int64)
    y = x
    for n in range(depth):
        u = f.lift(y) - L0
        frac = u - np.round(u)
        if np.any((np.abs(frac) < guard) & (frac != 0.0)):
            raise BoundaryItinerary("orbit point lies on a branch boundary within round-off")
        out[n] = branch_index(f, y)
        y = f(y)
    return out


def point_from_itinerary(g: CircleMap, digits, terminal=0.0) -> np.ndarray:
    """Nested inverse branches of g along ``digits`` (axis 0 is time)."""
    digits = np.asarray(digits)
    y = np.broadcast_to(np.asarray(terminal, dtype=float), digits.shape[1:]).copy()
    for n in range(digits.shape[0] - 1, -1, -1):
        y = _branch_vec(g, y, digits[n])
    return y


def _branch_vec(g: CircleMap, y, digit):
    digit = np.asarray(digit)
    if digit.ndim == 0:
        return inverse_branch(g, y, int(digit))
    out = np.empty_like(y)
    for b in np.unique(digit):
        m = digit == b
        out[m] = inverse_branch(g, y[m], int(b))
    return out


def itinerary_oracle(f: CircleMap, g: CircleMap, x, depth: int = 60):
    """The point whose g-itinerary matches the f-itinerary of x (error <= lam_g**depth)."""
    if not (f.is_expanding and g.is_expanding) or f.degree != g.degree:
        raise ValueError("itinerary oracle needs expanding circle maps of equal degree")
    x = np.asarray(x, dtype=float)
    digits = itinerary(f, x, depth)
    return point_from_itinerary(g, digits)


def conjugacy_distances(F: MapSequence, count: int, R: int = 1024, terms: int = 32) -> np.ndarray:
    """d_C0(h_j, id) for j < count with h_j = h_{F^(j), f}, f the limit map.

    The first ``terms`` values are measured on a grid; later ones use the
    shadowing bound lam/(1-lam) * sup_{i>=j} d(f_i, f).
    """
    f = MapSequence.constant(F.limit)
    out = np.empty(count)
    lam = F.shift(1).lam
    for j in range(count):
        if j < terms:
            try:
                out[j] = shifted_conjugacy(F, f, j, R).sup_dist_to_identity
                continue
            except (SeqdynError, ValueError):
                pass
        a = tail_decay(F, j)
        out[j] = lam / (1.0 - lam) * a
        if a < 1e-18:
            out[j:] = out[j]
            break
    return out
