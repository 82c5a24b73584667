"""Phase spaces, map families and map sequences on the circle and the 2-torus.

Points are plain numpy arrays.  A circle point is a float (or an array of
floats, one per point); a torus point is an array whose last axis has length
two.  Every coordinate is taken modulo one.

Two map families are provided:

* :class:`CircleMap` -- ``x -> d*x + psi(x) mod 1`` where ``psi`` is a
  trigonometric polynomial (:class:`CircleField`).  With ``d >= 2`` and a
  small enough perturbation this is a full-branch expanding map.
* :class:`TorusMap` -- ``z -> A z + B sin(2 pi z) mod 1`` for an integer
  hyperbolic matrix ``A`` (:class:`TorusField` holds ``B``).

A :class:`MapSequence` is a finitely describable family ``n -> f_n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    IncompatiblePhaseSpaces,
    NegativeIndexOnOneSided,
    NoDeclaredLimit,
    NonConvergence,
)

TWO_PI = 2.0 * math.pi

# Grid used for certified sup/inf estimates of derivatives.
_CERT_GRID = 4096


# ---------------------------------------------------------------------------
# Points and metrics
# ---------------------------------------------------------------------------


def wrap(x):
    """Reduce coordinates into [0, 1)."""
    r = np.mod(x, 1.0)
    # mod can round a tiny negative number up to exactly 1.0
    return np.where(r >= 1.0, 0.0, r)


def swrap(x):
    """Signed representative of ``x`` mod 1 in [-1/2, 1/2]."""
    return x - np.round(x)


def circle_dist(x, y):
    return np.abs(swrap(np.asarray(x, dtype=float) - y))


def torus_dist(x, y):
    d = swrap(np.asarray(x, dtype=float) - y)
    return np.sqrt(np.sum(d * d, axis=-1))


def dist(x, y, dim: int = 1):
    """Quotient metric on S^1 (``dim=1``) or T^2 (``dim=2``)."""
    if dim == 1:
        return circle_dist(x, y)
    if dim == 2:
        return torus_dist(x, y)
    raise ValueError(f"dim must be 1 or 2, got {dim}")


def diameter(dim: int) -> float:
    return 0.5 if dim == 1 else math.sqrt(2.0) / 2.0


def uniform_grid(size: int, dim: int = 1) -> np.ndarray:
    """Uniform grid of ``size`` points per axis (k/size)."""
    g = np.arange(size, dtype=float) / size
    if dim == 1:
        return g
    gx, gy = np.meshgrid(g, g, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=-1)


# ---------------------------------------------------------------------------
# Perturbation fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CircleField:
    """Trigonometric polynomial ``shift + sum_k s_k sin(2 pi k x) + c_k cos(2 pi k x)``."""

    shift: float = 0.0
    sin: tuple[float, ...] = ()
    cos: tuple[float, ...] = ()

    dim = 1

    def __post_init__(self):
        object.__setattr__(self, "sin", tuple(float(a) for a in self.sin))
        object.__setattr__(self, "cos", tuple(float(b) for b in self.cos))
        object.__setattr__(self, "shift", float(self.shift))

    @property
    def is_zero(self) -> bool:
        return self.shift == 0.0 and not any(self.sin) and not any(self.cos)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.shift)
        for k, a in enumerate(self.sin, start=1):
            if a:
                out = out + a * np.sin(TWO_PI * k * x)
        for k, b in enumerate(self.cos, start=1):
            if b:
                out = out + b * np.cos(TWO_PI * k * x)
        return out

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k, a in enumerate(self.sin, start=1):
            if a:
                out = out + TWO_PI * k * a * np.cos(TWO_PI * k * x)
        for k, b in enumerate(self.cos, start=1):
            if b:
                out = out - TWO_PI * k * b * np.sin(TWO_PI * k * x)
        return out

    def deriv_lipschitz(self) -> float:
        """Upper bound on |psi''|."""
        return sum((TWO_PI * k) ** 2 * abs(a) for k, a in enumerate(self.sin, 1)) + sum(
            (TWO_PI * k) ** 2 * abs(b) for k, b in enumerate(self.cos, 1)
        )

    def value_lipschitz(self) -> float:
        return sum(TWO_PI * k * abs(a) for k, a in enumerate(self.sin, 1)) + sum(
            TWO_PI * k * abs(b) for k, b in enumerate(self.cos, 1)
        )

    def scaled(self, c: float) -> "CircleField":
        return CircleField(c * self.shift, tuple(c * a for a in self.sin), tuple(c * b for b in self.cos))

    def __add__(self, other: "CircleField") -> "CircleField":
        def pad(a, b):
            n = max(len(a), len(b))
            a = tuple(a) + (0.0,) * (n - len(a))
            b = tuple(b) + (0.0,) * (n - len(b))
            return tuple(u + v for u, v in zip(a, b))

        return CircleField(self.shift + other.shift, pad(self.sin, other.sin), pad(self.cos, other.cos))

    def c1_norm(self, grid_size: int = _CERT_GRID) -> float:
        """Grid estimate of max(sup|psi|, sup|psi'|) (a lower bound)."""
        g = uniform_grid(grid_size)
        return float(max(np.max(np.abs(self.value(g))), np.max(np.abs(self.deriv(g)))))


@dataclass(frozen=True)
class TorusField:
    """Perturbation ``B sin(2 pi z)`` (sine taken coordinatewise)."""

    coeffs: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))

    dim = 2

    def __post_init__(self):
        b = np.asarray(self.coeffs, dtype=float).reshape(2, 2)
        object.__setattr__(self, "coeffs", tuple(tuple(float(v) for v in row) for row in b))

    @classmethod
    def diagonal(cls, amp: float) -> "TorusField":
        return cls(((amp, 0.0), (0.0, amp)))

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.coeffs)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrix)

    def value(self, z):
        return np.sin(TWO_PI * np.asarray(z, dtype=float)) @ self.matrix.T

    def jac(self, z):
        c = np.cos(TWO_PI * np.asarray(z, dtype=float))
        # (B diag(c))_{ij} = B_ij c_j
        return TWO_PI * self.matrix * c[..., None, :]

    def deriv_lipschitz(self) -> float:
        return (TWO_PI**2) * float(np.sqrt(np.sum(self.matrix**2)))

    def value_lipschitz(self) -> float:
        return TWO_PI * float(np.sqrt(np.sum(self.matrix**2)))

    def scaled(self, c: float) -> "TorusField":
        return TorusField(c * self.matrix)

    def __add__(self, other: "TorusField") -> "TorusField":
        return TorusField(self.matrix + other.matrix)

    def c1_norm(self, grid_size: int = 256) -> float:
        g = uniform_grid(grid_size, 2)
        c0 = np.max(np.sqrt(np.sum(self.value(g) ** 2, axis=-1)))
        c1 = np.max(np.linalg.norm(self.jac(g), ord=2, axis=(-2, -1)))
        return float(max(c0, c1))


Field = Union[CircleField, TorusField]


# ---------------------------------------------------------------------------
# Map families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CircleMap:
    """Circle map with lift ``x -> degree*x + field(x)``."""

    degree: int
    field: CircleField = field(default_factory=CircleField)

    dim = 1
    family = "expanding-circle"

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError(f"degree must be a positive integer, got {self.degree}")
        object.__setattr__(self, "degree", int(self.degree))
        if self.min_derivative <= 0.0:
            raise ValueError("lift is not strictly increasing; perturbation too large")

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        return self.degree * x + self.field.value(x)

    def __call__(self, x):
        return wrap(self.lift(x))

    def deriv(self, x):
        return self.degree + self.field.deriv(x)

    @cached_property
    def _deriv_range(self) -> tuple[float, float]:
        g = uniform_grid(_CERT_GRID)
        d = self.deriv(g)
        slack = self.field.deriv_lipschitz() * 0.5 / _CERT_GRID
        return float(d.min() - slack), float(d.max() + slack)

    @property
    def min_derivative(self) -> float:
        """Certified lower bound on the derivative of the lift."""
        return self._deriv_range[0]

    @property
    def M(self) -> float:
        """Certified upper bound on sup |f'|."""
        return self._deriv_range[1]

    @property
    def is_expanding(self) -> bool:
        return self.degree >= 2 and self.min_derivative > 1.0

    @property
    def lam(self) -> float:
        """Contraction rate of every inverse branch."""
        if not self.is_expanding:
            raise ValueError("map is not expanding")
        return 1.0 / self.min_derivative

    @property
    def delta0(self) -> float:
        # local inverse branches of a covering of S^1 are defined on every open arc of length < 1
        return 0.5

    def perturbed(self, psi: CircleField, scale: float = 1.0) -> "CircleMap":
        return CircleMap(self.degree, self.field + psi.scaled(scale))


@dataclass(frozen=True)
class TorusMap:
    """Torus map ``z -> A z + B sin(2 pi z) mod 1``."""

    matrix: tuple[tuple[int, int], tuple[int, int]]
    field: TorusField = field(default_factory=TorusField)

    dim = 2
    family = "torus-hyperbolic"

    def __post_init__(self):
        A = np.asarray(self.matrix)
        if A.shape != (2, 2) or not np.all(A == np.round(A)):
            raise ValueError("matrix must be a 2x2 integer matrix")
        A = A.astype(int)
        det = int(round(np.linalg.det(A)))
        if abs(det) != 1:
            raise ValueError(f"matrix must have det +-1, got {det}")
        if np.any(np.isclose(np.abs(np.linalg.eigvals(A)), 1.0)):
            raise ValueError("matrix has an eigenvalue on the unit circle")
        object.__setattr__(self, "matrix", tuple(tuple(int(v) for v in row) for row in A))
        g = uniform_grid(64, 2)
        if np.min(np.abs(np.linalg.det(self.jac(g)))) <= 0.0:
            raise ValueError("perturbation too large: Jacobian degenerates")

    @property
    def A(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    def lift(self, z):
        z = np.asarray(z, dtype=float)
        return z @ self.A.T + self.field.value(z)

    def __call__(self, z):
        return wrap(self.lift(z))

    def jac(self, z):
        z = np.asarray(z, dtype=float)
        return self.A + self.field.jac(z)

    @cached_property
    def M(self) -> float:
        g = uniform_grid(128, 2)
        norms = np.linalg.norm(self.jac(g), ord=2, axis=(-2, -1))
        return float(norms.max() + self.field.deriv_lipschitz() * math.sqrt(2) / 256)

    def inverse(self, y, tol: float = 1e-13, max_iter: int = 50):
        """Newton-solved preimage of ``y``."""
        y = wrap(np.asarray(y, dtype=float))
        Ainv = np.linalg.inv(self.A)
        z = wrap(y @ Ainv.T)
        if self.field.is_zero:
            return z
        for _ in range(max_iter):
            r = swrap(self.lift(z) - y)
            if np.max(np.abs(r), initial=0.0) < tol:
                return wrap(z)
            step = np.linalg.solve(self.jac(z), r[..., None])[..., 0]
            z = z - step
        r = swrap(self.lift(z) - y)
        if np.max(np.abs(r), initial=0.0) < tol:
            return wrap(z)
        raise NonConvergence(f"torus inverse did not converge (residual {np.max(np.abs(r)):.3e})")

    def perturbed(self, psi: TorusField, scale: float = 1.0) -> "TorusMap":
        return TorusMap(self.matrix, self.field + psi.scaled(scale))


SmoothMap = Union[CircleMap, TorusMap]


def doubling() -> CircleMap:
    return CircleMap(2)


def circle_map(degree: int = 2, sin: Sequence[float] = (), cos: Sequence[float] = (), shift: float = 0.0) -> CircleMap:
    return CircleMap(degree, CircleField(shift, tuple(sin), tuple(cos)))


CAT_MATRIX = ((2, 1), (1, 1))


def cat_map(amp: float = 0.0) -> TorusMap:
    """Arnold cat map, optionally with the diagonal ``amp * sin(2 pi z)`` perturbation."""
    return TorusMap(CAT_MATRIX, TorusField.diagonal(amp))


# ---------------------------------------------------------------------------
# Pointwise operations
# ---------------------------------------------------------------------------


def eval_map(f: SmoothMap, x):
    return f(x)


def derivative(f: SmoothMap, x):
    """Jacobian of the lift: shape ``x.shape + (1, 1)`` on S^1, ``(..., 2, 2)`` on T^2."""
    if f.dim == 1:
        return np.asarray(f.deriv(x))[..., None, None]
    return f.jac(x)


def _newton_monotone(f: CircleMap, target, lo, hi, p0, max_iter: int = 80):
    """Safeguarded Newton for ``lift(p) = target`` with lift increasing on [lo, hi]."""
    p = np.clip(p0, lo, hi)
    for _ in range(max_iter):
        r = f.lift(p) - target
        lo = np.where(r < 0, p, lo)
        hi = np.where(r > 0, p, hi)
        step = r / f.deriv(p)
        q = p - step
        outside = (q < lo) | (q > hi)
        q = np.where(r == 0, p, np.where(outside, 0.5 * (lo + hi), q))
        done = np.abs(q - p) <= 4e-16 * np.maximum(1.0, np.abs(p))
        p = q
        if np.all(done | (r == 0)):
            break
    return p


def inverse_branch(f: SmoothMap, y, branch: int):
    """Preimage of ``y`` in the ``branch``-th fundamental interval of the lift.

    The fundamental intervals partition [0, 1) as ``lift^{-1}[L0 + b, L0 + b + 1)``
    with ``L0 = lift(0)``; branch 0 contains 0.
    """
    if f.dim != 1:
        raise TypeError("inverse_branch applies to circle maps; use invert for torus maps")
    if not 0 <= branch < f.degree:
        raise ValueError(f"branch must be in 0..{f.degree - 1}")
    y = np.asarray(y, dtype=float)
    L0 = float(f.lift(0.0))
    target = L0 + wrap(y - L0) + branch
    p0 = (target - L0) / f.degree
    lo = np.zeros_like(target)
    hi = np.ones_like(target)
    return wrap(_newton_monotone(f, target, lo, hi, p0))


def branch_index(f: CircleMap, x):
    """Index of the fundamental interval containing ``x``."""
    L0 = float(f.lift(0.0))
    return np.floor(f.lift(wrap(x)) - L0).astype(int) % f.degree


def local_inverse(f: CircleMap, anchor, y):
    """Inverse branch of ``f`` through ``anchor`` evaluated at ``y`` (y near f(anchor))."""
    anchor = np.asarray(anchor, dtype=float)
    la = f.lift(anchor)
    delta = swrap(np.asarray(y, dtype=float) - la)
    target = la + delta
    lam = 1.0 / max(f.min_derivative, 1e-300)
    reach = lam * np.abs(delta) + 1e-15
    p0 = anchor + delta / f.deriv(anchor)
    p = _newton_monotone(f, target, anchor - reach, anchor + reach, p0)
    return wrap(p)


def invert(f: SmoothMap, y):
    if f.dim != 2:
        raise TypeError("invert applies to torus diffeomorphisms; use inverse_branch for circle maps")
    return f.inverse(y)


# ---------------------------------------------------------------------------
# Decay laws and sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayLaw:
    """Nonincreasing coefficient schedule ``c_n``.

    kinds: ``geometric`` (``C * ratio**n``), ``power`` (``C * max(n,1)**(-exponent)``),
    ``zero``.
    """

    kind: str = "zero"
    C: float = 0.0
    ratio: float = 0.5
    exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in ("geometric", "power", "zero"):
            raise ValueError(f"unknown decay kind {self.kind!r}")
        if self.kind == "geometric" and not 0.0 <= self.ratio <= 1.0:
            raise ValueError("geometric ratio must lie in [0, 1]")
        if self.kind == "power" and self.exponent < 0:
            raise ValueError("power exponent must be nonnegative")

    @classmethod
    def geometric(cls, C: float = 1.0, ratio: float = 0.5) -> "DecayLaw":
        return cls("geometric", C=C, ratio=ratio)

    @classmethod
    def power(cls, C: float, exponent: float) -> "DecayLaw":
        return cls("power", C=C, exponent=exponent)

    @classmethod
    def asip(cls, C: float, eps: float, alpha: float) -> "DecayLaw":
        """Schedule ``C j^{-(1/2 + eps)/alpha}``."""
        return cls("power", C=C, exponent=(0.5 + eps) / alpha)

    def __call__(self, n):
        n = np.asarray(n)
        if self.kind == "zero":
            return np.zeros(n.shape)
        if self.kind == "geometric":
            return self.C * np.power(self.ratio, n.astype(float))
        return self.C * np.power(np.maximum(n, 1).astype(float), -self.exponent)


@dataclass(frozen=True)
class MapSequence:
    """Finitely describable sequence of maps ``n -> f_n``.

    Use the constructors :meth:`constant`, :meth:`periodic`,
    :meth:`convergent_tail` and :meth:`formulaic`.  ``offset`` implements the
    shifted sequence F^(k) = {f_{n+k}}.
    """

    form: str
    maps: tuple = ()
    limit: SmoothMap | None = None
    direction: Field | None = None
    decay: DecayLaw | None = None
    formula: Callable[[int], SmoothMap] | None = None
    two_sided: bool = False
    offset: int = 0

    @classmethod
    def constant(cls, f: SmoothMap, two_sided: bool | None = None) -> "MapSequence":
        return cls("constant", maps=(f,), limit=f, two_sided=_default_two_sided(f, two_sided))

    @classmethod
    def periodic(cls, maps: Sequence[SmoothMap], two_sided: bool | None = None) -> "MapSequence":
        maps = tuple(maps)
        if not maps:
            raise ValueError("periodic sequence needs at least one map")
        _check_same_space(maps)
        return cls("periodic", maps=maps, two_sided=_default_two_sided(maps[0], two_sided))

    @classmethod
    def convergent_tail(
        cls,
        limit: SmoothMap,
        direction: Field,
        decay: DecayLaw,
        leading: Sequence[SmoothMap] = (),
        two_sided: bool | None = None,
    ) -> "MapSequence":
        """``f_n = leading[n]`` for n < len(leading), else ``limit + decay(n) * direction``.

        For a two-sided sequence, negative indices use ``limit``.
        """
        leading = tuple(leading)
        _check_same_space((limit,) + leading)
        if direction.dim != limit.dim:
            raise IncompatiblePhaseSpaces("direction field and limit map live on different spaces")
        probe = decay(np.arange(0, 4096))
        if np.any(np.diff(probe) > 1e-15 * max(1.0, abs(probe[0]))):
            raise ValueError("decay law must be nonincreasing")
        return cls(
            "convergent-tail",
            maps=leading,
            limit=limit,
            direction=direction,
            decay=decay,
            two_sided=_default_two_sided(limit, two_sided),
        )

    @classmethod
    def formulaic(cls, formula: Callable[[int], SmoothMap], two_sided: bool = False) -> "MapSequence":
        return cls("formulaic", formula=formula, two_sided=two_sided)

    # -- indexing ----------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.at(0).dim

    def at(self, n: int) -> SmoothMap:
        k = int(n) + self.offset
        if k < 0 and not self.two_sided:
            raise NegativeIndexOnOneSided(f"index {k} on a one-sided sequence")
        if self.form == "constant":
            return self.maps[0]
        if self.form == "periodic":
            return self.maps[k % len(self.maps)]
        if self.form == "convergent-tail":
            if k < 0:
                return self.limit
            if k < len(self.maps):
                return self.maps[k]
            c = float(self.decay(k))
            return self.limit.perturbed(self.direction, c) if c else self.limit
        return self.formula(k)

    def shift(self, k: int) -> "MapSequence":
        """The shifted sequence F^(k)."""
        return replace(self, offset=self.offset + int(k))

    @property
    def period(self) -> int | None:
        if self.form == "constant":
            return 1
        if self.form == "periodic":
            return len(self.maps)
        return None

    def tail_start(self) -> int:
        """First (shifted) index from which the declared representation is uniform."""
        if self.form == "convergent-tail":
            return max(len(self.maps) - self.offset, 0)
        return 0

    @cached_property
    def lam(self) -> float:
        """sup_n of the inverse-branch contraction rates (expanding circle sequences)."""
        if self.form in ("constant", "periodic"):
            return max(f.lam for f in self.maps)
        if self.form == "convergent-tail":
            lead = [f.lam for f in self.maps[max(self.offset, 0):]]
            start = max(len(self.maps), self.offset, 0)
            c = float(self.decay(start))
            worst = self.limit.min_derivative - c * self.direction.value_lipschitz()
            if worst <= 1.0:
                raise ValueError("tail maps are not uniformly expanding")
            return max(lead + [1.0 / worst])
        return max(self.at(n).lam for n in range(64))

    @cached_property
    def M(self) -> float:
        if self.form in ("constant", "periodic"):
            return max(f.M for f in self.maps)
        if self.form == "convergent-tail":
            start = max(len(self.maps), self.offset, 0)
            c = float(self.decay(start))
            vals = [f.M for f in self.maps[max(self.offset, 0):]]
            vals.append(self.limit.M + c * self.direction.value_lipschitz())
            return max(vals)
        return max(self.at(n).M for n in range(64))

    # -- fast coefficient tables (circle sequences) ---------------------------

    def circle_coefficients(self, start: int, count: int):
        """Coefficient table for f_start .. f_{start+count-1} of a circle sequence.

        Returns ``(degree, shift, sin, cos)`` with shapes (count,), (count,),
        (count, K), (count, K).
        """
        if self.dim != 1:
            raise TypeError("coefficient tables are only defined for circle sequences")
        idx = np.arange(start, start + count) + self.offset
        if self.form == "formulaic" or (self.form == "convergent-tail" and np.any(idx < len(self.maps))):
            maps = [self.at(int(i) - self.offset) for i in idx]
            return _stack_fields([f.degree for f in maps], [f.field for f in maps])
        if self.form in ("constant", "periodic"):
            base = _stack_fields([f.degree for f in self.maps], [f.field for f in self.maps])
            sel = idx % len(self.maps)
            return tuple(a[sel] for a in base)
        deg, sh, s, c = _stack_fields([self.limit.degree, 0], [self.limit.field, self.direction])
        coef = self.decay(idx)
        return (
            np.full(count, deg[0]),
            sh[0] + coef * sh[1],
            s[0][None, :] + coef[:, None] * s[1][None, :],
            c[0][None, :] + coef[:, None] * c[1][None, :],
        )


def _default_two_sided(f: SmoothMap, two_sided: bool | None) -> bool:
    if two_sided is None:
        return f.dim == 2
    if two_sided and f.dim == 1:
        raise ValueError("circle maps are not invertible; sequence must be one-sided")
    return two_sided


def _check_same_space(maps) -> None:
    dims = {f.dim for f in maps}
    if len(dims) > 1:
        raise IncompatiblePhaseSpaces("maps live on different phase spaces")


def _stack_fields(degrees, fields):
    K = max(max(len(f.sin), len(f.cos)) for f in fields)
    n = len(fields)
    deg = np.asarray(degrees, dtype=np.int64)
    sh = np.array([f.shift for f in fields])
    s = np.zeros((n, K))
    c = np.zeros((n, K))
    for i, f in enumerate(fields):
        s[i, : len(f.sin)] = f.sin
        c[i, : len(f.cos)] = f.cos
    return deg, sh, s, c


def compose_seq(F: MapSequence, n: int, x):
    """F_n(x) = f_{n-1} o ... o f_0 (x); negative n uses the inverse maps."""
    x = wrap(np.asarray(x, dtype=float))
    if n >= 0:
        for j in range(n):
            x = F.at(j)(x)
        return x
    if not F.two_sided:
        raise NegativeIndexOnOneSided("negative composition needs a two-sided invertible sequence")
    for j in range(-1, n - 1, -1):
        x = invert(F.at(j), x)
    return x


def orbit(F: MapSequence, x, n: int, start: int = 0):
    """Points F_0(x), ..., F_n(x) (of the shifted sequence F^(start)); leading axis is time."""
    x = wrap(np.asarray(x, dtype=float))
    out = np.empty((n + 1,) + x.shape)
    out[0] = x
    for j in range(n):
        x = F.at(start + j)(x)
        out[j + 1] = x
    return out


# ---------------------------------------------------------------------------
# Distances between maps and sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormBounds:
    lower: float
    upper: float
    grid_size: int


def map_distance(f: SmoothMap, g: SmoothMap, order: int = 0, grid_size: int = 4096) -> NormBounds:
    """Grid estimate of the C^0 (or C^1 = max of C^0 and derivative gap) distance."""
    if f.dim != g.dim:
        raise IncompatiblePhaseSpaces("maps live on different phase spaces")
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    if f.dim == 1:
        x = uniform_grid(grid_size)
        c0 = circle_dist(f(x), g(x))
        h = 0.5 / grid_size
        lip0 = abs(f.degree - g.degree) + f.field.value_lipschitz() + g.field.value_lipschitz()
        lower0, upper0 = float(c0.max()), float(c0.max() + lip0 * h)
        if order == 0:
            return NormBounds(lower0, upper0, grid_size)
        d1 = np.abs(f.deriv(x) - g.deriv(x))
        lip1 = f.field.deriv_lipschitz() + g.field.deriv_lipschitz()
        return NormBounds(max(lower0, float(d1.max())), max(upper0, float(d1.max() + lip1 * h)), grid_size)
    side = max(int(math.isqrt(grid_size)), 8)
    z = uniform_grid(side, 2)
    c0 = torus_dist(f(z), g(z))
    h = math.sqrt(2) / (2 * side)
    lip0 = float(np.linalg.norm(f.A - g.A, 2)) + f.field.value_lipschitz() + g.field.value_lipschitz()
    lower0, upper0 = float(c0.max()), float(c0.max() + lip0 * h)
    if order == 0:
        return NormBounds(lower0, upper0, side * side)
    d1 = np.linalg.norm(f.jac(z) - g.jac(z), ord=2, axis=(-2, -1))
    lip1 = f.field.deriv_lipschitz() + g.field.deriv_lipschitz()
    return NormBounds(max(lower0, float(d1.max())), max(upper0, float(d1.max() + lip1 * h)), side * side)


def _index_horizon(F: MapSequence, G: MapSequence) -> list[int]:
    periods = [s.period for s in (F, G)]
    if all(p is not None for p in periods):
        return list(range(math.lcm(*periods)))
    for s in (F, G):
        if s.form == "formulaic":
            raise ValueError("sup over n is not computable for formulaic sequences")
    # explicit leading part, the first tail indices, then the limits (index "inf")
    K = max(F.tail_start(), G.tail_start())
    horizon = K + 1
    if F.form == G.form == "convergent-tail":
        horizon = K + 64
    return list(range(horizon))


def seq_distance_bounds(F: MapSequence, G: MapSequence, order: int = 0, grid_size: int = 4096) -> NormBounds:
    """Bounds on |||F - G||| = sup_n d_{C^order}(f_n, g_n)."""
    if F.dim != G.dim:
        raise IncompatiblePhaseSpaces("sequences live on different phase spaces")
    lo, hi = 0.0, 0.0
    pairs = [(F.at(n), G.at(n)) for n in _index_horizon(F, G)]
    if F.period is None or G.period is None:
        fl = F.limit if F.form != "periodic" else None
        gl = G.limit if G.form != "periodic" else None
        if fl is not None and gl is not None:
            pairs.append((fl, gl))
    for f, g in pairs:
        if f is g:
            continue
        b = map_distance(f, g, order, grid_size)
        lo, hi = max(lo, b.lower), max(hi, b.upper)
    return NormBounds(lo, hi, grid_size)


def seq_distance(F: MapSequence, G: MapSequence, order: int = 0, grid_size: int = 4096) -> float:
    """Grid lower bound on |||F - G|||; see :func:`seq_distance_bounds` for the upper bound."""
    return seq_distance_bounds(F, G, order, grid_size).lower


def tail_decay(F: MapSequence, n: int, grid_size: int = 4096) -> float:
    """a_n = sup_{l >= n} ||f_l - f||_{C^1} for a sequence with a declared limit."""
    if F.form == "constant":
        return 0.0
    if F.form != "convergent-tail":
        raise NoDeclaredLimit(f"{F.form} sequence has no declared limit map")
    k = int(n) + F.offset
    lead = [map_distance(f, F.limit, 1, grid_size).lower for f in F.maps[max(k, 0):]]
    start = max(k, len(F.maps))
    tail = float(F.decay(start)) * F.direction.c1_norm()
    return max(lead + [tail])


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """Trigonometric polynomial observable, or a distance-to-point preset.

    ``terms`` holds ``(wavevector, a_cos, a_sin)`` triples:
    ``phi(x) = const + sum a_cos cos(2 pi k.x) + a_sin sin(2 pi k.x)``.
    """

    kind: str = "trig"
    terms: tuple = ()
    const: float = 0.0
    dim: int = 1
    center: tuple[float, ...] = ()
    alpha: float = 1.0

    @classmethod
    def trig(cls, cos: Sequence[float] = (), sin: Sequence[float] = (), const: float = 0.0) -> "Observable":
        """Circle trig polynomial with ``cos[k-1]``, ``sin[k-1]`` coefficients of frequency k."""
        n = max(len(cos), len(sin))
        cos = tuple(cos) + (0.0,) * (n - len(cos))
        sin = tuple(sin) + (0.0,) * (n - len(sin))
        terms = tuple(((k,), float(a), float(b)) for k, (a, b) in enumerate(zip(cos, sin), 1) if a or b)
        return cls("trig", terms, float(const), 1)

    @classmethod
    def wave(cls, wavevectors, cos=(), sin=(), const: float = 0.0) -> "Observable":
        wavevectors = [tuple(int(v) for v in k) for k in wavevectors]
        dim = len(wavevectors[0])
        cos = tuple(cos) or (0.0,) * len(wavevectors)
        sin = tuple(sin) or (0.0,) * len(wavevectors)
        terms = tuple((k, float(a), float(b)) for k, a, b in zip(wavevectors, cos, sin))
        return cls("trig", terms, float(const), dim)

    @classmethod
    def distance_to(cls, point) -> "Observable":
        p = tuple(float(v) for v in np.atleast_1d(point))
        return cls("dist", (), 0.0, len(p), p)

    @classmethod
    def constant_value(cls, c: float, dim: int = 1) -> "Observable":
        return cls("trig", (), float(c), dim)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "dist":
            p = self.center[0] if self.dim == 1 else np.asarray(self.center)
            return dist(x, p, self.dim)
        shape = x.shape if self.dim == 1 else x.shape[:-1]
        out = np.full(shape, self.const)
        for k, a, b in self.terms:
            arg = TWO_PI * (k[0] * x if self.dim == 1 else x @ np.asarray(k, dtype=float))
            if a:
                out = out + a * np.cos(arg)
            if b:
                out = out + b * np.sin(arg)
        return out

    @property
    def holder_constant(self) -> float:
        """|phi|_alpha for alpha = 1 (a Lipschitz bound)."""
        if self.kind == "dist":
            return 1.0
        return sum(TWO_PI * math.hypot(*k) * (abs(a) + abs(b)) for k, a, b in self.terms)

    @property
    def mean_zero(self) -> bool:
        """Zero Lebesgue mean (trig polynomials without constant term)."""
        return self.kind == "trig" and self.const == 0.0

    @property
    def is_constant(self) -> bool:
        return self.kind == "trig" and not any(a or b for _, a, b in self.terms)

    def circle_coefficients(self):
        """(const, cos[K], sin[K]) for circle trig observables (used by compiled kernels)."""
        if self.kind != "trig" or self.dim != 1:
            raise TypeError("only circle trig observables have a coefficient table")
        K = max((k[0] for k, _, _ in self.terms), default=0)
        c = np.zeros(K)
        s = np.zeros(K)
        for k, a, b in self.terms:
            c[k[0] - 1] += a
            s[k[0] - 1] += b
        return self.const, c, s
