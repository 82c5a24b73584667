"""Compiled inner loops for long circle orbits and separated-set counts."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
# bits below 2^-RESEED_BITS are replaced by fresh uniform bits at every step
RESEED_BITS = 44
RESEED = float(2**RESEED_BITS)


@njit(cache=True, inline="always")
def _lift(x, deg, shift, sn, cs):
    y = deg * x + shift
    for k in range(sn.shape[0]):
        a = TWO_PI * (k + 1) * x
        if sn[k] != 0.0:
            y += sn[k] * math.sin(a)
        if cs[k] != 0.0:
            y += cs[k] * math.cos(a)
    return y


@njit(cache=True, inline="always")
def _dlift(x, deg, sn, cs):
    y = float(deg)
    for k in range(sn.shape[0]):
        w = TWO_PI * (k + 1)
        a = w * x
        y += w * (sn[k] * math.cos(a) - cs[k] * math.sin(a))
    return y


@njit(cache=True, inline="always")
def _obs(x, oconst, oc, os_):
    y = oconst
    for k in range(oc.shape[0]):
        a = TWO_PI * (k + 1) * x
        if oc[k] != 0.0:
            y += oc[k] * math.cos(a)
        if os_[k] != 0.0:
            y += os_[k] * math.sin(a)
    return y


@njit(cache=True, nogil=True)
def run_orbits(x, deg, shift, sn, cs, jit, oconst, oc, os_, sums, hist, trace, total0):
    """Advance every orbit in ``x`` through one coefficient chunk.

    Accumulates phi(x_j) into ``sums`` (before stepping), counts points into
    ``hist`` (rows per orbit, zero columns to skip), and for a single orbit
    writes running averages into ``trace`` (length zero to skip).  ``jit``
    holds uniforms in [0, 1) used for reseeding, shape (B, c), or (B, 0) for
    plain float iteration.
    """
    B = x.shape[0]
    c = deg.shape[0]
    nb = hist.shape[1]
    use_jit = jit.shape[1] > 0
    want_trace = trace.shape[0] > 0
    for i in range(B):
        xi = x[i]
        s = sums[i]
        for j in range(c):
            s += _obs(xi, oconst, oc, os_)
            if nb > 0:
                b = int(xi * nb)
                if b >= nb:
                    b = nb - 1
                hist[i, b] += 1.0
            if want_trace:
                trace[j] = s / (total0 + j + 1)
            xi = _lift(xi, deg[j], shift[j], sn[j], cs[j])
            xi -= math.floor(xi)
            if use_jit:
                xi = (math.floor(xi * RESEED) + jit[i, j]) / RESEED
            if xi >= 1.0:
                xi = 0.0
        x[i] = xi
        sums[i] = s


@njit(cache=True, nogil=True)
def orbit_points(x, deg, shift, sn, cs, jit, out):
    """Write x_j (before stepping) for each orbit into ``out`` (B, c)."""
    B = x.shape[0]
    c = deg.shape[0]
    use_jit = jit.shape[1] > 0
    for i in range(B):
        xi = x[i]
        for j in range(c):
            out[i, j] = xi
            xi = _lift(xi, deg[j], shift[j], sn[j], cs[j])
            xi -= math.floor(xi)
            if use_jit:
                xi = (math.floor(xi * RESEED) + jit[i, j]) / RESEED
            if xi >= 1.0:
                xi = 0.0
        x[i] = xi


@njit(cache=True, inline="always")
def _branch_inverse(y, b, deg, shift, sn, cs):
    """Solve lift(p) = lift(0) + frac(y - lift(0)) + b for p in [0, 1]."""
    L0 = _lift(0.0, deg, shift, sn, cs)
    u = y - L0
    u -= math.floor(u)
    T = L0 + u + b
    lo = 0.0
    hi = 1.0
    p = (u + b) / deg
    for _ in range(60):
        r = _lift(p, deg, shift, sn, cs) - T
        if r == 0.0:
            break
        if r < 0.0:
            lo = p
        else:
            hi = p
        q = p - r / _dlift(p, deg, sn, cs)
        if q <= lo or q >= hi:
            q = 0.5 * (lo + hi)
        if abs(q - p) <= 2e-16:
            p = q
            break
        p = q
    if p >= 1.0:
        p -= 1.0
    return p


@njit(cache=True, nogil=True)
def coded_points(digits, deg, shift, sn, cs, depth, out):
    """out[j] = point whose itinerary under maps j, j+1, ... starts with digits[j:].

    Pulls back once per step from time len(out) + depth - 1, so every output
    point is accurate to lam^depth.  Coefficient tables are indexed by
    absolute time and need len(out) + depth rows.
    """
    n = out.shape[0]
    y = 0.5
    for t in range(n + depth - 1, -1, -1):
        y = _branch_inverse(y, digits[t], deg[t], shift[t], sn[t], cs[t])
        if t < n:
            out[t] = y


@njit(cache=True, nogil=True)
def shift_window_points(digits, out):
    """Binary shift: out[j] = sum_{i<53} digits[j+i] 2^-(i+1) (needs len(digits) >= len(out)+53)."""
    n = out.shape[0]
    w = np.int64(0)
    mask = (np.int64(1) << 53) - 1
    for i in range(53):
        w = (w << 1) | np.int64(digits[i])
    scale = 1.0 / float(np.int64(1) << 53)
    for j in range(n):
        out[j] = w * scale
        w = ((w << 1) | np.int64(digits[j + 53])) & mask


@njit(cache=True, nogil=True)
def _separated(table, p, q, eps, dim):
    """True when max_j d(x_j, y_j) > eps for candidates p and q."""
    for j in range(table.shape[1]):
        acc = 0.0
        for k in range(dim):
            d = table[p, j, k] - table[q, j, k]
            d -= math.floor(d + 0.5)
            acc += d * d
        if math.sqrt(acc) > eps:
            return True
    return False


@njit(cache=True, nogil=True)
def greedy_separated(table, eps, r0, dim):
    """Greedy maximal (n, eps)-separated subset of candidate orbit segments.

    ``table`` has shape (P, n, dim) holding orbit points; two candidates are
    separated when max_j d(x_j, y_j) > eps.  Candidates are bucketed by the
    cell of their first point, so only neighbouring cells are compared, most
    recently selected first.  ``r0`` must bound d(x_0, y_0) for every pair
    that is not separated (eps itself always works).  Returns the number of
    selected candidates.
    """
    P = table.shape[0]
    R = max(1, min(int(0.5 / r0), 1 << 22 if dim == 1 else 1 << 11))
    ncell = R if dim == 1 else R * R
    heads = -np.ones(ncell, dtype=np.int64)
    nxt = -np.ones(P, dtype=np.int64)
    reach = int(r0 * R) + 1
    span = 2 * reach + 1
    if span > R:
        span = R
    count = 0
    for p in range(P):
        cx = int(table[p, 0, 0] * R) % R
        cy = int(table[p, 0, dim - 1] * R) % R if dim == 2 else 0
        ok = True
        for ix in range(span):
            # own cell first, then outward: the nearest selected points reject fastest
            ox = (ix + 1) // 2 * (1 if ix % 2 == 1 else -1) if span < R else ix
            gx = (cx + ox) % R
            for iy in range(span if dim == 2 else 1):
                oy = (iy + 1) // 2 * (1 if iy % 2 == 1 else -1) if span < R else iy
                gy = (cy + oy) % R
                q = heads[gx * R + gy] if dim == 2 else heads[gx]
                while q >= 0:
                    if not _separated(table, p, q, eps, dim):
                        ok = False
                        break
                    q = nxt[q]
                if not ok:
                    break
            if not ok:
                break
        if ok:
            cell = cx * R + cy if dim == 2 else cx
            nxt[p] = heads[cell]
            heads[cell] = p
            count += 1
    return count
