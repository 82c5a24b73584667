import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from seqdyn.errors import IncompatiblePhaseSpaces, NegativeIndexOnOneSided, NoDeclaredLimit
from seqdyn.phase_maps import (
    CircleField,
    DecayLaw,
    MapSequence,
    Observable,
    branch_index,
    cat_map,
    circle_map,
    compose_seq,
    dist,
    doubling,
    inverse_branch,
    local_inverse,
    map_distance,
    orbit,
    seq_distance,
    tail_decay,
    uniform_grid,
    wrap,
)

G = circle_map(2, sin=(0.05,))


def brentq_preimage(f, y, b):
    """Independent root find of lift(p) = lift(0) + frac(y - lift(0)) + b on [0, 1]."""
    L0 = float(f.lift(0.0))
    target = L0 + ((y - L0) % 1.0) + b
    return brentq(lambda p: float(f.lift(p)) - target, 0.0, 1.0, xtol=1e-15)


@pytest.mark.parametrize("f", [doubling(), G, circle_map(3, sin=(0.02,), cos=(0.01,), shift=0.1)])
def test_inverse_branch_matches_brentq(f):
    ys = np.linspace(0.01, 0.99, 23)
    for b in range(f.degree):
        p = inverse_branch(f, ys, b)
        ref = np.array([brentq_preimage(f, y, b) for y in ys])
        assert np.max(dist(p, wrap(ref))) < 1e-13


@given(st.floats(0, 1, exclude_max=True), st.integers(0, 1))
def test_inverse_branch_is_right_inverse(y, b):
    p = inverse_branch(G, y, b)
    assert dist(G(p), y) < 1e-13
    assert branch_index(G, p) == b or dist(p, 0.0) < 1e-12


@given(st.floats(0, 1, exclude_max=True), st.floats(-1e-3, 1e-3))
def test_local_inverse_tracks_anchor(x, d):
    y = wrap(G(x) + d)
    p = local_inverse(G, x, y)
    assert dist(G(p), y) < 1e-13
    assert dist(p, x) <= abs(d) * G.lam + 1e-13


def test_doubling_orbit_exact_on_dyadics():
    F = MapSequence.constant(doubling())
    pts = orbit(F, 3 / 16, 4)
    assert np.allclose(pts, [3 / 16, 3 / 8, 3 / 4, 1 / 2, 0.0])


def test_compose_matches_orbit_and_shift():
    F = MapSequence.periodic([doubling(), G])
    x = np.linspace(0, 1, 9, endpoint=False)
    assert np.allclose(compose_seq(F, 5, x), orbit(F, x, 5)[-1])
    assert np.allclose(F.shift(1).at(0)(x), G(x))
    assert F.period == 2


def test_cat_inverse_round_trip():
    f = cat_map(0.01)
    z = uniform_grid(16, 2)
    assert np.max(dist(f(f.inverse(z)), z, 2)) < 1e-12
    F = MapSequence.constant(f)
    assert np.max(dist(compose_seq(F, -3, compose_seq(F, 3, z)), z, 2)) < 1e-11


def test_negative_index_on_one_sided():
    F = MapSequence.constant(doubling())
    with pytest.raises(NegativeIndexOnOneSided):
        F.at(-1)
    with pytest.raises(NegativeIndexOnOneSided):
        compose_seq(F, -1, 0.3)


def test_incompatible_spaces():
    with pytest.raises(IncompatiblePhaseSpaces):
        MapSequence.periodic([doubling(), cat_map()])
    with pytest.raises(IncompatiblePhaseSpaces):
        map_distance(doubling(), cat_map())


def test_map_distance_brackets_sine_amplitude():
    for a in (0.04, 0.01):
        b = map_distance(doubling(), circle_map(2, sin=(a,)))
        assert b.lower <= a + 1e-15 and a <= b.upper
        assert b.upper - b.lower < 1e-3
        b1 = map_distance(doubling(), circle_map(2, sin=(a,)), order=1)
        assert b1.lower <= 2 * math.pi * a + 1e-14 and 2 * math.pi * a <= b1.upper


def test_seq_distance_periodic_and_tail():
    F = MapSequence.constant(doubling())
    P = MapSequence.periodic([circle_map(2, sin=(0.02,)), circle_map(2, sin=(-0.03,))])
    assert abs(seq_distance(F, P) - 0.03) < 1e-4
    T = MapSequence.convergent_tail(doubling(), CircleField(sin=(1.0,)), DecayLaw.geometric(0.01, 0.5))
    assert tail_decay(T, 3) == pytest.approx(0.01 / 8 * 2 * math.pi, rel=1e-3)
    with pytest.raises(NoDeclaredLimit):
        tail_decay(P, 0)


def test_circle_coefficients_agree_with_maps():
    T = MapSequence.convergent_tail(doubling(), CircleField(sin=(0.1,), cos=(0.0, 0.02)), DecayLaw.power(0.5, 1.6), leading=(G,))
    deg, sh, sn, cs = T.circle_coefficients(0, 6)
    x = np.linspace(0, 1, 7, endpoint=False)
    for j in range(6):
        lift = deg[j] * x + sh[j]
        for k in range(sn.shape[1]):
            lift = lift + sn[j, k] * np.sin(2 * np.pi * (k + 1) * x) + cs[j, k] * np.cos(2 * np.pi * (k + 1) * x)
        assert np.allclose(lift, T.at(j).lift(x), atol=1e-15)


def test_expansion_constants_of_perturbed_doubling():
    g = circle_map(2, sin=(0.05,))
    assert g.min_derivative <= 2 - 2 * math.pi * 0.05 + 1e-12
    assert g.M >= 2 + 2 * math.pi * 0.05 - 1e-12
    exact = 1 / (2 - 0.1 * math.pi)
    assert g.is_expanding and exact <= g.lam < exact + 1e-3  # certified bound
    with pytest.raises(ValueError):
        circle_map(2, sin=(0.4,))  # lift no longer increasing


def test_observable_evaluation():
    phi = Observable.trig(cos=(1.0, 0.5), sin=(0.0, 0.25), const=0.1)
    x = np.array([0.0, 0.25, 0.1])
    ref = 0.1 + np.cos(2 * np.pi * x) + 0.5 * np.cos(4 * np.pi * x) + 0.25 * np.sin(4 * np.pi * x)
    assert np.allclose(phi(x), ref)
    assert not phi.mean_zero and Observable.trig(cos=(1,)).mean_zero
    assert phi.holder_constant == pytest.approx(2 * np.pi * 1 + 4 * np.pi * 0.75)
    d = Observable.distance_to(0.9)
    assert d(0.1) == pytest.approx(0.2)


def test_decay_law_shapes():
    assert DecayLaw.geometric(1, 0.5)(3) == pytest.approx(0.125)
    assert DecayLaw.asip(1, 0.1, 1)(4) == pytest.approx(4**-0.6)
    with pytest.raises(ValueError):
        MapSequence.convergent_tail(doubling(), CircleField(sin=(1,)), DecayLaw("power", C=1, exponent=-1))
