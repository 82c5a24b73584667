import numpy as np
import pytest

from seqdyn.conjugacy import (
    conjugacy_distances,
    conjugacy_residual,
    inverse_check,
    itinerary,
    itinerary_oracle,
    quasi_conjugacy_expanding,
    sequential_conjugacy,
    shifted_conjugacy,
)
from seqdyn.errors import (
    AdmissibilityViolated,
    BoundaryItinerary,
    GridMismatch,
    IncompatiblePhaseSpaces,
    StabilityThresholdExceeded,
)
from seqdyn.phase_maps import (
    CircleField,
    DecayLaw,
    MapSequence,
    cat_map,
    circle_map,
    dist,
    doubling,
    seq_distance,
    tail_decay,
    uniform_grid,
)

F = MapSequence.constant(doubling())
G = MapSequence.constant(circle_map(2, sin=(0.05,)))
FP = MapSequence.periodic([circle_map(2, sin=(0.03,), shift=0.01), doubling()])
GP = MapSequence.periodic([circle_map(2, sin=(0.05,)), circle_map(2, cos=(0.02,))])


def test_identity_when_sequences_agree():
    h = sequential_conjugacy(G, G, R=256)
    assert h.sup_dist_to_identity < 1e-15


def test_fixed_point_maps_to_fixed_point():
    # 0 is fixed by both maps, so its shadow is 0
    h = sequential_conjugacy(F, G, R=256)
    assert h.images[0] == 0.0
    assert h.is_monotone()
    assert h.sup_dist_to_identity <= 0.05 / (1 - 0.5) * 0.5 + 1e-12


def test_matches_itinerary_oracle():
    # grid point 0 sits on a branch boundary, which the itinerary refuses
    h = sequential_conjugacy(G, F, R=1024)
    exact = itinerary_oracle(doubling(), circle_map(2, sin=(0.05,)), uniform_grid(1024)[1:], depth=60)
    assert np.max(dist(h.images[1:], exact)) < 1e-12


def test_interpolation_between_grid_points():
    # h is only Hoelder, so off-grid interpolation error is far above round-off
    x = uniform_grid(1024) + 0.3 / 1024
    h = sequential_conjugacy(G, F, R=1024)
    oracle = itinerary_oracle(doubling(), circle_map(2, sin=(0.05,)), x, depth=60)
    assert np.max(dist(h(x), oracle)) < 1e-3


def test_residual_nonconstant_sequences():
    assert conjugacy_residual(FP, GP, 10, R=512, depth=40) < 1e-12


def test_residual_shrinks_with_depth():
    r = [conjugacy_residual(FP, GP, 10, R=512, depth=D) for D in (10, 20, 30)]
    lam_g = GP.lam
    assert r[0] > r[1] > r[2]
    assert r[2] / r[1] < lam_g**10


def test_residual_doubling_example():
    assert conjugacy_residual(F, G, 20, R=4096, depth=40) < 1e-6


def test_shifted_conjugacy_periodicity():
    a = shifted_conjugacy(FP, GP, 0, R=256)
    b = shifted_conjugacy(FP, GP, 2, R=256)
    assert np.max(dist(a.images, b.images)) < 1e-12
    assert b.shift == 2


def test_inverse_pair():
    hfg = sequential_conjugacy(F, G, R=4096)
    hgf = sequential_conjugacy(G, F, R=4096)
    assert inverse_check(hfg, hgf) < 1e-4


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        inverse_check(sequential_conjugacy(F, G, R=256), sequential_conjugacy(G, F, R=512))


def test_threshold_exceeded():
    with pytest.raises(StabilityThresholdExceeded):
        sequential_conjugacy(F, MapSequence.constant(circle_map(2, sin=(0.3,))), R=64)


def test_incompatible_spaces():
    with pytest.raises(IncompatiblePhaseSpaces):
        sequential_conjugacy(F, MapSequence.constant(cat_map()), R=64)


def test_rejects_non_power_of_two_grid():
    with pytest.raises(ValueError):
        sequential_conjugacy(F, G, R=100)


def test_torus_conjugacy():
    C = MapSequence.constant(cat_map())
    P = MapSequence.constant(cat_map(0.005))
    h = sequential_conjugacy(C, P, R=16)
    assert h.residual < 1e-10
    assert h.sup_dist_to_identity < 0.05


@pytest.mark.parametrize("amp", [0.02, 0.01])
def test_quasi_conjugacy_bound(amp):
    Gq = MapSequence.periodic([circle_map(2, sin=(0.03 + amp / 6.3,), shift=0.01), circle_map(2, cos=(amp / 6.3,))])
    rep = quasi_conjugacy_expanding(FP, Gq, R=1024, depth=40, n_max=10)
    assert rep.ok
    assert rep.eps == pytest.approx(seq_distance(FP, Gq))
    assert rep.defect <= 2 * rep.lam * rep.eps / (1 - rep.lam) + 1e-12


def test_quasi_conjugacy_admissibility():
    with pytest.raises(AdmissibilityViolated):
        quasi_conjugacy_expanding(F, MapSequence.constant(circle_map(2, sin=(0.2,))), R=64)


def test_boundary_itinerary():
    with pytest.raises(BoundaryItinerary):
        itinerary(doubling(), np.array([0.5 + 1e-15]), 3)


def test_conjugacy_distances_decay():
    tail = MapSequence.convergent_tail(doubling(), CircleField(sin=(1 / (2 * np.pi),)), DecayLaw.geometric(0.05, 0.5))
    d = conjugacy_distances(tail, 40, R=256, terms=8)
    lam = tail.shift(1).lam
    bound = np.array([lam / (1 - lam) * tail_decay(tail, j) for j in range(40)])
    assert np.all(d <= bound + 1e-12)
    assert d[-1] < 1e-9
