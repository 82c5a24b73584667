import math

import numpy as np
import pytest

from seqdyn.entropy import (
    OrbitTable,
    entropy_comparison,
    entropy_estimate,
    orbit_table,
    random_candidates,
    separated_count,
    threshold_index,
)
from seqdyn.errors import GridTooCoarse, InequalityViolated
from seqdyn.phase_maps import (
    CircleField,
    DecayLaw,
    MapSequence,
    cat_map,
    circle_map,
    dist,
    doubling,
    uniform_grid,
)
from seqdyn import _kernels as K

D = MapSequence.constant(doubling())
G = MapSequence.constant(circle_map(2, sin=(0.05,)))
TAIL = MapSequence.convergent_tail(doubling(), CircleField(sin=(1 / (2 * math.pi),)), DecayLaw.geometric(0.05, 0.5))


def _greedy_oracle(F: MapSequence, x: np.ndarray, n: int, eps: float) -> int:
    """Plain O(P * S) greedy: accept a candidate iff it is eps-separated from all accepted."""
    orbits = []
    y = x
    for j in range(n):
        orbits.append(y)
        y = F.at(j)(y)
    orbits = np.stack(orbits, axis=1)  # time on axis 1
    kept = []
    for i in range(len(x)):
        ok = True
        for k in kept:
            if np.max(dist(orbits[i], orbits[k], F.dim)) <= eps:
                ok = False
                break
        if ok:
            kept.append(i)
    return len(kept)


@pytest.mark.parametrize(
    "F, n, eps",
    [(D, 4, 1 / 16), (D, 6, 1 / 8), (G, 5, 0.07), (TAIL, 5, 0.1)],
)
def test_greedy_matches_oracle_circle(F, n, eps):
    x = uniform_grid(256)
    expected = _greedy_oracle(F, x, n, eps)
    assert separated_count(F, n, eps, candidates=256) == expected


def test_pruning_does_not_change_count():
    table = orbit_table(G, 8, 1024)
    bare = OrbitTable(table.points, table.spacing, table.dim)  # no contraction data: no pruning
    for n, eps in [(3, 0.05), (6, 0.02), (8, 0.1)]:
        pruned = separated_count(G, n, eps, table=table)
        full = int(K.greedy_separated(bare.points[:, :n], eps, 1.0, 1))
        assert pruned == full


def test_greedy_matches_oracle_torus():
    C = MapSequence.constant(cat_map())
    x = random_candidates(400, 2, seed=3)
    expected = _greedy_oracle(C, x, 3, 0.2)
    assert separated_count(C, 3, 0.2, candidates=x) == expected


def test_doubling_count_frozen():
    # strict separation loses the dyadic ties of the 4096-point lattice
    assert separated_count(D, 10, 1 / 8, candidates=1 << 20) == 4080


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        separated_count(D, 3, 0.01, candidates=256)


def test_random_candidates_seeded():
    a = random_candidates(100, 2, seed=1)
    assert np.array_equal(a, random_candidates(100, 2, seed=1))
    assert a.shape == (100, 2)
    assert random_candidates(10, 1, seed=0).shape == (10,)


def test_entropy_estimate_doubling():
    est = entropy_estimate(D, [1 / 8, 1 / 16], range(4, 10), candidates=1 << 16)
    assert abs(est.estimate - math.log(2)) < 0.05
    assert est.counts.shape == (2, 6)
    assert np.all(np.diff(est.counts, axis=1) >= 0)


def test_entropy_estimate_schedules_validated():
    with pytest.raises(ValueError):
        entropy_estimate(D, [1 / 16, 1 / 8], [2, 3], candidates=1024)
    with pytest.raises(ValueError):
        entropy_estimate(D, [1 / 8], [3, 2], candidates=1024)


def test_counts_monotone_in_n_and_eps():
    table = orbit_table(G, 8, 4096)
    c = [[separated_count(G, n, e, table=table) for n in range(1, 9)] for e in (0.1, 0.05)]
    assert all(a <= b for row in c for a, b in zip(row, row[1:]))
    assert all(a <= b for a, b in zip(c[0], c[1]))


def test_threshold_index():
    assert threshold_index(MapSequence.constant(doubling()), 0.1, horizon=8, R=256) == 0
    assert threshold_index(TAIL, 0.01, horizon=32, R=256) > 0


def test_comparison_small():
    rep = entropy_comparison(TAIL, doubling(), 0.1, [4, 6, 8], candidates=1 << 14)
    assert rep.ok
    assert np.all(rep.margins() >= 0)


def test_comparison_strict_raises():
    # a degree-64 first map separates far faster than the limit before the threshold index
    far = MapSequence.convergent_tail(
        doubling(), CircleField(sin=(1 / (2 * math.pi),)), DecayLaw.geometric(0.05, 0.5), leading=[circle_map(64)]
    )
    rep = entropy_comparison(far, doubling(), 0.1, [2, 3], N_eps=0, candidates=1 << 12)
    assert rep.forward_ok and not rep.reciprocal_ok
    with pytest.raises(InequalityViolated):
        entropy_comparison(far, doubling(), 0.1, [2, 3], N_eps=0, candidates=1 << 12, strict=True)
