import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seqdyn.errors import DefectTooLarge, NonConvergence, TruncationDominates
from seqdyn.phase_maps import MapSequence, cat_map, circle_map, dist, doubling, swrap, wrap
from seqdyn.shadowing import (
    PseudoOrbit,
    expanding_bound,
    expansiveness_constant,
    expansiveness_probe,
    hyperbolic_splitting,
    lipschitz_fit,
    perturbed_orbit,
    shadow_anosov,
    shadow_expanding,
    two_sided_shadow,
)

DOUBLING = MapSequence.constant(doubling())
PERTURBED = MapSequence.constant(circle_map(2, sin=(0.05,)))
CAT = MapSequence.constant(cat_map())
PHI = (1 + math.sqrt(5)) / 2


def _preimage_oracle(p: PseudoOrbit, D: int) -> float:
    """Exhaustive search over the 2^D preimages of x_D under the D-fold doubling."""
    cand = (p.points[D] + np.arange(2**D)) / 2**D
    worst = np.zeros_like(cand)
    y = cand.copy()
    for n in range(D + 1):
        worst = np.maximum(worst, dist(y, p.points[n]))
        y = np.mod(2 * y, 1.0)
    return float(cand[np.argmin(worst)])


@pytest.mark.parametrize("seed", range(8))
def test_doubling_matches_exhaustive_preimage_search(seed):
    p = perturbed_orbit(DOUBLING, 0.1 + 0.1 * seed, 1e-3, 12, seed=seed)
    res = shadow_expanding(DOUBLING, p)
    assert dist(res.point, _preimage_oracle(p, 12)) < 1e-12
    assert res.certified_unique


@given(st.integers(0, 10_000), st.sampled_from([1e-2, 1e-3, 1e-4]))
def test_expanding_bound_holds(seed, delta):
    p = perturbed_orbit(PERTURBED, 0.3, delta, 200, seed=seed)
    res = shadow_expanding(PERTURBED, p)
    lam = PERTURBED.lam
    assert res.beta <= expanding_bound(lam, p.delta, res.depth) + 1e-12
    assert res.residual < 1e-12
    assert abs(res.recompute_beta(p) - res.beta) < 1e-15


def test_doubling_bound_is_delta():
    # lam / (1 - lam) = 1 at lam = 1/2
    assert expanding_bound(0.5, 1e-3, 500) == pytest.approx(1e-3, abs=1e-12)


def test_nested_pullback_converges_geometrically():
    # the shadow point at depth D+1 lies in the pulled-back ball of depth D
    p = perturbed_orbit(PERTURBED, 0.37, 1e-3, 40, seed=3)
    lam = PERTURBED.lam
    pts = [shadow_expanding(PERTURBED, p, depth=D).point for D in range(1, 41)]
    for D in range(1, 40):
        gap = dist(pts[D], pts[D - 1])
        assert gap <= lam**D * 2 * p.delta / (1 - lam) + 1e-15


def test_zero_noise_returns_true_orbit():
    p = perturbed_orbit(DOUBLING, 0.2, 0.0, 30, seed=0)
    res = shadow_expanding(DOUBLING, p)
    assert res.beta < 1e-15


def test_defect_too_large():
    p = perturbed_orbit(DOUBLING, 0.2, 0.3, 10, seed=0)
    with pytest.raises(DefectTooLarge):
        shadow_expanding(DOUBLING, p)


def test_shadow_result_json_roundtrip():
    import json

    p = perturbed_orbit(DOUBLING, 0.2, 1e-3, 10, seed=0)
    rec = json.loads(shadow_expanding(DOUBLING, p).to_json())
    assert set(rec) == {"point", "beta", "delta", "iterations", "depth", "residual", "certified"}


def _linear_cat_oracle(x: np.ndarray) -> np.ndarray:
    """Closed-form correction for the linear cat map in its golden-ratio eigenbasis."""
    A = np.array([[2.0, 1.0], [1.0, 1.0]])
    eu = np.array([PHI, 1.0]) / math.hypot(PHI, 1.0)
    es = np.array([-1.0, PHI]) / math.hypot(PHI, 1.0)
    P = np.stack([eu, es], axis=1)
    r = swrap(x[:-1] @ A.T - x[1:]) @ np.linalg.inv(P).T
    k = len(r)
    v = np.zeros((k + 1, 2))
    for n in range(k):
        v[n + 1, 1] = v[n, 1] / PHI**2 + r[n, 1]
    for n in range(k - 1, -1, -1):
        v[n, 0] = (v[n + 1, 0] - r[n, 0]) / PHI**2
    return wrap(x + v @ P.T)


def test_linear_cat_matches_closed_form():
    split = hyperbolic_splitting(CAT)
    delta = 0.5 * split.admissible_defect()
    for seed in range(4):
        p = perturbed_orbit(CAT, [0.2, 0.7], delta, 60, seed=seed)
        res = shadow_anosov(CAT, p, split)
        assert np.max(dist(res.orbit, _linear_cat_oracle(p.points), 2)) < 1e-12
        assert res.certified_unique
        assert res.residual < 1e-12
        assert res.beta <= split.dichotomy_constant * p.delta


def test_perturbed_cat_shadows():
    F = MapSequence.constant(cat_map(0.01))
    split = hyperbolic_splitting(F)
    assert split.cone_ok and split.lam_tilde < 1
    p = perturbed_orbit(F, [0.1, 0.4], split.admissible_defect(), 100, seed=5)
    res = shadow_anosov(F, p, split)
    assert res.certified_unique and res.residual < 1e-12


def test_anosov_rejects_large_defect():
    split = hyperbolic_splitting(CAT)
    p = perturbed_orbit(CAT, [0.2, 0.7], 10 * split.admissible_defect(), 20, seed=0)
    with pytest.raises(NonConvergence):
        shadow_anosov(CAT, p, split)


def test_two_sided_truncation_dominates():
    split = hyperbolic_splitting(CAT)
    window = np.zeros((1, 7, 2))
    with pytest.raises(TruncationDominates):
        two_sided_shadow(CAT, window, split, depth=3, tol=1e-12)


def test_expansiveness_probe_doubling():
    # pairs at distance 0.01 need five doublings to reach 0.25
    assert expansiveness_probe(DOUBLING, 0.25, 0.01, grid=256) == 5
    assert expansiveness_constant(DOUBLING) == 0.25


def test_expansiveness_probe_cat_two_sided():
    assert expansiveness_probe(CAT, 0.1, 0.01, grid=64) > 0


def test_lipschitz_fit_thread_independent():
    a = lipschitz_fit(DOUBLING, [1e-2, 1e-3], trials=6, seed=1, length=50, threads=1)
    b = lipschitz_fit(DOUBLING, [1e-2, 1e-3], trials=6, seed=1, length=50, threads=2)
    assert a.rows() == b.rows()
    assert a.slope == pytest.approx(1.0, abs=0.1)
    assert a.failure_fraction == 0 and a.all_certified


def test_lipschitz_fit_zero_noise_is_exact():
    fit = lipschitz_fit(DOUBLING, [0.0], trials=3, length=20)
    assert fit.exact
