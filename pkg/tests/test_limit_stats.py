import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from seqdyn.errors import DegenerateVariance, NotMeanZero, ParameterOutOfRange, RatePreconditionUnchecked
from seqdyn.limit_stats import (
    SeriesStats,
    asip_rate_schedule,
    clt_check,
    log_checkpoints,
    partial_sum_ensemble,
    pathwise_drift,
    rate_admissible,
    sigma_green_kubo,
)
from seqdyn.phase_maps import CircleField, DecayLaw, MapSequence, Observable, doubling

D = MapSequence.constant(doubling())
COS = Observable.trig((1.0,), ())
TAIL = MapSequence.convergent_tail(doubling(), CircleField(sin=(1 / (2 * math.pi),)), DecayLaw.geometric(0.05, 0.5))


def _quadrature_sigma2(phi: Observable, lag_max: int) -> float:
    """c_0 + 2 sum c_j with c_j = int phi(x) phi(2^j x) dx by adaptive quadrature."""
    c = []
    for j in range(lag_max + 1):
        val, _ = quad(lambda x: float(phi(x) * phi((2**j * x) % 1.0)), 0.0, 1.0, limit=400)
        c.append(val)
    return c[0] + 2 * sum(c[1:])


@pytest.mark.parametrize(
    "coeffs, expected",
    [((1.0,), 0.5), ((1.0, 1.0), 2.0), ((-1.0, 1.0), 0.0)],
)
def test_green_kubo_matches_quadrature(coeffs, expected):
    phi = Observable.trig(coeffs, ())
    assert _quadrature_sigma2(phi, 4) == pytest.approx(expected, abs=1e-9)
    gk = sigma_green_kubo(doubling(), phi, n_samples=1 << 18, lag_max=8, seed=1)
    assert abs(gk.sigma2 - expected) < max(5 * gk.stderr, 0.02)
    assert float(gk) == gk.sigma2


def test_green_kubo_zero_observable():
    gk = sigma_green_kubo(doubling(), Observable.trig((), ()), n_samples=1 << 15, lag_max=4)
    assert gk.sigma2 == 0.0


def test_green_kubo_rejects_nonzero_mean():
    with pytest.raises(NotMeanZero):
        sigma_green_kubo(doubling(), Observable.trig((1.0,), (), 0.5), n_samples=1 << 15, lag_max=4)


def test_green_kubo_thread_independent():
    a = sigma_green_kubo(doubling(), COS, n_samples=1 << 21, lag_max=4, seed=3, threads=1)
    b = sigma_green_kubo(doubling(), COS, n_samples=1 << 21, lag_max=4, seed=3, threads=2)
    assert a.sigma2 == b.sigma2 and np.array_equal(a.lags, b.lags)


def _synthetic(sigma2, n=100, size=2000, seed=0):
    z = np.random.default_rng(seed).normal(size=(size, 1))
    return SeriesStats((n,), z * math.sqrt(sigma2 * n), seed, np.zeros(1))


def test_clt_calibration():
    assert clt_check(_synthetic(0.5), 0.5).passed
    assert not clt_check(_synthetic(0.5), 2.0).passed


def test_clt_needs_ensemble():
    with pytest.raises(ValueError):
        clt_check(_synthetic(0.5, size=100), 0.5)


def test_clt_degenerate_branch():
    rep = clt_check(_synthetic(1e-4), 1e-4)
    assert rep.degenerate and rep.passed
    big = _synthetic(1.0)
    assert not clt_check(big, 1e-4).passed
    with pytest.raises(DegenerateVariance):
        clt_check(big, 1e-4, strict=True)


def test_log_checkpoints():
    assert log_checkpoints(1000) == (64, 128, 256, 512, 1000)
    assert log_checkpoints(64) == (64,)


def test_rate_admissible():
    assert rate_admissible(D)
    assert rate_admissible(TAIL)
    slow = MapSequence.convergent_tail(doubling(), CircleField(sin=(0.01,)), DecayLaw.power(0.5, 0.4))
    fast = MapSequence.convergent_tail(doubling(), CircleField(sin=(0.01,)), DecayLaw.power(0.5, 1.6))
    assert not rate_admissible(slow)
    assert rate_admissible(fast)


def test_partial_sums_warn_without_rate():
    slow = MapSequence.convergent_tail(doubling(), CircleField(sin=(0.01,)), DecayLaw.power(0.5, 0.4))
    with pytest.warns(RatePreconditionUnchecked):
        partial_sum_ensemble(slow, COS, 128, 4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        partial_sum_ensemble(TAIL, COS, 128, 4)


def test_partial_sums_thread_and_group_independent():
    a = partial_sum_ensemble(TAIL, COS, 5000, 300, seed=2, threads=1)
    b = partial_sum_ensemble(TAIL, COS, 5000, 300, seed=2, threads=2)
    assert np.array_equal(a.sums, b.sums)
    assert a.checkpoints[-1] == 5000
    # other checkpoint splits and ensemble sizes (hence groupings) give the same members
    c = partial_sum_ensemble(TAIL, COS, 5000, 300, seed=2, checkpoints=[5000])
    assert np.array_equal(a.sums[:, -1], c.sums[:, 0])
    d = partial_sum_ensemble(TAIL, COS, 5000, 10, seed=2)
    assert np.array_equal(a.sums[:10], d.sums)


def test_clt_on_doubling():
    stats = partial_sum_ensemble(D, COS, 1 << 12, 600, seed=5)
    rep = clt_check(stats, 0.5)
    assert rep.passed
    assert rep.sample_variance[-1] == pytest.approx(0.5, rel=0.2)


def test_coboundary_collapses():
    phi = Observable.trig((-1.0, 1.0), ())  # cos(4 pi x) - cos(2 pi x) = chi o f - chi
    stats = partial_sum_ensemble(D, phi, 1 << 12, 500, seed=6)
    rep = clt_check(stats, 0.0, strict=True)
    assert rep.degenerate and rep.passed
    # S_n = chi(f^n x) - chi(x) has variance 1, so S_n / sqrt(n) has variance about 1/n
    assert rep.sample_variance[-1] < 2.0 / (1 << 12)


def test_rate_schedule_values():
    rs = asip_rate_schedule(1.0, 0.1, 1.0, 1 << 16)
    assert rs.a[3] == pytest.approx(4 ** -0.6, rel=1e-12)
    assert rs.a[3] == pytest.approx(0.4353, abs=1e-4)
    assert abs(rs.exponent - 0.4) < 0.02
    assert rs.within_budget and not rs.boundary
    half = asip_rate_schedule(1.0, 0.1, 0.5, 1 << 12)
    assert half.a[1] == pytest.approx(2 ** -1.2)
    assert asip_rate_schedule(1.0, 0.48, 1.0, 1 << 12).boundary


@pytest.mark.parametrize("args", [(1.0, 0.0, 1.0, 64), (1.0, 0.5, 1.0, 64), (1.0, 0.1, 1.5, 64), (0.0, 0.1, 1.0, 64), (1.0, 0.1, 1.0, 8)])
def test_rate_schedule_ranges(args):
    with pytest.raises(ParameterOutOfRange):
        asip_rate_schedule(*args)


def test_pathwise_drift_within_budget():
    pd = pathwise_drift(TAIL, COS, 256, count=16)
    assert pd.ok and pd.max_gap > 0
    same = pathwise_drift(MapSequence.convergent_tail(doubling(), CircleField(sin=(0.01,)), DecayLaw()), COS, 64, count=4)
    assert same.max_gap < 1e-9
