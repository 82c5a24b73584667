from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ks_2samp

from seqdyn.conjugacy import sequential_conjugacy
from seqdyn.errors import DegenerateObservable, EmptyList, GridMismatch
from seqdyn.ergodic import (
    EmpiricalMeasure,
    average_invariance_defect,
    birkhoff_average,
    block_schedule,
    coded_orbit,
    empirical_measure,
    irregular_point,
    ks_to_uniform,
    measure_distance,
    periodic_limit_measure,
    program_digits,
    pushforward,
    random_digits,
    typical_ensemble,
)
from seqdyn.phase_maps import MapSequence, Observable, circle_map, dist, doubling

D = MapSequence.constant(doubling())
COS = Observable.trig((1.0,), ())


def _kuiper_oracle(a, b) -> float:
    """Half the Kuiper statistic from scipy's one-sided two-sample KS statistics."""
    up = ks_2samp(a, b, alternative="greater").statistic
    down = ks_2samp(a, b, alternative="less").statistic
    return 0.5 * float(up + down)


def _cut_oracle(a, b) -> float:
    """Minimum over cut points (every sample) of the two-sample KS statistic."""
    best = np.inf
    for c in np.concatenate([a, b, [0.0]]):
        best = min(best, ks_2samp(np.mod(a - c, 1.0), np.mod(b - c, 1.0)).statistic)
    return float(best)


# dyadic atoms keep ties (the interesting case for atomic measures) and exact wrap-around
samples = st.lists(st.integers(0, 63).map(lambda k: k / 64), min_size=1, max_size=12)


# only the statistic is used; scipy's p-value code warns on tiny samples
@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@given(samples, samples)
def test_distance_matches_kuiper_oracle(a, b):
    a, b = np.array(a), np.array(b)
    got = measure_distance(EmpiricalMeasure.from_samples(a), EmpiricalMeasure.from_samples(b))
    assert got == pytest.approx(_kuiper_oracle(a, b), abs=1e-12)
    # sandwiched by the cut-minimized KS gap
    assert got <= _cut_oracle(a, b) + 1e-12 <= 2 * got + 2e-12


@given(samples, samples, samples)
def test_distance_is_a_pseudometric(a, b, c):
    m = [EmpiricalMeasure.from_samples(np.array(v)) for v in (a, b, c)]
    assert measure_distance(m[0], m[0]) == 0.0
    assert measure_distance(m[0], m[1]) == pytest.approx(measure_distance(m[1], m[0]), abs=1e-15)
    assert measure_distance(m[0], m[2]) <= measure_distance(m[0], m[1]) + measure_distance(m[1], m[2]) + 1e-12


def test_point_mass_distances():
    d0 = EmpiricalMeasure.point_mass(0.0)
    assert measure_distance(d0, EmpiricalMeasure.point_mass(0.5)) == pytest.approx(0.5)
    assert measure_distance(EmpiricalMeasure.uniform(1), d0) == pytest.approx(0.5)


def test_dimension_mismatch():
    with pytest.raises(GridMismatch):
        measure_distance(EmpiricalMeasure.uniform(1), EmpiricalMeasure.uniform(2))


def test_histogram_agrees_with_samples():
    x = np.random.default_rng(0).random(50_000)
    h = EmpiricalMeasure.from_histogram(np.histogram(x, bins=512, range=(0, 1))[0])
    assert abs(ks_to_uniform(h) - ks_to_uniform(EmpiricalMeasure.from_samples(x))) < 2 / 512


def test_rational_orbit_exact():
    avg = birkhoff_average(D, COS, Fraction(1, 3), 1000)
    assert np.allclose(avg, -0.5, atol=1e-15)
    with pytest.raises(TypeError):
        birkhoff_average(MapSequence.constant(circle_map(2, sin=(0.05,))), COS, Fraction(1, 3), 10)


def test_reseeded_orbit_is_lebesgue_typical():
    mu = empirical_measure(D, 0.123, 200_000, seed=1)
    assert ks_to_uniform(mu) < 0.005
    avg = birkhoff_average(D, COS, 0.123, 200_000, seed=1)
    assert abs(avg[-1]) < 0.01


def test_birkhoff_deterministic():
    a = birkhoff_average(D, COS, 0.3, 10_000, seed=4)
    b = birkhoff_average(D, COS, 0.3, 10_000, seed=4)
    assert np.array_equal(a, b)


def test_coded_orbit_is_an_orbit():
    g = circle_map(2, sin=(0.05,))
    G = MapSequence.constant(g)
    digits = random_digits(2, 200 + 48, 0, 0)
    pts = coded_orbit(G, digits, 200)
    assert np.max(dist(g(pts[:-1]), pts[1:])) < 1e-12
    with pytest.raises(ValueError):
        coded_orbit(G, digits[:100], 200)


def test_typical_ensemble_thread_independent():
    G = MapSequence.constant(circle_map(2, sin=(0.05,)))
    a, _ = typical_ensemble(G, COS, 5000, 6, seed=2, threads=1)
    b, _ = typical_ensemble(G, COS, 5000, 6, seed=2, threads=3)
    assert np.array_equal(a, b)


def test_invariance_defect_small_for_lebesgue():
    mu = EmpiricalMeasure.from_samples(np.random.default_rng(0).random(20_000))
    assert average_invariance_defect(D, mu, 4) < 0.02


def test_pushforward_by_identity():
    h = sequential_conjugacy(D, D, R=256)
    mu = EmpiricalMeasure.from_samples(np.random.default_rng(1).random(1000))
    assert measure_distance(pushforward(h, mu), mu) < 1e-12


def test_periodic_limit_measure():
    with pytest.raises(EmptyList):
        periodic_limit_measure([], EmpiricalMeasure.uniform(1))
    h = sequential_conjugacy(D, D, R=256)
    mu = EmpiricalMeasure.from_samples(np.linspace(0, 1, 100, endpoint=False))
    assert measure_distance(periodic_limit_measure([h, h], mu), mu) < 1e-12


def test_block_schedule():
    blocks = block_schedule(2000, growth=4)
    assert [L for _, L in blocks] == [1, 4, 16, 64, 256, 1024, 4096]
    assert [p for p, _ in blocks[:3]] == ["0", "01", "0"]
    assert program_digits(blocks, 8).tolist() == [0, 0, 1, 0, 1, 0, 0, 0]
    with pytest.raises(ValueError):
        block_schedule(10, growth=1)


def test_irregular_point_oscillates():
    p = irregular_point(COS, trace_len=100_000)
    assert p.fixed_average == 1.0 and p.period2_average == pytest.approx(-0.5)
    assert p.limsup >= 0.9 and p.liminf <= -0.4


def test_irregular_point_degenerate():
    with pytest.raises(DegenerateObservable):
        irregular_point(Observable.trig((), (), 1.0), trace_len=1000)
