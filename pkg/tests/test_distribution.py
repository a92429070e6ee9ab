import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from periodica.core import CoverageError, PathEnsemble, TimeGrid
from periodica.distribution import (
    EmpiricalMeasure,
    OuOracle,
    ks_statistic,
    ks_two_sample,
    law_distance,
    ou_periodic_law,
    periodicity_scan,
    sliced_wasserstein1,
    wasserstein1,
    wasserstein2_squared_1d,
)

samples = arrays(np.float64, st.integers(2, 40), elements=st.floats(-100, 100))


def test_w1_point_masses():
    assert wasserstein1(np.zeros(5), np.ones(5)) == pytest.approx(1.0)


def test_w1_matches_scipy_equal_sizes():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=500), rng.gamma(2.0, size=500)
    assert wasserstein1(a, b) == pytest.approx(stats.wasserstein_distance(a, b), rel=1e-12)


def test_w1_unequal_sizes_close_to_scipy():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=3000), rng.normal(0.5, 1.0, size=2000)
    assert wasserstein1(a, b) == pytest.approx(stats.wasserstein_distance(a, b), abs=5e-3)


@given(samples, samples)
def test_w1_symmetric_nonnegative(a, b):
    d = wasserstein1(a, b)
    assert d >= 0
    assert d == pytest.approx(wasserstein1(b, a), abs=1e-9)


@given(st.integers(2, 30), st.integers(0, 2**31 - 1))
def test_w1_triangle_inequality(n, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=(3, n)) * rng.uniform(0.1, 5, size=(3, 1))
    assert wasserstein1(a, c) <= wasserstein1(a, b) + wasserstein1(b, c) + 1e-9


@given(samples, st.floats(-50, 50))
def test_w1_translation(a, shift):
    assert wasserstein1(a, a + shift) == pytest.approx(abs(shift), abs=1e-7)


def test_sliced_w1_translation_in_2d():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1000, 2))
    # sliced W1 of a shift by v is the mean of |<u, v>| over the projections
    d = sliced_wasserstein1(x, x + np.array([1.0, 0.0]))
    assert 0.5 < d < 0.8
    assert law_distance(x, x + np.array([1.0, 0.0])) == pytest.approx(1.0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        wasserstein1(np.zeros((4, 1)), np.zeros((4, 2)))


def test_measure_validation_and_csv_round_trip(tmp_path):
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([1.0]))
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([1.0, np.nan]))
    m = EmpiricalMeasure(np.random.default_rng(0).normal(size=(10, 2)))
    m.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "x_1,x_2"
    np.testing.assert_array_equal(EmpiricalMeasure.from_csv(tmp_path / "m.csv").samples, m.samples)


def test_ks_matches_scipy():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=700), rng.normal(0.1, 1.0, size=900)
    assert ks_statistic(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic)


def test_ks_accepts_same_law_rejects_shift():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(2, 4096))
    assert ks_two_sample(a, b)[1]
    assert not ks_two_sample(a, b + 0.2)[1]
    with pytest.raises(ValueError):
        ks_two_sample(a, b, coordinate=1)


def test_w2_squared_of_shift():
    a = np.random.default_rng(5).normal(size=100)
    assert wasserstein2_squared_1d(a, a + 0.3) == pytest.approx(0.09)


def _ou_mean(a, t):
    w = 2 * math.pi
    return (a * math.sin(w * t) - w * math.cos(w * t)) / (a * a + w * w)


@pytest.mark.parametrize("a", [0.5, 1.0, 4.0])
def test_ou_oracle_closed_form(a):
    oracle = OuOracle(a, 0.5, lambda s: np.sin(2 * np.pi * s), 1.0)
    for t in (0.0, 0.13, 0.5, 0.99, 3.25):
        mean, var = ou_periodic_law(oracle, t)
        assert mean == pytest.approx(_ou_mean(a, t), abs=1e-10)
        assert var == pytest.approx(0.25 / (2 * a))


def test_ou_oracle_periodic_and_validated():
    oracle = OuOracle(1.0, 0.5, lambda s: np.cos(2 * np.pi * s) + 0.3, 1.0)
    assert ou_periodic_law(oracle, 0.2)[0] == pytest.approx(ou_periodic_law(oracle, 1.2)[0], abs=1e-12)
    with pytest.raises(ValueError):
        OuOracle(0.0, 1.0, np.sin, 1.0)


def test_periodicity_scan_needs_two_periods():
    grid = TimeGrid.over_period(1.0, 8)
    with pytest.raises(CoverageError):
        periodicity_scan(PathEnsemble(grid, np.zeros((4, 9, 1))), 1.0)


def test_periodicity_scan_detects_non_periodic_drift():
    grid = TimeGrid.over_period(1.0, 8, 3)
    rng = np.random.default_rng(0)
    base = rng.normal(size=(200, 1, 1))
    periodic = np.broadcast_to(base, (200, 25, 1)).copy()
    profile, mx = periodicity_scan(PathEnsemble(grid, periodic), 1.0, n_probes=5)
    assert mx == 0.0 and profile.shape == (5, 2)
    drifting = periodic + grid.times[None, :, None]
    assert periodicity_scan(PathEnsemble(grid, drifting), 1.0)[1] == pytest.approx(1.0)
