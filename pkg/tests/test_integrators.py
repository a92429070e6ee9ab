import math

import numpy as np
import pytest

from periodica.core import IntegrationBlowupError, SdeSpec, TimeGrid, make_noise
from periodica.integrators import IntegratorConfig, integrate, integrate_exponential
from periodica.pipeline import log2_slope
from periodica.problems import gbm


def _zero_g(t, x):
    return np.zeros(x.shape + (1,))


def test_em_deterministic_linear_matches_closed_form():
    # x' = -x, EM gives (1 - dt)^N exactly
    spec = SdeSpec(lambda t, x: -x, _zero_g, 1, 1, 1.0)
    grid = TimeGrid.over_period(1.0, 100)
    noise = make_noise(0, 3, grid, 1)
    x = integrate(spec, np.ones((3, 1)), noise, grid)
    np.testing.assert_allclose(x.final(), (1 - 0.01) ** 100)


def test_exponential_euler_exact_for_constant_forcing():
    # du = (2 - 3u) dt, exact u(t) = 2/3 + (u0 - 2/3) e^{-3t}
    grid = TimeGrid.over_period(1.0, 7)
    noise = make_noise(0, 2, grid, 1)
    u = integrate_exponential(3.0, lambda t, k, u: 2.0, _zero_g, np.zeros((2, 1)), noise, grid)
    expect = 2 / 3 * (1 - np.exp(-3 * grid.times))
    np.testing.assert_allclose(u.values[0, :, 0], expect, rtol=1e-12)


def test_exponential_requires_positive_rate():
    grid = TimeGrid.over_period(1.0, 4)
    noise = make_noise(0, 2, grid, 1)
    with pytest.raises(ValueError):
        integrate_exponential(0.0, lambda t, k, u: 0.0, _zero_g, np.zeros((2, 1)), noise, grid)


def test_shape_and_dimension_checks():
    spec, _ = gbm()
    grid = TimeGrid.over_period(1.0, 4)
    with pytest.raises(ValueError):
        integrate(spec, np.ones((3, 1)), make_noise(0, 2, grid, 1), grid)
    with pytest.raises(ValueError):
        integrate(spec, np.ones((2, 1)), make_noise(0, 2, grid, 2), grid)
    with pytest.raises(ValueError):
        integrate(spec, np.ones((2, 1)), make_noise(0, 2, TimeGrid.over_period(1.0, 8), 1), grid)


def test_blowup_reports_path_and_step():
    spec = SdeSpec(lambda t, x: x**3, _zero_g, 1, 1, 1.0)
    grid = TimeGrid.over_period(1.0, 50)
    noise = make_noise(0, 2, grid, 1)
    with pytest.raises(IntegrationBlowupError) as info, np.errstate(over="ignore", invalid="ignore"):
        integrate(spec, np.array([[0.1], [100.0]]), noise, grid)
    assert info.value.path == 1


def test_clamp_bounds_coefficient_argument_only():
    spec = SdeSpec(lambda t, x: x, _zero_g, 1, 1, 1.0)
    grid = TimeGrid.over_period(1.0, 10)
    noise = make_noise(0, 1, grid, 1)
    cfg = IntegratorConfig(clamp_box=(np.array([-1.0]), np.array([1.0])))
    x = integrate(spec, np.array([[5.0]]), noise, grid, cfg)
    # drift sees 1.0 every step: x grows linearly by dt
    np.testing.assert_allclose(x.final(), 6.0)
    assert x.provenance["clamped"] == 10


def test_gbm_strong_order_half():
    spec, exact = gbm()
    finest = 512
    noise = make_noise(11, 10_000, TimeGrid(0.0, 1.0, finest), 1)
    ref = exact(1.0, 1.0, noise.brownian()[:, -1, 0])
    dts, errs = [], []
    for n in (64, 128, 256, 512):
        nz = noise.coarsen(finest // n)
        x = integrate(spec, np.ones((10_000, 1)), nz, nz.grid)
        dts.append(1.0 / n)
        errs.append(float(np.mean(np.abs(x.final()[:, 0] - ref))))
    assert abs(log2_slope(dts, errs) - 0.5) <= 0.15
    ratios = [errs[i] / errs[i + 1] for i in range(3)]
    assert all(1.2 <= r <= 1.7 for r in ratios), ratios


def test_gbm_weak_mean():
    spec, _ = gbm(mu=0.5, sigma=0.3)
    grid = TimeGrid(0.0, 1.0, 256)
    x = integrate(spec, np.ones((20_000, 1)), make_noise(2, 20_000, grid, 1), grid).final()[:, 0]
    se = x.std() / math.sqrt(x.size)
    # EM mean is (1 + mu dt)^N exactly in expectation
    assert abs(x.mean() - (1 + 0.5 / 256) ** 256) < 4 * se
