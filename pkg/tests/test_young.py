import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid
from scipy.stats import linregress

from youngreg import fields as F
from youngreg.averaging import SpaceGrid, compute_Gamma, tabulate_driver
from youngreg.paths import FbmSpec, SampledPath, TimeGrid, gen_fbm, holder_seminorm, path_from_values
from youngreg.young import refinement_study, young_integral


@pytest.fixture(scope="module")
def grids():
    grid = TimeGrid(1.0, 256)
    sg = SpaceGrid(1, 3.0, 96)
    return grid, sg


def test_space_independent_telescopes(grids):
    grid, sg = grids
    a = tabulate_driver(lambda t, x: np.full_like(x, np.sin(3 * t)), grid, sg)
    theta = gen_fbm(FbmSpec(0.75, 1, 5), grid)
    res = young_integral(a, theta)
    assert np.max(np.abs(res.path.values[:, 0] - np.sin(3 * grid.times()))) == 0.0
    assert res.germ_residual < 1e-12


def test_smooth_in_time_reduction(grids):
    # A(t, x) = t f(x): the integral approximates the time integral of f(theta)
    grid, sg = grids
    a = tabulate_driver(lambda t, x: t * np.cos(x), grid, sg)
    theta = gen_fbm(FbmSpec(0.75, 1, 5), grid)
    res = young_integral(a, theta)
    ref = np.concatenate([[0.0], cumulative_trapezoid(np.cos(theta.values[:, 0]), dx=grid.dt)])
    assert np.max(np.abs(res.path.values[:, 0] - ref)) < 5.0 * grid.dt


def test_integral_starts_at_zero_and_additivity(grids):
    grid, sg = grids
    a = tabulate_driver(lambda t, x: t * np.cos(x), grid, sg)
    theta = gen_fbm(FbmSpec(0.75, 1, 5), grid)
    vals = young_integral(a, theta).path.values
    assert np.all(vals[0] == 0.0)
    # Chasles at shared nodes: increments of the cumulative path telescope
    i, j, k = 17, 100, 256
    lhs = (vals[j] - vals[i]) + (vals[k] - vals[j])
    assert np.max(np.abs(lhs - (vals[k] - vals[i]))) <= 4 * np.spacing(np.max(np.abs(vals)))


def test_linearity_in_driver(grids):
    grid, sg = grids
    a1 = tabulate_driver(lambda t, x: t * np.cos(x), grid, sg)
    a2 = tabulate_driver(lambda t, x: np.sin(t) * x, grid, sg)
    both = tabulate_driver(lambda t, x: t * np.cos(x) + np.sin(t) * x, grid, sg)
    theta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    i1 = young_integral(a1, theta).path.values
    i2 = young_integral(a2, theta).path.values
    i12 = young_integral(both, theta).path.values
    assert np.max(np.abs(i1 + i2 - i12)) < 1e-12


def test_level_refinement_validation(grids):
    grid, sg = grids
    a = tabulate_driver(lambda t, x: t * x, grid, sg)
    theta_fine = gen_fbm(FbmSpec(0.75, 1, 5), grid.refine(4))
    res = young_integral(a, theta_fine, level=2)
    assert res.path.grid.n_steps == 1024
    with pytest.raises(ValueError):
        young_integral(a, theta_fine, level=1)
    with pytest.raises(ValueError):
        young_integral(a, gen_fbm(FbmSpec(0.75, 1, 5), TimeGrid(1.0, 100)))


def test_germ_remainder_rate():
    # A(t, x) = t^gamma x is (gamma, 1)-regular; theta is nu-regular:
    # remainder decays at least like |t-s|^(gamma + nu) up to estimator slack
    gamma, hurst = 0.8, 0.75
    grid = TimeGrid(1.0, 1 << 11)
    sg = SpaceGrid(1, 3.0, 64)
    a = tabulate_driver(lambda t, x: t**gamma * x, grid, sg)
    theta = gen_fbm(FbmSpec(hurst, 1, 3), grid)
    fine = young_integral(a, theta).path.values
    nu = hurst - 0.05
    lags, residuals = [], []
    for lag in (8, 16, 32, 64, 128, 256):
        starts = np.arange(0, grid.n_steps - lag + 1, lag)[:24]
        worst = 0.0
        for i0 in starts:
            inc = fine[i0 + lag] - fine[i0]
            germ = a.eval_increment(i0, i0 + lag, theta.values[i0][None, :])[0]
            worst = max(worst, float(np.abs(inc - germ).max()))
        lags.append(lag * grid.dt)
        residuals.append(worst)
    fit = linregress(np.log(lags), np.log(residuals))
    assert fit.slope >= gamma + nu - 0.15


def test_refinement_smooth_first_order():
    grid = TimeGrid(1.0, 128)
    sg = SpaceGrid(1, 3.0, 96)
    a = tabulate_driver(lambda t, x: t * np.cos(x), grid, sg)
    fine_grid = grid.refine(16)
    theta = path_from_values(fine_grid, np.sin(2 * fine_grid.times()))
    study = refinement_study(a, theta, levels=4)
    assert study["rate"] >= 1.0 - 0.1
    assert study["r2"] > 0.99


def test_refinement_space_independent_zero():
    grid = TimeGrid(1.0, 128)
    sg = SpaceGrid(1, 3.0, 96)
    a = tabulate_driver(lambda t, x: np.full_like(x, np.sin(3 * t)), grid, sg)
    theta = gen_fbm(FbmSpec(0.7, 1, 2), grid.refine(16))
    study = refinement_study(a, theta, levels=4)
    assert all(d <= 1e-14 for d in study["deltas"])


def test_refinement_gamma_driver_rate_convention():
    # driver built from germ sums: observed rate at least the first-order one
    base = TimeGrid(1.0, 256)
    sg = SpaceGrid(1, 2.5, 64)
    w = gen_fbm(FbmSpec(0.6, 1, 7), base)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), base)
    a = compute_Gamma(F.Smooth("gaussian_bump", width=1.0), w, beta, sg)
    theta = gen_fbm(FbmSpec(0.75, 1, 9), base.refine(8))
    study = refinement_study(a, theta, levels=3)
    assert study["rate"] > 0.0


def test_continuity_in_theta(grids):
    # perturbing theta by h changes the integral by O(h) for a Lipschitz driver
    grid, sg = grids
    a = tabulate_driver(lambda t, x: t * np.sin(x), grid, sg)
    theta = gen_fbm(FbmSpec(0.75, 1, 12), grid)
    base = young_integral(a, theta).path.values
    ratios = []
    for h in (0.1, 0.05, 0.025):
        shifted = SampledPath(grid, theta.values + h)
        pert = young_integral(a, shifted).path.values
        ratios.append(np.max(np.abs(pert - base)) / h)
    assert max(ratios) / min(ratios) < 2.0


def test_dimension_mismatch(grids):
    grid, sg = grids
    a = tabulate_driver(lambda t, x: t * x, grid, sg)
    theta2 = gen_fbm(FbmSpec(0.75, 2, 5), grid)
    with pytest.raises(ValueError):
        young_integral(a, theta2)
