import numpy as np
import pytest

from youngreg import fields as F
from youngreg.averaging import SpaceGrid, compute_Gamma, compute_T, tabulate_driver
from youngreg.paths import FbmSpec, SampledPath, TimeGrid, gen_fbm, sub_paths, zero_path
from youngreg.yde import (
    PicardError,
    SolveConfig,
    Strategy,
    apriori_check,
    compare_solutions,
    euler_self_refinement_error,
    probe_uniqueness,
    random_initial_ensemble,
    residual,
    solve_classical_young_sde,
    solve_flow,
    solve_sde,
    solve_yde,
)


@pytest.fixture(scope="module")
def base():
    grid = TimeGrid(1.0, 256)
    sg = SpaceGrid(1, 3.0, 96)
    return grid, sg


def test_constant_velocity_driver_exact(base):
    grid, sg = base
    a = tabulate_driver(lambda t, x: np.full_like(x, 1.7 * t), grid, sg)
    th = solve_yde(a, 0.3)
    assert np.max(np.abs(th.values[:, 0] - (0.3 + 1.7 * grid.times()))) < 1e-13
    assert th.meta["residual"] < 1e-13


def test_linear_decay_euler_first_order(base):
    grid, sg = base
    a = tabulate_driver(lambda t, x: -t * x, grid, sg)
    exact = np.exp(-grid.times())
    err1 = np.max(np.abs(solve_yde(a, 1.0).values[:, 0] - exact))
    err2 = np.max(np.abs(solve_yde(a, 1.0, SolveConfig(substeps=2)).values[::2, 0] - exact))
    assert err1 < 5 * grid.dt
    assert 1.6 < err1 / err2 < 2.4


def test_picard_matches_euler_fixed_point(base):
    grid, sg = base
    a = tabulate_driver(lambda t, x: -t * x, grid, sg)
    te = solve_yde(a, 1.0)
    tp = solve_yde(a, 1.0, SolveConfig(scheme="picard", picard_tol=1e-12))
    assert te.sup_distance(tp) < 5e-12
    assert tp.meta["picard_iterations"] > 1


def test_picard_nonconvergence_carries_iterate(base):
    grid, sg = base
    a = tabulate_driver(lambda t, x: -t * x, grid, sg)
    with pytest.raises(PicardError) as exc:
        solve_yde(a, 1.0, SolveConfig(scheme="picard", picard_max_iter=2, picard_tol=1e-14))
    assert exc.value.iterate.values.shape == (257, 1)
    assert exc.value.residual > 0


def test_solve_sde_zero_field(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    x = solve_sde(F.Smooth("constant", value=0.0), w, beta, 1.0, space_grid=sg)
    assert np.max(np.abs(x.values[:, 0] - (1.0 + w.values[:, 0]))) < 1e-13


def test_solve_sde_constant_field_exact(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    expect = 1.0 + 1.3 * beta.values[:, 0] + w.values[:, 0]
    for solver in (solve_sde, solve_classical_young_sde):
        kw = {"space_grid": sg} if solver is solve_sde else {}
        x = solver(F.Smooth("constant", value=1.3), w, beta, 1.0, **kw)
        assert np.max(np.abs(x.values[:, 0] - expect)) < 1e-12


def test_solve_sde_with_drift_constant(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    x = solve_sde(F.Smooth("constant", value=2.0), w, beta, 0.0, space_grid=sg,
                  drift=F.Smooth("constant", value=1.0))
    expect = grid.times() + 2.0 * beta.values[:, 0] + w.values[:, 0]
    assert np.max(np.abs(x.values[:, 0] - expect)) < 1e-12


def test_averaged_equals_classical_ode_euler_for_affine_field(base):
    # driver from germ sums with beta = t and affine b: interpolation is exact,
    # the averaged Euler recursion is the classical ODE Euler step for b(x + w)
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    tpath = SampledPath(grid, grid.times()[:, None])
    a = compute_Gamma(F.Smooth("identity"), w, tpath, sg)
    th = solve_yde(a, 0.2)
    x = np.empty(grid.n_steps + 1)
    x[0] = 0.2
    for k in range(grid.n_steps):
        x[k + 1] = x[k] + (x[k] + w.values[k, 0]) * grid.dt
    assert np.max(np.abs(th.values[:, 0] - x)) < 1e-12


def test_solve_sde_converges_to_classical(base):
    # cross-method consistency under refinement for smooth bounded b: at matched
    # grids the two routes agree to interpolation error (far inside the
    # dt^(2H-1) bound); against a finer classical reference both converge with a
    # positive rate
    n_fine = 1 << 13
    w_f = gen_fbm(FbmSpec(0.6, 1, 17), TimeGrid(1.0, n_fine))
    b_f = gen_fbm(FbmSpec(0.75, 1, 18), TimeGrid(1.0, n_fine))
    bump = F.Smooth("gaussian_bump", width=1.0)
    sg = SpaceGrid(1, 4.0, 512)
    ref = solve_classical_young_sde(bump, w_f, b_f, 0.4)
    dists = []
    for n in (1 << 10, 1 << 11, 1 << 12):
        s = n_fine // n
        w, beta = w_f.restrict(s), b_f.restrict(s)
        xa = solve_sde(bump, w, beta, 0.4, space_grid=sg)
        xc = solve_classical_young_sde(bump, w, beta, 0.4)
        assert xa.sup_distance(xc) <= (1.0 / n) ** (2 * 0.75 - 1)
        dists.append(float(np.max(np.abs(xa.values[:, 0] - ref.values[::s, 0]))))
    assert dists[0] > dists[1] > dists[2]
    from scipy.stats import linregress

    fit = linregress(np.log2([1 << 10, 1 << 11, 1 << 12]), np.log2(dists))
    assert -fit.slope > 0.2


def test_flow_translation_and_linear(base):
    grid, sg = base
    a = tabulate_driver(lambda t, x: np.full_like(x, 0.9 * t), grid, sg)
    flow = solve_flow(a, np.linspace(-1, 1, 9))
    assert np.nanmax(np.abs(flow.d_dtheta0 - 1.0)) < 1e-10
    assert flow.lipschitz_constant() == pytest.approx(1.0, abs=1e-10)
    a2 = tabulate_driver(lambda t, x: -t * x, grid, sg)
    flow2 = solve_flow(a2, np.linspace(-1, 1, 9))
    # d theta_T / d theta_0 = exp(-T) for the linear decay driver
    assert flow2.d_dtheta0[4, -1, 0] == pytest.approx(np.exp(-1.0), abs=5e-3)


def test_flow_semigroup_property(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    a = compute_Gamma(F.Smooth("gaussian_bump", width=1.0), w, beta, sg)
    th = solve_yde(a, 0.3)
    # restart at mid-time with the driver increments from there on
    mid = grid.n_steps // 2
    shifted = AveragedFieldRestart = a.values[mid:] - a.values[mid]
    from youngreg.averaging import AveragedField

    a2 = AveragedField(TimeGrid(0.5, grid.n_steps - mid), sg, shifted, a.interpolation, a.kind)
    th2 = solve_yde(a2, th.values[mid])
    assert np.max(np.abs(th2.values[:, 0] - th.values[mid:, 0])) < 1e-12


def test_compare_solutions_identical_zero(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    a = compute_Gamma(F.Smooth("gaussian_bump", width=1.0), w, beta, sg)
    rep = compare_solutions(a, a, 0.3, 0.3)
    assert rep["sup_distance"] == 0.0
    assert rep["theta0_gap"] == 0.0


def test_compare_solutions_perturbation_scaling(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    a = compute_Gamma(F.mollify(F.FourierSeries(16, 0.7, 3.0, 2), 0.1), w, beta, sg)
    consts = []
    for h in (0.1, 0.05, 0.025):
        rep = compare_solutions(a, a, 0.2, 0.2 + h)
        consts.append(rep["sup_distance"] / h)
    assert max(consts) / min(consts) < 2.0


def test_compare_solutions_driver_perturbation(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    a1 = compute_Gamma(F.Smooth("gaussian_bump", width=1.0), w, beta, sg)
    from youngreg.averaging import AveragedField

    dists = []
    for eps in (0.1, 0.05, 0.025):
        bump_vals = eps * grid.times()[:, None, None] * np.exp(
            -sg.nodes()[None, :, :] ** 2)
        a2 = AveragedField(grid, sg, a1.values + bump_vals, a1.interpolation, a1.kind)
        dists.append(compare_solutions(a1, a2, 0.2, 0.2)["sup_distance"])
    assert dists[0] > dists[1] > dists[2]
    assert dists[0] / dists[2] == pytest.approx(4.0, rel=0.3)


def test_probe_uniqueness_lipschitz_coincide(base):
    grid, sg = base
    a = tabulate_driver(lambda t, x: -t * x, grid, sg)
    err = euler_self_refinement_error(a, 1.0)
    probe = probe_uniqueness(
        a, 1.0,
        [Strategy("euler", 0), Strategy("euler", 1), Strategy("picard", 0),
         Strategy("euler", 0, perturb=1e-4)],
        tol=10 * err,
    )
    assert probe.verdict == "coincide"
    assert all(v.values[0, 0] == 1.0 for v in probe.candidates.values())


def test_probe_uniqueness_power_law_separates():
    # unperturbed power-law field: the zero path and the signed-power path
    # are both residual-certified solutions yet stay order-one apart
    grid = TimeGrid(1.0, 1 << 12)
    beta = gen_fbm(FbmSpec(0.75, 1, 7), grid)
    w0 = zero_path(grid)
    b = F.PowerLaw(0.5)
    x2 = SampledPath(grid, np.sign(beta.values) * beta.values**2)
    sg = SpaceGrid(1, max(1.0, 1.3 * float(np.abs(x2.values).max())), 256)
    a = compute_Gamma(b, w0, beta, sg)
    res2 = residual(b, x2, w0, beta)
    probe = probe_uniqueness(
        a, 0.0,
        [Strategy("euler"), Strategy("given", seed_path=x2, label="closed-form")],
        tol=10 * max(res2, 1e-12),
    )
    assert probe.verdict == "separate"
    gap = max(probe.pairwise.values())
    assert gap >= 0.5 * float(np.abs(beta.values).max()) ** 2


def test_probe_needs_two_strategies(base):
    grid, sg = base
    a = tabulate_driver(lambda t, x: -t * x, grid, sg)
    with pytest.raises(ValueError):
        probe_uniqueness(a, 0.0, [Strategy("euler")], tol=1.0)


def test_residual_exact_constant_solution(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    c = F.Smooth("constant", value=1.3)
    x = SampledPath(grid, 1.0 + 1.3 * beta.values + w.values - w.values[0])
    assert residual(c, x, w, beta) < 1e-12


def test_residual_zero_solution_power_law(base):
    grid, sg = base
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    assert residual(F.PowerLaw(0.5), zero_path(grid), zero_path(grid), beta) == 0.0


def test_residual_power_law_refinement():
    # the signed-power closed form satisfies the equation with rate ~ 2H - 1
    fine = TimeGrid(1.0, 1 << 14)
    beta_f = gen_fbm(FbmSpec(0.75, 1, 7), fine)
    b = F.PowerLaw(0.5)
    res = []
    for n in (1 << 10, 1 << 12, 1 << 14):
        beta = beta_f.restrict((1 << 14) // n)
        x2 = SampledPath(beta.grid, np.sign(beta.values) * beta.values**2)
        res.append(residual(b, x2, zero_path(beta.grid), beta))
    assert res[0] > res[1] > res[2]
    from scipy.stats import linregress

    fit = linregress(np.log2([1 << 10, 1 << 12, 1 << 14]), np.log2(res))
    assert -fit.slope > 0.2


def test_residual_averaged_form(base):
    grid, sg = base
    a = tabulate_driver(lambda t, x: np.full_like(x, 1.7 * t), grid, sg)
    th = solve_yde(a, 0.3)
    assert residual(a, th) < 1e-13


def test_apriori_shapes(base):
    grid, sg = base
    a = tabulate_driver(lambda t, x: np.full_like(x, 1.7 * t), grid, sg)
    th = solve_yde(a, 0.5)
    rep = apriori_check(th, a, {"gamma": 0.9, "eta": 0.5, "lam": 0.5})
    assert not rep["violated"]
    assert rep["lhs"] <= rep["rhs"] * 1e3
    # theta0 scaling: left side affine in the initial condition for linear drivers
    lhs = []
    for th0 in (1.0, 2.0, 3.0):
        rep = apriori_check(solve_yde(a, th0), a, {"gamma": 0.9})
        lhs.append(rep["lhs"])
    diffs = np.diff(lhs)
    assert np.allclose(diffs, diffs[0], rtol=1e-6)


def test_apriori_classical_form(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    bump = F.Smooth("gaussian_bump", width=1.0)
    x = solve_sde(bump, w, beta, 0.2, space_grid=sg)
    theta = sub_paths(x, w)
    rep = apriori_check(theta, (bump, w, beta),
                        {"hurst": 0.75, "alpha": 0.6, "delta": 0.3})
    assert not rep["violated"]
    assert rep["components"]["beta_seminorm"] > 0


def test_apriori_growth_shape(base):
    # doubling the driver norm: solution norm grows no faster than exp(quadratic)
    grid, sg = base
    lhs, norms = [], []
    for scale in (0.25, 0.5, 1.0):
        a = tabulate_driver(lambda t, x, s=scale: s * t * np.sin(x + 0.3), grid, sg)
        rep = apriori_check(solve_yde(a, 0.7), a, {"gamma": 0.9, "eta": 0.5, "lam": 0.5})
        lhs.append(rep["lhs"])
        norms.append(rep["components"]["driver_weighted_norm"])
    logl = np.log(lhs)
    # log growth bounded by a quadratic shape in the driver norm
    assert (logl[2] - logl[0]) <= (norms[2] ** 2 - norms[0] ** 2) + np.log(1e3)


def test_random_initial_ensemble_zero_field(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    out = random_initial_ensemble(
        F.Smooth("constant", value=0.0), w, FbmSpec(0.75, 1, 50),
        lambda gen: gen.normal(0.0, 1.0, size=1), 24, space_grid=SpaceGrid(1, 8.0, 64),
    )
    expect = out["initials"][:, 0] + w.values[-1, 0]
    assert np.allclose(out["endpoints"][:, 0], expect, atol=1e-12)


def test_random_initial_ensemble_deterministic_ic(base):
    grid, sg = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    bump = F.Smooth("gaussian_bump", width=1.0)
    out = random_initial_ensemble(
        bump, w, FbmSpec(0.75, 1, 50), lambda gen: np.array([0.4]), 3,
        space_grid=SpaceGrid(1, 6.0, 128), keep_paths=True,
    )
    beta0 = gen_fbm(FbmSpec(0.75, 1, 50), grid, sample=0)
    direct = solve_sde(bump, w, beta0, 0.4, space_grid=SpaceGrid(1, 6.0, 128))
    assert np.array_equal(out["paths"][0].values, direct.values)


def test_random_initial_ensemble_stable_under_refinement():
    bump = F.Smooth("gaussian_bump", width=1.0)
    stds = []
    for n in (256, 512):
        grid = TimeGrid(1.0, n)
        w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
        out = random_initial_ensemble(
            bump, w, FbmSpec(0.75, 1, 50), lambda gen: gen.normal(0.0, 0.5, size=1),
            32, space_grid=SpaceGrid(1, 8.0, 128),
        )
        stds.append(out["std"][0])
    assert np.isfinite(stds).all()
    assert abs(stds[1] - stds[0]) < 0.2 * stds[0]


def test_mollification_cauchy_solutions():
    # solutions along the mollification ladder approach each other
    grid = TimeGrid(1.0, 512)
    w = gen_fbm(FbmSpec(0.1, 1, 3), grid, sample=0)
    beta = gen_fbm(FbmSpec(0.75, 1, 3), grid, sample=1)
    rough = F.FourierSeries(48, 0.6, 4.0, 5)
    sg = SpaceGrid(1, 6.0, 1024)
    sols = [solve_sde(F.mollify(rough, 2.0**-k), w, beta, 0.5, space_grid=sg)
            for k in range(2, 7)]
    gaps = [sols[i].sup_distance(sols[i + 1]) for i in range(len(sols) - 1)]
    assert all(gaps[i + 1] < gaps[i] for i in range(len(gaps) - 1))


def test_separation_persists_without_perturbation():
    fine = TimeGrid(1.0, 1 << 13)
    beta_f = gen_fbm(FbmSpec(0.75, 1, 7), fine)
    for n in (1 << 11, 1 << 12, 1 << 13):
        beta = beta_f.restrict((1 << 13) // n)
        x2 = SampledPath(beta.grid, np.sign(beta.values) * beta.values**2)
        gap = zero_path(beta.grid).sup_distance(x2)
        assert gap >= 0.5 * float(np.abs(beta.values).max()) ** 2


def test_left_box_flagged(base):
    grid, _ = base
    w = gen_fbm(FbmSpec(0.3, 1, 7), grid)
    beta = gen_fbm(FbmSpec(0.75, 1, 8), grid)
    tiny = SpaceGrid(1, 0.05, 8)
    x = solve_sde(F.Smooth("constant", value=1.0), w, beta, 0.0, space_grid=tiny)
    assert x.meta["left_box"] is True


def test_solve_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(scheme="rk4")
    with pytest.raises(ValueError):
        SolveConfig(substeps=0)
    with pytest.raises(ValueError):
        SolveConfig(picard_tol=-1.0)
