import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from youngreg.paths import (
    FbmSpec,
    SampledPath,
    TimeGrid,
    add_paths,
    gen_fbm,
    gen_fbm_ensemble,
    holder_seminorm,
    path_from_values,
    read_path_csv,
    sub_paths,
    write_path_csv,
    zero_path,
    _dense_factor,
    _fgn_autocov,
)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    g = TimeGrid(2.0, 8)
    assert g.dt == 0.25
    assert np.all(np.diff(g.times()) > 0)


def test_sampled_path_validation():
    g = TimeGrid(1.0, 4)
    with pytest.raises(ValueError):
        SampledPath(g, np.zeros((4, 1)))
    with pytest.raises(ValueError):
        SampledPath(g, np.full((5, 1), np.nan))


def test_gen_fbm_deterministic_and_zero_start():
    spec = FbmSpec(0.75, 2, 42)
    grid = TimeGrid(1.0, 256)
    a = gen_fbm(spec, grid, sample=3)
    b = gen_fbm(spec, grid, sample=3)
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values[0] == 0.0)
    c = gen_fbm(spec, grid, sample=4)
    assert not np.array_equal(a.values, c.values)


def test_gen_fbm_coordinates_independent_streams():
    # coordinate k of sample j is reproducible in isolation
    grid = TimeGrid(1.0, 64)
    two = gen_fbm(FbmSpec(0.7, 2, 9), grid, sample=5)
    one = gen_fbm(FbmSpec(0.7, 1, 9), grid, sample=5)
    assert np.array_equal(two.values[:, 0], one.values[:, 0])


def test_ensemble_thread_count_invariance():
    spec = FbmSpec(0.6, 1, 7)
    grid = TimeGrid(1.0, 128)
    e1 = gen_fbm_ensemble(spec, grid, 16, threads=1)
    e4 = gen_fbm_ensemble(spec, grid, 16, threads=4)
    assert np.array_equal(e1, e4)


def test_brownian_case_increments():
    # hurst = 0.5: independent increments with variance dt per coordinate
    grid = TimeGrid(1.0, 64)
    ens = gen_fbm_ensemble(FbmSpec(0.5, 1, 11), grid, 4000)
    inc = np.diff(ens[:, :, 0], axis=1)
    var = inc.var()
    assert abs(var - grid.dt) < 4 * grid.dt / np.sqrt(inc.size)
    corr = np.corrcoef(inc[:, 0], inc[:, 1])[0, 1]
    assert abs(corr) < 4 / np.sqrt(ens.shape[0])


def test_degenerate_hurst_linear_path():
    grid = TimeGrid(1.0, 32)
    p = gen_fbm(FbmSpec(0.9995, 1, 1), grid)
    assert p.meta["fbm_method"] == ["linear-degenerate"]
    slope = p.values[-1, 0] / grid.horizon
    assert np.allclose(p.values[:, 0], slope * grid.times())


def test_fbm_covariance_oracle():
    # independent oracle: 0.5 (s^2H + t^2H - |t-s|^2H) at H=0.75, s=0.25, t=1
    grid = TimeGrid(1.0, 512)
    ens = gen_fbm_ensemble(FbmSpec(0.75, 1, 5), grid, 10_000)
    prod = ens[:, 128, 0] * ens[:, 512, 0]
    se = prod.std(ddof=1) / np.sqrt(len(prod))
    assert abs(prod.mean() - 0.2377404735808355) < 3 * se


def test_variance_at_one():
    grid = TimeGrid(1.0, 256)
    for h in (0.55, 0.75, 0.9):
        ens = gen_fbm_ensemble(FbmSpec(h, 1, 21), grid, 10_000)
        end = ens[:, -1, 0]
        se = (end**2).std(ddof=1) / np.sqrt(len(end))
        assert abs((end**2).mean() - 1.0) < 3 * se


def test_self_similarity_ks():
    # scaling the time gap by c and values by c^-H leaves increments distributed alike
    h = 0.7
    grid = TimeGrid(1.0, 16)
    ens = gen_fbm_ensemble(FbmSpec(h, 1, 31), grid, 10_000)
    base = ens[:5000, 1, 0] - ens[:5000, 0, 0]
    coarse = (ens[5000:, 4, 0] - ens[5000:, 0, 0]) * 4.0**-h
    stat = ks_2samp(base, coarse)
    assert stat.pvalue > 0.01


def test_dense_factor_matches_autocovariance():
    h, n = 0.8, 32
    fac = _dense_factor(h, n)
    cov = fac @ fac.T
    idx = np.arange(n)
    expected = _fgn_autocov(h, n)[np.abs(idx[:, None] - idx[None, :])]
    assert np.allclose(cov, expected, atol=1e-10)


def test_dense_and_circulant_statistically_consistent():
    grid = TimeGrid(1.0, 64)
    for method in ("circulant", "dense"):
        ens = np.stack([
            gen_fbm(FbmSpec(0.75, 1, 3), grid, sample=j, method=method).values
            for j in range(3000)
        ])
        v = ens[:, -1, 0].var()
        assert abs(v - 1.0) < 0.1, method
    assert gen_fbm(FbmSpec(0.75, 1, 3), grid, method="dense").meta["fbm_method"] == ["dense"]


def test_holder_linear_and_constant():
    grid = TimeGrid(1.0, 128)
    lin = path_from_values(grid, -2.5 * grid.times())
    assert holder_seminorm(lin, 1.0).seminorm == pytest.approx(2.5)
    const = path_from_values(grid, np.full(129, 3.3))
    assert holder_seminorm(const, 0.5).seminorm == 0.0


def test_holder_dyadic_below_all_pairs():
    grid = TimeGrid(1.0, 200)
    p = gen_fbm(FbmSpec(0.6, 1, 13), grid)
    dy = holder_seminorm(p, 0.5, "dyadic")
    al = holder_seminorm(p, 0.5, "all")
    wi = holder_seminorm(p, 0.5, "window", window=16)
    assert dy.seminorm <= al.seminorm + 1e-15
    assert wi.seminorm <= al.seminorm + 1e-15
    assert dy.pair_budget < al.pair_budget


def test_holder_refinement_blowup_and_stabilize():
    # estimates stabilize below the sampling exponent and grow above it
    for seed in (1, 2, 3):
        for expo, lo, hi in ((0.5, 0.0, 1.3), (0.7, 1.35, np.inf)):
            semis = [
                holder_seminorm(gen_fbm(FbmSpec(0.6, 1, seed), TimeGrid(1.0, n)), expo).seminorm
                for n in (1 << 9, 1 << 11, 1 << 13)
            ]
            growth = semis[-1] / semis[0]
            assert lo < growth < hi, (seed, expo, growth)


def test_holder_invalid_exponent():
    p = zero_path(TimeGrid(1.0, 4))
    with pytest.raises(ValueError):
        holder_seminorm(p, 1.5)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=12),
       st.lists(st.floats(-5, 5), min_size=3, max_size=12))
def test_add_sub_roundtrip(a_vals, b_vals):
    n = min(len(a_vals), len(b_vals)) - 1
    grid = TimeGrid(1.0, n)
    a = path_from_values(grid, np.asarray(a_vals[: n + 1]))
    b = path_from_values(grid, np.asarray(b_vals[: n + 1]))
    back = sub_paths(add_paths(a, b), b)
    assert np.allclose(back.values, a.values, rtol=0, atol=1e-12)
    z = sub_paths(a, a)
    assert np.all(z.values == 0.0)


def test_add_paths_zero_identity():
    grid = TimeGrid(1.0, 32)
    w = gen_fbm(FbmSpec(0.4, 1, 2), grid)
    assert np.array_equal(add_paths(w, zero_path(grid)).values, w.values)


def test_add_paths_mismatch():
    a = zero_path(TimeGrid(1.0, 4))
    b = zero_path(TimeGrid(1.0, 8))
    with pytest.raises(ValueError):
        add_paths(a, b)
    with pytest.raises(ValueError):
        add_paths(zero_path(TimeGrid(1.0, 4), 1), zero_path(TimeGrid(1.0, 4), 2))


def test_path_csv_roundtrip():
    grid = TimeGrid(1.0, 16)
    p = gen_fbm(FbmSpec(0.75, 2, 17), grid)
    buf = io.StringIO()
    write_path_csv(p, buf)
    buf.seek(0)
    q = read_path_csv(buf)
    assert q.grid == p.grid
    assert np.array_equal(q.values, p.values)
    header = buf.getvalue().splitlines()[0]
    assert header == "t,x_1,x_2"


def test_restrict_exact_subsampling():
    grid = TimeGrid(1.0, 64)
    p = gen_fbm(FbmSpec(0.75, 1, 23), grid)
    q = p.restrict(4)
    assert q.grid.n_steps == 16
    assert np.array_equal(q.values, p.values[::4])
