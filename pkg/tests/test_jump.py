import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merton2d.grid import build_axis, default_spec
from merton2d.jump import (JumpOperator, LogGrid, build_kernel, build_log_grid,
                           xcorr_fft)
from merton2d.model import ModelParams, normal_density_log, parameter_set
from merton2d.problem import discretize_preset_grid

from conftest import fabricate_axis


def direct_xcorr(params, lg1: LogGrid, lg2: LogGrid, vbar: np.ndarray) -> np.ndarray:
    """Brute-force quadruple loop evaluation of the cross-correlation."""
    n1, n2 = 2 * lg1.m_pow2, 2 * lg2.m_pow2
    out = np.zeros((n1, n2))
    w = params.lam * lg1.dx * lg2.dx
    for kk in range(n1):
        for ll in range(n2):
            acc = 0.0
            for ii in range(n1):
                for jj in range(n2):
                    acc += vbar[ii, jj] * normal_density_log(
                        params, (ii - kk) * lg1.dx, (jj - ll) * lg2.dx)
            out[kk, ll] = w * acc
    return out


@pytest.fixture(scope="module")
def set1_params():
    return parameter_set("set1")[0]


def test_log_grid_power_of_two_selection():
    # smallest log mesh width 0.01, ln(s_max) = 6.4 -> M = 1024
    axis = fabricate_axis([0.0, 1.0, math.exp(0.01), math.exp(6.4)])
    lg = build_log_grid(axis)
    assert lg.m_pow2 == 1024
    assert 6.4 / 1024 < 0.01 <= 6.4 / 512


def test_log_grid_monotone_under_refinement():
    prev = 0
    for nu in (5, 9, 19, 39):
        axis = build_axis(default_spec(100.0, nu=nu))
        lg = build_log_grid(axis)
        assert lg.m_pow2 >= prev
        prev = lg.m_pow2


def test_log_grid_dx_times_m_exact():
    axis = build_axis(default_spec(100.0, nu=9))
    lg = build_log_grid(axis)
    assert lg.dx * lg.m_pow2 == math.log(axis.s_max)
    assert lg.nodes[-1] == pytest.approx(math.log(axis.s_max), abs=1e-15)
    assert len(lg.nodes) == 2 * lg.m_pow2


def test_log_grid_cap():
    axis = fabricate_axis([0.0, 1.0, math.exp(1e-7), math.exp(6.4)])
    with pytest.raises(ValueError, match="log grid"):
        build_log_grid(axis)


def test_xcorr_zero_input(set1_params):
    lg = LogGrid(m_pow2=8, dx=0.3)
    kernel = build_kernel(set1_params, lg, lg)
    out = xcorr_fft(kernel, np.zeros((16, 16)))
    assert np.all(out == 0.0)


@pytest.mark.parametrize("m1,m2", [(4, 4), (8, 8), (16, 16), (4, 8), (16, 8)])
def test_xcorr_matches_direct_sum(set1_params, m1, m2):
    lg1 = LogGrid(m_pow2=m1, dx=0.45)
    lg2 = LogGrid(m_pow2=m2, dx=0.35)
    kernel = build_kernel(set1_params, lg1, lg2)
    rng = np.random.default_rng(m1 * 100 + m2)
    vbar = rng.standard_normal((2 * m1, 2 * m2))
    fast = xcorr_fft(kernel, vbar)
    slow = direct_xcorr(set1_params, lg1, lg2, vbar)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-12 * np.abs(slow).max())


def test_xcorr_ones_gives_windowed_kernel_sums(set1_params):
    m = 8
    lg = LogGrid(m_pow2=m, dx=0.5)
    kernel = build_kernel(set1_params, lg, lg)
    ones = np.ones((2 * m, 2 * m))
    out = xcorr_fft(kernel, ones)
    w = set1_params.lam * lg.dx * lg.dx
    for kk in (0, 5, 2 * m - 1):
        for ll in (0, 7, 2 * m - 1):
            p = np.arange(2 * m) - kk
            r = np.arange(2 * m) - ll
            window = w * normal_density_log(set1_params, p[:, None] * lg.dx,
                                            r[None, :] * lg.dx).sum()
            assert out[kk, ll] == pytest.approx(window, rel=1e-12, abs=1e-15)


def test_xcorr_dimension_mismatch(set1_params):
    lg = LogGrid(m_pow2=4, dx=0.3)
    kernel = build_kernel(set1_params, lg, lg)
    with pytest.raises(ValueError, match="log-grid shape"):
        xcorr_fft(kernel, np.zeros((4, 4)))


def test_apply_zero_intensity():
    params, option = parameter_set("set1")
    dead = ModelParams(r=params.r, sigma1=params.sigma1, sigma2=params.sigma2,
                       rho=params.rho, lam=0.0, gamma1=params.gamma1,
                       gamma2=params.gamma2, rho_hat=params.rho_hat,
                       delta1=params.delta1, delta2=params.delta2)
    prob = discretize_preset_grid(dead, option, nu=5)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(prob.shape)
    assert np.all(prob.jump.apply(u) == 0.0)
    assert prob.jump.norm_bound() == 0.0


def test_apply_linearity(problem_m8):
    rng = np.random.default_rng(1)
    u = rng.standard_normal(problem_m8.shape)
    v = rng.standard_normal(problem_m8.shape)
    left = problem_m8.jump.apply(1.7 * u - 0.3 * v)
    right = 1.7 * problem_m8.jump.apply(u) - 0.3 * problem_m8.jump.apply(v)
    np.testing.assert_allclose(left, right, atol=1e-12 * np.abs(right).max() + 1e-15)


def test_apply_matches_materialized_factors():
    """Composite operator equals the dense product of interpolation,
    correlation and interpolation matrices, each materialized independently."""
    params, option = parameter_set("set1")
    prob = discretize_preset_grid(params, option, nu=7, s_max_mult=5.0)
    jump = prob.jump
    assert prob.grid.axis(1).m == 10

    lg = jump.log1
    n_x = lg.size
    # dense correlation matrix straight from the density definition
    k_idx = np.arange(-lg.m_pow2 + 1, lg.m_pow2 + 1)
    off1 = (k_idx[None, :] - k_idx[:, None]) * lg.dx  # (k, i) -> (i - k) dx
    t1 = np.zeros((n_x * n_x, n_x * n_x))
    w = params.lam * lg.dx * lg.dx
    for a in range(n_x):
        for b in range(n_x):
            block = w * normal_density_log(params, off1[a, b], off1 * 1.0)
            t1[a * n_x:(a + 1) * n_x, b * n_x:(b + 1) * n_x] = block
    fwd = np.kron(jump.fwd1.toarray(), jump.fwd2.toarray())
    back = np.kron(jump.back1.toarray(), jump.back2.toarray())
    composite = back @ t1 @ fwd

    rng = np.random.default_rng(2)
    u = rng.standard_normal(prob.shape)
    expect = (composite @ u.ravel()).reshape(prob.shape)
    got = jump.apply(u)
    np.testing.assert_allclose(got, expect, atol=1e-12 * np.abs(expect).max())


def test_interp_rows_are_convex_combinations(problem_m8):
    for mat in (problem_m8.jump.fwd1, problem_m8.jump.fwd2,
                problem_m8.jump.back1, problem_m8.jump.back2):
        arr = mat.toarray()
        assert np.all(arr >= 0.0)
        np.testing.assert_allclose(arr.sum(axis=1), 1.0, atol=1e-12)


def test_nonnegativity_preservation(problem_m8):
    rng = np.random.default_rng(3)
    u = np.abs(rng.standard_normal(problem_m8.shape))
    out = problem_m8.jump.apply(u)
    assert out.min() >= -1e-13 * u.max()


def test_norm_bound_desk_grid():
    params, option = parameter_set("set1")
    prob = discretize_preset_grid(params, option, nu=35)
    bound = prob.jump.norm_bound()
    assert bound <= params.lam + 1e-3
    assert bound > 0.5 * params.lam
    assert prob.jump.kernel.tail_mass < 1e-6


def test_norm_bound_stable_under_log_grid_refinement():
    params, option = parameter_set("set1")
    coarse = discretize_preset_grid(params, option, nu=15, log_safety=1.0)
    fine = discretize_preset_grid(params, option, nu=15, log_safety=2.0)
    assert fine.jump.log1.m_pow2 == 2 * coarse.jump.log1.m_pow2
    b1 = coarse.jump.norm_bound()
    b2 = fine.jump.norm_bound()
    assert abs(b1 - b2) < 0.01 * b1


def test_quadrature_sanity_away_from_edges():
    params, option = parameter_set("set1")
    prob = discretize_preset_grid(params, option, nu=35)
    out = prob.jump.apply(np.ones(prob.shape))
    lg = prob.jump.log1
    s = prob.grid.axis(1).s
    margin = max(abs(params.gamma1), abs(params.gamma2)) \
        + 8 * max(params.delta1, params.delta2)
    with np.errstate(divide="ignore"):
        interior = (np.log(s) > lg.nodes[0] + margin) & \
                   (np.log(s) < lg.nodes[-1] - margin)
    mask = interior[:, None] & interior[None, :]
    assert mask.any()
    assert np.abs(out[mask] - params.lam).max() <= 1e-3 * params.lam


def test_apply_dimension_mismatch(problem_m8):
    with pytest.raises(ValueError, match="grid shape"):
        problem_m8.jump.apply(np.zeros((2, 2)))


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=10, deadline=None)
def test_xcorr_fft_direct_equivalence_property(seed):
    params = parameter_set("set2")[0]
    rng = np.random.default_rng(seed)
    m1, m2 = int(rng.choice([4, 8])), int(rng.choice([4, 8]))
    lg1 = LogGrid(m_pow2=m1, dx=float(rng.uniform(0.2, 0.8)))
    lg2 = LogGrid(m_pow2=m2, dx=float(rng.uniform(0.2, 0.8)))
    kernel = build_kernel(params, lg1, lg2)
    vbar = rng.standard_normal((2 * m1, 2 * m2))
    fast = xcorr_fft(kernel, vbar)
    slow = direct_xcorr(params, lg1, lg2, vbar)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-12 * np.abs(slow).max())
