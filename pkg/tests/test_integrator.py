import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughflow.controlled import ControlledPath
from roughflow.driver import (TimeGrid, brownian_samples, build_bm_lift, build_smooth_lift,
                              lift_function)
from roughflow.errors import ConvergenceError, GridMismatch
from roughflow.integrator import (compensated_sum, convolution_path, drift_path, duhamel_drift,
                                  local_error_probe, pooled_error_probe, rough_convolution)
from roughflow.nonlinearity import CollocationNonlinearity
from roughflow.solver import ball_center
from roughflow.spectral import SpectralOperator, preset_parabolic

from oracles import random_smooth_case, rs_integral, wong_zakai

IDENTITY = SpectralOperator([0.0])


def _self_integrand(p):
    d = p.d
    z = p.w[:, None, :]
    zp = np.broadcast_to(np.eye(d), (p.n, 1, d, d))
    return ControlledPath(p.grid, z, zp)


@pytest.mark.parametrize("seed", range(3))
def test_w_dw_closed_form(seed):
    p = build_bm_lift(seed, TimeGrid(0.0, 1.0, 129), 1)
    cp = _self_integrand(p)
    for s, t in ((0.0, 1.0), (0.25, 0.75)):
        val = rough_convolution(IDENTITY, cp, p, s, t, tol=1e-12).value[0]
        ws, wt = p.w[p.grid.index_of(s), 0], p.w[p.grid.index_of(t), 0]
        assert abs(val - 0.5 * (wt ** 2 - ws ** 2)) < 1e-8


@pytest.mark.parametrize("seed", range(4))
def test_identity_semigroup_matches_quadrature(seed):
    w, dw, sig, jac = random_smooth_case(np.random.default_rng(100 + seed))
    g = TimeGrid(0.0, 1.0, 2049)
    p = lift_function(w, g, 0.5, 16)
    cp = ControlledPath(g, sig(p.w)[:, None, :], jac(p.w)[:, None, :, :])
    val = rough_convolution(IDENTITY, cp, p, 0.0, 1.0, tol=1e-12, strict=False).value[0]
    assert abs(val - rs_integral(0.0, sig, w, dw, 0.0, 1.0)) < 1e-6


def test_trapezoid_path_with_semigroup_matches_quadrature():
    w, dw, sig, jac = random_smooth_case(np.random.default_rng(5))
    g = TimeGrid(0.0, 1.0, 1025)
    p = lift_function(w, g, 0.5, 16)
    op = SpectralOperator([-2.0])
    I = convolution_path(op, sig(p.w)[:, None, :], jac(p.w)[:, None, :, :], p, "trapezoid")
    for k in (256, 1024):
        t = g.times[k]
        assert abs(I[k, 0] - rs_integral(-2.0, sig, w, dw, 0.0, t)) < 5e-6


def test_compensation_matters_for_area():
    # pure area driver: only the second-level term sees the noise
    from roughflow.driver import pure_area_path
    g = TimeGrid(0.0, 1.0, 33)
    p = pure_area_path(np.array([[0.0, 1.0], [-1.0, 0.0]]), g)
    z = np.zeros((g.n_points, 1, 2))
    zp = np.zeros((g.n_points, 1, 2, 2))
    zp[..., 1, 0] = 1.0  # pairs with w2[0, 1]
    cp = ControlledPath(g, z, zp)
    assert np.isclose(rough_convolution(IDENTITY, cp, p, 0, 1).value[0], 1.0)
    plain = compensated_sum(IDENTITY, cp, p, np.arange(33), compensated=False)
    assert plain[0] == 0.0


def test_level_and_strict(bm1):
    op = preset_parabolic(1, 2.5, 4)
    g = CollocationNonlinearity(4, "sin", [1.0], diffusion=True)
    cp = g.compose(ball_center(op, g, np.array([0.5, 0.2, -0.1, 0.1]), bm1))
    r = rough_convolution(op, cp, bm1, 0.0, 1.0, level=3)
    assert r.partition_level == 3
    with pytest.raises(ConvergenceError):
        rough_convolution(op, cp, bm1, 0.0, 1.0, tol=1e-16)
    loose = rough_convolution(op, cp, bm1, 0.0, 1.0, tol=1e-16, strict=False)
    assert loose.cauchy_residual > 0
    assert np.allclose(rough_convolution(op, cp, bm1, 0.5, 0.5).value, 0.0)


def test_grid_mismatch(bm1):
    cp = ControlledPath(TimeGrid(0, 1, 33), np.zeros((33, 1, 1)), np.zeros((33, 1, 1, 1)))
    with pytest.raises(GridMismatch):
        rough_convolution(IDENTITY, cp, bm1, 0.0, 1.0)


@pytest.mark.parametrize("scheme", ["left", "trapezoid"])
def test_grid_path_matches_sums(bm1, scheme):
    op = preset_parabolic(1, 2.5, 3)
    g = CollocationNonlinearity(3, "tanh", [0.8], diffusion=True)
    cp = g.compose(ball_center(op, g, np.array([0.3, -0.2, 0.1]), bm1))
    I = convolution_path(op, cp.y, cp.yp, bm1, "left")
    for k in (1, 17, 64):
        ref = compensated_sum(op, cp, bm1, np.arange(k + 1))
        assert np.allclose(I[k], ref, atol=1e-14)
    J = convolution_path(op, cp.y, cp.yp, bm1, scheme)
    assert np.abs(J - I).max() < 0.05


def test_schemes_converge_to_wong_zakai():
    # linear g on one Brownian path read at two resolutions; both grid rules
    # approach the Wong-Zakai limit of the fine piecewise-linear path
    lam = np.array([1.5, -1.5])
    c = np.array([0.6, -0.4])
    xi = np.array([0.5, 0.25])
    op = SpectralOperator(lam)
    fine = TimeGrid(0.0, 1.0, 12289)
    x = brownian_samples(np.random.default_rng(9), fine, 1)
    ref = wong_zakai(lam, lambda y: 0 * y, lambda y: (c * y)[:, None], xi, fine.times, x, 2)
    for scheme in ("trapezoid", "left"):
        errs = []
        for n in (769, 3073):
            g = TimeGrid(0.0, 1.0, n)
            p = build_smooth_lift(x, g, 0.5)
            y = np.tile(xi, (n, 1))
            for _ in range(40):
                z = (c * y)[..., None]
                zp = (c * c * y)[..., None, None]
                y = op.factors(g.times) * xi + convolution_path(op, z, zp, p, scheme)
            errs.append(np.abs(y - ref[::(12288 // (n - 1))]).max())
        assert errs[1] < errs[0] and errs[1] < 1e-4


def test_drift_rules():
    op = SpectralOperator([0.5, -2.0])
    g = TimeGrid(0.0, 1.0, 513)
    f = np.ones((g.n_points, 2))
    D = drift_path(op, f, g)
    lam = op.eigenvalues
    exact = (np.exp(np.multiply.outer(g.times, lam)) - 1) / lam
    assert np.abs(D - exact).max() < 1e-5
    assert np.allclose(duhamel_drift(op, f, g, 0.25, 0.75), (np.exp(0.5 * lam) - 1) / lam, atol=1e-5)
    assert np.all(duhamel_drift(op, f, g, 0.5, 0.5) == 0)


@given(st.integers(0, 1000), st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=10)
def test_convolution_is_linear(seed, a, b):
    p = build_bm_lift(seed, TimeGrid(0.0, 1.0, 33), 2)
    op = preset_parabolic(1, 2.5, 3)
    rng = np.random.default_rng(seed)
    z1, z2 = rng.standard_normal((2, 33, 3, 2))
    q1, q2 = rng.standard_normal((2, 33, 3, 2, 2))
    lhs = convolution_path(op, a * z1 + b * z2, a * q1 + b * q2, p)
    rhs = a * convolution_path(op, z1, q1, p) + b * convolution_path(op, z2, q2, p)
    assert np.allclose(lhs, rhs, atol=1e-11)


def _probe_case(op, gam, q):
    g = CollocationNonlinearity(op.n_modes, "sin", [1.0], diffusion=True)
    xi = 0.5 * np.linspace(1, 0.2, op.n_modes)
    return g.compose(ball_center(op, g, xi, q))


@pytest.mark.parametrize("gam", [0.4, 0.5])
def test_local_error_order_smooth(gam):
    op = preset_parabolic(1, 2.5, 6)
    q = lift_function(lambda t: (np.sin(3 * t) + t ** 2)[..., None], TimeGrid(0.0, 1.0, 1025), gam)
    res = local_error_probe(op, _probe_case(op, gam, q), q)
    assert res.exponent >= 3 * gam - 0.15


def test_local_error_order_bm():
    op = preset_parabolic(1, 2.5, 6)
    grid = TimeGrid(0.0, 1.0, 1025)
    cases = []
    for s in range(4):
        b = build_bm_lift(s, grid, 1, 16, 0.45)
        cases.append((_probe_case(op, 0.45, b), b))
    assert pooled_error_probe(op, cases).exponent >= 3 * 0.45 - 0.15


def test_probe_exact_integrand_is_infinite_order():
    # semigroup orbit integrand with a zero derivative on a linear driver: sums are exact
    op = SpectralOperator([0.0])
    p = lift_function(lambda t: 2 * t, TimeGrid(0.0, 1.0, 257))
    cp = ControlledPath(p.grid, np.ones((257, 1, 1)), np.zeros((257, 1, 1, 1)))
    assert local_error_probe(op, cp, p).exponent == np.inf
