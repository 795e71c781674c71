import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from roughflow.controlled import ControlledPath, CutoffConfig, norms
from roughflow.errors import AssumptionError, InvalidConfig
from roughflow.nonlinearity import (CollocationNonlinearity, LinearNonlinearity,
                                    ModewiseNonlinearity, TruncatedNonlinearity, ZeroNonlinearity,
                                    coupled_quadratic, evaluate_pair)
from roughflow.solver import ball_center
from roughflow.spectral import SpectralOperator

y4 = arrays(np.float64, 4, elements=st.floats(-2, 2))


def _fd(fn, y, v, eps=1e-6):
    return (fn.value(y + eps * v) - fn.value(y - eps * v)) / (2 * eps)


MAPS = [
    lambda: CollocationNonlinearity(4, "sin", 0.7),
    lambda: CollocationNonlinearity(4, "tanh", [0.5, -0.3], diffusion=True),
    lambda: ModewiseNonlinearity(4, "sin3", 0.5, diffusion=True, noise_dim=2),
    lambda: ModewiseNonlinearity(4, "sin2", 1.2),
    lambda: LinearNonlinearity(np.diag([1.0, -0.5, 0.2, 0.0])),
]


@pytest.mark.parametrize("make", MAPS)
@given(y=y4, v=y4)
@settings(max_examples=15)
def test_jvp_matches_finite_differences(make, y, v):
    fn = make()
    assert np.allclose(fn.jvp(y, v[:, None])[..., 0], _fd(fn, y, v), atol=1e-6)


def test_collocation_transform_is_orthonormal():
    fn = CollocationNonlinearity(6, "sin", 1.0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(6)
    assert np.allclose(fn._phi(fn._phi(x)), x)
    assert np.isclose(np.linalg.norm(fn._phi(x)), np.linalg.norm(x))


def test_lipschitz_bound_holds():
    fn = CollocationNonlinearity(5, "tanh", 0.8)
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = rng.standard_normal((2, 5))
        assert np.linalg.norm(fn.value(a) - fn.value(b)) <= fn.lipschitz * np.linalg.norm(a - b) + 1e-12


def test_stationarity():
    ModewiseNonlinearity(3, "sin3", 1.0, diffusion=True).check_stationary()
    coupled_quadratic().check_stationary()
    ZeroNonlinearity(3, 1).check_stationary()
    with pytest.raises(AssumptionError):
        CollocationNonlinearity(3, "sin", 1.0).check_stationary()
    with pytest.raises(AssumptionError):
        ModewiseNonlinearity(3, "sin2", 1.0, diffusion=True).check_stationary()


def test_coupled_quadratic_values():
    f = coupled_quadratic(1.0, 0.5)
    y = np.array([0.3, -0.2])
    assert np.allclose(f.value(y), [0.5 * np.sin(0.3) * np.sin(-0.2), np.sin(0.3) ** 2])


def test_profile_validation():
    with pytest.raises(InvalidConfig):
        CollocationNonlinearity(3, "cube", 1.0)


def test_truncated_pair_matches_separate_evaluation(bm1):
    op = SpectralOperator([2.0, -1.0])
    f = coupled_quadratic()
    g = ModewiseNonlinearity(2, "sin3", 0.5, diffusion=True)
    cfg = CutoffConfig(0.04, 0.3)
    fR, gR = TruncatedNonlinearity(f, cfg), TruncatedNonlinearity(g, cfg)
    cp = ball_center(op, g, np.array([0.1, 0.05]), bm1)
    fv, z, dn = evaluate_pair(fR, gR, cp, bm1, op)
    assert dn == norms(cp, bm1, op).d_norm
    assert np.array_equal(fv, fR.evaluate(cp, bm1, op))
    z2 = gR.compose(cp, bm1, op)
    assert np.array_equal(z.y, z2.y) and np.array_equal(z.yp, z2.yp)


def test_truncation_vanishes_outside_ball(bm1):
    op = SpectralOperator([2.0, -1.0])
    g = ModewiseNonlinearity(2, "sin3", 0.5, diffusion=True)
    cfg = CutoffConfig(0.04, 0.1)
    gR = TruncatedNonlinearity(g, cfg)
    y = np.tile([0.5, 0.5], (bm1.n, 1))
    cp = ControlledPath(bm1.grid, y, np.zeros(y.shape + (1,)))
    z = gR.compose(cp, bm1, op)
    assert np.all(z.y == 0) and np.all(z.yp == 0)
