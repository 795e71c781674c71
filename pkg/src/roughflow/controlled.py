"""Mildly controlled rough paths, their norms, and the path cut-off.

A controlled path is a pair ``(y, y')`` on a grid with ``y`` of shape
``(n, N, *v)`` and ``y'`` of shape ``(n, N, *v, d)``; the mode axis is axis 1.
Increments are twisted by the semigroup::

    hat(y)_{t,s} = y_t - S_{t-s} y_s
    R^y_{t,s}    = hat(y)_{t,s} - S_{t-s} (y'_s dw_{t,s})

All norms are suprema over grid pairs, computed at a base space index
``alpha`` (default ``-2 gamma``) as in the solution space of the mild
equation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .driver import RoughPath, TimeGrid, holder_norms
from .errors import GridMismatch, InvalidConfig, InvalidInput
from .spectral import SpectralOperator


class ControlledPath:
    """Pair ``(y, y')`` sampled on ``grid``.

    Parameters
    ----------
    grid : TimeGrid
    y : ndarray, shape (n, N, ...)
    yp : ndarray, shape y.shape + (d,)
    eta : float, optional
        Time-regularity exponent in ``[0, gamma)``; defaults to ``gamma / 2``.
    alpha : float, optional
        Base space index; defaults to ``-2 gamma``.
    """

    def __init__(self, grid: TimeGrid, y, yp, eta: float | None = None,
                 alpha: float | None = None):
        y = np.asarray(y, dtype=float)
        yp = np.asarray(yp, dtype=float)
        if y.ndim < 2 or y.shape[0] != grid.n_points:
            raise GridMismatch(f"y has shape {y.shape}, grid has {grid.n_points} points")
        if yp.shape[:-1] != y.shape:
            raise InvalidInput(f"yp shape {yp.shape} does not extend y shape {y.shape}")
        self.grid = grid
        self.y = y
        self.yp = yp
        self.y.flags.writeable = False
        self.yp.flags.writeable = False
        self.eta = eta
        self.alpha = alpha

    @property
    def n_modes(self) -> int:
        return self.y.shape[1]

    @property
    def d(self) -> int:
        return self.yp.shape[-1]

    def _like(self, y, yp) -> "ControlledPath":
        return ControlledPath(self.grid, y, yp, self.eta, self.alpha)

    def __add__(self, other: "ControlledPath") -> "ControlledPath":
        return self._like(self.y + other.y, self.yp + other.yp)

    def __sub__(self, other: "ControlledPath") -> "ControlledPath":
        return self._like(self.y - other.y, self.yp - other.yp)

    def __mul__(self, c: float) -> "ControlledPath":
        return self._like(c * self.y, c * self.yp)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def sup_distance(self, other: "ControlledPath") -> float:
        """``max(sup |y - v|, sup |y' - v'|)`` in coefficient norm."""
        dy = np.abs(self.y - other.y).max(initial=0.0)
        dyp = np.abs(self.yp - other.yp).max(initial=0.0)
        return float(max(dy, dyp))

    @classmethod
    def zeros(cls, grid: TimeGrid, n_modes: int, d: int, value_shape=(), **kw):
        shape = (grid.n_points, n_modes) + tuple(value_shape)
        return cls(grid, np.zeros(shape), np.zeros(shape + (d,)), **kw)

    def __repr__(self):
        return f"ControlledPath(y{self.y.shape}, yp{self.yp.shape})"


def resolve_exponents(cp: ControlledPath, p: RoughPath) -> tuple[float, float]:
    """``(eta, alpha)`` with defaults ``gamma / 2`` and ``-2 gamma``."""
    gamma = p.gamma
    eta = gamma / 2 if cp.eta is None else cp.eta
    alpha = -2 * gamma if cp.alpha is None else cp.alpha
    if not (0 <= eta < gamma):
        raise InvalidConfig(f"eta must lie in [0, gamma), got {eta}")
    return eta, alpha


def _check(cp: ControlledPath, p: RoughPath, op: SpectralOperator):
    if not cp.grid.same_as(p.grid):
        raise GridMismatch("controlled path and driver grids differ")
    if cp.d != p.d:
        raise GridMismatch(f"derivative has {cp.d} noise components, driver has {p.d}")
    if cp.n_modes != op.n_modes:
        raise GridMismatch(f"path has {cp.n_modes} modes, operator has {op.n_modes}")


def _contract(yp: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """``y'_s dw`` for a stack of derivatives and increments."""
    return np.einsum("n...d,nd->n...", yp, dw)


def remainder(cp: ControlledPath, p: RoughPath, op: SpectralOperator) -> np.ndarray:
    """Two-parameter remainder field.

    Returns
    -------
    ndarray, shape (n, n, N, ...)
        ``R[s, t]`` for ``s <= t``; zero below the diagonal.
    """
    _check(cp, p, op)
    n, h = cp.grid.n_points, cp.grid.h
    out = np.zeros((n,) + cp.y.shape)
    for k in range(1, n):
        E = op.factors(k * h)
        r = cp.y[k:] - _mode(E, cp.y) * (cp.y[:-k] + _contract(cp.yp[:-k], p.w[k:] - p.w[:-k]))
        idx = np.arange(n - k)
        out[idx, idx + k] = r
    return out


def _mode(E: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Broadcast a mode vector against arrays of shape ``(m, N, ...)``."""
    return E.reshape((1, -1) + (1,) * (like.ndim - 2))


@dataclass(frozen=True)
class ControlledNorms:
    """Discrete norms of a controlled path.

    ``holder_y_hat``, ``holder_yp_hat`` and ``remainder_2gamma`` are measured
    at the base index ``alpha``; ``sup_yp``, ``eta_norm`` and ``y0`` at
    ``alpha + 2 gamma``; ``yp0`` at ``alpha``.
    """

    holder_y_hat: float
    holder_yp_hat: float
    sup_yp: float
    remainder_2gamma: float
    eta_norm: float
    seminorm_w: float
    y0: float
    yp0: float
    d_norm: float


def norms(cp: ControlledPath, p: RoughPath, op: SpectralOperator) -> ControlledNorms:
    """All seminorms and the solution-space norm of ``(y, y')``."""
    _check(cp, p, op)
    gamma = p.gamma
    eta, a = resolve_exponents(cp, p)
    a2 = a + 2 * gamma
    y, yp, w = cp.y, cp.yp, p.w
    n, h = cp.grid.n_points, cp.grid.h
    hy = hyp = rem = heta = 0.0
    for k in range(1, n):
        E = op.factors(k * h)
        hat_y = y[k:] - _mode(E, y) * y[:-k]
        hat_yp = yp[k:] - _mode(E, yp) * yp[:-k]
        r = hat_y - _mode(E, y) * _contract(yp[:-k], w[k:] - w[:-k])
        dt = k * h
        hy = max(hy, op.norm(hat_y, a, axis=1).max() / dt ** gamma)
        heta = max(heta, op.norm(hat_y, a2, axis=1).max() / dt ** eta)
        hyp = max(hyp, op.norm(hat_yp, a, axis=1).max() / dt ** gamma)
        rem = max(rem, op.norm(r, a, axis=1).max() / dt ** (2 * gamma))
    sup_yp = float(op.norm(yp, a2, axis=1).max())
    y0 = float(op.norm(y[0], a2))
    yp0 = float(op.norm(yp[0], a))
    semi = hyp + rem
    return ControlledNorms(
        holder_y_hat=float(hy), holder_yp_hat=float(hyp), sup_yp=sup_yp,
        remainder_2gamma=float(rem), eta_norm=float(heta), seminorm_w=float(semi),
        y0=y0, yp0=yp0, d_norm=float(y0 + yp0 + heta + sup_yp + semi))


def d_norm(cp: ControlledPath, p: RoughPath, op: SpectralOperator) -> float:
    return norms(cp, p, op).d_norm


def holder_bound_gap(cp: ControlledPath, p: RoughPath, op: SpectralOperator) -> float:
    """Slack in ``||y||_gamma <= (1 + |w|_gamma)(||y'_0|| + ||y, y'||_w T^gamma)``.

    Nonnegative values mean the inequality holds. The bound presumes a
    contractive semigroup; with unstable modes it may fail by ``e^{lambda_1 T}``.
    """
    nm = norms(cp, p, op)
    wg, _ = holder_norms(p)
    T = cp.grid.length
    return (1 + wg) * (nm.yp0 + nm.seminorm_w * T ** p.gamma) - nm.holder_y_hat


def compose(g, cp: ControlledPath, p: RoughPath, op: SpectralOperator) -> ControlledPath:
    """``(g(y), Dg(y) y')`` for a nonlinearity ``g``."""
    return g.compose(cp, p, op)


# -- cut-off ---------------------------------------------------------------

def _smoothstep(x):
    return x ** 4 * (35 - 84 * x + 70 * x ** 2 - 20 * x ** 3)


def bump(r):
    """C^3 profile: 1 on ``[0, 1/2]``, 0 on ``[1, inf)``, degree-7 polynomial between."""
    r = np.asarray(r, dtype=float)
    x = np.clip(2.0 * r - 1.0, 0.0, 1.0)
    out = 1.0 - _smoothstep(x)
    return out if out.ndim else float(out)


def bump_derivative(r, order: int = 1):
    """Derivatives of :func:`bump` up to order 3."""
    r = np.asarray(r, dtype=float)
    x = np.clip(2.0 * r - 1.0, 0.0, 1.0)
    inside = (r > 0.5) & (r < 1.0)
    if order == 1:
        v = 140 * x ** 3 * (1 - x) ** 3
    elif order == 2:
        v = 420 * x ** 2 * (1 - x) ** 2 * (1 - 2 * x)
    elif order == 3:
        v = 840 * x * (1 - x) * (1 - 5 * x + 5 * x ** 2)
    else:
        raise InvalidInput("derivatives are available up to order 3")
    out = np.where(inside, -(2.0 ** order) * v, 0.0)
    return out if out.ndim else float(out)


def bump_derivative_bound(order: int) -> float:
    """``sup_r |phi^(order)(r)|`` for ``order`` in 0..3."""
    if order == 0:
        return 1.0
    r = np.linspace(0.5, 1.0, 20001)
    return float(np.abs(bump_derivative(r, order)).max())


@dataclass(frozen=True)
class CutoffConfig:
    """Cut-off budget ``K`` and radius ``R`` with the profile :func:`bump`."""

    K: float
    R: float
    R_tilde: float | None = None

    def __post_init__(self):
        if not (0 < self.R <= 1):
            raise InvalidConfig(f"cut-off radius must lie in (0, 1], got {self.R}")
        if self.K <= 0:
            raise InvalidConfig("K must be positive")

    @staticmethod
    def phi(r):
        return bump(r)

    @staticmethod
    def phi_derivative(r, order: int = 1):
        return bump_derivative(r, order)


def cutoff_factor(cp: ControlledPath, cfg: CutoffConfig, p: RoughPath,
                  op: SpectralOperator) -> float:
    return bump(norms(cp, p, op).d_norm / cfg.R)


def cutoff_chi(cp: ControlledPath, cfg: CutoffConfig, p: RoughPath,
               op: SpectralOperator) -> ControlledPath:
    """``(y phi(|y,y'|/R), y' phi(|y,y'|/R))``."""
    c = cutoff_factor(cp, cfg, p, op)
    if c == 1.0:
        return cp
    return cp * c


def solve_cutoff_radius(p: RoughPath, K: float, C_f: float,
                        C_g: float | Callable[[float], float], tol: float = 1e-14) -> CutoffConfig:
    """Radius ``R = min(R~, 1)`` where ``R~`` balances the cut-off budget.

    ``R~`` solves ``C_f R + C_g(R) (1 + |w|_g + |w2|_2g)(1 + |w|_g)^2 = K``
    by bisection. ``C_g`` is either a constant (model ``C_g R``) or a
    nondecreasing callable.
    """
    if K <= 0 or C_f < 0:
        raise InvalidConfig("K must be positive and C_f nonnegative")
    if callable(C_g):
        cg = C_g
        grid_r = np.linspace(0.0, 1.0, 65)
        vals = np.array([cg(r) for r in grid_r])
        if np.any(np.diff(vals) < -1e-14 * max(1.0, np.abs(vals).max())) or vals[0] < 0:
            raise InvalidConfig("C_g must be nonnegative and nondecreasing")
    else:
        if C_g < 0:
            raise InvalidConfig("C_g must be nonnegative")
        cg = lambda r, c=float(C_g): c * r  # noqa: E731
    if C_f == 0 and cg(1.0) == 0:
        raise InvalidConfig("constants must not all vanish")
    wg, w2g = holder_norms(p)
    amp = (1 + wg + w2g) * (1 + wg) ** 2

    def lhs(r):
        return C_f * r + cg(r) * amp

    if lhs(1.0) <= K:
        return CutoffConfig(K=K, R=1.0, R_tilde=None)
    lo, hi = 0.0, 1.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if lhs(mid) < K:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    return CutoffConfig(K=K, R=r, R_tilde=r)
