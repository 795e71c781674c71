"""Semigroup-convolved rough integrals and the Duhamel drift integral.

The rough integral ``int_s^t S_{t-u} z_u dw_u`` is the limit of compensated
Riemann sums

    sum_{[u,v] in P} S_{t-u} (z_u dw_{v,u} + z'_u w2_{v,u})

over nested partitions ``P`` of grid points. Integrands are ``H^d`` valued
controlled paths: ``z`` has shape ``(n, N, ..., d)`` and ``z'`` shape
``(n, N, ..., d, d)`` with ``z'[..., i, j]`` the derivative of the ``i``-th
column in the direction of the ``j``-th driver component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .controlled import ControlledPath
from .driver import RoughPath, TimeGrid
from .errors import ConvergenceError, GridMismatch, InvalidInput
from .spectral import SpectralOperator

DEFAULT_TOL = 1e-9
MAX_LEVEL = 14


@dataclass
class IntegralResult:
    """Outcome of a refined compensated sum."""

    value: np.ndarray
    partition_level: int
    cauchy_residual: float
    local_error_model: float | None = None
    residual_trace: list = field(default_factory=list)


def _terms(z: np.ndarray, zp: np.ndarray | None, dw: np.ndarray, w2: np.ndarray | None) -> np.ndarray:
    """Per-interval compensated increments ``z dw + z' w2``."""
    out = np.einsum("k...i,ki->k...", z, dw)
    if zp is not None and w2 is not None:
        # z'[.., i, j] pairs with w2[j, i] = int (w - w_u)_j dw_i
        out = out + np.einsum("k...ij,kji->k...", zp, w2)
    return out


def _mode_vec(E: np.ndarray, ndim: int) -> np.ndarray:
    return E.reshape((-1,) + (1,) * (ndim - 1))


def _check_integrand(op: SpectralOperator, cp: ControlledPath, p: RoughPath):
    if not cp.grid.same_as(p.grid):
        raise GridMismatch("integrand and driver grids differ")
    if cp.y.shape[-1] != p.d or cp.yp.shape[-1] != p.d:
        raise GridMismatch(f"integrand must be H^{p.d} valued with {p.d}-dimensional derivative")
    if cp.y.shape[1] != op.n_modes:
        raise GridMismatch("integrand mode count differs from the operator")


def compensated_sum(op: SpectralOperator, cp: ControlledPath, p: RoughPath, points,
                    compensated: bool = True) -> np.ndarray:
    """Compensated Riemann sum over the partition given by grid indices ``points``."""
    pts = np.asarray(points, dtype=int)
    a, b = pts[:-1], pts[1:]
    dw = p.w[b] - p.w[a]
    w2 = p.w2[a, b] if compensated else None
    terms = _terms(cp.y[a], cp.yp[a] if compensated else None, dw, w2)
    lag = p.times[pts[-1]] - p.times[a]
    E = op.factors(lag)  # (m, N)
    return np.sum(terms * E.reshape(E.shape + (1,) * (terms.ndim - 2)), axis=0)


def rough_convolution(op: SpectralOperator, integrand: ControlledPath, p: RoughPath,
                      s: float, t: float, tol: float = DEFAULT_TOL, max_level: int = MAX_LEVEL,
                      alpha_target: float = 0.0, strict: bool = True, level: int | None = None,
                      compensated: bool = True) -> IntegralResult:
    """``int_s^t S_{t-u} z_u dw_u`` by dyadic refinement of compensated sums.

    Level ``L`` uses the grid points ``s, s + q, s + 2q, ...`` (and ``t``) with
    stride ``q = 2^(J - L)``, ``J = ceil(log2 m)`` for ``m`` grid cells in
    ``[s, t]``. Refinement stops at the first level whose change from the
    previous level is at most ``tol`` in ``H_alpha_target``.

    Parameters
    ----------
    strict : bool
        If False, return the finest available level instead of raising when
        the Cauchy criterion is not met.
    level : int, optional
        Evaluate one fixed level without refinement.
    compensated : bool
        Drop the second-level term when False (plain left-point sums).

    Raises
    ------
    ConvergenceError
        If ``strict`` and the criterion fails at the finest level.
    """
    _check_integrand(op, integrand, p)
    i, j = p.grid.index_of(s), p.grid.index_of(t)
    if j < i:
        raise InvalidInput("need s <= t")
    zero = np.zeros(integrand.y.shape[1:-1])
    if j == i:
        return IntegralResult(zero, 0, 0.0)
    m = j - i
    J = max(0, math.ceil(math.log2(m)))

    def at(L):
        q = 2 ** max(J - L, 0)
        pts = np.append(np.arange(i, j, q), j)
        return compensated_sum(op, integrand, p, pts, compensated)

    if level is not None:
        return IntegralResult(at(level), level, float("nan"))
    top = min(J, max_level)
    prev = at(0)
    trace = []
    for L in range(1, top + 1):
        cur = at(L)
        res = float(op.norm(cur - prev, alpha_target))
        trace.append(res)
        if res <= tol:
            return IntegralResult(cur, L, res, residual_trace=trace)
        prev = cur
    if top == 0:
        return IntegralResult(prev, 0, 0.0, residual_trace=trace)
    if strict:
        raise ConvergenceError(
            f"compensated sums did not settle below {tol:.1e} by level {top} "
            f"(last change {trace[-1]:.2e})", trace)
    return IntegralResult(prev, top, trace[-1], residual_trace=trace)


def convolution_path(op: SpectralOperator, z: np.ndarray, zp: np.ndarray | None,
                     p: RoughPath, scheme: str = "left") -> np.ndarray:
    """Grid-level integral ``I_k = int_{t_0}^{t_k} S_{t_k - u} z_u dw_u`` for all ``k``.

    ``scheme="left"`` is the finest-partition compensated sum with the exact
    recursion ``I_{k+1} = S_h (I_k + z_k dw_k + z'_k w2_k)``.

    ``scheme="trapezoid"`` replaces the cell term by
    ``(S_h z_k + z_{k+1}) dw_k / 2 + S_h z'_k (w2_k - dw_k dw_k / 2)``. The two
    differ per cell by half the controlled remainder times ``dw_k``, which is
    ``O(h^{3 gamma})`` and sums to zero, so both converge to the same rough
    integral. The trapezoid form is second order for smooth drivers.
    """
    n = p.n
    k = np.arange(n - 1)
    dw = np.diff(p.w, axis=0)
    E1 = op.factors(p.grid.h)
    if scheme == "left":
        terms = _terms(z[:-1], zp[:-1] if zp is not None else None,
                       dw, p.w2[k, k + 1] if zp is not None else None)
        E = _mode_vec(E1, terms.ndim - 1)
        terms = E * terms
    elif scheme == "trapezoid":
        Ez = _mode_vec(E1, z.ndim - 1)
        terms = 0.5 * _terms(Ez * z[:-1] + z[1:], None, dw, None)
        if zp is not None:
            area = p.w2[k, k + 1] - 0.5 * np.einsum("ki,kj->kij", dw, dw)
            terms = terms + _mode_vec(E1, terms.ndim - 1) * _terms(
                np.zeros_like(z[:-1]), zp[:-1], np.zeros_like(dw), area)
        E = _mode_vec(E1, terms.ndim - 1)
    else:
        raise InvalidInput(f"unknown scheme {scheme!r}")
    out = np.zeros((n,) + terms.shape[1:])
    acc = np.zeros(terms.shape[1:])
    for m in range(n - 1):
        acc = E * acc + terms[m]
        out[m + 1] = acc
    return out


def drift_path(op: SpectralOperator, f_values: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Exponential trapezoid ``D_k = int_{t_0}^{t_k} S_{t_k - u} f_u du`` for all ``k``."""
    f = np.asarray(f_values, dtype=float)
    n, h = grid.n_points, grid.h
    E = _mode_vec(op.factors(h), f.ndim - 1)
    out = np.zeros_like(f)
    acc = np.zeros(f.shape[1:])
    for m in range(n - 1):
        acc = E * (acc + 0.5 * h * f[m]) + 0.5 * h * f[m + 1]
        out[m + 1] = acc
    return out


def duhamel_drift(op: SpectralOperator, f_values, grid: TimeGrid, s: float, t: float) -> np.ndarray:
    """``int_s^t S_{t-u} f_u du`` by the exponential trapezoid rule.

    ``f_values`` holds one coefficient vector per point of ``grid``.
    """
    f = np.asarray(f_values, dtype=float)
    if f.shape[0] != grid.n_points:
        raise GridMismatch("f_values must have one entry per grid point")
    i, j = grid.index_of(s), grid.index_of(t)
    if j < i:
        raise InvalidInput("need s <= t")
    if j == i:
        return np.zeros(f.shape[1:])
    sub = grid.sub(i, j)
    return drift_path(op, f[i:j + 1], sub)[-1]


@dataclass
class ProbeResult:
    exponent: float
    stderr: float
    lengths: np.ndarray
    residuals: np.ndarray


def probe_residuals(op: SpectralOperator, integrand: ControlledPath, p: RoughPath,
                    beta_target: float = 0.0, levels=range(1, 7), alpha: float | None = None,
                    max_windows: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Window lengths and mean-square one-step residuals of the compensated sum.

    For a window ``[s, t]`` of ``2^j`` cells the residual is
    ``int_s^t S_{t-u} z_u dw_u - S_{t-s}(z_s dw_{t,s} + z'_s w2_{t,s})`` measured in
    ``H_{alpha + beta_target}``, with the finest-grid compensated sum as the
    reference integral. ``alpha`` defaults to the integrand's base index, else
    ``-2 gamma``.
    """
    _check_integrand(op, integrand, p)
    if alpha is None:
        alpha = integrand.alpha if integrand.alpha is not None else -2 * p.gamma
    z, zp = integrand.y, integrand.yp
    full = convolution_path(op, z, zp, p)
    n, h = p.n, p.grid.h
    lengths, msq = [], []
    for j in levels:
        L = 2 ** j
        if L >= n:
            break
        starts = np.arange(0, n - L)
        if max_windows is not None and starts.size > max_windows:
            starts = starts[np.linspace(0, starts.size - 1, max_windows).astype(int)]
        Eb = op.factors(L * h).reshape((1, -1) + (1,) * (full.ndim - 2))
        exact = full[starts + L] - Eb * full[starts]
        one = _terms(z[starts], zp[starts], p.w[starts + L] - p.w[starts], p.w2[starts, starts + L])
        res = op.norm(exact - Eb * one, alpha + beta_target, axis=1)
        lengths.append(L * h)
        msq.append(float(np.mean(res ** 2)))
    if len(lengths) < 2:
        raise InvalidInput("grid too short for a ladder of at least two window lengths")
    return np.array(lengths), np.array(msq)


def _fit_order(lengths: np.ndarray, msq: np.ndarray) -> ProbeResult:
    rms = np.sqrt(msq)
    if np.all(rms == 0):
        return ProbeResult(float("inf"), 0.0, lengths, rms)
    keep = rms > 0
    fit = stats.linregress(np.log(lengths[keep]), np.log(rms[keep]))
    return ProbeResult(float(fit.slope), float(fit.stderr), lengths, rms)


def local_error_probe(op: SpectralOperator, integrand: ControlledPath, p: RoughPath,
                      beta_target: float = 0.0, levels=range(1, 7), alpha: float | None = None,
                      max_windows: int | None = None) -> ProbeResult:
    """Measured order of the one-step compensated-sum error in ``|t - s|``.

    Root-mean-square residuals from :func:`probe_residuals` are regressed
    against the window length on log-log axes. An identically vanishing
    residual yields ``exponent = inf``. The estimate reflects the asymptotic
    order only when the ladder resolves the stiffest mode, i.e. when
    ``|t - s| |lambda_N|`` stays of order one or below.
    """
    lengths, msq = probe_residuals(op, integrand, p, beta_target, levels, alpha, max_windows)
    return _fit_order(lengths, msq)


def pooled_error_probe(op: SpectralOperator, cases, beta_target: float = 0.0,
                       levels=range(1, 7), alpha: float | None = None) -> ProbeResult:
    """:func:`local_error_probe` with mean-square residuals pooled over ``cases``.

    ``cases`` is an iterable of ``(integrand, driver)`` pairs on a common grid,
    e.g. one per Brownian sample.
    """
    acc, lengths, count = None, None, 0
    for integrand, p in cases:
        lengths, msq = probe_residuals(op, integrand, p, beta_target, levels, alpha)
        acc = msq if acc is None else acc + msq
        count += 1
    if count == 0:
        raise InvalidInput("no cases to pool")
    return _fit_order(lengths, acc / count)
