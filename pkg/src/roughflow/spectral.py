"""Diagonal sectorial operators, their semigroups and interpolation norms.

Coefficients are numpy arrays whose mode axis (default 0) has length
``n_modes``. Trailing axes, e.g. the noise index of an ``H^d`` valued object,
are carried along and enter norms in the Hilbert-Schmidt sense.
"""
from __future__ import annotations

import numpy as np
from scipy import stats

from .errors import ConfigError, InvalidConfig, InvalidInput, ProjectionError


class SpectralOperator:
    """Operator ``A = diag(eigenvalues)`` acting on mode coefficients.

    Parameters
    ----------
    eigenvalues : array_like
        Real eigenvalues, sorted nonincreasing.
    alpha, beta : float, optional
        Dichotomy rates. Modes with ``lambda >= alpha`` form the unstable
        block and modes with ``lambda <= -beta`` the stable block. When omitted
        they are inferred as the smallest positive eigenvalue and minus the
        largest negative one; an operator with a zero eigenvalue has no split.
    """

    def __init__(self, eigenvalues, alpha: float | None = None, beta: float | None = None):
        lam = np.asarray(eigenvalues, dtype=float).ravel()
        if lam.size < 1 or not np.all(np.isfinite(lam)):
            raise InvalidInput("eigenvalues must be a nonempty finite sequence")
        if np.any(np.diff(lam) > 0):
            raise InvalidInput("eigenvalues must be sorted nonincreasing")
        lam.flags.writeable = False
        self.eigenvalues = lam
        pos, neg = lam[lam > 0], lam[lam < 0]
        if alpha is None and pos.size and not np.any(lam == 0):
            alpha = float(pos.min())
        if beta is None and neg.size and not np.any(lam == 0):
            beta = float(-neg.max())
        if alpha is not None and alpha <= 0:
            raise InvalidConfig("alpha must be positive")
        if beta is not None and beta <= 0:
            raise InvalidConfig("beta must be positive")
        self.alpha_gap = alpha
        self.beta_gap = beta
        if alpha is not None and beta is not None:
            bad = (lam < alpha) & (lam > -beta)
            if np.any(bad):
                raise InvalidConfig(
                    f"eigenvalues {lam[bad]} fall inside the gap (-{beta}, {alpha})")

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def has_split(self) -> bool:
        return self.alpha_gap is not None and self.beta_gap is not None

    @property
    def unstable_mask(self) -> np.ndarray:
        self._need_split()
        return self.eigenvalues >= self.alpha_gap

    @property
    def stable_mask(self) -> np.ndarray:
        self._need_split()
        return self.eigenvalues <= -self.beta_gap

    @property
    def n_unstable(self) -> int:
        return int(self.unstable_mask.sum())

    def _need_split(self):
        if not self.has_split:
            raise ConfigError("operator has no unstable/stable splitting (alpha, beta unset)")

    def with_gap(self, alpha: float, beta: float) -> "SpectralOperator":
        return SpectralOperator(self.eigenvalues, alpha, beta)

    # -- semigroup ---------------------------------------------------------

    def weights(self, alpha: float) -> np.ndarray:
        return (1.0 + np.abs(self.eigenvalues)) ** alpha

    def factors(self, t) -> np.ndarray:
        """``exp(lambda_k t)`` with shape ``t.shape + (n_modes,)``."""
        return np.exp(np.multiply.outer(np.asarray(t, dtype=float), self.eigenvalues))

    def apply(self, t, x, axis: int = 0) -> np.ndarray:
        """Mode-wise ``exp(lambda t) x`` without sign checks on ``t``."""
        x = np.asarray(x, dtype=float)
        return x * _along(self.factors(t), x.ndim, axis)

    def norm(self, x, alpha: float = 0.0, axis: int = 0) -> np.ndarray:
        """``H_alpha`` norm over the mode axis and every axis after it."""
        x = np.asarray(x, dtype=float)
        y = x * _along(self.weights(alpha), x.ndim, axis)
        return np.sqrt(np.sum(y * y, axis=tuple(range(axis, x.ndim))))

    def project(self, x, which: str, axis: int = 0) -> np.ndarray:
        if which == "unstable":
            mask = self.unstable_mask
        elif which == "stable":
            mask = self.stable_mask
        else:
            raise InvalidInput(f"unknown block {which!r}")
        x = np.asarray(x, dtype=float)
        return x * _along(mask.astype(float), x.ndim, axis)

    def __repr__(self):
        return (f"SpectralOperator(n_modes={self.n_modes}, alpha={self.alpha_gap}, "
                f"beta={self.beta_gap})")


def _along(v: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    """Reshape a trailing mode vector so it broadcasts along ``axis``."""
    extra = ndim - axis - 1
    return v.reshape(v.shape + (1,) * extra)


def preset_parabolic(m: int = 1, mu: float = 2.5, n_modes: int = 8, d_spatial: int = 1,
                     alpha: float | None = None, beta: float | None = None) -> SpectralOperator:
    """Spectrum ``mu - k^{2m}``, ``k = 1..n_modes``, of a shifted 2m-th order operator."""
    if d_spatial != 1:
        raise InvalidConfig("only one spatial dimension is supported")
    if n_modes < 2:
        raise InvalidConfig("n_modes must be at least 2")
    if m < 1:
        raise InvalidConfig("order m must be a positive integer")
    k = np.arange(1, n_modes + 1, dtype=float)
    return SpectralOperator(mu - k ** (2 * m), alpha, beta)


def operator_from_name(name: str, **params) -> SpectralOperator:
    """Build ``"parabolic"`` or ``"custom:l1,l2,..."`` operators."""
    if name == "parabolic":
        return preset_parabolic(**params)
    if name.startswith("custom:"):
        try:
            lam = [float(v) for v in name[len("custom:"):].split(",") if v.strip()]
        except ValueError as exc:
            raise InvalidConfig(f"cannot parse eigenvalue list in {name!r}") from exc
        return SpectralOperator(lam, params.get("alpha"), params.get("beta"))
    raise InvalidConfig(f"unknown operator preset {name!r}")


def semigroup_apply(op: SpectralOperator, t: float, x) -> np.ndarray:
    """``S_t x`` for ``t >= 0``."""
    if t < 0:
        raise InvalidInput("semigroup needs t >= 0; use group_apply_unstable for t < 0")
    return op.apply(t, x)


def group_apply_unstable(op: SpectralOperator, t: float, x, axis: int = 0) -> np.ndarray:
    """Backward group ``exp(t A_u) x`` for ``t <= 0`` on the unstable block."""
    if t > 0:
        raise InvalidInput("group_apply_unstable needs t <= 0")
    x = np.asarray(x, dtype=float)
    leak = op.norm(op.project(x, "stable", axis), 0.0, axis)
    if np.any(leak > 1e-14):
        raise ProjectionError(f"stable-mode mass {np.max(leak):.2e} in unstable input")
    return op.apply(t, x, axis)


def interp_norm(op: SpectralOperator, x, alpha: float = 0.0) -> float:
    """``(sum_k (1 + |lambda_k|)^{2 alpha} x_k^2)^{1/2}``."""
    return float(op.norm(x, alpha))


def project(op: SpectralOperator, x, which: str) -> np.ndarray:
    return op.project(x, which)


def smoothing_profile(op: SpectralOperator, t_samples, alpha: float, beta_space: float,
                      x=None) -> np.ndarray:
    """``||S_t x||_alpha t^{alpha - beta} / ||x||_beta`` at each sample time.

    With ``x=None`` the worst case over ``x`` is returned, which for a
    diagonal operator is ``max_k (1+|lambda_k|)^{alpha-beta} e^{lambda_k t}``.
    """
    t = np.asarray(t_samples, dtype=float)
    if alpha < beta_space:
        raise InvalidInput("smoothing check needs alpha >= beta_space")
    if np.any(t <= 0):
        raise InvalidInput("sample times must be positive")
    tw = t ** (alpha - beta_space)
    if x is None:
        g = op.weights(alpha - beta_space) * op.factors(t)
        return g.max(axis=-1) * tw
    x = np.asarray(x, dtype=float)
    den = op.norm(x, beta_space)
    if den == 0:
        return np.zeros_like(t)
    num = op.norm(op.factors(t) * x, alpha, axis=1)
    return num * tw / den


def smoothing_check(op: SpectralOperator, t_samples, alpha: float, beta_space: float,
                    x=None) -> float:
    """Worst observed constant in ``||S_t x||_alpha <= C t^{beta-alpha} ||x||_beta``."""
    return float(np.max(smoothing_profile(op, t_samples, alpha, beta_space, x)))


def difference_profile(op: SpectralOperator, t_samples, gamma_tilde: float,
                       beta_space: float, x=None) -> np.ndarray:
    """``||S_t x - x||_{beta - gamma~} / ||x||_beta`` at each sample time."""
    t = np.asarray(t_samples, dtype=float)
    if x is None:
        g = op.weights(-gamma_tilde) * np.abs(op.factors(t) - 1.0)
        return g.max(axis=-1)
    x = np.asarray(x, dtype=float)
    den = op.norm(x, beta_space)
    if den == 0:
        return np.zeros_like(t)
    return op.norm((op.factors(t) - 1.0) * x, beta_space - gamma_tilde, axis=1) / den


def difference_check(op: SpectralOperator, t_samples, gamma_tilde: float, beta_space: float,
                     x=None) -> float:
    """Worst observed constant in ``||S_t x - x||_{beta-g} <= C t^g ||x||_beta``."""
    t = np.asarray(t_samples, dtype=float)
    prof = difference_profile(op, t, gamma_tilde, beta_space, x)
    return float(np.max(prof / t ** gamma_tilde))


def difference_exponent(op: SpectralOperator, t_samples, gamma_tilde: float,
                        beta_space: float, x=None) -> tuple[float, float]:
    """Log-log regression slope (and its standard error) of the difference profile."""
    t = np.asarray(t_samples, dtype=float)
    prof = difference_profile(op, t, gamma_tilde, beta_space, x)
    fit = stats.linregress(np.log(t), np.log(prof))
    return float(fit.slope), float(fit.stderr)
