"""Drift and diffusion nonlinearities acting on mode coefficients.

Pointwise values act on the last axis of ``y`` (the mode axis of a single
state). A drift ``f`` maps ``(..., N) -> (..., N)``; a diffusion ``g`` with
``d`` noise components maps ``(..., N) -> (..., N, d)``. Directional
derivatives take a stack of directions ``v`` of shape ``(..., N, k)`` and
return ``(..., N, k)`` for drifts and ``(..., N, d, k)`` for diffusions.

Path-level evaluation goes through :meth:`Nonlinearity.evaluate` and
:meth:`Nonlinearity.compose`, which is where the cut-off wrapper hooks in.
"""
from __future__ import annotations

import numpy as np
from scipy import fft

from .controlled import ControlledPath, CutoffConfig, bump, norms
from .errors import AssumptionError, InvalidConfig, InvalidInput

# scalar profiles with derivatives up to order 3: (s, s', s'', s''', sup|s'|)
PROFILES = {
    "sin": (np.sin, np.cos, lambda u: -np.sin(u), lambda u: -np.cos(u), 1.0),
    "tanh": (np.tanh,
             lambda u: 1 - np.tanh(u) ** 2,
             lambda u: -2 * np.tanh(u) * (1 - np.tanh(u) ** 2),
             lambda u: (1 - np.tanh(u) ** 2) * (6 * np.tanh(u) ** 2 - 2),
             1.0),
    # vanishing derivative at the origin
    "sin2": (lambda u: np.sin(u) ** 2,
             lambda u: np.sin(2 * u),
             lambda u: 2 * np.cos(2 * u),
             lambda u: -4 * np.sin(2 * u),
             1.0),
    # vanishing first and second derivative at the origin
    "sin3": (lambda u: np.sin(u) ** 3,
             lambda u: 3 * np.sin(u) ** 2 * np.cos(u),
             lambda u: 6 * np.sin(u) * np.cos(u) ** 2 - 3 * np.sin(u) ** 3,
             lambda u: 6 * np.cos(u) ** 3 - 21 * np.sin(u) ** 2 * np.cos(u),
             2 / np.sqrt(3)),
}


class Nonlinearity:
    """Base class; subclasses implement :meth:`value` and :meth:`jvp`.

    Attributes
    ----------
    n_modes : int
    noise_dim : int or None
        ``None`` for drifts, ``d`` for diffusions.
    lipschitz : float
        Global Lipschitz constant in the coefficient norm.
    order : int
        Number of available derivatives.
    """

    kind = "generic"
    order = 3

    def __init__(self, n_modes: int, noise_dim: int | None = None, lipschitz: float = np.inf):
        self.n_modes = int(n_modes)
        self.noise_dim = noise_dim
        self.lipschitz = float(lipschitz)

    @property
    def is_diffusion(self) -> bool:
        return self.noise_dim is not None

    def value(self, y):
        raise NotImplementedError

    def jvp(self, y, v):
        raise NotImplementedError

    # -- path level --------------------------------------------------------

    def evaluate(self, cp: ControlledPath, p=None, op=None) -> np.ndarray:
        return self.value(cp.y)

    def compose(self, cp: ControlledPath, p=None, op=None) -> ControlledPath:
        """``(g(y), Dg(y) y')`` with the derivative contracted per noise index."""
        return ControlledPath(cp.grid, self.value(cp.y), self.jvp(cp.y, cp.yp), cp.eta, cp.alpha)

    # -- assumptions -------------------------------------------------------

    def stationarity_defects(self, n_probe: int = 4, eps: float = 1e-4, seed: int = 0) -> dict:
        """Magnitudes of ``F(0)``, ``DF(0)`` and a finite-difference ``D^2F(0)``."""
        rng = np.random.default_rng(seed)
        z = np.zeros(self.n_modes)
        v = rng.standard_normal((self.n_modes, n_probe))
        out = {"value": float(np.abs(self.value(z)).max()),
               "first": float(np.abs(self.jvp(z, v)).max())}
        second = 0.0
        for k in range(n_probe):
            vk = v[:, k]
            dp = self.jvp(eps * vk, vk[:, None])
            dm = self.jvp(-eps * vk, vk[:, None])
            second = max(second, float(np.abs(dp - dm).max()) / (2 * eps))
        out["second"] = second
        return out

    def check_stationary(self, tol: float = 1e-8):
        """Raise :class:`AssumptionError` unless the origin is a degenerate zero.

        Drifts need ``f(0) = 0`` and ``Df(0) = 0``; diffusions additionally
        ``D^2 g(0) = 0``.
        """
        dfx = self.stationarity_defects()
        need = ["value", "first"] + (["second"] if self.is_diffusion else [])
        bad = {k: dfx[k] for k in need if dfx[k] > tol}
        if bad:
            raise AssumptionError(f"{self.kind} nonlinearity violates stationarity at 0: {bad}")


class ZeroNonlinearity(Nonlinearity):
    kind = "zero"

    def __init__(self, n_modes: int, noise_dim: int | None = None):
        super().__init__(n_modes, noise_dim, lipschitz=0.0)

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return np.zeros(y.shape + ((self.noise_dim,) if self.is_diffusion else ()))

    def jvp(self, y, v):
        v = np.asarray(v, dtype=float)
        if self.is_diffusion:
            return np.zeros(v.shape[:-1] + (self.noise_dim, v.shape[-1]))
        return np.zeros(v.shape)


class LinearNonlinearity(Nonlinearity):
    """``f(y) = M y`` or ``g(y)[:, i] = M_i y``.

    Parameters
    ----------
    matrix : array_like
        Shape ``(N, N)`` for a drift or ``(d, N, N)`` for a diffusion; a 1-d
        array of length N (or shape ``(d, N)``) is read as a diagonal.
    diffusion : bool
    """

    kind = "linear"
    order = 99

    def __init__(self, matrix, diffusion: bool = False):
        M = np.asarray(matrix, dtype=float)
        if diffusion:
            if M.ndim == 2:
                M = np.stack([np.diag(r) for r in M])
            if M.ndim != 3 or M.shape[1] != M.shape[2]:
                raise InvalidInput("diffusion matrix must have shape (d, N, N)")
            lip = float(np.sqrt(sum(np.linalg.norm(m, 2) ** 2 for m in M)))
            super().__init__(M.shape[1], M.shape[0], lip)
        else:
            if M.ndim == 1:
                M = np.diag(M)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise InvalidInput("drift matrix must be square")
            super().__init__(M.shape[0], None, float(np.linalg.norm(M, 2)))
        self.matrix = M

    def value(self, y):
        y = np.asarray(y, dtype=float)
        if self.is_diffusion:
            return np.einsum("iab,...b->...ai", self.matrix, y)
        return y @ self.matrix.T

    def jvp(self, y, v):
        v = np.asarray(v, dtype=float)
        if self.is_diffusion:
            return np.einsum("iab,...bk->...aik", self.matrix, v)
        return np.einsum("ab,...bk->...ak", self.matrix, v)


class CollocationNonlinearity(Nonlinearity):
    """Pointwise map applied on the physical collocation grid.

    The state is transformed with the orthonormal type-I sine transform, the
    profile ``sigma`` is applied pointwise, and the result is transformed back:
    ``F(y) = c Phi sigma(Phi y)``. For a diffusion ``scale`` holds one factor per
    noise component.
    """

    kind = "smooth-bounded"

    def __init__(self, n_modes: int, profile: str = "sin", scale=1.0, diffusion: bool = False):
        if profile not in PROFILES:
            raise InvalidConfig(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        self.profile = profile
        self._s = PROFILES[profile]
        c = np.atleast_1d(np.asarray(scale, dtype=float))
        if not diffusion and c.size != 1:
            raise InvalidInput("a drift takes a single scale")
        super().__init__(n_modes, c.size if diffusion else None,
                         float(np.sqrt(np.sum(c ** 2))) * self._s[4])
        self.scale = c
        probe = np.random.default_rng(1).standard_normal((3, n_modes))
        err = np.abs(self._phi(self._phi(probe)) - probe).max()
        if err > 1e-12:
            raise InvalidConfig(f"collocation transform round trip error {err:.1e}")

    @staticmethod
    def _phi(x, axis=-1):
        return fft.dst(x, type=1, norm="ortho", axis=axis)

    def _out(self, z):
        if self.is_diffusion:
            return z[..., None] * self.scale
        return self.scale[0] * z

    def value(self, y):
        u = self._phi(np.asarray(y, dtype=float))
        return self._out(self._phi(self._s[0](u)))

    def jvp(self, y, v):
        u = self._phi(np.asarray(y, dtype=float))
        pv = self._phi(np.asarray(v, dtype=float), axis=-2)
        z = self._phi(self._s[1](u)[..., None] * pv, axis=-2)
        if self.is_diffusion:
            return z[..., None, :] * self.scale[:, None]
        return self.scale[0] * z


class ModewiseNonlinearity(Nonlinearity):
    """``F(y)_k = c_k sigma(y_k)`` (drift) or ``g(y)_{k,i} = c_{k,i} sigma(y_k)``."""

    kind = "smooth-bounded"

    def __init__(self, n_modes: int, profile: str = "sin", scale=1.0, diffusion: bool = False,
                 noise_dim: int = 1):
        if profile not in PROFILES:
            raise InvalidConfig(f"unknown profile {profile!r}")
        self.profile = profile
        self._s = PROFILES[profile]
        shape = (n_modes, noise_dim) if diffusion else (n_modes,)
        c = np.broadcast_to(np.asarray(scale, dtype=float), shape).copy()
        lip = float(np.abs(c).max() * (np.sqrt(noise_dim) if diffusion else 1.0)) * self._s[4]
        super().__init__(n_modes, noise_dim if diffusion else None, lip)
        self.scale = c

    def value(self, y):
        s = self._s[0](np.asarray(y, dtype=float))
        return s[..., None] * self.scale if self.is_diffusion else s * self.scale

    def jvp(self, y, v):
        ds = self._s[1](np.asarray(y, dtype=float))[..., None] * np.asarray(v, dtype=float)
        if self.is_diffusion:
            return ds[..., None, :] * self.scale[..., None]
        return ds * self.scale[:, None]


class FieldNonlinearity(Nonlinearity):
    """Nonlinearity from user callables ``value(y)`` and ``jvp(y, v)``."""

    kind = "smooth-bounded"

    def __init__(self, n_modes: int, value, jvp, noise_dim: int | None = None,
                 lipschitz: float = np.inf, name: str = "field"):
        super().__init__(n_modes, noise_dim, lipschitz)
        self._value, self._jvp = value, jvp
        self.name = name

    def value(self, y):
        return self._value(np.asarray(y, dtype=float))

    def jvp(self, y, v):
        return self._jvp(np.asarray(y, dtype=float), np.asarray(v, dtype=float))


def coupled_quadratic(a: float = 1.0, b: float = 0.5) -> FieldNonlinearity:
    """Two-mode drift ``(b sin y0 sin y1, a sin^2 y0)``.

    Quadratic at the origin with bounded derivatives; mode 0 is meant to be
    the unstable one, so ``a`` bends the unstable manifold into the stable
    direction.
    """

    def value(y):
        s0, s1 = np.sin(y[..., 0]), np.sin(y[..., 1])
        return np.stack([b * s0 * s1, a * s0 * s0], axis=-1)

    def jvp(y, v):
        s0, s1 = np.sin(y[..., 0]), np.sin(y[..., 1])
        c0, c1 = np.cos(y[..., 0]), np.cos(y[..., 1])
        v0, v1 = v[..., 0, :], v[..., 1, :]
        r0 = b * (c0 * s1)[..., None] * v0 + b * (s0 * c1)[..., None] * v1
        r1 = a * (2 * s0 * c0)[..., None] * v0
        return np.stack([r0, r1], axis=-2)

    return FieldNonlinearity(2, value, jvp, None, lipschitz=np.hypot(2 * abs(b), 2 * abs(a)),
                             name="coupled-quadratic")


class TruncatedNonlinearity(Nonlinearity):
    """Cut-off version ``F_R = F o chi_R`` of a nonlinearity.

    The cut-off acts on whole controlled paths: the path is scaled by
    ``phi(|y, y'|_D / R)`` before ``F`` is applied, and the Gubinelli
    derivative of ``g_R(y)`` is ``Dg(chi_R y) chi_R(y)'``.
    """

    def __init__(self, base: Nonlinearity, cfg: CutoffConfig, check: bool = True):
        if check:
            base.check_stationary()
        super().__init__(base.n_modes, base.noise_dim, base.lipschitz)
        self.base = base
        self.cfg = cfg
        self.kind = f"truncated-{base.kind}"

    def value(self, y):
        return self.base.value(y)

    def jvp(self, y, v):
        return self.base.jvp(y, v)

    def factor(self, cp: ControlledPath, p, op) -> float:
        return bump(norms(cp, p, op).d_norm / self.cfg.R)

    def evaluate(self, cp: ControlledPath, p=None, op=None) -> np.ndarray:
        c = self.factor(cp, p, op)
        return self.base.value(c * cp.y)

    def compose(self, cp: ControlledPath, p=None, op=None) -> ControlledPath:
        c = self.factor(cp, p, op)
        y = c * cp.y
        return ControlledPath(cp.grid, self.base.value(y), self.base.jvp(y, c * cp.yp),
                              cp.eta, cp.alpha)


def truncated_nonlinearity(fg: Nonlinearity, cfg: CutoffConfig) -> TruncatedNonlinearity:
    """Wrap ``fg`` with the path cut-off; checks the stationarity assumptions."""
    return TruncatedNonlinearity(fg, cfg, check=True)


def evaluate_pair(f: Nonlinearity, g: Nonlinearity, cp: ControlledPath, p, op):
    """``f(y)`` values, the composed path ``g(y)`` and the ``D`` norm of ``cp``.

    When ``f`` and ``g`` are truncated with the same cut-off the factor is
    computed once.
    """
    dn = norms(cp, p, op).d_norm
    tf, tg = isinstance(f, TruncatedNonlinearity), isinstance(g, TruncatedNonlinearity)
    cf = bump(dn / f.cfg.R) if tf else 1.0
    cg = cf if (tf and tg and f.cfg == g.cfg) else (bump(dn / g.cfg.R) if tg else 1.0)
    fb = f.base if tf else f
    gb = g.base if tg else g
    fv = fb.value(cf * cp.y)
    y = cg * cp.y
    z = ControlledPath(cp.grid, gb.value(y), gb.jvp(y, cg * cp.yp), cp.eta, cp.alpha)
    return fv, z, dn
