"""Level-2 rough paths sampled on uniform time grids.

A rough path is stored as first-level samples ``w`` of shape ``(n, d)`` and a
dense second-level array ``w2`` of shape ``(n, n, d, d)`` where
``w2[i, j]`` holds the iterated integral over ``[t_i, t_j]`` for ``i <= j``::

    w2[i, j][a, b] = int_{t_i}^{t_j} (w_u - w_{t_i})_a dw_u^b

Entries with ``i > j`` are kept at zero. Chen's relation in this layout reads
``w2[s, t] = w2[s, u] + w2[u, t] + outer(w[u] - w[s], w[t] - w[u])``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch, InvalidConfig, InvalidInput, OutOfRange

DEFAULT_CHEN_TOL = 1e-10
FULL_CHEN_LIMIT = 257


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 = t_0 < ... < t_{n-1} = t1``."""

    t0: float
    t1: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.t1)):
            raise InvalidInput("grid endpoints must be finite")
        if self.t1 <= self.t0:
            raise InvalidInput(f"grid needs t1 > t0, got [{self.t0}, {self.t1}]")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise InvalidInput("grid needs at least two points")
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t1", float(self.t1))
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def h(self) -> float:
        return (self.t1 - self.t0) / (self.n_points - 1)

    @property
    def length(self) -> float:
        return self.t1 - self.t0

    @cached_property
    def times(self) -> np.ndarray:
        t = np.linspace(self.t0, self.t1, self.n_points)
        t.flags.writeable = False
        return t

    def index_of(self, t: float) -> int:
        """Index of grid time ``t``; raises if ``t`` is off-grid or outside."""
        x = (t - self.t0) / self.h
        k = int(round(x))
        if abs(x - k) > 1e-7:
            raise GridMismatch(f"time {t} is not on the grid [{self.t0}, {self.t1}] / {self.n_points}")
        if k < 0 or k >= self.n_points:
            raise OutOfRange(f"time {t} outside [{self.t0}, {self.t1}]")
        return k

    def refine(self, r: int) -> "TimeGrid":
        return TimeGrid(self.t0, self.t1, (self.n_points - 1) * int(r) + 1)

    def sub(self, i0: int, i1: int) -> "TimeGrid":
        """Sub-grid between indices ``i0 < i1`` inclusive."""
        t = self.times
        return TimeGrid(t[i0], t[i1], i1 - i0 + 1)

    def shifted(self, tau: float) -> "TimeGrid":
        return TimeGrid(self.t0 - tau, self.t1 - tau, self.n_points)

    def same_as(self, other: "TimeGrid", rtol: float = 1e-12) -> bool:
        scale = max(1.0, abs(self.t0), abs(self.t1))
        return (self.n_points == other.n_points
                and abs(self.t0 - other.t0) <= rtol * scale
                and abs(self.t1 - other.t1) <= rtol * scale)


def tensor_norm(x: np.ndarray) -> np.ndarray:
    """Operator 2-norm over the trailing ``(d, d)`` axes."""
    d = x.shape[-1]
    if d == 1:
        return np.abs(x[..., 0, 0])
    if d == 2:
        a, b, c, e = x[..., 0, 0], x[..., 0, 1], x[..., 1, 0], x[..., 1, 1]
        fro2 = a * a + b * b + c * c + e * e
        det = a * e - b * c
        disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
        return np.sqrt(0.5 * (fro2 + disc))
    return np.linalg.norm(x, ord=2, axis=(-2, -1))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


class RoughPath:
    """Grid-sampled level-2 rough path ``(w, w2)`` with Hölder exponent ``gamma``.

    Parameters
    ----------
    grid : TimeGrid
    gamma : float
        Hölder exponent in (1/3, 1/2].
    w : ndarray, shape (n,) or (n, d)
    w2 : ndarray, shape (n, n, d, d)
    chen_tol : float
        Admissible Chen residual at construction.
    validate : bool
        Run the construction-time audit (shape, finiteness, diagonal, Chen).
        Derived paths (shifts, windows) skip it since those operations preserve
        Chen's relation exactly.
    """

    def __init__(self, grid: TimeGrid, gamma: float, w, w2, chen_tol: float = DEFAULT_CHEN_TOL,
                 validate: bool = True):
        if not (1.0 / 3.0 < gamma <= 0.5):
            raise InvalidConfig(f"gamma must lie in (1/3, 1/2], got {gamma}")
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        w2 = np.asarray(w2, dtype=float)
        n = grid.n_points
        if w.ndim != 2 or w.shape[0] != n:
            raise GridMismatch(f"w has shape {w.shape}, grid has {n} points")
        d = w.shape[1]
        if w2.shape != (n, n, d, d):
            raise InvalidInput(f"w2 must have shape {(n, n, d, d)}, got {w2.shape}")
        self.grid = grid
        self.gamma = float(gamma)
        self.chen_tol = float(chen_tol)
        self.w = _readonly(w)
        self.w2 = _readonly(w2)
        if validate:
            self._audit()

    @property
    def d(self) -> int:
        return self.w.shape[1]

    @property
    def n(self) -> int:
        return self.grid.n_points

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def _audit(self):
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.w2))):
            raise InvalidInput("rough path contains non-finite values")
        diag = self.w2[np.arange(self.n), np.arange(self.n)]
        if np.any(diag != 0.0):
            raise InvalidInput("w2 must vanish on the diagonal")
        if self.n <= 65:
            defect = chen_defect(self)
        else:
            defect = chen_defect(self, n_samples=4096, rng=np.random.default_rng(0))
        if defect > self.chen_tol:
            raise InvalidInput(f"Chen defect {defect:.3e} exceeds tolerance {self.chen_tol:.1e}")

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.w[j] - self.w[i]

    def scaled(self, lam: float) -> "RoughPath":
        """Dilation ``(lam w, lam^2 w2)``."""
        return RoughPath(self.grid, self.gamma, lam * self.w, lam * lam * self.w2,
                         chen_tol=self.chen_tol, validate=False)

    def window(self, a: float, b: float) -> "RoughPath":
        """Restriction to the grid interval ``[a, b]``."""
        i, j = self.grid.index_of(a), self.grid.index_of(b)
        if j <= i:
            raise InvalidInput(f"empty window [{a}, {b}]")
        return RoughPath(self.grid.sub(i, j), self.gamma, self.w[i:j + 1],
                         self.w2[i:j + 1, i:j + 1], chen_tol=self.chen_tol, validate=False)

    def with_gamma(self, gamma: float) -> "RoughPath":
        return RoughPath(self.grid, gamma, self.w, self.w2, chen_tol=self.chen_tol, validate=False)

    def __repr__(self):
        g = self.grid
        return f"RoughPath(d={self.d}, gamma={self.gamma}, grid=[{g.t0}, {g.t1}]x{g.n_points})"


def _lift_from_fine(x: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear lift of fine samples ``x`` read off every ``r``-th point."""
    x0 = x - x[0]
    dx = np.diff(x0, axis=0)
    # trapezoid rule on each fine cell: (x_i - x_s) dx + dx dx / 2
    cell = np.einsum("ka,kb->kab", x0[:-1], dx) + 0.5 * np.einsum("ka,kb->kab", dx, dx)
    area = np.zeros((x.shape[0],) + cell.shape[1:])
    np.cumsum(cell, axis=0, out=area[1:])
    X = x0[::r]
    A = area[::r]
    dX = X[None, :, :] - X[:, None, :]
    w2 = A[None, :] - A[:, None] - np.einsum("sa,stb->stab", X, dX)
    n = X.shape[0]
    w2[np.tril_indices(n)] = 0.0
    return x[::r], w2


def build_smooth_lift(samples, target: TimeGrid, gamma: float = 0.5) -> RoughPath:
    """Canonical lift of a path sampled on a refinement of ``target``.

    Parameters
    ----------
    samples : array_like, shape (m,) or (m, d)
        Path values on the internal grid, which must refine ``target`` by an
        integer factor ``r = (m - 1) / (n - 1)``.
    target : TimeGrid
    gamma : float

    Returns
    -------
    RoughPath
        ``w`` is the restriction of ``samples`` to ``target``; ``w2`` is the
        trapezoid value of the iterated integral along the internal grid.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not np.all(np.isfinite(x)):
        raise InvalidInput("samples contain non-finite values")
    m, n = x.shape[0], target.n_points
    if m < n or (m - 1) % (n - 1):
        raise GridMismatch(f"{m} samples do not refine a grid of {n} points")
    w, w2 = _lift_from_fine(x, (m - 1) // (n - 1))
    return RoughPath(target, gamma, w, w2)


def lift_function(fn, grid: TimeGrid, gamma: float = 0.5, refinement: int = 16) -> RoughPath:
    """Lift of ``t -> fn(t)`` evaluated on ``grid`` refined by ``refinement``."""
    fine = grid.refine(refinement)
    return build_smooth_lift(np.asarray(fn(fine.times), dtype=float), grid, gamma)


def brownian_samples(rng: np.random.Generator, grid: TimeGrid, d: int) -> np.ndarray:
    """Brownian path on ``grid``, pinned to zero at time 0 when 0 is a grid time."""
    inc = rng.standard_normal((grid.n_points - 1, d)) * np.sqrt(grid.h)
    x = np.zeros((grid.n_points, d))
    np.cumsum(inc, axis=0, out=x[1:])
    if grid.t0 < 0.0 < grid.t1 or grid.t0 == 0.0:
        try:
            x -= x[grid.index_of(0.0)]
        except GridMismatch:
            pass
    return x


def build_bm_lift(seed: int, grid: TimeGrid, d: int = 1, refinement: int = 16,
                  gamma: float = 0.45) -> RoughPath:
    """Geometric (Stratonovich) lift of a sampled Brownian motion.

    Increments are drawn on ``grid`` refined by ``refinement`` and the lift is
    the piecewise-linear one of :func:`build_smooth_lift`.
    """
    if int(refinement) != refinement or refinement < 4:
        raise InvalidConfig(f"refinement must be an integer >= 4, got {refinement}")
    if d < 1:
        raise InvalidConfig("dimension d must be positive")
    rng = np.random.default_rng(seed)
    x = brownian_samples(rng, grid.refine(int(refinement)), int(d))
    return build_smooth_lift(x, grid, gamma)


def pure_area_path(a, grid: TimeGrid, gamma: float = 0.5) -> RoughPath:
    """Driver with ``w = 0`` and ``w2[s, t] = (t - s) a`` for antisymmetric ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise InvalidInput("area must be a square matrix")
    if not np.all(np.isfinite(a)) or np.max(np.abs(a + a.T)) > 0.0:
        raise InvalidInput("area must be antisymmetric")
    t = grid.times
    dt = np.triu(t[None, :] - t[:, None])
    w2 = dt[:, :, None, None] * a
    return RoughPath(grid, gamma, np.zeros((grid.n_points, a.shape[0])), w2)


def _chen_full(w: np.ndarray, w2: np.ndarray) -> float:
    """Exact max of Chen residual norms over all grid triples.

    Blocks at a fixed middle index whose largest Frobenius norm cannot beat
    the running maximum skip the operator-norm evaluation.
    """
    n = w.shape[0]
    comp = np.ascontiguousarray(np.moveaxis(w2, (2, 3), (0, 1)))
    best2 = 0.0
    for u in range(n):
        left = (w[u] - w[:u + 1]).T
        right = (w[u:] - w[u]).T
        res = comp[:, :, :u + 1, u:] - comp[:, :, u, u:][:, :, None]
        res -= comp[:, :, :u + 1, u][..., None]
        res -= left[:, None, :, None] * right[None, :, None, :]
        fro2 = np.einsum("ijst,ijst->st", res, res)
        if fro2.max() <= best2:
            continue
        best2 = max(best2, float(tensor_norm(np.moveaxis(res, (0, 1), (2, 3))).max()) ** 2)
    return float(np.sqrt(best2))


def chen_defect(p: RoughPath, n_samples: int | None = None, rng=None) -> float:
    """Largest Chen residual over grid triples ``s <= u <= t``.

    The full O(n^3) scan runs for grids up to 257 points or when ``n_samples``
    is None and the grid is small; otherwise ``n_samples`` random triples plus
    all consecutive triples are audited.
    """
    w, w2, n = p.w, p.w2, p.n
    if n_samples is None and n <= FULL_CHEN_LIMIT:
        return _chen_full(w, w2)
    if n_samples is None:
        n_samples = 20000
    rng = np.random.default_rng(0) if rng is None else rng
    idx = np.sort(rng.integers(0, n, size=(n_samples, 3)), axis=1)
    k = np.arange(n - 2)
    idx = np.concatenate([idx, np.stack([k, k + 1, k + 2], axis=1)])
    s, u, t = idx.T
    res = (w2[s, t] - w2[s, u] - w2[u, t]
           - (w[u] - w[s])[:, :, None] * (w[t] - w[u])[:, None, :])
    return float(tensor_norm(res).max())


def _holder_first(grid: TimeGrid, gamma: float, w: np.ndarray) -> float:
    h = grid.h
    best = 0.0
    for k in range(1, grid.n_points):
        dw = np.linalg.norm(w[k:] - w[:-k], axis=-1)
        best = max(best, float(dw.max()) / (k * h) ** gamma)
    return best


def _holder_second(grid: TimeGrid, gamma: float, w2: np.ndarray) -> float:
    t = grid.times
    iu = np.triu_indices(grid.n_points, 1)
    dt = (t[iu[1]] - t[iu[0]]) ** (2.0 * gamma)
    return float((tensor_norm(w2[iu]) / dt).max())


def holder_norms(p: RoughPath) -> tuple[float, float]:
    """Discrete Hölder norms ``(|w|_gamma, |w2|_{2 gamma})`` over grid pairs.

    These are suprema over grid pairs and hence lower bounds for the
    continuum norms.
    """
    return (_holder_first(p.grid, p.gamma, p.w), _holder_second(p.grid, p.gamma, p.w2))


def shift(p: RoughPath, tau: float) -> RoughPath:
    """Time shift ``w_t -> w_{t+tau} - w_tau`` and ``w2_{t,s} -> w2_{t+tau,s+tau}``.

    The result lives on the grid translated by ``-tau``; ``tau`` must be a grid
    time of ``p``.
    """
    k = p.grid.index_of(tau)
    return RoughPath(p.grid.shifted(tau), p.gamma, p.w - p.w[k], p.w2,
                     chen_tol=p.chen_tol, validate=False)


def segment(p: RoughPath, a: float, b: float) -> RoughPath:
    """Shifted window: ``shift(p, a)`` restricted to ``[0, b - a]``."""
    i, j = p.grid.index_of(a), p.grid.index_of(b)
    if j <= i:
        raise InvalidInput(f"empty segment [{a}, {b}]")
    grid = TimeGrid(0.0, (j - i) * p.grid.h, j - i + 1)
    return RoughPath(grid, p.gamma, p.w[i:j + 1] - p.w[i], p.w2[i:j + 1, i:j + 1],
                     chen_tol=p.chen_tol, validate=False)


def rough_metric(p: RoughPath, q: RoughPath) -> float:
    """Inhomogeneous rough path distance ``|w - v|_gamma + |w2 - v2|_{2 gamma}``."""
    if not p.grid.same_as(q.grid) or p.d != q.d:
        raise GridMismatch("rough_metric needs identical grids and dimensions")
    gamma = p.gamma
    return (_holder_first(p.grid, gamma, p.w - q.w)
            + _holder_second(p.grid, gamma, p.w2 - q.w2))
