"""Discrete Lyapunov-Perron fixed point and local unstable manifolds.

A sequence ``Gamma`` holds ``K_max`` controlled paths on ``[0, 1]``; row ``r``
is the piece on the global interval ``[j, j + 1]`` with ``j = -1 - r`` and is
driven by ``Theta_j w``. Writing ``P_r(t)`` for the unit-interval mild integral
``int_0^t S_{t-u} (f_R(y^r_u) du + g_R(y^r_u) dw_u)`` the transform reads

    unstable: S_{t-1-r} xi - S_{t-1} A_r + P_r(t),   A_r = sum_{q<=r} S_{q-r} P_q(1)
    stable:   S_t B_r + P_r(t),                      B_r = sum_{q>r} S_{q-r-1} P_q(1)

with the stable history truncated after ``K_max`` unit intervals. Both
accumulators satisfy one-term recursions, so one application costs ``K_max``
unit-interval integrals.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .controlled import ControlledPath, CutoffConfig, norms, solve_cutoff_radius
from .driver import RoughPath, TimeGrid, segment, shift
from .errors import ConfigError, ConvergenceError, InvalidConfig, InvalidInput
from .integrator import convolution_path, drift_path
from .nonlinearity import Nonlinearity, TruncatedNonlinearity, evaluate_pair
from .solver import SolveConfig, solve_global
from .spectral import SpectralOperator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LPConfig:
    """Parameters of the Lyapunov-Perron iteration.

    ``delta`` defaults to ``(alpha - beta) / 2``.
    """

    alpha: float
    beta: float
    delta: float | None = None
    K: float = 0.04
    K_max: int = 12
    lp_tol: float = 1e-8
    max_lp_iters: int = 60
    enforce_gap: bool = True

    def __post_init__(self):
        if not (self.alpha > self.beta > 0):
            raise InvalidConfig("need alpha > beta > 0")
        if self.delta is None:
            object.__setattr__(self, "delta", 0.5 * (self.alpha - self.beta))
        if self.delta <= 0:
            raise InvalidConfig("delta must be positive")
        if self.K_max < 2:
            raise InvalidConfig("K_max must be at least 2")
        if self.K < 0 or self.lp_tol <= 0 or self.max_lp_iters < 1:
            raise InvalidConfig("K, lp_tol and max_lp_iters must be positive")


def gap_bracket(alpha: float, beta: float, delta: float, C: float) -> float:
    """Coefficient of ``K`` in the gap condition."""
    if alpha <= delta:
        raise ConfigError("gap condition needs alpha > delta")
    bd, ad = beta + delta, alpha - delta
    first = math.exp(bd) * (C * math.exp(-delta) + 1) / (1 - math.exp(-bd))
    second = (math.exp(-ad) - 1) * (C * math.exp(-delta) + math.exp(ad)) / (1 - math.exp(ad))
    return first + second


def gap_condition(cfg: LPConfig, C: float) -> tuple[float, bool]:
    """``K * bracket(alpha, beta, delta, C)`` and whether it is at most 1/2."""
    value = cfg.K * gap_bracket(cfg.alpha, cfg.beta, cfg.delta, C)
    return value, value <= 0.5


def admissible_K(cfg: LPConfig, C: float) -> float:
    """Largest ``K`` meeting the gap condition."""
    return 0.5 / gap_bracket(cfg.alpha, cfg.beta, cfg.delta, C)


@dataclass
class LPSequence:
    """Controlled paths on ``[0, 1]``, most recent interval first.

    ``y`` has shape ``(K_max, n, N)`` and ``yp`` shape ``(K_max, n, N, d)``;
    ``y[r, -1]`` equals ``y[r - 1, 0]``.
    """

    grid: TimeGrid
    y: np.ndarray
    yp: np.ndarray
    tail_bound: float = 0.0
    unit_norms: np.ndarray | None = None

    @classmethod
    def zeros(cls, grid: TimeGrid, K_max: int, n_modes: int, d: int) -> "LPSequence":
        n = grid.n_points
        return cls(grid, np.zeros((K_max, n, n_modes)), np.zeros((K_max, n, n_modes, d)))

    @property
    def K_max(self) -> int:
        return self.y.shape[0]

    def path(self, r: int) -> ControlledPath:
        return ControlledPath(self.grid, self.y[r], self.yp[r])

    def endpoint_mismatch(self) -> float:
        if self.K_max < 2:
            return 0.0
        return float(np.abs(self.y[1:, -1] - self.y[:-1, 0]).max())

    def __sub__(self, other: "LPSequence") -> "LPSequence":
        return LPSequence(self.grid, self.y - other.y, self.yp - other.yp)


def unit_norms(seq: LPSequence, drivers, op: SpectralOperator) -> np.ndarray:
    return np.array([norms(seq.path(r), drivers[r], op).d_norm for r in range(seq.K_max)])


def bc_norm(seq: LPSequence, drivers, op: SpectralOperator, delta: float,
            per_unit: np.ndarray | None = None) -> float:
    """``sup_r e^{delta (r + 1)} |y^r, y'^r|_D``."""
    u = unit_norms(seq, drivers, op) if per_unit is None else per_unit
    return float(np.max(np.exp(delta * (np.arange(u.size) + 1)) * u))


def driver_family(p_extended: RoughPath, K_max: int, end: float = 0.0) -> list:
    """Unit-interval drivers ``Theta_j w`` on ``[0, 1]`` for ``j = end-1, ..., end-K_max``."""
    fam = []
    for r in range(K_max):
        j = end - 1 - r
        fam.append(segment(p_extended, j, j + 1))
    g0 = fam[0].grid
    if abs(g0.t1 - 1.0) > 1e-12 or any(q.n != fam[0].n for q in fam):
        raise InvalidInput("extended driver grid must resolve unit intervals uniformly")
    return fam


def _unit_integrals(op, fR, gR, seq: LPSequence, drivers):
    """``P_r`` on the grid, ``g_R(y^r)`` and ``|y^r|_D`` for every row."""
    K = seq.K_max
    P = np.empty_like(seq.y)
    G = np.empty_like(seq.yp)
    dn = np.empty(K)
    for r in range(K):
        fv, z, dn[r] = evaluate_pair(fR, gR, seq.path(r), drivers[r], op)
        P[r] = drift_path(op, fv, seq.grid) + convolution_path(op, z.y, z.yp, drivers[r], "trapezoid")
        G[r] = z.y
    return P, G, dn


def _masks(op: SpectralOperator):
    return op.unstable_mask, op.stable_mask


def tail_bound(cfg: LPConfig, P1_norms: np.ndarray, dn: np.ndarray, bc: float) -> float:
    """Geometric bound on the stable history dropped beyond ``K_max``.

    The unit-interval integral map is measured to have gain
    ``L = max |P_r(1)| / |y^r|_D``; a sequence with ``BC_delta`` norm ``bc``
    then contributes at most ``L bc e^{-delta} e^{-(beta+delta) K_max} / (1 - e^{-(beta+delta)})``
    to the graph.
    """
    ok = dn > 0
    L = float(np.max(P1_norms[ok] / dn[ok])) if np.any(ok) else 0.0
    bd = cfg.beta + cfg.delta
    return L * bc * math.exp(-cfg.delta) * math.exp(-bd * cfg.K_max) / (1 - math.exp(-bd))


def lp_apply(drivers, seq: LPSequence, xi_u, cfg: LPConfig, op: SpectralOperator,
             fR: Nonlinearity, gR: Nonlinearity) -> LPSequence:
    """One application of the discrete Lyapunov-Perron transform.

    The returned sequence carries the logged geometric ``tail_bound`` of the
    truncated stable history and the ``D`` norms of the input rows.
    """
    if len(drivers) < seq.K_max:
        raise InvalidInput("driver family shorter than the sequence")
    mu, ms = _masks(op)
    xi = np.where(mu, np.asarray(xi_u, dtype=float), 0.0)
    lam = op.eigenvalues
    t = seq.grid.times
    P, G, dn = _unit_integrals(op, fR, gR, seq, drivers)
    P1 = P[:, -1]
    K = seq.K_max
    back = np.where(mu, np.exp(-np.where(mu, lam, 0.0)), 0.0)
    fwd = np.where(ms, np.exp(np.where(ms, lam, 0.0)), 0.0)
    A = np.empty((K, lam.size))
    B = np.zeros((K, lam.size))
    A[0] = np.where(mu, P1[0], 0.0)
    for r in range(1, K):
        A[r] = back * A[r - 1] + np.where(mu, P1[r], 0.0)
    for r in range(K - 2, -1, -1):
        B[r] = np.where(ms, P1[r + 1], 0.0) + fwd * B[r + 1]
    lam_u = np.where(mu, lam, 0.0)
    lam_s = np.where(ms, lam, 0.0)
    Y = np.empty_like(seq.y)
    for r in range(K):
        Eu_xi = np.exp(np.multiply.outer(t - 1 - r, lam_u))
        Eu_A = np.exp(np.multiply.outer(t - 1, lam_u))
        Es = np.exp(np.multiply.outer(t, lam_s))
        un = Eu_xi * xi - Eu_A * A[r] + P[r]
        st = Es * B[r] + P[r]
        Y[r] = np.where(mu, un, 0.0) + np.where(ms, st, 0.0)
    # exact endpoint matching and the unstable anchor
    Y[0, -1] = np.where(mu, xi, Y[0, -1])
    for r in range(1, K):
        Y[r, -1] = Y[r - 1, 0]
    out = LPSequence(seq.grid, Y, G)
    bc = float(np.max(np.exp(cfg.delta * (np.arange(K) + 1)) * dn))
    P1n = np.array([op.norm(P1[r]) for r in range(K)])
    out.tail_bound = tail_bound(cfg, P1n, dn, bc)
    out.unit_norms = dn
    return out


def embedding_constant(op: SpectralOperator, p_unit: RoughPath, cfg: LPConfig,
                       m_max: int = 4) -> float:
    """Measured ``C`` in ``|S_{.+m} x, 0|_D <= C e^{-beta m} |x|`` (stable, ``m >= 0``)
    and ``|S_{.-m} x, 0|_D <= C e^{-alpha m} |x|`` (unstable), over unit vectors."""
    mu, ms = _masks(op)
    t = p_unit.grid.times
    d = p_unit.d
    best = 0.0
    for k in range(op.n_modes):
        e = np.zeros(op.n_modes)
        e[k] = 1.0
        for m in range(m_max + 1):
            if ms[k]:
                shift_t, ref = m, math.exp(-cfg.beta * m)
            elif mu[k]:
                shift_t, ref = -m, math.exp(-cfg.alpha * m)
            else:
                continue
            y = op.factors(t + shift_t) * e
            cp = ControlledPath(p_unit.grid, y, np.zeros(y.shape + (d,)))
            best = max(best, norms(cp, p_unit, op).d_norm / ref)
    return best


@dataclass
class LPResult:
    sequence: LPSequence
    iterations: int
    rates: list
    distances: list
    tail_bound: float
    bc_norm: float
    converged: bool = True

    @property
    def max_rate(self) -> float:
        return max(self.rates, default=0.0)


def lp_fixed_point(xi_u, drivers, cfg: LPConfig, op: SpectralOperator, fR: Nonlinearity,
                   gR: Nonlinearity, C: float | None = None, rate_limit: float = 0.9) -> LPResult:
    """Fixed point of :func:`lp_apply` by iteration from the zero sequence.

    ``iterations`` counts applications up to the first iterate that the next
    application moves by at most ``lp_tol`` in ``BC_delta``.

    Raises
    ------
    ConfigError
        If ``cfg.enforce_gap`` and the gap condition fails for ``C``.
    ConvergenceError
        On a measured contraction rate at or above ``rate_limit`` or when
        ``max_lp_iters`` is exhausted; carries the rate trace.
    """
    if C is None:
        C = embedding_constant(op, drivers[0], cfg)
    value, ok = gap_condition(cfg, C)
    if not ok:
        msg = f"gap condition violated: {value:.4f} > 1/2 (K = {cfg.K}, C = {C:.4f})"
        if cfg.enforce_gap:
            raise ConfigError(msg)
        log.warning(msg)
    grid = drivers[0].grid
    d = drivers[0].d
    seq = LPSequence.zeros(grid, cfg.K_max, op.n_modes, d)
    rates, dists = [], []
    prev = None
    for it in range(1, cfg.max_lp_iters + 2):
        new = lp_apply(drivers, seq, xi_u, cfg, op, fR, gR)
        diff = new - seq
        dist = bc_norm(diff, drivers, op, cfg.delta)
        dists.append(dist)
        scale = max(1.0, float(np.abs(new.y).max()))
        floor = 1e3 * np.finfo(float).eps * scale
        if prev is not None and prev > floor and dist > floor:
            q = dist / prev
            rates.append(q)
            if q >= rate_limit:
                raise ConvergenceError(
                    f"Lyapunov-Perron contraction rate {q:.3f} >= {rate_limit}", rates)
        if dist <= cfg.lp_tol:
            bc = bc_norm(new, drivers, op, cfg.delta)
            q = max(rates, default=0.0)
            tb = new.tail_bound + (q / (1 - q) * dist if q < 1 else 0.0)
            return LPResult(new, it - 1, rates, dists, tb, bc)
        prev = dist
        seq = new
    raise ConvergenceError(f"no Lyapunov-Perron fixed point within {cfg.max_lp_iters} iterations",
                           rates)


@dataclass
class GraphPoint:
    xi_u: np.ndarray
    h_u: np.ndarray
    h_series: np.ndarray


def extract_graph(result: LPResult | LPSequence, drivers=None, op: SpectralOperator | None = None,
                  fR=None, gR=None) -> GraphPoint:
    """``h^u = pi^s Gamma[-1, 1]`` together with the history-series form.

    The series ``sum_r S_r pi^s P_r(1)`` is recomputed from fresh integrals of
    the converged rows when the drivers, operator and nonlinearities are
    supplied; otherwise it repeats the direct value.
    """
    seq = result.sequence if isinstance(result, LPResult) else result
    last = seq.y[0, -1]
    if op is None:
        return GraphPoint(last.copy(), last.copy(), last.copy())
    mu, ms = _masks(op)
    xi = np.where(mu, last, 0.0)
    h = np.where(ms, last, 0.0)
    if drivers is None or fR is None or gR is None:
        return GraphPoint(xi, h, h.copy())
    P, _, _ = _unit_integrals(op, fR, gR, seq, drivers)
    r = np.arange(seq.K_max)
    lam_s = np.where(ms, op.eigenvalues, 0.0)
    series = np.sum(np.exp(np.multiply.outer(r, lam_s)) * P[:, -1], axis=0)
    return GraphPoint(xi, h, np.where(ms, series, 0.0))


# -- cut-off calibration -----------------------------------------------------

def _second_derivative_sup(fn: Nonlinearity, n_probe: int, seed: int, eps: float = 1e-4) -> float:
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_probe):
        y = rng.uniform(-1, 1, fn.n_modes)
        v = rng.standard_normal(fn.n_modes)
        v /= np.linalg.norm(v)
        dp = fn.jvp(y + eps * v, v[:, None])
        dm = fn.jvp(y - eps * v, v[:, None])
        best = max(best, float(np.linalg.norm(dp - dm)) / (2 * eps))
    return best


def cutoff_constants(f: Nonlinearity, g: Nonlinearity, n_probe: int = 64,
                     seed: int = 0) -> tuple[float, float]:
    """Measured ``(C_f, C_g)`` for :func:`solve_cutoff_radius`.

    Both are twice the sampled sup of the second directional derivative over
    the unit cube; the factor two accounts for the cut-off profile's slope.
    """
    return (2.0 * _second_derivative_sup(f, n_probe, seed),
            2.0 * _second_derivative_sup(g, n_probe, seed + 1))


def calibrated_cutoff(f: Nonlinearity, g: Nonlinearity, drivers, K: float) -> CutoffConfig:
    """Smallest radius over the driver family from the measured constants."""
    C_f, C_g = cutoff_constants(f, g)
    if C_f == 0 and C_g == 0:
        return CutoffConfig(K=K, R=1.0)
    best = None
    for q in drivers:
        c = solve_cutoff_radius(q, K, C_f, C_g)
        if best is None or c.R < best.R:
            best = c
    return best


# -- manifold ----------------------------------------------------------------

@dataclass
class ManifoldSample:
    xi_u: np.ndarray
    h_u: np.ndarray
    h_series: np.ndarray | None
    converged: bool
    iterations: int
    max_rate: float
    tail_bound: float
    error: str | None = None


@dataclass
class ManifoldGraph:
    """Sampled graph of ``h^u`` over a ball in the unstable block."""

    center: np.ndarray
    radius: float
    samples: list
    lipschitz_estimate: float
    cutoff: CutoffConfig
    C: float
    gap_value: float
    config: LPConfig
    extras: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.samples)

    def lookup(self, xi_u, tol: float = 1e-14) -> ManifoldSample | None:
        xi_u = np.asarray(xi_u, dtype=float)
        for s in self.samples:
            if np.abs(s.xi_u - xi_u).max() <= tol:
                return s
        return None


def truncate_pair(f: Nonlinearity, g: Nonlinearity, cutoff: CutoffConfig):
    return (TruncatedNonlinearity(f, cutoff, check=True),
            TruncatedNonlinearity(g, cutoff, check=True))


def unstable_mesh(op: SpectralOperator, radius: float, n_samples: int) -> np.ndarray:
    """Tensor mesh of ``[-radius, radius]^{n_u}`` embedded in the full mode vector."""
    mu = op.unstable_mask
    nu = int(mu.sum())
    if n_samples == 1:
        axes = [np.zeros(1)] * nu
    else:
        axes = [np.linspace(-radius, radius, n_samples)] * nu
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, nu)
    out = np.zeros((pts.shape[0], op.n_modes))
    out[:, mu] = pts
    return out


def _graph_lipschitz(samples: list) -> float:
    ok = [s for s in samples if s.converged]
    best = 0.0
    for a in range(len(ok)):
        for b in range(a + 1, len(ok)):
            dx = np.linalg.norm(ok[a].xi_u - ok[b].xi_u)
            if dx > 0:
                best = max(best, float(np.linalg.norm(ok[a].h_u - ok[b].h_u)) / dx)
    return best


def graph_point(op: SpectralOperator, fR, gR, drivers, cfg: LPConfig, xi_u,
                C: float | None = None) -> tuple[GraphPoint, LPResult]:
    res = lp_fixed_point(xi_u, drivers, cfg, op, fR, gR, C)
    return extract_graph(res, drivers, op, fR, gR), res


def build_manifold(op: SpectralOperator, f: Nonlinearity, g: Nonlinearity, p_extended: RoughPath,
                   cfg: LPConfig, ball_radius: float | None = None, n_samples: int = 9,
                   cutoff: CutoffConfig | None = None, points=None,
                   max_workers: int | None = None) -> ManifoldGraph:
    """Sample the local unstable manifold graph over a ball in the unstable block.

    The cut-off radius ``R`` comes from ``cutoff`` or from
    :func:`calibrated_cutoff` with budget ``cfg.K``; samples live in the ball
    of radius ``min(ball_radius, R / 4)``. ``points`` overrides the tensor
    mesh. Samples that fail to converge are kept with an error annotation.
    """
    drivers = driver_family(p_extended, cfg.K_max)
    if cutoff is None:
        cutoff = calibrated_cutoff(f, g, drivers, cfg.K)
    fR, gR = truncate_pair(f, g, cutoff)
    C = embedding_constant(op, drivers[0], cfg)
    gap_value, ok = gap_condition(cfg, C)
    rho = cutoff.R / 4
    radius = rho if ball_radius is None else min(ball_radius, rho)
    pts = unstable_mesh(op, radius, n_samples) if points is None else np.atleast_2d(points)

    def run(xi):
        try:
            gp, res = graph_point(op, fR, gR, drivers, cfg, xi, C)
            return ManifoldSample(gp.xi_u, gp.h_u, gp.h_series, True, res.iterations,
                                  res.max_rate, res.tail_bound)
        except (ConvergenceError, ConfigError) as exc:
            return ManifoldSample(np.asarray(xi, dtype=float), np.full(op.n_modes, np.nan), None,
                                  False, -1, float("nan"), float("nan"), str(exc))

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as ex:
            samples = list(ex.map(run, pts))
    else:
        samples = [run(x) for x in pts]
    graph = ManifoldGraph(np.zeros(op.n_modes), radius, samples, _graph_lipschitz(samples),
                          cutoff, C, gap_value, cfg,
                          extras={"unstable_mask": op.unstable_mask.tolist()})
    log.info("manifold: %d samples, radius %.3e, R %.3e, gap value %.4f",
             len(samples), radius, cutoff.R, gap_value)
    return graph


def tangency_slopes(op: SpectralOperator, f, g, p_extended: RoughPath, cfg: LPConfig,
                    cutoff: CutoffConfig, fractions=(0.1, 0.05, 0.025)) -> np.ndarray:
    """``max |h^u(+-r e)| / r`` at radii ``r = fraction * R`` along unstable axes."""
    drivers = driver_family(p_extended, cfg.K_max)
    fR, gR = truncate_pair(f, g, cutoff)
    C = embedding_constant(op, drivers[0], cfg)
    mu = op.unstable_mask
    out = []
    for frac in fractions:
        r = frac * cutoff.R
        worst = 0.0
        for k in np.flatnonzero(mu):
            for sgn in (1.0, -1.0):
                xi = np.zeros(op.n_modes)
                xi[k] = sgn * r
                gp, _ = graph_point(op, fR, gR, drivers, cfg, xi, C)
                worst = max(worst, float(np.linalg.norm(gp.h_u)) / r)
        out.append(worst)
    return np.array(out)


def lipschitz_in_xi(op: SpectralOperator, fR, gR, drivers, cfg: LPConfig, pairs,
                    C: float | None = None) -> tuple[np.ndarray, float]:
    """Ratios ``|Gamma(x1) - Gamma(x2)|_BC / |x1 - x2|`` and the bound ``2 C e^{alpha-delta}``."""
    if C is None:
        C = embedding_constant(op, drivers[0], cfg)
    ratios = []
    for x1, x2 in pairs:
        g1 = lp_fixed_point(x1, drivers, cfg, op, fR, gR, C).sequence
        g2 = lp_fixed_point(x2, drivers, cfg, op, fR, gR, C).sequence
        ratios.append(bc_norm(g1 - g2, drivers, op, cfg.delta)
                      / float(np.linalg.norm(np.asarray(x1) - np.asarray(x2))))
    return np.array(ratios), 2 * C * math.exp(cfg.alpha - cfg.delta)


def lp_lipschitz_probe(op: SpectralOperator, fR, gR, drivers, cfg: LPConfig, base: LPSequence,
                       xi_u, n_pairs: int = 4, scale: float = 1e-2, seed: int = 0) -> np.ndarray:
    """Measured ``|J(y) - J(v)|_BC / |y - v|_BC`` on perturbations ``v`` of ``base``.

    Perturbations vanish at the interval ends, keeping endpoint matching and
    the unstable anchor.
    """
    rng = np.random.default_rng(seed)
    t = base.grid.times
    bump_t = (t * (1 - t))[None, :, None]
    Jy = lp_apply(drivers, base, xi_u, cfg, op, fR, gR)
    out = []
    for _ in range(n_pairs):
        amp = rng.standard_normal((base.K_max, 1, op.n_modes))
        freq = rng.integers(1, 4, (base.K_max, 1, op.n_modes))
        dy = scale * amp * bump_t * np.cos(np.pi * freq * t[None, :, None])
        dy *= np.exp(-cfg.delta * (np.arange(base.K_max) + 1))[:, None, None]
        v = LPSequence(base.grid, base.y + dy, base.yp.copy())
        Jv = lp_apply(drivers, v, xi_u, cfg, op, fR, gR)
        num = bc_norm(Jy - Jv, drivers, op, cfg.delta)
        den = bc_norm(base - v, drivers, op, cfg.delta)
        out.append(num / den)
    return np.array(out)


@dataclass
class InvarianceResult:
    defect: float
    out_of_ball: bool
    z_end: np.ndarray
    h_shifted: np.ndarray


def invariance_defect(graph: ManifoldGraph, op: SpectralOperator, f, g, p_extended: RoughPath,
                      xi_u, t_forward: float = 1.0,
                      solve_cfg: SolveConfig | None = None) -> InvarianceResult:
    """``|pi^s z(t) - h^u_{Theta_t w}(pi^u z(t))|`` for ``z(0) = xi + h^u(xi)``.

    ``h^u`` at ``xi`` is taken from the graph samples when present and
    recomputed otherwise; the graph for the shifted driver is evaluated at
    exactly ``pi^u z(t)``.
    """
    cfg = graph.config
    fR, gR = truncate_pair(f, g, graph.cutoff)
    xi_u = np.where(op.unstable_mask, np.asarray(xi_u, dtype=float), 0.0)
    hit = graph.lookup(xi_u)
    if hit is not None and hit.converged:
        h0 = hit.h_u
    else:
        drivers = driver_family(p_extended, cfg.K_max)
        h0 = graph_point(op, fR, gR, drivers, cfg, xi_u, graph.C)[0].h_u
    z0 = xi_u + h0
    scfg = solve_cfg or SolveConfig(T=t_forward, diagnose_norms=False)
    traj = solve_global(op, f, g, z0, p_extended, t_forward, scfg)
    z = traj.final
    out = bool(np.linalg.norm(traj.values, axis=1).max() > graph.cutoff.R / 2)
    shifted = shift(p_extended, t_forward)
    drivers_s = driver_family(shifted, cfg.K_max)
    h1 = graph_point(op, fR, gR, drivers_s, cfg, np.where(op.unstable_mask, z, 0.0), graph.C)[0].h_u
    defect = float(np.linalg.norm(np.where(op.stable_mask, z, 0.0) - h1))
    return InvarianceResult(defect, out, z, h1)
