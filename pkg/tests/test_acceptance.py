"""Acceptance suite: ten end-to-end criteria at their stated tolerances.

Each test records one PASS/FAIL line; the lines are printed in the terminal
summary (and directly when the module is run as a script).
"""
import time

import numpy as np
import pytest
from click.testing import CliRunner

from roughflow.cli import main
from roughflow.controlled import (ControlledPath, CutoffConfig, cutoff_chi, cutoff_factor, norms,
                                  solve_cutoff_radius)
from roughflow.driver import (TimeGrid, build_bm_lift, chen_defect, holder_norms, lift_function,
                              pure_area_path, segment)
from roughflow.integrator import local_error_probe, pooled_error_probe, rough_convolution
from roughflow.manifold import (LPConfig, build_manifold, driver_family, embedding_constant,
                                gap_condition, graph_point, invariance_defect, lp_fixed_point,
                                tangency_slopes, truncate_pair)
from roughflow.nonlinearity import (CollocationNonlinearity, LinearNonlinearity,
                                    ModewiseNonlinearity, ZeroNonlinearity, coupled_quadratic)
from roughflow.solver import SolveConfig, ball_center, cocycle_eval, solve_global
from roughflow.spectral import SpectralOperator, difference_exponent, preset_parabolic, smoothing_check

from oracles import modewise_linear, random_smooth_case, rs_integral, scalar_lp_graph

RESULTS = {}


def _record(num, name, checks, budget, start):
    """``checks`` is a list of ``(label, measured, tolerance, op)``."""
    elapsed = time.perf_counter() - start
    ok = elapsed <= budget
    parts = []
    for label, m, tol, op in checks:
        good = {"<=": m <= tol, ">=": m >= tol, "<": m < tol, "==": m == tol}[op] and np.isfinite(m)
        ok &= bool(good)
        parts.append(f"{label}={m:.3g} {op} {tol:.3g}")
    line = (f"{'PASS' if ok else 'FAIL'} [{num}] {name}: " + "; ".join(parts)
            + f"; runtime={elapsed:.1f}s <= {budget:.0f}s")
    RESULTS[num] = line
    print(line)
    assert ok, line


def _rng(k):
    return np.random.default_rng(1000 + k)


def test_01_chen_relation():
    t0 = time.perf_counter()
    grid = TimeGrid(0.0, 1.0, 257)
    worst = {"bm": 0.0, "smooth": 0.0, "pure-area": 0.0}
    for seed in range(100):
        worst["bm"] = max(worst["bm"], chen_defect(build_bm_lift(seed, grid, 2)))
        w = random_smooth_case(_rng(seed))[0]
        worst["smooth"] = max(worst["smooth"], chen_defect(lift_function(w, grid, 0.5)))
        a = _rng(seed).standard_normal((2, 2))
        worst["pure-area"] = max(worst["pure-area"],
                                 chen_defect(pure_area_path(a - a.T, grid, 0.45)))
    _record(1, "Chen relation, 100 seeds x 3 constructors",
            [(k, v, 1e-10, "<=") for k, v in worst.items()], 30, t0)


def test_02_rough_integral_oracle():
    t0 = time.perf_counter()
    ident = SpectralOperator([0.0])
    grid = TimeGrid(0.0, 1.0, 2049)
    worst = 0.0
    for k in range(20):
        w, dw, sig, jac = random_smooth_case(_rng(k))
        p = lift_function(w, grid, 0.5, 16)
        cp = ControlledPath(grid, sig(p.w)[:, None, :], jac(p.w)[:, None, :, :])
        val = rough_convolution(ident, cp, p, 0.0, 1.0, tol=1e-12, strict=False).value[0]
        worst = max(worst, abs(val - rs_integral(0.0, sig, w, dw, 0.0, 1.0)))
    wdw = 0.0
    for seed in range(5):
        p = build_bm_lift(seed, TimeGrid(0.0, 1.0, 129), 1)
        cp = ControlledPath(p.grid, p.w[:, None, :], np.ones((p.n, 1, 1, 1)))
        for s, t in ((0.0, 1.0), (0.25, 0.75), (0.5, 0.625)):
            i, j = p.grid.index_of(s), p.grid.index_of(t)
            val = rough_convolution(ident, cp, p, s, t, tol=1e-12).value[0]
            wdw = max(wdw, abs(val - 0.5 * (p.w[j, 0] ** 2 - p.w[i, 0] ** 2)))
    _record(2, "rough integral vs quadrature",
            [("quadrature_20_cases", worst, 1e-6, "<="), ("w_dw_closed_form", wdw, 1e-8, "<=")],
            60, t0)


def test_03_local_error_order():
    t0 = time.perf_counter()
    N = 6
    op = preset_parabolic(1, 2.5, N)
    gnl = CollocationNonlinearity(N, "sin", [1.0], diffusion=True)
    xi = 0.5 * np.linspace(1, 0.2, N)
    grid = TimeGrid(0.0, 1.0, 1025)
    checks = []
    for gam in (0.4, 0.5):
        q = lift_function(lambda t: (np.sin(3 * t) + t ** 2)[..., None], grid, gamma=gam)
        e_s = local_error_probe(op, gnl.compose(ball_center(op, gnl, xi, q)), q, 0.0).exponent
        cases = []
        for k in range(4):
            b = build_bm_lift([k, 77], grid, 1, 16, gam)
            cases.append((gnl.compose(ball_center(op, gnl, xi, b)), b))
        e_b = pooled_error_probe(op, cases, 0.0).exponent
        checks += [(f"smooth@gamma{gam}", e_s, 3 * gam - 0.15, ">="),
                   (f"bm@gamma{gam}", e_b, 3 * gam - 0.15, ">=")]
    _record(3, "local error order at beta=0", checks, 120, t0)


def test_04_semigroup_estimates():
    t0 = time.perf_counter()
    op = preset_parabolic(1, 2.5, 50)
    c1 = smoothing_check(op, np.geomspace(1e-3, 1.0, 50), 0.5, 0.0)
    c2 = smoothing_check(op, np.geomspace(1e-4, 1.0, 400), 0.5, 0.0)
    c3 = smoothing_check(op, np.linspace(1e-3, 1.0, 200), 0.5, 0.0)
    var = (max(c1, c2, c3) - min(c1, c2, c3)) / max(c1, c2, c3)
    worst = 0.0
    for gt in (0.1, 0.2, 0.3, 0.45):
        slope, _ = difference_exponent(op, np.geomspace(1e-3, 1e-1, 40), gt, 0.0)
        worst = max(worst, abs(slope - gt))
    _record(4, "semigroup smoothing and difference estimates",
            [("smoothing_constant", c1, np.inf, "<"), ("constant_variation", var, 0.1, "<"),
             ("exponent_error", worst, 0.1, "<=")], 60, t0)


def test_05_solver_correctness():
    t0 = time.perf_counter()
    tol = 1e-10
    cfg = SolveConfig(picard_tol=tol)
    op = preset_parabolic(1, 2.5, 6)
    xi = np.array([0.3, -0.2, 0.1, 0.0, 0.0, 0.0])
    p = build_bm_lift(11, TimeGrid(0.0, 1.0, 257), 1, 16, 0.45)
    tr = solve_global(op, ZeroNonlinearity(6), ZeroNonlinearity(6, 1), xi, p, 1.0, cfg)
    orbit = op.factors(tr.times) * xi
    e_orbit = np.abs(tr.values - orbit).max() / np.abs(xi).max()

    lam = np.array([0.5, -1.0, -4.0])
    c = np.array([0.5, -0.3, 0.8])
    x3 = np.array([1.0, -0.5, 0.3])
    q = lift_function(lambda t: (np.sin(3 * t) + t ** 2)[..., None], TimeGrid(0.0, 1.0, 257))
    g = LinearNonlinearity(np.diag(c)[None], diffusion=True)
    tr = solve_global(SpectralOperator(lam), ZeroNonlinearity(3), g, x3, q, 1.0, cfg)
    ref = modewise_linear(lam, c, x3, lambda t: 3 * np.cos(3 * t) + 2 * t, 1.0)(tr.times).T
    e_rk4 = np.abs(tr.values - ref).max()

    f = CollocationNonlinearity(6, "sin", 0.5)
    gn = CollocationNonlinearity(6, "sin", [0.5], diffusion=True)
    e_ch, res = 0.0, 0.0
    for seed in range(3):
        pb = build_bm_lift(seed, TimeGrid(0.0, 1.0, 257), 1)
        full = solve_global(op, f, gn, xi, pb, 1.0, cfg)
        res = max(res, max(d["mild_residual"] for d in full.diagnostics))
        for tm in (0.25, 0.5):
            k = pb.grid.index_of(tm)
            rest = solve_global(op, f, gn, full.values[k], segment(pb, tm, 1.0), 1.0 - tm, cfg)
            res = max(res, max(d["mild_residual"] for d in rest.diagnostics))
            e_ch = max(e_ch, np.abs(rest.values - full.values[k:]).max())
    _record(5, "solver correctness",
            [("orbit_rel_error", e_orbit, 1e-14, "<="), ("linear_rk4", e_rk4, 1e-5, "<="),
             ("chasles", e_ch, 5 * tol, "<="), ("mild_residual", res, 2 * tol, "<=")], 120, t0)


def test_06_cocycle():
    t0 = time.perf_counter()
    tol = 1e-10
    cfg = SolveConfig(picard_tol=tol, diagnose_norms=False)
    op = preset_parabolic(1, 2.5, 6)
    f = CollocationNonlinearity(6, "sin", 0.5)
    g = CollocationNonlinearity(6, "tanh", [0.5], diffusion=True)
    xi = np.array([0.3, -0.2, 0.1, 0.05, 0.0, 0.0])
    grid = TimeGrid(0.0, 2.0, 513)
    drivers = {"smooth": lift_function(lambda t: (np.sin(3 * t) + t ** 2)[..., None], grid),
               "bm": build_bm_lift(21, grid, 1)}
    checks = []
    for name, p in drivers.items():
        worst = 0.0
        for t in (0.25, 0.5, 1.0):
            for s in (0.25, 0.5, 1.0):
                worst = max(worst, cocycle_eval(op, f, g, xi, p, t, s, cfg)[2])
        checks.append((f"{name}_3x3", worst, 10 * tol, "<="))
    _record(6, "cocycle property", checks, 180, t0)


OP2 = SpectralOperator([2.0, -1.0])
F2 = coupled_quadratic(1.0, 0.5)
G2 = ModewiseNonlinearity(2, "sin3", 0.5, diffusion=True)
CUT = CutoffConfig(0.04, 1.0)


@pytest.fixture(scope="module")
def toy_driver():
    return build_bm_lift(5, TimeGrid(-24.0, 1.0, 25 * 64 + 1), 1, 16, 0.45)


def test_07_gap_and_contraction(toy_driver):
    t0 = time.perf_counter()
    cfg = LPConfig(2.0, 1.0, K=0.04, K_max=12, lp_tol=1e-8)
    drivers = driver_family(toy_driver, cfg.K_max)
    fR, gR = truncate_pair(F2, G2, CUT)
    C = embedding_constant(OP2, drivers[0], cfg)
    gap, _ = gap_condition(cfg, C)
    rate, its = 0.0, 0
    for u in (-0.1, -0.05, 0.025, 0.05, 0.1):
        r = lp_fixed_point(np.array([u, 0.0]), drivers, cfg, OP2, fR, gR, C)
        rate, its = max(rate, r.max_rate), max(its, r.iterations)
    _record(7, "gap condition and LP contraction",
            [("gap_value", gap, 0.5, "<="), ("max_rate", rate, 0.55, "<="),
             ("iterations", its, 25, "<=")], 180, t0)


def test_08_manifold(toy_driver):
    t0 = time.perf_counter()
    cfg = LPConfig(2.0, 1.0, K=0.04, K_max=12, lp_tol=1e-8)
    picard_tol = 1e-10
    graph = build_manifold(OP2, F2, G2, toy_driver, cfg, 0.1, 5, CUT)
    h0 = float(np.abs(graph.lookup(np.zeros(2)).h_u).max())
    slopes = tangency_slopes(OP2, F2, G2, toy_driver, cfg, CUT)
    mono = float(np.all(np.diff(slopes) < 0))

    zero = lift_function(lambda t: 0 * t[..., None], TimeGrid(-12.0, 1.0, 13 * 64 + 1))
    fR0, gR0 = truncate_pair(F2, ZeroNonlinearity(2, 1), CUT)
    det_cfg = LPConfig(2.0, 1.0, K=0.04, K_max=12, lp_tol=1e-10)
    e_det = 0.0
    for u in (0.05, 0.1):
        gp, _ = graph_point(OP2, fR0, gR0, driver_family(zero, 12), det_cfg, np.array([u, 0.0]))
        ref = scalar_lp_graph(2.0, -1.0, lambda a, b: 0.5 * np.sin(a) * np.sin(b),
                              lambda a, b: np.sin(a) ** 2, u)
        e_det = max(e_det, abs(gp.h_u[1] - ref))

    scfg = SolveConfig(T=1.0, picard_tol=picard_tol, diagnose_norms=False)
    inv = invariance_defect(graph, OP2, F2, G2, toy_driver, np.array([0.01, 0.0]), 1.0, scfg)

    fR, gR = truncate_pair(F2, G2, CUT)
    cfg24 = LPConfig(2.0, 1.0, K=0.04, K_max=24, lp_tol=1e-8)
    d12, d24 = driver_family(toy_driver, 12), driver_family(toy_driver, 24)
    excess = -np.inf
    for u in (0.05, 0.1):
        r1 = lp_fixed_point(np.array([u, 0.0]), d12, cfg, OP2, fR, gR, graph.C)
        r2 = lp_fixed_point(np.array([u, 0.0]), d24, cfg24, OP2, fR, gR, graph.C)
        diff = abs(r1.sequence.y[0, -1, 1] - r2.sequence.y[0, -1, 1])
        excess = max(excess, diff - 2 * r1.tail_bound)
    _record(8, "manifold correctness",
            [("h_at_origin", h0, 0.0, "=="), ("tangency_decreasing", mono, 1.0, "=="),
             ("deterministic_oracle", e_det, 1e-4, "<="),
             ("invariance_defect", inv.defect, 50 * (cfg.lp_tol + picard_tol), "<="),
             ("kmax_doubling_minus_2x_tail", excess, 0.0, "<=")], 600, t0)


def test_09_cutoff_semantics():
    t0 = time.perf_counter()
    op = preset_parabolic(1, 2.5, 3)
    bad_inside = bad_outside = 0
    violations = 0
    for k in range(50):
        rng = _rng(k)
        p = build_bm_lift(k, TimeGrid(0.0, 1.0, 65), 1, 4, 0.45)
        y = op.factors(p.times) * rng.standard_normal(3)
        cp = ControlledPath(p.grid, y, np.zeros(y.shape + (1,)))
        dn = norms(cp, p, op).d_norm
        R = rng.uniform(0.1, 1.0)
        cfg = CutoffConfig(0.1, R)
        inside = cp * (rng.uniform(0.01, 0.499) * R / dn)
        kept = cutoff_chi(inside, cfg, p, op)
        bad_inside += not (cutoff_factor(inside, cfg, p, op) == 1.0
                           and np.array_equal(kept.y, inside.y) and np.array_equal(kept.yp, inside.yp))
        outside = cp * (rng.uniform(1.001, 3.0) * R / dn)
        gone = cutoff_chi(outside, cfg, p, op)
        bad_outside += not (np.all(gone.y == 0) and np.all(gone.yp == 0))
        K, fac = rng.uniform(1e-3, 0.5), rng.uniform(1.01, 3.0)
        cf, cg = rng.uniform(0.1, 10, 2)
        r1 = solve_cutoff_radius(p, K, cf, cg).R
        violations += solve_cutoff_radius(p, K * fac, cf, cg).R < r1
        q = p.scaled(fac)
        violations += holder_norms(q)[0] >= holder_norms(p)[0] and solve_cutoff_radius(q, K, cf, cg).R > r1
    _record(9, "cut-off semantics, 50 instances",
            [("identity_failures", bad_inside, 0, "=="), ("zero_failures", bad_outside, 0, "=="),
             ("monotonicity_violations", violations, 0, "==")], 60, t0)


def test_10_determinism(tmp_path):
    from importlib.resources import files
    t0 = time.perf_counter()
    cfg = str(files("roughflow").joinpath("configs", "verify.ini"))
    outs = []
    for name in ("a", "b"):
        r = CliRunner().invoke(main, ["verify", "--config", cfg, "--out", str(tmp_path / name)])
        outs.append(r.exit_code)
    differ = sum((tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()
                 for f in ("report.json", "report.txt", "manifest.json"))
    _record(10, "verify determinism",
            [("differing_files", differ, 0, "=="), ("exit_codes", max(outs), 0, "==")], 300, t0)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
