"""Property suite behind ``roughflow verify`` and the report it emits.

Every criterion records the measured value, the tolerance and the comparison
used, so a report is self-describing. Reports contain no timestamps or host
data and serialize floats with ``repr``, which makes repeated runs with the
same configuration byte-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, initial_value, make_driver, make_operator, make_pair, substream
from .controlled import holder_bound_gap
from .driver import TimeGrid, build_bm_lift, chen_defect, lift_function
from .errors import RoughflowError
from .integrator import local_error_probe, pooled_error_probe
from .io import load_driver, to_jsonable
from .manifold import (LPConfig, calibrated_cutoff, driver_family, embedding_constant,
                       gap_condition, tangency_slopes)
from .nonlinearity import CollocationNonlinearity, ModewiseNonlinearity, coupled_quadratic
from .solver import SolveConfig, ball_center, cocycle_eval, solve_global
from .spectral import (SpectralOperator, difference_exponent, preset_parabolic,
                       smoothing_check)


@dataclass
class Criterion:
    name: str
    measured: float
    tolerance: float
    comparison: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag} {self.name}: measured={self.measured!r} {self.comparison} "
                f"tolerance={self.tolerance!r}")


@dataclass
class Report:
    criteria: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def add(self, name, measured, tolerance, comparison="<=", detail=None) -> Criterion:
        m, t = float(measured), float(tolerance)
        ok = {"<=": m <= t, ">=": m >= t, "<": m < t}[comparison] and np.isfinite(m)
        c = Criterion(name, m, t, comparison, bool(ok), detail or {})
        self.criteria.append(c)
        return c

    def fail(self, name, error: str):
        self.criteria.append(Criterion(name, float("nan"), float("nan"), "error", False,
                                       {"error": error}))

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "criteria": [{"name": c.name, "measured": c.measured, "tolerance": c.tolerance,
                              "comparison": c.comparison, "passed": c.passed,
                              "detail": c.detail} for c in self.criteria],
                "metrics": self.metrics, "artifacts": sorted(self.artifacts)}

    def to_json(self) -> str:
        return json.dumps(to_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [c.line() for c in self.criteria]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


# -- individual criteria -------------------------------------------------------

def check_chen(rep: Report, cfg: RunConfig):
    v = cfg["verify"]
    if v["driver_file"]:
        p = load_driver(v["driver_file"], cfg["driver"]["gamma"], validate=False)
        src = v["driver_file"]
    else:
        p = make_driver(cfg)
        src = cfg["driver"]["kind"]
    rep.add("chen", chen_defect(p), v["chen_tol"], detail={"driver": src, "n": p.n, "d": p.d})


def check_semigroup(rep: Report, cfg: RunConfig):
    o = cfg["operator"]
    op = preset_parabolic(o["m"], o["mu"], max(50, o["n_modes"]))
    c1 = smoothing_check(op, np.geomspace(1e-3, 1.0, 50), 0.5, 0.0)
    c2 = smoothing_check(op, np.geomspace(1e-4, 1.0, 400), 0.5, 0.0)
    var = abs(c1 - c2) / max(c1, c2)
    rep.add("semigroup_smoothing_stability", var, cfg["verify"]["smoothing_rtol"], "<",
            {"constant_coarse": c1, "constant_fine": c2})
    worst = 0.0
    fits = {}
    for gt in (0.2, 0.45):
        slope, _ = difference_exponent(op, np.geomspace(1e-3, 1e-1, 40), gt, 0.0)
        fits[repr(gt)] = slope
        worst = max(worst, abs(slope - gt))
    rep.add("semigroup_difference_exponent", worst, 0.1, detail={"slopes": fits})


def _probe_integrand(op, gnl, p, xi):
    return gnl.compose(ball_center(op, gnl, xi, p))


def check_order(rep: Report, cfg: RunConfig):
    v, pr = cfg["verify"], cfg["probe"]
    N = pr["n_modes"]
    op = preset_parabolic(1, 2.5, N)
    gnl = CollocationNonlinearity(N, "sin", [1.0], diffusion=True)
    xi = 0.5 * np.linspace(1, 0.2, N)
    grid = TimeGrid(0.0, 1.0, v["probe_points"])
    worst = np.inf
    detail = {}
    for gam in pr["gammas"]:
        q = lift_function(lambda t: (np.sin(3 * t) + t ** 2)[..., None], grid, gamma=gam)
        e_s = local_error_probe(op, _probe_integrand(op, gnl, q, xi), q).exponent
        cases = []
        for k in range(v["probe_seeds"]):
            b = build_bm_lift(substream(cfg.seed, f"probe-bm-{k}"), grid, 1, 16, gam)
            cases.append((_probe_integrand(op, gnl, b, xi), b))
        e_b = pooled_error_probe(op, cases).exponent
        detail[f"smooth_{gam!r}"] = e_s
        detail[f"bm_{gam!r}"] = e_b
        worst = min(worst, e_s - (3 * gam - 0.15), e_b - (3 * gam - 0.15))
    rep.add("local_error_order_margin", worst, 0.0, ">=", detail)


def check_solver(rep: Report, cfg: RunConfig):
    """Mild residual, a Hölder-type bound on a contractive operator, and the cocycle sweep."""
    s = cfg["solver"]
    v = cfg["verify"]
    op = make_operator(cfg)
    n_unit = v["cocycle_points"] - 1
    grid = TimeGrid(0.0, 2.0, 2 * n_unit + 1)
    p = make_driver(cfg, grid=grid, stream="cocycle")
    f, g = make_pair(cfg, op, p.d)
    scfg = SolveConfig(T=1.0, eta=s["eta"], picard_tol=s["picard_tol"], max_picard=s["max_picard"],
                       step_shrink=s["step_shrink"], integrator_tol=s["integrator_tol"],
                       scheme=s["scheme"], diagnose_norms=False)
    xi = initial_value(cfg, op.n_modes)
    traj = solve_global(op, f, g, xi, p, 1.0, scfg)
    res = max(d["mild_residual"] for d in traj.diagnostics)
    rep.add("mild_residual", res, 2 * s["picard_tol"], detail={"segments": len(traj.segments)})
    # the Hölder-type bound is stated for contractive semigroups
    op_c = SpectralOperator(op.eigenvalues - max(0.0, op.eigenvalues[0]) - 0.5)
    unit = p.window(0.0, 1.0)
    bc = ball_center(op_c, g, xi, unit)
    rep.add("holder_bound_slack", holder_bound_gap(bc, unit, op_c), 0.0, ">=")
    worst = 0.0
    sweep = {}
    for t in (0.5, 1.0):
        for tau in (0.25, 0.5):
            _, _, dd = cocycle_eval(op, f, g, xi, p, t, tau, scfg)
            sweep[f"t={t!r},s={tau!r}"] = dd
            worst = max(worst, dd)
    rep.add("cocycle_defect", worst, 10 * s["picard_tol"], detail=sweep)


def _toy(cfg: RunConfig):
    m = cfg["manifold"]
    op = SpectralOperator([m["alpha"], -m["beta"]])
    lp = LPConfig(m["alpha"], m["beta"], m["delta"], m["k"], m["k_max"], m["lp_tol"],
                  m["max_lp_iters"], m["enforce_gap"])
    f = coupled_quadratic(1.0, 0.5)
    g = ModewiseNonlinearity(2, "sin3", 0.5, diffusion=True)
    return op, lp, f, g


def check_manifold(rep: Report, cfg: RunConfig):
    op, lp, f, g = _toy(cfg)
    ppu = cfg["verify"]["tangency_points"] - 1
    K = lp.K_max
    grid = TimeGrid(-float(K), 1.0, (K + 1) * ppu + 1)
    p = build_bm_lift(substream(cfg.seed, "manifold"), grid, 1, 16, cfg["driver"]["gamma"])
    drivers = driver_family(p, K)
    C = embedding_constant(op, drivers[0], lp)
    value, _ = gap_condition(lp, C)
    rep.add("gap_condition", value, 0.5, detail={"C": C, "K": lp.K})
    cut = calibrated_cutoff(f, g, drivers, lp.K)
    slopes = tangency_slopes(op, f, g, p, lp, cut)
    decreasing = float(np.all(np.diff(slopes) < 0))
    rep.add("tangency_monotone", decreasing, 1.0, ">=",
            {"slopes": slopes.tolist(), "R": cut.R})


CHECKS = [check_chen, check_semigroup, check_order, check_solver, check_manifold]


def run_verify(cfg: RunConfig) -> Report:
    """Run every criterion; a failing computation is recorded, not raised."""
    rep = Report()
    for chk in CHECKS:
        try:
            chk(rep, cfg)
        except RoughflowError as exc:
            rep.fail(chk.__name__.removeprefix("check_"), f"{type(exc).__name__}: {exc}")
    rep.metrics["seed"] = cfg.seed
    rep.metrics["n_criteria"] = len(rep.criteria)
    return rep
