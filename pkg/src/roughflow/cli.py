"""``roughflow`` command-line front end.

Each command reads a configuration file, writes its data files plus a
``manifest.json`` into ``--out`` and exits with status 0 exactly when every
criterion it asserts passes.
"""
from __future__ import annotations

import functools
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .config import (RunConfig, initial_value, load_config, make_driver, make_operator, make_pair,
                     parse_levels, substream)
from .driver import TimeGrid, build_bm_lift, chen_defect, holder_norms, lift_function
from .errors import RoughflowError, StepUnderflow
from .integrator import local_error_probe, pooled_error_probe
from .io import (driver_to_csv, driver_to_json, dump_json, graph_masks, graph_to_csv,
                 trajectory_diagnostics, trajectory_to_csv, write_manifest)
from .manifold import LPConfig, build_manifold, invariance_defect
from .controlled import CutoffConfig
from .nonlinearity import CollocationNonlinearity
from .solver import SolveConfig, ball_center, solve_global
from .spectral import preset_parabolic
from .verify import Report, run_verify

log = logging.getLogger("roughflow")


def _setup(config, seed, out, fmt) -> tuple[RunConfig, Path]:
    cfg = load_config(config).with_overrides(seed=seed, fmt=fmt)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _finish(out: Path, command: str, cfg: RunConfig, files, rep: Report):
    rep.artifacts = sorted(Path(f).name for f in files) + ["report.json"]
    (out / "report.json").write_text(rep.to_json())
    write_manifest(out, command, cfg.text, cfg.seed, list(files) + [out / "report.json"],
                   {"passed": rep.passed, "format": cfg["run"]["format"]})
    click.echo(rep.to_text(), nl=False)
    sys.exit(0 if rep.passed else 1)


def common(fn):
    fn = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
                      help="Output format for data files (default from config).")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True,
                      help="Output directory.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override [run] seed.")(fn)
    fn = click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
                      help="Configuration file; defaults apply when omitted.")(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", count=True, help="More log output (repeatable).")
def main(verbose):
    """Rough evolution equations: drivers, solver, unstable manifolds, checks."""
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _guard(fn):
    """Turn library errors into a one-line message and exit status 2."""
    @functools.wraps(fn)
    def wrapper(*a, **kw):
        try:
            return fn(*a, **kw)
        except RoughflowError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(2)
    return wrapper


@main.command()
@common
@_guard
def driver(config, seed, out, fmt):
    """Sample a driver and write it with Chen and Hölder diagnostics."""
    cfg, out = _setup(config, seed, out, fmt)
    p = make_driver(cfg)
    if cfg["run"]["format"] == "json":
        files = [out / "driver.json"]
        driver_to_json(p, files[0])
    else:
        files = [out / "driver.csv", out / "driver_w2.csv"]
        driver_to_csv(p, *files)
    rep = Report()
    h1, h2 = holder_norms(p)
    rep.metrics.update(kind=cfg["driver"]["kind"], n=p.n, d=p.d, gamma=p.gamma,
                       holder_w=h1, holder_w2=h2)
    rep.add("chen", chen_defect(p), cfg["verify"]["chen_tol"])
    _finish(out, "driver", cfg, files, rep)


@main.command()
@common
@_guard
def solve(config, seed, out, fmt):
    """Solve the mild equation on ``[0, horizon]``."""
    cfg, out = _setup(config, seed, out, fmt)
    s = cfg["solver"]
    d = cfg["driver"]
    p = make_driver(cfg, grid=TimeGrid(0.0, max(s["horizon"], d["t1"]), d["n_points"]))
    op = make_operator(cfg)
    f, g = make_pair(cfg, op, p.d)
    xi = initial_value(cfg, op.n_modes)
    scfg = SolveConfig(T=s["horizon"], eta=s["eta"], picard_tol=s["picard_tol"],
                       max_picard=s["max_picard"], step_shrink=s["step_shrink"],
                       integrator_tol=s["integrator_tol"], scheme=s["scheme"])
    rep = Report()
    try:
        traj = solve_global(op, f, g, xi, p, s["horizon"], scfg)
    except StepUnderflow as exc:
        traj = getattr(exc, "partial", None)
        rep.fail("step_underflow", str(exc))
    files = []
    if traj is not None and traj.segments:
        if cfg["run"]["format"] == "json":
            files.append(out / "trajectory.json")
            dump_json({"t": traj.times, "y": traj.values}, files[-1])
        else:
            files.append(out / "trajectory.csv")
            trajectory_to_csv(traj, files[-1])
        files.append(out / "diagnostics.json")
        dump_json(trajectory_diagnostics(traj), files[-1])
        res = max(dg["mild_residual"] for dg in traj.diagnostics)
        rep.add("mild_residual", res, 2 * s["picard_tol"])
        rep.metrics.update(segments=len(traj.segments), final=traj.final.tolist())
    _finish(out, "solve", cfg, files, rep)


@main.command()
@common
@_guard
def manifold(config, seed, out, fmt):
    """Sample the local unstable manifold graph and check invariance."""
    cfg, out = _setup(config, seed, out, fmt)
    m, s = cfg["manifold"], cfg["solver"]
    lp = LPConfig(m["alpha"], m["beta"], m["delta"], m["k"], m["k_max"], m["lp_tol"],
                  m["max_lp_iters"], m["enforce_gap"])
    op = make_operator(cfg).with_gap(m["alpha"], m["beta"])
    K = lp.K_max
    ppu = m["points_per_unit"] - 1
    grid = TimeGrid(-float(K), 1.0, (K + 1) * ppu + 1)
    p = make_driver(cfg, grid=grid, stream="manifold")
    f, g = make_pair(cfg, op, p.d)
    cutoff = CutoffConfig(lp.K, m["radius"]) if m["radius"] is not None else None
    graph = build_manifold(op, f, g, p, lp, m["ball_radius"], m["n_samples"], cutoff,
                           max_workers=m["workers"])
    rep = Report()
    rep.add("gap_condition", graph.gap_value, 0.5, detail={"C": graph.C, "K": lp.K})
    rep.add("samples_converged", float(graph.converged), 1.0, ">=",
            {"failed": [s_.error for s_ in graph.samples if not s_.converged]})
    origin = graph.lookup(np.zeros(op.n_modes))
    if origin is not None:
        rep.add("origin_fixed", float(np.abs(origin.h_u).max()), 0.0)
    xi = np.where(op.unstable_mask, m["invariance_fraction"] * graph.radius, 0.0)
    scfg = SolveConfig(T=1.0, picard_tol=s["picard_tol"], max_picard=s["max_picard"],
                       step_shrink=s["step_shrink"], integrator_tol=s["integrator_tol"],
                       scheme=s["scheme"], diagnose_norms=False)
    inv = invariance_defect(graph, op, f, g, p, xi, 1.0, scfg)
    rep.add("invariance_defect", inv.defect, 50 * (lp.lp_tol + s["picard_tol"]),
            detail={"xi_u": xi.tolist(), "left_ball": inv.out_of_ball})
    rep.metrics.update(R=graph.cutoff.R, radius=graph.radius, C=graph.C,
                       lipschitz_estimate=graph.lipschitz_estimate, n_samples=len(graph.samples))
    if cfg["run"]["format"] == "json":
        files = [out / "graph.json"]
        mu, ms = graph_masks(graph)
        rows = sorted(graph.samples, key=lambda x: tuple(x.xi_u[mu]))
        dump_json([{"xi_u": r.xi_u[mu], "h_u": r.h_u[ms], "converged": r.converged,
                    "iterations": r.iterations} for r in rows], files[0])
    else:
        files = [out / "graph.csv"]
        graph_to_csv(graph, files[0])
    _finish(out, "manifold", cfg, files, rep)


def _resolve_driver_file(cfg: RunConfig) -> RunConfig:
    path = cfg["verify"]["driver_file"]
    if path and not Path(path).is_absolute() and cfg.source not in ("<defaults>", "<string>"):
        cand = Path(cfg.source).parent / path
        if cand.exists():
            vals = {k: dict(v) for k, v in cfg.values.items()}
            vals["verify"]["driver_file"] = str(cand)
            return RunConfig(vals, cfg.text, cfg.source, cfg.lines)
    return cfg


@main.command()
@common
@_guard
def verify(config, seed, out, fmt):
    """Run the property suite and write ``report.json`` and ``report.txt``."""
    cfg, out = _setup(config, seed, out, fmt)
    rep = run_verify(_resolve_driver_file(cfg))
    (out / "report.txt").write_text(rep.to_text())
    _finish(out, "verify", cfg, [out / "report.txt"], rep)


@main.command("probe-order")
@common
@_guard
def probe_order(config, seed, out, fmt):
    """Measure the local error order of the compensated sum."""
    cfg, out = _setup(config, seed, out, fmt)
    pr = cfg["probe"]
    levels = parse_levels(pr["levels"])
    N = pr["n_modes"]
    op = preset_parabolic(1, cfg["operator"]["mu"], N)
    gnl = CollocationNonlinearity(N, "sin", [1.0], diffusion=True)
    xi = 0.5 * np.linspace(1, 0.2, N)
    grid = TimeGrid(0.0, 1.0, pr["n_points"])
    rep = Report()
    table = []
    for gam in pr["gammas"]:
        for kind in [k.strip() for k in pr["kinds"].split(",") if k.strip()]:
            if kind == "smooth":
                q = lift_function(lambda t: (np.sin(3 * t) + t ** 2)[..., None], grid, gamma=gam)
                res = local_error_probe(op, gnl.compose(ball_center(op, gnl, xi, q)), q,
                                        pr["beta"], levels)
            elif kind == "bm":
                cases = []
                for k in range(pr["seeds"]):
                    b = build_bm_lift(substream(cfg.seed, f"probe-bm-{k}"), grid, 1, 16, gam)
                    cases.append((gnl.compose(ball_center(op, gnl, xi, b)), b))
                res = pooled_error_probe(op, cases, pr["beta"], levels)
            else:
                raise click.BadParameter(f"unknown probe kind {kind!r}")
            target = 3 * gam - pr["beta"] - 0.15
            rep.add(f"order_{kind}_gamma={gam!r}", res.exponent, target, ">=",
                    {"stderr": res.stderr})
            table.append({"kind": kind, "gamma": gam, "exponent": res.exponent,
                          "stderr": res.stderr, "lengths": res.lengths, "rms": res.residuals})
    path = out / "probe.json"
    dump_json(table, path)
    _finish(out, "probe-order", cfg, [path], rep)


if __name__ == "__main__":
    main()
