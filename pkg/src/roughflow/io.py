"""Text serialization of drivers, controlled paths, trajectories and graphs.

Floats are written with ``repr``, the shortest decimal string that parses back
to the same double, so every round trip of finite values is bit-exact.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .controlled import ControlledPath
from .driver import RoughPath, TimeGrid
from .errors import InvalidInput


def _f(x) -> str:
    return repr(float(x))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def _read_rows(path) -> tuple[list, np.ndarray]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = [[float(v) for v in row] for row in rd if row]
    return header, np.array(data, dtype=float).reshape(len(data), len(header))


def _grid_from_times(t: np.ndarray) -> TimeGrid:
    grid = TimeGrid(float(t[0]), float(t[-1]), int(t.size))
    if not np.array_equal(grid.times, t):
        raise InvalidInput("times in file are not a uniform grid")
    return grid


# -- drivers -----------------------------------------------------------------

def driver_to_csv(p: RoughPath, path_w, path_w2):
    """Write ``(t, w_1..w_d)`` and ``(s, t, w2_11..w2_dd)`` for all ``s <= t``."""
    d = p.d
    t = p.times
    _write_rows(path_w, ["t"] + [f"w_{k + 1}" for k in range(d)],
                ([_f(t[i])] + [_f(v) for v in p.w[i]] for i in range(p.n)))
    names = [f"w2_{a + 1}{b + 1}" for a in range(d) for b in range(d)]

    def rows():
        for i in range(p.n):
            for j in range(i, p.n):
                yield [_f(t[i]), _f(t[j])] + [_f(v) for v in p.w2[i, j].ravel()]

    _write_rows(path_w2, ["s", "t"] + names, rows())


def driver_from_csv(path_w, path_w2, gamma: float, validate: bool = True) -> RoughPath:
    hw, W = _read_rows(path_w)
    grid = _grid_from_times(W[:, 0])
    w = W[:, 1:]
    d = w.shape[1]
    _, W2 = _read_rows(path_w2)
    n = grid.n_points
    iu = np.triu_indices(n)
    if W2.shape[0] != iu[0].size:
        raise InvalidInput("second-level file does not cover all pairs s <= t")
    w2 = np.zeros((n, n, d, d))
    w2[iu] = W2[:, 2:].reshape(-1, d, d)
    return RoughPath(grid, gamma, w, w2, validate=validate)


def driver_to_json(p: RoughPath, path):
    doc = {"grid": {"t0": p.grid.t0, "t1": p.grid.t1, "n_points": p.grid.n_points},
           "gamma": p.gamma, "w": p.w.tolist(), "w2": p.w2.tolist()}
    Path(path).write_text(json.dumps(doc))


def driver_from_json(path, validate: bool = True) -> RoughPath:
    doc = json.loads(Path(path).read_text())
    g = doc["grid"]
    grid = TimeGrid(float(g["t0"]), float(g["t1"]), int(g["n_points"]))
    return RoughPath(grid, float(doc["gamma"]), np.array(doc["w"], dtype=float),
                     np.array(doc["w2"], dtype=float), validate=validate)


def load_driver(path, gamma: float = 0.5, validate: bool = True) -> RoughPath:
    """Load a JSON driver, or a CSV pair ``<stem>.csv`` / ``<stem>_w2.csv``."""
    path = Path(path)
    if path.suffix == ".json":
        return driver_from_json(path, validate)
    return driver_from_csv(path, path.with_name(path.stem + "_w2.csv"), gamma, validate)


# -- paths and results ---------------------------------------------------------

def controlled_to_csv(cp: ControlledPath, path):
    N, d = cp.n_modes, cp.d
    head = (["t"] + [f"y_{k + 1}" for k in range(N)]
            + [f"yp_{k + 1},{i + 1}" for k in range(N) for i in range(d)])
    t = cp.grid.times
    _write_rows(path, head, ([_f(t[m])] + [_f(v) for v in cp.y[m].ravel()]
                             + [_f(v) for v in cp.yp[m].ravel()] for m in range(t.size)))


def controlled_from_csv(path, n_modes: int) -> ControlledPath:
    _, A = _read_rows(path)
    grid = _grid_from_times(A[:, 0])
    y = A[:, 1:1 + n_modes]
    yp = A[:, 1 + n_modes:].reshape(A.shape[0], n_modes, -1)
    return ControlledPath(grid, y, yp)


def trajectory_to_csv(traj, path):
    t, Y = traj.times, traj.values
    _write_rows(path, ["t"] + [f"y_{k + 1}" for k in range(Y.shape[1])],
                ([_f(t[m])] + [_f(v) for v in Y[m]] for m in range(t.size)))


def trajectory_diagnostics(traj) -> dict:
    segs = [{"T0": s["T0"], "iterations": s["iterations"], "contraction": s["contraction"],
             "residual": s["residual"], "t_start": s["t_start"],
             "mild_residual": s["mild_residual"]} for s in traj.diagnostics]
    return {"segments": segs, "apriori": traj.apriori}


def graph_to_csv(graph, path):
    """Rows ``(xi_u..., h_u..., converged, iterations)`` sorted by ``xi_u``."""
    mu, ms = graph_masks(graph)
    head = ([f"xi_u_{k + 1}" for k in np.flatnonzero(mu)]
            + [f"h_u_{k + 1}" for k in np.flatnonzero(ms)] + ["converged", "iterations"])
    rows = sorted(graph.samples, key=lambda s: tuple(s.xi_u[mu]))
    _write_rows(path, head, ([_f(v) for v in s.xi_u[mu]] + [_f(v) for v in s.h_u[ms]]
                             + [int(s.converged), s.iterations] for s in rows))


def graph_masks(graph):
    mu = np.asarray(graph.extras["unstable_mask"], dtype=bool)
    return mu, ~mu


# -- manifests -----------------------------------------------------------------

def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def to_jsonable(obj):
    """Recursively convert numpy scalars and arrays for ``json.dumps``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    return obj


def dump_json(obj, path):
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_manifest(out_dir, command: str, config_text: str, seed: int, files, extra=None):
    from . import __version__

    doc = {"command": command, "config_sha256": sha256_text(config_text), "seed": seed,
           "version": __version__, "files": sorted(str(Path(f).name) for f in files)}
    if extra:
        doc.update(extra)
    dump_json(doc, Path(out_dir) / "manifest.json")
