"""Run configuration: a sectioned key-value file with a fixed schema.

Every key has a type and a default; unknown sections or keys and values that
fail to parse are rejected with the offending line number. Randomness is
derived from one integer seed through named sub-streams, so adding a new
consumer never changes the draws of an existing one.
"""
from __future__ import annotations

import configparser
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .driver import (RoughPath, TimeGrid, build_bm_lift, lift_function, pure_area_path)
from .errors import ConfigError, RoughflowError
from .nonlinearity import (CollocationNonlinearity, LinearNonlinearity, ModewiseNonlinearity,
                           Nonlinearity, ZeroNonlinearity, coupled_quadratic)
from .spectral import SpectralOperator, operator_from_name


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


SCHEMA = {
    "run": {"seed": (int, 0), "format": (str, "csv")},
    "driver": {"kind": (str, "bm"), "d": (int, 1), "t0": (float, 0.0), "t1": (float, 1.0),
               "n_points": (int, 257), "gamma": (float, 0.45), "refinement": (int, 16),
               "function": (str, "sin"), "area": (str, "0,1;-1,0")},
    "operator": {"name": (str, "parabolic"), "n_modes": (int, 6), "mu": (float, 2.5),
                 "m": (int, 1), "alpha": (_opt_float, None), "beta": (_opt_float, None)},
    "nonlinearity": {"f": (str, "collocation:sin"), "f_scale": (_floats, [0.5]),
                     "g": (str, "collocation:sin"), "g_scale": (_floats, [0.5])},
    "solver": {"horizon": (float, 1.0), "picard_tol": (float, 1e-10), "max_picard": (int, 60),
               "step_shrink": (float, 0.5), "eta": (_opt_float, None),
               "integrator_tol": (float, 1e-9), "xi": (_floats, [0.3, -0.2, 0.1]),
               "scheme": (str, "trapezoid")},
    "manifold": {"alpha": (float, 2.0), "beta": (float, 1.0), "delta": (_opt_float, None),
                 "k": (float, 0.04), "k_max": (int, 12), "lp_tol": (float, 1e-8),
                 "max_lp_iters": (int, 60), "enforce_gap": (_bool, True),
                 "ball_radius": (_opt_float, None), "n_samples": (int, 5),
                 "radius": (_opt_float, None), "points_per_unit": (int, 129),
                 "invariance_fraction": (float, 0.1), "workers": (int, 1)},
    "probe": {"gammas": (_floats, [0.4, 0.5]), "kinds": (str, "smooth,bm"), "seeds": (int, 8),
              "n_points": (int, 1025), "levels": (str, "1-6"), "beta": (float, 0.0),
              "n_modes": (int, 6)},
    "verify": {"driver_file": (str, ""), "chen_tol": (float, 1e-10), "probe_points": (int, 1025),
               "probe_seeds": (int, 4), "cocycle_points": (int, 257),
               "tangency_points": (int, 65), "smoothing_rtol": (float, 0.1)},
}


def substream(seed: int, name: str) -> list:
    """Seed sequence for the named sub-stream of ``seed``."""
    return [int(seed), zlib.crc32(name.encode())]


def rng_for(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(substream(seed, name))


@dataclass
class RunConfig:
    """Typed configuration values plus the raw text they came from."""

    values: dict
    text: str = ""
    source: str = "<defaults>"
    lines: dict = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def where(self, section: str, key: str) -> str:
        ln = self.lines.get((section, key))
        return f"{self.source}:{ln}" if ln else self.source

    def with_overrides(self, seed: int | None = None, fmt: str | None = None) -> "RunConfig":
        vals = {s: dict(v) for s, v in self.values.items()}
        if seed is not None:
            vals["run"]["seed"] = int(seed)
        if fmt is not None:
            vals["run"]["format"] = fmt
        return RunConfig(vals, self.text, self.source, self.lines)


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    out, sec = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            sec = s[1:-1].strip()
            out.setdefault((sec, None), i)
        elif sec is not None:
            for sep in ("=", ":"):
                if sep in s:
                    out.setdefault((sec, s.split(sep, 1)[0].strip().lower()), i)
                    break
    return out


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}:{lines.get((sec, None), '?')}: unknown section [{sec}]")
        for key, raw in cp.items(sec):
            ln = lines.get((sec, key), "?")
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}:{ln}: unknown key {key!r} in [{sec}]")
            typ = SCHEMA[sec][key][0]
            try:
                values[sec][key] = typ(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{source}:{ln}: bad value for {sec}.{key}: {exc}") from exc
    cfg = RunConfig(values, text, source, lines)
    validate(cfg)
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        return parse_config("", "<defaults>")
    p = Path(path)
    return parse_config(p.read_text(), str(p))


def validate(cfg: RunConfig):
    """Check module preconditions that can be decided from the values alone."""
    d = cfg["driver"]
    if d["kind"] not in ("smooth", "bm", "pure-area"):
        raise ConfigError(f"{cfg.where('driver', 'kind')}: driver kind must be smooth, bm or pure-area")
    if not (1 / 3 < d["gamma"] <= 0.5):
        raise ConfigError(f"{cfg.where('driver', 'gamma')}: gamma must lie in (1/3, 1/2]")
    if d["n_points"] < 2 or d["d"] < 1:
        raise ConfigError(f"{cfg.where('driver', 'n_points')}: need n_points >= 2 and d >= 1")
    if cfg["run"]["format"] not in ("csv", "json"):
        raise ConfigError(f"{cfg.where('run', 'format')}: format must be csv or json")
    s = cfg["solver"]
    if not (0 < s["step_shrink"] < 1):
        raise ConfigError(f"{cfg.where('solver', 'step_shrink')}: step_shrink must lie in (0, 1)")
    if s["eta"] is not None and not (0 < s["eta"] < d["gamma"]):
        raise ConfigError(f"{cfg.where('solver', 'eta')}: eta must lie in (0, gamma)")
    m = cfg["manifold"]
    if not (m["alpha"] > m["beta"] > 0):
        raise ConfigError(f"{cfg.where('manifold', 'alpha')}: need alpha > beta > 0")
    if m["k_max"] < 2:
        raise ConfigError(f"{cfg.where('manifold', 'k_max')}: k_max must be at least 2")


# -- builders ------------------------------------------------------------------

def smooth_function(name: str, d: int):
    """Named analytic driver ``t -> R^d``."""
    k = np.arange(1, d + 1, dtype=float)
    if name == "sin":
        return lambda t: np.sin(np.multiply.outer(t, k)) / k + 0.25 * np.cos(np.multiply.outer(t, k + 1))
    if name == "t2":
        return lambda t: np.multiply.outer(np.asarray(t, dtype=float) ** 2, np.ones(d))
    if name == "circle":
        if d != 2:
            raise ConfigError("circle driver needs d = 2")
        return lambda t: np.stack([np.cos(2 * np.asarray(t)), np.sin(2 * np.asarray(t))], axis=-1)
    raise ConfigError(f"unknown smooth driver function {name!r}")


def parse_area(text: str, d: int) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    a = np.array([_floats(r) for r in rows], dtype=float)
    if a.shape != (d, d):
        raise ConfigError(f"area matrix must be {d}x{d}, got shape {a.shape}")
    return a


def make_driver(cfg: RunConfig, grid: TimeGrid | None = None, seed: int | None = None,
                stream: str = "driver") -> RoughPath:
    d = cfg["driver"]
    grid = grid or TimeGrid(d["t0"], d["t1"], d["n_points"])
    seed = cfg.seed if seed is None else seed
    kind = d["kind"]
    try:
        if kind == "bm":
            return build_bm_lift(substream(seed, stream), grid, d["d"], d["refinement"], d["gamma"])
        if kind == "smooth":
            return lift_function(smooth_function(d["function"], d["d"]), grid,
                                 max(d["gamma"], 0.5), d["refinement"])
        return pure_area_path(parse_area(d["area"], d["d"]), grid, d["gamma"])
    except RoughflowError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{cfg.where('driver', 'kind')}: {exc}") from exc


def make_operator(cfg: RunConfig) -> SpectralOperator:
    o = cfg["operator"]
    if o["name"] == "parabolic":
        return operator_from_name("parabolic", m=o["m"], mu=o["mu"], n_modes=o["n_modes"],
                                  alpha=o["alpha"], beta=o["beta"])
    return operator_from_name(o["name"], alpha=o["alpha"], beta=o["beta"])


def make_nonlinearity(name: str, n_modes: int, scale, diffusion: bool,
                      noise_dim: int = 1) -> Nonlinearity:
    """Build from ``zero``, ``linear:<diag>``, ``collocation:<profile>``,
    ``modewise:<profile>`` or ``coupled-quadratic[:a,b]``."""
    head, _, arg = name.partition(":")
    scale = list(scale)
    if head == "zero":
        return ZeroNonlinearity(n_modes, noise_dim if diffusion else None)
    if head == "linear":
        diag = np.array(_floats(arg)) if arg else np.full(n_modes, scale[0])
        if diag.size != n_modes:
            raise ConfigError(f"linear diagonal needs {n_modes} entries")
        mat = np.diag(diag)
        if diffusion:
            mat = np.broadcast_to(mat, (noise_dim, n_modes, n_modes)).copy()
        return LinearNonlinearity(mat, diffusion=diffusion)
    if head == "collocation":
        sc = scale if diffusion else scale[:1]
        if diffusion and len(sc) == 1:
            sc = sc * noise_dim
        return CollocationNonlinearity(n_modes, arg or "sin", sc, diffusion)
    if head == "modewise":
        return ModewiseNonlinearity(n_modes, arg or "sin", scale[0], diffusion,
                                    noise_dim if diffusion else 1)
    if head == "coupled-quadratic":
        if diffusion or n_modes != 2:
            raise ConfigError("coupled-quadratic is a two-mode drift")
        ab = _floats(arg) if arg else [1.0, 0.5]
        return coupled_quadratic(*ab)
    raise ConfigError(f"unknown nonlinearity {name!r}")


def make_pair(cfg: RunConfig, op: SpectralOperator, noise_dim: int):
    n = cfg["nonlinearity"]
    try:
        f = make_nonlinearity(n["f"], op.n_modes, n["f_scale"], False)
        g = make_nonlinearity(n["g"], op.n_modes, n["g_scale"], True, noise_dim)
    except RoughflowError as exc:
        raise ConfigError(f"{cfg.where('nonlinearity', 'f')}: {exc}") from exc
    return f, g


def initial_value(cfg: RunConfig, n_modes: int) -> np.ndarray:
    xi = np.zeros(n_modes)
    v = np.asarray(cfg["solver"]["xi"], dtype=float)[:n_modes]
    xi[:v.size] = v
    return xi


def parse_levels(text: str) -> range:
    a, _, b = text.partition("-")
    try:
        lo, hi = int(a), int(b or a)
    except ValueError as exc:
        raise ConfigError(f"levels must look like '1-6', got {text!r}") from exc
    if lo < 1 or hi < lo + 1:
        raise ConfigError("need at least two probe levels starting at 1 or more")
    return range(lo, hi + 1)
