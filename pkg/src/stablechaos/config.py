"""Experiment configuration: a YAML key tree with strict validation.

Unknown keys, wrong types and out-of-range values raise :class:`ConfigError`.
Example::

    model: {alpha: 1.5, beta: 0.3, epsilon: 0.8, delta: 0.3, dim: 1, T: 0.5}
    driver: {spectral: isotropic, scale: 1.0}
    kernel: {profile: smooth_bump, radius: 1.0}
    drift: {type: burgers_saturated, direction: [1.0], cap: 1.0}
    u0: {type: bump, center: [0.0], radius: 1.0}
    grid: {box_halfwidth: 8.0, points: 4096}
    simulation: {dt: 0.00625, N_list: [512, 2048, 8192], seeds: [1, 2], checkpoint_times: [0, 0.25, 0.5]}
    pde: {points: 1024, dt: 0.0025, method: splitting}
    norms: {eta: 0.55, window_fraction: 0.6, gamma: 0.25}
    test_functions:
      - {name: bump0, type: bump, center: [0.0], radius: 2.0}
    flags: {half_factor: false}
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import numpy as np
import yaml

from . import stable_levy as sl
from .mollifier import Kernel, ModelParams, SmoothBump, WendlandC2, validate_params
from .particles import BumpDensity, BurgersSaturated, ConstantDrift, TestFunction, UniformDensity, ZeroDrift
from .spectral import GridField, GridSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "DEFAULTS"]


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "model": {"alpha": 1.5, "beta": 0.3, "epsilon": 0.8, "delta": 0.3, "dim": 1, "T": 0.5},
    "driver": {"spectral": "isotropic", "scale": 1.0},
    "kernel": {"profile": "smooth_bump", "radius": 1.0},
    "drift": {"type": "burgers_saturated", "direction": None, "cap": 1.0},
    "u0": {"type": "bump", "center": None, "radius": 1.0},
    "grid": {"box_halfwidth": 8.0, "points": 4096},
    "simulation": {
        "dt": 0.00625,
        "N_list": [512, 2048, 8192],
        "seeds": list(range(1, 21)),
        "checkpoint_times": [0.0, 0.125, 0.25, 0.375, 0.5],
        "noise": True,
    },
    "pde": {"points": 1024, "dt": 0.0025, "method": "splitting"},
    "norms": {"eta": 0.55, "window_fraction": 0.6, "gamma": 0.25},
    "test_functions": None,
    "flags": {"half_factor": False},
}

_ALLOWED = {
    "model": {"alpha", "beta", "epsilon", "delta", "dim", "T"},
    "driver": {"spectral", "scale", "directions", "weights"},
    "kernel": {"profile", "radius"},
    "drift": {"type", "direction", "cap", "velocity"},
    "u0": {"type", "center", "radius", "low", "high"},
    "grid": {"box_halfwidth", "points"},
    "simulation": {"dt", "N_list", "seeds", "checkpoint_times", "noise"},
    "pde": {"points", "dt", "method"},
    "norms": {"eta", "window_fraction", "gamma"},
    "flags": {"half_factor"},
}
_TF_KEYS = {"name", "type", "center", "radius", "k"}


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown key '{where}'")
        if k == "test_functions":
            out[k] = v
            continue
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            allowed = _ALLOWED[k]
            for kk in v:
                if kk not in allowed:
                    raise ConfigError(f"unknown key '{where}.{kk}'")
            out[k].update(v)
        else:
            out[k] = v
    return out


def _num(d, key, path, *, positive=False, integer=False):
    v = d.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{path}.{key}' must be a number")
    if integer and int(v) != v:
        raise ConfigError(f"'{path}.{key}' must be an integer")
    if positive and not v > 0:
        raise ConfigError(f"'{path}.{key}' must be positive")
    return int(v) if integer else float(v)


def _vec(v, dim, path):
    if not isinstance(v, (list, tuple)) or len(v) != dim:
        raise ConfigError(f"'{path}' must be a list of {dim} numbers")
    try:
        return tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(f"'{path}' must be a list of {dim} numbers") from None


@dataclass
class ExperimentConfig:
    raw: dict
    model: ModelParams
    driver: sl.StableDriver
    kernel: Kernel
    drift: object
    u0: object
    grid: GridSpec
    pde_grid: GridSpec
    pde_dt: float
    method: str
    dt: float
    N_list: list
    seeds: list
    checkpoint_times: list
    noise: bool
    eta: float
    window_radius: float
    gamma: float
    test_function_specs: list
    half_factor: bool

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    def with_overrides(self, **sim) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw["simulation"].update(sim)
        return parse_config(raw)

    def test_functions(self, driver=None, spec=None) -> list:
        spec = spec or self.grid
        driver = driver or self.driver
        out = []
        for tf in self.test_function_specs:
            if tf["type"] == "bump":
                f = BumpDensity(tuple(tf["center"]), tf["radius"]).on_grid(spec)
            else:
                k = np.asarray(tf["k"], dtype=float)
                L = spec.box_halfwidth
                f = GridField.from_function(spec, lambda x, k=k: np.cos(np.pi * (x @ k) / L))
            out.append(TestFunction(f, driver, tf["name"]))
        return out


def parse_config(data: dict | None) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    raw = _merge(DEFAULTS, data)

    m = raw["model"]
    dim = _num(m, "dim", "model", integer=True)
    if dim not in (1, 2):
        raise ConfigError("'model.dim' must be 1 or 2")
    model = ModelParams(
        alpha=_num(m, "alpha", "model"),
        beta=_num(m, "beta", "model"),
        epsilon=_num(m, "epsilon", "model"),
        delta=_num(m, "delta", "model"),
        dim=dim,
        T=_num(m, "T", "model", positive=True),
    )
    if not 1 < model.alpha < 2:
        raise ConfigError("'model.alpha' must lie in (1, 2)")
    report = validate_params(model)
    if not report.ok:
        bad = ", ".join(f"{c.name}: {c.lower:.6g} < {c.value:.6g} < {c.upper:.6g} fails" for c in report.violations)
        raise ConfigError(f"model parameters violate the constraints ({bad})")

    d = raw["driver"]
    if d["spectral"] == "isotropic":
        spectral = sl.Isotropic(_num(d, "scale", "driver", positive=True))
    elif d["spectral"] == "discrete":
        dirs = d.get("directions")
        w = d.get("weights")
        if not isinstance(dirs, list) or not isinstance(w, list) or len(dirs) != len(w) or not dirs:
            raise ConfigError("'driver.directions' and 'driver.weights' must be lists of equal length")
        spectral = sl.Discrete(tuple(_vec(v, dim, "driver.directions[]") for v in dirs), tuple(float(x) for x in w))
    else:
        raise ConfigError("'driver.spectral' must be 'isotropic' or 'discrete'")
    try:
        driver = sl.StableDriver(model.alpha, dim, spectral)
    except ValueError as exc:
        raise ConfigError(f"driver: {exc}") from None

    k = raw["kernel"]
    prof = {"smooth_bump": SmoothBump, "wendland_c2": WendlandC2}.get(k["profile"])
    if prof is None:
        raise ConfigError("'kernel.profile' must be 'smooth_bump' or 'wendland_c2'")
    kernel = Kernel(dim, prof(_num(k, "radius", "kernel", positive=True)))

    dr = raw["drift"]
    e = dr.get("direction") or [1.0] + [0.0] * (dim - 1)
    if dr["type"] == "burgers_saturated":
        drift = BurgersSaturated(_vec(e, dim, "drift.direction"), _num(dr, "cap", "drift", positive=True))
    elif dr["type"] == "zero":
        drift = ZeroDrift(dim)
    elif dr["type"] == "constant":
        drift = ConstantDrift(_vec(dr.get("velocity"), dim, "drift.velocity"))
    else:
        raise ConfigError("'drift.type' must be burgers_saturated, zero or constant")

    u = raw["u0"]
    if u["type"] == "bump":
        c = u.get("center") or [0.0] * dim
        u0 = BumpDensity(_vec(c, dim, "u0.center"), _num(u, "radius", "u0", positive=True))
    elif u["type"] == "uniform":
        lo, hi = _num(u, "low", "u0"), _num(u, "high", "u0")
        if not hi > lo:
            raise ConfigError("'u0.high' must exceed 'u0.low'")
        u0 = UniformDensity(lo, hi, dim)
    else:
        raise ConfigError("'u0.type' must be bump or uniform")

    g = raw["grid"]
    try:
        grid = GridSpec(dim, _num(g, "box_halfwidth", "grid", positive=True), _num(g, "points", "grid", integer=True))
        pde_grid = GridSpec(dim, grid.box_halfwidth, _num(raw["pde"], "points", "pde", integer=True))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if grid.points % pde_grid.points:
        raise ConfigError("'pde.points' must divide 'grid.points'")

    s = raw["simulation"]
    dt = _num(s, "dt", "simulation", positive=True)
    N_list = s["N_list"]
    if not isinstance(N_list, list) or not N_list or any(isinstance(n, bool) or not isinstance(n, int) or n < 1 for n in N_list):
        raise ConfigError("'simulation.N_list' must be a list of positive integers")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ConfigError("'simulation.N_list' must be increasing")
    seeds = s["seeds"]
    if not isinstance(seeds, list) or not seeds or any(isinstance(x, bool) or not isinstance(x, int) or not 0 <= x < 2**64 for x in seeds):
        raise ConfigError("'simulation.seeds' must be a list of 64-bit unsigned integers")
    cps = [float(t) for t in s["checkpoint_times"]]
    if not cps or any(b <= a for a, b in zip(cps, cps[1:])) or cps[0] < 0 or cps[-1] > model.T + 1e-12:
        raise ConfigError("'simulation.checkpoint_times' must increase within [0, T]")
    for t in cps + [model.T]:
        if abs(t / dt - round(t / dt)) > 1e-9 * max(1.0, t / dt):
            raise ConfigError(f"simulation.dt does not divide time {t}")
    if not isinstance(s["noise"], bool):
        raise ConfigError("'simulation.noise' must be a boolean")

    pd = raw["pde"]
    pde_dt = _num(pd, "dt", "pde", positive=True)
    for t in cps + [model.T]:
        if abs(t / pde_dt - round(t / pde_dt)) > 1e-9 * max(1.0, t / pde_dt):
            raise ConfigError(f"pde.dt does not divide time {t}")
    if pd["method"] not in ("splitting", "picard"):
        raise ConfigError("'pde.method' must be splitting or picard")

    nm = raw["norms"]
    eta = _num(nm, "eta", "norms")
    if not dim / 2 < eta < model.epsilon:
        raise ConfigError(f"'norms.eta' must lie in ({dim / 2}, {model.epsilon})")
    wf = _num(nm, "window_fraction", "norms", positive=True)
    if wf > 1:
        raise ConfigError("'norms.window_fraction' must be at most 1")
    gamma = _num(nm, "gamma", "norms")
    if not 0 < gamma < 0.5:
        raise ConfigError("'norms.gamma' must lie in (0, 0.5)")

    tfs = raw["test_functions"]
    if tfs is None:
        tfs = [
            {"name": "bump_wide", "type": "bump", "center": [0.0] * dim, "radius": 3.0},
            {"name": "bump_right", "type": "bump", "center": [1.0] + [0.0] * (dim - 1), "radius": 1.5},
            {"name": "cos1", "type": "cos", "k": [1] + [0] * (dim - 1)},
        ]
        raw["test_functions"] = tfs
    if not isinstance(tfs, list):
        raise ConfigError("'test_functions' must be a list")
    names = set()
    for i, tf in enumerate(tfs):
        where = f"test_functions[{i}]"
        if not isinstance(tf, dict):
            raise ConfigError(f"'{where}' must be a mapping")
        for kk in tf:
            if kk not in _TF_KEYS:
                raise ConfigError(f"unknown key '{where}.{kk}'")
        if not isinstance(tf.get("name"), str) or tf["name"] in names:
            raise ConfigError(f"'{where}.name' must be a unique string")
        names.add(tf["name"])
        if tf.get("type") == "bump":
            _vec(tf.get("center"), dim, f"{where}.center")
            _num(tf, "radius", where, positive=True)
        elif tf.get("type") == "cos":
            k_ = tf.get("k")
            if not isinstance(k_, list) or len(k_) != dim or any(not isinstance(x, int) for x in k_):
                raise ConfigError(f"'{where}.k' must be a list of {dim} integers")
        else:
            raise ConfigError(f"'{where}.type' must be bump or cos")

    fl = raw["flags"]
    if not isinstance(fl["half_factor"], bool):
        raise ConfigError("'flags.half_factor' must be a boolean")

    return ExperimentConfig(
        raw=raw,
        model=model,
        driver=driver,
        kernel=kernel,
        drift=drift,
        u0=u0,
        grid=grid,
        pde_grid=pde_grid,
        pde_dt=pde_dt,
        method=pd["method"],
        dt=dt,
        N_list=list(N_list),
        seeds=list(seeds),
        checkpoint_times=cps,
        noise=s["noise"],
        eta=eta,
        window_radius=wf * grid.box_halfwidth,
        gamma=gamma,
        test_function_specs=tfs,
        half_factor=fl["half_factor"],
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return parse_config(data)
