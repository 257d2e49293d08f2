"""Problem configuration: a single JSON document with embedded defaults.

Every section and key is listed in ``DEFAULTS``; anything else is rejected.
The resolved configuration (defaults merged with the user's document) is
what the solver sees and what the summary embeds.
"""
from __future__ import annotations

import copy
import dataclasses
import json

from .errors import ConfigError
from .solver import SolverConfig

_SOLVER_DEFAULTS = {f.name: f.default for f in dataclasses.fields(SolverConfig)}

DEFAULTS = {
    "problem": {
        "dimension": None,  # inferred from the potential when omitted
        "potential": {"builtin": "harmonic2d", "params": {}},
        "energy": None,  # builtin default when omitted
        "metric": {"euclidean": {}},
    },
    "discretization": {"modes": 32, "samples": 256},
    "linking": {"cycle": "builtin", "rho": None, "nodes": 9, "n_sigma": [6, 12, 6]},
    "solver": _SOLVER_DEFAULTS,
    "homology": {"bbox": None, "grid_n": 64, "delta": None, "distance_grid_n": 256},
    "checks": {"radii": None, "samples_per_shell": 64, "override": False},
    "output": {"orbit_csv": None, "summary_json": None, "report_json": None,
               "family_dump": None, "orbit_samples": 512, "shooting_rtol": 1e-10},
}

# keys whose values are free-form mappings (not checked against DEFAULTS)
_OPEN = {("problem", "potential"), ("problem", "metric"), ("linking", "cycle")}

HELP = {
    "problem.potential": '{"builtin": name, "params": {...}} or {"polynomial": {"i,j": coeff}} '
                         "(V as a polynomial; U = energy - V)",
    "problem.metric": '{"euclidean": {}}, {"flat_torus": {"periods": [...]}} or '
                      '{"conformal2d": {"phi": {"i,j": coeff}}}',
    "linking.cycle": '"builtin", {"polyline": [[...], ...]} or {"mesh": [[[...], ...], ...]}',
    "homology.bbox": "[[lo...], [hi...]]; builtin default when null",
}


def defaults() -> dict:
    return copy.deepcopy(DEFAULTS)


def _merge(base, user, path):
    out = copy.deepcopy(base)
    for key, val in user.items():
        where = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown key '{'.'.join(where)}'")
        if isinstance(base[key], dict) and where not in _OPEN and key != "params":
            if not isinstance(val, dict):
                raise ConfigError(f"'{'.'.join(where)}' must be an object")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve(user: dict) -> dict:
    """Merge a user document into the defaults, rejecting unknown keys."""
    if not isinstance(user, dict):
        raise ConfigError("configuration must be a JSON object")
    cfg = _merge(DEFAULTS, user, ())
    _validate(cfg)
    return cfg


def load(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return resolve(user)


def _one_of(mapping, allowed, what):
    if not isinstance(mapping, dict) or len(mapping) == 0:
        raise ConfigError(f"{what} must be an object with one of {sorted(allowed)}")
    keys = set(mapping) - {"params"}
    if len(keys) != 1 or not keys <= set(allowed):
        bad = sorted(keys - set(allowed)) or sorted(keys)
        raise ConfigError(f"unknown key '{what}.{bad[0]}'" if keys - set(allowed)
                          else f"{what} needs exactly one of {sorted(allowed)}")
    return keys.pop()


def _validate(cfg):
    prob = cfg["problem"]
    kind = _one_of(prob["potential"], ("builtin", "polynomial"), "problem.potential")
    if kind == "builtin" and "params" in prob["potential"] and not isinstance(
            prob["potential"]["params"], dict):
        raise ConfigError("problem.potential.params must be an object")
    if kind == "polynomial" and set(prob["potential"]) - {"polynomial"}:
        raise ConfigError("unknown key 'problem.potential.params' for a polynomial potential")
    _one_of(prob["metric"], ("euclidean", "flat_torus", "conformal2d"), "problem.metric")
    d = cfg["discretization"]
    if int(d["modes"]) < 1 or int(d["samples"]) < 4 * int(d["modes"]) + 1:
        raise ConfigError("discretization needs modes >= 1 and samples >= 4 * modes + 1")
    lk = cfg["linking"]
    if lk["cycle"] != "builtin":
        _one_of(lk["cycle"], ("polyline", "mesh"), "linking.cycle")
    if int(lk["nodes"]) < 3:
        raise ConfigError("linking.nodes must be at least 3")
    if len(lk["n_sigma"]) != 3 or min(lk["n_sigma"]) < 1:
        raise ConfigError("linking.n_sigma must list three positive block sizes")
    if int(cfg["homology"]["grid_n"]) < 8:
        raise ConfigError("homology.grid_n must be at least 8")
    if int(cfg["output"]["orbit_samples"]) < 8:
        raise ConfigError("output.orbit_samples must be at least 8")
    try:
        solver_config(cfg)
    except Exception as exc:
        raise ConfigError(f"solver section: {exc}") from exc


def solver_config(cfg) -> SolverConfig:
    return SolverConfig(**cfg["solver"])


def dumps(cfg) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)
