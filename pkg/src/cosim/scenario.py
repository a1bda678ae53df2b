"""Scenario files: a YAML tree with a fixed schema.

Unknown keys anywhere in the tree are errors; every error names the
offending key by its dotted path. See the README for the full schema.
"""

from __future__ import annotations

import hashlib
import importlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml

from .errors import ConfigError

MODELS = ("lin2", "cable", "eqs-arr2d", "user-dae")
MODES = ("one-way", "weak", "monolithic", "gauss-seidel", "jacobi")

_REQUIRED = object()


def _num(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _num_list(v):
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise TypeError("expected a list of numbers")
    return [float(x) for x in v]


def _order(v):
    if v == "auto":
        return v
    if isinstance(v, list) and all(isinstance(x, str) for x in v):
        return list(v)
    raise TypeError("expected 'auto' or a list of subsystem names")


def _p_list(v):
    if not isinstance(v, list) or not v:
        raise TypeError("expected a non-empty list")
    out = []
    for x in v:
        if x == "n":
            out.append("n")
        elif isinstance(x, int) and not isinstance(x, bool) and x >= 1:
            out.append(x)
        else:
            raise TypeError("entries must be positive integers or 'n'")
    return out


def _mapping(v):
    if not isinstance(v, dict):
        raise TypeError("expected a mapping")
    return dict(v)


def _section(data, path: str, fields: dict[str, tuple[Callable, Any]]) -> dict:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"'{path}' must be a mapping", key=path)
    for k in data:
        if k not in fields:
            key = f"{path}.{k}" if path else str(k)
            raise ConfigError(f"unknown key '{key}'", key=key)
    out = {}
    for k, (cast, default) in fields.items():
        key = f"{path}.{k}" if path else k
        if k in data:
            try:
                out[k] = cast(data[k])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid value for '{key}': {exc}", key=key) from None
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key '{key}'", key=key)
        else:
            out[k] = default
    return out


INTEGRATOR = {
    "method": (_str, "implicit-euler"),
    "h": (_num, None),
    "newton_tol": (_num, 1e-10),
    "newton_max": (_int, 25),
}

COUPLING = {
    "mode": (_str, "monolithic"),
    "window": (_num, None),
    "k_max": (_int, 50),
    "tol": (_num, 1e-10),
    "sync_step": (_num, None),
    "order": (_order, None),
}

OUTPUT = {
    "times": (_num_list, None),
    "prefix": (_str, ""),
}

STUDY = {
    "parameter": (_str, _REQUIRED),
    "values": (_num_list, _REQUIRED),
    "sweeps": (_int, 1),
    "quantity": (_str, "all"),
}

MOR = {
    "p": (_p_list, [1, 2, 4, 8]),
    "energy": (_num, None),
}

MODEL_PARAMS = {
    "lin2": {
        "a": (_num, 0.5),
        "b": (_num, 1.0),
        "c1": (_num, 0.0),
        "c2": (_num, 0.0),
        "y0": (_num_list, [1.0, 1.0]),
        "freeze_y": (_bool, False),
    },
    "cable": {
        "r_in": (_num, 0.010),
        "r_out": (_num, 0.030),
        "n_cells": (_int, 32),
        "U0": (_num, 150e3),
        "ramp_time": (_num, 0.0),
        "T_outer": (_num, 20.0),
        "T_init": (_num, 20.0),
        "conductor_loss": (_num, 60.0),
        "conductor_losses": (_bool, True),
        "insulation_losses": (_bool, True),
        "k0": (_num, 1e-16),
        "alpha_T": (_num, 0.1),
        "beta_E": (_num, 0.1),
        "Cp": (_num, 2000.0),
        "rho": (_num, 920.0),
        "lambda_th": (_num, 0.3),
    },
    "eqs-arr2d": {
        "nx": (_int, 40),
        "ny": (_int, 40),
        "column_width": (_int, 11),
        "varistor_width": (_int, 5),
        "column_height": (_int, 30),
        "h": (_num, 1.0),
        "eps_air": (_num, 1.0),
        "eps_housing": (_num, 4.0),
        "eps_varistor": (_num, 20.0),
        "sigma_housing": (_num, 0.05),
        "sigma0": (_num, 1.0),
        "q": (_num, 3.0),
        "sigma_floor": (_num, 0.01),
        "voltage": (_num, 1.0),
        "excitation": (_str, "ramp"),
        "t_rise": (_num, 10.0),
        "frequency": (_num, 1.0),
    },
    "user-dae": {
        "factory": (_str, _REQUIRED),
        "kwargs": (_mapping, {}),
    },
}

DEFAULT_T_END = {"lin2": 1.0, "cable": 3600.0, "eqs-arr2d": 60.0, "user-dae": 1.0}
DEFAULT_H = {"lin2": 0.01, "cable": 60.0, "eqs-arr2d": 0.25, "user-dae": 0.01}


@dataclass
class Scenario:
    model: str
    params: dict
    t_end: float
    integrator: dict
    coupling: dict
    output: dict
    study: dict | None = None
    mor: dict | None = None
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the validated scenario."""
        doc = {
            "model": self.model,
            "params": self.params,
            "t_end": self.t_end,
            "integrator": self.integrator,
            "coupling": self.coupling,
            "output": self.output,
            "study": self.study,
            "mor": self.mor,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def parse_scenario(data: Any) -> Scenario:
    """Validate a scenario tree.

    Raises
    ------
    ConfigError
        Naming the offending key.
    """
    top = _section(
        data,
        "",
        {
            "model": (_str, _REQUIRED),
            "params": (lambda v: v, None),
            "t_end": (_num, None),
            "integrator": (lambda v: v, None),
            "coupling": (lambda v: v, None),
            "output": (lambda v: v, None),
            "study": (lambda v: v, None),
            "mor": (lambda v: v, None),
        },
    )
    model = top["model"]
    if model not in MODELS:
        raise ConfigError(f"unknown model '{model}' for key 'model'; choose from {MODELS}", key="model")
    params = _section(top["params"], "params", MODEL_PARAMS[model])
    integ = _section(top["integrator"], "integrator", INTEGRATOR)
    if integ["method"] not in ("implicit-euler", "trapezoidal"):
        raise ConfigError(f"unknown integration method '{integ['method']}' for key 'integrator.method'", key="integrator.method")
    if integ["h"] is None:
        integ["h"] = DEFAULT_H[model]
    if not integ["h"] > 0:
        raise ConfigError("'integrator.h' must be positive", key="integrator.h")
    coupling = _section(top["coupling"], "coupling", COUPLING)
    if coupling["mode"] not in MODES:
        raise ConfigError(f"unknown coupling mode '{coupling['mode']}' for key 'coupling.mode'; choose from {MODES}", key="coupling.mode")
    t_end = top["t_end"] if top["t_end"] is not None else DEFAULT_T_END[model]
    if not t_end > 0:
        raise ConfigError("'t_end' must be positive", key="t_end")
    mode = coupling["mode"]
    study_param = top["study"].get("parameter") if isinstance(top["study"], dict) else None
    if mode in ("gauss-seidel", "jacobi") and study_param != "window":
        if coupling["window"] is None:
            raise ConfigError(f"coupling mode '{mode}' needs 'coupling.window'", key="coupling.window")
    if coupling["window"] is not None and not coupling["window"] > 0:
        raise ConfigError("'coupling.window' must be positive", key="coupling.window")
    if mode == "weak" and study_param != "sync_step":
        if coupling["sync_step"] is None:
            raise ConfigError("coupling mode 'weak' needs 'coupling.sync_step'", key="coupling.sync_step")
    if coupling["sync_step"] is not None and not coupling["sync_step"] > 0:
        raise ConfigError("'coupling.sync_step' must be positive", key="coupling.sync_step")
    if coupling["k_max"] < 1:
        raise ConfigError("'coupling.k_max' must be >= 1", key="coupling.k_max")
    output = _section(top["output"], "output", OUTPUT)
    study = None
    if top["study"] is not None:
        study = _section(top["study"], "study", STUDY)
        if study["parameter"] not in ("window", "sync_step"):
            raise ConfigError("'study.parameter' must be 'window' or 'sync_step'", key="study.parameter")
        if len(study["values"]) < 3 or min(study["values"]) <= 0:
            raise ConfigError("'study.values' needs at least 3 positive entries", key="study.values")
        needs = ("gauss-seidel", "jacobi") if study["parameter"] == "window" else ("weak",)
        if mode not in needs:
            raise ConfigError(
                f"'study.parameter' = {study['parameter']!r} requires coupling.mode in {needs}", key="study.parameter"
            )
        if study["quantity"] not in ("all", "y", "z"):
            raise ConfigError("'study.quantity' must be 'all', 'y' or 'z'", key="study.quantity")
    mor = None
    if top["mor"] is not None:
        mor = _section(top["mor"], "mor", MOR)
        if mor["energy"] is not None and not 0 < mor["energy"] <= 1:
            raise ConfigError("'mor.energy' must lie in (0, 1]", key="mor.energy")
    if model == "user-dae" and ":" not in params["factory"]:
        raise ConfigError("'params.factory' must look like 'module:callable'", key="params.factory")
    return Scenario(model, params, float(t_end), integ, coupling, output, study, mor, data)


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", key="<file>") from None
    return parse_scenario(data)


def resolve_factory(spec: str) -> Callable:
    module, _, attr = spec.partition(":")
    try:
        obj = importlib.import_module(module)
        for part in attr.split("."):
            obj = getattr(obj, part)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot resolve 'params.factory' = {spec!r}: {exc}", key="params.factory") from None
    if not callable(obj):
        raise ConfigError(f"'params.factory' = {spec!r} is not callable", key="params.factory")
    return obj
