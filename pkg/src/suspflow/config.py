"""JSON run-configuration parsing and validation.

Configs are validated strictly before any computation: unknown keys are
rejected by name, required keys are reported when missing, and parameter
records are converted into the typed objects the library consumes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .base_maps import (
    KIND_DOUBLING,
    KIND_GEOMETRIC_2D,
    KIND_LORENZ_QUOTIENT,
    MapModel,
    doubling,
    geometric_lorenz_2d,
    lorenz_quotient,
)
from .errors import ConfigInvalid
from .estimation import DeviationConfig
from .lorenz import LorenzParams, TrapBox
from .suspension import FlowObservable, RoofSpec

EXPERIMENTS = ("base-check", "deviation", "escape", "lorenz-section", "simulate")

_NUM = (int, float)


@dataclass(frozen=True)
class RunConfig:
    """A validated run configuration; ``data`` is the normalized JSON object."""

    experiment: str
    seed: int
    data: dict


def _require(d: Mapping, key: str, path: str) -> Any:
    if key not in d:
        raise ConfigInvalid(f"missing required key '{path}{key}'")
    return d[key]


def _check_keys(d: Mapping, allowed: set[str], path: str = "") -> None:
    if not isinstance(d, Mapping):
        raise ConfigInvalid(f"'{path.rstrip('.')}' must be an object")
    for k in d:
        if k not in allowed:
            raise ConfigInvalid(f"unknown key '{path}{k}'")


def _number(d: Mapping, key: str, path: str, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigInvalid(f"missing required key '{path}{key}'")
        return default
    v = d[key]
    if not isinstance(v, _NUM) or isinstance(v, bool):
        raise ConfigInvalid(f"'{path}{key}' must be a number, got {v!r}")
    return float(v)


def _integer(d: Mapping, key: str, path: str, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigInvalid(f"missing required key '{path}{key}'")
        return default
    v = d[key]
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigInvalid(f"'{path}{key}' must be an integer, got {v!r}")
    return v


def _string(d: Mapping, key: str, path: str, default=None, required=False,
            choices: tuple[str, ...] | None = None):
    if key not in d:
        if required:
            raise ConfigInvalid(f"missing required key '{path}{key}'")
        return default
    v = d[key]
    if not isinstance(v, str):
        raise ConfigInvalid(f"'{path}{key}' must be a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigInvalid(f"'{path}{key}' must be one of {choices}, got {v!r}")
    return v


def _number_list(d: Mapping, key: str, path: str, required=False):
    if key not in d:
        if required:
            raise ConfigInvalid(f"missing required key '{path}{key}'")
        return None
    v = d[key]
    if (not isinstance(v, (list, tuple)) or not v
            or any(not isinstance(t, _NUM) or isinstance(t, bool) for t in v)):
        raise ConfigInvalid(f"'{path}{key}' must be a nonempty list of numbers")
    return [float(t) for t in v]


def build_model(d: Mapping, path: str = "model.") -> MapModel:
    kind = _string(d, "kind", path, required=True,
                   choices=(KIND_LORENZ_QUOTIENT, KIND_DOUBLING, KIND_GEOMETRIC_2D))
    try:
        if kind == KIND_DOUBLING:
            _check_keys(d, {"kind"}, path)
            return doubling()
        if kind == KIND_LORENZ_QUOTIENT:
            _check_keys(d, {"kind", "alpha"}, path)
            return lorenz_quotient(alpha=_number(d, "alpha", path, default=0.75))
        _check_keys(d, {"kind", "alpha", "lambda_s", "offset"}, path)
        return geometric_lorenz_2d(
            alpha=_number(d, "alpha", path, default=0.75),
            lambda_s=_number(d, "lambda_s", path, default=0.2),
            offset=_number(d, "offset", path, default=0.5),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"invalid '{path.rstrip('.')}': {exc}") from exc


def build_roof(d: Mapping | None, path: str = "roof.") -> RoofSpec:
    if d is None:
        return RoofSpec()
    _check_keys(d, {"r0", "K", "delta"}, path)
    try:
        return RoofSpec(
            r0=_number(d, "r0", path, default=1.0),
            K=_number(d, "K", path, default=1.0),
            delta=_number(d, "delta", path, default=0.1),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"invalid '{path.rstrip('.')}': {exc}") from exc


def build_lorenz(d: Mapping | None, path: str = "lorenz.") -> LorenzParams:
    if d is None:
        return LorenzParams()
    _check_keys(d, {"sigma", "rho", "beta"}, path)
    try:
        return LorenzParams(
            sigma=_number(d, "sigma", path, default=10.0),
            rho=_number(d, "rho", path, default=28.0),
            beta=_number(d, "beta", path, default=8.0 / 3.0),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"invalid '{path.rstrip('.')}': {exc}") from exc


def build_box(d: Mapping | None, path: str = "region.") -> TrapBox:
    base = TrapBox()
    if d is None:
        return base
    _check_keys(d, {"xlo", "xhi", "ylo", "yhi", "zlo", "zhi"}, path)
    try:
        return TrapBox(
            xlo=_number(d, "xlo", path, default=base.xlo),
            xhi=_number(d, "xhi", path, default=base.xhi),
            ylo=_number(d, "ylo", path, default=base.ylo),
            yhi=_number(d, "yhi", path, default=base.yhi),
            zlo=_number(d, "zlo", path, default=base.zlo),
            zhi=_number(d, "zhi", path, default=base.zhi),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"invalid '{path.rstrip('.')}': {exc}") from exc


SUSPENSION_PSI = ("x", "s", "one", "cos_s", "cos2pix")
FLOW_PSI = ("x", "y", "z")


def suspension_observable(code: str) -> FlowObservable:
    """Named observables on the suspension space with exact fiber integrals."""
    if code == "x":
        return FlowObservable(fn=lambda x, s: x + 0.0 * s, bound=1.0,
                              fiber_integral=lambda x, a, b: x * (b - a))
    if code == "s":
        return FlowObservable(fn=lambda x, s: s + 0.0 * x, bound=float("inf"),
                              fiber_integral=lambda x, a, b: 0.5 * (b * b - a * a))
    if code == "one":
        return FlowObservable(fn=lambda x, s: 1.0 + 0.0 * (x + s), bound=1.0,
                              fiber_integral=lambda x, a, b: (b - a) + 0.0 * x)
    if code == "cos_s":
        return FlowObservable(fn=lambda x, s: np.cos(s) + 0.0 * x, bound=1.0,
                              fiber_integral=lambda x, a, b: np.sin(b) - np.sin(a) + 0.0 * x)
    if code == "cos2pix":
        return FlowObservable(
            fn=lambda x, s: np.cos(2.0 * np.pi * x) + 0.0 * s, bound=1.0,
            fiber_integral=lambda x, a, b: np.cos(2.0 * np.pi * x) * (b - a))
    raise ConfigInvalid(f"'psi' must be one of {SUSPENSION_PSI}, got {code!r}")


def base_observable(code: str):
    """Named vectorized observables on the base interval."""
    if code == "x":
        return lambda xs: xs
    if code == "cos2pix":
        return lambda xs: np.cos(2.0 * np.pi * np.asarray(xs))
    raise ConfigInvalid(f"base observable must be 'x' or 'cos2pix', got {code!r}")


_AVERAGE_KEYS = {"n_orbits", "orbit_length", "burn_in"}
_FLOW_AVERAGE_KEYS = {"n_orbits", "burn_in", "horizon"}

_SCHEMAS: dict[str, set[str]] = {
    "base-check": {"experiment", "seed", "model", "n_points", "n_iterates",
                   "recurrence", "average"},
    "deviation": {"experiment", "seed", "system", "model", "roof", "psi",
                  "epsilon", "t_grid", "n_samples", "average", "lorenz",
                  "box", "h"},
    "escape": {"experiment", "seed", "lorenz", "region", "t_grid", "n_samples",
               "h", "settle", "check_occupation", "occupation_time"},
    "lorenz-section": {"experiment", "seed", "lorenz", "n_points", "d_lo",
                       "d_hi", "h", "max_time"},
    "simulate": {"experiment", "seed", "system", "model", "roof", "lorenz",
                 "initial", "T", "h", "n_snapshots"},
}


def parse_config(obj: Any) -> RunConfig:
    """Validate a decoded JSON object into a RunConfig."""
    if not isinstance(obj, Mapping):
        raise ConfigInvalid("configuration must be a JSON object")
    experiment = _string(obj, "experiment", "", required=True, choices=EXPERIMENTS)
    _check_keys(obj, _SCHEMAS[experiment])
    seed = _integer(obj, "seed", "", default=0)

    if experiment == "base-check":
        build_model(_require(obj, "model", ""))
        _integer(obj, "n_points", "", default=1000)
        _integer(obj, "n_iterates", "", default=10**4)
        if "recurrence" in obj:
            rec = obj["recurrence"]
            _check_keys(rec, {"epsilon", "delta", "n_grid", "n_samples"}, "recurrence.")
            _number(rec, "epsilon", "recurrence.", required=True)
            _number(rec, "delta", "recurrence.", required=True)
            _number_list(rec, "n_grid", "recurrence.", required=True)
            _integer(rec, "n_samples", "recurrence.", required=True)
        if "average" in obj:
            _check_keys(obj["average"], _AVERAGE_KEYS, "average.")
    elif experiment == "deviation":
        system = _string(obj, "system", "", default="suspension",
                         choices=("suspension", "flow"))
        psi = _string(obj, "psi", "", required=True)
        epsilon = _number(obj, "epsilon", "", required=True)
        t_grid = _number_list(obj, "t_grid", "", required=True)
        n_samples = _integer(obj, "n_samples", "", required=True)
        try:
            DeviationConfig(epsilon=epsilon, t_grid=tuple(t_grid),
                            n_samples=n_samples, seed=seed)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc
        if system == "suspension":
            for bad in ("lorenz", "box", "h"):
                if bad in obj:
                    raise ConfigInvalid(f"key '{bad}' is not valid for system=suspension")
            build_model(_require(obj, "model", ""))
            build_roof(obj.get("roof"))
            suspension_observable(psi)
            if "average" in obj:
                _check_keys(obj["average"], _AVERAGE_KEYS, "average.")
        else:
            for bad in ("model", "roof"):
                if bad in obj:
                    raise ConfigInvalid(f"key '{bad}' is not valid for system=flow")
            build_lorenz(obj.get("lorenz"))
            build_box(obj.get("box"), "box.")
            if psi not in FLOW_PSI:
                raise ConfigInvalid(f"'psi' must be one of {FLOW_PSI} for system=flow")
            _number(obj, "h", "", default=5e-4)
            if "average" in obj:
                _check_keys(obj["average"], _FLOW_AVERAGE_KEYS, "average.")
    elif experiment == "escape":
        build_lorenz(obj.get("lorenz"))
        build_box(obj.get("region"))
        _number_list(obj, "t_grid", "", required=True)
        _integer(obj, "n_samples", "", required=True)
        _number(obj, "h", "", default=5e-4)
        _number(obj, "settle", "", default=0.0)
        _number(obj, "occupation_time", "", default=1e4)
        if "check_occupation" in obj and not isinstance(obj["check_occupation"], bool):
            raise ConfigInvalid("'check_occupation' must be a boolean")
    elif experiment == "lorenz-section":
        build_lorenz(obj.get("lorenz"))
        _integer(obj, "n_points", "", default=17)
        _number(obj, "d_lo", "", default=1e-6)
        _number(obj, "d_hi", "", default=1e-2)
        _number(obj, "h", "", default=5e-4)
        _number(obj, "max_time", "", default=1e3)
    elif experiment == "simulate":
        system = _string(obj, "system", "", default="flow",
                         choices=("suspension", "flow"))
        initial = _number_list(obj, "initial", "", required=True)
        _number(obj, "T", "", required=True)
        _integer(obj, "n_snapshots", "", default=200)
        if system == "flow":
            build_lorenz(obj.get("lorenz"))
            if len(initial) != 3:
                raise ConfigInvalid("'initial' must be [x, y, z] for system=flow")
        else:
            build_model(_require(obj, "model", ""))
            build_roof(obj.get("roof"))
            if len(initial) != 2:
                raise ConfigInvalid("'initial' must be [x, s] for system=suspension")
    return RunConfig(experiment=experiment, seed=seed, data=dict(obj))
