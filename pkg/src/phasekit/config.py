"""Experiment configuration: YAML ingestion, validation, system building.

One config file drives an experiment end to end.  Unknown keys are rejected
(typo safety), every numeric field is range-checked, and all paths are
resolved relative to the config file's directory.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dynsys import OdeSystem
from .errors import ConfigError
from .models import (InjectionPort, MemristorParams, memristor_system,
                     ring3_system, vdp_system)

_MODEL_KINDS = ("vdp", "memristor", "ring3")

_DEFAULT_X0 = {
    "vdp": [0.1, 0.0],
    "ring3": [0.02, -0.01, 0.015],
    "memristor": [0.0, 0.0],
}


def _require_map(node, name: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError(f"{name}: expected a mapping")
    return dict(node)


def _check_keys(d: dict, name: str, allowed: set[str]) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {unknown}")


def _coerce_number(v):
    """YAML 1.1 reads '1e6' (no exponent sign) as a string; accept it."""
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    return v


def _number(d: dict, name: str, key: str, default=None, minimum=None,
            strict_min=False, maximum=None) -> float:
    if key not in d:
        if default is None:
            raise ConfigError(f"{name}.{key}: required key is missing")
        return default
    v = _coerce_number(d[key])
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name}.{key}: expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{name}.{key}: must be finite")
    if minimum is not None:
        if strict_min and not v > minimum:
            raise ConfigError(f"{name}.{key}: must be > {minimum}, got {v}")
        if not strict_min and v < minimum:
            raise ConfigError(f"{name}.{key}: must be >= {minimum}, got {v}")
    if maximum is not None and v > maximum:
        raise ConfigError(f"{name}.{key}: must be <= {maximum}, got {v}")
    return v


def _integer(d: dict, name: str, key: str, default=None, minimum=None) -> int:
    if key not in d:
        if default is None:
            raise ConfigError(f"{name}.{key}: required key is missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name}.{key}: expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{name}.{key}: must be >= {minimum}, got {v}")
    return v


def _number_list(d: dict, name: str, key: str, length: int) -> tuple:
    if key not in d:
        raise ConfigError(f"{name}.{key}: required key is missing")
    v = d[key]
    if not isinstance(v, (list, tuple)) or len(v) != length:
        raise ConfigError(f"{name}.{key}: expected a list of {length} numbers")
    out = []
    for i, x in enumerate(v):
        x = _coerce_number(x)
        if isinstance(x, bool) or not isinstance(x, (int, float)) \
                or not math.isfinite(float(x)):
            raise ConfigError(f"{name}.{key}[{i}]: expected a finite number")
        out.append(float(x))
    return tuple(out)


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    params: dict
    x0: tuple
    injection_state: int
    injection_gain: float


@dataclass(frozen=True)
class IntegrationConfig:
    bootstrap_step: float
    step_policy: float | str  # "auto" or explicit step in seconds
    step_divisor: int
    method: str
    settle_periods: int
    settle_tol: float
    period_tol: float
    max_settle_periods: int
    discard_periods: int
    crossings: int
    grid_size: int


@dataclass(frozen=True)
class PrcConfig:
    n_points: int
    charge: float | str  # "auto" or explicit coulombs
    mode: str
    pulse_width: float | None  # seconds; None -> T0/1000
    target_prc_rad: float


@dataclass(frozen=True)
class PpvConfig:
    harmonics: int
    compare: bool
    adjoint_periods: int
    adjoint_tol: float
    steps_per_period: int
    norm_tol: float


@dataclass(frozen=True)
class PhasesimConfig:
    network: Path
    t_end: float
    dt: float | None


@dataclass(frozen=True)
class LockConfig:
    amp: float
    detuning_rel: float
    horizon_periods: int
    source: str


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    integration: IntegrationConfig
    prc: PrcConfig
    ppv: PpvConfig
    phasesim: PhasesimConfig | None
    lock: LockConfig | None
    output_dir: Path
    base_dir: Path


def _parse_model(d: dict) -> ModelConfig:
    d = _require_map(d, "model")
    kind = d.get("kind")
    if kind not in _MODEL_KINDS:
        raise ConfigError(
            f"model.kind: expected one of {list(_MODEL_KINDS)}, got {kind!r}")
    common = {"kind", "x0", "injection"}
    if kind == "vdp":
        _check_keys(d, "model", common | {"mu"})
        params = {"mu": _number(d, "model", "mu", minimum=0.0, strict_min=True)}
        dim = 2
    elif kind == "ring3":
        _check_keys(d, "model", common | {"gain", "tau"})
        params = {
            "gain": _number(d, "model", "gain", minimum=1.0, strict_min=True),
            "tau": _number(d, "model", "tau", minimum=0.0, strict_min=True),
        }
        dim = 3
    else:
        _check_keys(d, "model", common | {
            "Vdc", "Rs", "Cp", "d", "a0", "a1", "b2", "c"})
        params = {
            "Vdc": _number(d, "model", "Vdc"),
            "Rs": _number(d, "model", "Rs", minimum=0.0, strict_min=True),
            "Cp": _number(d, "model", "Cp", minimum=0.0, strict_min=True),
            "d": _number_list(d, "model", "d", 6),
            "a0": _number(d, "model", "a0"),
            "a1": _number(d, "model", "a1"),
            "b2": _number(d, "model", "b2"),
            "c": _number_list(d, "model", "c", 5),
        }
        dim = 2

    if "x0" in d:
        x0 = _number_list(d, "model", "x0", dim)
    else:
        x0 = tuple(_DEFAULT_X0[kind])

    inj = _require_map(d.get("injection"), "model.injection")
    _check_keys(inj, "model.injection", {"state", "gain"})
    state = _integer(inj, "model.injection", "state", default=0, minimum=0)
    if state >= dim:
        raise ConfigError(f"model.injection.state: must be < {dim}, got {state}")
    if inj.get("gain") == "auto" or "gain" not in inj:
        gain = 1.0 / params["Cp"] if kind == "memristor" else 1.0
    else:
        gain = _number(inj, "model.injection", "gain")
        if gain == 0.0:
            raise ConfigError("model.injection.gain: must be nonzero")
    return ModelConfig(kind=kind, params=params, x0=x0,
                       injection_state=state, injection_gain=gain)


def _parse_integration(d: dict) -> IntegrationConfig:
    d = _require_map(d, "integration")
    _check_keys(d, "integration", {
        "bootstrap_step", "step_policy", "step_divisor", "method",
        "settle_periods", "settle_tol", "period_tol", "max_settle_periods",
        "discard_periods", "crossings", "grid_size"})
    policy = d.get("step_policy", "auto")
    if policy != "auto":
        if isinstance(policy, bool) or not isinstance(policy, (int, float)) \
                or not float(policy) > 0.0:
            raise ConfigError(
                "integration.step_policy: expected 'auto' or a positive step "
                f"in seconds, got {policy!r}")
        policy = float(policy)
    method = d.get("method", "rk4")
    if method not in ("euler", "rk4"):
        raise ConfigError(
            f"integration.method: expected 'euler' or 'rk4', got {method!r}")
    return IntegrationConfig(
        bootstrap_step=_number(d, "integration", "bootstrap_step",
                               minimum=0.0, strict_min=True),
        step_policy=policy,
        step_divisor=_integer(d, "integration", "step_divisor",
                              default=2000, minimum=200),
        method=method,
        settle_periods=_integer(d, "integration", "settle_periods",
                                default=10, minimum=1),
        settle_tol=_number(d, "integration", "settle_tol", default=1e-8,
                           minimum=0.0, strict_min=True),
        period_tol=_number(d, "integration", "period_tol", default=1e-6,
                           minimum=0.0, strict_min=True),
        max_settle_periods=_integer(d, "integration", "max_settle_periods",
                                    default=500, minimum=1),
        discard_periods=_integer(d, "integration", "discard_periods",
                                 default=20, minimum=1),
        crossings=_integer(d, "integration", "crossings", default=16, minimum=2),
        grid_size=_integer(d, "integration", "grid_size", default=512,
                           minimum=64),
    )


def _parse_prc(d: dict) -> PrcConfig:
    d = _require_map(d, "prc")
    _check_keys(d, "prc", {"n_points", "charge", "mode", "pulse_width",
                           "target_prc_rad"})
    charge = d.get("charge", "auto")
    if charge != "auto":
        if isinstance(charge, bool) or not isinstance(charge, (int, float)) \
                or not float(charge) > 0.0:
            raise ConfigError(
                f"prc.charge: expected 'auto' or positive coulombs, got {charge!r}")
        charge = float(charge)
    mode = d.get("mode", "state_jump")
    if mode not in ("state_jump", "rect_pulse"):
        raise ConfigError(
            f"prc.mode: expected 'state_jump' or 'rect_pulse', got {mode!r}")
    pulse_width = None
    if "pulse_width" in d:
        pulse_width = _number(d, "prc", "pulse_width", minimum=0.0,
                              strict_min=True)
    return PrcConfig(
        n_points=_integer(d, "prc", "n_points", default=100, minimum=4),
        charge=charge,
        mode=mode,
        pulse_width=pulse_width,
        target_prc_rad=_number(d, "prc", "target_prc_rad", default=0.05,
                               minimum=0.0, strict_min=True),
    )


def _parse_ppv(d: dict) -> PpvConfig:
    d = _require_map(d, "ppv")
    _check_keys(d, "ppv", {"harmonics", "compare", "adjoint_periods",
                           "adjoint_tol", "steps_per_period", "norm_tol"})
    compare = d.get("compare", False)
    if not isinstance(compare, bool):
        raise ConfigError(f"ppv.compare: expected a boolean, got {compare!r}")
    return PpvConfig(
        harmonics=_integer(d, "ppv", "harmonics", default=16, minimum=1),
        compare=compare,
        adjoint_periods=_integer(d, "ppv", "adjoint_periods", default=10,
                                 minimum=1),
        adjoint_tol=_number(d, "ppv", "adjoint_tol", default=1e-6,
                            minimum=0.0, strict_min=True),
        steps_per_period=_integer(d, "ppv", "steps_per_period", default=2048,
                                  minimum=64),
        norm_tol=_number(d, "ppv", "norm_tol", default=1e-3, minimum=0.0,
                         strict_min=True),
    )


def _parse_phasesim(d: dict | None, base: Path) -> PhasesimConfig | None:
    if d is None:
        return None
    d = _require_map(d, "phasesim")
    _check_keys(d, "phasesim", {"network", "t_end", "dt"})
    if "network" not in d or not isinstance(d["network"], str):
        raise ConfigError("phasesim.network: required path is missing")
    network = (base / d["network"]).resolve()
    if not network.is_file():
        raise ConfigError(f"phasesim.network: file not found: {network}")
    dt = None
    if "dt" in d and d["dt"] not in (0, 0.0, "auto"):
        dt = _number(d, "phasesim", "dt", minimum=0.0, strict_min=True)
    return PhasesimConfig(
        network=network,
        t_end=_number(d, "phasesim", "t_end", minimum=0.0, strict_min=True),
        dt=dt,
    )


def _parse_lock(d: dict | None) -> LockConfig | None:
    if d is None:
        return None
    d = _require_map(d, "lock")
    _check_keys(d, "lock", {"amp", "detuning_rel", "horizon_periods", "source"})
    source = d.get("source", "adjoint")
    if source not in ("adjoint", "from_prc"):
        raise ConfigError(
            f"lock.source: expected 'adjoint' or 'from_prc', got {source!r}")
    return LockConfig(
        amp=_number(d, "lock", "amp", minimum=0.0, strict_min=True),
        detuning_rel=_number(d, "lock", "detuning_rel", default=0.0,
                             minimum=-0.2, maximum=0.2),
        horizon_periods=_integer(d, "lock", "horizon_periods", default=400,
                                 minimum=10),
        source=source,
    )


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Parse and fully validate an experiment config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse config: {exc}") from exc
    raw = _require_map(raw, str(path))
    _check_keys(raw, str(path), {"model", "integration", "prc", "ppv",
                                 "phasesim", "lock", "output_dir"})
    if "model" not in raw:
        raise ConfigError(f"{path}: missing required section 'model'")
    if "integration" not in raw:
        raise ConfigError(f"{path}: missing required section 'integration'")
    base = path.parent.resolve()
    out = raw.get("output_dir", "out")
    if not isinstance(out, str):
        raise ConfigError("output_dir: expected a path string")
    return ExperimentConfig(
        model=_parse_model(raw["model"]),
        integration=_parse_integration(raw["integration"]),
        prc=_parse_prc(raw.get("prc")),
        ppv=_parse_ppv(raw.get("ppv")),
        phasesim=_parse_phasesim(raw.get("phasesim"), base),
        lock=_parse_lock(raw.get("lock")),
        output_dir=(base / out).resolve(),
        base_dir=base,
    )


def build_system(model: ModelConfig) -> tuple[OdeSystem, InjectionPort, tuple]:
    """Instantiate the configured oscillator, its injection port and x0."""
    if model.kind == "vdp":
        sys_ = vdp_system(model.params["mu"])
    elif model.kind == "ring3":
        sys_ = ring3_system(model.params["gain"], model.params["tau"])
    else:
        sys_ = memristor_system(MemristorParams(
            Vdc=model.params["Vdc"], Rs=model.params["Rs"],
            Cp=model.params["Cp"], d=model.params["d"], a0=model.params["a0"],
            a1=model.params["a1"], b2=model.params["b2"], c=model.params["c"]))
    port = InjectionPort(state_index=model.injection_state,
                         gain=model.injection_gain)
    return sys_, port, model.x0
