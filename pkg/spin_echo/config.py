"""
Flat `key = value` experiment configuration (SI units). Values resolve
flag > config file > preset > default.
"""
import logging
import math
import re
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from spin_echo.exceptions import ImproperlyConfigured, InvalidArgumentError
from spin_echo.models import (
    DecoherenceParams,
    EnsembleParams,
    ExperimentConfig,
    NoiseKind,
    NoiseModel,
    PulseFidelityModel,
)

logger = logging.getLogger(__name__)

PI_EXPRESSION = re.compile(
    r"^\s*([+-]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d*\.?\d+))?\s*$"
)


def parse_angle(value: Union[str, float]) -> float:
    """Plain floats and `k*pi/m` forms such as `pi/2`, `-pi`, `2*pi/3` or `0.5pi`."""
    if not isinstance(value, str):
        return float(value)
    match = PI_EXPRESSION.match(value.lower())
    if match is None:
        return float(value)
    factor, divisor = match.groups()
    if factor in ("", "+"):
        factor = "1"
    elif factor == "-":
        factor = "-1"
    return float(factor) * math.pi / (float(divisor) if divisor else 1.0)


def parse_separations(value: Union[str, List[float], Tuple[float, ...]]) -> List[float]:
    if isinstance(value, str):
        return [float(item) for item in value.split(",") if item.strip()]
    return [float(item) for item in value]


def _parse_noise(value: Union[str, NoiseKind]) -> str:
    return NoiseKind(str(value).strip().lower()).value


def _parse_int(value: Union[str, int]) -> int:
    if isinstance(value, str):
        value = value.strip()
        number = float(value)
        if not number.is_integer():
            raise ValueError(f"{value!r} is not an integer")
        return int(number)
    return int(value)


# key -> (parser, default). None defaults mean "derived" or "not set".
CONFIG_KEYS: Dict[str, Tuple[Callable[[Any], Any], Any]] = {
    "larmor_frequency_hz": (float, 50e9),
    "sigma": (float, 1e9),
    "t2_star": (float, None),
    "p0": (float, 0.9),
    "t2": (float, math.inf),
    "rate_r": (float, 0.0),
    "t_h": (float, 100e-9),
    "theta1": (parse_angle, math.pi / 2),
    "theta2": (parse_angle, math.pi),
    "theta3": (parse_angle, math.pi / 2),
    "fidelity_slope": (float, 0.0),
    "tau1": (float, 26.4e-9),
    "rep_time": (float, 13.2e-9),
    "scan_points": (_parse_int, 64),
    "scan_span": (float, 60e-12),
    "counts_scale": (float, 1e5),
    "drift_rate": (float, 0.0),
    "noise": (_parse_noise, "poisson"),
    "noise_rel": (float, 0.01),
    "seed": (_parse_int, 0),
    "separations": (parse_separations, None),
}


def parse_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Raw string values from a config file; unknown keys and malformed lines are
    configuration errors.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ImproperlyConfigured(f"Cannot read config file {path}: {e}") from e

    values: Dict[str, str] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ImproperlyConfigured(
                f"{path}:{line_number}: expected `key = value`, got {line.strip()!r}"
            )
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ImproperlyConfigured(
                f"{path}:{line_number}: unknown configuration key '{key}'"
            )
        values[key] = value
    return values


def resolve_config(
    file_values: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    preset: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Typed values for every key. None entries in `overrides` count as not given."""
    given = {k: v for k, v in (overrides or {}).items() if v is not None}
    layers = [preset or {}, file_values or {}, given]
    for layer in layers:
        unknown = set(layer) - set(CONFIG_KEYS)
        if unknown:
            raise ImproperlyConfigured(
                f"unknown configuration key '{sorted(unknown)[0]}'"
            )
    if file_values and "t2_star" in file_values and "sigma" in file_values:
        raise ImproperlyConfigured("Set either 'sigma' or 't2_star', not both.")

    resolved: Dict[str, Any] = {}
    for key, (parser, default) in CONFIG_KEYS.items():
        raw = default
        for layer in layers:
            if key in layer:
                raw = layer[key]
        if raw is None:
            resolved[key] = None
            continue
        try:
            resolved[key] = parser(raw)
        except ValueError as e:
            raise ImproperlyConfigured(
                f"Invalid value for '{key}': {raw!r} ({e})"
            ) from e

    # whichever of sigma and t2_star comes from the higher layer wins
    if _highest_layer(layers, "sigma") > _highest_layer(layers, "t2_star"):
        resolved["t2_star"] = None
    return resolved


def _highest_layer(layers: List[Dict[str, Any]], key: str) -> int:
    return max(
        (index for index, layer in enumerate(layers) if key in layer), default=-1,
    )


def build_experiment_config(values: Dict[str, Any]) -> ExperimentConfig:
    try:
        if values.get("t2_star") is not None:
            ensemble = EnsembleParams.from_t2_star(
                values["larmor_frequency_hz"], values["t2_star"], values["p0"],
            )
        else:
            ensemble = EnsembleParams.from_frequency(
                values["larmor_frequency_hz"], values["sigma"], values["p0"],
            )
        return ExperimentConfig(
            ensemble=ensemble,
            decoherence=DecoherenceParams(
                t2=values["t2"], rate_r=values["rate_r"], t_h=values["t_h"],
            ),
            angles=(values["theta1"], values["theta2"], values["theta3"]),
            tau1=values["tau1"],
            rep_time=values["rep_time"],
            scan_points=values["scan_points"],
            scan_span=values["scan_span"],
            counts_scale=values["counts_scale"],
            drift_rate=values["drift_rate"],
            noise=NoiseModel(
                kind=NoiseKind(values["noise"]), relative=values["noise_rel"],
            ),
            seed=values["seed"],
            fidelity=PulseFidelityModel(slope=values["fidelity_slope"]),
        )
    except InvalidArgumentError as e:
        raise ImproperlyConfigured(str(e)) from e


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Flat, JSON-safe view of a config using the file keys; sigma is explicit."""
    return {
        "larmor_frequency_hz": cfg.ensemble.larmor_frequency_hz,
        "sigma": cfg.ensemble.sigma,
        "p0": cfg.ensemble.p0,
        "t2": cfg.decoherence.t2 if math.isfinite(cfg.decoherence.t2) else "inf",
        "rate_r": cfg.decoherence.rate_r,
        "t_h": cfg.decoherence.t_h,
        "theta1": cfg.angles[0],
        "theta2": cfg.angles[1],
        "theta3": cfg.angles[2],
        "fidelity_slope": cfg.fidelity.slope,
        "tau1": cfg.tau1,
        "rep_time": cfg.rep_time,
        "scan_points": cfg.scan_points,
        "scan_span": cfg.scan_span,
        "counts_scale": cfg.counts_scale,
        "drift_rate": cfg.drift_rate,
        "noise": cfg.noise.kind.value,
        "noise_rel": cfg.noise.relative,
        "seed": cfg.seed,
    }


def config_from_dict(payload: Dict[str, Any]) -> ExperimentConfig:
    return build_experiment_config(resolve_config(file_values=payload))


def preset_values(name: str) -> Dict[str, Any]:
    if name == "published":
        from spin_echo.experiment import published_config

        return config_to_dict(published_config())
    raise ImproperlyConfigured(f"Unknown preset '{name}'")
