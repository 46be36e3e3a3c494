import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from spin_echo.exceptions import InvalidArgumentError

MIN_SCAN_POINTS = 8
DECAY_PARAMETERS = ("v0", "t2", "rate_r", "t_h")


@dataclass(frozen=True, eq=False)
class FringeScan:
    """
    Detected signal as tau2 is scanned about the nominal separation tau1.
    `metadata` holds the `# key=value` lines carried by the CSV format.
    """

    delays: np.ndarray
    counts: np.ndarray
    separation: float
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        delays = np.asarray(self.delays, dtype=float)
        counts = np.asarray(self.counts, dtype=float)

        if delays.ndim != 1 or counts.ndim != 1:
            raise InvalidArgumentError("delays and counts must be one-dimensional.")
        if delays.size != counts.size:
            raise InvalidArgumentError(
                f"Got {delays.size} delays but {counts.size} counts."
            )
        if delays.size < MIN_SCAN_POINTS:
            raise InvalidArgumentError(
                f"A fringe scan needs at least {MIN_SCAN_POINTS} points,"
                f" got {delays.size}."
            )
        if not np.all(np.isfinite(delays)) or not np.all(np.isfinite(counts)):
            raise InvalidArgumentError("delays and counts must be finite.")
        if np.any(np.diff(delays) <= 0):
            raise InvalidArgumentError("delays must be strictly increasing.")
        if np.any(counts < 0):
            raise InvalidArgumentError("counts must be non-negative.")
        if not math.isfinite(self.separation) or self.separation < 0:
            raise InvalidArgumentError(
                f"separation must be a non-negative time, got {self.separation!r}"
            )

        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "metadata", dict(self.metadata))


@dataclass(frozen=True)
class FringeFit:
    """
    y(tau2) = offset + drift t + amplitude E(t) cos(frequency t + phase), with
    t = tau2 - reference and E(t) = exp(-(envelope_sigma t)^2 / 2).
    Uncertainties come from the linear sub-problem at the fitted frequency.
    """

    offset: float
    drift: float
    amplitude: float
    phase: float
    frequency: float
    residual_rms: float
    reference: float = 0.0
    offset_error: float = 0.0
    amplitude_error: float = 0.0
    offset_amplitude_covariance: float = 0.0
    n_points: int = 0
    envelope_sigma: float = 0.0

    def evaluate(self, delays: np.ndarray) -> np.ndarray:
        t = np.asarray(delays, dtype=float) - self.reference
        envelope = np.exp(-0.5 * (self.envelope_sigma * t) ** 2)
        oscillation = np.cos(self.frequency * t + self.phase)
        return self.offset + self.drift * t + self.amplitude * envelope * oscillation

    def to_dict(self) -> Dict[str, Any]:
        return {
            "offset": self.offset,
            "drift": self.drift,
            "amplitude": self.amplitude,
            "phase": self.phase,
            "frequency": self.frequency,
            "residual_rms": self.residual_rms,
            "reference": self.reference,
            "offset_error": self.offset_error,
            "amplitude_error": self.amplitude_error,
            "offset_amplitude_covariance": self.offset_amplitude_covariance,
            "n_points": self.n_points,
            "envelope_sigma": self.envelope_sigma,
        }


@dataclass(frozen=True, eq=False)
class VisibilityCurve:
    """
    Visibility against total separation 2 tau. Failed points carry `valid=False`
    and NaN values. `errors` is None when no noise estimate exists.
    """

    separations: np.ndarray
    visibilities: np.ndarray
    errors: Optional[np.ndarray] = None
    valid: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        separations = np.asarray(self.separations, dtype=float)
        visibilities = np.asarray(self.visibilities, dtype=float)
        valid = (
            np.isfinite(visibilities)
            if self.valid is None
            else np.asarray(self.valid, dtype=bool)
        )

        if (
            separations.ndim != 1
            or separations.shape != visibilities.shape
            or valid.shape != separations.shape
        ):
            raise InvalidArgumentError(
                "separations, visibilities and flags must have equal lengths."
            )
        if not np.all(np.isfinite(separations)) or np.any(separations < 0):
            raise InvalidArgumentError("separations must be finite and non-negative.")
        if np.any(~np.isfinite(visibilities[valid])):
            raise InvalidArgumentError("valid points need a finite visibility.")
        if np.any((visibilities[valid] < 0) | (visibilities[valid] > 1)):
            raise InvalidArgumentError("visibilities must lie in [0, 1].")

        errors = None
        if self.errors is not None:
            errors = np.asarray(self.errors, dtype=float)
            if errors.shape != separations.shape:
                raise InvalidArgumentError("errors must match separations in length.")
            if np.any(~(errors[valid] > 0)):
                raise InvalidArgumentError("errors must be positive for valid points.")

        object.__setattr__(self, "separations", separations)
        object.__setattr__(self, "visibilities", visibilities)
        object.__setattr__(self, "errors", errors)
        object.__setattr__(self, "valid", valid)

    def __len__(self) -> int:
        return int(self.separations.size)

    def valid_points(self) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        errors = self.errors[self.valid] if self.errors is not None else None
        return self.separations[self.valid], self.visibilities[self.valid], errors


@dataclass(frozen=True)
class DecayFitSeed:
    v0: float
    t2: float
    rate_r: float
    t_h: float

    def __post_init__(self) -> None:
        for name in DECAY_PARAMETERS:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidArgumentError(
                    f"Initial guess for {name} must be positive and finite,"
                    f" got {value!r}"
                )

    @classmethod
    def published(cls) -> "DecayFitSeed":
        return cls(v0=0.047, t2=6.7e-6, rate_r=1 / 175e-9, t_h=100e-9)


@dataclass(frozen=True, eq=False)
class DecayFitResult:
    v0: float
    t2: float
    rate_r: float
    t_h: float
    uncertainties: Dict[str, float]
    covariance: np.ndarray
    chi_squared: float
    reduced_chi_squared: float
    converged: bool
    status_message: str = ""
    n_evaluations: int = 0
    degenerate_parameters: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def is_degenerate(self) -> bool:
        return bool(self.degenerate_parameters)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "v0": self.v0,
            "t2": self.t2,
            "rate_r": self.rate_r,
            "t_h": self.t_h,
            "uncertainties": dict(self.uncertainties),
            "covariance": self.covariance.tolist(),
            "parameter_order": list(DECAY_PARAMETERS),
            "chi_squared": self.chi_squared,
            "reduced_chi_squared": self.reduced_chi_squared,
            "converged": self.converged,
            "status_message": self.status_message,
            "n_evaluations": self.n_evaluations,
            "degenerate_parameters": list(self.degenerate_parameters),
            "warnings": list(self.warnings),
        }
