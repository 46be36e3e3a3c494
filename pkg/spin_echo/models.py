import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from spin_echo.exceptions import InvalidArgumentError
from spin_echo.utils import require_all_finite, require_finite, require_non_negative

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-10
REP_TIME_SNAP_TOLERANCE = 0.05  # fraction of a repetition period
SCAN_SPAN_DEPHASING_LIMIT = 0.2  # scan span must stay below this fraction of 1/sigma


@dataclass(frozen=True)
class SpinState:
    """
    Pure state of a single spin in the (|up>, |down>) basis. Global phase is kept
    as is; only probabilities are meaningful.
    """

    amp_up: complex
    amp_down: complex

    def __post_init__(self) -> None:
        norm = abs(self.amp_up) ** 2 + abs(self.amp_down) ** 2
        if not math.isfinite(norm) or abs(norm - 1.0) > NORMALIZATION_TOLERANCE:
            raise InvalidArgumentError(
                f"SpinState must be normalized, got |psi|^2={norm!r}"
            )

    @classmethod
    def down(cls) -> "SpinState":
        return cls(amp_up=0j, amp_down=1 + 0j)

    @classmethod
    def up(cls) -> "SpinState":
        return cls(amp_up=1 + 0j, amp_down=0j)

    @classmethod
    def from_vector(cls, vector: np.ndarray, normalize: bool = True) -> "SpinState":
        vector = np.asarray(vector, dtype=complex)
        if normalize:
            vector = vector / np.linalg.norm(vector)
        return cls(amp_up=complex(vector[0]), amp_down=complex(vector[1]))

    def as_vector(self) -> np.ndarray:
        return np.array([self.amp_up, self.amp_down], dtype=complex)


@dataclass(frozen=True, eq=False)
class Unitary2:
    """Row-major 2x2 complex matrix acting on (|up>, |down>) amplitudes."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.shape != (2, 2):
            raise InvalidArgumentError(
                f"Unitary2 needs a 2x2 matrix, got shape {matrix.shape}"
            )
        object.__setattr__(self, "matrix", matrix)

    def __matmul__(self, other: "Unitary2") -> "Unitary2":
        return Unitary2(self.matrix @ other.matrix)

    def apply(self, state: SpinState) -> SpinState:
        return SpinState.from_vector(self.matrix @ state.as_vector())

    def dagger(self) -> "Unitary2":
        return Unitary2(self.matrix.conj().T)

    def determinant(self) -> complex:
        return complex(np.linalg.det(self.matrix))

    def is_unitary(self, tolerance: float = 1e-12) -> bool:
        product = self.matrix.conj().T @ self.matrix
        return bool(np.all(np.abs(product - np.eye(2)) <= tolerance))


@dataclass(frozen=True)
class PulseSequence:
    """
    Rotation angles (radians, any sign, not reduced modulo 2pi) separated by
    free-precession delays (seconds).
    """

    angles: Tuple[float, ...]
    delays: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        angles = tuple(float(angle) for angle in self.angles)
        delays = tuple(float(delay) for delay in self.delays)

        if not angles:
            raise InvalidArgumentError("A pulse sequence needs at least one rotation.")
        if len(delays) != len(angles) - 1:
            raise InvalidArgumentError(
                f"Expected {len(angles) - 1} delays for {len(angles)} rotations,"
                f" got {len(delays)}."
            )
        require_all_finite("angle", angles)
        for delay in delays:
            require_finite("delay", delay)
            require_non_negative("delay", delay)

        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "delays", delays)

    @classmethod
    def three_pulse(
        cls, angles: Tuple[float, float, float], taus: Tuple[float, float],
    ) -> "PulseSequence":
        if len(angles) != 3 or len(taus) != 2:
            raise InvalidArgumentError(
                "A three-pulse sequence takes three angles and two delays."
            )
        return cls(angles=tuple(angles), delays=tuple(taus))


@dataclass(frozen=True)
class EnsembleParams:
    """Gaussian spread of Larmor angular frequencies plus initial z-polarization."""

    omega0: float
    sigma: float
    p0: float = 1.0

    def __post_init__(self) -> None:
        require_finite("omega0", self.omega0)
        require_finite("sigma", self.sigma)
        require_non_negative("sigma", self.sigma)
        if not -1.0 <= self.p0 <= 1.0:
            raise InvalidArgumentError(f"p0 must lie in [-1, 1], got {self.p0!r}")

    @classmethod
    def from_frequency(
        cls, larmor_hz: float, sigma: float, p0: float = 1.0,
    ) -> "EnsembleParams":
        return cls(omega0=2 * math.pi * larmor_hz, sigma=sigma, p0=p0)

    @classmethod
    def from_t2_star(
        cls, larmor_hz: float, t2_star: float, p0: float = 1.0,
    ) -> "EnsembleParams":
        """sigma = 1/T2* exactly; the proportionality constant is fixed to one."""
        if not t2_star > 0:
            raise InvalidArgumentError(f"t2_star must be positive, got {t2_star!r}")
        return cls.from_frequency(larmor_hz, sigma=1.0 / t2_star, p0=p0)

    @property
    def larmor_frequency_hz(self) -> float:
        return self.omega0 / (2 * math.pi)


@dataclass(frozen=True)
class EnsembleResult:
    mean_sigma_z: float
    std_error: float = 0.0
    method: str = "analytic"
    n_evaluations: int = 1


@dataclass(frozen=True)
class DecoherenceParams:
    """Intrinsic T2, pulse-induced rate R and heating relaxation time T_h.

    T2 may be infinite.
    """

    t2: float
    rate_r: float = 0.0
    t_h: float = 100e-9

    def __post_init__(self) -> None:
        if math.isnan(self.t2) or not self.t2 > 0:
            raise InvalidArgumentError(f"t2 must be positive, got {self.t2!r}")
        require_finite("rate_r", self.rate_r)
        require_non_negative("rate_r", self.rate_r)
        require_finite("t_h", self.t_h)
        if not self.t_h > 0:
            raise InvalidArgumentError(f"t_h must be positive, got {self.t_h!r}")

    @classmethod
    def none(cls) -> "DecoherenceParams":
        return cls(t2=math.inf, rate_r=0.0, t_h=100e-9)

    @classmethod
    def published(cls) -> "DecoherenceParams":
        return cls(t2=6.7e-6, rate_r=1 / 175e-9, t_h=100e-9)


@dataclass(frozen=True)
class PulseFidelityModel:
    """Coherence kept by one pulse: D(theta) = 1 - slope*|theta|, clamped to [0, 1]."""

    slope: float = 0.25

    def __post_init__(self) -> None:
        require_finite("slope", self.slope)
        require_non_negative("slope", self.slope)

    @classmethod
    def ideal(cls) -> "PulseFidelityModel":
        return cls(slope=0.0)

    def retention(self, theta: float) -> float:
        return min(1.0, max(0.0, 1.0 - self.slope * abs(theta)))


class NoiseKind(str, enum.Enum):
    NONE = "none"
    GAUSSIAN = "gaussian"
    POISSON = "poisson"


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind = NoiseKind.POISSON
    relative: float = 0.01  # only used by gaussian noise

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        require_finite("noise_rel", self.relative)
        require_non_negative("noise_rel", self.relative)


@dataclass(frozen=True)
class SignalModel:
    """Affine map from flip probability to counts; drift accrues across the scan."""

    counts_scale: float
    drift_rate: float = 0.0

    def expected_counts(
        self, probability: np.ndarray, offsets: np.ndarray,
    ) -> np.ndarray:
        return (
            self.counts_scale * np.asarray(probability)
            + self.drift_rate * np.asarray(offsets)
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One simulated run of the pump / pulse 1 / tau1 / pulse 2 / tau2 / pulse 3 /
    readout timeline. tau2 is scanned over `scan_points` offsets spanning
    `scan_span` centred on tau1.
    """

    ensemble: EnsembleParams
    decoherence: DecoherenceParams
    angles: Tuple[float, float, float] = (math.pi / 2, math.pi, math.pi / 2)
    tau1: float = 26.4e-9
    rep_time: float = 13.2e-9
    scan_points: int = 64
    scan_span: float = 60e-12
    counts_scale: float = 1e5
    drift_rate: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    fidelity: PulseFidelityModel = field(default_factory=PulseFidelityModel.ideal)

    def __post_init__(self) -> None:
        if len(self.angles) != 3:
            raise InvalidArgumentError(
                f"Expected three rotation angles, got {len(self.angles)}."
            )
        angles = tuple(float(angle) for angle in self.angles)
        require_all_finite("angle", angles)
        object.__setattr__(self, "angles", angles)

        if not self.rep_time > 0 or not math.isfinite(self.rep_time):
            raise InvalidArgumentError(
                f"rep_time must be positive, got {self.rep_time!r}"
            )
        object.__setattr__(self, "tau1", snap_to_repetition(self.tau1, self.rep_time))

        if self.scan_points < 8:
            raise InvalidArgumentError(
                f"scan_points must be at least 8, got {self.scan_points}"
            )
        if not self.scan_span > 0 or not math.isfinite(self.scan_span):
            raise InvalidArgumentError(
                f"scan_span must be positive, got {self.scan_span!r}"
            )
        if self.scan_span / 2 >= self.tau1:
            raise InvalidArgumentError("scan_span must keep tau2 positive.")
        span_limit = (
            SCAN_SPAN_DEPHASING_LIMIT / self.ensemble.sigma
            if self.ensemble.sigma > 0
            else math.inf
        )
        if self.scan_span > span_limit:
            raise InvalidArgumentError(
                f"scan_span={self.scan_span!r} s exceeds"
                f" {SCAN_SPAN_DEPHASING_LIMIT}/sigma ({span_limit!r} s); the echo"
                " would dephase within the scan."
            )

        require_finite("counts_scale", self.counts_scale)
        if not self.counts_scale > 0:
            raise InvalidArgumentError(
                f"counts_scale must be positive, got {self.counts_scale!r}"
            )
        require_finite("drift_rate", self.drift_rate)
        if not isinstance(self.seed, int) or self.seed < 0:
            raise InvalidArgumentError(
                f"seed must be a non-negative integer, got {self.seed!r}"
            )

    @property
    def scan_offsets(self) -> np.ndarray:
        return np.linspace(-self.scan_span / 2, self.scan_span / 2, self.scan_points)

    @property
    def scan_delays(self) -> np.ndarray:
        return self.tau1 + self.scan_offsets

    @property
    def signal(self) -> SignalModel:
        return SignalModel(counts_scale=self.counts_scale, drift_rate=self.drift_rate)


def snap_to_repetition(tau: float, rep_time: float) -> float:
    """
    Pulses 1 and 2 are picked from the mode-locked train, so tau1 is a positive
    multiple of the repetition time. Values within 5% of a period of a multiple
    are snapped to it; anything else is rejected.
    """
    require_finite("tau1", tau)
    multiple = round(tau / rep_time)
    if multiple < 1 or abs(tau / rep_time - multiple) > REP_TIME_SNAP_TOLERANCE:
        raise InvalidArgumentError(
            f"tau1={tau!r} s is not a positive multiple of the repetition time"
            f" {rep_time!r} s."
        )
    snapped = multiple * rep_time
    if snapped != tau and abs(snapped - tau) > 1e-9 * snapped:
        logger.warning(
            f"Snapping tau1={tau!r} s to {multiple} x rep_time = {snapped!r} s"
        )
    return snapped
