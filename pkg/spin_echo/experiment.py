"""
Synthetic all-optical echo experiment: pump, pulse 1, tau1, pulse 2, tau2 (scanned
about tau1), pulse 3, readout.

Decoherence bookkeeping: coherence created by a pulse decays over the following
pulse-train interval with the heating clock restarted at that pulse. Both intervals
use the train interval tau1; the delay-line offset tau2 - tau1 is bounded by
0.2/sigma and only enters the precession phase. Pulse k (k = 1, 2) keeps a fraction
D(theta_k) of the transverse components it leaves behind. The echo therefore
carries D(theta1) D(theta2) f(tau1)^2, exactly the visibility decay law for
tau1 = tau2.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np
from sentry_sdk import capture_exception

from fringe_analysis.fitting import fit_fringe, visibility_from_fit
from fringe_analysis.models import FringeScan, VisibilityCurve
from spin_echo.config import config_to_dict
from spin_echo.decoherence import (
    coherence_decay_factor,
    equal_angle_for_visibility,
    v0_estimate,
    visibility_model,
)
from spin_echo.ensemble import sigma_z_terms
from spin_echo.exceptions import FitError, InvalidArgumentError
from spin_echo.models import (
    DecoherenceParams,
    EnsembleParams,
    ExperimentConfig,
    NoiseKind,
    NoiseModel,
    PulseFidelityModel,
    snap_to_repetition,
)
from spin_echo.utils import config_hash

logger = logging.getLogger(__name__)

PUBLISHED_V0 = 0.047
PUBLISHED_P0 = 0.9
PUBLISHED_LARMOR_HZ = 50e9
PUBLISHED_SIGMA = 1e9  # 1 / (1 ns)
PUBLISHED_MAX_SEPARATION = 16e-6
PUBLISHED_SCAN_POINTS = 256


@dataclass(frozen=True)
class EchoPoint:
    separation: float
    visibility: float
    error: float
    valid: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "EchoPoint":
        return cls(**payload)


def simulate_probabilities(cfg: ExperimentConfig) -> np.ndarray:
    """Flip probability at every tau2, with decoherence and pulse fidelity."""
    theta1, theta2, _ = cfg.angles
    decay = coherence_decay_factor(cfg.tau1, cfg.decoherence)
    keep1 = cfg.fidelity.retention(theta1)
    keep2 = cfg.fidelity.retention(theta2)
    echo_weight = keep1 * keep2 * decay ** 2
    weights = np.array(
        [1.0, keep1 * decay, keep2 * decay, echo_weight, echo_weight],
    )

    sigma_z = np.array(
        [
            cfg.ensemble.p0
            * float(weights @ sigma_z_terms(cfg.angles, (cfg.tau1, tau2), cfg.ensemble))
            for tau2 in cfg.scan_delays
        ]
    )
    return (1.0 + sigma_z) / 2.0


def simulate_fringe_scan(cfg: ExperimentConfig, index: int = 0) -> FringeScan:
    """
    One tau2 scan. Detector noise is drawn from the substream
    SeedSequence(seed, spawn_key=(index,)), so a scan only depends on its config
    and its position in a sweep.
    """
    probabilities = simulate_probabilities(cfg)
    offsets = cfg.scan_offsets
    expected = cfg.signal.expected_counts(probabilities, offsets)
    if np.any(expected < 0):
        raise InvalidArgumentError(
            "Expected counts go negative over the scan window; reduce drift_rate."
        )

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(index,)))
    counts = _apply_noise(expected, cfg.noise, rng)

    metadata = {
        "separation": repr(cfg.tau1),
        "seed": str(cfg.seed),
        "index": str(index),
        "config_hash": config_hash(config_to_dict(cfg)),
    }
    return FringeScan(
        delays=cfg.scan_delays, counts=counts, separation=cfg.tau1, metadata=metadata,
    )


def simulate_echo_point(
    cfg: ExperimentConfig, separation: float, index: int,
) -> EchoPoint:
    """
    Scan, fit and extract the visibility at total separation 2 tau; a failed fit
    flags the point. The fit knows the ensemble's dephasing envelope.
    """
    tau = snap_to_repetition(separation / 2, cfg.rep_time)
    scan = simulate_fringe_scan(dataclasses.replace(cfg, tau1=tau), index=index)

    try:
        fit = fit_fringe(
            scan, abs(cfg.ensemble.omega0), envelope_sigma=cfg.ensemble.sigma,
        )
        visibility, error = visibility_from_fit(fit)
    except FitError as e:
        capture_exception(e)
        logger.warning(
            f"Fringe fit failed at separation {2 * tau!r} s (index {index}): {e}"
        )
        return EchoPoint(
            separation=2 * tau, visibility=math.nan, error=math.nan, valid=False,
        )

    if cfg.noise.kind == NoiseKind.NONE:
        error = 0.0  # residuals are roundoff only
    return EchoPoint(separation=2 * tau, visibility=visibility, error=error)


def simulate_echo_experiment(
    cfg: ExperimentConfig, separations: Sequence[float],
) -> VisibilityCurve:
    points = [
        simulate_echo_point(cfg, separation, index)
        for index, separation in enumerate(separations)
    ]
    return assemble_curve(points)


def assemble_curve(points: List[EchoPoint]) -> VisibilityCurve:
    """
    Stacks sweep points into a curve. Errors are dropped (absent) when any valid
    point has no noise estimate, which is the case for noise-free simulations.
    """
    separations = np.array([point.separation for point in points])
    visibilities = np.array([point.visibility for point in points])
    errors = np.array([point.error for point in points])
    valid = np.array([point.valid for point in points], dtype=bool)

    if not np.all(errors[valid] > 0):
        errors = None
    return VisibilityCurve(
        separations=separations, visibilities=visibilities, errors=errors, valid=valid,
    )


def expected_visibility(cfg: ExperimentConfig, separation: float) -> float:
    """
    Noise-free target: the decay law with V0 from the configured angles,
    polarization and pulse fidelity.
    """
    v0 = abs(v0_estimate(cfg.angles, cfg.ensemble.p0, cfg.fidelity))
    return visibility_model(separation / 2, v0, cfg.decoherence)


def published_config(**overrides: Any) -> ExperimentConfig:
    """
    The published sample: 50 GHz splitting, 1 ns inhomogeneous dephasing,
    p0 = 0.9, D(theta) = 1 - 0.25 theta and the fitted decoherence parameters.
    Equal rotation angles are chosen so that V0 = 0.047.
    """
    fidelity = PulseFidelityModel(slope=0.25)
    theta = equal_angle_for_visibility(PUBLISHED_V0, PUBLISHED_P0, fidelity)
    values = dict(
        ensemble=EnsembleParams.from_frequency(
            PUBLISHED_LARMOR_HZ, sigma=PUBLISHED_SIGMA, p0=PUBLISHED_P0,
        ),
        decoherence=DecoherenceParams.published(),
        angles=(theta, theta, theta),
        tau1=26.4e-9,
        scan_points=PUBLISHED_SCAN_POINTS,
        counts_scale=1e5,
        noise=NoiseModel(kind=NoiseKind.POISSON),
        fidelity=fidelity,
    )
    values.update(overrides)
    return ExperimentConfig(**values)


def published_separations(
    n: int = 24,
    rep_time: float = 13.2e-9,
    max_separation: float = PUBLISHED_MAX_SEPARATION,
) -> np.ndarray:
    """
    Geometric grid of pulse-train multiples, 2 tau from 2 rep_time up to
    `max_separation`; duplicates dropped.
    """
    largest = int(max_separation / (2 * rep_time))
    multiples = np.unique(np.round(np.geomspace(1, largest, n)).astype(int))
    return 2 * multiples * rep_time


def _apply_noise(
    expected: np.ndarray, noise: NoiseModel, rng: np.random.Generator,
) -> np.ndarray:
    if noise.kind == NoiseKind.NONE:
        return expected.astype(float)
    if noise.kind == NoiseKind.GAUSSIAN:
        jitter = rng.normal(0.0, 1.0, expected.size) * noise.relative * expected
        return np.clip(expected + jitter, 0.0, None)
    return rng.poisson(expected).astype(float)
