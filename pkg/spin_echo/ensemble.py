"""
Averages over a Gaussian distribution of Larmor frequencies.

`sigma_z_analytic` is the closed form for three rotations. `gaussian_average_mc`
and `gaussian_average_quadrature` are independent numerical oracles that evolve
individual spins through spin_core.

The initial polarization p0 scales every term identically: a partially polarized
spin is the mixture p0 |down><down| + (1 - p0) I/2 up to orientation, and the
identity part has zero <sigma_z> under any unitary.

Quadrature node guidance: Gauss-Hermite with n nodes integrates
cos(sqrt(2) sigma tau x) e^{-x^2} to near machine precision while
sigma * max(tau1 + tau2) stays well below n; 64 nodes cover sigma*tau <= 3
comfortably and 128 leave a wide margin.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Tuple

import numpy as np

import spin_echo_settings as settings
from spin_echo.exceptions import InvalidArgumentError
from spin_echo.models import EnsembleParams, EnsembleResult, PulseSequence
from spin_echo.spin_core import flip_probabilities
from spin_echo.utils import require_all_finite, require_finite, require_non_negative

logger = logging.getLogger(__name__)

MIN_MC_SAMPLES = 100
MIN_QUADRATURE_NODES = 8
MAX_QUADRATURE_NODES = 512


def sigma_z_terms(
    angles: Sequence[float], taus: Sequence[float], ens: EnsembleParams,
) -> np.ndarray:
    """
    The five unscaled contributions to <sigma_z(tau1, tau2)>, in order: population,
    first-interval Ramsey, second-interval Ramsey, stimulated (tau1 + tau2) and
    echo (tau1 - tau2). Only the echo survives static dephasing when tau1 = tau2.
    """
    theta1, theta2, theta3 = _three_angles(angles)
    tau1, tau2 = _two_taus(taus)
    omega0, sigma = ens.omega0, ens.sigma

    def dephased(interval: float) -> float:
        return math.cos(omega0 * interval) * math.exp(-0.5 * (sigma * interval) ** 2)

    stimulated = math.sin(theta3) * math.cos(theta2 / 2) ** 2 * math.sin(theta1)
    return np.array(
        [
            -math.cos(theta3) * math.cos(theta2) * math.cos(theta1),
            math.cos(theta3) * math.sin(theta2) * math.sin(theta1) * dephased(tau1),
            math.sin(theta3) * math.sin(theta2) * math.cos(theta1) * dephased(tau2),
            stimulated * dephased(tau1 + tau2),
            -echo_amplitude((theta1, theta2, theta3)) * dephased(tau1 - tau2),
        ]
    )


def sigma_z_analytic(
    angles: Sequence[float], taus: Sequence[float], ens: EnsembleParams,
) -> float:
    return ens.p0 * float(np.sum(sigma_z_terms(angles, taus, ens)))


def flip_probability_analytic(
    angles: Sequence[float], taus: Sequence[float], ens: EnsembleParams,
) -> float:
    return (1.0 + sigma_z_analytic(angles, taus, ens)) / 2.0


def echo_amplitude(angles: Sequence[float]) -> float:
    """sin(theta3) sin^2(theta2/2) sin(theta1); 1 at the Hahn condition."""
    theta1, theta2, theta3 = _three_angles(angles)
    return math.sin(theta3) * math.sin(theta2 / 2) ** 2 * math.sin(theta1)


def gaussian_average_mc(
    seq: PulseSequence,
    ens: EnsembleParams,
    n_samples: int,
    seed: int,
    max_workers: Optional[int] = None,
) -> EnsembleResult:
    """
    Monte-Carlo estimate of p0 * <2P - 1>. Samples are drawn in chunks of
    MC_CHUNK_SIZE, chunk k from the substream SeedSequence(seed, spawn_key=(k,)),
    so the sample set does not depend on how many workers evaluate the chunks.
    """
    if n_samples < MIN_MC_SAMPLES:
        raise InvalidArgumentError(
            f"n_samples must be at least {MIN_MC_SAMPLES}, got {n_samples}"
        )

    if ens.sigma == 0:
        value = _single_spin_sigma_z(seq, ens.omega0)
        return EnsembleResult(
            ens.p0 * value, 0.0, method="monte_carlo", n_evaluations=n_samples,
        )

    chunk_size = settings.MC_CHUNK_SIZE
    chunks = [
        (index, min(chunk_size, n_samples - index * chunk_size))
        for index in range(math.ceil(n_samples / chunk_size))
    ]

    def evaluate(chunk: Tuple[int, int]) -> np.ndarray:
        index, size = chunk
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
        omegas = rng.normal(ens.omega0, ens.sigma, size)
        return 2.0 * flip_probabilities(seq, omegas) - 1.0

    workers = settings.MC_MAX_WORKERS if max_workers is None else max_workers
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            values = np.concatenate(list(executor.map(evaluate, chunks)))
    else:
        values = np.concatenate([evaluate(chunk) for chunk in chunks])

    mean = float(np.mean(values))
    std_error = float(np.std(values, ddof=1)) / math.sqrt(n_samples)
    return EnsembleResult(
        ens.p0 * mean,
        abs(ens.p0) * std_error,
        method="monte_carlo",
        n_evaluations=n_samples,
    )


def gaussian_average_quadrature(
    seq: PulseSequence, ens: EnsembleParams, n_nodes: Optional[int] = None,
) -> EnsembleResult:
    """
    Deterministic Gauss-Hermite oracle: omega = omega0 + sqrt(2) sigma x over the
    nodes x. See the module docs for node-count guidance.
    """
    if n_nodes is None:
        n_nodes = settings.QUADRATURE_NODES
    if not MIN_QUADRATURE_NODES <= n_nodes <= MAX_QUADRATURE_NODES:
        raise InvalidArgumentError(
            f"n_nodes must lie in [{MIN_QUADRATURE_NODES}, {MAX_QUADRATURE_NODES}],"
            f" got {n_nodes}"
        )

    if ens.sigma == 0:
        value = _single_spin_sigma_z(seq, ens.omega0)
        return EnsembleResult(ens.p0 * value, 0.0, method="quadrature", n_evaluations=1)

    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    omegas = ens.omega0 + math.sqrt(2.0) * ens.sigma * nodes
    values = 2.0 * flip_probabilities(seq, omegas) - 1.0
    mean = float(np.dot(weights, values)) / math.sqrt(math.pi)
    return EnsembleResult(
        ens.p0 * mean, 0.0, method="quadrature", n_evaluations=n_nodes,
    )


def _single_spin_sigma_z(seq: PulseSequence, omega: float) -> float:
    return 2.0 * float(flip_probabilities(seq, np.array([omega]))[0]) - 1.0


def _three_angles(angles: Sequence[float]) -> Tuple[float, float, float]:
    if len(angles) != 3:
        raise InvalidArgumentError(
            f"Expected three rotation angles, got {len(angles)}."
        )
    require_all_finite("angle", angles)
    return float(angles[0]), float(angles[1]), float(angles[2])


def _two_taus(taus: Sequence[float]) -> Tuple[float, float]:
    if len(taus) != 2:
        raise InvalidArgumentError(
            f"Expected two free-evolution intervals, got {len(taus)}."
        )
    for tau in taus:
        require_finite("tau", tau)
        require_non_negative("tau", tau)
    return float(taus[0]), float(taus[1])


def sequence_for(angles: Sequence[float], taus: Sequence[float]) -> PulseSequence:
    return PulseSequence.three_pulse(tuple(angles), tuple(taus))


def sweep_echo_amplitude(
    steps: int,
) -> Tuple[np.ndarray, np.ndarray, Tuple[int, int, int]]:
    """
    Echo amplitude on the grid theta_k = pi k / steps, k = 0..steps, for every
    angle. Returns the grid, the amplitudes indexed [i1, i2, i3] and the index
    triple of the maximum.
    """
    if steps < 2:
        raise InvalidArgumentError(f"steps must be at least 2, got {steps}")

    grid = np.linspace(0.0, math.pi, steps + 1)
    theta1, theta2, theta3 = np.meshgrid(grid, grid, grid, indexing="ij")
    amplitudes = np.sin(theta3) * np.sin(theta2 / 2) ** 2 * np.sin(theta1)
    best = np.unravel_index(int(np.argmax(amplitudes)), amplitudes.shape)
    return grid, amplitudes, (int(best[0]), int(best[1]), int(best[2]))
