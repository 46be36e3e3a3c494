"""
Single-spin SU(2) evolution under instantaneous x-rotations and free precession
about z.

Spin convention: S = sigma/2, so R_x(theta) = exp(-i theta sigma_x / 2) and
theta = pi is a full flip. Amplitudes are ordered (|up>, |down>). Angles are never
reduced modulo 2pi and global phase is never normalized away; only flip
probabilities are contractual. Every function here is pure.
"""
from typing import Optional

import numpy as np

from spin_echo.exceptions import InvalidArgumentError
from spin_echo.models import PulseSequence, SpinState, Unitary2
from spin_echo.utils import require_finite


def rot_x(theta: float) -> Unitary2:
    require_finite("theta", theta)
    return Unitary2(_rx_matrices(np.asarray(theta, dtype=float)))


def rot_z(theta: float) -> Unitary2:
    require_finite("theta", theta)
    return Unitary2(_rz_matrices(np.asarray(theta, dtype=float)))


def evolve_sequence(seq: PulseSequence, omega: float, initial: SpinState) -> SpinState:
    """
    Applies R_x(theta_1), R_z(omega*tau_1), R_x(theta_2), ... ending with the last
    rotation.
    """
    require_finite("omega", omega)
    up, down = evolve_ensemble(seq, np.array([omega], dtype=float), initial)
    return SpinState.from_vector(np.array([up[0], down[0]]))


def evolve_ensemble(seq: PulseSequence, omegas: np.ndarray, initial: SpinState):
    """
    Batched evolve_sequence over an array of Larmor frequencies. Returns the
    (up, down) amplitude arrays, each normalized per spin.
    """
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim != 1:
        raise InvalidArgumentError("omegas must be a one-dimensional array.")
    if not np.all(np.isfinite(omegas)):
        raise InvalidArgumentError("omegas must be finite.")

    state = np.broadcast_to(initial.as_vector(), (omegas.size, 2)).astype(complex)

    for index, angle in enumerate(seq.angles):
        if index > 0:
            phases = omegas * seq.delays[index - 1]
            state = np.einsum("nij,nj->ni", _rz_matrices(phases), state)
        state = state @ _rx_matrices(np.asarray(angle, dtype=float)).T

    norms = np.sqrt(np.sum(np.abs(state) ** 2, axis=1))
    state = state / norms[:, None]
    return state[:, 0], state[:, 1]


def flip_probability(state: SpinState) -> float:
    return abs(state.amp_up) ** 2


def flip_probabilities(
    seq: PulseSequence, omegas: np.ndarray, initial: Optional[SpinState] = None,
) -> np.ndarray:
    up, _ = evolve_ensemble(seq, omegas, initial or SpinState.down())
    return np.abs(up) ** 2


def _rx_matrices(theta: np.ndarray) -> np.ndarray:
    cos = np.cos(theta / 2)
    sin = np.sin(theta / 2)
    return np.array([[cos, -1j * sin], [-1j * sin, cos]], dtype=complex)


def _rz_matrices(theta: np.ndarray) -> np.ndarray:
    """diag(e^{-i theta/2}, e^{+i theta/2}); an (n, 2, 2) stack for array input."""
    theta = np.asarray(theta, dtype=float)
    minus = np.exp(-0.5j * theta)
    plus = np.exp(0.5j * theta)
    zeros = np.zeros_like(minus)
    matrices = np.array([[minus, zeros], [zeros, plus]], dtype=complex)
    if theta.ndim == 0:
        return matrices
    return np.moveaxis(matrices, (0, 1), (-2, -1))
