import math
from unittest import TestCase

import numpy as np

from spin_echo.exceptions import InvalidArgumentError
from spin_echo.models import PulseSequence, SpinState, Unitary2
from spin_echo.spin_core import (
    evolve_ensemble,
    evolve_sequence,
    flip_probabilities,
    flip_probability,
    rot_x,
    rot_z,
)
from spin_echo.tests.base import HAHN, OMEGA0

SUPERPOSITION = SpinState(amp_up=-1j / math.sqrt(2), amp_down=1 / math.sqrt(2))


def flipped_after(seq: PulseSequence, omega: float) -> float:
    return flip_probability(evolve_sequence(seq, omega, SpinState.down()))


class TestRotations(TestCase):
    def test_rot_x_zero_is_identity(self):
        np.testing.assert_allclose(rot_x(0.0).matrix, np.eye(2), atol=1e-15)

    def test_rot_x_pi_flips_down_state(self):
        state = rot_x(math.pi).apply(SpinState.down())
        self.assertAlmostEqual(flip_probability(state), 1.0, places=12)

    def test_rot_x_half_pi_gives_equal_superposition(self):
        state = rot_x(math.pi / 2).apply(SpinState.down())
        self.assertAlmostEqual(flip_probability(state), 0.5, places=12)

    def test_rot_z_full_turn_is_minus_identity(self):
        np.testing.assert_allclose(rot_z(2 * math.pi).matrix, -np.eye(2), atol=1e-15)
        state = rot_z(2 * math.pi).apply(SUPERPOSITION)
        self.assertAlmostEqual(flip_probability(state), 0.5, places=12)

    def test_rot_z_preserves_flip_probability(self):
        state = rot_z(math.pi).apply(SUPERPOSITION)
        self.assertAlmostEqual(flip_probability(state), 0.5, places=12)

    def test_rotations_are_unitary(self):
        rng = np.random.default_rng(7)
        for theta in rng.uniform(-4 * math.pi, 4 * math.pi, 1000):
            for rotation in (rot_x(theta), rot_z(theta)):
                self.assertTrue(rotation.is_unitary(1e-12))
                self.assertAlmostEqual(abs(rotation.determinant()), 1.0, places=12)

    def test_x_rotations_compose(self):
        rng = np.random.default_rng(11)
        for a, b in rng.uniform(-4 * math.pi, 4 * math.pi, (100, 2)):
            np.testing.assert_allclose(
                (rot_x(a) @ rot_x(b)).matrix, rot_x(a + b).matrix, atol=1e-10,
            )

    def test_dagger_inverts(self):
        rotation = rot_x(0.7) @ rot_z(1.3)
        np.testing.assert_allclose(
            (rotation.dagger() @ rotation).matrix, np.eye(2), atol=1e-12,
        )

    def test_non_finite_angles_are_rejected(self):
        for theta in (math.nan, math.inf, -math.inf):
            with self.assertRaises(InvalidArgumentError):
                rot_x(theta)
            with self.assertRaises(InvalidArgumentError):
                rot_z(theta)

    def test_unitary_requires_two_by_two(self):
        with self.assertRaises(InvalidArgumentError):
            Unitary2(np.eye(3))


class TestSpinState(TestCase):
    def test_flip_probability_of_basis_states(self):
        self.assertEqual(flip_probability(SpinState.down()), 0.0)
        self.assertEqual(flip_probability(SpinState.up()), 1.0)
        self.assertAlmostEqual(flip_probability(SUPERPOSITION), 0.5, places=12)

    def test_unnormalized_state_is_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            SpinState(amp_up=1.0, amp_down=1.0)


class TestEvolveSequence(TestCase):
    def test_single_pi_pulse(self):
        seq = PulseSequence(angles=(math.pi,))
        self.assertAlmostEqual(flipped_after(seq, OMEGA0), 1.0, places=12)

    def test_hahn_echo_refocuses_every_frequency(self):
        seq = PulseSequence.three_pulse(HAHN, (10e-9, 10e-9))
        for omega in (0.0, 1.0, OMEGA0, -3.7e11, 2 * math.pi * 1.234e9):
            self.assertAlmostEqual(flipped_after(seq, omega), 0.0, places=12)

    def test_ramsey_half_pulse_without_precession(self):
        seq = PulseSequence.three_pulse((math.pi / 2, 0.0, 0.0), (5e-9, 7e-9))
        self.assertAlmostEqual(flipped_after(seq, 0.0), 0.5, places=12)

    def test_zero_angles_leave_state_unchanged(self):
        seq = PulseSequence(angles=(0.0, 0.0, 0.0), delays=(3e-9, 4e-9))
        state = evolve_sequence(seq, OMEGA0, SUPERPOSITION)
        self.assertAlmostEqual(
            flip_probability(state), flip_probability(SUPERPOSITION), places=12,
        )

    def test_state_stays_normalized(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            seq = PulseSequence(
                angles=tuple(rng.uniform(-10, 10, 4)),
                delays=tuple(rng.uniform(0, 1e-8, 3)),
            )
            state = evolve_sequence(seq, rng.normal(OMEGA0, 1e9), SpinState.down())
            norm = abs(state.amp_up) ** 2 + abs(state.amp_down) ** 2
            self.assertAlmostEqual(norm, 1.0, places=12)

    def test_periodic_in_omega_for_equal_delays(self):
        tau = 10e-9
        seq = PulseSequence.three_pulse((0.4, 1.1, 2.3), (tau, tau))
        omega = 2 * math.pi * 3e8
        first = flipped_after(seq, omega)
        shifted = flipped_after(seq, omega + 2 * math.pi / tau)
        self.assertAlmostEqual(first, shifted, places=9)

    def test_batched_evolution_matches_single_spin(self):
        seq = PulseSequence.three_pulse((0.3, 2.0, 1.1), (13.2e-9, 13.25e-9))
        omegas = np.random.default_rng(5).normal(OMEGA0, 1e9, 20)
        batched = flip_probabilities(seq, omegas)
        for omega, probability in zip(omegas, batched):
            self.assertAlmostEqual(flipped_after(seq, omega), probability, places=12)

    def test_delay_count_mismatch_is_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            PulseSequence(angles=(1.0, 2.0), delays=())
        with self.assertRaises(InvalidArgumentError):
            PulseSequence(angles=(1.0, 2.0), delays=(-1e-9,))

    def test_ensemble_requires_finite_frequencies(self):
        seq = PulseSequence(angles=(math.pi / 2,))
        with self.assertRaises(InvalidArgumentError):
            evolve_ensemble(seq, np.array([0.0, math.nan]), SpinState.down())
