"""
Phenomenological decoherence: intrinsic T2 plus pulse-induced excitation that
decoheres the spins at rate R e^{-t/T_h} and relaxes with T_h. The coherence obeys

    d<sigma+>/dt = [i omega - 1/T2 - R e^{-t/T_h}] <sigma+>,

whose magnitude integrates to exp(-t/T2 - R T_h (1 - e^{-t/T_h})). The heating
clock restarts at every pulse.

The V0 estimate reads the printed factor sin(theta2^2/2) as sin^2(theta2/2): that
is the coefficient of the echo term of the ensemble average, and with D = 1 and
p0 = 1 the estimate must reduce to it.
"""
import logging
import math
from typing import Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from spin_echo.ensemble import echo_amplitude
from spin_echo.exceptions import DegenerateConfigurationError, InvalidArgumentError
from spin_echo.models import DecoherenceParams, PulseFidelityModel
from spin_echo.utils import require_all_finite, require_finite, require_non_negative

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Adiabatic elimination of the detuned excited state: Omega_e = Omega^2 / (2 Delta)
# (two-photon Raman convention).
RAMAN_PREFACTOR = 0.5
# integral of exp(-8 ln2 t^2 / fwhm^2) per fwhm
GAUSSIAN_AREA_FACTOR = math.sqrt(math.pi / (8 * math.log(2)))

V0_DISCREPANCY_NOTE = (
    "Substituting theta1 = theta2 = theta3 = pi/3, p0 = 0.9 and"
    " D(theta) = 1 - 0.25 theta gives V0 ~ 0.104, about twice the 5 % quoted"
    " alongside the published fit; the published value does not state the angles"
    " used. The formula value is reported unchanged."
)


def coherence_decay_factor(t: float, dec: DecoherenceParams) -> float:
    require_finite("t", t)
    require_non_negative("t", t)
    return math.exp(_decay_exponent(t, dec))


def echo_decay_factor(tau1: float, tau2: float, dec: DecoherenceParams) -> float:
    """
    Attenuation of coherence carried through both intervals, the heating clock
    restarting at pulse 2.
    """
    return coherence_decay_factor(tau1, dec) * coherence_decay_factor(tau2, dec)


def visibility_model(tau: ArrayLike, v0: float, dec: DecoherenceParams) -> ArrayLike:
    """V(tau) = V0 exp(-2 tau/T2 - 2 R T_h (1 - e^{-tau/T_h})) for tau1 = tau2 = tau."""
    if not 0.0 <= v0 <= 1.0:
        raise InvalidArgumentError(f"v0 must lie in [0, 1], got {v0!r}")

    taus = np.asarray(tau, dtype=float)
    if np.any(~np.isfinite(taus)) or np.any(taus < 0):
        raise InvalidArgumentError("tau must be finite and non-negative.")

    heating = dec.rate_r * dec.t_h * -np.expm1(-taus / dec.t_h)
    values = v0 * np.exp(-2 * taus / dec.t2 - 2 * heating)
    return float(values) if values.ndim == 0 else values


def v0_estimate(angles: Sequence[float], p0: float, fid: PulseFidelityModel) -> float:
    """
    Initial echo visibility before decay:
    p0 D(theta1) D(theta2) sin(theta3) sin^2(theta2/2) sin(theta1)
    / (1 - p0 cos(theta3) cos(theta2) cos(theta1)).
    """
    if len(angles) != 3:
        raise InvalidArgumentError(
            f"Expected three rotation angles, got {len(angles)}."
        )
    require_all_finite("angle", angles)
    if not -1.0 <= p0 <= 1.0:
        raise InvalidArgumentError(f"p0 must lie in [-1, 1], got {p0!r}")

    theta1, theta2, theta3 = angles
    denominator = 1.0 - p0 * math.cos(theta3) * math.cos(theta2) * math.cos(theta1)
    if abs(denominator) < 1e-12:
        raise DegenerateConfigurationError(
            f"Mean fringe level vanishes for angles={tuple(angles)!r}, p0={p0!r};"
            " visibility undefined."
        )

    retention = fid.retention(theta1) * fid.retention(theta2)
    return p0 * retention * echo_amplitude(angles) / denominator


def equal_angle_for_visibility(v0: float, p0: float, fid: PulseFidelityModel) -> float:
    """
    Common rotation angle theta in (0, pi/2] for which
    v0_estimate((theta, theta, theta)) equals `v0`.
    """
    lower, upper = 1e-6, math.pi / 2

    def mismatch(theta: float) -> float:
        return v0_estimate((theta, theta, theta), p0, fid) - v0

    if mismatch(lower) * mismatch(upper) > 0:
        raise InvalidArgumentError(
            f"No equal-angle sequence in (0, pi/2] reaches V0={v0!r} with"
            f" p0={p0!r}, slope={fid.slope!r}."
        )
    return brentq(mismatch, lower, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def effective_rotation_angle(peak_rabi: float, detuning: float, fwhm: float) -> float:
    """
    theta = integral(Omega(t)^2 dt) / (2 Delta) for
    Omega(t) = Omega_peak exp(-4 ln2 t^2 / fwhm^2); linear in pulse energy.
    """
    require_finite("peak_rabi", peak_rabi)
    require_non_negative("peak_rabi", peak_rabi)
    _require_pulse_shape(detuning, fwhm)
    return RAMAN_PREFACTOR * peak_rabi ** 2 * fwhm * GAUSSIAN_AREA_FACTOR / detuning


def rabi_for_rotation_angle(theta: float, detuning: float, fwhm: float) -> float:
    """Peak optical Rabi frequency producing rotation `theta`."""
    require_finite("theta", theta)
    require_non_negative("theta", theta)
    _require_pulse_shape(detuning, fwhm)
    area = RAMAN_PREFACTOR * fwhm * GAUSSIAN_AREA_FACTOR
    return math.sqrt(theta * detuning / area)


def integrate_coherence(t: float, dec: DecoherenceParams, omega: float = 0.0) -> float:
    """
    Numerically integrates the coherence equation up to `t` and returns
    |<sigma+(t)>| / |<sigma+(0)>|. `omega` is the precession rate in the
    integration frame; it only rotates the phase.
    """
    require_finite("t", t)
    require_non_negative("t", t)
    if t == 0:
        return 1.0

    def rhs(time: float, y: np.ndarray) -> np.ndarray:
        rate = 1.0 / dec.t2 + dec.rate_r * math.exp(-time / dec.t_h)
        real, imag = y
        return np.array([-rate * real - omega * imag, omega * real - rate * imag])

    solution = solve_ivp(
        rhs,
        (0.0, t),
        np.array([1.0, 0.0]),
        method="DOP853",
        rtol=1e-12,
        atol=1e-15,
    )
    if not solution.success:
        raise InvalidArgumentError(f"Coherence integration failed: {solution.message}")
    return float(math.hypot(*solution.y[:, -1]))


def _decay_exponent(t: float, dec: DecoherenceParams) -> float:
    return -t / dec.t2 - dec.rate_r * dec.t_h * -math.expm1(-t / dec.t_h)


def _require_pulse_shape(detuning: float, fwhm: float) -> None:
    require_finite("detuning", detuning)
    if not detuning > 0:
        raise InvalidArgumentError(f"detuning must be positive, got {detuning!r}")
    require_finite("fwhm", fwhm)
    if not fwhm > 0:
        raise InvalidArgumentError(f"fwhm must be positive, got {fwhm!r}")
