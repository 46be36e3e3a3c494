"""
Fringe and decay fitting.

A fringe scan is fitted to a constant, a linear drift and a sinusoid in tau2,
optionally under a known Gaussian envelope exp(-(sigma t)^2 / 2) from
inhomogeneous dephasing. For a fixed frequency the model is linear and solved
exactly; the frequency is found by a coarse grid over the search window, a
bounded Brent (golden-section/parabolic) refinement inside the best grid cell
and, for significant fringes, a Levenberg-Marquardt polish of all five
parameters. Visibility is (max - min) / (max + min) of the drift-removed fit,
i.e. c / a.

The visibility decay is fitted with weighted Levenberg-Marquardt in
log-parameters on times scaled by the median half-separation.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize_scalar
from sentry_sdk import capture_message

import spin_echo_settings as settings
from fringe_analysis.models import (
    DECAY_PARAMETERS,
    DecayFitResult,
    DecayFitSeed,
    FringeFit,
    FringeScan,
    VisibilityCurve,
)
from spin_echo.exceptions import (
    FitConvergenceError,
    InvalidArgumentError,
    UnderdeterminedFitError,
    UnphysicalFitError,
)

logger = logging.getLogger(__name__)

MIN_FRINGE_POINTS = 6
MIN_DECAY_POINTS = 6
FRINGE_PARAMETERS = 5
SIGNIFICANCE = 10  # amplitude / standard error
TIE_TOLERANCE = 1e-9
TIE_FLOOR = 1e-12  # relative to the signal energy
UNIT_WEIGHTS_WARNING = "No visibility errors supplied; fitted with unit weights."
PROPAGATED_ERRORS_WARNING = (
    "Uncertainties from per-fit propagation of the fringe-fit covariance,"
    " not from repeated measurements."
)


def fit_fringe(
    scan: FringeScan, freq_guess: float, envelope_sigma: float = 0.0,
) -> FringeFit:
    """
    `envelope_sigma` (rad/s) is the known Gaussian dephasing width; with 0 the
    fringe amplitude is taken as constant across the scan.
    """
    if scan.delays.size < MIN_FRINGE_POINTS:
        raise UnderdeterminedFitError(
            f"A fringe fit needs at least {MIN_FRINGE_POINTS} points,"
            f" got {scan.delays.size}."
        )
    if not (math.isfinite(freq_guess) and freq_guess > 0):
        raise InvalidArgumentError(
            f"freq_guess must be a positive angular frequency, got {freq_guess!r}"
        )
    if not (math.isfinite(envelope_sigma) and envelope_sigma >= 0):
        raise InvalidArgumentError(
            f"envelope_sigma must be finite and non-negative, got {envelope_sigma!r}"
        )

    # Scaled variables: phase at the guessed frequency, counts relative to the
    # largest count.
    offsets = scan.delays - scan.separation
    phase_axis = freq_guess * offsets
    envelope = np.exp(-0.5 * (envelope_sigma * offsets) ** 2)
    count_scale = float(np.max(np.abs(scan.counts))) or 1.0
    signal = scan.counts / count_scale

    window = settings.FRINGE_SEARCH_WINDOW
    model = _FringeModel(phase_axis, envelope, signal)
    ratio = _search_frequency_ratio(model, window)
    ratio = _polish(model, ratio, window)

    coefficients, covariance, rss = model.linear_fit(ratio)
    offset, drift, cos_part, sin_part = coefficients
    amplitude = math.hypot(cos_part, sin_part)
    phase = math.atan2(-sin_part, cos_part)

    if amplitude > 0:
        gradient = np.array([cos_part, sin_part]) / amplitude
        amplitude_variance = float(gradient @ covariance[2:, 2:] @ gradient)
        offset_amplitude_covariance = float(covariance[0, 2:] @ gradient)
    else:
        amplitude_variance = float(covariance[2, 2] + covariance[3, 3]) / 2
        offset_amplitude_covariance = 0.0

    return FringeFit(
        offset=offset * count_scale,
        drift=drift * count_scale * freq_guess,
        amplitude=amplitude * count_scale,
        phase=phase,
        frequency=ratio * freq_guess,
        residual_rms=math.sqrt(rss / signal.size) * count_scale,
        reference=scan.separation,
        offset_error=math.sqrt(max(covariance[0, 0], 0.0)) * count_scale,
        amplitude_error=math.sqrt(max(amplitude_variance, 0.0)) * count_scale,
        offset_amplitude_covariance=offset_amplitude_covariance * count_scale ** 2,
        n_points=int(signal.size),
        envelope_sigma=envelope_sigma,
    )


def visibility_from_fit(fit: FringeFit) -> Tuple[float, float]:
    """V = c / a with first-order error propagation from the fit covariance."""
    if not fit.offset > fit.amplitude:
        raise UnphysicalFitError(
            f"Fitted offset {fit.offset!r} does not exceed the amplitude"
            f" {fit.amplitude!r}; visibility would exceed 1."
        )

    offset, amplitude = fit.offset, fit.amplitude
    visibility = amplitude / offset
    variance = (
        (fit.amplitude_error / offset) ** 2
        + (amplitude * fit.offset_error / offset ** 2) ** 2
        - 2 * amplitude * fit.offset_amplitude_covariance / offset ** 3
    )
    return visibility, math.sqrt(max(variance, 0.0))


def fit_visibility_decay(
    curve: VisibilityCurve, initial_guess: Optional[DecayFitSeed] = None,
) -> DecayFitResult:
    initial_guess = initial_guess or DecayFitSeed.published()
    separations, visibilities, errors = curve.valid_points()

    if separations.size < MIN_DECAY_POINTS:
        raise UnderdeterminedFitError(
            f"A decay fit needs at least {MIN_DECAY_POINTS} valid points,"
            f" got {separations.size}."
        )

    warnings: List[str] = []
    if errors is None:
        logger.warning(UNIT_WEIGHTS_WARNING)
        warnings.append(UNIT_WEIGHTS_WARNING)
        errors = np.ones_like(visibilities)
    else:
        warnings.append(PROPAGATED_ERRORS_WARNING)

    taus = separations / 2
    time_scale = float(np.median(taus[taus > 0])) if np.any(taus > 0) else 1.0
    x = taus / time_scale

    seed = initial_guess
    start = np.log(
        [
            seed.v0,
            seed.t2 / time_scale,
            seed.rate_r * time_scale,
            seed.t_h / time_scale,
        ]
    )

    def model(u: np.ndarray) -> np.ndarray:
        v0, t2, rate, t_h = np.exp(u)
        return v0 * np.exp(-2 * x / t2 - 2 * rate * t_h * -np.expm1(-x / t_h))

    def residuals(u: np.ndarray) -> np.ndarray:
        return (model(u) - visibilities) / errors

    def jacobian(u: np.ndarray) -> np.ndarray:
        _, t2, rate, t_h = np.exp(u)
        relaxed = -np.expm1(-x / t_h)
        heating_derivative = (
            2 * rate * t_h * relaxed - 2 * rate * x * np.exp(-x / t_h)
        )
        log_derivatives = np.column_stack(
            [
                np.ones_like(x),
                2 * x / t2,
                -2 * rate * t_h * relaxed,
                -heating_derivative,
            ]
        )
        return (model(u) / errors)[:, None] * log_derivatives

    result = least_squares(
        residuals,
        start,
        jac=jacobian,
        method="lm",
        x_scale="jac",
        ftol=1e-15,
        xtol=1e-15,
        gtol=1e-15,
        max_nfev=settings.DECAY_FIT_MAX_EVALUATIONS,
    )

    scales = np.array([1.0, time_scale, 1.0 / time_scale, time_scale])
    values = np.exp(result.x) * scales
    jac = jacobian(result.x)
    degenerate = _degenerate_parameters(jac)
    chi_squared = float(np.sum(result.fun ** 2))
    dof = separations.size - len(DECAY_PARAMETERS)
    reduced_chi_squared = chi_squared / dof if dof > 0 else math.nan

    diagnostics = {
        "parameters": dict(zip(DECAY_PARAMETERS, values.tolist())),
        "chi_squared": chi_squared,
        "n_evaluations": int(result.nfev),
        "status": int(result.status),
        "message": result.message,
    }
    if result.status < 0 or (result.status == 0 and not degenerate):
        raise FitConvergenceError(
            f"Visibility decay fit did not converge: {result.message}", diagnostics
        )

    log_covariance = np.linalg.pinv(jac.T @ jac) * (
        reduced_chi_squared if dof > 0 else 1.0
    )
    covariance = values[:, None] * log_covariance * values[None, :]
    covariance = (covariance + covariance.T) / 2
    uncertainties = dict(
        zip(
            DECAY_PARAMETERS,
            np.sqrt(np.clip(np.diag(covariance), 0.0, None)).tolist(),
        )
    )

    if degenerate:
        message = (
            "Decay fit parameters not identifiable from this curve:"
            f" {', '.join(degenerate)}"
        )
        logger.warning(message)
        warnings.append(message)
        capture_message(message)

    logger.info(
        f"Decay fit {'converged' if result.status > 0 else 'stopped'} after"
        f" {result.nfev} evaluations: {diagnostics['parameters']}"
        f" (chi2={chi_squared:.4g})"
    )

    return DecayFitResult(
        v0=float(values[0]),
        t2=float(values[1]),
        rate_r=float(values[2]),
        t_h=float(values[3]),
        uncertainties=uncertainties,
        covariance=covariance,
        chi_squared=chi_squared,
        reduced_chi_squared=reduced_chi_squared,
        converged=bool(result.status > 0),
        status_message=str(result.message),
        n_evaluations=int(result.nfev),
        degenerate_parameters=degenerate,
        warnings=warnings,
    )


class _FringeModel:
    """Scaled fringe data; linear in (a, b, C, S) for a fixed frequency ratio."""

    def __init__(
        self, phase_axis: np.ndarray, envelope: np.ndarray, signal: np.ndarray,
    ) -> None:
        self.phase_axis = phase_axis
        self.envelope = envelope
        self.signal = signal

    def design(self, ratio: float) -> np.ndarray:
        return np.column_stack(
            [
                np.ones_like(self.phase_axis),
                self.phase_axis,
                self.envelope * np.cos(ratio * self.phase_axis),
                self.envelope * np.sin(ratio * self.phase_axis),
            ]
        )

    def linear_fit(self, ratio: float):
        design = self.design(ratio)
        coefficients, _, _, _ = np.linalg.lstsq(design, self.signal, rcond=None)
        residual = self.signal - design @ coefficients
        rss = float(residual @ residual)
        dof = max(self.signal.size - FRINGE_PARAMETERS, 1)
        covariance = np.linalg.pinv(design.T @ design) * (rss / dof)
        return coefficients, covariance, rss

    def residual_sum(self, ratio: float) -> float:
        design = self.design(ratio)
        coefficients, _, _, _ = np.linalg.lstsq(design, self.signal, rcond=None)
        residual = self.signal - design @ coefficients
        return float(residual @ residual)

    def is_significant(self, ratio: float) -> bool:
        coefficients, covariance, _ = self.linear_fit(ratio)
        offset, _, cos_part, sin_part = coefficients
        amplitude = math.hypot(cos_part, sin_part)
        amplitude_error = math.sqrt(
            max(float(covariance[2, 2] + covariance[3, 3]) / 2, 0.0)
        )
        return amplitude > max(SIGNIFICANCE * amplitude_error, 1e-9 * abs(offset))


def _search_frequency_ratio(model: _FringeModel, window: float) -> float:
    """
    Frequency as a multiple of the guess. Grid minima within TIE_TOLERANCE of
    each other are resolved toward the guess. A minimum on the window edge means
    the true frequency lies outside it, unless the fringe is lost in the noise,
    in which case the guess itself is returned.
    """
    grid = np.linspace(1 - window, 1 + window, settings.FRINGE_SEARCH_GRID_POINTS)
    rss = np.array([model.residual_sum(ratio) for ratio in grid])

    floor = TIE_FLOOR * float(model.signal @ model.signal)
    tied = np.flatnonzero(rss <= rss.min() * (1 + TIE_TOLERANCE) + floor)
    best = int(tied[np.argmin(np.abs(grid[tied] - 1.0))])

    if best in (0, grid.size - 1):
        if not model.is_significant(grid[best]):
            logger.info(
                "No significant fringe in the search window; keeping the guessed"
                " frequency"
            )
            return 1.0
        raise FitConvergenceError(
            "Fringe frequency search hit the edge of its window; the frequency"
            " guess is too far off.",
            {
                "grid": grid.tolist(),
                "residuals": rss.tolist(),
                "best_ratio": float(grid[best]),
            },
        )

    refined = minimize_scalar(
        model.residual_sum,
        bounds=(grid[best - 1], grid[best + 1]),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if refined.success and refined.fun <= rss[best]:
        return float(refined.x)
    return float(grid[best])


def _polish(model: _FringeModel, ratio: float, window: float) -> float:
    """
    Joint LM refinement of the frequency; kept only when it lowers the residual
    of a significant fringe.
    """
    if not model.is_significant(ratio):
        return ratio

    coefficients, _, rss = model.linear_fit(ratio)
    offset, drift, cos_part, sin_part = coefficients
    phase_axis, envelope, signal = model.phase_axis, model.envelope, model.signal

    def residuals(params: np.ndarray) -> np.ndarray:
        a, b, c, phi, r = params
        oscillation = c * envelope * np.cos(r * phase_axis + phi)
        return signal - (a + b * phase_axis + oscillation)

    start = np.array(
        [
            offset,
            drift,
            math.hypot(cos_part, sin_part),
            math.atan2(-sin_part, cos_part),
            ratio,
        ]
    )
    try:
        polished = least_squares(
            residuals, start, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
        )
    except (ValueError, np.linalg.LinAlgError) as e:
        logger.info(f"Fringe polish skipped: {e}")
        return ratio

    candidate = float(polished.x[4])
    if abs(candidate - 1.0) >= window:
        return ratio
    if model.residual_sum(candidate) < rss:
        return candidate
    return ratio


def _degenerate_parameters(jacobian: np.ndarray) -> List[str]:
    """
    Names of parameters taking part in near-null directions of the
    (log-parameter) Jacobian.
    """
    if not np.all(np.isfinite(jacobian)):
        return list(DECAY_PARAMETERS)

    _, singular_values, vt = np.linalg.svd(jacobian, full_matrices=False)
    if singular_values[0] == 0:
        return list(DECAY_PARAMETERS)

    flagged = set()
    for value, direction in zip(singular_values, vt):
        if value / singular_values[0] < settings.DEGENERACY_THRESHOLD:
            flagged.update(
                int(index) for index in np.flatnonzero(np.abs(direction) > 0.1)
            )
    return [name for index, name in enumerate(DECAY_PARAMETERS) if index in flagged]
