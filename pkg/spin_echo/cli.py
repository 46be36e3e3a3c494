"""
Command-line front end: `python -m spin_echo <subcommand>`.

Exit codes: 0 success, 1 fit or check failure, 2 usage or configuration error.
"""
import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import sentry_sdk

import spin_echo_settings as settings
from fringe_analysis.fitting import (
    fit_fringe,
    fit_visibility_decay,
    visibility_from_fit,
)
from fringe_analysis.models import DecayFitSeed
from spin_echo.checks import run_oracle_check
from spin_echo.config import (
    CONFIG_KEYS,
    build_experiment_config,
    config_to_dict,
    parse_config_file,
    preset_values,
    resolve_config,
)
from spin_echo.decoherence import V0_DISCREPANCY_NOTE, v0_estimate
from spin_echo.ensemble import sweep_echo_amplitude
from spin_echo.exceptions import (
    FitConvergenceError,
    FitError,
    ImproperlyConfigured,
    InvalidArgumentError,
    ParseError,
    SpinEchoError,
)
from spin_echo.experiment import published_separations, simulate_fringe_scan
from spin_echo.models import PulseFidelityModel
from spin_echo.serializers import (
    load_curve,
    load_scan,
    save_curve,
    save_scan,
    write_json,
    write_manifest,
    write_rows,
)
from spin_echo.tasks import run_echo_sweep
from spin_echo.utils import config_hash

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

UNCERTAINTY_NOTE = (
    "Visibility error bars are propagated from each fringe fit, not taken from"
    " repeated measurements; decay-fit uncertainties inherit that approximation."
)

CONFIG_HELP = {
    "larmor_frequency_hz": "Mean Larmor frequency in Hz (omega0 = 2 pi x value).",
    "sigma": "Gaussian spread of Larmor angular frequencies, rad/s.",
    "t2_star": "Inhomogeneous dephasing time; sets sigma = 1/t2_star.",
    "p0": "Initial z-polarization in [-1, 1].",
    "t2": "Intrinsic decoherence time, s ('inf' disables).",
    "rate_r": "Pulse-induced decoherence rate R, 1/s.",
    "t_h": "Relaxation time T_h of the pulse-induced excitation, s.",
    "theta1": "First rotation angle, rad (accepts k*pi/m).",
    "theta2": "Second rotation angle, rad (accepts k*pi/m).",
    "theta3": "Third rotation angle, rad (accepts k*pi/m).",
    "fidelity_slope": "Per-pulse coherence loss slope: D(theta) = 1 - slope*|theta|.",
    "tau1": "First pulse separation, s; snapped to a multiple of rep_time.",
    "rep_time": "Laser repetition time, s.",
    "scan_points": "Number of tau2 points in a fringe scan.",
    "scan_span": "Total tau2 scan width about tau1, s.",
    "counts_scale": "Mean detector counts at flip probability 1.",
    "drift_rate": "Linear count drift across the scan, counts/s.",
    "noise": "Detector noise: poisson, gaussian or none.",
    "noise_rel": "Relative standard deviation for gaussian noise.",
    "seed": "Random seed for detector noise.",
    "separations": "Comma-separated total separations 2 tau, s (simulate-echo).",
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=settings.SPIN_ECHO_LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if settings.SENTRY_DSN:
        sentry_sdk.init(dsn=settings.SENTRY_DSN)

    try:
        return args.handler(args)
    except SpinEchoError as e:
        print(f"error: {e}", file=sys.stderr)
        return get_exit_code(e)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        sentry_sdk.capture_exception(e)
        print(f"error: {e.__class__.__name__}: {e}", file=sys.stderr)
        return get_exit_code(e)


def get_exit_code(e: Exception) -> int:
    if isinstance(e, (ImproperlyConfigured, InvalidArgumentError, ParseError)):
        return EXIT_USAGE
    return EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", type=Path, help="Experiment config file (key = value lines).",
    )
    common.add_argument(
        "--out",
        type=Path,
        default=Path("."),
        help="Output directory (created if missing).",
    )
    common.add_argument(
        "--seed", type=int, help="Random seed; overrides the config file.",
    )

    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument(
        "--preset", choices=["published"], help="Start from a named parameter set.",
    )
    for key in CONFIG_KEYS:
        if key == "seed":
            continue
        experiment.add_argument(
            f"--{key.replace('_', '-')}",
            dest=key,
            metavar="VALUE",
            help=CONFIG_HELP[key],
        )

    parser = argparse.ArgumentParser(
        prog="spin_echo",
        description="Simulate and analyse all-optical spin-echo experiments.",
    )
    subparsers = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    subparsers.required = True

    simulate_fringe = subparsers.add_parser(
        "simulate-fringe",
        parents=[common, experiment],
        help="Simulate one tau2 scan to fringe_scan.csv.",
    )
    simulate_fringe.set_defaults(handler=cmd_simulate_fringe)

    simulate_echo = subparsers.add_parser(
        "simulate-echo",
        parents=[common, experiment],
        help="Simulate a visibility decay to visibility_curve.csv.",
    )
    simulate_echo.add_argument(
        "--points",
        type=int,
        default=24,
        help="Grid size when no separations are given.",
    )
    simulate_echo.set_defaults(handler=cmd_simulate_echo)

    fringe = subparsers.add_parser(
        "fit-fringe", parents=[common], help="Fit a fringe scan CSV.",
    )
    fringe.add_argument("path", type=Path, help="Fringe scan CSV.")
    fringe.add_argument(
        "--freq-guess", type=float, help="Fringe angular frequency guess, rad/s.",
    )
    fringe.add_argument(
        "--larmor-frequency-hz",
        dest="larmor_frequency_hz",
        type=float,
        help="Guess the fringe at 2 pi x value.",
    )
    fringe.add_argument(
        "--envelope-sigma",
        dest="envelope_sigma",
        type=float,
        default=0.0,
        help="Known Gaussian dephasing width, rad/s; 0 fits a constant amplitude.",
    )
    fringe.set_defaults(handler=cmd_fit_fringe)

    decay = subparsers.add_parser(
        "fit-decay", parents=[common], help="Fit a visibility curve CSV.",
    )
    decay.add_argument("path", type=Path, help="Visibility curve CSV.")
    seed = DecayFitSeed.published()
    decay.add_argument(
        "--v0", type=float, default=seed.v0, help="Initial guess for V0.",
    )
    decay.add_argument(
        "--t2", type=float, default=seed.t2, help="Initial guess for T2, s.",
    )
    decay.add_argument(
        "--rate-r",
        dest="rate_r",
        type=float,
        default=seed.rate_r,
        help="Initial guess for R, 1/s.",
    )
    decay.add_argument(
        "--t-h",
        dest="t_h",
        type=float,
        default=seed.t_h,
        help="Initial guess for T_h, s.",
    )
    decay.set_defaults(handler=cmd_fit_decay)

    sweep = subparsers.add_parser(
        "sweep-angles", parents=[common], help="Echo amplitude over an angle grid.",
    )
    sweep.add_argument(
        "--steps", type=int, default=20, help="Grid divisions of [0, pi] per angle.",
    )
    sweep.set_defaults(handler=cmd_sweep_angles)

    oracle = subparsers.add_parser(
        "oracle-check",
        parents=[common],
        help="Analytic vs quadrature vs Monte-Carlo.",
    )
    oracle.add_argument(
        "--cases", type=int, default=50, help="Number of random parameter sets.",
    )
    oracle.add_argument(
        "--mc-samples",
        type=int,
        default=100_000,
        help="Monte-Carlo samples per case.",
    )
    oracle.add_argument(
        "--nodes", type=int, default=128, help="Gauss-Hermite nodes.",
    )
    oracle.add_argument(
        "--inject-fault",
        action="store_true",
        help="Flip the echo-term sign analytically; the check must fail.",
    )
    oracle.set_defaults(handler=cmd_oracle_check)

    return parser


def resolve_experiment(args: argparse.Namespace) -> Dict[str, Any]:
    preset = preset_values(args.preset) if getattr(args, "preset", None) else None
    file_values = parse_config_file(args.config) if args.config else None
    overrides = {key: getattr(args, key, None) for key in CONFIG_KEYS if key != "seed"}
    overrides["seed"] = args.seed
    return resolve_config(file_values=file_values, overrides=overrides, preset=preset)


def cmd_simulate_fringe(args: argparse.Namespace) -> int:
    values = resolve_experiment(args)
    cfg = build_experiment_config(values)
    scan = simulate_fringe_scan(cfg)

    out = _output_dir(args)
    save_scan(scan, out / "fringe_scan.csv")
    write_manifest(out, "simulate-fringe", config_to_dict(cfg))
    print(out / "fringe_scan.csv")
    return EXIT_OK


def cmd_simulate_echo(args: argparse.Namespace) -> int:
    values = resolve_experiment(args)
    cfg = build_experiment_config(values)
    separations = values["separations"]
    if not separations:
        separations = published_separations(args.points, rep_time=cfg.rep_time).tolist()

    curve = run_echo_sweep(cfg, separations)
    resolved = dict(
        config_to_dict(cfg),
        separations=[float(separation) for separation in separations],
    )

    out = _output_dir(args)
    metadata = {
        "seed": str(cfg.seed),
        "config_hash": config_hash(resolved),
        "error_model": "per-fit propagation",
    }
    save_curve(curve, out / "visibility_curve.csv", metadata)
    write_manifest(
        out,
        "simulate-echo",
        resolved,
        failed_points=int(len(curve) - curve.valid.sum()),
        expected_v0=v0_estimate(cfg.angles, cfg.ensemble.p0, cfg.fidelity),
        notes=[UNCERTAINTY_NOTE, v0_note()],
    )
    print(out / "visibility_curve.csv")
    return EXIT_OK


def cmd_fit_fringe(args: argparse.Namespace) -> int:
    scan = load_scan(args.path)
    if args.freq_guess is not None:
        freq_guess = args.freq_guess
    else:
        values = resolve_config(
            file_values=parse_config_file(args.config) if args.config else None,
            overrides={"larmor_frequency_hz": args.larmor_frequency_hz},
        )
        freq_guess = 2 * math.pi * values["larmor_frequency_hz"]

    fit = fit_fringe(scan, freq_guess, envelope_sigma=args.envelope_sigma)
    out = _output_dir(args)
    payload: Dict[str, Any] = {
        "fit": fit.to_dict(),
        "freq_guess": freq_guess,
        "source": str(args.path),
    }
    try:
        visibility, error = visibility_from_fit(fit)
    except FitError as e:
        payload["error"] = str(e)
        write_json(payload, out / "fringe_fit.json")
        raise

    payload.update(
        visibility=visibility, visibility_error=error, notes=[UNCERTAINTY_NOTE],
    )
    write_json(payload, out / "fringe_fit.json")
    write_manifest(
        out,
        "fit-fringe",
        {
            "path": str(args.path),
            "freq_guess": freq_guess,
            "envelope_sigma": args.envelope_sigma,
        },
    )
    print(f"visibility = {visibility:.6g} +/- {error:.2g}")
    return EXIT_OK


def cmd_fit_decay(args: argparse.Namespace) -> int:
    curve = load_curve(args.path)
    seed = DecayFitSeed(v0=args.v0, t2=args.t2, rate_r=args.rate_r, t_h=args.t_h)
    out = _output_dir(args)
    resolved = {
        "path": str(args.path),
        "initial_guess": dict(v0=seed.v0, t2=seed.t2, rate_r=seed.rate_r, t_h=seed.t_h),
    }
    write_manifest(out, "fit-decay", resolved)

    try:
        result = fit_visibility_decay(curve, seed)
    except FitConvergenceError as e:
        write_json(
            {"converged": False, "error": str(e), "diagnostics": e.diagnostics},
            out / "decay_fit.json",
        )
        raise

    payload = result.to_dict()
    payload["notes"] = [UNCERTAINTY_NOTE, v0_note()]
    write_json(payload, out / "decay_fit.json")
    print(
        f"v0={result.v0:.4g} t2={result.t2:.4g} s rate_r={result.rate_r:.4g} 1/s"
        f" t_h={result.t_h:.4g} s"
        f" (chi2={result.chi_squared:.4g}, converged={result.converged})"
    )
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK if result.converged or result.is_degenerate else EXIT_FAILURE


def cmd_sweep_angles(args: argparse.Namespace) -> int:
    grid, amplitudes, best = sweep_echo_amplitude(args.steps)
    out = _output_dir(args)

    rows = (
        (grid[i], grid[j], grid[k], amplitudes[i, j, k])
        for i in range(grid.size)
        for j in range(grid.size)
        for k in range(grid.size)
    )
    write_rows(
        out / "echo_amplitude.csv", ("theta1", "theta2", "theta3", "amplitude"), rows,
    )

    argmax = [float(grid[index]) for index in best]
    hahn_index = [args.steps // 2, args.steps, args.steps // 2]
    summary = {
        "steps": args.steps,
        "argmax": argmax,
        "argmax_index": list(best),
        "max_amplitude": float(amplitudes[best]),
        "hahn_condition": list(best) == hahn_index and args.steps % 2 == 0,
    }
    write_json(summary, out / "echo_amplitude_summary.json")
    write_manifest(out, "sweep-angles", {"steps": args.steps})
    print(f"max amplitude {summary['max_amplitude']:.6g} at {argmax}")
    return EXIT_OK


def cmd_oracle_check(args: argparse.Namespace) -> int:
    if args.cases < 1:
        raise InvalidArgumentError(f"--cases must be at least 1, got {args.cases}")
    seed = args.seed if args.seed is not None else 0
    report = run_oracle_check(
        args.cases,
        seed,
        mc_samples=args.mc_samples,
        n_nodes=args.nodes,
        inject_fault=args.inject_fault,
    )

    out = _output_dir(args)
    write_json(report.to_dict(), out / "oracle_check.json")
    write_manifest(
        out,
        "oracle-check",
        {
            "cases": args.cases,
            "seed": seed,
            "mc_samples": args.mc_samples,
            "nodes": args.nodes,
        },
        inject_fault=args.inject_fault,
    )

    print(f"worst |analytic - quadrature| = {report.worst_quadrature_deviation:.3e}")
    print(
        "worst |analytic - monte carlo| ="
        f" {report.worst_mc_deviation_in_std_errors:.2f} standard errors"
    )
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FAILURE


def v0_note() -> str:
    third = math.pi / 3
    value = v0_estimate((third, third, third), 0.9, PulseFidelityModel(slope=0.25))
    return f"{V0_DISCREPANCY_NOTE} (computed: {value:.4f})"


def _output_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out
