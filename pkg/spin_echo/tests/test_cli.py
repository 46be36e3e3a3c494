import io
import json
from unittest import TestCase
from unittest.mock import patch

import numpy as np

from spin_echo.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, get_exit_code, main
from spin_echo.exceptions import (
    FitConvergenceError,
    ImproperlyConfigured,
    InvalidArgumentError,
    ParseError,
    UnphysicalFitError,
)
from spin_echo.serializers import save_curve
from spin_echo.tests.base import SpinEchoMixin


class CLITestCase(SpinEchoMixin, TestCase):
    def setUp(self):
        self.out = self.temporary_directory()

    def run_cli(self, *argv: str) -> int:
        self.stdout = io.StringIO()
        self.stderr = io.StringIO()
        with patch("sys.stdout", self.stdout), patch("sys.stderr", self.stderr):
            return main(list(argv))

    def read_json(self, name: str):
        return json.loads((self.out / name).read_text())

    def fit_saved_curve(self) -> int:
        path = self.out / "curve.csv"
        return self.run_cli("fit-decay", str(path), "--out", str(self.out))


class TestExitCodes(CLITestCase):
    def test_error_mapping(self):
        self.assertEqual(get_exit_code(ImproperlyConfigured("x")), EXIT_USAGE)
        self.assertEqual(get_exit_code(InvalidArgumentError("x")), EXIT_USAGE)
        self.assertEqual(get_exit_code(ParseError("x", 3)), EXIT_USAGE)
        self.assertEqual(get_exit_code(FitConvergenceError("x")), EXIT_FAILURE)
        self.assertEqual(get_exit_code(UnphysicalFitError("x")), EXIT_FAILURE)
        self.assertEqual(get_exit_code(RuntimeError("x")), EXIT_FAILURE)

    def test_help(self):
        with self.assertRaises(SystemExit) as context:
            self.run_cli("--help")
        self.assertEqual(context.exception.code, 0)
        self.assertIn("simulate-echo", self.stdout.getvalue())

    def test_unknown_subcommand(self):
        with self.assertRaises(SystemExit) as context:
            self.run_cli("simulate-everything")
        self.assertEqual(context.exception.code, EXIT_USAGE)

    def test_unknown_config_key(self):
        config = self.out / "bad.cfg"
        config.write_text("p0 = 0.9\nwavelength = 800e-9\n")
        code = self.run_cli(
            "simulate-fringe", "--config", str(config), "--out", str(self.out),
        )
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("wavelength", self.stderr.getvalue())

    def test_invalid_flag_value(self):
        out = str(self.out)
        code = self.run_cli("simulate-fringe", "--tau1", "20e-9", "--out", out)
        self.assertEqual(code, EXIT_USAGE)

    def test_missing_input_file(self):
        missing = str(self.out / "absent.csv")
        code = self.run_cli("fit-fringe", missing, "--out", str(self.out))
        self.assertEqual(code, EXIT_USAGE)

    @patch("spin_echo.cli.sentry_sdk.capture_exception")
    def test_unexpected_errors_are_reported(self, mock_capture_exception):
        with patch(
            "spin_echo.cli.sweep_echo_amplitude", side_effect=RuntimeError("boom"),
        ):
            code = self.run_cli("sweep-angles", "--out", str(self.out))
        self.assertEqual(code, EXIT_FAILURE)
        mock_capture_exception.assert_called_once()


class TestSimulate(CLITestCase):
    def test_simulate_fringe(self):
        code = self.run_cli("simulate-fringe", "--out", str(self.out), "--seed", "4")
        self.assertEqual(code, EXIT_OK)
        lines = (self.out / "fringe_scan.csv").read_text().splitlines()
        data = [line for line in lines if not line.startswith("#")]
        self.assertEqual(data[0], "tau2_s,counts")
        self.assertEqual(len(data), 65)
        manifest = self.read_json("manifest.json")
        self.assertEqual(manifest["subcommand"], "simulate-fringe")
        self.assertEqual(manifest["config"]["seed"], 4)
        self.assertEqual(manifest["config"]["theta2"], np.pi)

    def test_reruns_are_byte_identical(self):
        other = self.temporary_directory()
        args = ["simulate-fringe", "--preset", "published", "--seed", "9"]
        self.run_cli(*args, "--out", str(self.out))
        self.run_cli(*args, "--out", str(other))
        for name in ("fringe_scan.csv", "manifest.json"):
            self.assertEqual(
                (self.out / name).read_bytes(), (other / name).read_bytes(),
            )

    def test_flags_override_the_config_file(self):
        config = self.out / "run.cfg"
        config.write_text("theta1 = pi/2\ntheta2 = pi\nscan_points = 32\n")
        self.run_cli(
            "simulate-fringe",
            "--config",
            str(config),
            "--scan-points",
            "16",
            "--out",
            str(self.out),
        )
        self.assertEqual(self.read_json("manifest.json")["config"]["scan_points"], 16)

    def test_simulate_echo(self):
        code = self.run_cli(
            "simulate-echo",
            "--preset",
            "published",
            "--separations",
            "2.64e-8,7.92e-8,2.64e-7",
            "--out",
            str(self.out),
        )
        self.assertEqual(code, EXIT_OK)
        text = (self.out / "visibility_curve.csv").read_text()
        self.assertIn("# error_model=per-fit propagation", text)
        rows = [line for line in text.splitlines() if not line.startswith("#")]
        self.assertEqual(len(rows), 4)
        manifest = self.read_json("manifest.json")
        self.assertEqual(manifest["failed_points"], 0)
        self.assertAlmostEqual(manifest["expected_v0"], 0.047, places=9)
        self.assertEqual(manifest["config"]["separations"], [2.64e-8, 7.92e-8, 2.64e-7])
        self.assertEqual(manifest["config"]["scan_points"], 256)
        self.assertEqual(len(manifest["notes"]), 2)

    def test_sweep_angles(self):
        code = self.run_cli("sweep-angles", "--steps", "4", "--out", str(self.out))
        self.assertEqual(code, EXIT_OK)
        summary = self.read_json("echo_amplitude_summary.json")
        self.assertTrue(summary["hahn_condition"])
        self.assertEqual(summary["argmax_index"], [2, 4, 2])
        self.assertAlmostEqual(summary["max_amplitude"], 1.0, places=12)
        rows = (self.out / "echo_amplitude.csv").read_text().splitlines()
        self.assertEqual(len(rows), 1 + 5 ** 3)


class TestFit(CLITestCase):
    def test_fit_fringe(self):
        self.run_cli("simulate-fringe", "--p0", "0.9", "--out", str(self.out))
        code = self.run_cli(
            "fit-fringe", str(self.out / "fringe_scan.csv"), "--out", str(self.out),
        )
        self.assertEqual(code, EXIT_OK)
        payload = self.read_json("fringe_fit.json")
        self.assertAlmostEqual(payload["visibility"], 0.9, delta=0.01)
        self.assertGreater(payload["visibility_error"], 0)
        self.assertEqual(payload["fit"]["envelope_sigma"], 0.0)

    def test_fit_fringe_with_the_dephasing_envelope(self):
        self.run_cli(
            "simulate-fringe", "--p0", "0.9", "--noise", "none", "--out", str(self.out),
        )
        code = self.run_cli(
            "fit-fringe",
            str(self.out / "fringe_scan.csv"),
            "--envelope-sigma",
            "1e9",
            "--out",
            str(self.out),
        )
        self.assertEqual(code, EXIT_OK)
        payload = self.read_json("fringe_fit.json")
        self.assertAlmostEqual(payload["visibility"], 0.9, delta=1e-9)
        self.assertEqual(payload["fit"]["envelope_sigma"], 1e9)
        manifest = self.read_json("manifest.json")
        self.assertEqual(manifest["config"]["envelope_sigma"], 1e9)

    def test_fit_fringe_with_a_negative_envelope(self):
        self.run_cli("simulate-fringe", "--out", str(self.out))
        code = self.run_cli(
            "fit-fringe",
            str(self.out / "fringe_scan.csv"),
            "--envelope-sigma=-1",
            "--out",
            str(self.out),
        )
        self.assertEqual(code, EXIT_USAGE)

    def test_fit_decay(self):
        curve, _ = self.decay_curve(np.geomspace(5e-8, 1.6e-5, 20))
        save_curve(curve, self.out / "curve.csv")
        code = self.fit_saved_curve()
        self.assertEqual(code, EXIT_OK)
        payload = self.read_json("decay_fit.json")
        self.assertAlmostEqual(payload["t2"] / 6.7e-6, 1.0, delta=1e-3)
        self.assertTrue(payload["converged"])
        self.assertIn("unit weights", self.stderr.getvalue())

    def test_fit_decay_labels_propagated_uncertainties(self):
        curve, _ = self.decay_curve(np.geomspace(5e-8, 1.6e-5, 20), relative_error=0.05)
        save_curve(curve, self.out / "curve.csv")
        code = self.fit_saved_curve()
        self.assertEqual(code, EXIT_OK)
        warnings = self.read_json("decay_fit.json")["warnings"]
        self.assertEqual(len(warnings), 1)
        self.assertIn("per-fit propagation", warnings[0])

    @patch("fringe_analysis.fitting.capture_message")
    def test_fit_decay_flags_unidentifiable_parameters(self, mock_capture_message):
        curve, _ = self.decay_curve(np.geomspace(5e-8, 1.6e-5, 20), rate_r=0.0)
        save_curve(curve, self.out / "curve.csv")
        code = self.fit_saved_curve()
        self.assertEqual(code, EXIT_OK)
        payload = self.read_json("decay_fit.json")
        self.assertIn("t_h", payload["degenerate_parameters"])
        mock_capture_message.assert_called_once()

    def test_fit_decay_on_a_malformed_file(self):
        path = self.out / "curve.csv"
        path.write_text("separation_s,visibility\n1e-8,0.04\n")
        code = self.run_cli("fit-decay", str(path), "--out", str(self.out))
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("error", self.stderr.getvalue())

    def test_fit_decay_with_too_few_points(self):
        curve, _ = self.decay_curve(np.geomspace(5e-8, 1.6e-5, 5))
        save_curve(curve, self.out / "curve.csv")
        code = self.fit_saved_curve()
        self.assertEqual(code, EXIT_FAILURE)


class TestOracleCheck(CLITestCase):
    def test_needs_at_least_one_case(self):
        code = self.run_cli("oracle-check", "--cases", "0", "--out", str(self.out))
        self.assertEqual(code, EXIT_USAGE)

    def test_passes_and_catches_an_injected_fault(self):
        args = [
            "oracle-check",
            "--cases",
            "3",
            "--mc-samples",
            "20000",
            "--nodes",
            "96",
            "--out",
            str(self.out),
        ]
        self.assertEqual(self.run_cli(*args), EXIT_OK)
        self.assertIn("PASS", self.stdout.getvalue())
        self.assertTrue(self.read_json("oracle_check.json")["passed"])

        self.assertEqual(self.run_cli(*args, "--inject-fault"), EXIT_FAILURE)
        self.assertIn("FAIL", self.stdout.getvalue())
        self.assertTrue(self.read_json("manifest.json")["inject_fault"])
