import math
from unittest import TestCase

from spin_echo.config import (
    CONFIG_KEYS,
    build_experiment_config,
    config_from_dict,
    config_to_dict,
    parse_angle,
    parse_config_file,
    parse_separations,
    preset_values,
    resolve_config,
)
from spin_echo.exceptions import ImproperlyConfigured
from spin_echo.experiment import published_config
from spin_echo.models import NoiseKind
from spin_echo.tests.base import SpinEchoMixin


class TestParseAngle(TestCase):
    def test_pi_expressions(self):
        cases = {
            "pi": math.pi,
            "pi/2": math.pi / 2,
            "-pi": -math.pi,
            "2*pi/3": 2 * math.pi / 3,
            "0.5pi": math.pi / 2,
            " PI / 4 ": math.pi / 4,
            "1.25": 1.25,
        }
        for text, expected in cases.items():
            self.assertAlmostEqual(parse_angle(text), expected, places=15, msg=text)
        self.assertEqual(parse_angle(0.3), 0.3)

    def test_garbage_is_rejected(self):
        for text in ("half", "pi/", "pi/0x"):
            with self.assertRaises(ValueError):
                parse_angle(text)

    def test_separations(self):
        self.assertEqual(parse_separations("2.64e-8, 5.28e-8,"), [2.64e-8, 5.28e-8])
        self.assertEqual(parse_separations((1, 2)), [1.0, 2.0])


class TestConfigFile(SpinEchoMixin, TestCase):
    def write(self, text: str):
        path = self.temporary_directory() / "run.cfg"
        path.write_text(text)
        return path

    def test_comments_and_blank_lines(self):
        path = self.write("# sample\n\ntheta2 = pi   # refocusing\np0=0.5\n")
        self.assertEqual(parse_config_file(path), {"theta2": "pi", "p0": "0.5"})

    def test_unknown_key_names_the_line(self):
        path = self.write("p0 = 0.5\nbogus_key = 1\n")
        with self.assertRaises(ImproperlyConfigured) as context:
            parse_config_file(path)
        self.assertIn("bogus_key", str(context.exception))
        self.assertIn(":2:", str(context.exception))

    def test_malformed_line(self):
        with self.assertRaises(ImproperlyConfigured):
            parse_config_file(self.write("p0 0.5\n"))

    def test_missing_file(self):
        with self.assertRaises(ImproperlyConfigured):
            parse_config_file(self.temporary_directory() / "absent.cfg")


class TestResolveConfig(TestCase):
    def test_defaults_cover_every_key(self):
        resolved = resolve_config()
        self.assertEqual(set(resolved), set(CONFIG_KEYS))
        self.assertEqual(resolved["theta2"], math.pi)
        self.assertIsNone(resolved["separations"])

    def test_precedence(self):
        resolved = resolve_config(
            file_values={"p0": "0.5", "seed": "3"},
            overrides={"p0": "0.25", "seed": None},
            preset={"p0": 0.9, "counts_scale": 2e4},
        )
        self.assertEqual(resolved["p0"], 0.25)
        self.assertEqual(resolved["seed"], 3)
        self.assertEqual(resolved["counts_scale"], 2e4)

    def test_unknown_override(self):
        with self.assertRaises(ImproperlyConfigured) as context:
            resolve_config(overrides={"theta4": "1"})
        self.assertIn("theta4", str(context.exception))

    def test_invalid_value_names_the_key(self):
        with self.assertRaises(ImproperlyConfigured) as context:
            resolve_config(file_values={"scan_points": "12.5"})
        self.assertIn("scan_points", str(context.exception))
        with self.assertRaises(ImproperlyConfigured):
            resolve_config(file_values={"noise": "pink"})

    def test_sigma_and_t2_star(self):
        with self.assertRaises(ImproperlyConfigured):
            resolve_config(file_values={"sigma": "1e9", "t2_star": "1e-9"})

        resolved = resolve_config(
            file_values={"t2_star": "2e-9"}, overrides={"sigma": "1e9"},
        )
        self.assertIsNone(resolved["t2_star"])

        resolved = resolve_config(
            file_values={"sigma": "1e9"}, overrides={"t2_star": "2e-9"},
        )
        cfg = build_experiment_config(resolved)
        self.assertAlmostEqual(cfg.ensemble.sigma, 5e8, delta=1e-3)

    def test_build_reports_invalid_combinations_as_configuration_errors(self):
        with self.assertRaises(ImproperlyConfigured):
            build_experiment_config(resolve_config(overrides={"tau1": "20e-9"}))
        with self.assertRaises(ImproperlyConfigured):
            build_experiment_config(resolve_config(overrides={"p0": "1.5"}))

    def test_integer_spelling(self):
        resolved = resolve_config(overrides={"scan_points": "128.0"})
        self.assertEqual(resolved["scan_points"], 128)


class TestConfigDict(TestCase):
    def test_round_trip_of_the_published_config(self):
        cfg = published_config(seed=7)
        rebuilt = config_from_dict(config_to_dict(cfg))
        self.assertEqual(config_to_dict(rebuilt), config_to_dict(cfg))
        self.assertEqual(rebuilt.noise.kind, NoiseKind.POISSON)
        self.assertEqual(rebuilt.angles, cfg.angles)

    def test_infinite_t2_is_spelled_out(self):
        payload = config_to_dict(build_experiment_config(resolve_config()))
        self.assertEqual(payload["t2"], "inf")
        self.assertTrue(math.isinf(config_from_dict(payload).decoherence.t2))

    def test_published_preset(self):
        values = resolve_config(preset=preset_values("published"))
        self.assertEqual(values["fidelity_slope"], 0.25)
        with self.assertRaises(ImproperlyConfigured):
            preset_values("lab")
