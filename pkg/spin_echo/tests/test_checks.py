import json
from unittest import TestCase

import pytest

from spin_echo.checks import OracleCase, run_oracle_check
from spin_echo.exceptions import InvalidArgumentError


class TestOracleCheck(TestCase):
    def test_needs_a_case(self):
        with self.assertRaises(InvalidArgumentError):
            run_oracle_check(0, seed=1)

    def test_injected_fault_is_caught(self):
        report = run_oracle_check(
            5, seed=3, mc_samples=10_000, n_nodes=96, inject_fault=True,
        )
        self.assertFalse(report.passed)
        self.assertGreater(report.worst_quadrature_deviation, 1e-8)
        self.assertTrue(report.to_dict()["inject_fault"])

    def test_report_is_reproducible_and_serializable(self):
        first = run_oracle_check(2, seed=7, mc_samples=5_000)
        second = run_oracle_check(2, seed=7, mc_samples=5_000)
        self.assertEqual(
            json.dumps(first.to_dict(), sort_keys=True),
            json.dumps(second.to_dict(), sort_keys=True),
        )
        self.assertEqual(first.to_dict()["n_cases"], 2)

    def test_case_verdict(self):
        case = OracleCase(
            angles=[1.0, 2.0, 1.0],
            taus=[1e-9, 1e-9],
            omega0=1e11,
            sigma=1e9,
            p0=0.5,
            analytic=0.1,
            quadrature=0.1 + 1e-9,
            monte_carlo=0.102,
            mc_std_error=0.001,
        )
        self.assertTrue(case.passed)
        self.assertFalse(OracleCase(**{**case.__dict__, "monte_carlo": 0.106}).passed)
        self.assertFalse(
            OracleCase(**{**case.__dict__, "quadrature": 0.1 + 1e-7}).passed
        )


@pytest.mark.slow
class TestOracleCheckAtScale(TestCase):
    def test_fifty_random_sequences_agree(self):
        report = run_oracle_check(50, seed=0)
        self.assertTrue(report.passed, msg=json.dumps(report.to_dict()["n_failed"]))
        self.assertLess(report.worst_quadrature_deviation, 1e-8)
