"""
Oracle self-check: the closed-form ensemble average against Gauss-Hermite quadrature
and Monte-Carlo sampling over random sequences with sigma * tau <= 3.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List

import numpy as np

from spin_echo.ensemble import (
    gaussian_average_mc,
    gaussian_average_quadrature,
    sequence_for,
    sigma_z_terms,
)
from spin_echo.exceptions import InvalidArgumentError
from spin_echo.models import EnsembleParams

logger = logging.getLogger(__name__)

QUADRATURE_TOLERANCE = 1e-8
MC_SIGMA_LIMIT = 4.0
MC_ABSOLUTE_FLOOR = 1e-12
MAX_SIGMA_TAU = 3.0


@dataclass
class OracleCase:
    angles: List[float]
    taus: List[float]
    omega0: float
    sigma: float
    p0: float
    analytic: float
    quadrature: float
    monte_carlo: float
    mc_std_error: float

    @property
    def quadrature_deviation(self) -> float:
        return abs(self.analytic - self.quadrature)

    @property
    def mc_deviation(self) -> float:
        return abs(self.analytic - self.monte_carlo)

    @property
    def passed(self) -> bool:
        mc_limit = MC_SIGMA_LIMIT * self.mc_std_error + MC_ABSOLUTE_FLOOR
        return (
            self.quadrature_deviation < QUADRATURE_TOLERANCE
            and self.mc_deviation <= mc_limit
        )


@dataclass
class OracleReport:
    cases: List[OracleCase] = field(default_factory=list)
    inject_fault: bool = False

    @property
    def passed(self) -> bool:
        return all(case.passed for case in self.cases)

    @property
    def worst_quadrature_deviation(self) -> float:
        return max(case.quadrature_deviation for case in self.cases)

    @property
    def worst_mc_deviation_in_std_errors(self) -> float:
        return max(
            case.mc_deviation / max(case.mc_std_error, MC_ABSOLUTE_FLOOR)
            for case in self.cases
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "inject_fault": self.inject_fault,
            "n_cases": len(self.cases),
            "n_failed": sum(not case.passed for case in self.cases),
            "worst_quadrature_deviation": self.worst_quadrature_deviation,
            "worst_mc_deviation_in_std_errors": self.worst_mc_deviation_in_std_errors,
            "cases": [dict(asdict(case), passed=case.passed) for case in self.cases],
        }


def run_oracle_check(
    n_cases: int,
    seed: int,
    mc_samples: int = 100_000,
    n_nodes: int = 128,
    inject_fault: bool = False,
) -> OracleReport:
    """
    `inject_fault` flips the sign of the echo term on the analytic side, a seeded
    bug the check must catch.
    """
    if n_cases < 1:
        raise InvalidArgumentError(f"n_cases must be at least 1, got {n_cases}")

    rng = np.random.default_rng(seed)
    report = OracleReport(inject_fault=inject_fault)

    for index in range(n_cases):
        angles = rng.uniform(0.0, math.pi, 3)
        sigma = 10 ** rng.uniform(8.0, 10.0)
        taus = rng.uniform(0.0, MAX_SIGMA_TAU / sigma, 2)
        ens = EnsembleParams.from_frequency(
            rng.uniform(10e9, 100e9), sigma=sigma, p0=rng.uniform(-1.0, 1.0),
        )

        terms = sigma_z_terms(angles, taus, ens)
        if inject_fault:
            terms[4] = -terms[4]
        analytic = ens.p0 * float(np.sum(terms))

        seq = sequence_for(angles, taus)
        quadrature = gaussian_average_quadrature(seq, ens, n_nodes=n_nodes)
        monte_carlo = gaussian_average_mc(
            seq, ens, n_samples=mc_samples, seed=seed * 1_000_003 + index,
        )

        case = OracleCase(
            angles=angles.tolist(),
            taus=taus.tolist(),
            omega0=ens.omega0,
            sigma=sigma,
            p0=ens.p0,
            analytic=analytic,
            quadrature=quadrature.mean_sigma_z,
            monte_carlo=monte_carlo.mean_sigma_z,
            mc_std_error=monte_carlo.std_error,
        )
        if not case.passed:
            logger.warning(
                f"Oracle case {index} disagrees: analytic={analytic!r},"
                f" quadrature={case.quadrature!r},"
                f" monte_carlo={case.monte_carlo!r} +/- {case.mc_std_error!r}"
            )
        report.cases.append(case)

    logger.info(
        f"Oracle check over {n_cases} cases: worst quadrature deviation"
        f" {report.worst_quadrature_deviation:.3e}, worst Monte-Carlo deviation"
        f" {report.worst_mc_deviation_in_std_errors:.2f} standard errors"
    )
    return report
