import logging
from typing import Any, Dict, Sequence

from fringe_analysis.models import VisibilityCurve
from spin_echo import experiment
from spin_echo.celery import app
from spin_echo.config import config_from_dict, config_to_dict
from spin_echo.models import ExperimentConfig

logger = logging.getLogger(__name__)


def run_echo_sweep(
    cfg: ExperimentConfig, separations: Sequence[float],
) -> VisibilityCurve:
    """
    Creates a separate task for every separation and gathers the points in order.
    Each point's noise stream is keyed by its index, so the curve does not depend
    on where or in which order the tasks run.
    """
    payload = config_to_dict(cfg)
    results = [
        simulate_echo_point.delay(
            config=payload, separation=float(separation), index=index,
        )
        for index, separation in enumerate(separations)
    ]
    points = [experiment.EchoPoint.from_dict(result.get()) for result in results]

    failed = sum(not point.valid for point in points)
    if failed:
        logger.warning(
            f"{failed} of {len(points)} sweep points failed their fringe fit"
        )
    return experiment.assemble_curve(points)


@app.task(ignore_result=False, max_retries=0)
def simulate_echo_point(
    config: Dict[str, Any], separation: float, index: int,
) -> Dict[str, Any]:
    cfg = config_from_dict(config)
    return experiment.simulate_echo_point(cfg, separation, index).to_dict()
