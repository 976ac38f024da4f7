from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from typing import List, Optional
import asyncio
import logging
import time

from pydantic import BaseModel, Field

from metrics.collector import MetricsReport, merge_reports
from scenario.config import ScenarioConfig, ScenarioMatrix
from scenario.simulation import MobileTvSimulation


class ScenarioResult(BaseModel):
    """Outcome of one scenario run"""
    scenario_id: str
    success: bool
    report: Optional[MetricsReport] = None
    error: Optional[str] = None
    duration: Optional[float] = None
    timestamp: datetime = Field(default_factory=datetime.now)


class ScenarioExecutor:
    """Runs scenarios and turns every failure into a result instead of an exception"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def execute(self, cfg: ScenarioConfig) -> ScenarioResult:
        start_time = time.perf_counter()
        try:
            self.logger.info(f"Running scenario {cfg.scenario_id} (seed {cfg.seed}, {cfg.duration:g} s)")
            report = MobileTvSimulation(cfg).run()
            duration = time.perf_counter() - start_time
            self.logger.info(f"Scenario {cfg.scenario_id} completed in {duration:.2f}s")
            return ScenarioResult(scenario_id=cfg.scenario_id, success=True, report=report, duration=duration)

        except Exception as e:
            duration = time.perf_counter() - start_time
            self.logger.error(f"Scenario {cfg.scenario_id} failed: {e}")
            return ScenarioResult(
                scenario_id=cfg.scenario_id,
                success=False,
                error=f"{type(e).__name__}: {e}",
                duration=duration,
            )


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Process-pool entry point"""
    return ScenarioExecutor().execute(cfg)


async def run_matrix(matrix: ScenarioMatrix, parallelism: int = 1) -> List[ScenarioResult]:
    """Run every scenario of the matrix; results are ordered by scenario id"""
    logger = logging.getLogger(__name__)
    logger.info(f"Running {len(matrix)} scenarios with parallelism {parallelism}")

    if parallelism <= 1:
        results = []
        for cfg in matrix.scenarios:
            results.append(await asyncio.to_thread(run_scenario, cfg))
    else:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = [loop.run_in_executor(pool, run_scenario, cfg) for cfg in matrix.scenarios]
            results = list(await asyncio.gather(*futures))

    results.sort(key=lambda r: r.scenario_id)
    failed = [r.scenario_id for r in results if not r.success]
    if failed:
        logger.warning(f"{len(failed)} scenario(s) failed: {', '.join(failed)}")
    return results


def successful_reports(results: List[ScenarioResult]) -> List[MetricsReport]:
    return merge_reports(r.report for r in results if r.success and r.report is not None)
