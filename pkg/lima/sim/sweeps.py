"""
Variable-Size and Variable-Traffic sweeps.

Each sweep runs both modes at every x value (and every seed), optionally in a
process pool. Rows come back sorted by (x, mode, seed) whatever the pool
finishing order was.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from lima.core.model import Metrics, Mode, Scenario
from lima.sim.simulation import run

logger = logging.getLogger("Lima.Sweeps")

SIZES_KM = tuple(float(x) for x in np.arange(2.0, 10.0 + 0.25, 0.5))
TRAFFIC_PERIODS_S = (7200.0, 3600.0, 1800.0, 900.0, 600.0, 450.0, 300.0)
TRAFFIC_AREA_KM = 6.0
MODES = (Mode.LIMA, Mode.BASELINE)


def _run_one(scenario: Scenario) -> Metrics:
    return run(scenario)


def _execute(scenarios: List[Scenario], jobs: int) -> List[Metrics]:
    if jobs <= 1 or len(scenarios) <= 1:
        results = []
        for scenario in scenarios:
            metrics = _run_one(scenario)
            _log_done(metrics)
            results.append(metrics)
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_run_one, scenarios))
    for metrics in results:
        _log_done(metrics)
    return results


def _log_done(m: Metrics) -> None:
    logger.info("%s L=%.1f km period=%.0f s seed=%d: PDR %.1f%%",
                m.mode, m.area_side_km, m.traffic_period_s, m.seed, m.pdr_percent)


def _sweep(base: Scenario, variants: Iterable[dict], seeds: Optional[Sequence[int]], jobs: int,
           x_of: Callable[[Metrics], float]) -> List[Metrics]:
    seeds = list(seeds) if seeds else [base.seed]
    scenarios = [
        base.with_overrides(mode=mode, seed=seed, **changes)
        for changes in variants
        for mode in MODES
        for seed in seeds
    ]
    rows = _execute(scenarios, jobs)
    return sorted(rows, key=lambda m: (x_of(m), m.mode, m.seed))


def sweep_variable_size(base: Scenario, seeds: Optional[Sequence[int]] = None, jobs: int = 1,
                        sizes_km: Sequence[float] = SIZES_KM) -> List[Metrics]:
    """Square side 2..10 km in 0.5 km steps; ED and LR counts follow the area."""
    variants = [{"area_side_km": side} for side in sizes_km]
    return _sweep(base, variants, seeds, jobs, x_of=lambda m: m.area_side_km)


def sweep_variable_traffic(base: Scenario, seeds: Optional[Sequence[int]] = None, jobs: int = 1,
                           periods_s: Sequence[float] = TRAFFIC_PERIODS_S) -> List[Metrics]:
    """Fixed 6x6 km topology; traffic period from one packet per 2 h to 12 per hour."""
    variants = [{"area_side_km": TRAFFIC_AREA_KM, "traffic_period_s": period} for period in periods_s]
    return _sweep(base, variants, seeds, jobs, x_of=lambda m: m.packets_per_hour)
