"""
Scenario geometry.

The square runs from (0, 0) to (L, L) metres with y growing toward the top
edge. LGs sit on the top edge, LRs on a centered N x N Manhattan grid, EDs
uniformly at random.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from lima.core.errors import DisconnectedMesh, OutOfRange
from lima.core.model import Mode, Scenario
from lima.radio.propagation import PathLossModel, distance_m
from lima.sim.engine import Stream, rng_stream

logger = logging.getLogger("Lima.Sim.Topology")

Position = Tuple[float, float]

# (lowest ED count, highest ED count, LR count)
LR_BANDS: Tuple[Tuple[int, int, int], ...] = (
    (4, 4, 1),
    (6, 16, 4),
    (20, 36, 9),
    (42, 64, 16),
    (72, 100, 25),
)


def lr_count_for(ed_count: int) -> int:
    """LR count for an ED count; gaps between bands go to the nearest edge, ties upward."""
    if not 1 <= ed_count <= 100:
        raise OutOfRange(f"ED count {ed_count} outside 1..100")
    best = None
    for low, high, lrs in LR_BANDS:
        if low <= ed_count <= high:
            return lrs
        gap = low - ed_count if ed_count < low else ed_count - high
        # Bands are visited in ascending order, so <= prefers the larger band on ties
        if best is None or gap <= best[0]:
            best = (gap, lrs)
    return best[1]


@dataclass(frozen=True)
class Topology:
    side_m: float
    lg_positions: Tuple[Position, ...]
    lr_positions: Tuple[Position, ...]
    ed_positions: Tuple[Position, ...]

    @property
    def lr_count(self) -> int:
        return len(self.lr_positions)

    @property
    def ed_count(self) -> int:
        return len(self.ed_positions)


def grid_positions(side_m: float, per_side: int, min_spacing_m: float) -> List[Position]:
    if per_side <= 0:
        return []
    spacing = max(side_m / per_side, min_spacing_m)
    margin = (side_m - spacing * (per_side - 1)) / 2.0
    coords = [margin + i * spacing for i in range(per_side)]
    return [(x, y) for y in coords for x in coords]


def lg_positions(side_m: float, n_lg: int) -> List[Position]:
    return [((k + 0.5) * side_m / n_lg, side_m) for k in range(n_lg)]


def check_connectivity(
    lrs: Sequence[Position],
    lgs: Sequence[Position],
    path_loss: PathLossModel,
    stp_sf: int,
    stp_power_dbm: float,
) -> None:
    """Every LR must reach some LG over LR hops at the STP."""
    nodes = list(lgs) + list(lrs)
    reached = set(range(len(lgs)))
    frontier = deque(reached)
    while frontier:
        i = frontier.popleft()
        for j in range(len(nodes)):
            if j in reached:
                continue
            if path_loss.link_closes(stp_sf, stp_power_dbm, distance_m(nodes[i], nodes[j])):
                reached.add(j)
                frontier.append(j)
    stranded = [nodes[j] for j in range(len(lgs), len(nodes)) if j not in reached]
    if stranded:
        raise DisconnectedMesh(
            f"{len(stranded)} of {len(lrs)} LRs cannot reach an LG at SF{stp_sf}/{stp_power_dbm} dBm, "
            f"first at ({stranded[0][0]:.0f}, {stranded[0][1]:.0f})"
        )


def layout_topology(
    side_km: float,
    ed_count: int,
    n_lg: int,
    rng: np.random.Generator,
    path_loss: PathLossModel,
    stp_sf: int = 7,
    stp_power_dbm: float = 26,
    with_lrs: bool = True,
    min_spacing_m: float = 1500.0,
) -> Topology:
    side_m = side_km * 1000.0
    lgs = lg_positions(side_m, n_lg)
    lrs: List[Position] = []
    if with_lrs and ed_count > 0:
        per_side = int(math.isqrt(lr_count_for(ed_count)))
        lrs = grid_positions(side_m, per_side, min_spacing_m)
        check_connectivity(lrs, lgs, path_loss, stp_sf, stp_power_dbm)
    eds = [(float(x), float(y)) for x, y in rng.uniform(0.0, side_m, size=(ed_count, 2))]
    logger.debug("topology %.1f km: %d LG, %d LR, %d ED", side_km, len(lgs), len(lrs), len(eds))
    return Topology(side_m=side_m, lg_positions=tuple(lgs), lr_positions=tuple(lrs), ed_positions=tuple(eds))


def build_topology(scenario: Scenario, path_loss: Optional[PathLossModel] = None) -> Topology:
    """Topology of a Scenario; EDs depend only on the seed, so both modes share them."""
    if path_loss is None:
        path_loss = PathLossModel.from_config(scenario.radio.model_dump())
    stp = scenario.protocol.stp
    return layout_topology(
        side_km=scenario.area_side_km,
        ed_count=scenario.ed_count,
        n_lg=scenario.n_lg,
        rng=rng_stream(scenario.seed, Stream.TOPOLOGY),
        path_loss=path_loss,
        stp_sf=stp.sf,
        stp_power_dbm=stp.tx_power_dbm,
        with_lrs=scenario.mode == Mode.LIMA,
        min_spacing_m=scenario.min_lr_spacing_m,
    )
