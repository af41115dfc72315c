"""
Tunneled ADR.

The LG keeps the h most recent SNR/SF observations per ED, from direct
receptions and from the ed_snr/ed_sf fields of tunneled LIMA headers alike,
and reports the best of them to the NS in place of its own measurement. The
NS side is a plain margin-based ADR.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Dict, Hashable, List, Optional, Union

from lima.core.errors import NoHistory
from lima.radio.region import EU868, DataRate, RegionalPlan

logger = logging.getLogger("Lima.Adr")

DIRECT = "Direct"

# Demodulation floors in dB, 125 kHz
REQUIRED_SNR: Dict[int, float] = {
    7: -7.5,
    8: -10.0,
    9: -12.5,
    10: -15.0,
    11: -17.5,
    12: -20.0,
}

ADR_STEP_DB = 3.0
POWER_STEP_DB = 2


def required_snr(sf: int) -> float:
    return REQUIRED_SNR[sf]


@dataclass(frozen=True)
class HistoryRecord:
    snr_db: float
    sf: int
    received_via: Union[str, int]  # DIRECT or the entry LR's node id
    at: float


@dataclass(frozen=True)
class NsMetadata:
    dev_addr: Optional[int]
    snr_db: float
    dr_string: str
    gateway_id: int

    def to_dict(self) -> dict:
        return {
            "dev_addr": None if self.dev_addr is None else f"{self.dev_addr:08X}",
            "snr_db": self.snr_db,
            "dr_string": self.dr_string,
            "gateway_id": f"{self.gateway_id:04X}",
        }


class SnrHistory:
    def __init__(self, depth: int = 5):
        if depth < 1:
            raise ValueError("history depth must be at least 1")
        self.depth = depth
        self._rings: Dict[Hashable, Deque[HistoryRecord]] = {}

    def record_reception(self, ed: Hashable, snr_db: float, sf: int, via: Union[str, int], now: float) -> None:
        ring = self._rings.setdefault(ed, deque(maxlen=self.depth))
        ring.append(HistoryRecord(snr_db=snr_db, sf=sf, received_via=via, at=now))

    def records(self, ed: Hashable) -> List[HistoryRecord]:
        return list(self._rings.get(ed, ()))

    def best(self, ed: Hashable) -> HistoryRecord:
        ring = self._rings.get(ed)
        if not ring:
            raise NoHistory(f"no SNR history for {ed!r}")
        best = ring[0]
        for record in ring:
            # >= so that the most recent wins ties
            if record.snr_db >= best.snr_db:
                best = record
        return best

    def metadata_for_ns(self, ed: Hashable, plan: RegionalPlan = EU868):
        """(snr_db, dr_string) of the maximum-SNR record."""
        best = self.best(ed)
        return best.snr_db, plan.dr_for_sf(best.sf).lorawan_string

    def forget(self, ed: Hashable) -> None:
        self._rings.pop(ed, None)


@dataclass(frozen=True)
class AdrDecision:
    new_dr: DataRate
    new_power_dbm: int

    @property
    def sf(self) -> int:
        return self.new_dr.sf


class NoChange(Enum):
    NO_CHANGE = "NoChange"

    def __repr__(self) -> str:
        return "NoChange"


NO_CHANGE = NoChange.NO_CHANGE


def _max_dr(plan: RegionalPlan) -> int:
    return max(r.index for r in plan.data_rates if r.bw_hz == 125000)


def ns_compute_adr(
    history_snr_db: float,
    current_dr: Union[int, DataRate],
    current_power_dbm: int,
    plan: RegionalPlan = EU868,
    device_margin_db: float = 10.0,
    min_power_dbm: int = 2,
    max_power_dbm: int = 14,
) -> Union[AdrDecision, NoChange]:
    rate = current_dr if isinstance(current_dr, DataRate) else plan.dr(current_dr)
    margin = history_snr_db - required_snr(rate.sf) - device_margin_db
    nstep = math.floor(margin / ADR_STEP_DB)

    dr_index = rate.index
    power = current_power_dbm
    top = _max_dr(plan)
    while nstep > 0 and dr_index < top:
        dr_index += 1
        nstep -= 1
    while nstep > 0 and power > min_power_dbm:
        power = max(min_power_dbm, power - POWER_STEP_DB)
        nstep -= 1
    while nstep < 0 and power < max_power_dbm:
        power = min(max_power_dbm, power + POWER_STEP_DB)
        nstep += 1

    if dr_index == rate.index and power == current_power_dbm:
        return NO_CHANGE
    logger.debug("ADR: snr %.1f at %s/%d dBm -> DR%d/%d dBm",
                 history_snr_db, rate.name, current_power_dbm, dr_index, power)
    return AdrDecision(new_dr=plan.dr(dr_index), new_power_dbm=power)
