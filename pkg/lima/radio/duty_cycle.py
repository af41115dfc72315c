"""
Per-node, per-channel duty cycle and dwell time.

A transmission of airtime t on a channel with limit d closes that channel for
t * (1/d - 1) after it ends.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Union

from lima.radio.region import MESH_CHANNEL, RegionalPlan


@dataclass(frozen=True)
class Allowed:
    pass


@dataclass(frozen=True)
class Deferred:
    until_us: int


@dataclass(frozen=True)
class DwellExceeded:
    airtime_us: int
    dwell_us: int


ALLOWED = Allowed()

DutyCycleResult = Union[Allowed, Deferred, DwellExceeded]


class DutyCycleTracker:
    def __init__(
        self,
        plan: RegionalPlan,
        enabled: bool = True,
        limit: float = 0.01,
        mesh_limit: float = 0.10,
    ):
        self.plan = plan
        self.enabled = enabled
        self.limit = limit
        self.mesh_limit = mesh_limit
        self._blocked_until: Dict[int, int] = {}
        self.time_on_air_us: Dict[int, int] = {}

    def limit_for(self, channel: int) -> Optional[float]:
        if not self.enabled:
            return None
        return self.plan.duty_cycle_limit(channel, self.limit, self.mesh_limit)

    def check(self, channel: int, airtime_us: int, now_us: int) -> DutyCycleResult:
        dwell = self.plan.dwell_time_s
        if dwell is not None and channel != MESH_CHANNEL and airtime_us > dwell * 1e6:
            return DwellExceeded(airtime_us=airtime_us, dwell_us=int(dwell * 1e6))
        if self.limit_for(channel) is None:
            return ALLOWED
        blocked = self._blocked_until.get(channel, 0)
        if now_us < blocked:
            return Deferred(until_us=blocked)
        return ALLOWED

    def record(self, channel: int, start_us: int, airtime_us: int) -> None:
        self.time_on_air_us[channel] = self.time_on_air_us.get(channel, 0) + airtime_us
        limit = self.limit_for(channel)
        if limit is None:
            return
        off_time = int(round(airtime_us * (1.0 / limit - 1.0)))
        self._blocked_until[channel] = start_us + airtime_us + off_time
