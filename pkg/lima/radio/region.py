"""
Regional parameter plans.

Two plans are modeled. US915 supplies the payload-cap arithmetic of the codec
(DR0..DR4). EU868 is the simulation default: SF7..SF12 at 125 kHz with duty
cycle limits and RX1 on the uplink frequency.

Channels are abstract integer ids. Uplink channels are 0..n-1; downlink-only
channels start at DOWNLINK_CHANNEL_BASE; the RX2/mesh channel is MESH_CHANNEL.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from lima.core.errors import UnknownDr

DOWNLINK_CHANNEL_BASE = 64
MESH_CHANNEL = 100


@dataclass(frozen=True)
class DataRate:
    index: int
    sf: int
    bw_hz: int
    max_mac_payload: int  # M
    max_app_payload: int  # N

    @property
    def name(self) -> str:
        return f"DR{self.index}"

    @property
    def lorawan_string(self) -> str:
        """Semtech packet-forwarder style "SF7BW125"."""
        return f"SF{self.sf}BW{self.bw_hz // 1000}"


@dataclass(frozen=True)
class RegionalPlan:
    name: str
    data_rates: Tuple[DataRate, ...]
    uplink_channels: int
    downlink_channels: Optional[int]  # None: RX1 reuses the uplink frequency
    duty_cycle: bool
    dwell_time_s: Optional[float]
    ed_max_power_dbm: int
    rx1_power_dbm: int
    rx2_power_dbm: int
    rx2_sf: int = 12
    receive_delay1_s: float = 1.0
    receive_delay2_s: float = 2.0
    join_accept_delay1_s: float = 5.0
    join_accept_delay2_s: float = 6.0

    def dr(self, index: int) -> DataRate:
        for rate in self.data_rates:
            if rate.index == index:
                return rate
        raise UnknownDr(f"{self.name} has no DR{index}")

    def dr_for_sf(self, sf: int, bw_hz: int = 125000) -> DataRate:
        for rate in self.data_rates:
            if rate.sf == sf and rate.bw_hz == bw_hz:
                return rate
        raise UnknownDr(f"{self.name} has no DR for SF{sf}/{bw_hz // 1000} kHz")

    def has_sf(self, sf: int) -> bool:
        return any(rate.sf == sf and rate.bw_hz == 125000 for rate in self.data_rates)

    @property
    def sf_ladder(self) -> Tuple[int, ...]:
        """125 kHz spreading factors from slowest to fastest."""
        return tuple(sorted({r.sf for r in self.data_rates if r.bw_hz == 125000}, reverse=True))

    def rx1_channel(self, uplink_channel: int) -> int:
        if self.downlink_channels is None:
            return uplink_channel
        return DOWNLINK_CHANNEL_BASE + uplink_channel % self.downlink_channels

    @property
    def rx2_channel(self) -> int:
        return MESH_CHANNEL

    @property
    def mesh_channel(self) -> int:
        return MESH_CHANNEL

    def duty_cycle_limit(self, channel: int, default: float, mesh: float) -> Optional[float]:
        """Fraction of airtime allowed on a channel, None when unrestricted."""
        if not self.duty_cycle:
            return None
        return mesh if channel == MESH_CHANNEL else default


US915 = RegionalPlan(
    name="US915",
    data_rates=(
        DataRate(0, 10, 125000, 19, 11),
        DataRate(1, 9, 125000, 61, 53),
        DataRate(2, 8, 125000, 133, 125),
        DataRate(3, 7, 125000, 250, 242),
        DataRate(4, 8, 500000, 250, 242),
    ),
    uplink_channels=8,
    downlink_channels=8,
    duty_cycle=False,
    dwell_time_s=0.4,
    ed_max_power_dbm=30,
    rx1_power_dbm=30,
    rx2_power_dbm=30,
)

EU868 = RegionalPlan(
    name="EU868",
    data_rates=(
        DataRate(0, 12, 125000, 59, 51),
        DataRate(1, 11, 125000, 59, 51),
        DataRate(2, 10, 125000, 59, 51),
        DataRate(3, 9, 125000, 123, 115),
        DataRate(4, 8, 125000, 250, 242),
        DataRate(5, 7, 125000, 250, 242),
    ),
    uplink_channels=8,
    downlink_channels=None,
    duty_cycle=True,
    dwell_time_s=None,
    ed_max_power_dbm=14,
    rx1_power_dbm=14,
    rx2_power_dbm=26,
)

PLANS: Dict[str, RegionalPlan] = {plan.name: plan for plan in (US915, EU868)}


def plan_by_name(name: str) -> RegionalPlan:
    try:
        return PLANS[name.upper()]
    except KeyError:
        raise KeyError(f"unknown regional plan {name!r}; known: {', '.join(PLANS)}") from None


def parse_dr_string(plan: RegionalPlan, value: str) -> DataRate:
    """Inverse of DataRate.lorawan_string ("SF7BW125")."""
    try:
        sf_part, bw_part = value.upper().removeprefix("SF").split("BW")
        return plan.dr_for_sf(int(sf_part), int(bw_part) * 1000)
    except ValueError:
        raise UnknownDr(f"cannot parse data rate {value!r}") from None
