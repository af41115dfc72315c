"""
Validated scenario and result models.

Scenario.from_config() turns the merged config dict (see lima.core.config)
into typed models; a validation failure becomes ConfigError.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from lima.core.config import DEFAULT_CONFIG, _merge_config
from lima.core.errors import ConfigError


class Mode(str, Enum):
    LIMA = "lima"
    BASELINE = "baseline"


class PathLossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: float = Field(3.76, gt=0)
    d0: float = Field(40.0, gt=0)
    pl0: Optional[float] = None
    anchor_range_m: float = Field(3000.0, gt=0)
    anchor_sf: int = Field(12, ge=7, le=12)
    anchor_tx_power_dbm: float = 14.0
    accepted_range_m: Tuple[float, float] = (2700.0, 3300.0)


class DutyCycleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    limit: float = Field(0.01, gt=0, le=1)
    mesh_limit: float = Field(0.10, gt=0, le=1)


class EnergyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    voltage: float = Field(3.3, gt=0)
    rx_ma: float = Field(11.0, ge=0)
    sleep_ua: float = Field(1.0, ge=0)
    tx_ma: Dict[int, float] = Field(default_factory=dict)
    tx_ma_step_above_20: float = 10.0


class RadioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bw: int = 125000
    cr: int = Field(1, ge=1, le=4)
    preamble: int = Field(8, ge=6)
    noise_figure: float = 6.0
    path_loss: PathLossConfig = Field(default_factory=PathLossConfig)
    shadowing_sigma_db: float = Field(0.0, ge=0)
    capture_db: float = 6.0
    duty_cycle: DutyCycleConfig = Field(default_factory=DutyCycleConfig)
    rx_window_symbols: int = Field(8, ge=1)
    energy: EnergyConfig = Field(default_factory=EnergyConfig)


class StpConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sf: int = Field(7, ge=7, le=12)
    tx_power_dbm: int = 26

    @field_validator("tx_power_dbm")
    @classmethod
    def _even_power(cls, v: int) -> int:
        if v % 2:
            raise ValueError("STP power must be even (TP codes carry 30 - 2*index)")
        return v


class ProtocolConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    protocol_version: int = Field(0, ge=0, le=7)
    rem_period_s: float = Field(600.0, gt=0)
    rem_jitter_s: float = Field(1.0, ge=0)
    route_ttl_factor: int = Field(3, ge=1)
    max_backups: int = Field(4, ge=0)
    stagger_window_s: float = Field(0.5, ge=0)
    processing_delay_s: float = Field(0.025, ge=0)
    dm_ttl_s: float = Field(3600.0, gt=0)
    dnof_ttl_factor: int = Field(3, ge=1)
    queue_ttl_factor: int = Field(2, ge=1)
    dedup_capacity: int = Field(256, ge=1)
    dedup_ttl_s: float = Field(600.0, gt=0)
    history_depth: int = Field(5, ge=1)
    device_margin_db: float = 10.0
    adr_resend_uplinks: int = Field(6, ge=1)
    stp: StpConfig = Field(default_factory=StpConfig)
    ed_max_power_dbm: int = 14
    ed_min_power_dbm: int = 2
    max_duty_defer_s: float = Field(30.0, ge=0)

    @property
    def route_ttl_s(self) -> float:
        return self.route_ttl_factor * self.rem_period_s

    @property
    def dnof_ttl_s(self) -> float:
        return self.dnof_ttl_factor * self.rem_period_s


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid")

    area_side_km: float = Field(6.0, gt=0)
    ed_density_per_km2: float = Field(1.0, ge=0)
    traffic_period_s: float = Field(1800.0, gt=0)
    sim_hours: float = Field(20.0, gt=0)
    packet_app_bytes: int = Field(40, ge=1, le=242)
    n_lg: int = Field(1, ge=1)
    seed: int = Field(1, ge=0)
    mode: Mode = Mode.LIMA
    adr_enabled: bool = True
    dnof_enabled: bool = True
    der_enabled: bool = True
    region: str = "EU868"
    min_lr_spacing_m: float = Field(1500.0, gt=0)
    ed_initial_sf: int = Field(12, ge=7, le=12)
    ed_count: Optional[int] = Field(None, ge=0)
    radio: RadioConfig = Field(default_factory=RadioConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)

    @field_validator("region")
    @classmethod
    def _known_region(cls, v: str) -> str:
        from lima.radio.region import PLANS

        if v.upper() not in PLANS:
            raise ValueError(f"unknown region {v!r}")
        return v.upper()

    @model_validator(mode="after")
    def _ed_count_default(self) -> "Scenario":
        if self.ed_count is None:
            self.ed_count = int(round(self.ed_density_per_km2 * self.area_side_km ** 2))
        return self

    @property
    def sim_seconds(self) -> float:
        return self.sim_hours * 3600.0

    @property
    def queue_ttl_s(self) -> float:
        return self.protocol.queue_ttl_factor * self.traffic_period_s

    @property
    def packets_per_hour(self) -> float:
        return 3600.0 / self.traffic_period_s

    @classmethod
    def from_config(cls, cfg: Optional[Dict[str, Any]] = None, **overrides: Any) -> "Scenario":
        cfg = _merge_config(DEFAULT_CONFIG, cfg or {})
        data = dict(cfg.get("scenario", {}))
        data.update({k: v for k, v in overrides.items() if v is not None})
        data["radio"] = cfg.get("radio", {})
        data["protocol"] = cfg.get("protocol", {})
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"invalid scenario: {e}") from e

    def with_overrides(self, **changes: Any) -> "Scenario":
        data = self.model_dump()
        data.update(changes)
        if ("area_side_km" in changes or "ed_density_per_km2" in changes) and "ed_count" not in changes:
            data["ed_count"] = None
        try:
            return type(self).model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"invalid scenario: {e}") from e


class Metrics(BaseModel):
    """One simulation run's results. Field order is the CSV column order."""

    mode: str
    area_side_km: float
    ed_count: int
    lr_count: int
    traffic_period_s: float
    packets_per_hour: float
    seed: int
    sim_hours: float
    pdr_percent: float
    energy_per_ed_j: float
    latency_ms_mean: Optional[float]
    energy_per_lr_j: float
    idle_energy_per_lr_j: float
    lr_power_w: float
    sent: int
    delivered: int
    in_flight: int
    lost: Dict[str, int] = Field(default_factory=dict)
    node_drops: Dict[str, int] = Field(default_factory=dict)
    lima_frames_tx: int = 0
    mean_final_sf: Optional[float] = None
    zero_packets: bool = False
    final_ed_settings: List[Tuple[int, int]] = Field(default_factory=list)
