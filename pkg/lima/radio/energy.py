"""Per-node energy ledger."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Mapping, Optional

DEFAULT_TX_MA: Dict[int, float] = {
    2: 24.0, 4: 25.0, 6: 28.0, 8: 32.0, 10: 38.0,
    12: 44.0, 14: 52.0, 16: 70.0, 18: 90.0, 20: 120.0,
}


class Phase(str, Enum):
    TX = "tx"
    RX_LISTEN = "rx_listen"
    SLEEP = "sleep"
    IDLE_LISTEN = "idle_listen"


@dataclass(frozen=True)
class EnergyModel:
    voltage: float = 3.3
    rx_ma: float = 11.0
    sleep_ua: float = 1.0
    tx_ma: Mapping[int, float] = field(default_factory=lambda: dict(DEFAULT_TX_MA))
    tx_ma_step_above_20: float = 10.0

    def tx_current_ma(self, tx_power_dbm: float) -> float:
        table = {int(k): float(v) for k, v in self.tx_ma.items()}
        powers = sorted(table)
        top = powers[-1]
        if tx_power_dbm >= top:
            return table[top] + self.tx_ma_step_above_20 * (tx_power_dbm - top) / 2.0
        if tx_power_dbm <= powers[0]:
            return table[powers[0]]
        for low, high in zip(powers, powers[1:]):
            if low <= tx_power_dbm <= high:
                frac = (tx_power_dbm - low) / (high - low)
                return table[low] + frac * (table[high] - table[low])
        raise AssertionError("unreachable")

    def current_ma(self, phase: Phase, tx_power_dbm: Optional[float] = None) -> float:
        if phase == Phase.TX:
            if tx_power_dbm is None:
                raise ValueError("TX energy needs a power level")
            return self.tx_current_ma(tx_power_dbm)
        if phase == Phase.SLEEP:
            return self.sleep_ua / 1000.0
        return self.rx_ma

    @classmethod
    def from_config(cls, energy: Mapping) -> "EnergyModel":
        return cls(
            voltage=energy.get("voltage", 3.3),
            rx_ma=energy.get("rx_ma", 11.0),
            sleep_ua=energy.get("sleep_ua", 1.0),
            tx_ma={int(k): float(v) for k, v in (energy.get("tx_ma") or DEFAULT_TX_MA).items()},
            tx_ma_step_above_20=energy.get("tx_ma_step_above_20", 10.0),
        )


class EnergyLedger:
    """Joules per phase. Phases only ever grow."""

    def __init__(self, model: EnergyModel):
        self.model = model
        self.joules: Dict[Phase, float] = {phase: 0.0 for phase in Phase}
        self.seconds: Dict[Phase, float] = {phase: 0.0 for phase in Phase}

    def account_energy(self, phase: Phase, duration_s: float, tx_power_dbm: Optional[float] = None) -> float:
        if duration_s < 0:
            raise ValueError(f"negative duration {duration_s}")
        joules = self.model.current_ma(phase, tx_power_dbm) / 1000.0 * self.model.voltage * duration_s
        self.joules[phase] += joules
        self.seconds[phase] += duration_s
        return joules

    def close(self, total_s: float, remainder: Phase) -> None:
        """Charge the time not spent in TX or RX to the remainder phase."""
        busy = self.seconds[Phase.TX] + self.seconds[Phase.RX_LISTEN]
        spare = total_s - busy - self.seconds[remainder]
        if spare > 0:
            self.account_energy(remainder, spare)

    @property
    def total(self) -> float:
        return sum(self.joules.values())

    @property
    def forwarding(self) -> float:
        return self.joules[Phase.TX] + self.joules[Phase.RX_LISTEN]

    def to_dict(self) -> Dict[str, float]:
        return {phase.value: self.joules[phase] for phase in Phase}
