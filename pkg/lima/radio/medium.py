"""
Shared radio medium.

A transmission interferes only with transmissions that overlap it in time on
the same channel at the same SF. The strongest survives when it clears the
summed interference power by the capture margin.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from lima.radio.airtime import LoraTxParams
from lima.radio.propagation import PathLossModel, distance_m

Position = Tuple[float, float]


@dataclass(frozen=True)
class TransmissionEvent:
    tx_node: int
    params: LoraTxParams
    start_us: int
    duration_us: int
    payload: bytes
    position: Position

    @property
    def end_us(self) -> int:
        return self.start_us + self.duration_us

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    def overlaps(self, other: "TransmissionEvent") -> bool:
        return self.start_us < other.end_us and other.start_us < self.end_us

    def interferes_with(self, other: "TransmissionEvent") -> bool:
        return (
            self is not other
            and self.params.channel == other.params.channel
            and self.params.sf == other.params.sf
            and self.overlaps(other)
        )


class LossReason(str, Enum):
    BELOW_SENSITIVITY = "BelowSensitivity"
    COLLISION = "Collision"
    HALF_DUPLEX = "HalfDuplex"
    NOT_LISTENING = "NotListening"


@dataclass(frozen=True)
class Received:
    rssi_dbm: float
    snr_db: float


@dataclass(frozen=True)
class Lost:
    reason: LossReason


Outcome = Union[Received, Lost]


def _dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


class RadioMedium:
    def __init__(
        self,
        path_loss: PathLossModel,
        capture_db: float = 6.0,
        shadowing_sigma_db: float = 0.0,
        rng: Optional[np.random.Generator] = None,
    ):
        self.path_loss = path_loss
        self.capture_db = capture_db
        self.shadowing_sigma_db = shadowing_sigma_db
        self.rng = rng

    def rssi(self, tx: TransmissionEvent, rx_position: Position) -> float:
        rssi = self.path_loss.rssi_dbm(tx.params.tx_power_dbm, distance_m(tx.position, rx_position))
        if self.shadowing_sigma_db > 0 and self.rng is not None:
            rssi += float(self.rng.normal(0.0, self.shadowing_sigma_db))
        return rssi

    def try_receive(
        self,
        tx: TransmissionEvent,
        rx_position: Position,
        concurrent: Iterable[TransmissionEvent] = (),
        rx_busy: bool = False,
    ) -> Outcome:
        if rx_busy:
            return Lost(LossReason.HALF_DUPLEX)
        rssi = self.rssi(tx, rx_position)
        if rssi < self.path_loss.sensitivity(tx.params.sf):
            return Lost(LossReason.BELOW_SENSITIVITY)

        interference_mw = sum(
            _dbm_to_mw(self.rssi(other, rx_position))
            for other in concurrent
            if other.interferes_with(tx)
        )
        if interference_mw > 0 and rssi - 10.0 * math.log10(interference_mw) < self.capture_db:
            return Lost(LossReason.COLLISION)
        return Received(rssi_dbm=rssi, snr_db=rssi - self.path_loss.noise_floor)
