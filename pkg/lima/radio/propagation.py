"""
Log-distance path loss, noise floor and sensitivity.

PL0 is not a hidden constant: PathLossModel.calibrated() solves it so that the
anchor link (SF12, 14 dBm) closes at the anchor range, and check_range()
refuses any model whose anchor range falls outside the accepted band.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from lima.core.errors import CalibrationError
from lima.protocol.adr import REQUIRED_SNR

logger = logging.getLogger("Lima.Radio")

THERMAL_NOISE_DBM_HZ = -174.0


def noise_floor_dbm(bw_hz: int = 125000, noise_figure_db: float = 6.0) -> float:
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bw_hz) + noise_figure_db


def sensitivity_dbm(sf: int, bw_hz: int = 125000, noise_figure_db: float = 6.0) -> float:
    return noise_floor_dbm(bw_hz, noise_figure_db) + REQUIRED_SNR[sf]


@dataclass(frozen=True)
class PathLossModel:
    n: float = 3.76
    d0: float = 40.0
    pl0: float = 80.53
    bw_hz: int = 125000
    noise_figure_db: float = 6.0

    def path_loss_db(self, distance_m: float) -> float:
        distance_m = max(1.0, distance_m)
        return self.pl0 + 10.0 * self.n * math.log10(distance_m / self.d0)

    def rssi_dbm(self, tx_power_dbm: float, distance_m: float) -> float:
        return tx_power_dbm - self.path_loss_db(distance_m)

    @property
    def noise_floor(self) -> float:
        return noise_floor_dbm(self.bw_hz, self.noise_figure_db)

    def sensitivity(self, sf: int) -> float:
        return sensitivity_dbm(sf, self.bw_hz, self.noise_figure_db)

    def max_range_m(self, sf: int, tx_power_dbm: float) -> float:
        budget = tx_power_dbm - self.sensitivity(sf)
        return self.d0 * 10.0 ** ((budget - self.pl0) / (10.0 * self.n))

    def link_closes(self, sf: int, tx_power_dbm: float, distance_m: float) -> bool:
        return self.rssi_dbm(tx_power_dbm, distance_m) >= self.sensitivity(sf)

    def check_range(self, anchor_sf: int, anchor_tx_power_dbm: float, accepted_m: Sequence[float]) -> float:
        low, high = accepted_m
        reach = self.max_range_m(anchor_sf, anchor_tx_power_dbm)
        if not low <= reach <= high:
            raise CalibrationError(
                f"SF{anchor_sf} range at {anchor_tx_power_dbm} dBm is {reach:.0f} m, "
                f"outside [{low:.0f}, {high:.0f}] m"
            )
        return reach

    @classmethod
    def calibrated(
        cls,
        n: float = 3.76,
        d0: float = 40.0,
        pl0: Optional[float] = None,
        anchor_range_m: float = 3000.0,
        anchor_sf: int = 12,
        anchor_tx_power_dbm: float = 14.0,
        accepted_range_m: Sequence[float] = (2700.0, 3300.0),
        bw_hz: int = 125000,
        noise_figure_db: float = 6.0,
    ) -> "PathLossModel":
        if pl0 is None:
            budget = anchor_tx_power_dbm - sensitivity_dbm(anchor_sf, bw_hz, noise_figure_db)
            pl0 = budget - 10.0 * n * math.log10(anchor_range_m / d0)
        model = cls(n=n, d0=d0, pl0=pl0, bw_hz=bw_hz, noise_figure_db=noise_figure_db)
        reach = model.check_range(anchor_sf, anchor_tx_power_dbm, accepted_range_m)
        logger.debug("path loss PL0=%.2f dB, SF%d range %.0f m", pl0, anchor_sf, reach)
        return model

    @classmethod
    def from_config(cls, radio: dict) -> "PathLossModel":
        pl = radio.get("path_loss", {})
        return cls.calibrated(
            n=pl.get("n", 3.76),
            d0=pl.get("d0", 40.0),
            pl0=pl.get("pl0"),
            anchor_range_m=pl.get("anchor_range_m", 3000.0),
            anchor_sf=pl.get("anchor_sf", 12),
            anchor_tx_power_dbm=pl.get("anchor_tx_power_dbm", 14),
            accepted_range_m=tuple(pl.get("accepted_range_m", (2700.0, 3300.0))),
            bw_hz=radio.get("bw", 125000),
            noise_figure_db=radio.get("noise_figure", 6.0),
        )


def distance_m(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])
