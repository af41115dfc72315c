"""Chirp-modulation time on air."""

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class LoraTxParams:
    sf: int
    bw_hz: int = 125000
    cr: int = 1  # 4/(4+cr)
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    tx_power_dbm: int = 14
    channel: int = 0

    def __post_init__(self):
        if not 7 <= self.sf <= 12:
            raise ValueError(f"SF{self.sf} outside 7..12")
        if not 1 <= self.cr <= 4:
            raise ValueError(f"coding rate index {self.cr} outside 1..4")

    @property
    def low_data_rate_optimize(self) -> bool:
        return self.sf >= 11 and self.bw_hz == 125000


def symbol_time(sf: int, bw_hz: int = 125000) -> float:
    return (2 ** sf) / bw_hz


def payload_symbols(params: LoraTxParams, payload_len: int) -> int:
    de = 1 if params.low_data_rate_optimize else 0
    implicit = 0 if params.explicit_header else 1
    crc = 1 if params.crc_on else 0
    numerator = 8 * payload_len - 4 * params.sf + 28 + 16 * crc - 20 * implicit
    blocks = math.ceil(numerator / (4 * (params.sf - 2 * de)))
    return 8 + max(blocks * (params.cr + 4), 0)


def airtime(params: LoraTxParams, payload_len: int) -> float:
    """Seconds on air for a PHY payload of payload_len bytes."""
    if not 0 <= payload_len <= 255:
        raise ValueError(f"payload length {payload_len} outside 0..255")
    t_sym = symbol_time(params.sf, params.bw_hz)
    preamble = (params.preamble_symbols + 4.25) * t_sym
    return preamble + payload_symbols(params, payload_len) * t_sym


def airtime_us(params: LoraTxParams, payload_len: int) -> int:
    return int(round(airtime(params, payload_len) * 1e6))
