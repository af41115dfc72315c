"""
LIMA frame codec
================

Bit-exact encoding and decoding of the LIMA encapsulation header, a minimal
read-only LoRaWAN PHYPayload view, encapsulation, and payload-cap arithmetic.

Header layout (network byte order):

    byte 0     [mtype=0b111 (3) | version (3) | header type (2)]
    bytes 1-2  source node id
    byte 3     sequence number
    bytes 4-5  sender node id
    byte 6     ED SNR, signed dB
    byte 7     ED SF
    byte 8     options length
    bytes 9..  options (data: 2-byte next-hop target; REM: RemOptions)

LoRaWAN frames never start with 0b111 (that MType is reserved for proprietary
messages), so the first three bits tell the two apart.
"""

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import List, NewType, Optional, Tuple, Union

from lima.core.errors import (
    CodecError,
    InvalidOptLen,
    MalformedLorawan,
    Truncated,
    UnknownDr,
)
from lima.radio.region import US915, DataRate, RegionalPlan

logger = logging.getLogger("Lima.Codec")

__all__ = [
    "CodecError", "InvalidOptLen", "Truncated", "MalformedLorawan", "UnknownDr",
    "LimaNodeId", "HeaderType", "LorawanMType", "LimaPrefix", "LimaHeader", "RemOptions",
    "LorawanFrameView", "TransmissionProfile", "EdFrame", "LimaFrame",
    "derive_node_id", "encode_header", "decode", "encapsulate", "decapsulate",
    "max_app_payload", "validate_ingress", "quantize_snr", "format_frame",
    "Unsupported", "UNSUPPORTED", "Ingress",
]

LimaNodeId = NewType("LimaNodeId", int)

LIMA_MTYPE = 0b111
HEADER_LEN = 9
DATA_OPT_LEN = 2
DATA_OVERHEAD = HEADER_LEN + DATA_OPT_LEN
REM_FIXED_LEN = 3
DEVADDR_LEN = 4
MAX_OPT_LEN = 0xFF
COST_MAX = 0xFFFF

MHDR_LEN = 1
MIC_LEN = 4
FHDR_MIN_LEN = 7
JOIN_REQUEST_LEN = 23
MIN_DATA_FRAME_LEN = MHDR_LEN + FHDR_MIN_LEN + MIC_LEN

_HEADER = struct.Struct(">BHBHbBB")


class HeaderType(IntEnum):
    UPLINK_DATA = 0
    DOWNLINK_DATA = 1
    REM = 2
    RESERVED = 3

    @property
    def label(self) -> str:
        return {0: "UplinkData", 1: "DownlinkData", 2: "Rem", 3: "Reserved"}[self.value]


class LorawanMType(IntEnum):
    JOIN_REQUEST = 0
    JOIN_ACCEPT = 1
    UNCONFIRMED_DATA_UP = 2
    UNCONFIRMED_DATA_DOWN = 3
    CONFIRMED_DATA_UP = 4
    CONFIRMED_DATA_DOWN = 5
    REJOIN_REQUEST = 6
    PROPRIETARY = 7

    @property
    def label(self) -> str:
        return "".join(part.capitalize() for part in self.name.split("_"))

    @property
    def is_uplink(self) -> bool:
        return self in _UPLINK_MTYPES

    @property
    def is_data(self) -> bool:
        return self in _DATA_MTYPES


_UPLINK_MTYPES = frozenset({
    LorawanMType.JOIN_REQUEST,
    LorawanMType.UNCONFIRMED_DATA_UP,
    LorawanMType.CONFIRMED_DATA_UP,
    LorawanMType.REJOIN_REQUEST,
})
_DATA_MTYPES = frozenset({
    LorawanMType.UNCONFIRMED_DATA_UP,
    LorawanMType.UNCONFIRMED_DATA_DOWN,
    LorawanMType.CONFIRMED_DATA_UP,
    LorawanMType.CONFIRMED_DATA_DOWN,
})


class Unsupported(Enum):
    """Returned by max_app_payload when LIMA cannot carry a data rate."""
    UNSUPPORTED = "Unsupported"

    def __repr__(self) -> str:
        return "Unsupported"


UNSUPPORTED = Unsupported.UNSUPPORTED


class Ingress(Enum):
    OK = "ok"
    TOO_LARGE = "TooLarge"


# =============================================================================
# Identifiers and profiles
# =============================================================================

def derive_node_id(eui: bytes) -> LimaNodeId:
    """XOR-fold the four big-endian 16-bit words of an 8-byte EUI."""
    if len(eui) != 8:
        raise ValueError(f"EUI must be 8 bytes, got {len(eui)}")
    words = struct.unpack(">4H", bytes(eui))
    node_id = 0
    for word in words:
        node_id ^= word
    return LimaNodeId(node_id)


def quantize_snr(snr_db: float) -> int:
    """Signed integer dB clamped to one byte."""
    return max(-128, min(127, int(math.floor(snr_db + 0.5))))


@dataclass(frozen=True)
class TransmissionProfile:
    sf: int
    tx_power_dbm: int
    bandwidth_khz: int = 125

    def higher_than(self, other: "TransmissionProfile") -> bool:
        return self.sf > other.sf or self.tx_power_dbm > other.tx_power_dbm

    def at_or_below(self, other: "TransmissionProfile") -> bool:
        return self.sf <= other.sf and self.tx_power_dbm <= other.tx_power_dbm

    def to_code(self) -> int:
        """[sf-7 (3) | 500 kHz flag (1) | power index (4)], power = 30 - 2*index."""
        if not 7 <= self.sf <= 12:
            raise ValueError(f"SF{self.sf} outside 7..12")
        index = max(0, min(15, (30 - self.tx_power_dbm + 1) // 2))
        wide = 1 if self.bandwidth_khz == 500 else 0
        return ((self.sf - 7) << 5) | (wide << 4) | index

    @classmethod
    def from_code(cls, code: int) -> "TransmissionProfile":
        sf = 7 + ((code >> 5) & 0x07)
        bw = 500 if (code >> 4) & 0x01 else 125
        return cls(sf=sf, tx_power_dbm=30 - 2 * (code & 0x0F), bandwidth_khz=bw)


# =============================================================================
# LIMA header
# =============================================================================

@dataclass(frozen=True)
class LimaPrefix:
    header_type: HeaderType
    protocol_version: int = 0
    mtype_indicator: int = LIMA_MTYPE

    def to_byte(self) -> int:
        if not 0 <= self.protocol_version <= 0b111:
            raise ValueError(f"protocol version {self.protocol_version} does not fit 3 bits")
        return (self.mtype_indicator << 5) | (self.protocol_version << 2) | int(self.header_type)

    @classmethod
    def from_byte(cls, value: int) -> "LimaPrefix":
        return cls(
            header_type=HeaderType(value & 0b11),
            protocol_version=(value >> 2) & 0b111,
            mtype_indicator=(value >> 5) & 0b111,
        )


@dataclass(frozen=True)
class LimaHeader:
    prefix: LimaPrefix
    source: int
    seq: int
    sender: int
    ed_snr: int = 0
    ed_sf: int = 7
    options: bytes = b""

    @property
    def header_type(self) -> HeaderType:
        return self.prefix.header_type

    @property
    def opt_len(self) -> int:
        return len(self.options)

    @property
    def encoded_len(self) -> int:
        return HEADER_LEN + self.opt_len

    @property
    def target(self) -> Optional[int]:
        """Next-hop target of a data header."""
        if self.header_type in (HeaderType.UPLINK_DATA, HeaderType.DOWNLINK_DATA) and self.opt_len == DATA_OPT_LEN:
            return int.from_bytes(self.options, "big")
        return None

    def rem_options(self) -> "RemOptions":
        if self.header_type != HeaderType.REM:
            raise CodecError(f"{self.header_type.label} header carries no REM options")
        return RemOptions.decode(self.options)

    def with_hop(self, sender: int, target: Optional[int] = None) -> "LimaHeader":
        """Copy with a new sender and, for data headers, a new target."""
        options = self.options if target is None else target.to_bytes(2, "big")
        return replace(self, sender=sender, options=options)

    @classmethod
    def data(
        cls,
        header_type: HeaderType,
        source: int,
        seq: int,
        target: int,
        ed_snr: int = 0,
        ed_sf: int = 7,
        version: int = 0,
    ) -> "LimaHeader":
        return cls(
            prefix=LimaPrefix(header_type, version),
            source=source,
            seq=seq & 0xFF,
            sender=source,
            ed_snr=ed_snr,
            ed_sf=ed_sf,
            options=target.to_bytes(2, "big"),
        )

    @classmethod
    def rem(cls, source: int, seq: int, sender: int, options: "RemOptions", version: int = 0) -> "LimaHeader":
        return cls(
            prefix=LimaPrefix(HeaderType.REM, version),
            source=source,
            seq=seq & 0xFF,
            sender=sender,
            options=options.encode(),
        )


@dataclass(frozen=True)
class RemOptions:
    tp_code: int
    cost_from_source: int
    direct_receivables: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return REM_FIXED_LEN + DEVADDR_LEN * len(self.direct_receivables)

    def encode(self) -> bytes:
        cost = max(0, min(COST_MAX, self.cost_from_source))
        out = bytearray(struct.pack(">BH", self.tp_code & 0xFF, cost))
        for dev_addr in self.direct_receivables:
            out += struct.pack(">I", dev_addr & 0xFFFFFFFF)
        return bytes(out)

    @classmethod
    def decode(cls, options: bytes) -> "RemOptions":
        if len(options) < REM_FIXED_LEN or (len(options) - REM_FIXED_LEN) % DEVADDR_LEN:
            raise InvalidOptLen(f"REM options of {len(options)} bytes")
        tp_code, cost = struct.unpack_from(">BH", options)
        count = (len(options) - REM_FIXED_LEN) // DEVADDR_LEN
        receivables = struct.unpack_from(f">{count}I", options, REM_FIXED_LEN) if count else ()
        return cls(tp_code=tp_code, cost_from_source=cost, direct_receivables=tuple(receivables))

    @staticmethod
    def capacity(max_bytes: int) -> int:
        """How many receivables fit when the options may use max_bytes."""
        return max(0, (max_bytes - REM_FIXED_LEN) // DEVADDR_LEN)


def saturating_add(cost: int, step: int) -> int:
    return max(0, min(COST_MAX, cost + step))


def _check_options(header_type: HeaderType, options: bytes) -> None:
    if len(options) > MAX_OPT_LEN:
        raise InvalidOptLen(f"options of {len(options)} bytes exceed one length byte")
    if header_type in (HeaderType.UPLINK_DATA, HeaderType.DOWNLINK_DATA):
        if len(options) != DATA_OPT_LEN:
            raise InvalidOptLen(f"{header_type.label} needs {DATA_OPT_LEN} option bytes, got {len(options)}")
    elif header_type == HeaderType.REM:
        if len(options) < REM_FIXED_LEN or (len(options) - REM_FIXED_LEN) % DEVADDR_LEN:
            raise InvalidOptLen(f"REM options of {len(options)} bytes")


def encode_header(h: LimaHeader) -> bytes:
    _check_options(h.header_type, h.options)
    if h.prefix.mtype_indicator != LIMA_MTYPE:
        raise CodecError("LIMA prefix must carry MType 0b111")
    fixed = _HEADER.pack(
        h.prefix.to_byte(),
        h.source & 0xFFFF,
        h.seq & 0xFF,
        h.sender & 0xFFFF,
        quantize_snr(h.ed_snr),
        h.ed_sf & 0xFF,
        len(h.options),
    )
    return fixed + bytes(h.options)


# =============================================================================
# LoRaWAN view
# =============================================================================

@dataclass(frozen=True)
class LorawanFrameView:
    mtype: LorawanMType
    raw: bytes
    mic: bytes
    dev_addr: Optional[int] = None
    dev_eui: Optional[int] = None
    fcnt: Optional[int] = None
    fctrl: int = 0
    fport: Optional[int] = None
    frm_payload: bytes = b""

    @property
    def mac_payload_len(self) -> int:
        return len(self.raw) - MHDR_LEN - MIC_LEN

    @property
    def adr(self) -> bool:
        return bool(self.fctrl & 0x80)

    @property
    def device_key(self) -> Optional[Tuple[str, int]]:
        """Downlink routing key: DevEUI for JOIN-REQUEST, DevAddr otherwise."""
        if self.mtype == LorawanMType.JOIN_REQUEST:
            return ("eui", self.dev_eui)
        if self.dev_addr is not None:
            return ("addr", self.dev_addr)
        return None

    @property
    def dedup_key(self) -> Tuple:
        key = self.device_key
        return (key, self.fcnt, self.mic)


def _parse_lorawan(payload: bytes) -> LorawanFrameView:
    if len(payload) < MHDR_LEN + MIC_LEN:
        raise MalformedLorawan(f"{len(payload)} bytes is below MHDR+MIC")
    mtype = LorawanMType(payload[0] >> 5)
    mic = payload[-MIC_LEN:]

    if mtype == LorawanMType.JOIN_REQUEST:
        if len(payload) != JOIN_REQUEST_LEN:
            raise MalformedLorawan(f"JOIN-REQUEST must be {JOIN_REQUEST_LEN} bytes, got {len(payload)}")
        dev_eui = int.from_bytes(payload[9:17], "little")
        return LorawanFrameView(mtype=mtype, raw=payload, mic=mic, dev_eui=dev_eui)

    if mtype.is_data:
        if len(payload) < MIN_DATA_FRAME_LEN:
            raise MalformedLorawan(f"data frame of {len(payload)} bytes is below {MIN_DATA_FRAME_LEN}")
        dev_addr, fctrl, fcnt = struct.unpack_from("<IBH", payload, MHDR_LEN)
        fopts_end = MHDR_LEN + FHDR_MIN_LEN + (fctrl & 0x0F)
        if fopts_end > len(payload) - MIC_LEN:
            raise MalformedLorawan("FOptsLen runs past the MIC")
        fport = None
        frm_payload = b""
        if fopts_end < len(payload) - MIC_LEN:
            fport = payload[fopts_end]
            frm_payload = payload[fopts_end + 1:-MIC_LEN]
        return LorawanFrameView(
            mtype=mtype,
            raw=payload,
            mic=mic,
            dev_addr=dev_addr,
            fcnt=fcnt,
            fctrl=fctrl,
            fport=fport,
            frm_payload=frm_payload,
        )

    # JOIN-ACCEPT is encrypted, rejoin/proprietary are opaque
    return LorawanFrameView(mtype=mtype, raw=payload, mic=mic)


# =============================================================================
# Frames
# =============================================================================

@dataclass(frozen=True)
class EdFrame:
    view: LorawanFrameView


@dataclass(frozen=True)
class LimaFrame:
    header: LimaHeader
    inner: bytes


DecodedFrame = Union[EdFrame, LimaFrame]


def decode(payload: bytes) -> DecodedFrame:
    payload = bytes(payload)
    if not payload:
        raise Truncated("empty payload")
    if payload[0] >> 5 != LIMA_MTYPE:
        return EdFrame(_parse_lorawan(payload))

    if len(payload) < HEADER_LEN:
        raise Truncated(f"LIMA frame of {len(payload)} bytes is below the {HEADER_LEN}-byte header")
    prefix_byte, source, seq, sender, ed_snr, ed_sf, opt_len = _HEADER.unpack_from(payload)
    if len(payload) < HEADER_LEN + opt_len:
        raise Truncated(f"LIMA frame of {len(payload)} bytes, header claims {HEADER_LEN + opt_len}")
    prefix = LimaPrefix.from_byte(prefix_byte)
    options = payload[HEADER_LEN:HEADER_LEN + opt_len]
    _check_options(prefix.header_type, options)
    header = LimaHeader(
        prefix=prefix,
        source=source,
        seq=seq,
        sender=sender,
        ed_snr=ed_snr,
        ed_sf=ed_sf,
        options=options,
    )
    return LimaFrame(header=header, inner=payload[HEADER_LEN + opt_len:])


def encapsulate(inner: bytes, h: LimaHeader) -> bytes:
    return encode_header(h) + bytes(inner)


def decapsulate(frame: bytes) -> Tuple[LimaHeader, bytes]:
    decoded = decode(frame)
    if not isinstance(decoded, LimaFrame):
        raise CodecError("not a LIMA frame")
    return decoded.header, decoded.inner


# =============================================================================
# Payload caps
# =============================================================================

def _resolve_dr(dr: Union[int, DataRate], plan: RegionalPlan) -> DataRate:
    if isinstance(dr, DataRate):
        return dr
    return plan.dr(dr)


def max_app_payload(dr: Union[int, DataRate], lima: bool, plan: RegionalPlan = US915) -> Union[int, Unsupported]:
    """Largest application payload at a data rate, with or without the 11-byte LIMA overhead."""
    rate = _resolve_dr(dr, plan)
    if not lima:
        return rate.max_app_payload
    cap = rate.max_app_payload - DATA_OVERHEAD
    if cap <= 0:
        return UNSUPPORTED
    return cap


def validate_ingress(frame: LorawanFrameView, dr: Union[int, DataRate], plan: RegionalPlan = US915) -> Ingress:
    rate = _resolve_dr(dr, plan)
    if frame.mac_payload_len <= rate.max_mac_payload - HEADER_LEN:
        return Ingress.OK
    logger.debug("ingress too large: %d bytes at %s", frame.mac_payload_len, rate.name)
    return Ingress.TOO_LARGE


# =============================================================================
# Inspection
# =============================================================================

def format_frame(decoded: DecodedFrame) -> List[str]:
    """Summary line followed by one name=value line per field."""
    if isinstance(decoded, LimaFrame):
        h = decoded.header
        summary = f"LIMA {h.header_type.label}, src=0x{h.source:04X}, seq={h.seq}"
        if h.target is not None:
            summary += f", target=0x{h.target:04X}"
        lines = [
            summary,
            f"mtype=0b{h.prefix.mtype_indicator:03b}",
            f"version={h.prefix.protocol_version}",
            f"header_type={h.header_type.label}",
            f"source=0x{h.source:04X}",
            f"seq={h.seq}",
            f"sender=0x{h.sender:04X}",
            f"ed_snr={h.ed_snr}",
            f"ed_sf={h.ed_sf}",
            f"opt_len={h.opt_len}",
        ]
        if h.target is not None:
            lines.append(f"target=0x{h.target:04X}")
        if h.header_type == HeaderType.REM:
            rem = h.rem_options()
            tp = TransmissionProfile.from_code(rem.tp_code)
            lines.append(f"tp=SF{tp.sf}/{tp.bandwidth_khz}kHz/{tp.tx_power_dbm}dBm")
            lines.append(f"cost_from_source={rem.cost_from_source}")
            lines.append("direct_receivables=" + ",".join(f"{a:08X}" for a in rem.direct_receivables))
        lines.append(f"inner_len={len(decoded.inner)}")
        if decoded.inner:
            lines.append(f"inner={decoded.inner.hex().upper()}")
        return lines

    view = decoded.view
    summary = f"LoRaWAN {view.mtype.label}"
    if view.dev_addr is not None:
        summary += f", DevAddr={view.dev_addr:08X}"
    if view.dev_eui is not None:
        summary += f", DevEUI={view.dev_eui:016X}"
    lines = [summary, f"mtype={view.mtype.label}", f"length={len(view.raw)}"]
    if view.dev_addr is not None:
        lines.append(f"dev_addr={view.dev_addr:08X}")
        lines.append(f"fctrl=0x{view.fctrl:02X}")
        lines.append(f"fcnt={view.fcnt}")
        if view.fport is not None:
            lines.append(f"fport={view.fport}")
        lines.append(f"frm_payload_len={len(view.frm_payload)}")
    if view.dev_eui is not None:
        lines.append(f"dev_eui={view.dev_eui:016X}")
    lines.append(f"mic={view.mic.hex().upper()}")
    return lines
