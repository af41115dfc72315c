"""
LoRaWAN frame builders used by the simulated end devices and network server.

MICs are opaque 4-byte tags (a keyed BLAKE2s digest stands in for AES-CMAC);
nothing in lima verifies them.
"""

import hashlib
import struct
from dataclasses import dataclass
from typing import Optional

from lima.protocol.codec import LorawanMType

CID_LINK_ADR_REQ = 0x03
FCTRL_ADR = 0x80


def _mic(body: bytes, key: bytes = b"lima") -> bytes:
    return hashlib.blake2s(body, digest_size=4, key=key).digest()


def _mhdr(mtype: LorawanMType) -> bytes:
    # Major version 0 (LoRaWAN R1)
    return bytes([int(mtype) << 5])


def build_data_frame(
    mtype: LorawanMType,
    dev_addr: int,
    fcnt: int,
    fport: Optional[int] = None,
    payload: bytes = b"",
    adr: bool = False,
    fopts: bytes = b"",
) -> bytes:
    if len(fopts) > 15:
        raise ValueError("FOpts holds at most 15 bytes")
    fctrl = (FCTRL_ADR if adr else 0) | len(fopts)
    body = _mhdr(mtype) + struct.pack("<IBH", dev_addr & 0xFFFFFFFF, fctrl, fcnt & 0xFFFF) + fopts
    if fport is not None:
        body += bytes([fport]) + payload
    return body + _mic(body)


def build_uplink(dev_addr: int, fcnt: int, payload: bytes, fport: int = 1, adr: bool = True) -> bytes:
    return build_data_frame(LorawanMType.UNCONFIRMED_DATA_UP, dev_addr, fcnt, fport, payload, adr)


def build_downlink(dev_addr: int, fcnt: int, payload: bytes, fport: int = 0) -> bytes:
    return build_data_frame(LorawanMType.UNCONFIRMED_DATA_DOWN, dev_addr, fcnt, fport, payload)


def build_join_request(join_eui: int, dev_eui: int, dev_nonce: int) -> bytes:
    body = _mhdr(LorawanMType.JOIN_REQUEST) + struct.pack("<QQH", join_eui, dev_eui, dev_nonce & 0xFFFF)
    return body + _mic(body)


def build_join_accept(app_nonce: int, net_id: int, dev_addr: int) -> bytes:
    """17-byte JOIN-ACCEPT; the body is opaque on air (encrypted in a real network)."""
    body = _mhdr(LorawanMType.JOIN_ACCEPT)
    body += (app_nonce & 0xFFFFFF).to_bytes(3, "little") + (net_id & 0xFFFFFF).to_bytes(3, "little")
    body += struct.pack("<IBB", dev_addr & 0xFFFFFFFF, 0, 1)
    return body + _mic(body)


@dataclass(frozen=True)
class LinkAdrReq:
    dr_index: int
    power_index: int
    ch_mask: int = 0x00FF
    redundancy: int = 0x01

    def encode(self) -> bytes:
        return struct.pack(
            "<BBHB",
            CID_LINK_ADR_REQ,
            ((self.dr_index & 0x0F) << 4) | (self.power_index & 0x0F),
            self.ch_mask,
            self.redundancy,
        )

    @classmethod
    def parse(cls, frm_payload: bytes) -> Optional["LinkAdrReq"]:
        """First LinkADRReq in a port-0 MAC command payload, if any."""
        if len(frm_payload) < 5 or frm_payload[0] != CID_LINK_ADR_REQ:
            return None
        _, dr_tx, ch_mask, redundancy = struct.unpack_from("<BBHB", frm_payload)
        return cls(dr_index=dr_tx >> 4, power_index=dr_tx & 0x0F, ch_mask=ch_mask, redundancy=redundancy)
