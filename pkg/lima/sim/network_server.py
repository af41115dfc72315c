"""In-process network server: cross-gateway dedup, delivery bookkeeping and ADR."""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Set, Tuple

from lima.core.errors import UnknownDr
from lima.protocol.adr import NO_CHANGE, NsMetadata, ns_compute_adr
from lima.protocol.codec import LorawanFrameView
from lima.protocol.lorawan import LinkAdrReq, build_downlink
from lima.radio.region import RegionalPlan, parse_dr_string
from lima.sim.metrics import PacketLedger

logger = logging.getLogger("Lima.Sim")


@dataclass
class DeviceRecord:
    dev_addr: int
    power_dbm: int
    commanded: Optional[Tuple[int, int]] = None  # (DR index, power)
    fcnt_down: int = 0
    uplinks: int = 0
    unconfirmed: int = 0  # uplinks since the command that still report another DR


@dataclass(frozen=True)
class NsDownlink:
    payload: bytes
    dev_addr: int
    dr_index: int
    tx_power_dbm: int


class NetworkServer:
    def __init__(
        self,
        plan: RegionalPlan,
        adr_enabled: bool = True,
        device_margin_db: float = 10.0,
        min_power_dbm: int = 2,
        max_power_dbm: int = 14,
        adr_resend_uplinks: int = 6,
        ledger: Optional[PacketLedger] = None,
    ):
        self.plan = plan
        self.adr_enabled = adr_enabled
        self.device_margin_db = device_margin_db
        self.min_power_dbm = min_power_dbm
        self.max_power_dbm = max_power_dbm
        self.adr_resend_uplinks = adr_resend_uplinks
        self.ledger = ledger
        self.devices: Dict[int, DeviceRecord] = {}
        self._seen: Set[Tuple[int, int]] = set()
        self.duplicates = 0
        self.deliveries: Dict[Tuple[int, int], bytes] = {}

    def device(self, dev_addr: int) -> DeviceRecord:
        record = self.devices.get(dev_addr)
        if record is None:
            record = DeviceRecord(dev_addr=dev_addr, power_dbm=self.max_power_dbm)
            self.devices[dev_addr] = record
        return record

    def on_uplink(self, view: LorawanFrameView, metadata: NsMetadata, now_us: int) -> Optional[NsDownlink]:
        if view.dev_addr is None or view.fcnt is None:
            return None
        key = (view.dev_addr, view.fcnt)
        if key in self._seen:
            self.duplicates += 1
            return None
        self._seen.add(key)
        self.deliveries[key] = view.raw
        if self.ledger is not None:
            self.ledger.delivered(key, now_us)

        device = self.device(view.dev_addr)
        device.uplinks += 1
        if not (self.adr_enabled and view.adr):
            return None
        return self._adr(device, metadata)

    def _adr(self, device: DeviceRecord, metadata: NsMetadata) -> Optional[NsDownlink]:
        try:
            rate = parse_dr_string(self.plan, metadata.dr_string)
        except UnknownDr:
            logger.warning("NS: unusable data rate %r from gateway %04X", metadata.dr_string, metadata.gateway_id)
            return None
        if device.commanded is not None:
            if device.commanded[0] == rate.index:
                # The ED runs at the commanded DR, so it applied the commanded power too
                device.power_dbm = device.commanded[1]
                device.unconfirmed = 0
            else:
                device.unconfirmed += 1

        decision = ns_compute_adr(
            metadata.snr_db,
            rate,
            device.power_dbm,
            plan=self.plan,
            device_margin_db=self.device_margin_db,
            min_power_dbm=self.min_power_dbm,
            max_power_dbm=self.max_power_dbm,
        )
        if decision is NO_CHANGE:
            return None
        target = (decision.new_dr.index, decision.new_power_dbm)
        if target == device.commanded:
            if device.unconfirmed < self.adr_resend_uplinks:
                return None
            logger.info("NS: %08X still not at DR%d after %d uplinks, resending",
                        device.dev_addr, target[0], device.unconfirmed)

        device.commanded = target
        device.unconfirmed = 0
        req = LinkAdrReq(dr_index=target[0], power_index=(self.max_power_dbm - target[1]) // 2)
        payload = build_downlink(device.dev_addr, device.fcnt_down, req.encode(), fport=0)
        device.fcnt_down = (device.fcnt_down + 1) & 0xFFFF
        logger.debug("NS: LinkADRReq %08X -> DR%d/%d dBm", device.dev_addr, target[0], target[1])
        return NsDownlink(payload=payload, dev_addr=device.dev_addr, dr_index=rate.index, tx_power_dbm=target[1])
