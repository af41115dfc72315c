"""
Simulated nodes.

EndDevice is a class-A LoRaWAN device with ADR. Relay and Gateway wrap the
protocol engine (RouterForwarder / GatewayForwarder) and turn its actions into
radio activity through the owning Simulation.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np

from lima.core.errors import CodecError
from lima.protocol.adr import SnrHistory
from lima.protocol.codec import (
    EdFrame,
    HeaderType,
    LimaFrame,
    LorawanFrameView,
    TransmissionProfile,
    decode,
    encapsulate,
    encode_header,
)
from lima.protocol.forwarding import (
    DeliverToLg,
    DirectTx,
    Drop,
    DropReason,
    ExitToEd,
    Forward,
    ForwardingConfig,
    ForwardRewritten,
    GatewayForwarder,
    PendingStagger,
    RouterForwarder,
    ScheduleStagger,
    Tunnel,
    TxAt,
)
from lima.protocol.lorawan import LinkAdrReq, build_uplink
from lima.protocol.routing import RemDecision, RoutingEngine
from lima.radio.airtime import LoraTxParams, airtime_us, symbol_time
from lima.radio.duty_cycle import DutyCycleTracker
from lima.radio.energy import EnergyLedger, Phase
from lima.radio.medium import Received, TransmissionEvent
from lima.radio.region import DataRate
from lima.sim.engine import Priority, to_s, to_us
from lima.sim.metrics import PacketKey

if TYPE_CHECKING:
    from lima.sim.simulation import Simulation

logger = logging.getLogger("Lima.Sim")

DEV_ADDR_BASE = 0x26000000


def packet_key(view: LorawanFrameView) -> Optional[PacketKey]:
    if view.dev_addr is None or view.fcnt is None or not view.mtype.is_uplink:
        return None
    return (view.dev_addr, view.fcnt)


@dataclass
class OutgoingFrame:
    params: LoraTxParams
    payload: bytes
    packet: Optional[PacketKey]
    target: Optional[int]
    first_try_us: int


class Node:
    kind = "node"

    def __init__(self, sim: "Simulation", index: int, node_id: int, position: Tuple[float, float]):
        self.sim = sim
        self.index = index
        self.node_id = node_id
        self.position = position
        self.energy = EnergyLedger(sim.energy_model)
        dc = sim.scenario.radio.duty_cycle
        self.duty = DutyCycleTracker(sim.plan, enabled=dc.enabled, limit=dc.limit, mesh_limit=dc.mesh_limit)
        self.tx_until_us = 0
        self._tx_intervals: List[Tuple[int, int]] = []
        self.tx_count = 0
        self.online = True

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.node_id:04X})"

    def busy(self, now_us: int) -> bool:
        return now_us < self.tx_until_us

    def note_tx(self, start_us: int, end_us: int) -> None:
        self.tx_until_us = end_us
        self.tx_count += 1
        self._tx_intervals.append((start_us, end_us))
        if len(self._tx_intervals) > 16:
            del self._tx_intervals[:-16]

    def transmitted_during(self, start_us: int, end_us: int) -> bool:
        return any(s < end_us and start_us < e for s, e in self._tx_intervals)

    def listens(self, tx: TransmissionEvent) -> bool:
        return True

    def on_receive(self, tx: TransmissionEvent, outcome: Received, packet: Optional[PacketKey]) -> None:
        raise NotImplementedError

    # -------------------------------------------------------------------------
    # Queued transmissions (duty cycle and half duplex respected)
    # -------------------------------------------------------------------------

    def queue_tx(self, params: LoraTxParams, payload: bytes, delay_us: int = 0,
                 packet: Optional[PacketKey] = None, target: Optional[int] = None) -> None:
        item = OutgoingFrame(params, payload, packet, target, self.sim.queue.now_us + delay_us)
        self.sim.queue.after(delay_us, Priority.TX_START, self._attempt_tx, item, packet=packet)

    def _attempt_tx(self, item: OutgoingFrame) -> None:
        if not self.online:
            return
        now = self.sim.queue.now_us
        result = self.sim.transmit(self, item.params, item.payload, packet=item.packet, target=item.target)
        if result is None:
            return
        retry_at = result
        max_defer = to_us(self.sim.scenario.protocol.max_duty_defer_s)
        if retry_at is False or retry_at - item.first_try_us > max_defer:
            self.sim.ledger.lost(item.packet, "DutyCycle")
            self.sim.count_drop("DutyCycle")
            self.sim.trace.emit("drop", now, node=self.node_id, reason="DutyCycle")
            return
        self.sim.queue.schedule(retry_at, Priority.TX_START, self._attempt_tx, item, packet=item.packet)


class EndDevice(Node):
    kind = "ed"

    def __init__(self, sim: "Simulation", index: int, position: Tuple[float, float],
                 rng: np.random.Generator, allowed_drs: List[DataRate], initial_dr: DataRate):
        super().__init__(sim, index, DEV_ADDR_BASE + index, position)
        self.dev_addr = DEV_ADDR_BASE + index
        self.rng = rng
        self.allowed = {dr.index: dr for dr in allowed_drs}
        self.dr = initial_dr
        self.power_dbm = sim.scenario.protocol.ed_max_power_dbm
        self.fcnt = 0
        self.period_us = to_us(sim.scenario.traffic_period_s)
        self._windows: List[Tuple[int, int, int, int, str]] = []
        self._rx1_hit = False
        self.downlinks = 0

    def start(self) -> None:
        phase = int(self.rng.integers(0, self.period_us))
        self.sim.queue.schedule(phase, Priority.TIMER, self._uplink)

    def _uplink(self) -> None:
        now = self.sim.queue.now_us
        self.sim.queue.schedule(now + self.period_us, Priority.TIMER, self._uplink)
        payload = self.rng.bytes(self.sim.scenario.packet_app_bytes)
        frame = build_uplink(self.dev_addr, self.fcnt, payload, fport=1, adr=self.sim.scenario.adr_enabled)
        key = (self.dev_addr, self.fcnt)
        self.fcnt = (self.fcnt + 1) & 0xFFFF
        channel = int(self.rng.integers(self.sim.plan.uplink_channels))
        params = self.sim.tx_params(self.dr.sf, self.power_dbm, channel)
        self.sim.ledger.sent(key, self.index, now, airtime_us(params, len(frame)))
        self.queue_tx(params, frame, packet=key)

    def on_tx_end(self, tx: TransmissionEvent) -> None:
        plan = self.sim.plan
        end = tx.end_us
        rx1 = end + to_us(plan.receive_delay1_s)
        rx2 = end + to_us(plan.receive_delay2_s)
        symbols = self.sim.scenario.radio.rx_window_symbols
        rx1_len = to_us(symbols * symbol_time(tx.params.sf))
        rx2_len = to_us(symbols * symbol_time(plan.rx2_sf))
        self._windows = [
            (rx1, rx1_len, plan.rx1_channel(tx.params.channel), tx.params.sf, "RX1"),
            (rx2, rx2_len, plan.rx2_channel, plan.rx2_sf, "RX2"),
        ]
        self._rx1_hit = False
        self.sim.queue.schedule(rx1, Priority.RX_WINDOW, self._open_window, "RX1", rx1_len)
        self.sim.queue.schedule(rx2, Priority.RX_WINDOW, self._open_window, "RX2", rx2_len)

    def _open_window(self, name: str, length_us: int) -> None:
        if name == "RX2" and self._rx1_hit:
            return
        self.energy.account_energy(Phase.RX_LISTEN, to_s(length_us))

    def _window_for(self, tx: TransmissionEvent) -> Optional[Tuple[int, int, int, int, str]]:
        for window in self._windows:
            opens, length, channel, sf, name = window
            if name == "RX2" and self._rx1_hit:
                continue
            if tx.params.channel == channel and tx.params.sf == sf and opens <= tx.start_us <= opens + length:
                return window
        return None

    def listens(self, tx: TransmissionEvent) -> bool:
        return self._window_for(tx) is not None

    def on_receive(self, tx: TransmissionEvent, outcome: Received, packet: Optional[PacketKey]) -> None:
        window = self._window_for(tx)
        if window is None:
            return
        opens, length, _, _, name = window
        extra = tx.end_us - (opens + length)
        if extra > 0:
            self.energy.account_energy(Phase.RX_LISTEN, to_s(extra))
        try:
            decoded = decode(tx.payload)
        except CodecError:
            return
        if not isinstance(decoded, EdFrame) or decoded.view.dev_addr != self.dev_addr:
            return
        if decoded.view.mtype.is_uplink:
            return
        if name == "RX1":
            self._rx1_hit = True
        self.downlinks += 1
        self.sim.on_ed_downlink(self, tx, name)
        if decoded.view.fport == 0:
            req = LinkAdrReq.parse(decoded.view.frm_payload)
            if req is not None:
                self.apply_link_adr(req)

    def apply_link_adr(self, req: LinkAdrReq) -> None:
        rate = self.allowed.get(req.dr_index)
        if rate is not None:
            self.dr = rate
        protocol = self.sim.scenario.protocol
        power = protocol.ed_max_power_dbm - 2 * req.power_index
        self.power_dbm = max(protocol.ed_min_power_dbm, min(protocol.ed_max_power_dbm, power))
        self.sim.trace.emit("adr", self.sim.queue.now_us, node=self.node_id, sf=self.dr.sf, power=self.power_dbm)

    @property
    def sf(self) -> int:
        return self.dr.sf


class _LimaNode(Node):
    """Shared LR/LG behaviour: receive-window exit and mesh transmissions."""

    forwarder = None

    def mesh_params(self) -> LoraTxParams:
        stp = self.sim.stp
        return self.sim.tx_params(stp.sf, stp.tx_power_dbm, self.sim.plan.mesh_channel)

    def relay(self, frame: LimaFrame, packet: Optional[PacketKey], extra_delay_us: int = 0) -> None:
        payload = encapsulate(frame.inner, frame.header)
        self.queue_tx(
            self.mesh_params(),
            payload,
            delay_us=self.sim.processing_delay_us + extra_delay_us,
            packet=packet,
            target=frame.header.target,
        )

    def demodulated(self, tx: TransmissionEvent) -> None:
        self.energy.account_energy(Phase.RX_LISTEN, to_s(tx.duration_us))

    def try_exit(self, key) -> None:
        action = self.forwarder.exit_lr_rx_scheduler(key, to_s(self.sim.queue.now_us))
        if isinstance(action, TxAt):
            self._schedule_window(action)

    def _schedule_window(self, tx: TxAt) -> None:
        self.sim.queue.schedule(to_us(tx.time), Priority.TX_START, self._window_tx, tx)

    def _window_tx(self, tx: TxAt) -> None:
        now = self.sim.queue.now_us
        params = self.sim.tx_params(tx.sf, tx.tx_power_dbm, tx.channel)
        result = self.sim.transmit(self, params, tx.payload, window=tx.window)
        if result is None:
            self.sim.queue.schedule(self.tx_until_us, Priority.TIMER, self._window_closed, tx.key)
            return
        if tx.window == "RX1":
            fallback = self.forwarder.rx1_missed(tx, to_s(now))
            if isinstance(fallback, TxAt):
                self._schedule_window(fallback)
                return
        else:
            self.forwarder.window_done(tx.key)
        self.sim.count_drop("MissedWindow")
        self.sim.trace.emit("drop", now, node=self.node_id, reason="MissedWindow", window=tx.window)

    def _window_closed(self, key) -> None:
        self.forwarder.window_done(key)
        self.try_exit(key)


class Relay(_LimaNode):
    kind = "lr"

    def __init__(self, sim: "Simulation", index: int, node_id: int, position: Tuple[float, float],
                 config: ForwardingConfig):
        super().__init__(sim, index, node_id, position)
        p = sim.scenario.protocol
        self.routing = RoutingEngine(
            node_id,
            rng=sim.node_rng("routing", index),
            rem_period_s=p.rem_period_s,
            route_ttl_factor=p.route_ttl_factor,
            max_backups=p.max_backups,
            downlink_ttl_s=p.dm_ttl_s,
        )
        self.forwarder = RouterForwarder(node_id, self.routing, sim.node_rng("stagger", index), config)
        self.jitter_rng = sim.node_rng("jitter", index)
        self._stagger_events: Dict[Tuple, object] = {}

    def on_receive(self, tx: TransmissionEvent, outcome: Received, packet: Optional[PacketKey]) -> None:
        self.demodulated(tx)
        try:
            decoded = decode(tx.payload)
        except CodecError:
            self.sim.count_drop(DropReason.MALFORMED.value)
            return
        now_s = to_s(self.sim.queue.now_us)
        if isinstance(decoded, EdFrame):
            if decoded.view.mtype.is_uplink:
                self._on_ed_uplink(decoded.view, tx, outcome, packet, now_s)
            return

        header = decoded.header
        if header.header_type == HeaderType.UPLINK_DATA:
            action = self.forwarder.on_lima_uplink(header, decoded.inner, now_s)
            self._sync_staggers()
            if isinstance(action, ForwardRewritten):
                self.relay(action.frame, packet)
            elif isinstance(action, Drop):
                self.sim.ledger.lost(packet, action.reason.value)
        elif header.header_type == HeaderType.DOWNLINK_DATA:
            action = self.forwarder.on_lima_downlink(header, decoded.inner, now_s)
            if isinstance(action, ForwardRewritten):
                self.relay(action.frame, None)
            elif isinstance(action, ExitToEd):
                self.try_exit(action.key)
        elif header.header_type == HeaderType.REM:
            self.routing.expire_routes(now_s)
            result = self.forwarder.on_rem(header, outcome.rssi_dbm, now_s)
            if result.decision == RemDecision.UPDATE_PRIMARY and result.rebroadcast is not None:
                jitter = to_us(float(self.jitter_rng.uniform(0.0, self.sim.scenario.protocol.rem_jitter_s)))
                self.relay(LimaFrame(result.rebroadcast, b""), None, extra_delay_us=jitter)

    def _on_ed_uplink(self, view: LorawanFrameView, tx: TransmissionEvent, outcome: Received,
                      packet: Optional[PacketKey], now_s: float) -> None:
        action = self.forwarder.on_ed_uplink(view, outcome.snr_db, tx.params.channel, tx.params.sf, now_s)
        if isinstance(action, ScheduleStagger):
            event = self.sim.queue.after(to_us(action.delay), Priority.TIMER, self._stagger_fired,
                                         action.key, packet, packet=packet)
            self._stagger_events[action.key] = event
        elif isinstance(action, Forward):
            pending = self.forwarder.take_pending(action.key)
            if pending is not None:
                self._tunnel(pending, packet)
        elif isinstance(action, Drop):
            self.sim.ledger.lost(packet, action.reason.value)
        if view.device_key is not None and self.forwarder.queue.depth(view.device_key):
            self.try_exit(view.device_key)

    def _stagger_fired(self, key, packet: Optional[PacketKey]) -> None:
        self._stagger_events.pop(key, None)
        pending = self.forwarder.on_stagger_expired(key, to_s(self.sim.queue.now_us))
        if pending is not None:
            self._tunnel(pending, packet)

    def _sync_staggers(self) -> None:
        for key in [k for k in self._stagger_events if k not in self.forwarder.pending]:
            self._stagger_events.pop(key).cancel()

    def _tunnel(self, pending: PendingStagger, packet: Optional[PacketKey]) -> None:
        result = self.forwarder.tunnel_uplink(pending, to_s(self.sim.queue.now_us))
        if isinstance(result, Drop):
            self.sim.ledger.lost(packet, result.reason.value)
            return
        self.relay(result, packet)


class Gateway(_LimaNode):
    kind = "lg"

    def __init__(self, sim: "Simulation", index: int, node_id: int, position: Tuple[float, float],
                 config: ForwardingConfig, lima: bool):
        super().__init__(sim, index, node_id, position)
        p = sim.scenario.protocol
        self.lima = lima
        self.routing = RoutingEngine(
            node_id,
            rng=sim.node_rng("routing", 1000 + index),
            rem_period_s=p.rem_period_s,
            route_ttl_factor=p.route_ttl_factor,
            max_backups=p.max_backups,
            downlink_ttl_s=p.dm_ttl_s,
        )
        self.history = SnrHistory(depth=p.history_depth)
        self.forwarder = GatewayForwarder(node_id, self.routing, config, self.history)
        self.jitter_rng = sim.node_rng("jitter", 1000 + index)

    def start(self) -> None:
        if not self.lima:
            return
        first = to_us(float(self.jitter_rng.uniform(0.0, self.sim.scenario.protocol.rem_jitter_s)))
        self.sim.queue.schedule(first, Priority.TIMER, self._send_rem)

    def _send_rem(self) -> None:
        now = self.sim.queue.now_us
        self.sim.queue.schedule(now + to_us(self.sim.scenario.protocol.rem_period_s), Priority.TIMER, self._send_rem)
        frame = self.forwarder.lg_originate_rem(to_s(now))
        self.queue_tx(self.mesh_params(), encode_header(frame.header))

    def on_receive(self, tx: TransmissionEvent, outcome: Received, packet: Optional[PacketKey]) -> None:
        self.demodulated(tx)
        try:
            decoded = decode(tx.payload)
        except CodecError:
            self.sim.count_drop(DropReason.MALFORMED.value)
            return
        now_s = to_s(self.sim.queue.now_us)
        if isinstance(decoded, EdFrame):
            if not decoded.view.mtype.is_uplink:
                return
            tp = TransmissionProfile(sf=tx.params.sf, tx_power_dbm=tx.params.tx_power_dbm)
            action = self.forwarder.on_ed_uplink(decoded.view, outcome.snr_db, tx.params.channel,
                                                 tx.params.sf, tp, now_s)
        elif self.lima and decoded.header.header_type == HeaderType.UPLINK_DATA:
            action = self.forwarder.on_lima_uplink(decoded.header, decoded.inner, now_s)
        else:
            return
        if isinstance(action, DeliverToLg):
            self._deliver(action)

    def _deliver(self, delivery: DeliverToLg) -> None:
        now = self.sim.queue.now_us
        downlink = self.sim.ns.on_uplink(delivery.view, delivery.metadata, now)
        self.sim.trace.emit("deliver", now, node=self.node_id,
                            dev_addr=f"{delivery.view.dev_addr:08X}", fcnt=delivery.view.fcnt)
        if downlink is None:
            return
        action = self.forwarder.lg_handle_ns_downlink(downlink.payload, to_s(now), sf=None)
        if isinstance(action, DirectTx):
            self.try_exit(action.key)
        elif isinstance(action, Tunnel):
            self.relay(action.frame, None)
