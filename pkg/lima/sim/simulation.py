"""
One simulation run.

Simulation owns the event queue, the radio medium, every node and the NS.
run() is a pure function of the Scenario: all randomness comes from RNG
streams derived from scenario.seed.
"""

import logging
import math
import statistics
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from lima.core.errors import ConfigError
from lima.core.model import Metrics, Mode, Scenario
from lima.protocol.codec import LIMA_MTYPE, UNSUPPORTED, TransmissionProfile, max_app_payload
from lima.protocol.forwarding import DropReason, ForwardingConfig
from lima.radio.airtime import LoraTxParams, airtime_us
from lima.radio.duty_cycle import Allowed, Deferred
from lima.radio.energy import EnergyModel, Phase
from lima.radio.medium import LossReason, Lost, RadioMedium, Received, TransmissionEvent
from lima.radio.propagation import PathLossModel
from lima.radio.region import DataRate, RegionalPlan, plan_by_name
from lima.sim.engine import EventQueue, Priority, Stream, rng_stream, to_s, to_us
from lima.sim.metrics import PacketKey, PacketLedger
from lima.sim.network_server import NetworkServer
from lima.sim.nodes import EndDevice, Gateway, Node, Relay
from lima.sim.topology import Topology, build_topology
from lima.sim.trace import NULL_TRACE, Trace

logger = logging.getLogger("Lima.Sim")

LG_ID_BASE = 0x0010
LR_ID_BASE = 0x0100

# Longest frame on air (SF12, 255 bytes) is under 10 s
_RECENT_HORIZON_US = 15_000_000

_NODE_STREAMS = {"routing": Stream.ROUTING, "stagger": Stream.STAGGER, "jitter": Stream.JITTER}
_DROP_REASONS = frozenset(r.value for r in DropReason)


def allowed_data_rates(plan: RegionalPlan, app_bytes: int, lima: bool) -> List[DataRate]:
    """125 kHz data rates that can carry app_bytes, with the LIMA overhead when lima is set."""
    rates = []
    for rate in plan.data_rates:
        if rate.bw_hz != 125000:
            continue
        cap = max_app_payload(rate, lima=lima, plan=plan)
        if cap is not UNSUPPORTED and cap >= app_bytes:
            rates.append(rate)
    return rates


class Simulation:
    def __init__(self, scenario: Scenario, trace: Optional[Trace] = None,
                 topology: Optional[Topology] = None):
        self.scenario = scenario
        self.trace = trace or NULL_TRACE
        self.plan = plan_by_name(scenario.region)
        self.lima = scenario.mode == Mode.LIMA
        radio = scenario.radio
        self.path_loss = PathLossModel.from_config(radio.model_dump())
        self.medium = RadioMedium(
            self.path_loss,
            capture_db=radio.capture_db,
            shadowing_sigma_db=radio.shadowing_sigma_db,
            rng=rng_stream(scenario.seed, Stream.SHADOWING),
        )
        self.energy_model = EnergyModel.from_config(radio.energy.model_dump())
        p = scenario.protocol
        self.stp = TransmissionProfile(sf=p.stp.sf, tx_power_dbm=p.stp.tx_power_dbm)
        self.processing_delay_us = to_us(p.processing_delay_s)
        self.queue = EventQueue()
        self.ledger = PacketLedger()
        self.drops: Counter = Counter()
        self.lima_frames_tx = 0
        self.downlink_windows: List[Dict] = []
        self.ns = NetworkServer(
            self.plan,
            adr_enabled=scenario.adr_enabled,
            device_margin_db=p.device_margin_db,
            min_power_dbm=p.ed_min_power_dbm,
            max_power_dbm=p.ed_max_power_dbm,
            adr_resend_uplinks=p.adr_resend_uplinks,
            ledger=self.ledger,
        )
        self.forwarding_config = ForwardingConfig(
            plan=self.plan,
            stp=self.stp,
            protocol_version=p.protocol_version,
            stagger_window_s=p.stagger_window_s,
            dm_ttl_s=p.dm_ttl_s,
            dnof_ttl_s=p.dnof_ttl_s,
            queue_ttl_s=scenario.queue_ttl_s,
            dedup_capacity=p.dedup_capacity,
            dedup_ttl_s=p.dedup_ttl_s,
            der_enabled=scenario.der_enabled,
            dnof_enabled=scenario.dnof_enabled,
        )

        self.topology = topology or build_topology(scenario, self.path_loss)
        self.gateways: List[Gateway] = [
            Gateway(self, i, LG_ID_BASE + i, pos, self.forwarding_config, lima=self.lima)
            for i, pos in enumerate(self.topology.lg_positions)
        ]
        self.relays: List[Relay] = [
            Relay(self, i, LR_ID_BASE + i, pos, self.forwarding_config)
            for i, pos in enumerate(self.topology.lr_positions)
        ] if self.lima else []

        allowed = allowed_data_rates(self.plan, scenario.packet_app_bytes, lima=self.lima)
        if not allowed:
            raise ConfigError(f"no {self.plan.name} data rate carries {scenario.packet_app_bytes} bytes")
        initial = next((r for r in allowed if r.sf == scenario.ed_initial_sf), allowed[0])
        self.devices: List[EndDevice] = [
            EndDevice(self, i, pos, rng_stream(scenario.seed, Stream.TRAFFIC, i), allowed, initial)
            for i, pos in enumerate(self.topology.ed_positions)
        ]
        self.nodes: List[Node] = [*self.gateways, *self.relays, *self.devices]
        self._listeners: List[Node] = [*self.gateways, *self.relays]
        self._recent: List[TransmissionEvent] = []
        self._tx_sender: Dict[int, Node] = {}

    # -------------------------------------------------------------------------
    # Setup helpers
    # -------------------------------------------------------------------------

    def node_rng(self, purpose: str, index: int) -> np.random.Generator:
        return rng_stream(self.scenario.seed, _NODE_STREAMS[purpose], index)

    def tx_params(self, sf: int, tx_power_dbm: int, channel: int) -> LoraTxParams:
        radio = self.scenario.radio
        return LoraTxParams(
            sf=sf,
            bw_hz=radio.bw,
            cr=radio.cr,
            preamble_symbols=radio.preamble,
            tx_power_dbm=tx_power_dbm,
            channel=channel,
        )

    def count_drop(self, reason: str) -> None:
        self.drops[reason] += 1

    # -------------------------------------------------------------------------
    # Radio
    # -------------------------------------------------------------------------

    def transmit(
        self,
        node: Node,
        params: LoraTxParams,
        payload: bytes,
        packet: Optional[PacketKey] = None,
        target: Optional[int] = None,
        window: Optional[str] = None,
    ) -> Union[None, int, bool]:
        """
        Start a transmission now.

        Returns None when on air, the microsecond at which to retry when the
        radio is busy or the duty cycle defers, False when the frame can never go.
        """
        if not node.online:
            return False
        now = self.queue.now_us
        duration = airtime_us(params, len(payload))
        if node.busy(now):
            return node.tx_until_us
        check = node.duty.check(params.channel, duration, now)
        if isinstance(check, Deferred):
            return check.until_us
        if not isinstance(check, Allowed):
            return False

        node.duty.record(params.channel, now, duration)
        node.note_tx(now, now + duration)
        node.energy.account_energy(Phase.TX, to_s(duration), params.tx_power_dbm)
        tx = TransmissionEvent(node.node_id, params, now, duration, bytes(payload), node.position)
        self._recent.append(tx)
        self._tx_sender[id(tx)] = node
        if payload and payload[0] >> 5 == LIMA_MTYPE:
            self.lima_frames_tx += 1
        self.trace.emit(
            "tx", now, node=node.node_id, kind=node.kind, channel=params.channel, sf=params.sf,
            power=params.tx_power_dbm, length=len(payload), airtime_us=duration, window=window,
        )
        self.queue.schedule(now + duration, Priority.TX_END, self._on_tx_end, tx, packet, target, packet=packet)
        return None

    def _on_tx_end(self, tx: TransmissionEvent, packet: Optional[PacketKey], target: Optional[int]) -> None:
        now = self.queue.now_us
        sender = self._tx_sender.pop(id(tx))
        self._recent = [o for o in self._recent if o.end_us > now - _RECENT_HORIZON_US]
        concurrent = [o for o in self._recent if o.interferes_with(tx)]
        from_ed = isinstance(sender, EndDevice)
        if from_ed:
            sender.on_tx_end(tx)

        candidates = [*self._listeners, *(d for d in self.devices if d is not sender and d.listens(tx))]

        for node in candidates:
            if node is sender or not node.online:
                continue
            outcome = self._resolve(tx, node, concurrent)
            if isinstance(outcome, Lost):
                self._record_loss(node, outcome.reason, packet, target, from_ed)
                continue
            self.trace.emit("rx", now, node=node.node_id, sender=sender.node_id,
                            rssi=round(outcome.rssi_dbm, 2), snr=round(outcome.snr_db, 2))
            node.on_receive(tx, outcome, packet)

    def _resolve(self, tx: TransmissionEvent, node: Node, concurrent: List[TransmissionEvent]):
        outcome = self.medium.try_receive(tx, node.position, concurrent)
        # Half duplex only matters for frames the node could otherwise have decoded
        if isinstance(outcome, Received) and node.transmitted_during(tx.start_us, tx.end_us):
            return Lost(LossReason.HALF_DUPLEX)
        return outcome

    def _record_loss(self, node: Node, reason: LossReason, packet: Optional[PacketKey],
                     target: Optional[int], from_ed: bool) -> None:
        if packet is None:
            return
        if from_ed:
            self.ledger.lost(packet, reason.value)
        elif target == node.node_id:
            self.ledger.lost(packet, reason.value)
            self.count_drop(reason.value)
            self.trace.emit("drop", self.queue.now_us, node=node.node_id, reason=reason.value)

    def schedule_outage(self, node: Node, at_s: float) -> None:
        """Switch node off at at_s: from then on it neither hears nor sends."""
        self.queue.schedule(to_us(at_s), Priority.TIMER, self._go_offline, node)

    def _go_offline(self, node: Node) -> None:
        node.online = False
        logger.info("node %04X offline at %.1f s", node.node_id, to_s(self.queue.now_us))
        self.trace.emit("offline", self.queue.now_us, node=node.node_id)

    def on_ed_downlink(self, device: EndDevice, tx: TransmissionEvent, window: str) -> None:
        self.downlink_windows.append({"dev_addr": device.dev_addr, "start_us": tx.start_us, "window": window})
        self.trace.emit("downlink", tx.end_us, node=device.node_id, window=window)

    # -------------------------------------------------------------------------
    # Run
    # -------------------------------------------------------------------------

    def run(self) -> Metrics:
        s = self.scenario
        end_us = to_us(s.sim_seconds)
        logger.info("run %s: %.1f km, %d EDs, %d LRs, %.0f s period, %.1f h, seed %d",
                    s.mode.value, s.area_side_km, len(self.devices), len(self.relays),
                    s.traffic_period_s, s.sim_hours, s.seed)
        for gateway in self.gateways:
            gateway.start()
        for device in self.devices:
            device.start()
        self.queue.run(end_us)
        metrics = self._collect(end_us)
        logger.info("run %s done: PDR %.1f%%, %d events", s.mode.value, metrics.pdr_percent, self.queue.processed)
        return metrics

    def in_flight(self) -> set:
        return {e.packet for e in self.queue.pending() if e.packet is not None}

    def _collect(self, end_us: int) -> Metrics:
        s = self.scenario
        total_s = to_s(end_us)
        summary = self.ledger.summarize(self.in_flight())
        for device in self.devices:
            device.energy.close(total_s, Phase.SLEEP)
        for node in [*self.relays, *self.gateways]:
            node.energy.close(total_s, Phase.IDLE_LISTEN)

        energy_ed = statistics.fmean(d.energy.total for d in self.devices) if self.devices else 0.0
        energy_lr = statistics.fmean(r.energy.forwarding for r in self.relays) if self.relays else 0.0
        idle_lr = statistics.fmean(r.energy.joules[Phase.IDLE_LISTEN] for r in self.relays) if self.relays else 0.0

        node_drops: Counter = Counter(self.drops)
        for node in [*self.relays, *self.gateways]:
            node_drops.update({k: v for k, v in node.forwarder.counters.items() if k in _DROP_REASONS})

        latency = summary.latency_ms_mean
        return Metrics(
            mode=s.mode.value,
            area_side_km=s.area_side_km,
            ed_count=len(self.devices),
            lr_count=len(self.relays),
            traffic_period_s=s.traffic_period_s,
            packets_per_hour=s.packets_per_hour,
            seed=s.seed,
            sim_hours=s.sim_hours,
            pdr_percent=summary.pdr_percent,
            energy_per_ed_j=energy_ed,
            latency_ms_mean=latency if latency is None or math.isfinite(latency) else None,
            energy_per_lr_j=energy_lr,
            idle_energy_per_lr_j=idle_lr,
            lr_power_w=energy_lr / total_s if total_s else 0.0,
            sent=summary.sent,
            delivered=summary.delivered,
            in_flight=summary.in_flight,
            lost=summary.lost,
            node_drops=dict(sorted(node_drops.items())),
            lima_frames_tx=self.lima_frames_tx,
            mean_final_sf=statistics.fmean(d.sf for d in self.devices) if self.devices else None,
            zero_packets=summary.sent == 0,
            final_ed_settings=[(d.sf, d.power_dbm) for d in self.devices],
        )

    def dump_routes(self) -> List[str]:
        now_s = to_s(self.queue.now_us)
        lines = []
        for node in [*self.gateways, *self.relays]:
            for line in node.routing.dump_routes(now_s):
                lines.append(f"0x{node.node_id:04X}\t{line}")
        return lines


def run(scenario: Scenario, trace_path: Optional[Path] = None) -> Metrics:
    with Trace(trace_path) as trace:
        return Simulation(scenario, trace=trace).run()
