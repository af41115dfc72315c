"""
LIMA forwarding
===============

Uplink: an LR that hears an ED elects itself Designated Entry Relay (DER)
through a random stagger, tunnels the frame toward an LG and relays frames
that name it as next hop. LGs strip the header and hand the frame to the NS.

Downlink: the LG tunnels NS frames along the reverse route; the exit LR strips
the header and transmits the untouched LoRaWAN frame in the ED's RX1 or RX2
window.

Handlers never touch the radio. They return actions (Forward, Drop, TxAt, ...)
that the owning node carries out. Times are simulation seconds.
"""

import logging
from collections import Counter, OrderedDict, deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Dict, Hashable, List, Optional, Tuple, Union

import numpy as np

from lima.core.errors import CodecError
from lima.protocol.adr import DIRECT, NsMetadata, SnrHistory
from lima.protocol.codec import (
    HEADER_LEN,
    EdFrame,
    HeaderType,
    Ingress,
    LimaFrame,
    LimaHeader,
    LorawanFrameView,
    LorawanMType,
    RemOptions,
    TransmissionProfile,
    decode,
    quantize_snr,
    validate_ingress,
)
from lima.protocol.routing import (
    NO_ROUTE,
    DeviceKey,
    EdDirect,
    RemOriginator,
    RemResult,
    RoutingEngine,
)
from lima.radio.region import EU868, RegionalPlan

logger = logging.getLogger("Lima.Forwarding")


class DropReason(str, Enum):
    DNOF = "Dnof"
    NOT_DER = "NotDer"
    DUPLICATE = "Duplicate"
    NO_ROUTE = "NoRoute"
    NO_DOWNLINK_ROUTE = "NoDownlinkRoute"
    STALE = "Stale"
    TOO_LARGE = "TooLarge"
    MALFORMED = "Malformed"


# =============================================================================
# Actions
# =============================================================================

@dataclass(frozen=True)
class ScheduleStagger:
    key: DeviceKey
    delay: float


@dataclass(frozen=True)
class Forward:
    """Tunnel the ED frame now (the node's processing delay still applies)."""
    key: DeviceKey


@dataclass(frozen=True)
class Drop:
    reason: DropReason


@dataclass(frozen=True)
class Ignore:
    pass


@dataclass(frozen=True)
class ForwardRewritten:
    frame: LimaFrame


@dataclass(frozen=True)
class DeliverToLg:
    payload: bytes
    view: LorawanFrameView
    metadata: NsMetadata


@dataclass(frozen=True)
class ExitToEd:
    key: DeviceKey


@dataclass(frozen=True)
class DirectTx:
    key: DeviceKey
    sf: Optional[int]


@dataclass(frozen=True)
class Tunnel:
    next_hop: int
    frame: LimaFrame


@dataclass(frozen=True)
class TxAt:
    key: DeviceKey
    time: float
    channel: int
    sf: int
    tx_power_dbm: int
    payload: bytes
    window: str  # "RX1" or "RX2"


@dataclass(frozen=True)
class Hold:
    pass


IGNORE = Ignore()
HOLD = Hold()

UplinkAction = Union[ScheduleStagger, Forward, Drop]
LimaUplinkAction = Union[ForwardRewritten, DeliverToLg, Ignore, Drop]
DownlinkAction = Union[ForwardRewritten, ExitToEd, Ignore, Drop]


# =============================================================================
# State
# =============================================================================

@dataclass
class DmRecord:
    is_der: bool
    last_snr_db: int
    created_at: float


class DesignatedMap:
    def __init__(self, ttl: float = 3600.0):
        self.ttl = ttl
        self._records: Dict[DeviceKey, DmRecord] = {}

    def get(self, key: DeviceKey, now: float) -> Optional[DmRecord]:
        record = self._records.get(key)
        if record is not None and now - record.created_at > self.ttl:
            del self._records[key]
            return None
        return record

    def set(self, key: DeviceKey, is_der: bool, snr_db: int, now: float) -> DmRecord:
        record = DmRecord(is_der=is_der, last_snr_db=snr_db, created_at=now)
        self._records[key] = record
        return record

    def __contains__(self, key: DeviceKey) -> bool:
        return key in self._records

    def __len__(self) -> int:
        return len(self._records)


@dataclass
class EdRxRecord:
    rx1_time: float
    rx2_time: float
    uplink_channel: int
    uplink_sf: int
    rx2_timer_active: bool = True
    rx1_used: bool = False
    scheduled: bool = False


class EdRxState:
    """Upcoming receive windows per ED, from the ED's last uplink."""

    def __init__(self, plan: RegionalPlan = EU868):
        self.plan = plan
        self._records: Dict[DeviceKey, EdRxRecord] = {}

    def record_uplink(self, key: DeviceKey, uplink_end: float, channel: int, sf: int, join: bool = False) -> EdRxRecord:
        delay1 = self.plan.join_accept_delay1_s if join else self.plan.receive_delay1_s
        delay2 = self.plan.join_accept_delay2_s if join else self.plan.receive_delay2_s
        record = EdRxRecord(
            rx1_time=uplink_end + delay1,
            rx2_time=uplink_end + delay2,
            uplink_channel=channel,
            uplink_sf=sf,
        )
        self._records[key] = record
        return record

    def get(self, key: DeviceKey) -> Optional[EdRxRecord]:
        return self._records.get(key)

    def __len__(self) -> int:
        return len(self._records)


class DnofList:
    def __init__(self, ttl: float = 1800.0):
        self.ttl = ttl
        self._refreshed: Dict[int, float] = {}

    def update(self, receivables, now: float) -> None:
        for dev_addr in receivables:
            self._refreshed[dev_addr] = now
        self.purge(now)

    def contains(self, dev_addr: int, now: float) -> bool:
        refreshed = self._refreshed.get(dev_addr)
        return refreshed is not None and now - refreshed <= self.ttl

    def purge(self, now: float) -> None:
        for dev_addr in [a for a, t in self._refreshed.items() if now - t > self.ttl]:
            del self._refreshed[dev_addr]

    def __len__(self) -> int:
        return len(self._refreshed)


class DedupCache:
    """Bounded LRU of recently handled keys with a TTL."""

    def __init__(self, capacity: int = 256, ttl: float = 600.0):
        self.capacity = capacity
        self.ttl = ttl
        self._seen: "OrderedDict[Hashable, float]" = OrderedDict()

    def check_and_add(self, key: Hashable, now: float) -> bool:
        """True if key was already present (a duplicate)."""
        self._expire(now)
        if key in self._seen:
            return True
        self._seen[key] = now
        while len(self._seen) > self.capacity:
            self._seen.popitem(last=False)
        return False

    def __contains__(self, key: Hashable) -> bool:
        return key in self._seen

    def _expire(self, now: float) -> None:
        while self._seen:
            key, at = next(iter(self._seen.items()))
            if now - at <= self.ttl:
                break
            del self._seen[key]

    def __len__(self) -> int:
        return len(self._seen)


@dataclass
class QueuedDownlink:
    payload: bytes
    enqueued_at: float
    sf: Optional[int] = None


class EdRxQueue:
    def __init__(self, ttl: float = 3600.0):
        self.ttl = ttl
        self._queues: Dict[DeviceKey, Deque[QueuedDownlink]] = {}

    def push(self, key: DeviceKey, payload: bytes, now: float, sf: Optional[int] = None) -> None:
        self._queues.setdefault(key, deque()).append(QueuedDownlink(payload, now, sf))

    def push_front(self, key: DeviceKey, item: QueuedDownlink) -> None:
        self._queues.setdefault(key, deque()).appendleft(item)

    def pop_fresh(self, key: DeviceKey, now: float) -> Tuple[Optional[QueuedDownlink], int]:
        """Head of the queue after discarding stale entries, and how many were discarded."""
        queue = self._queues.get(key)
        stale = 0
        while queue:
            item = queue.popleft()
            if now - item.enqueued_at > self.ttl:
                stale += 1
                continue
            return item, stale
        return None, stale

    def depth(self, key: DeviceKey) -> int:
        return len(self._queues.get(key, ()))

    def total(self) -> int:
        return sum(len(q) for q in self._queues.values())


@dataclass
class _Tracked:
    dev_addr: int
    last_seen: float
    tp: TransmissionProfile


class DirectReceivableTracker:
    """LG-side circular buffer of EDs heard directly at or below the STP."""

    def __init__(self, ttl: float = 1800.0):
        self.ttl = ttl
        self._entries: List[_Tracked] = []
        self._pointer = 0

    def track(self, dev_addr: int, tp: TransmissionProfile, now: float) -> None:
        for entry in self._entries:
            if entry.dev_addr == dev_addr:
                entry.last_seen = now
                entry.tp = tp
                return
        self._entries.append(_Tracked(dev_addr, now, tp))

    def forget(self, dev_addr: int) -> None:
        for i, entry in enumerate(self._entries):
            if entry.dev_addr == dev_addr:
                del self._entries[i]
                if i < self._pointer:
                    self._pointer -= 1
                break
        if self._pointer >= len(self._entries):
            self._pointer = 0

    def take(self, max_bytes: int, now: float) -> List[int]:
        stale = [e.dev_addr for e in self._entries if now - e.last_seen > self.ttl]
        for dev_addr in stale:
            self.forget(dev_addr)
        room = RemOptions.capacity(max_bytes)
        n = len(self._entries)
        if n == 0 or room == 0:
            return []
        count = min(room, n)
        picked = [self._entries[(self._pointer + i) % n].dev_addr for i in range(count)]
        self._pointer = (self._pointer + count) % n
        return picked

    def __len__(self) -> int:
        return len(self._entries)


# =============================================================================
# Configuration
# =============================================================================

@dataclass(frozen=True)
class ForwardingConfig:
    plan: RegionalPlan = EU868
    stp: TransmissionProfile = TransmissionProfile(sf=7, tx_power_dbm=26)
    protocol_version: int = 0
    stagger_window_s: float = 0.5
    dm_ttl_s: float = 3600.0
    dnof_ttl_s: float = 1800.0
    queue_ttl_s: float = 3600.0
    dedup_capacity: int = 256
    dedup_ttl_s: float = 600.0
    der_enabled: bool = True
    dnof_enabled: bool = True

    @property
    def rem_option_bytes(self) -> int:
        """Room for REM options at the STP data rate."""
        rate = self.plan.dr_for_sf(self.stp.sf, self.stp.bandwidth_khz * 1000)
        return rate.max_mac_payload - HEADER_LEN


@dataclass
class PendingStagger:
    key: DeviceKey
    view: LorawanFrameView
    snr_db: int
    sf: int
    at: float


def _parse_inner(inner: bytes) -> LorawanFrameView:
    decoded = decode(inner)
    if not isinstance(decoded, EdFrame):
        raise CodecError("tunneled payload is itself a LIMA frame")
    return decoded.view


class _Forwarder:
    def __init__(self, own_id: int, routing: RoutingEngine, config: ForwardingConfig):
        self.own_id = own_id
        self.routing = routing
        self.config = config
        self.rx_state = EdRxState(config.plan)
        self.queue = EdRxQueue(ttl=config.queue_ttl_s)
        self.dedup_up = DedupCache(config.dedup_capacity, config.dedup_ttl_s)
        self.dedup_down = DedupCache(config.dedup_capacity, config.dedup_ttl_s)
        self.counters: Counter = Counter()
        self._seq = 0

    def _next_seq(self) -> int:
        seq = self._seq
        self._seq = (self._seq + 1) % 256
        return seq

    def _drop(self, reason: DropReason) -> Drop:
        self.counters[reason.value] += 1
        return Drop(reason)

    # -------------------------------------------------------------------------
    # Receive windows
    # -------------------------------------------------------------------------

    def exit_lr_rx_scheduler(self, key: DeviceKey, now: float) -> Union[TxAt, Hold]:
        record = self.rx_state.get(key)
        if record is None or record.scheduled:
            return HOLD
        item, stale = self.queue.pop_fresh(key, now)
        if stale:
            self.counters[DropReason.STALE.value] += stale
        if item is None:
            return HOLD

        plan = self.config.plan
        if not record.rx1_used and now <= record.rx1_time:
            record.rx1_used = True
            record.rx2_timer_active = False
            record.scheduled = True
            return TxAt(
                key=key,
                time=record.rx1_time,
                channel=plan.rx1_channel(record.uplink_channel),
                sf=item.sf or record.uplink_sf,
                tx_power_dbm=plan.rx1_power_dbm,
                payload=item.payload,
                window="RX1",
            )
        if record.rx2_timer_active and now <= record.rx2_time:
            return self._schedule_rx2(key, record, item.payload)

        self.queue.push_front(key, item)
        return HOLD

    def _schedule_rx2(self, key: DeviceKey, record: EdRxRecord, payload: bytes) -> TxAt:
        plan = self.config.plan
        record.rx2_timer_active = False
        record.scheduled = True
        return TxAt(
            key=key,
            time=record.rx2_time,
            channel=plan.rx2_channel,
            sf=plan.rx2_sf,
            tx_power_dbm=plan.rx2_power_dbm,
            payload=payload,
            window="RX2",
        )

    def rx1_missed(self, tx: TxAt, now: float) -> Union[TxAt, Hold]:
        """RX1 could not be used (radio busy, duty cycle); fall back to RX2."""
        record = self.rx_state.get(tx.key)
        if record is None:
            return HOLD
        if now <= record.rx2_time:
            return self._schedule_rx2(tx.key, record, tx.payload)
        record.scheduled = False
        self.queue.push_front(tx.key, QueuedDownlink(tx.payload, now))
        return HOLD

    def window_done(self, key: DeviceKey) -> None:
        record = self.rx_state.get(key)
        if record is not None:
            record.scheduled = False


class RouterForwarder(_Forwarder):
    """Forwarding state of one LIMA Relay."""

    def __init__(self, own_id: int, routing: RoutingEngine, rng: np.random.Generator, config: ForwardingConfig):
        super().__init__(own_id, routing, config)
        self.rng = rng
        self.dm = DesignatedMap(ttl=config.dm_ttl_s)
        self.dnof = DnofList(ttl=config.dnof_ttl_s)
        self.pending: Dict[DeviceKey, PendingStagger] = {}

    # -------------------------------------------------------------------------
    # Uplink from an ED
    # -------------------------------------------------------------------------

    def on_ed_uplink(self, frame: LorawanFrameView, snr_db: float, channel: int, sf: int, now: float) -> UplinkAction:
        key = frame.device_key
        if key is None:
            return self._drop(DropReason.MALFORMED)
        if self.config.dnof_enabled and frame.dev_addr is not None and self.dnof.contains(frame.dev_addr, now):
            return self._drop(DropReason.DNOF)

        join = frame.mtype == LorawanMType.JOIN_REQUEST
        self.rx_state.record_uplink(key, now, channel, sf, join=join)

        rate = self.config.plan.dr_for_sf(sf)
        if validate_ingress(frame, rate, self.config.plan) == Ingress.TOO_LARGE:
            return self._drop(DropReason.TOO_LARGE)
        if frame.dedup_key in self.dedup_up:
            return self._drop(DropReason.DUPLICATE)

        snr_q = quantize_snr(snr_db)
        if not self.config.der_enabled:
            self.pending[key] = PendingStagger(key, frame, snr_q, sf, now)
            return Forward(key)

        record = self.dm.get(key, now)
        if record is None:
            delay = float(self.rng.uniform(0.0, self.config.stagger_window_s))
            self.pending[key] = PendingStagger(key, frame, snr_q, sf, now)
            logger.debug("LR %04X: stagger %.3fs for %s", self.own_id, delay, key)
            return ScheduleStagger(key, delay)
        record.last_snr_db = snr_q
        if record.is_der:
            self.pending[key] = PendingStagger(key, frame, snr_q, sf, now)
            return Forward(key)
        return self._drop(DropReason.NOT_DER)

    def on_stagger_expired(self, key: DeviceKey, now: float) -> Optional[PendingStagger]:
        """The stagger ran out without a better copy overheard: become DER."""
        pending = self.pending.pop(key, None)
        if pending is None:
            return None
        self.dm.set(key, True, pending.snr_db, now)
        return pending

    def take_pending(self, key: DeviceKey) -> Optional[PendingStagger]:
        return self.pending.pop(key, None)

    def on_overheard_forward(self, key: DeviceKey, now: float) -> bool:
        """Cancel a pending stagger for key; True if one was pending."""
        pending = self.pending.get(key)
        if pending is None:
            return False
        del self.pending[key]
        self.counters["StaggerCanceled"] += 1
        logger.debug("LR %04X: stagger for %s canceled", self.own_id, key)
        return True

    def on_overheard_lima_uplink(self, header: LimaHeader, view: LorawanFrameView, now: float) -> None:
        """
        React to another LR's forward of an ED uplink.

        A pending stagger for the same frame is canceled when the forward reports
        an ED SNR at or above our own; a weaker forward leaves it running. The LR
        that heard the ED best therefore never cancels and ends up the DER. A DER
        resigns only on a strictly higher reported SNR, which also unseats a
        weaker LR whose stagger happened to fire first.
        """
        key = view.device_key
        if key is None:
            return
        pending = self.pending.get(key)
        if pending is not None and pending.view.dedup_key == view.dedup_key and header.ed_snr >= pending.snr_db:
            self.on_overheard_forward(key, now)
        record = self.dm.get(key, now)
        if record is not None and record.is_der and header.source != self.own_id and header.ed_snr > record.last_snr_db:
            record.is_der = False
            self.counters["Resigned"] += 1
            logger.debug("LR %04X: resigns as DER for %s (%d > %d dB)",
                         self.own_id, key, header.ed_snr, record.last_snr_db)

    def forward_uplink(self, pending: PendingStagger, next_hop: int, now: float) -> LimaFrame:
        header = LimaHeader.data(
            HeaderType.UPLINK_DATA,
            source=self.own_id,
            seq=self._next_seq(),
            target=next_hop,
            ed_snr=pending.snr_db,
            ed_sf=pending.sf,
            version=self.config.protocol_version,
        )
        self.dedup_up.check_and_add(pending.view.dedup_key, now)
        self.routing.learn_downlink_route(pending.view, EdDirect.for_frame(pending.view), now)
        self.counters["forwards"] += 1
        return LimaFrame(header=header, inner=pending.view.raw)

    def tunnel_uplink(self, pending: PendingStagger, now: float) -> Union[LimaFrame, Drop]:
        """Entry-LR step: pick the next hop and encapsulate."""
        next_hop = self.routing.select_uplink_next_hop(now)
        if next_hop is NO_ROUTE:
            return self._drop(DropReason.NO_ROUTE)
        return self.forward_uplink(pending, next_hop, now)

    # -------------------------------------------------------------------------
    # LIMA frames
    # -------------------------------------------------------------------------

    def on_lima_uplink(self, header: LimaHeader, inner: bytes, now: float) -> LimaUplinkAction:
        try:
            view = _parse_inner(inner)
        except CodecError:
            return self._drop(DropReason.MALFORMED)
        self.on_overheard_lima_uplink(header, view, now)
        if header.target != self.own_id:
            return IGNORE
        if self.dedup_up.check_and_add(view.dedup_key, now):
            return self._drop(DropReason.DUPLICATE)
        next_hop = self.routing.select_uplink_next_hop(now)
        if next_hop is NO_ROUTE:
            return self._drop(DropReason.NO_ROUTE)
        self.routing.learn_downlink_route(view, header.sender, now)
        self.counters["forwards"] += 1
        return ForwardRewritten(LimaFrame(header.with_hop(self.own_id, next_hop), inner))

    def on_lima_downlink(self, header: LimaHeader, inner: bytes, now: float) -> DownlinkAction:
        if header.target != self.own_id:
            return IGNORE
        if self.dedup_down.check_and_add((header.source, header.seq), now):
            return self._drop(DropReason.DUPLICATE)
        try:
            view = _parse_inner(inner)
        except CodecError:
            return self._drop(DropReason.MALFORMED)

        if view.mtype == LorawanMType.JOIN_ACCEPT:
            route = self.routing.downlink.latest_join_route()
        else:
            route = self.routing.lookup_downlink(view.device_key) if view.device_key else None
        if route is None:
            return self._drop(DropReason.NO_DOWNLINK_ROUTE)

        if isinstance(route.next_hop, EdDirect):
            self.queue.push(route.key, inner, now)
            self.counters["exits"] += 1
            return ExitToEd(route.key)
        self.counters["forwards"] += 1
        return ForwardRewritten(LimaFrame(header.with_hop(self.own_id, route.next_hop), inner))

    def on_rem(self, header: LimaHeader, rssi_dbm: float, now: float) -> RemResult:
        result = self.routing.lr_process_rem(header, rssi_dbm, now)
        self.lr_update_dnof(header.rem_options().direct_receivables, now)
        return result

    def lr_update_dnof(self, receivables, now: float) -> None:
        if self.config.dnof_enabled:
            self.dnof.update(receivables, now)


class GatewayForwarder(_Forwarder):
    """Forwarding state of one LIMA Gateway."""

    def __init__(self, own_id: int, routing: RoutingEngine, config: ForwardingConfig, history: SnrHistory):
        super().__init__(own_id, routing, config)
        self.history = history
        self.tracker = DirectReceivableTracker(ttl=config.dnof_ttl_s)
        self.originator = RemOriginator(own_id, config.stp, config.protocol_version)

    def _metadata(self, view: LorawanFrameView) -> NsMetadata:
        snr, dr_string = self.history.metadata_for_ns(view.device_key, self.config.plan)
        return NsMetadata(dev_addr=view.dev_addr, snr_db=snr, dr_string=dr_string, gateway_id=self.own_id)

    def on_ed_uplink(
        self,
        frame: LorawanFrameView,
        snr_db: float,
        channel: int,
        sf: int,
        tp: TransmissionProfile,
        now: float,
    ) -> Union[DeliverToLg, Drop]:
        key = frame.device_key
        if key is None:
            return self._drop(DropReason.MALFORMED)
        join = frame.mtype == LorawanMType.JOIN_REQUEST
        self.rx_state.record_uplink(key, now, channel, sf, join=join)
        self.routing.learn_downlink_route(frame, EdDirect(key), now)
        self.history.record_reception(key, snr_db, sf, DIRECT, now)
        if frame.dev_addr is not None:
            self.lg_track_direct_receivable(frame.dev_addr, tp, now)
        return self._deliver(frame, now)

    def on_lima_uplink(self, header: LimaHeader, inner: bytes, now: float) -> LimaUplinkAction:
        if header.target != self.own_id:
            return IGNORE
        try:
            view = _parse_inner(inner)
        except CodecError:
            return self._drop(DropReason.MALFORMED)
        if view.device_key is None:
            return self._drop(DropReason.MALFORMED)
        self.routing.learn_downlink_route(view, header.sender, now)
        self.history.record_reception(view.device_key, header.ed_snr, header.ed_sf, header.source, now)
        return self._deliver(view, now)

    def _deliver(self, view: LorawanFrameView, now: float) -> Union[DeliverToLg, Drop]:
        if self.dedup_up.check_and_add(view.dedup_key, now):
            return self._drop(DropReason.DUPLICATE)
        self.counters["delivered"] += 1
        return DeliverToLg(payload=view.raw, view=view, metadata=self._metadata(view))

    def lg_track_direct_receivable(self, dev_addr: int, tp: TransmissionProfile, now: float) -> bool:
        if tp.at_or_below(self.config.stp):
            self.tracker.track(dev_addr, tp, now)
            return True
        return False

    def lg_build_rem_receivables(self, max_bytes: int, now: float) -> List[int]:
        return self.tracker.take(max_bytes, now)

    def lg_originate_rem(self, now: float) -> LimaFrame:
        receivables = self.lg_build_rem_receivables(self.config.rem_option_bytes, now)
        return self.originator.lg_originate_rem(now, receivables)

    def lg_handle_ns_downlink(
        self,
        payload: bytes,
        now: float,
        dev_eui: Optional[int] = None,
        sf: Optional[int] = None,
    ) -> Union[DirectTx, Tunnel, Drop]:
        """Route an NS downlink; JOIN-ACCEPTs are looked up by the dev_eui the NS supplies."""
        view = _parse_inner(payload)
        if view.mtype == LorawanMType.JOIN_ACCEPT:
            key = ("eui", dev_eui) if dev_eui is not None else None
        else:
            key = view.device_key
        route = self.routing.lookup_downlink(key) if key is not None else None
        if route is None:
            return self._drop(DropReason.NO_DOWNLINK_ROUTE)

        if isinstance(route.next_hop, EdDirect):
            self.queue.push(key, payload, now, sf=sf)
            return DirectTx(key, sf)

        header = LimaHeader.data(
            HeaderType.DOWNLINK_DATA,
            source=self.own_id,
            seq=self._next_seq(),
            target=route.next_hop,
            version=self.config.protocol_version,
        )
        self.counters["tunneled_downlinks"] += 1
        return Tunnel(route.next_hop, LimaFrame(header, payload))
