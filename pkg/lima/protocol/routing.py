"""
Route establishment
===================

Uplink routes toward LGs are built from periodic Route Establishment Messages
(REMs) flooded by every LG. Downlink routes toward EDs are the reverse of the
most recent uplink path.

Per-hop cost is max(0, -RSSI) in whole dB, accumulated with 16-bit saturation.
Every neighbour a REM arrives from gets an entry; only the first REM of a
sequence number makes a new primary and is rebroadcast.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple, Union

import numpy as np

from lima.protocol.codec import (
    HeaderType,
    LimaFrame,
    LimaHeader,
    LorawanFrameView,
    RemOptions,
    TransmissionProfile,
    encapsulate,
    saturating_add,
)

logger = logging.getLogger("Lima.Routing")

DeviceKey = Tuple[str, int]


def seq_fresher(a: int, b: int) -> bool:
    """Serial-number comparison in modulo-256 space."""
    return 0 < (a - b) % 256 < 128


def hop_cost(rssi_dbm: float) -> int:
    return max(0, int(round(-rssi_dbm)))


class RemDecision(Enum):
    UPDATE_PRIMARY = "UpdatePrimary+Rebroadcast"
    BACKUP_ONLY = "BackupOnly"
    DISCARD = "Discard"


class NoRoute(Enum):
    NO_ROUTE = "NoRoute"

    def __repr__(self) -> str:
        return "NoRoute"


NO_ROUTE = NoRoute.NO_ROUTE


@dataclass(frozen=True)
class EdDirect:
    """Downlink next hop meaning "transmit to the ED itself"."""
    address: DeviceKey

    @classmethod
    def for_frame(cls, view: LorawanFrameView) -> "EdDirect":
        key = view.device_key
        if key is None:
            raise ValueError(f"{view.mtype.label} carries no device key")
        return cls(key)


NextHop = Union[int, EdDirect]


@dataclass
class UplinkRouteEntry:
    dest_lg: int
    next_hop: int
    cost: int
    seq_tag: int
    learned_at: float
    primary: bool = False


@dataclass
class DownlinkRouteEntry:
    key: DeviceKey
    next_hop: NextHop
    learned_at: float


@dataclass
class RemState:
    last_seq: Dict[int, int] = field(default_factory=dict)
    rebroadcast_done: Set[Tuple[int, int]] = field(default_factory=set)

    def mark_rebroadcast(self, source: int, seq: int) -> bool:
        """Record a rebroadcast; False if (source, seq) was already rebroadcast."""
        if (source, seq) in self.rebroadcast_done:
            return False
        # Keep only the half of sequence space that can still be compared
        self.rebroadcast_done = {
            (s, q) for (s, q) in self.rebroadcast_done
            if s != source or (seq - q) % 256 < 128
        }
        self.rebroadcast_done.add((source, seq))
        return True


@dataclass(frozen=True)
class RemResult:
    decision: RemDecision
    implied_cost: int
    rebroadcast: Optional[LimaHeader] = None


class UplinkRouteTable:
    """Per-LG entries keyed by next hop; exactly one primary per LG."""

    def __init__(self, max_backups: int = 4):
        self.max_backups = max_backups
        self._entries: Dict[int, Dict[int, UplinkRouteEntry]] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self._entries.values())

    def destinations(self) -> List[int]:
        return sorted(self._entries)

    def entries(self, dest_lg: Optional[int] = None) -> List[UplinkRouteEntry]:
        dests = [dest_lg] if dest_lg is not None else self.destinations()
        out: List[UplinkRouteEntry] = []
        for dest in dests:
            out.extend(sorted(self._entries.get(dest, {}).values(), key=lambda e: e.next_hop))
        return out

    def get(self, dest_lg: int, next_hop: int) -> Optional[UplinkRouteEntry]:
        return self._entries.get(dest_lg, {}).get(next_hop)

    def primary(self, dest_lg: int) -> Optional[UplinkRouteEntry]:
        for entry in self._entries.get(dest_lg, {}).values():
            if entry.primary:
                return entry
        return None

    def backups(self, dest_lg: int) -> List[UplinkRouteEntry]:
        return [e for e in self.entries(dest_lg) if not e.primary]

    def set_primary(self, dest_lg: int, next_hop: int, cost: int, seq_tag: int, now: float) -> UplinkRouteEntry:
        per_dest = self._entries.setdefault(dest_lg, {})
        for entry in per_dest.values():
            entry.primary = False
        entry = UplinkRouteEntry(dest_lg, next_hop, cost, seq_tag, now, primary=True)
        per_dest[next_hop] = entry
        self._trim(dest_lg)
        return entry

    def upsert_backup(self, dest_lg: int, next_hop: int, cost: int, seq_tag: int, now: float) -> UplinkRouteEntry:
        per_dest = self._entries.setdefault(dest_lg, {})
        existing = per_dest.get(next_hop)
        entry = UplinkRouteEntry(
            dest_lg, next_hop, cost, seq_tag, now,
            primary=existing.primary if existing else False,
        )
        per_dest[next_hop] = entry
        if not self.primary(dest_lg):
            entry.primary = True
        self._trim(dest_lg)
        return entry

    def _trim(self, dest_lg: int) -> None:
        backups = [e for e in self._entries[dest_lg].values() if not e.primary]
        if len(backups) <= self.max_backups:
            return
        # Worst cost goes first, oldest among equals
        backups.sort(key=lambda e: (-e.cost, e.learned_at, e.next_hop))
        for victim in backups[: len(backups) - self.max_backups]:
            del self._entries[dest_lg][victim.next_hop]

    def live(self, now: float, ttl: float) -> List[UplinkRouteEntry]:
        return [e for e in self.entries() if now - e.learned_at <= ttl]

    def best_cost(self, dest_lg: int, now: float, ttl: float) -> Optional[int]:
        costs = [e.cost for e in self.entries(dest_lg) if now - e.learned_at <= ttl]
        return min(costs) if costs else None

    def expire(self, now: float, ttl: float) -> int:
        removed = 0
        for dest in list(self._entries):
            per_dest = self._entries[dest]
            had_primary = any(e.primary for e in per_dest.values())
            for hop in [h for h, e in per_dest.items() if now - e.learned_at > ttl]:
                del per_dest[hop]
                removed += 1
            if not per_dest:
                del self._entries[dest]
                continue
            if had_primary and not any(e.primary for e in per_dest.values()):
                freshest = max(per_dest.values(), key=lambda e: (e.learned_at, -e.cost, -e.next_hop))
                freshest.primary = True
        return removed

    def snapshot(self) -> List[UplinkRouteEntry]:
        return [replace(e) for e in self.entries()]


class DownlinkRouteTable:
    def __init__(self):
        self._entries: Dict[DeviceKey, DownlinkRouteEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def learn(self, key: DeviceKey, next_hop: NextHop, now: float) -> DownlinkRouteEntry:
        entry = DownlinkRouteEntry(key, next_hop, now)
        self._entries[key] = entry
        return entry

    def lookup(self, key: DeviceKey) -> Optional[DownlinkRouteEntry]:
        return self._entries.get(key)

    def latest_join_route(self) -> Optional[DownlinkRouteEntry]:
        """Most recently learned DevEUI-keyed route."""
        joins = [e for e in self._entries.values() if e.key[0] == "eui"]
        if not joins:
            return None
        return max(joins, key=lambda e: e.learned_at)

    def entries(self) -> List[DownlinkRouteEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def expire(self, now: float, ttl: float) -> int:
        stale = [k for k, e in self._entries.items() if now - e.learned_at > ttl]
        for key in stale:
            del self._entries[key]
        return len(stale)


def format_next_hop(hop: NextHop) -> str:
    if isinstance(hop, EdDirect):
        return "ed"
    return f"0x{hop:04X}"


def format_key(key: DeviceKey) -> str:
    kind, value = key
    width = 16 if kind == "eui" else 8
    return f"{kind}:{value:0{width}X}"


class RoutingEngine:
    """
    Routing state of one LIMA node (LR or LG).

    All mutation happens from the owning node's event handlers.
    """

    def __init__(
        self,
        own_id: int,
        rng: np.random.Generator,
        rem_period_s: float = 600.0,
        route_ttl_factor: int = 3,
        max_backups: int = 4,
        downlink_ttl_s: float = 3600.0,
    ):
        self.own_id = own_id
        self.rng = rng
        self.route_ttl = route_ttl_factor * rem_period_s
        self.downlink_ttl = downlink_ttl_s
        self.state = RemState()
        self.uplink = UplinkRouteTable(max_backups=max_backups)
        self.downlink = DownlinkRouteTable()

    # -------------------------------------------------------------------------
    # REM processing
    # -------------------------------------------------------------------------

    def lr_process_rem(self, header: LimaHeader, rssi_dbm: float, now: float) -> RemResult:
        if header.header_type != HeaderType.REM:
            raise ValueError(f"expected a REM, got {header.header_type.label}")
        source, seq, sender = header.source, header.seq, header.sender
        options = header.rem_options()
        implied = saturating_add(options.cost_from_source, hop_cost(rssi_dbm))

        if source == self.own_id or sender == self.own_id:
            return RemResult(RemDecision.DISCARD, implied)

        last = self.state.last_seq.get(source)
        if last is None or seq_fresher(seq, last):
            self.state.last_seq[source] = seq
            self.uplink.set_primary(source, sender, implied, seq, now)
            if not self.state.mark_rebroadcast(source, seq):
                return RemResult(RemDecision.BACKUP_ONLY, implied)
            advertised = self.advertised_cost(source)
            rebroadcast = LimaHeader.rem(
                source=source,
                seq=seq,
                sender=self.own_id,
                options=replace(options, cost_from_source=advertised),
                version=header.prefix.protocol_version,
            )
            logger.debug("node %04X: REM %04X/%d via %04X cost %d, rebroadcast %d",
                         self.own_id, source, seq, sender, implied, advertised)
            return RemResult(RemDecision.UPDATE_PRIMARY, implied, rebroadcast)

        existing = self.uplink.get(source, sender)
        if existing is not None and not seq_fresher(seq, existing.seq_tag):
            return RemResult(RemDecision.DISCARD, implied)
        self.uplink.upsert_backup(source, sender, implied, seq, now)
        return RemResult(RemDecision.BACKUP_ONLY, implied)

    def own_cost(self, dest_lg: int, now: float) -> Optional[int]:
        return self.uplink.best_cost(dest_lg, now, self.route_ttl)

    def advertised_cost(self, dest_lg: int) -> int:
        """
        Cost carried in a rebroadcast REM of dest_lg: the current primary's cost
        toward that same LG. Backups and routes to other LGs never leak into it.
        """
        primary = self.uplink.primary(dest_lg)
        return primary.cost if primary is not None else 0

    # -------------------------------------------------------------------------
    # Next hop selection
    # -------------------------------------------------------------------------

    def select_uplink_next_hop(self, now: float) -> Union[int, NoRoute]:
        live = self.uplink.live(now, self.route_ttl)
        if not live:
            return NO_ROUTE
        best = min(e.cost for e in live)
        candidates = sorted({e.next_hop for e in live if e.cost == best})
        if len(candidates) == 1:
            return candidates[0]
        return candidates[int(self.rng.integers(len(candidates)))]

    # -------------------------------------------------------------------------
    # Downlink routes
    # -------------------------------------------------------------------------

    def learn_downlink_route(self, frame: LorawanFrameView, sender: NextHop, now: float) -> Optional[DownlinkRouteEntry]:
        key = frame.device_key
        if key is None or key[1] is None:
            return None
        return self.downlink.learn(key, sender, now)

    def lookup_downlink(self, key: DeviceKey) -> Optional[DownlinkRouteEntry]:
        return self.downlink.lookup(key)

    # -------------------------------------------------------------------------
    # Housekeeping
    # -------------------------------------------------------------------------

    def expire_routes(self, now: float) -> None:
        removed = self.uplink.expire(now, self.route_ttl)
        removed += self.downlink.expire(now, self.downlink_ttl)
        if removed:
            logger.debug("node %04X: expired %d routes", self.own_id, removed)

    def dump_routes(self, now: float) -> List[str]:
        """direction, key, next_hop, cost, seq_tag, age_s (tab separated)."""
        lines = []
        for e in self.uplink.entries():
            direction = "up" if e.primary else "up-backup"
            lines.append("\t".join([
                direction, f"0x{e.dest_lg:04X}", f"0x{e.next_hop:04X}",
                str(e.cost), str(e.seq_tag), f"{now - e.learned_at:.1f}",
            ]))
        for e in self.downlink.entries():
            lines.append("\t".join([
                "down", format_key(e.key), format_next_hop(e.next_hop),
                "-", "-", f"{now - e.learned_at:.1f}",
            ]))
        return lines


class RemOriginator:
    """LG side: periodic REMs with a per-LG sequence counter."""

    def __init__(self, lg_id: int, stp: TransmissionProfile, protocol_version: int = 0):
        self.lg_id = lg_id
        self.stp = stp
        self.protocol_version = protocol_version
        self._next_seq = 0

    def lg_originate_rem(self, now: float, receivables: List[int]) -> LimaFrame:
        seq = self._next_seq
        self._next_seq = (self._next_seq + 1) % 256
        options = RemOptions(
            tp_code=self.stp.to_code(),
            cost_from_source=0,
            direct_receivables=tuple(receivables),
        )
        header = LimaHeader.rem(self.lg_id, seq, self.lg_id, options, self.protocol_version)
        logger.debug("LG %04X: REM seq %d with %d receivables at %.3f", self.lg_id, seq, len(receivables), now)
        return LimaFrame(header=header, inner=b"")

    def encode(self, frame: LimaFrame) -> bytes:
        return encapsulate(frame.inner, frame.header)
