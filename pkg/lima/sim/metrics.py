"""
Packet ledger.

Every ED uplink ends in exactly one state: delivered, lost (with the last
reason recorded against it) or still in flight when the run stops.
"""

import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

PacketKey = Tuple[int, int]  # (DevAddr, FCnt)

LOSS_REASONS = (
    "Dnof", "NotDer", "Duplicate", "NoRoute", "Stale", "TooLarge", "DutyCycle",
    "BelowSensitivity", "Collision", "HalfDuplex", "NotListening",
)

# Only recorded when nothing more specific is known
WEAK_REASONS = frozenset({"BelowSensitivity", "NotListening"})
UNRESOLVED = "Unresolved"


@dataclass
class PacketRecord:
    key: PacketKey
    ed_index: int
    sent_us: int
    first_hop_airtime_us: int
    delivered_us: Optional[int] = None
    reason: Optional[str] = None

    @property
    def latency_us(self) -> Optional[int]:
        if self.delivered_us is None:
            return None
        return self.delivered_us - self.sent_us


@dataclass
class LedgerSummary:
    sent: int
    delivered: int
    in_flight: int
    lost: Dict[str, int] = field(default_factory=dict)
    latencies_ms: List[float] = field(default_factory=list)

    @property
    def pdr_percent(self) -> float:
        if self.sent == 0:
            return 100.0
        return 100.0 * self.delivered / self.sent

    @property
    def latency_ms_mean(self) -> Optional[float]:
        return statistics.fmean(self.latencies_ms) if self.latencies_ms else None

    @property
    def balanced(self) -> bool:
        return self.sent == self.delivered + sum(self.lost.values()) + self.in_flight


class PacketLedger:
    def __init__(self):
        self.records: Dict[PacketKey, PacketRecord] = {}

    def sent(self, key: PacketKey, ed_index: int, now_us: int, airtime_us: int) -> PacketRecord:
        record = PacketRecord(key, ed_index, now_us, airtime_us)
        self.records[key] = record
        return record

    def delivered(self, key: PacketKey, now_us: int) -> bool:
        record = self.records.get(key)
        if record is None or record.delivered_us is not None:
            return False
        record.delivered_us = now_us
        return True

    def lost(self, key: Optional[PacketKey], reason: str) -> None:
        record = self.records.get(key) if key is not None else None
        if record is None or record.delivered_us is not None:
            return
        if reason in WEAK_REASONS and record.reason is not None:
            return
        record.reason = reason

    def summarize(self, in_flight: Iterable[PacketKey] = ()) -> LedgerSummary:
        pending: Set[PacketKey] = set(in_flight)
        lost: Counter = Counter()
        delivered = 0
        still_flying = 0
        latencies: List[float] = []
        for record in self.records.values():
            if record.delivered_us is not None:
                delivered += 1
                latencies.append(record.latency_us / 1000.0)
            elif record.key in pending:
                still_flying += 1
            else:
                lost[record.reason or UNRESOLVED] += 1
        return LedgerSummary(
            sent=len(self.records),
            delivered=delivered,
            in_flight=still_flying,
            lost=dict(sorted(lost.items())),
            latencies_ms=latencies,
        )
