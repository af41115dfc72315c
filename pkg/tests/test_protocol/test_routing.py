import heapq
from typing import Dict, List, Tuple

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lima.protocol.codec import LimaHeader
from lima.protocol.routing import (
    NO_ROUTE,
    EdDirect,
    RemDecision,
    RemOriginator,
    RoutingEngine,
    hop_cost,
    seq_fresher,
)
from tests.fixtures.frames import STP, ed_uplink, join_request, rem_header

LG = 0x0010


def _engine(own_id: int = 0x0100, seed: int = 0, **kwargs) -> RoutingEngine:
    return RoutingEngine(own_id, rng=np.random.default_rng(seed), **kwargs)


@pytest.mark.parametrize("a, b, expected", [
    (1, 0, True),
    (0, 1, False),
    (0, 255, True),
    (127, 0, True),
    (128, 0, False),
    (5, 5, False),
])
def test_seq_fresher_examples(a, b, expected):
    assert seq_fresher(a, b) is expected, f"seq_fresher({a}, {b})"


@given(st.integers(0, 255), st.integers(1, 127))
def test_seq_fresher_is_antisymmetric_within_half_space(b, step):
    a = (b + step) % 256
    assert seq_fresher(a, b)
    assert not seq_fresher(b, a)


def test_hop_cost_is_negated_rssi():
    assert hop_cost(-97.4) == 97
    assert hop_cost(3.0) == 0


def test_first_rem_becomes_primary_and_is_rebroadcast():
    engine = _engine()
    result = engine.lr_process_rem(rem_header(LG, 0, LG), rssi_dbm=-90, now=0.0)

    assert result.decision == RemDecision.UPDATE_PRIMARY
    assert result.implied_cost == 90
    assert result.rebroadcast is not None, "Fresh REM must be rebroadcast"
    assert result.rebroadcast.sender == engine.own_id
    assert result.rebroadcast.rem_options().cost_from_source == 90
    assert engine.uplink.primary(LG).next_hop == LG


def test_same_seq_from_another_neighbour_is_backup_only():
    engine = _engine()
    engine.lr_process_rem(rem_header(LG, 0, LG), -100, 0.0)
    result = engine.lr_process_rem(rem_header(LG, 0, 0x0101, cost=40), -50, 0.1)

    assert result.decision == RemDecision.BACKUP_ONLY
    assert result.rebroadcast is None, "Only the first copy of a seq is rebroadcast"
    assert engine.uplink.primary(LG).next_hop == LG, "Primary stays on first arrival"
    assert engine.select_uplink_next_hop(0.2) == 0x0101, "Selection prefers least cost"


def test_duplicate_from_same_neighbour_is_discarded():
    engine = _engine()
    engine.lr_process_rem(rem_header(LG, 0, LG), -100, 0.0)
    engine.lr_process_rem(rem_header(LG, 0, 0x0101, cost=40), -50, 0.1)
    result = engine.lr_process_rem(rem_header(LG, 0, 0x0101, cost=40), -50, 0.2)

    assert result.decision == RemDecision.DISCARD


def test_own_rem_echo_is_discarded():
    engine = _engine(own_id=0x0100)
    engine.lr_process_rem(rem_header(LG, 0, LG), -90, 0.0)
    echo = engine.lr_process_rem(rem_header(LG, 0, 0x0100, cost=90), -80, 0.1)

    assert echo.decision == RemDecision.DISCARD
    assert engine.uplink.get(LG, 0x0100) is None, "No route through ourselves"


def test_newer_seq_replaces_primary():
    engine = _engine()
    engine.lr_process_rem(rem_header(LG, 0, LG), -100, 0.0)
    result = engine.lr_process_rem(rem_header(LG, 1, 0x0101, cost=10), -70, 600.0)

    assert result.decision == RemDecision.UPDATE_PRIMARY
    assert engine.uplink.primary(LG).next_hop == 0x0101
    assert len(engine.uplink.backups(LG)) == 1, "Old primary is kept as a backup"


def test_rebroadcast_ignores_cheaper_stale_backup():
    engine = _engine()
    engine.lr_process_rem(rem_header(LG, 0, 0x0101, cost=100), -60, 0.0)
    engine.lr_process_rem(rem_header(LG, 0, 0x0102), -50, 0.1)
    result = engine.lr_process_rem(rem_header(LG, 1, 0x0101, cost=100), -60, 600.0)

    assert engine.uplink.get(LG, 0x0102).cost == 50, "Backup from seq 0 is still live"
    assert result.rebroadcast.rem_options().cost_from_source == 160, "Primary cost, not the backup's"


def test_rebroadcast_carries_cost_of_its_own_lg():
    engine = _engine()
    lg2 = 0x0011
    engine.lr_process_rem(rem_header(LG, 0, LG), -40, 0.0)
    result = engine.lr_process_rem(rem_header(lg2, 0, 0x0102, cost=200), -60, 0.1)

    assert result.rebroadcast.source == lg2
    assert result.rebroadcast.rem_options().cost_from_source == 260, "Cheaper route to another LG must not leak"
    assert engine.own_cost(LG, 0.2) == 40


def test_older_seq_only_refreshes_backup():
    engine = _engine()
    engine.lr_process_rem(rem_header(LG, 10, LG), -100, 0.0)
    result = engine.lr_process_rem(rem_header(LG, 9, 0x0101), -70, 1.0)

    assert result.decision == RemDecision.BACKUP_ONLY
    assert engine.uplink.primary(LG).next_hop == LG


def test_backups_are_capped_dropping_worst_cost():
    engine = _engine(max_backups=2)
    engine.lr_process_rem(rem_header(LG, 0, LG), -100, 0.0)
    for i, cost in enumerate((50, 10, 30, 70)):
        engine.lr_process_rem(rem_header(LG, 0, 0x0200 + i, cost=cost), -60, 1.0 + i)

    backups = {e.next_hop for e in engine.uplink.backups(LG)}
    assert backups == {0x0201, 0x0202}, f"Kept backups: {sorted(backups)}"
    assert engine.uplink.primary(LG) is not None


def test_routes_expire_after_ttl():
    engine = _engine(rem_period_s=600.0, route_ttl_factor=3)
    engine.lr_process_rem(rem_header(LG, 0, LG), -90, 0.0)

    assert engine.select_uplink_next_hop(1800.0) == LG
    assert engine.select_uplink_next_hop(1800.1) is NO_ROUTE, "Stale entries must not be selected"
    engine.expire_routes(1800.1)
    assert len(engine.uplink) == 0


def test_expired_primary_promotes_freshest_backup():
    engine = _engine(rem_period_s=600.0, route_ttl_factor=3)
    engine.lr_process_rem(rem_header(LG, 0, LG), -90, 0.0)
    engine.lr_process_rem(rem_header(LG, 0, 0x0101, cost=20), -80, 1000.0)
    engine.expire_routes(1900.0)

    assert engine.uplink.primary(LG).next_hop == 0x0101


def test_no_route_before_any_rem():
    assert _engine().select_uplink_next_hop(0.0) is NO_ROUTE


def test_tied_costs_pick_among_the_tied_hops():
    picks = set()
    for seed in range(20):
        engine = _engine(seed=seed)
        engine.lr_process_rem(rem_header(LG, 0, 0x0101, cost=10), -50, 0.0)
        engine.lr_process_rem(rem_header(LG, 0, 0x0102, cost=20), -40, 0.0)
        engine.lr_process_rem(rem_header(LG, 0, 0x0103, cost=0), -90, 0.0)
        picks.add(engine.select_uplink_next_hop(1.0))

    assert picks <= {0x0101, 0x0102}, f"Non-minimal hop chosen: {picks}"


def test_downlink_route_follows_last_uplink_sender():
    engine = _engine()
    view = ed_uplink()
    engine.learn_downlink_route(view, 0x0101, 0.0)
    engine.learn_downlink_route(view, 0x0102, 5.0)

    assert engine.lookup_downlink(view.device_key).next_hop == 0x0102


def test_downlink_route_to_ed_and_by_dev_eui():
    engine = _engine()
    join = join_request(dev_eui=0xABCDEF)
    engine.learn_downlink_route(join, EdDirect.for_frame(join), 0.0)

    entry = engine.lookup_downlink(("eui", 0xABCDEF))
    assert entry is not None and entry.next_hop == EdDirect(("eui", 0xABCDEF))


def test_dump_routes_lines():
    engine = _engine()
    engine.lr_process_rem(rem_header(LG, 3, LG), -90, 0.0)
    engine.learn_downlink_route(ed_uplink(), EdDirect.for_frame(ed_uplink()), 0.0)
    lines = engine.dump_routes(10.0)

    assert lines[0] == "up\t0x0010\t0x0010\t90\t3\t10.0"
    assert lines[1].startswith("down\taddr:26000001\ted")


def test_originator_increments_seq_and_wraps():
    origin = RemOriginator(LG, STP)
    seqs = [origin.lg_originate_rem(float(i), []).header.seq for i in range(258)]

    assert seqs[:3] == [0, 1, 2]
    assert seqs[256:] == [0, 1], "Sequence wraps modulo 256"


# -----------------------------------------------------------------------------
# Convergence against a shortest-path oracle
# -----------------------------------------------------------------------------

Graph = Dict[int, Dict[int, int]]


def _random_topology(rng: np.random.Generator, n: int) -> Graph:
    """Connected graph: node 0 is the LG; RSSI in -120..-70 dBm, symmetric."""
    graph: Graph = {v: {} for v in range(n)}
    for v in range(1, n):
        u = int(rng.integers(v))
        graph[u][v] = graph[v][u] = -int(rng.integers(70, 121))
    for _ in range(n):
        u, v = (int(x) for x in rng.choice(n, size=2, replace=False))
        graph[u][v] = graph[v][u] = -int(rng.integers(70, 121))
    return graph


def _dijkstra(graph: Graph, source: int = 0) -> Dict[int, int]:
    dist = {source: 0}
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, rssi in graph[u].items():
            nd = d + hop_cost(rssi)
            if nd < dist.get(v, 1 << 30):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _flood(
    graph: Graph,
    engines: Dict[int, RoutingEngine],
    origin: RemOriginator,
    now: float,
    rng: np.random.Generator,
) -> List[LimaHeader]:
    """
    One REM round. Copies reach each receiver in order of the cost they imply
    there; equal costs arrive in a seeded random order. Returns every
    rebroadcast header.
    """
    heap: List[Tuple[int, float, int, LimaHeader, int]] = []
    counter = 0

    def transmit(header: LimaHeader, transmitter: int) -> None:
        nonlocal counter
        for v, rssi in graph[transmitter].items():
            implied = header.rem_options().cost_from_source + hop_cost(rssi)
            heapq.heappush(heap, (implied, float(rng.random()), counter, header, v))
            counter += 1

    transmit(origin.lg_originate_rem(now, []).header, 0)
    rebroadcasts: List[LimaHeader] = []
    while heap:
        _, _, _, header, receiver = heapq.heappop(heap)
        if receiver == 0:
            continue
        result = engines[receiver].lr_process_rem(header, graph[header.sender][receiver], now)
        if result.rebroadcast is not None:
            rebroadcasts.append(result.rebroadcast)
            transmit(result.rebroadcast, receiver)
    return rebroadcasts


@pytest.mark.parametrize("seed", range(50))
def test_selected_hop_lies_on_a_shortest_path(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 13))
    graph = _random_topology(rng, n)
    # Graph vertices double as node ids; vertex 0 is the LG
    engines = {v: RoutingEngine(v, rng=np.random.default_rng(seed * 100 + v), max_backups=n) for v in range(1, n)}
    origin = RemOriginator(0, STP)

    rebroadcasts: List[LimaHeader] = []
    for round_no in range(n + 2):
        rebroadcasts = _flood(graph, engines, origin, float(round_no), rng)

    dist = _dijkstra(graph)
    now = float(n + 2)
    for header in rebroadcasts:
        advertised = header.rem_options().cost_from_source
        assert advertised == dist[header.sender], (
            f"node {header.sender} advertised {advertised}, shortest {dist[header.sender]}"
        )
    for v, engine in engines.items():
        primary = engine.uplink.primary(0)
        assert primary is not None, f"node {v} has no primary"
        assert primary.cost == dist[v], f"node {v}: primary costs {primary.cost}, shortest {dist[v]}"
        assert hop_cost(graph[v][primary.next_hop]) + dist[primary.next_hop] == dist[v]

        hop = engine.select_uplink_next_hop(now)
        assert hop is not NO_ROUTE, f"node {v} has no route"
        step = hop_cost(graph[v][hop]) + dist[hop]
        assert step == dist[v], f"node {v}: via {hop} costs {step}, shortest {dist[v]}"
        assert engine.own_cost(0, now) == dist[v]


def test_flood_round_trip_uses_each_node_once():
    rng = np.random.default_rng(99)
    graph = _random_topology(rng, 8)
    engines = {v: RoutingEngine(v, rng=np.random.default_rng(v)) for v in range(1, 8)}
    origin = RemOriginator(0, STP)
    rebroadcasts = _flood(graph, engines, origin, 0.0, rng)

    seen: List[Tuple[int, int]] = [pair for e in engines.values() for pair in e.state.rebroadcast_done]
    assert len(seen) == 7, f"Each LR rebroadcasts seq 0 once, got {seen}"
    assert sorted(h.sender for h in rebroadcasts) == list(range(1, 8))
