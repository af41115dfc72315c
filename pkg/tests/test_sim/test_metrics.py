from lima.sim.metrics import UNRESOLVED, PacketLedger


def _ledger(n: int = 4) -> PacketLedger:
    ledger = PacketLedger()
    for fcnt in range(n):
        ledger.sent((1, fcnt), 0, fcnt * 1000, 100)
    return ledger


def test_every_packet_ends_in_one_state():
    ledger = _ledger(4)
    ledger.delivered((1, 0), 5_000)
    ledger.lost((1, 1), "Collision")
    summary = ledger.summarize(in_flight=[(1, 2)])

    assert (summary.sent, summary.delivered, summary.in_flight) == (4, 1, 1)
    assert summary.lost == {"Collision": 1, UNRESOLVED: 1}
    assert summary.balanced


def test_latency_from_send_to_delivery():
    ledger = _ledger(2)
    ledger.delivered((1, 0), 250_000)
    ledger.delivered((1, 1), 1_001_000)

    assert ledger.summarize().latencies_ms == [250.0, 1000.0]
    assert ledger.summarize().latency_ms_mean == 625.0


def test_weak_reason_does_not_override_specific_one():
    ledger = _ledger(1)
    ledger.lost((1, 0), "Collision")
    ledger.lost((1, 0), "BelowSensitivity")
    assert ledger.summarize().lost == {"Collision": 1}


def test_specific_reason_replaces_weak_one():
    ledger = _ledger(1)
    ledger.lost((1, 0), "NotListening")
    ledger.lost((1, 0), "NoRoute")
    assert ledger.summarize().lost == {"NoRoute": 1}


def test_delivery_wins_over_loss():
    ledger = _ledger(1)
    ledger.lost((1, 0), "Collision")
    assert ledger.delivered((1, 0), 10)
    assert not ledger.delivered((1, 0), 20), "Second delivery of the same packet is not counted"

    summary = ledger.summarize()
    assert (summary.delivered, summary.lost) == (1, {})


def test_no_traffic_is_full_delivery():
    summary = PacketLedger().summarize()
    assert summary.pdr_percent == 100.0
    assert summary.latency_ms_mean is None
