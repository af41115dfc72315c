from typing import List, Optional, Tuple

import pytest

from lima.core.errors import NoHistory
from lima.protocol.adr import (
    DIRECT,
    NO_CHANGE,
    NsMetadata,
    SnrHistory,
    ns_compute_adr,
    required_snr,
)
from lima.protocol.codec import decode
from lima.protocol.lorawan import LinkAdrReq
from lima.radio.region import EU868
from lima.sim.network_server import NetworkServer
from tests.fixtures.frames import ED_ADDR, LG_ID, ed_uplink

KEY = ("addr", ED_ADDR)


def test_history_keeps_only_the_latest_records():
    history = SnrHistory(depth=3)
    for i, snr in enumerate((20.0, 1.0, 2.0, 3.0)):
        history.record_reception(KEY, snr, 7, DIRECT, float(i))

    assert [r.snr_db for r in history.records(KEY)] == [1.0, 2.0, 3.0], "Oldest record falls out"
    assert history.best(KEY).snr_db == 3.0


def test_history_tie_prefers_most_recent():
    history = SnrHistory(depth=5)
    history.record_reception(KEY, 4.0, 12, DIRECT, 0.0)
    history.record_reception(KEY, 4.0, 9, 0x0100, 1.0)

    best = history.best(KEY)
    assert (best.sf, best.received_via) == (9, 0x0100)


def test_metadata_reports_best_copy_and_its_data_rate():
    history = SnrHistory()
    history.record_reception(KEY, -6.0, 12, DIRECT, 0.0)
    history.record_reception(KEY, 11.0, 10, 0x0100, 0.1)

    assert history.metadata_for_ns(KEY, EU868) == (11.0, "SF10BW125")


def test_metadata_without_history_raises():
    with pytest.raises(NoHistory):
        SnrHistory().metadata_for_ns(KEY)


def test_history_depth_must_be_positive():
    with pytest.raises(ValueError):
        SnrHistory(depth=0)


def test_ns_metadata_to_dict():
    meta = NsMetadata(dev_addr=ED_ADDR, snr_db=3.5, dr_string="SF7BW125", gateway_id=LG_ID)
    assert meta.to_dict() == {"dev_addr": "26000001", "snr_db": 3.5, "dr_string": "SF7BW125", "gateway_id": "0010"}


# -----------------------------------------------------------------------------
# NS ADR
# -----------------------------------------------------------------------------

def test_good_link_climbs_to_fastest_rate_then_cuts_power():
    decision = ns_compute_adr(18.0, 0, 14, EU868)
    # margin 28 dB -> 9 steps: 5 data rates, then 4 power steps
    assert (decision.new_dr.index, decision.new_power_dbm) == (5, 6)


def test_small_margin_is_no_change():
    assert ns_compute_adr(required_snr(9) + 12.0, 3, 14, EU868) is NO_CHANGE


def test_negative_margin_raises_power_up_to_max():
    decision = ns_compute_adr(-20.0, 5, 2, EU868)
    assert (decision.new_dr.index, decision.new_power_dbm) == (5, 14)


def test_power_never_drops_below_minimum():
    decision = ns_compute_adr(40.0, 5, 4, EU868)
    assert decision.new_power_dbm == 2


@pytest.mark.parametrize("sf", [7, 8, 9, 10, 11, 12])
def test_required_snr_ladder(sf):
    assert required_snr(sf) == pytest.approx(-7.5 - 2.5 * (sf - 7))


def test_better_snr_never_yields_slower_settings():
    settings = []
    for snr in range(-20, 40):
        decision = ns_compute_adr(float(snr), 0, 14, EU868)
        settings.append((0, 14) if decision is NO_CHANGE else (decision.new_dr.index, decision.new_power_dbm))

    order = [(dr, -power) for dr, power in settings]
    assert order == sorted(order), f"Settings not monotone in SNR: {settings}"


# -----------------------------------------------------------------------------
# Tunneled ADR end to end
# -----------------------------------------------------------------------------

LR_LINK_DB = 18
DIRECT_LINK_DB = 5


class _Device:
    """ED that applies LinkADRReq commands; SNR falls 1 dB per dB of power cut."""

    def __init__(self):
        self.dr = 0
        self.power = 14
        self.fcnt = 0

    @property
    def sf(self) -> int:
        return EU868.dr(self.dr).sf

    def apply(self, payload: bytes) -> None:
        command = LinkAdrReq.parse(decode(payload).view.frm_payload)
        self.dr = command.dr_index
        self.power = 14 - 2 * command.power_index


def _uplink(ns: NetworkServer, history: SnrHistory, ed: _Device, with_relay: bool) -> Optional[Tuple[int, int]]:
    view = ed_uplink(fcnt=ed.fcnt)
    ed.fcnt += 1
    loss = 14 - ed.power
    direct = DIRECT_LINK_DB - loss
    if direct >= required_snr(ed.sf):
        history.record_reception(KEY, direct, ed.sf, DIRECT, float(ed.fcnt))
    if with_relay:
        history.record_reception(KEY, LR_LINK_DB - loss, ed.sf, 0x0100, float(ed.fcnt))

    snr, dr_string = history.metadata_for_ns(KEY, EU868)
    downlink = ns.on_uplink(view, NsMetadata(ED_ADDR, snr, dr_string, LG_ID), ed.fcnt * 1_000_000)
    if downlink is None:
        return None
    ed.apply(downlink.payload)
    return ed.dr, ed.power


def test_tunneled_snr_drives_adr_and_recovers_when_relay_leaves():
    ns = NetworkServer(EU868)
    history = SnrHistory(depth=5)
    ed = _Device()

    commands: List[Optional[Tuple[int, int]]] = [_uplink(ns, history, ed, with_relay=True) for _ in range(10)]
    assert commands[0] == (5, 6), f"First command: {commands[0]}"
    assert commands[3] == (5, 2), f"Relay copy keeps cutting power: {commands}"
    assert all(c is None for i, c in enumerate(commands) if i not in (0, 3)), f"Commands: {commands}"
    assert (ed.sf, ed.power) == (7, 2), "Relay-assisted ED settles at SF7 / 2 dBm within h+2 uplinks"

    after: List[Optional[Tuple[int, int]]] = [_uplink(ns, history, ed, with_relay=False) for _ in range(10)]
    assert after[:4] == [None] * 4, "Stale relay records keep the old settings until they age out"
    assert after[4] == (5, 10), f"Power raised once only direct copies remain: {after}"
    assert after[5] == (5, 12)
    assert all(c is None for c in after[6:]), f"Settled after h+3 uplinks: {after}"
    assert (ed.sf, ed.power) == (7, 12)


def test_adr_disabled_sends_no_commands():
    ns = NetworkServer(EU868, adr_enabled=False)
    history = SnrHistory()
    ed = _Device()
    assert [_uplink(ns, history, ed, with_relay=True) for _ in range(3)] == [None] * 3
