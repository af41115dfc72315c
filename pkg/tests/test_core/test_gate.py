import pytest

from lima.core import gate


def _row(mode, x, pdr, energy, latency, lr_power=0.005, x_field="area_side_km"):
    return {
        "mode": mode, x_field: x, "pdr_percent": pdr, "energy_per_ed_j": energy,
        "latency_ms_mean": latency, "lr_power_w": lr_power if mode == "lima" else 0.0,
    }


def _size_rows(lima_pdr=90.0, base_pdr=10.0, lr_power=0.005):
    rows = []
    for x in (2.0, 6.0, 10.0):
        rows.append(_row("lima", x, lima_pdr, 1.0, 400.0, lr_power))
        rows.append(_row("baseline", x, base_pdr, 10.0, 1500.0))
    return rows


def _traffic_rows(lima_pdrs=(95.0, 90.0, 80.0)):
    rows = []
    for pph, pdr in zip((0.5, 2.0, 12.0), lima_pdrs):
        rows.append(_row("lima", pph, pdr, 1.0, 400.0, x_field="packets_per_hour"))
        rows.append(_row("baseline", pph, 20.0, 10.0, 1500.0, x_field="packets_per_hour"))
    return rows


def test_size_gate_passes_on_expected_trends():
    passed, messages = gate.check(_size_rows(), "size", strict=True)

    assert passed, f"Gate messages: {messages}"
    assert messages[-1] == "[PASS] Gate Passed"
    assert all(m.startswith("[OK]") for m in messages[:-1])


def test_size_gate_pdr_shortfall_warns_unless_strict():
    rows = _size_rows(lima_pdr=20.0)

    passed, messages = gate.check(rows, "size")
    assert passed
    assert any(m.startswith("[WARN] PDR at 10 km") for m in messages), f"Messages: {messages}"

    passed, messages = gate.check(rows, "size", strict=True)
    assert not passed
    assert messages[-1] == "[FAIL] Gate Failed"


def test_lr_power_limit_is_checked():
    passed, messages = gate.check(_size_rows(lr_power=0.05), "size", strict=True)

    assert not passed
    assert any("LR power 0.0500 W" in m for m in messages)


def test_seeds_are_averaged():
    rows = _size_rows() + [_row("lima", 10.0, 0.0, 1.0, 400.0)]
    # LIMA mean at 10 km drops to 45%, still >= 3x the baseline
    passed, _ = gate.check(rows, "size", strict=True)
    assert passed


def test_traffic_gate_passes_on_decreasing_pdr():
    passed, messages = gate.check(_traffic_rows(), "traffic", strict=True)
    assert passed, f"Gate messages: {messages}"


def test_traffic_gate_flags_rising_pdr():
    passed, messages = gate.check(_traffic_rows((80.0, 90.0, 85.0)), "traffic", strict=True)

    assert not passed
    assert any("rises between 0.5->2" in m for m in messages), f"Messages: {messages}"


def test_missing_latency_is_a_warning():
    rows = _size_rows()
    for row in rows:
        row["latency_ms_mean"] = None
    passed, messages = gate.check(rows, "size", strict=True)

    assert passed
    assert "[WARN] No latency pair at 6 km" in messages


def test_empty_rows():
    assert gate.check([], "size") == (True, ["[WARN] No rows to check", "[PASS] Gate Passed"])
    assert gate.check([], "size", strict=True)[0] is False


def test_unknown_kind_raises():
    with pytest.raises(ValueError):
        gate.check(_size_rows(), "density")
