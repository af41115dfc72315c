"""
Trend gate for sweep tables.

check(rows, kind, strict) -> (passed, messages), messages prefixed
[OK] / [WARN] / [FAIL] and closed with [PASS] or [FAIL].
"""

import statistics
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Tuple, Union

from lima.core.model import Metrics

Row = Union[Metrics, Mapping]

LR_POWER_LIMIT_W = 0.02


def _as_dict(row: Row) -> dict:
    return row.model_dump() if isinstance(row, Metrics) else dict(row)


def _mean_by(rows: List[dict], x_field: str, metric: str) -> Dict[str, Dict[float, float]]:
    """mode -> x -> mean of metric over seeds (rows without a value are skipped)."""
    buckets: Dict[Tuple[str, float], List[float]] = defaultdict(list)
    for row in rows:
        value = row.get(metric)
        if value is None or value == "":
            continue
        buckets[(row["mode"], float(row[x_field]))].append(float(value))
    out: Dict[str, Dict[float, float]] = defaultdict(dict)
    for (mode, x), values in buckets.items():
        out[mode][x] = statistics.fmean(values)
    return out


def _compare(messages: List[str], ok: bool, text: str, strict: bool) -> bool:
    if ok:
        messages.append(f"[OK] {text}")
        return True
    messages.append(f"[FAIL] {text}" if strict else f"[WARN] {text}")
    return not strict


def _check_size(rows: List[dict], strict: bool, messages: List[str]) -> bool:
    passed = True
    pdr = _mean_by(rows, "area_side_km", "pdr_percent")
    energy = _mean_by(rows, "area_side_km", "energy_per_ed_j")
    latency = _mean_by(rows, "area_side_km", "latency_ms_mean")
    lima, base = pdr.get("lima", {}), pdr.get("baseline", {})
    shared = sorted(set(lima) & set(base))
    if not shared:
        messages.append("[WARN] No paired LIMA/baseline rows")
        return not strict

    largest = shared[-1]
    passed &= _compare(
        messages, lima[largest] >= 3.0 * base[largest],
        f"PDR at {largest:g} km: LIMA {lima[largest]:.1f}% vs baseline {base[largest]:.1f}% (need >= 3x)", strict,
    )
    for x in (x for x in shared if x >= 8.0):
        e_lima, e_base = energy["lima"].get(x), energy["baseline"].get(x)
        if e_lima is None or e_base is None:
            continue
        passed &= _compare(
            messages, e_lima <= e_base / 3.0,
            f"ED energy at {x:g} km: LIMA {e_lima:.3f} J vs baseline {e_base:.3f} J (need <= 1/3)", strict,
        )
    for x in (x for x in shared if x >= 5.0):
        l_lima = latency.get("lima", {}).get(x)
        l_base = latency.get("baseline", {}).get(x)
        if l_lima is None or l_base is None:
            messages.append(f"[WARN] No latency pair at {x:g} km")
            continue
        passed &= _compare(
            messages, l_lima < l_base,
            f"Latency at {x:g} km: LIMA {l_lima:.0f} ms vs baseline {l_base:.0f} ms", strict,
        )
    return passed


def _check_traffic(rows: List[dict], strict: bool, messages: List[str]) -> bool:
    passed = True
    pdr = _mean_by(rows, "packets_per_hour", "pdr_percent")
    energy = _mean_by(rows, "packets_per_hour", "energy_per_ed_j")
    lima, base = pdr.get("lima", {}), pdr.get("baseline", {})
    shared = sorted(set(lima) & set(base))
    if not shared:
        messages.append("[WARN] No paired LIMA/baseline rows")
        return not strict

    top = shared[-1]
    passed &= _compare(
        messages, lima[top] >= 1.5 * base[top],
        f"PDR at {top:g} pkt/h: LIMA {lima[top]:.1f}% vs baseline {base[top]:.1f}% (need >= 1.5x)", strict,
    )
    e_lima, e_base = energy["lima"].get(top), energy["baseline"].get(top)
    if e_lima is not None and e_base is not None:
        passed &= _compare(
            messages, e_lima <= e_base / 4.0,
            f"ED energy at {top:g} pkt/h: LIMA {e_lima:.3f} J vs baseline {e_base:.3f} J (need <= 1/4)", strict,
        )
    rates = sorted(lima)
    rising = [(a, b) for a, b in zip(rates, rates[1:]) if lima[b] > lima[a] + 1e-9]
    passed &= _compare(
        messages, not rising,
        "LIMA PDR nonincreasing in traffic rate" if not rising
        else f"LIMA PDR rises between {', '.join(f'{a:g}->{b:g}' for a, b in rising)} pkt/h",
        strict,
    )
    return passed


def check(rows: Iterable[Row], kind: str, strict: bool = False) -> Tuple[bool, List[str]]:
    """
    Evaluates sweep rows against the expected trends.
    kind is "size" or "traffic". Returns (Passed?, [Messages])
    """
    data = [_as_dict(r) for r in rows]
    messages: List[str] = []
    if not data:
        messages.append("[WARN] No rows to check")
        messages.append("[FAIL] Gate Failed" if strict else "[PASS] Gate Passed")
        return not strict, messages

    if kind == "size":
        passed = _check_size(data, strict, messages)
    elif kind == "traffic":
        passed = _check_traffic(data, strict, messages)
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")

    over = [r for r in data if r["mode"] == "lima" and float(r.get("lr_power_w") or 0.0) >= LR_POWER_LIMIT_W]
    if over:
        worst = max(float(r["lr_power_w"]) for r in over)
        passed &= _compare(messages, False, f"LR power {worst:.4f} W exceeds {LR_POWER_LIMIT_W} W", strict)
    else:
        messages.append(f"[OK] LR power below {LR_POWER_LIMIT_W} W in every LIMA row")

    messages.append("[PASS] Gate Passed" if passed else "[FAIL] Gate Failed")
    return passed, messages
