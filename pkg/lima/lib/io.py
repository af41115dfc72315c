"""
CSV tables and JSON sidecars for run results.

The CSV header is fixed (CSV_COLUMNS): loss reasons get one column each so
the header never depends on which reasons a run happened to see. The JSON
sidecar carries the full scenario and every row for reproduction.
"""

import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO

from lima import __version__
from lima.core.model import Metrics, Scenario
from lima.sim.metrics import LOSS_REASONS, UNRESOLVED

SCALAR_COLUMNS = (
    "mode", "area_side_km", "ed_count", "lr_count", "traffic_period_s", "packets_per_hour", "seed",
    "sim_hours", "pdr_percent", "energy_per_ed_j", "latency_ms_mean", "energy_per_lr_j",
    "idle_energy_per_lr_j", "lr_power_w", "sent", "delivered", "in_flight", "lima_frames_tx",
    "mean_final_sf", "zero_packets",
)
LOSS_COLUMNS = tuple(f"lost_{reason}" for reason in (*LOSS_REASONS, UNRESOLVED))
CSV_COLUMNS = SCALAR_COLUMNS + LOSS_COLUMNS


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return f"{value:.6g}"
    return value


def metrics_row(m: Metrics) -> Dict[str, Any]:
    row = {name: _cell(getattr(m, name)) for name in SCALAR_COLUMNS}
    for reason in (*LOSS_REASONS, UNRESOLVED):
        row[f"lost_{reason}"] = m.lost.get(reason, 0)
    return row


def write_csv(rows: Iterable[Metrics], fh: TextIO) -> None:
    writer = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for m in rows:
        writer.writerow(metrics_row(m))


def csv_text(rows: Iterable[Metrics]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def save_results(rows: Sequence[Metrics], path: Path, scenario: Optional[Scenario] = None,
                 command: Optional[str] = None) -> Path:
    """Write rows to path (CSV) and path.with_suffix('.json'); returns the sidecar path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        write_csv(rows, f)

    sidecar = path.with_suffix(".json")
    blob = {
        "lima_version": __version__,
        "command": command,
        "scenario": scenario.model_dump(mode="json") if scenario is not None else None,
        "rows": [m.model_dump(mode="json") for m in rows],
    }
    with open(sidecar, "w", encoding="utf-8") as f:
        json.dump(blob, f, indent=2, sort_keys=True)
    return sidecar


def load_rows(path: Path) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
