"""Line-delimited JSON event trace of one run."""

import json
from pathlib import Path
from typing import IO, Any, Optional


class Trace:
    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path else None
        self._fh: Optional[IO[str]] = None
        self.records = 0

    @property
    def enabled(self) -> bool:
        return self.path is not None

    def __enter__(self) -> "Trace":
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    def emit(self, event: str, t_us: int, **fields: Any) -> None:
        if self._fh is None:
            return
        record = {"t_us": t_us, "event": event}
        record.update(fields)
        self._fh.write(json.dumps(record, sort_keys=False, default=str) + "\n")
        self.records += 1

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


NULL_TRACE = Trace()
