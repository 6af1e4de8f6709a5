"""Append-only JSONL store for finished grid cells.

One line per cell. Every append is flushed and fsynced so a killed run loses
at most the line being written; a torn final line is ignored on load.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

__all__ = ["ResultStore"]


class ResultStore:
    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> list[dict]:
        if not self.path.exists():
            return []
        records = []
        with self.path.open("r", encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                if i >= len(lines) - 2:
                    break  # torn tail from an interrupted append
                raise
        return records

    def _repair_tail(self) -> None:
        # drop a partial trailing line so the next append starts cleanly
        if not self.path.exists():
            return
        data = self.path.read_bytes()
        if data and not data.endswith(b"\n"):
            cut = data.rfind(b"\n") + 1
            with self.path.open("r+b") as fh:
                fh.truncate(cut)

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._repair_tail()
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())

    def reset(self) -> None:
        with self._lock:
            if self.path.exists():
                self.path.unlink()
