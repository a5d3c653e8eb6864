"""Line-delimited run traces shared by the CLI, the pipeline, and inspection.

A trace file holds one JSON object per line. Iteration records (kind
"iteration") carry the retrieval state of one reasoning step; llm_call
records carry verbatim prompts and responses. Field order within a record
is fixed so identical runs serialize to identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable


class TraceError(Exception):
    """Raised when a trace file cannot be read."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        super().__init__(message)


class RunTrace:
    """Ordered event log for one pipeline run."""

    def __init__(self, example_id: str = ""):
        self.example_id = example_id
        self.records: list[dict] = []

    def add(self, kind: str, **fields) -> None:
        record = {"example_id": self.example_id, "kind": kind}
        record.update(fields)
        self.records.append(record)

    def iteration_records(self) -> list[dict]:
        return [r for r in self.records if r.get("kind") == "iteration"]


def write_trace(path: str | Path, traces: Iterable[RunTrace], append: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for trace in traces:
            for record in trace.records:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_trace(path: str | Path) -> list[dict]:
    """Parse a trace file; a corrupted record names its line number."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(
                    f"corrupted trace record at line {line_number}: {exc}",
                    line_number=line_number,
                ) from exc
            if not isinstance(record, dict):
                raise TraceError(
                    f"corrupted trace record at line {line_number}: not an object",
                    line_number=line_number,
                )
            records.append(record)
    return records
