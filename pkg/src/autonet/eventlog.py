"""Structured, line-oriented event log shared by every component of a run.

Each record is a JSON object with the fields ``t``, ``kind`` and ``payload``
in that order; payload keys are sorted so that two runs of the same scenario
produce byte-identical files. The first line of a written log is a header
carrying the format version and everything needed to re-run the scenario.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

LOG_FORMAT = "autonet-eventlog"
LOG_FORMAT_VERSION = 1


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


@dataclass(frozen=True)
class LogRecord:
    t: int
    kind: str
    payload: dict[str, Any]

    def to_line(self) -> str:
        # t and kind first, payload last; payload keys sorted.
        return '{"t":%d,"kind":%s,"payload":%s}' % (self.t, json.dumps(self.kind), canonical_json(self.payload))

    @classmethod
    def from_line(cls, line: str) -> "LogRecord":
        obj = json.loads(line)
        return cls(int(obj["t"]), str(obj["kind"]), dict(obj["payload"]))


@dataclass
class EventLog:
    """Append-only record list with filtering helpers."""

    records: list[LogRecord] = field(default_factory=list)

    def append(self, t: int, kind: str, /, **payload: Any) -> LogRecord:
        rec = LogRecord(int(t), kind, payload)
        self.records.append(rec)
        return rec

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[LogRecord]:
        return iter(self.records)

    def of_kind(self, *kinds: str) -> list[LogRecord]:
        return [r for r in self.records if r.kind in kinds]

    def lines(self) -> list[str]:
        return [r.to_line() for r in self.records]


def header_line(header: dict[str, Any]) -> str:
    return canonical_json({"format": LOG_FORMAT, "version": LOG_FORMAT_VERSION, **header})


def write_log(path: Path, header: dict[str, Any], log: EventLog | Iterable[LogRecord]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header_line(header) + "\n")
        for rec in log:
            fh.write(rec.to_line() + "\n")


class LogFormatError(ValueError):
    pass


def read_header(text: str) -> dict[str, Any]:
    """Parse and check the header line of a log file's text."""
    first = text.split("\n", 1)[0].strip()
    if not first:
        raise LogFormatError("missing version header (empty log)")
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"malformed version header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != LOG_FORMAT:
        raise LogFormatError("first line is not an autonet event-log header")
    if header.get("version") != LOG_FORMAT_VERSION:
        raise LogFormatError(
            f"log format version {header.get('version')!r} is not supported (expected {LOG_FORMAT_VERSION})"
        )
    return header
