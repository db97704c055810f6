"""Experiment outputs: throughput traces and MTTR records read from event logs."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Optional

from ..eventlog import EventLog
from ..simnet.model import AlertCode

MS_PER_MIN = 60_000


class TraceMode(Enum):
    UNPROTECTED = "Unprotected"
    RULE_BASED = "RuleBased"
    HANA = "Hana"


class MttrMode(Enum):
    NO_AGENT = "NoAgent"
    RULE_BASED = "RuleBased"
    WITH_AGENT = "WithAgent"


class MetricsError(ValueError):
    """The event log lacks a record the measurement depends on."""


@dataclass(frozen=True)
class ThroughputTrace:
    terminal_id: str
    samples: tuple[tuple[int, float], ...]  # (t ms, granted Mbps)
    mode: TraceMode

    def __post_init__(self):
        ts = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trace sample times must be strictly increasing")

    def minimum(self) -> float:
        return min(v for _, v in self.samples)

    def mean_between(self, t0_ms: int, t1_ms: int) -> float:
        vals = [v for t, v in self.samples if t0_ms <= t < t1_ms]
        if not vals:
            raise ValueError("no samples in window")
        return sum(vals) / len(vals)

    def below_runs(self, bound: float) -> list[tuple[int, int]]:
        """Maximal runs of consecutive samples below ``bound`` as (first t, last t)."""
        runs: list[tuple[int, int]] = []
        start = prev = None
        for t, v in self.samples:
            if v < bound:
                if start is None:
                    start = t
                prev = t
            elif start is not None:
                runs.append((start, prev))
                start = None
        if start is not None:
            runs.append((start, prev))
        return runs


def trace_from_log(log: EventLog, flow_id: str, terminal_id: str, mode: TraceMode) -> ThroughputTrace:
    samples = tuple((r.t, r.payload["granted"][flow_id]) for r in log.of_kind("telemetry")
                    if flow_id in r.payload.get("granted", {}))
    return ThroughputTrace(terminal_id, samples, mode)


def improvement_pct(baseline_total: float, total: float) -> float:
    """(baseline - total) / baseline * 100, rounded half-up to 2 decimals."""
    if baseline_total <= 0:
        raise ValueError("baseline total must be positive")
    raw = Decimal(repr(baseline_total - total)) / Decimal(repr(baseline_total)) * 100
    return float(raw.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class MttrRecord:
    failure: AlertCode
    mode: MttrMode
    dispatch_min: float
    analysis_min: float
    resolution_min: float
    total_min: float
    improvement_pct: Optional[float] = None
    resolved: bool = True

    def __post_init__(self):
        s = self.dispatch_min + self.analysis_min + self.resolution_min
        if self.resolved and abs(s - self.total_min) > 1e-9:
            raise ValueError("total must equal dispatch + analysis + resolution")

    def stages(self) -> tuple[float, float, float, float]:
        return (self.dispatch_min, self.analysis_min, self.resolution_min, self.total_min)

    def with_improvement(self, baseline_total: float) -> "MttrRecord":
        pct = improvement_pct(baseline_total, self.total_min) if self.resolved else None
        return MttrRecord(self.failure, self.mode, self.dispatch_min, self.analysis_min, self.resolution_min,
                          self.total_min, pct, self.resolved)


def _first(log: EventLog, kind: str, incident: str) -> Optional[int]:
    for r in log.records:
        if r.kind == kind and r.payload.get("incident") == incident:
            return r.t
    return None


def mttr_from_log(log: EventLog, incident: str, failure: AlertCode, mode: MttrMode) -> MttrRecord:
    """Stage times from alarm -> assigned -> planned -> verified timestamps.

    A missing alarm, assignment or plan record is an error. A missing
    verification means the fault was not resolved within the horizon; the
    record is returned with ``resolved=False``.
    """
    t = {}
    for kind in ("alarm", "assigned", "planned"):
        t[kind] = _first(log, kind, incident)
        if t[kind] is None:
            raise MetricsError(f"event log has no {kind!r} record for incident {incident}")
    verified = _first(log, "verified", incident)
    dispatch = (t["assigned"] - t["alarm"]) / MS_PER_MIN
    analysis = (t["planned"] - t["assigned"]) / MS_PER_MIN
    if verified is None:
        return MttrRecord(failure, mode, dispatch, analysis, float("nan"), float("nan"), None, False)
    resolution = (verified - t["planned"]) / MS_PER_MIN
    total = (verified - t["alarm"]) / MS_PER_MIN
    return MttrRecord(failure, mode, dispatch, analysis, resolution, total)
