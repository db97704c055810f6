"""Self-checks the harness applies to its own outputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from ..eventlog import EventLog
from ..simnet.model import AlertCode
from .metrics import MttrMode, MttrRecord, ThroughputTrace, TraceMode

AMF, HTTP, SESSION = AlertCode.AMF_UNREACHABLE, AlertCode.HTTP_CONN_EXHAUSTION, AlertCode.SESSION_CAPACITY_L1
NO, RULE, AGENT = MttrMode.NO_AGENT, MttrMode.RULE_BASED, MttrMode.WITH_AGENT

# Published stage times in minutes: (dispatch, analysis, resolution, total).
REFERENCE_MTTR: dict[tuple[AlertCode, MttrMode], tuple[int, int, int, int]] = {
    (AMF, NO): (1, 30, 5, 36),
    (AMF, RULE): (1, 15, 1, 17),
    (AMF, AGENT): (1, 3, 1, 5),
    (HTTP, NO): (1, 10, 3, 14),
    (HTTP, RULE): (1, 5, 1, 7),
    (HTTP, AGENT): (1, 1, 1, 3),
    (SESSION, NO): (1, 10, 10, 21),
    (SESSION, RULE): (1, 5, 10, 16),
    (SESSION, AGENT): (1, 1, 10, 12),
}
REFERENCE_IMPROVEMENT: dict[tuple[AlertCode, MttrMode], float] = {
    (AMF, AGENT): 86.11,
    (AMF, RULE): 52.78,
    (HTTP, AGENT): 78.57,
    (HTTP, RULE): 50.00,
    (SESSION, AGENT): 42.86,
    (SESSION, RULE): 23.81,
}

UNPROTECTED_TARGET_MBPS = 0.25
UNPROTECTED_TOL_MBPS = 0.05
RULE_BREACH_MIN_S = 30
RULE_BREACH_MAX_S = 45
RECOVERY_MIN_SAMPLES = 3
FAST_PATH_BOUND_MS = 1000


@dataclass(frozen=True)
class Check:
    id: str
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.id} {self.name}: {self.detail}"


def check_case_a(traces: dict[TraceMode, ThroughputTrace], congestion_ms: tuple[int, int], bound: float,
                 interval_ms: int = 1000) -> list[Check]:
    out = []
    tr = traces.get(TraceMode.UNPROTECTED)
    if tr is not None:
        mean = tr.mean_between(*congestion_ms)
        out.append(Check("1a", "unprotected congestion mean", abs(mean - UNPROTECTED_TARGET_MBPS) <= UNPROTECTED_TOL_MBPS,
                         f"mean {mean:.4f} Mbps, target {UNPROTECTED_TARGET_MBPS} +/- {UNPROTECTED_TOL_MBPS}"))
    tr = traces.get(TraceMode.HANA)
    if tr is not None:
        low = tr.minimum()
        below = sum(1 for _, v in tr.samples if v < bound)
        out.append(Check("1b", "hana never below SLA", low >= bound,
                         f"min {low:.4f} Mbps over {len(tr.samples)} samples, {below} below {bound}"))
    tr = traces.get(TraceMode.RULE_BASED)
    if tr is not None:
        out.append(_rule_check(tr, bound, interval_ms))
    return out


def _rule_check(tr: ThroughputTrace, bound: float, interval_ms: int) -> Check:
    runs = tr.below_runs(bound)
    if not runs:
        return Check("1c", "rule-based breach then recovery", False, "no sample below the SLA")
    first, last = max(runs, key=lambda r: (r[1] - r[0], -r[0]))
    seconds = (last - first + interval_ms) / 1000
    after = [v for t, v in tr.samples if t > last]
    recovered = len(after) >= RECOVERY_MIN_SAMPLES and all(v >= bound for v in after)
    ok = RULE_BREACH_MIN_S <= seconds <= RULE_BREACH_MAX_S and recovered
    return Check("1c", "rule-based breach then recovery", ok,
                 f"{seconds:g} s below {bound} from t={first / 1000:g} s; "
                 f"{len(after)} samples after, all >= bound: {recovered}")


def check_case_b(records: Iterable[MttrRecord]) -> list[Check]:
    by_key = {(r.failure, r.mode): r for r in records}
    out = []
    bad = []
    for key, ref in REFERENCE_MTTR.items():
        rec = by_key.get(key)
        got = None if rec is None else rec.stages()
        if got is None or not rec.resolved or tuple(got) != tuple(float(x) for x in ref):
            bad.append(f"{key[0].value}/{key[1].value}: got {got}, want {ref}")
    out.append(Check("2a", "MTTR stage times", not bad,
                     "; ".join(bad) if bad else f"all {len(REFERENCE_MTTR)} (dispatch, analysis, resolution, total) match"))
    bad = []
    for key, ref in REFERENCE_IMPROVEMENT.items():
        rec = by_key.get(key)
        got: Optional[float] = None if rec is None else rec.improvement_pct
        if got is None or f"{got:.2f}" != f"{ref:.2f}":
            bad.append(f"{key[0].value}/{key[1].value}: got {got}, want {ref:.2f}")
    out.append(Check("2b", "MTTR improvements", not bad,
                     "; ".join(bad) if bad else "all six improvement percentages match to 2 d.p."))
    return out


def fast_path_latencies(log: EventLog) -> dict[str, Optional[int]]:
    """Alarm -> event_dispatched latency per incident (None if never dispatched)."""
    alarms = {}
    for r in log.records:
        if r.kind == "alarm" and r.payload["incident"] not in alarms:
            alarms[r.payload["incident"]] = r.t
    out: dict[str, Optional[int]] = {k: None for k in alarms}
    for r in log.records:
        inc = r.payload.get("incident")
        if r.kind == "event_dispatched" and inc in out and out[inc] is None:
            out[inc] = r.t - alarms[inc]
    return out


def check_fast_path(logs: Iterable[tuple[str, EventLog]]) -> Check:
    worst = -1
    bad = []
    n = 0
    for name, log in logs:
        for inc, lat in fast_path_latencies(log).items():
            n += 1
            if lat is None or lat >= FAST_PATH_BOUND_MS:
                bad.append(f"{name}/{inc}: {lat}")
            else:
                worst = max(worst, lat)
    ok = not bad and n > 0
    detail = "; ".join(bad) if bad else f"{n} alerts, worst alert-to-event latency {worst} ms"
    return Check("3", "fast-path latency < 1 s", ok, detail)
