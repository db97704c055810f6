"""CSV and plain-text outputs."""

from __future__ import annotations

import csv
import io
from typing import Iterable

from .acceptance import Check
from .metrics import MttrRecord, ThroughputTrace

TRACE_COLUMNS = ("t_s", "rate_mbps", "mode")
MTTR_COLUMNS = ("failure", "mode", "dispatch_min", "analysis_min", "resolution_min", "total_min",
                "improvement_pct", "resolved")


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and x.is_integer():
        return str(int(x))
    return repr(x)


def traces_csv(traces: Iterable[ThroughputTrace]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for tr in traces:
        for t, v in tr.samples:
            w.writerow((_num(t / 1000), repr(float(v)), tr.mode.value))
    return buf.getvalue()


def mttr_csv(records: Iterable[MttrRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MTTR_COLUMNS)
    for r in records:
        pct = "" if r.improvement_pct is None else f"{r.improvement_pct:.2f}"
        w.writerow((r.failure.value, r.mode.value, _num(r.dispatch_min), _num(r.analysis_min),
                    _num(r.resolution_min), _num(r.total_min), pct, str(r.resolved).lower()))
    return buf.getvalue()


def render_report(traces: list[ThroughputTrace], records: list[MttrRecord], checks: list[Check]) -> str:
    lines = []
    if traces:
        lines.append("Congested-cell throughput (VIP flow)")
        lines.append(f"  {'mode':<12} {'samples':>7} {'min Mbps':>9} {'mean Mbps':>10}")
        for tr in traces:
            vals = [v for _, v in tr.samples]
            lines.append(f"  {tr.mode.value:<12} {len(vals):>7} {min(vals):>9.3f} {sum(vals) / len(vals):>10.3f}")
        lines.append("")
    if records:
        lines.append("MTTR (simulated minutes)")
        lines.append(f"  {'failure':<20} {'mode':<10} {'dispatch':>8} {'analysis':>8} {'resolve':>8} {'total':>6} {'improve':>8}")
        for r in records:
            pct = "-" if r.improvement_pct is None or r.mode.value == "NoAgent" else f"{r.improvement_pct:.2f}%"
            if not r.resolved:
                pct = "FAILED"
            lines.append(f"  {r.failure.value:<20} {r.mode.value:<10} {r.dispatch_min:>8g} {r.analysis_min:>8g} "
                         f"{r.resolution_min:>8g} {r.total_min:>6g} {pct:>8}")
        lines.append("")
    if checks:
        lines.append("Acceptance")
        lines.extend(f"  {c.line()}" for c in checks)
        lines.append("")
    return "\n".join(lines)
