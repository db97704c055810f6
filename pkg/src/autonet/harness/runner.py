"""Top-level run orchestration: execute cases, write outputs, replay logs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..eventlog import LogFormatError, header_line, read_header, write_log
from ..simnet.model import AlertCode
from .acceptance import Check, check_case_a, check_case_b, check_fast_path
from .config import ConfigError, RunConfig, parse_case_a, parse_case_b, parse_kb
from .metrics import MttrMode, TraceMode
from .report import mttr_csv, render_report, traces_csv
from .scenarios import RunResult, run_case_a, run_case_a_mode, run_case_b, run_case_b_mode

MODE_NAMES: dict[str, TraceMode | MttrMode] = {
    "unprotected": TraceMode.UNPROTECTED,
    "hana": TraceMode.HANA,
    "noagent": MttrMode.NO_AGENT,
    "withagent": MttrMode.WITH_AGENT,
}
# "rulebased" selects the rule-based baseline of both cases.
MODE_CHOICES = ("unprotected", "rulebased", "hana", "noagent", "withagent")


def select_modes(names: Optional[list[str]]) -> tuple[tuple[TraceMode, ...], tuple[MttrMode, ...]]:
    if not names:
        return tuple(TraceMode), tuple(MttrMode)
    a, b = [], []
    for n in names:
        if n == "rulebased":
            a.append(TraceMode.RULE_BASED)
            b.append(MttrMode.RULE_BASED)
        elif isinstance(MODE_NAMES[n], TraceMode):
            a.append(MODE_NAMES[n])
        else:
            b.append(MODE_NAMES[n])
    return (tuple(m for m in TraceMode if m in a), tuple(m for m in MttrMode if m in b))


@dataclass
class Outcome:
    case_a: list[RunResult] = field(default_factory=list)
    case_b: list[RunResult] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def runs(self) -> list[RunResult]:
        return self.case_a + self.case_b


def execute(cfg: RunConfig, mode_names: Optional[list[str]] = None) -> Outcome:
    modes_a, modes_b = select_modes(mode_names)
    out = Outcome()
    if cfg.case_a is not None and modes_a:
        runs = run_case_a(cfg.case_a, cfg.kb, cfg.seed, modes_a)
        out.case_a = list(runs.values())
        c = cfg.case_a
        bound = next(s.lower_bound for s in cfg.kb.slas if s.terminal_id == c.vip.terminal_id)
        window = (c.congestion_window_s[0] * 1000, c.congestion_window_s[1] * 1000)
        out.checks += check_case_a({m: r.trace for m, r in runs.items()}, window, bound, c.telemetry_interval_ms)
    if cfg.case_b is not None and modes_b:
        out.case_b = run_case_b(cfg.case_b, cfg.kb, cfg.seed, modes_b)
        if set(modes_b) == set(MttrMode):
            out.checks += check_case_b([r.record for r in out.case_b])
    if MttrMode.WITH_AGENT in modes_b and out.case_b:
        agent_logs = [(r.name, r.log) for r in out.runs() if r.mode in (TraceMode.HANA.value, MttrMode.WITH_AGENT.value)]
        out.checks.append(check_fast_path(agent_logs))
    return out


def write_outputs(out: Outcome, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if out.case_a:
        p = out_dir / "traces.csv"
        p.write_text(traces_csv([r.trace for r in out.case_a]), encoding="utf-8", newline="\n")
        written.append(p)
    if out.case_b:
        p = out_dir / "mttr.csv"
        p.write_text(mttr_csv([r.record for r in out.case_b]), encoding="utf-8", newline="\n")
        written.append(p)
    for r in out.runs():
        p = out_dir / "logs" / f"{r.name}.jsonl"
        write_log(p, r.header, r.log)
        written.append(p)
    p = out_dir / "report.txt"
    p.write_text(render_report([r.trace for r in out.case_a], [r.record for r in out.case_b], out.checks),
                 encoding="utf-8", newline="\n")
    written.append(p)
    return written


# -- replay -------------------------------------------------------------


@dataclass(frozen=True)
class ReplayResult:
    ok: bool
    message: str
    line: Optional[int] = None  # 1-based line number of the first divergence


def rerun_from_header(header: dict) -> RunResult:
    try:
        kb = parse_kb(header["kb"], "embedded knowledge base")
        if header["case"] == "case-a":
            cfg = parse_case_a(header["config"], "embedded case-a config")
            return run_case_a_mode(cfg, kb, TraceMode(header["mode"]), header["seed"])
        if header["case"] == "case-b":
            cfg = parse_case_b(header["config"], "embedded case-b config")
            return run_case_b_mode(cfg, kb, AlertCode(header["failure"]), MttrMode(header["mode"]), header["seed"])
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise LogFormatError(f"log header is incomplete or invalid: {exc}") from None
    raise LogFormatError(f"unknown case {header.get('case')!r} in log header")


def replay(path: Path) -> ReplayResult:
    """Re-execute the run a log describes and compare the logs line by line.

    Raises LogFormatError for logs this version cannot replay.
    """
    if not path.is_file():
        raise FileNotFoundError(f"event log not found: {path}")
    text = path.read_text(encoding="utf-8")
    header = read_header(text)
    header = {k: v for k, v in header.items() if k not in ("format", "version")}
    result = rerun_from_header(header)
    expected = [header_line(result.header)] + result.log.lines()
    actual = text.split("\n")
    if actual and actual[-1] == "":
        actual.pop()
    for i, (want, got) in enumerate(zip(expected, actual), start=1):
        if want != got:
            return ReplayResult(False, f"logs diverge at line {i}:\n  stored:   {got}\n  replayed: {want}", i)
    if len(expected) != len(actual):
        i = min(len(expected), len(actual)) + 1
        return ReplayResult(False, f"logs diverge at line {i}: stored has {len(actual)} lines, "
                                   f"replay has {len(expected)}", i)
    return ReplayResult(True, f"replay matches ({len(actual)} lines)")
