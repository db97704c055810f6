"""Scenario runner and metrics engine for the congestion and self-healing cases."""

from .acceptance import REFERENCE_IMPROVEMENT, REFERENCE_MTTR, Check, check_case_a, check_case_b, check_fast_path
from .config import CaseAConfig, CaseBConfig, ConfigError, RunConfig, load_run_config
from .metrics import (
    MetricsError,
    MttrMode,
    MttrRecord,
    ThroughputTrace,
    TraceMode,
    improvement_pct,
    mttr_from_log,
)
from .runner import Outcome, ReplayResult, execute, replay, write_outputs
from .scenarios import RunResult, preemption_trial, run_case_a, run_case_b

__all__ = [
    "REFERENCE_IMPROVEMENT",
    "REFERENCE_MTTR",
    "CaseAConfig",
    "CaseBConfig",
    "Check",
    "ConfigError",
    "MetricsError",
    "MttrMode",
    "MttrRecord",
    "Outcome",
    "ReplayResult",
    "RunConfig",
    "RunResult",
    "ThroughputTrace",
    "TraceMode",
    "check_case_a",
    "check_case_b",
    "check_fast_path",
    "execute",
    "improvement_pct",
    "load_run_config",
    "mttr_from_log",
    "preemption_trial",
    "replay",
    "run_case_a",
    "run_case_b",
    "write_outputs",
]
