"""Scenario config schemas, validated strictly before any simulation starts."""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..memory import KnowledgeBase, KnowledgeBaseError, TemplateStep, load_knowledge_base, parse_knowledge_base
from ..simnet.model import AlertCode, Health, NgQi, NodeKind
from ..toolbox import DEFAULT_LATENCY_MS

CONFIG_DIR_ENV = "AUTONET_CONFIG_DIR"
CASE_A_FILE = "case_a.yaml"
CASE_B_FILE = "case_b.yaml"
KB_FILE = "knowledge.yaml"


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _check_latencies(v: dict[str, int]) -> dict[str, int]:
    unknown = sorted(set(v) - set(DEFAULT_LATENCY_MS))
    if unknown:
        raise ValueError(f"latency override for unknown tool(s) {unknown}")
    if any(ms < 0 for ms in v.values()):
        raise ValueError("tool latencies must be >= 0")
    return v


class CellConfig(_Strict):
    id: str
    capacity_mbps: float = Field(gt=0)


class VipConfig(_Strict):
    terminal_id: str
    flow_id: str
    demand_mbps: float = Field(gt=0)
    ng_qi: NgQi = NgQi.BEST_EFFORT


class MetaGoalConfig(_Strict):
    id: str
    terminal_id: str


class BackgroundConfig(_Strict):
    flows: int = Field(ge=1)
    profile: list[tuple[int, float]]

    @field_validator("profile")
    @classmethod
    def _profile(cls, v):
        if not v:
            raise ValueError("profile needs at least one point")
        times = [t for t, _ in v]
        if times != sorted(set(times)):
            raise ValueError("profile times must be strictly increasing")
        if any(t < 0 for t in times) or any(load < 0 for _, load in v):
            raise ValueError("profile times and loads must be >= 0")
        return v


class OrchestratorConfig(_Strict):
    window: int = Field(default=10, ge=3)
    confidence_threshold: float = Field(default=0.8, ge=0, le=1)
    lead_time_s: float = Field(default=30, gt=0)
    hysteresis_s: float = Field(default=60, ge=0)
    prediction_horizon_s: float = Field(default=3600, gt=0)
    memory_query_ms: int = Field(default=200, ge=0)


class ExecutiveConfig(_Strict):
    review_s: float = Field(default=0, ge=0)
    verify_timeout_s: float = Field(default=300, gt=0)


class RuleQosConfig(_Strict):
    debounce_s: float = Field(default=20, ge=0)


class CaseAConfig(_Strict):
    scenario: str = "case-a"
    seed: int = 0
    horizon_s: int = Field(gt=0)
    telemetry_interval_ms: int = Field(default=1000, gt=0)
    congestion_window_s: tuple[int, int]
    cell: CellConfig
    vip: VipConfig
    meta_goals: list[MetaGoalConfig] = Field(min_length=1)
    background: BackgroundConfig
    orchestrator: OrchestratorConfig = OrchestratorConfig()
    executive: ExecutiveConfig = ExecutiveConfig()
    rule_based: RuleQosConfig = RuleQosConfig()
    tool_latency_ms: dict[str, int] = {}

    @field_validator("tool_latency_ms")
    @classmethod
    def _latencies(cls, v):
        return _check_latencies(v)

    @model_validator(mode="after")
    def _window(self):
        a, b = self.congestion_window_s
        if not 0 <= a < b <= self.horizon_s:
            raise ValueError("congestion_window_s must satisfy 0 <= start < end <= horizon_s")
        if self.scenario != "case-a":
            raise ValueError(f"scenario must be 'case-a', got {self.scenario!r}")
        for mg in self.meta_goals:
            if mg.terminal_id != self.vip.terminal_id:
                raise ValueError(f"meta-goal {mg.id} targets unknown terminal {mg.terminal_id}")
        return self


class NodeConfig(_Strict):
    id: str
    kind: NodeKind
    address: str = Field(pattern=r"^\d{1,3}(\.\d{1,3}){3}$")
    params: dict[str, int] = {}
    usage: dict[str, int] = {}


class PayloadConfig(_Strict):
    params: dict[str, int] = {}
    usage: dict[str, int] = {}
    health: Optional[Health] = None
    pod_running: Optional[bool] = None
    link_up: Optional[bool] = None


class FaultConfig(_Strict):
    target: str
    payload: PayloadConfig = PayloadConfig()


class StepConfig(_Strict):
    tool: str
    args: dict[str, Any] = {}

    def template(self) -> TemplateStep:
        return TemplateStep(self.tool, dict(self.args))


class RuleTreeConfig(_Strict):
    check_debounce_s: float = Field(default=70, ge=0)
    human_handoff_s: float = Field(default=675, ge=0)


class ManualStage(_Strict):
    analysis_min: float = Field(ge=0)
    resolution_min: float = Field(ge=0)


class CaseBOrchestratorConfig(_Strict):
    memory_query_ms: int = Field(default=200, ge=0)


class CaseBConfig(_Strict):
    scenario: str = "case-b"
    seed: int = 0
    horizon_min: float = Field(gt=0)
    telemetry_interval_ms: int = Field(default=1000, gt=0)
    t_inject_s: float = Field(default=60, ge=0)
    dispatch_min: float = Field(default=1, ge=0)
    nodes: list[NodeConfig] = Field(min_length=1)
    faults: dict[AlertCode, FaultConfig]
    runbooks: dict[AlertCode, list[StepConfig]]
    orchestrator: CaseBOrchestratorConfig = CaseBOrchestratorConfig()
    executive: ExecutiveConfig = ExecutiveConfig(review_s=55, verify_timeout_s=900)
    rule_based: RuleTreeConfig = RuleTreeConfig()
    manual: dict[AlertCode, ManualStage]
    tool_latency_ms: dict[str, int] = {}

    @field_validator("tool_latency_ms")
    @classmethod
    def _latencies(cls, v):
        return _check_latencies(v)

    @model_validator(mode="after")
    def _refs(self):
        if self.scenario != "case-b":
            raise ValueError(f"scenario must be 'case-b', got {self.scenario!r}")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        for code, fault in self.faults.items():
            if fault.target not in ids:
                raise ValueError(f"fault {code.value} targets unknown node {fault.target!r}")
        for section in ("faults", "runbooks", "manual"):
            missing = [c.value for c in AlertCode if c not in getattr(self, section)]
            if missing:
                raise ValueError(f"{section} is missing failure(s) {missing}")
        for code, steps in self.runbooks.items():
            for s in steps:
                if s.tool not in DEFAULT_LATENCY_MS:
                    raise ValueError(f"runbook {code.value} uses unknown tool {s.tool!r}")
        if self.t_inject_s * 1000 >= self.horizon_min * 60_000:
            raise ValueError("t_inject_s must lie inside the horizon")
        return self


# -- loading ------------------------------------------------------------


def _read_yaml(path: Path) -> Any:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            return yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None


def _validate(model, doc: Any, where: str):
    try:
        return model.model_validate(doc)
    except ValidationError as exc:
        lines = [f"{where}: invalid config"]
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"  {loc}: {err['msg']}")
        raise ConfigError("\n".join(lines)) from None


def parse_case_a(doc: Any, where: str = "case-a config") -> CaseAConfig:
    return _validate(CaseAConfig, doc, where)


def parse_case_b(doc: Any, where: str = "case-b config") -> CaseBConfig:
    return _validate(CaseBConfig, doc, where)


def default_config_dir() -> Path:
    env = os.environ.get(CONFIG_DIR_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("autonet") / "data"))


def resolve_config_dir(spec: str | None) -> Path:
    if spec is None or spec == "default":
        return default_config_dir()
    path = Path(spec)
    if not path.is_dir():
        raise ConfigError(f"config directory not found: {path}")
    return path


def load_case_a(path: Path) -> CaseAConfig:
    return parse_case_a(_read_yaml(path), str(path))


def load_case_b(path: Path) -> CaseBConfig:
    return parse_case_b(_read_yaml(path), str(path))


def load_kb(path: Path) -> KnowledgeBase:
    from ..toolbox import DEFAULT_LATENCY_MS as tools

    try:
        return load_knowledge_base(path, tools)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None
    except KnowledgeBaseError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_kb(doc: Any, where: str = "knowledge base") -> KnowledgeBase:
    try:
        return parse_knowledge_base(doc, DEFAULT_LATENCY_MS, where)
    except KnowledgeBaseError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs, resolved and parsed up front."""

    kb: KnowledgeBase
    out_dir: Path
    case_a: Optional[CaseAConfig] = None
    case_b: Optional[CaseBConfig] = None
    seed: Optional[int] = None


def load_run_config(cases: list[str], config: str | None, kb_path: str | None, out_dir: str,
                    seed: int | None = None) -> RunConfig:
    """Resolve and parse every input of a run; raises ConfigError on any problem.

    ``config`` is a directory holding case_a.yaml / case_b.yaml /
    knowledge.yaml, the word ``default``, or a single scenario file when
    only that scenario is run.
    """
    files = {"case-a": None, "case-b": None}
    if config is not None and config != "default" and Path(config).is_file():
        doc = _read_yaml(Path(config))
        kind = doc.get("scenario") if isinstance(doc, dict) else None
        if kind not in files:
            raise ConfigError(f"{config}: 'scenario' must be case-a or case-b")
        other = [c for c in cases if c != kind]
        if other:
            raise ConfigError(f"{config} is a {kind} scenario but {', '.join(other)} was requested")
        files[kind] = Path(config)
        base = default_config_dir()
    else:
        base = resolve_config_dir(config)
        files = {"case-a": base / CASE_A_FILE, "case-b": base / CASE_B_FILE}
    kb = load_kb(Path(kb_path) if kb_path else base / KB_FILE)
    return RunConfig(
        kb=kb,
        out_dir=Path(out_dir),
        case_a=load_case_a(files["case-a"]) if "case-a" in cases else None,
        case_b=load_case_b(files["case-b"]) if "case-b" in cases else None,
        seed=seed,
    )
