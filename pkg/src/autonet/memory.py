"""Public and Private Memory with snapshot versioning and conflict resolution.

Both memories sit on :class:`VersionedStore`, a key/value store whose values
are JSON documents. Snapshots hold the canonical serialized image of the
store, so a rollback restores it byte for byte.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional

import yaml

from .eventlog import canonical_json


class NotFound(KeyError):
    pass


class KnowledgeBaseError(ValueError):
    pass


# -- records ------------------------------------------------------------


class SlaMetric(Enum):
    UPLINK_THROUGHPUT = "UplinkThroughput"


class Outcome(Enum):
    RESOLVED = "Resolved"
    FAILED = "Failed"
    PREEMPTED = "Preempted"


@dataclass(frozen=True)
class TemplateStep:
    """One abstract tool step; string args starting with ``$`` are slots."""

    tool: str
    args: dict[str, Any] = field(default_factory=dict)


def resolve_slot(value: Any, bindings: dict[str, Any]) -> Any:
    """Resolve ``$name`` / ``$group.name`` slots; ``$delta.x`` is recommended minus live."""
    if not (isinstance(value, str) and value.startswith("$")):
        return value
    path = value[1:].split(".")
    if path[0] == "delta" and len(path) == 2:
        return bindings["recommended"][path[1]] - bindings["param"][path[1]]
    cur: Any = bindings
    for part in path:
        if not isinstance(cur, dict) or part not in cur:
            raise KnowledgeBaseError(f"unresolved template slot {value!r}")
        cur = cur[part]
    return cur


def instantiate_steps(steps: Iterable[TemplateStep], bindings: dict[str, Any]) -> list[tuple[str, dict[str, Any]]]:
    return [(s.tool, {k: resolve_slot(v, bindings) for k, v in s.args.items()}) for s in steps]


@dataclass(frozen=True)
class FaultCase:
    id: str
    symptom_features: frozenset[str]
    root_cause: str
    remedy_template: tuple[TemplateStep, ...]
    recommended_params: dict[str, int] = field(default_factory=dict)
    confirm: tuple[TemplateStep, ...] = ()
    title: str = ""

    def __post_init__(self):
        if not self.symptom_features:
            raise KnowledgeBaseError(f"fault case {self.id}: symptom_features is empty")

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title": self.title,
            "symptom_features": sorted(self.symptom_features),
            "root_cause": self.root_cause,
            "remedy_template": [asdict(s) for s in self.remedy_template],
            "recommended_params": dict(self.recommended_params),
            "confirm": [asdict(s) for s in self.confirm],
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "FaultCase":
        try:
            return cls(
                id=str(doc["id"]),
                title=str(doc.get("title", "")),
                symptom_features=frozenset(str(x) for x in doc["symptom_features"]),
                root_cause=str(doc["root_cause"]),
                remedy_template=tuple(TemplateStep(s["tool"], dict(s.get("args", {}))) for s in doc["remedy_template"]),
                recommended_params={str(k): int(v) for k, v in doc.get("recommended_params", {}).items()},
                confirm=tuple(TemplateStep(s["tool"], dict(s.get("args", {}))) for s in doc.get("confirm", [])),
            )
        except (KeyError, TypeError) as exc:
            raise KnowledgeBaseError(f"fault case {doc.get('id', '?')}: bad field {exc}") from None


@dataclass(frozen=True)
class SlaRequirement:
    terminal_id: str
    metric: SlaMetric
    lower_bound: float
    priority: int = 1

    def __post_init__(self):
        if not self.lower_bound > 0:
            raise KnowledgeBaseError(f"SLA for {self.terminal_id}: lower_bound must be > 0")

    def to_doc(self) -> dict[str, Any]:
        return {"terminal_id": self.terminal_id, "metric": self.metric.value,
                "lower_bound": self.lower_bound, "priority": self.priority}

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "SlaRequirement":
        return cls(str(doc["terminal_id"]), SlaMetric(doc.get("metric", "UplinkThroughput")),
                   float(doc["lower_bound"]), int(doc.get("priority", 1)))


@dataclass(frozen=True)
class ExperienceRecord:
    t: int
    agent_id: str
    goal_or_event_id: str
    plan: tuple[str, ...]
    outcome: Outcome
    duration: int

    def to_doc(self) -> dict[str, Any]:
        return {"t": self.t, "agent_id": self.agent_id, "goal_or_event_id": self.goal_or_event_id,
                "plan": list(self.plan), "outcome": self.outcome.value, "duration": self.duration}

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "ExperienceRecord":
        return cls(doc["t"], doc["agent_id"], doc["goal_or_event_id"], tuple(doc["plan"]),
                   Outcome(doc["outcome"]), doc["duration"])


@dataclass(frozen=True)
class MemorySnapshot:
    version: int
    timestamp: int
    contents: bytes


@dataclass(frozen=True)
class Write:
    key: str
    value: Any
    base_version: int
    t: int
    writer: str


def resolve_conflict(a: Write, b: Write) -> Write:
    """Pick the winner of two concurrent writes to one key.

    Higher base version wins, then later logical time, then the
    lexicographically greater writer id. Fully tied metadata falls back to
    the canonical value encoding so the order stays total.
    """
    def rank(w: Write) -> tuple:
        return (w.base_version, w.t, w.writer, canonical_json(w.value))

    return a if rank(a) >= rank(b) else b


# -- store --------------------------------------------------------------


class VersionedStore:
    # Each committed change bumps ``version``; snapshots are cut on demand.

    def __init__(self):
        self._data: dict[str, Any] = {}
        self.version = 0
        self._snapshots: dict[int, MemorySnapshot] = {}
        self._last_snapshot_version = 0

    def get(self, key: str, default: Any = None) -> Any:
        return copy.deepcopy(self._data.get(key, default))

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def keys(self, prefix: str = "") -> list[str]:
        return sorted(k for k in self._data if k.startswith(prefix))

    def put(self, key: str, value: Any) -> None:
        canonical_json(value)  # reject non-JSON values early
        self._data[key] = copy.deepcopy(value)
        self.version += 1

    def delete(self, key: str) -> None:
        if self._data.pop(key, None) is not None:
            self.version += 1

    def apply_concurrent(self, writes: Iterable[Write]) -> dict[str, Write]:
        """Apply a batch of same-instant writes; one winner per key."""
        winners: dict[str, Write] = {}
        for w in writes:
            winners[w.key] = resolve_conflict(winners[w.key], w) if w.key in winners else w
        for key in sorted(winners):
            self.put(key, winners[key].value)
        return winners

    def image(self) -> bytes:
        return canonical_json(self._data).encode("utf-8")

    def snapshot(self, timestamp: int = 0) -> MemorySnapshot:
        snap_version = max(self.version, self._last_snapshot_version + 1)
        self._last_snapshot_version = snap_version
        snap = MemorySnapshot(snap_version, int(timestamp), self.image())
        self._snapshots[snap_version] = snap
        return snap

    def snapshots(self) -> list[int]:
        return sorted(self._snapshots)

    def rollback(self, version: int) -> None:
        snap = self._snapshots.get(version)
        if snap is None:
            raise NotFound(f"no snapshot with version {version}")
        self._data = json.loads(snap.contents.decode("utf-8"))
        self.version = max(self.version, self._last_snapshot_version) + 1


# -- public memory ------------------------------------------------------


class PublicMemory(VersionedStore):
    """Shared domain knowledge: fault cases, SLA table, config templates."""

    def add_fault_case(self, case: FaultCase) -> None:
        self.put(f"fault_case/{case.id}", case.to_doc())

    def fault_cases(self) -> list[FaultCase]:
        return [FaultCase.from_doc(self._data[k]) for k in self.keys("fault_case/")]

    def get_case(self, case_id: str) -> FaultCase:
        doc = self._data.get(f"fault_case/{case_id}")
        if doc is None:
            raise NotFound(f"no fault case {case_id!r}")
        return FaultCase.from_doc(doc)

    def query_fault_cases(self, features: Iterable[str]) -> list[tuple[FaultCase, float]]:
        """Rank cases by |features ∩ symptoms| / |symptoms|; score 0 is dropped."""
        feats = set(features)
        if not feats:
            raise ValueError("features must be nonempty")
        scored = []
        for case in self.fault_cases():
            score = len(feats & case.symptom_features) / len(case.symptom_features)
            if score > 0:
                scored.append((case, score))
        scored.sort(key=lambda cs: (-cs[1], cs[0].id))
        return scored

    def set_template(self, name: str, template: dict[str, Any]) -> None:
        self.put(f"template/{name}", template)

    def template(self, name: str) -> dict[str, Any]:
        if f"template/{name}" not in self:
            raise NotFound(f"no config template {name!r}")
        return self.get(f"template/{name}")


# -- private memory -----------------------------------------------------


class PrivateMemory(VersionedStore):
    """Per-agent memory: SLAs, meta-goals, task context, experience."""

    def set_sla(self, sla: SlaRequirement) -> None:
        self.put(f"sla/{sla.terminal_id}", sla.to_doc())

    def get_sla(self, terminal_id: str) -> SlaRequirement:
        doc = self._data.get(f"sla/{terminal_id}")
        if doc is None:
            raise NotFound(f"no SLA registered for terminal {terminal_id!r}")
        return SlaRequirement.from_doc(doc)

    def sla_terminals(self) -> list[str]:
        return [k.split("/", 1)[1] for k in self.keys("sla/")]

    def set_meta_goal(self, meta_goal_id: str, doc: dict[str, Any]) -> None:
        self.put(f"meta_goal/{meta_goal_id}", doc)

    def meta_goal_docs(self) -> list[dict[str, Any]]:
        return [self.get(k) for k in self.keys("meta_goal/")]

    def set_context(self, name: str, value: Any) -> None:
        self.put(f"context/{name}", value)

    def context(self, name: str, default: Any = None) -> Any:
        return self.get(f"context/{name}", default)

    def record_experience(self, rec: ExperienceRecord) -> None:
        log = self._data.setdefault("experience", [])
        log.append(rec.to_doc())
        self.version += 1

    def experience(self) -> list[ExperienceRecord]:
        return [ExperienceRecord.from_doc(d) for d in self._data.get("experience", [])]


# -- knowledge base file ------------------------------------------------


@dataclass
class KnowledgeBase:
    fault_cases: list[FaultCase]
    slas: list[SlaRequirement]
    templates: dict[str, dict[str, Any]]
    source: Optional[str] = None

    def to_doc(self) -> dict[str, Any]:
        return {
            "version": 1,
            "fault_cases": [c.to_doc() for c in self.fault_cases],
            "sla": [s.to_doc() for s in self.slas],
            "templates": self.templates,
        }

    def public_memory(self) -> PublicMemory:
        mem = PublicMemory()
        for case in self.fault_cases:
            mem.add_fault_case(case)
        for name, tpl in sorted(self.templates.items()):
            mem.set_template(name, tpl)
        return mem

    def load_slas(self, mem: PrivateMemory) -> None:
        for sla in self.slas:
            mem.set_sla(sla)


def parse_knowledge_base(doc: Any, tool_names: Iterable[str] | None = None, source: str | None = None) -> KnowledgeBase:
    if not isinstance(doc, dict):
        raise KnowledgeBaseError("knowledge base must be a mapping")
    unknown = set(doc) - {"version", "fault_cases", "sla", "templates"}
    if unknown:
        raise KnowledgeBaseError(f"unknown knowledge-base section(s): {sorted(unknown)}")
    if doc.get("version", 1) != 1:
        raise KnowledgeBaseError(f"unsupported knowledge-base version {doc.get('version')!r}")
    cases = [FaultCase.from_doc(c) for c in doc.get("fault_cases", [])]
    ids = [c.id for c in cases]
    if len(set(ids)) != len(ids):
        raise KnowledgeBaseError("duplicate fault case ids")
    if tool_names is not None:
        names = set(tool_names)
        for case in cases:
            for step in case.remedy_template + case.confirm:
                if step.tool not in names:
                    raise KnowledgeBaseError(f"fault case {case.id}: unknown tool {step.tool!r}")
    try:
        slas = [SlaRequirement.from_doc(s) for s in doc.get("sla", [])]
    except (KeyError, ValueError, TypeError) as exc:
        raise KnowledgeBaseError(f"bad SLA entry: {exc}") from None
    templates = doc.get("templates", {}) or {}
    return KnowledgeBase(cases, slas, dict(templates), source)


def load_knowledge_base(path: str | Path, tool_names: Iterable[str] | None = None) -> KnowledgeBase:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"knowledge-base file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise KnowledgeBaseError(f"{path}: {exc}") from None
    return parse_knowledge_base(doc, tool_names, str(path))
