"""Agent-to-agent messages, tool calls, and their canonical wire format.

Every message encodes to one line of canonical JSON (sorted keys, no
whitespace, UTF-8). Dataclasses carry a ``"type"`` tag so a line can be
decoded without knowing its variant in advance.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Callable, Optional, Union

from .simnet.model import Alert

Scalar = Union[bool, int, float, str]

# Every ReactiveStateEvent outranks every InternalGoal on the bus.
EVENT_PRIORITY = 100
MAX_GOAL_PRIORITY = EVENT_PRIORITY - 1


class Objective(Enum):
    PREEMPTIVE_SERVICE_ASSURANCE = "PreemptiveServiceAssurance"


class GoalState(Enum):
    PENDING = "Pending"
    ACTIVE = "Active"
    PAUSED = "Paused"
    DONE = "Done"
    FAILED = "Failed"


@dataclass(frozen=True)
class Guardrails:
    max_reserve_mbps: float
    deadline_ms: int


@dataclass(frozen=True)
class InternalGoal:
    goal_id: str
    objective: Objective
    terminal_id: str
    flow_id: str
    cell_id: str
    constraints: Guardrails
    originating_meta_goal_id: str


@dataclass(frozen=True)
class RemedyStep:
    tool: str
    args: dict[str, Scalar] = field(default_factory=dict)


@dataclass(frozen=True)
class Diagnosis:
    matched_case_id: Optional[str]
    root_cause: str
    confidence: float
    recommended_remedy: tuple[RemedyStep, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if (self.matched_case_id is None) != (self.confidence == 0.0):
            raise ValueError("confidence is 0 exactly when no case matched")


@dataclass(frozen=True)
class NodeState:
    node_id: str
    kind: str
    address: str
    health: str
    params: dict[str, int] = field(default_factory=dict)
    usage: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ReactiveStateEvent:
    event_id: str
    alert: Alert
    system_context: tuple[NodeState, ...]
    diagnosis: Diagnosis


@dataclass(frozen=True)
class GoalStatus:
    ref_id: str
    state: GoalState
    detail: str = ""


Body = Union[InternalGoal, ReactiveStateEvent, GoalStatus]


@dataclass(frozen=True)
class A2AMessage:
    msg_id: str
    t_sent: int
    sender: str
    recipient: str
    priority: int
    body: Body

    def __post_init__(self):
        if isinstance(self.body, ReactiveStateEvent) and self.priority < EVENT_PRIORITY:
            raise ValueError(f"ReactiveStateEvent priority must be >= {EVENT_PRIORITY}")
        if isinstance(self.body, InternalGoal) and self.priority > MAX_GOAL_PRIORITY:
            raise ValueError(f"InternalGoal priority must be <= {MAX_GOAL_PRIORITY}")

    def order_key(self) -> tuple:
        return (-self.priority, self.t_sent, self.msg_id)


@dataclass(frozen=True)
class ToolCall:
    call_id: str
    tool_name: str
    args: dict[str, Scalar] = field(default_factory=dict)


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    success: bool
    outputs: dict[str, Scalar]
    t_completed: int
    reason: str = ""


Message = Union[A2AMessage, ToolCall, ToolResult]

_TOP_LEVEL = {cls.__name__: cls for cls in (A2AMessage, ToolCall, ToolResult)}

class DecodeError(ValueError):
    """Raised for malformed wire data; ``field`` names the offending path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# -- encoding -----------------------------------------------------------


@lru_cache(maxsize=None)
def _hints(cls) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def to_wire(value: Any) -> Any:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        out = {"type": type(value).__name__}
        for f in dataclasses.fields(value):
            out[f.name] = to_wire(getattr(value, f.name))
        return out
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, tuple):
        return [to_wire(v) for v in value]
    if isinstance(value, dict):
        return {str(k): to_wire(v) for k, v in value.items()}
    return value


def encode(msg: Message) -> bytes:
    """Canonical single-line UTF-8 encoding (same message, same bytes)."""
    return json.dumps(to_wire(msg), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False).encode("utf-8")


# -- decoding -----------------------------------------------------------


def decode(data: bytes | str) -> Message:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("<bytes>", f"invalid UTF-8: {exc}") from None
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DecodeError("<root>", f"not valid JSON at char {exc.pos}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise DecodeError("<root>", "expected an object")
    tag = obj.get("type")
    if tag not in _TOP_LEVEL:
        raise DecodeError("type", f"unknown message type {tag!r}")
    return from_wire(obj, _TOP_LEVEL[tag], "")


def _join(path: str, name: str) -> str:
    return f"{path}.{name}" if path else name


def from_wire(obj: Any, tp: Any, path: str) -> Any:
    where = path or "<root>"
    origin = typing.get_origin(tp)
    if origin is Union:
        args = typing.get_args(tp)
        if type(None) in args:
            if obj is None:
                return None
            rest = [a for a in args if a is not type(None)]
            return from_wire(obj, rest[0] if len(rest) == 1 else Union[tuple(rest)], path)
        if all(dataclasses.is_dataclass(a) for a in args):
            tag = obj.get("type") if isinstance(obj, dict) else None
            for a in args:
                if a.__name__ == tag:
                    return from_wire(obj, a, path)
            raise DecodeError(_join(path, "type"), f"unexpected variant {tag!r}")
        if tp == Scalar:
            if isinstance(obj, (bool, int, float, str)):
                return obj
            raise DecodeError(where, f"expected a scalar, got {type(obj).__name__}")
        raise DecodeError(where, f"unsupported union {tp}")
    if dataclasses.is_dataclass(tp):
        if not isinstance(obj, dict):
            raise DecodeError(where, "expected an object")
        if obj.get("type") != tp.__name__:
            raise DecodeError(_join(path, "type"), f"expected {tp.__name__}, got {obj.get('type')!r}")
        hints = _hints(tp)
        names = {f.name for f in dataclasses.fields(tp)}
        extra = set(obj) - names - {"type"}
        if extra:
            raise DecodeError(_join(path, sorted(extra)[0]), "unexpected field")
        kwargs = {}
        for f in dataclasses.fields(tp):
            if f.name not in obj:
                raise DecodeError(_join(path, f.name), "missing field")
            kwargs[f.name] = from_wire(obj[f.name], hints[f.name], _join(path, f.name))
        try:
            return tp(**kwargs)
        except ValueError as exc:
            raise DecodeError(where, str(exc)) from None
    if isinstance(tp, type) and issubclass(tp, Enum):
        try:
            return tp(obj)
        except ValueError:
            raise DecodeError(where, f"invalid {tp.__name__} {obj!r}") from None
    if origin is tuple:
        if not isinstance(obj, list):
            raise DecodeError(where, "expected a list")
        (item_tp, _ellipsis) = typing.get_args(tp)
        return tuple(from_wire(v, item_tp, f"{where}[{i}]") for i, v in enumerate(obj))
    if origin is dict:
        if not isinstance(obj, dict):
            raise DecodeError(where, "expected an object")
        _, val_tp = typing.get_args(tp)
        return {k: from_wire(v, val_tp, _join(path, k)) for k, v in obj.items()}
    if tp is bool:
        if not isinstance(obj, bool):
            raise DecodeError(where, "expected a boolean")
        return obj
    if tp is int:
        if isinstance(obj, bool) or not isinstance(obj, int):
            raise DecodeError(where, "expected an integer")
        return obj
    if tp is float:
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            raise DecodeError(where, "expected a number")
        return float(obj)
    if tp is str:
        if not isinstance(obj, str):
            raise DecodeError(where, "expected a string")
        return obj
    raise DecodeError(where, f"unsupported type {tp}")


# -- bus ----------------------------------------------------------------


class RoutingError(LookupError):
    """The recipient is not registered on the bus."""


class Bus:
    """In-process A2A bus.

    Pending messages for a recipient are delivered in (priority desc,
    t_sent asc, msg_id asc) order. Each message is delivered exactly once.
    With a ``scheduler``, recipients registered with a handler get their
    queue drained by a zero-delay callback after every send, so messages
    sent in the same instant are handed over in bus order.
    """

    def __init__(self, scheduler: Callable[[Callable[[], None]], None] | None = None, log=None):
        self._pending: dict[str, list[A2AMessage]] = {}
        self._handlers: dict[str, Callable[[A2AMessage], None]] = {}
        self._seen: set[str] = set()
        self._scheduler = scheduler
        self._log = log

    def register(self, agent_id: str, handler: Callable[[A2AMessage], None] | None = None) -> None:
        self._pending.setdefault(agent_id, [])
        if handler is not None:
            self._handlers[agent_id] = handler

    @property
    def agents(self) -> list[str]:
        return sorted(self._pending)

    def send(self, msg: A2AMessage) -> None:
        if msg.recipient not in self._pending:
            raise RoutingError(f"unknown recipient {msg.recipient!r}")
        if msg.msg_id in self._seen:
            raise ValueError(f"duplicate msg_id {msg.msg_id!r}")
        self._seen.add(msg.msg_id)
        self._pending[msg.recipient].append(msg)
        if self._log is not None:
            self._log.append(msg.t_sent, "a2a", msg=to_wire(msg))
        if self._scheduler is not None and msg.recipient in self._handlers:
            self._scheduler(lambda: self._deliver(msg.recipient))

    def poll(self, recipient: str) -> list[A2AMessage]:
        if recipient not in self._pending:
            raise RoutingError(f"unknown recipient {recipient!r}")
        out = sorted(self._pending[recipient], key=A2AMessage.order_key)
        self._pending[recipient] = []
        return out

    def _deliver(self, recipient: str) -> None:
        handler = self._handlers[recipient]
        for msg in self.poll(recipient):
            handler(msg)
