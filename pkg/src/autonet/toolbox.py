"""Intelligent Toolbox: registry of atomic, latency-annotated network operations."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

import yaml

from .simnet.model import Health, NgQi
from .simnet.network import Network
from .protocol import ToolCall, ToolResult

SafetyCheck = Callable[[Network, Mapping[str, Any]], Optional[str]]


class InvocationError(Exception):
    """Unknown tool or arguments that do not match its schema."""


class DuplicateToolError(ValueError):
    pass


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    arg_schema: dict[str, type]
    latency_ms: int
    effect: str  # name of the Network method applying the tool
    safety_check: SafetyCheck = field(default=lambda net, args: None, compare=False)
    family: str = ""
    mutating: bool = True

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError(f"tool {self.name}: latency_ms must be >= 0")


class ToolRegistry:
    def __init__(self):
        self._tools: dict[str, ToolDescriptor] = {}

    def register(self, desc: ToolDescriptor) -> None:
        if desc.name in self._tools:
            raise DuplicateToolError(f"tool {desc.name!r} is already registered")
        self._tools[desc.name] = desc

    def get(self, name: str) -> ToolDescriptor:
        try:
            return self._tools[name]
        except KeyError:
            raise InvocationError(f"unregistered tool {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def names(self) -> list[str]:
        return sorted(self._tools)

    def dump(self) -> str:
        doc = {
            name: {
                "family": d.family,
                "latency_ms": d.latency_ms,
                "mutating": d.mutating,
                "args": {k: v.__name__ for k, v in d.arg_schema.items()},
            }
            for name, d in sorted(self._tools.items())
        }
        return yaml.safe_dump(doc, sort_keys=True)


# -- safety checks ------------------------------------------------------


def _node_exists(net: Network, args: Mapping[str, Any]) -> Optional[str]:
    return None if args["node"] in net.nodes else f"unknown node {args['node']!r}"


def _flow_exists(net: Network, args: Mapping[str, Any]) -> Optional[str]:
    return None if args["flow"] in net.flows else f"unknown flow {args['flow']!r}"


def _qos_ok(net, args):
    if (reason := _flow_exists(net, args)) is not None:
        return reason
    if args["ng_qi"] not in {q.value for q in NgQi}:
        return f"unknown NG-QI class {args['ng_qi']!r}"
    return None


def _reservation_fits(net, args):
    if args["cell"] not in net.cells:
        return f"unknown cell {args['cell']!r}"
    if (reason := _flow_exists(net, args)) is not None:
        return reason
    if net.flows[args["flow"]].cell_id != args["cell"]:
        return f"flow {args['flow']} is not on cell {args['cell']}"
    if args["rate_mbps"] <= 0:
        return "reservation rate must be positive"
    residual = net.cells[args["cell"]].capacity_mbps - net.reserved_mbps(args["cell"], exclude=args["flow"])
    if args["rate_mbps"] > residual:
        return f"reservation {args['rate_mbps']} Mbps exceeds residual capacity {residual} Mbps"
    return None


def _config_ok(net, args):
    if (reason := _node_exists(net, args)) is not None:
        return reason
    if args["param"] not in net.nodes[args["node"]].params:
        return f"node {args['node']} has no parameter {args['param']!r}"
    if args["value"] <= 0:
        return "parameter values must be positive"
    return None


def _reachable(net, args):
    if (reason := _node_exists(net, args)) is not None:
        return reason
    if net.nodes[args["node"]].health is Health.UNREACHABLE:
        return f"node {args['node']} is unreachable"
    return None


def _scale_ok(net, args):
    if (reason := _node_exists(net, args)) is not None:
        return reason
    if "session_capacity" not in net.nodes[args["node"]].params:
        return f"node {args['node']} has no session_capacity"
    if args["delta"] <= 0:
        return "capacity scaling delta must be positive"
    return None


def _selector_ok(net, args):
    sel = args["selector"]
    if sel in net.nodes or sel in net.flows or sel in net.cells:
        return None
    return f"selector {sel!r} matches nothing"


DEFAULT_LATENCY_MS = {
    "set_qos_profile": 5_000,
    "reserve_bandwidth": 5_000,
    "release_reservation": 5_000,
    "update_node_config": 30_000,
    "graceful_reload": 30_000,
    "restart_node": 60_000,
    "scale_session_capacity": 600_000,
    "ping_check": 5_000,
    "pod_status_check": 5_000,
    "link_check": 5_000,
    "query_metrics": 5_000,
}


def register_defaults(latency_overrides: Mapping[str, int] | None = None) -> ToolRegistry:
    """Registry with every tool both case studies need."""
    lat = dict(DEFAULT_LATENCY_MS)
    for name, ms in (latency_overrides or {}).items():
        if name not in lat:
            raise InvocationError(f"latency override for unknown tool {name!r}")
        lat[name] = int(ms)

    pc, asc, cfg, diag = "Policy & Charging", "Access & Session Control", "Configuration", "Diagnostics"
    reg = ToolRegistry()
    for d in (
        ToolDescriptor("set_qos_profile", {"flow": str, "ng_qi": str}, lat["set_qos_profile"],
                       "set_qos_profile", _qos_ok, pc),
        ToolDescriptor("reserve_bandwidth", {"cell": str, "flow": str, "rate_mbps": float},
                       lat["reserve_bandwidth"], "reserve_bandwidth", _reservation_fits, pc),
        ToolDescriptor("release_reservation", {"flow": str}, lat["release_reservation"],
                       "release_reservation", _flow_exists, pc),
        ToolDescriptor("update_node_config", {"node": str, "param": str, "value": int},
                       lat["update_node_config"], "update_node_config", _config_ok, cfg),
        ToolDescriptor("graceful_reload", {"node": str}, lat["graceful_reload"], "graceful_reload", _reachable, cfg),
        ToolDescriptor("restart_node", {"node": str}, lat["restart_node"], "restart_node", _node_exists, asc),
        ToolDescriptor("scale_session_capacity", {"node": str, "delta": int}, lat["scale_session_capacity"],
                       "scale_session_capacity", _scale_ok, asc),
        ToolDescriptor("ping_check", {"node": str}, lat["ping_check"], "ping_check", _node_exists, diag, False),
        ToolDescriptor("pod_status_check", {"node": str}, lat["pod_status_check"], "pod_status_check",
                       _node_exists, diag, False),
        ToolDescriptor("link_check", {"node": str}, lat["link_check"], "link_check", _node_exists, diag, False),
        ToolDescriptor("query_metrics", {"selector": str}, lat["query_metrics"], "query_metrics",
                       _selector_ok, diag, False),
    ):
        reg.register(d)
    return reg


def validate_args(desc: ToolDescriptor, args: Mapping[str, Any]) -> None:
    missing = set(desc.arg_schema) - set(args)
    extra = set(args) - set(desc.arg_schema)
    if missing or extra:
        raise InvocationError(
            f"{desc.name}: argument mismatch (missing={sorted(missing)}, unexpected={sorted(extra)})"
        )
    for name, tp in desc.arg_schema.items():
        v = args[name]
        ok = (
            isinstance(v, (int, float)) and not isinstance(v, bool) if tp is float
            else isinstance(v, int) and not isinstance(v, bool) if tp is int
            else isinstance(v, tp)
        )
        if not ok:
            raise InvocationError(f"{desc.name}: argument {name!r} must be {tp.__name__}, got {v!r}")


class Toolbox:
    """Executes ToolCalls against a network, one audit record per call and result."""

    def __init__(self, network: Network, registry: ToolRegistry | None = None):
        self.network = network
        self.registry = registry or register_defaults()
        self._ids = itertools.count(1)
        self.in_flight: dict[str, ToolCall] = {}

    def new_call(self, tool_name: str, **args: Any) -> ToolCall:
        return ToolCall(f"call-{next(self._ids):05d}", tool_name, args)

    def invoke(
        self,
        call: ToolCall,
        on_result: Callable[[ToolResult], None] | None = None,
        owner: str = "",
    ) -> int:
        """Start a call; the result is delivered at its completion time.

        Safety failures are rejected immediately with state untouched.
        Returns the logical completion time.
        """
        desc = self.registry.get(call.tool_name)
        validate_args(desc, call.args)
        net, log = self.network, self.network.log
        now = net.clock.now
        reason = desc.safety_check(net, call.args)
        log.append(now, "tool_call", call_id=call.call_id, tool=call.tool_name, args=dict(call.args),
                   owner=owner, due=now if reason else now + desc.latency_ms)
        if reason is not None:
            result = ToolResult(call.call_id, False, {}, now, f"safety check failed: {reason}")
            self._finish(call, result, owner, on_result)
            return now
        self.in_flight[call.call_id] = call
        net.clock.call_later(desc.latency_ms, self._complete, call, owner, on_result)
        return now + desc.latency_ms

    def _complete(self, call: ToolCall, owner: str, on_result) -> None:
        del self.in_flight[call.call_id]
        result = self.network.apply_tool_effect(call)
        self._finish(call, result, owner, on_result)

    def _finish(self, call, result, owner, on_result) -> None:
        self.network.log.append(result.t_completed, "tool_result", call_id=call.call_id, tool=call.tool_name,
                                success=result.success, outputs=dict(result.outputs), reason=result.reason,
                                owner=owner)
        if on_result is not None:
            on_result(result)
