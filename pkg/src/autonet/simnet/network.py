"""The simulated core: cells, flows, NF nodes, alarms and telemetry."""

from __future__ import annotations

import logging
import math
import random
from typing import Any, Callable, Union

from ..eventlog import EventLog
from .allocation import allocate_capacity
from .clock import SimClock
from .model import (
    ALERT_SEVERITY,
    SESSION_L1_FRACTION,
    Alert,
    AlertCode,
    Cell,
    FaultInjection,
    Health,
    NfNode,
    NgQi,
    NodeKind,
    QosFlow,
    TelemetrySample,
    incident_key,
)

logger = logging.getLogger(__name__)

Emitted = Union[TelemetrySample, Alert]

DEFAULT_TELEMETRY_INTERVAL_MS = 1000


class ScenarioError(ValueError):
    """The scenario refers to an entity the network does not have."""


class ToolEffectError(Exception):
    """A tool effect could not be applied; state is unchanged."""


class Network:
    """Single-writer simulation state driven by a :class:`SimClock`.

    Observers registered with :meth:`subscribe` receive every telemetry
    sample and alert at the logical time it is emitted.
    """

    def __init__(
        self,
        clock: SimClock | None = None,
        log: EventLog | None = None,
        *,
        telemetry_interval_ms: int = DEFAULT_TELEMETRY_INTERVAL_MS,
        dispatch_delay_ms: int | None = None,
        seed: int = 0,
        log_telemetry: bool = True,
    ):
        if telemetry_interval_ms <= 0:
            raise ValueError("telemetry_interval_ms must be positive")
        self.clock = clock or SimClock()
        self.log = log if log is not None else EventLog()
        self.rng = random.Random(seed)
        self.telemetry_interval_ms = int(telemetry_interval_ms)
        self.dispatch_delay_ms = dispatch_delay_ms
        self.log_telemetry = log_telemetry
        self.cells: dict[str, Cell] = {}
        self.flows: dict[str, QosFlow] = {}
        self.nodes: dict[str, NfNode] = {}
        self.active_alerts: dict[str, Alert] = {}
        self.assignments: dict[str, int] = {}
        self._listeners: list[Callable[[Emitted], None]] = []
        self._assignment_listeners: list[Callable[[Alert], None]] = []
        self._assignment_waiters: dict[str, list[Callable[[], None]]] = {}
        self._emitted: list[Emitted] | None = None
        self._started = False

    # -- topology -------------------------------------------------------

    def add_cell(self, cell: Cell) -> Cell:
        if cell.id in self.cells:
            raise ScenarioError(f"duplicate cell {cell.id}")
        self.cells[cell.id] = cell
        return cell

    def add_flow(self, flow: QosFlow) -> QosFlow:
        if flow.cell_id not in self.cells:
            raise ScenarioError(f"flow {flow.id}: unknown cell {flow.cell_id}")
        if flow.id in self.flows:
            raise ScenarioError(f"duplicate flow {flow.id}")
        self.flows[flow.id] = flow
        self.cells[flow.cell_id].flows.append(flow.id)
        self._reallocate(flow.cell_id)
        return flow

    def add_background(self, cell_id: str, n_flows: int, profile: list[tuple[int, float]], prefix: str = "bg") -> None:
        """Attach ``n_flows`` best-effort flows that share the profile's offered load."""
        cell = self.cells[cell_id]
        width = len(str(n_flows))
        for i in range(1, n_flows + 1):
            fid = f"{prefix}-{i:0{width}d}"
            self.add_flow(QosFlow(id=fid, terminal_id=fid, cell_id=cell_id, demand_mbps=0.0))
            cell.background_flows.append(fid)
        cell.background_load_profile = sorted((int(t), float(v)) for t, v in profile)

    def add_node(self, node: NfNode) -> NfNode:
        if node.id in self.nodes:
            raise ScenarioError(f"duplicate node {node.id}")
        self.nodes[node.id] = node
        return node

    def node(self, node_id: str) -> NfNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ScenarioError(f"unknown node {node_id!r}") from None

    # -- observers ------------------------------------------------------

    def subscribe(self, fn: Callable[[Emitted], None]) -> None:
        self._listeners.append(fn)

    def on_assignment(self, fn: Callable[[Alert], None]) -> None:
        self._assignment_listeners.append(fn)

    def when_assigned(self, key: str, fn: Callable[[], None]) -> None:
        """Run ``fn`` once the incident ``key`` has been assigned to a handler."""
        if self.dispatch_delay_ms is None or key in self.assignments:
            self.clock.call_later(0, fn)
        else:
            self._assignment_waiters.setdefault(key, []).append(fn)

    def _emit(self, ev: Emitted) -> None:
        if self._emitted is not None:
            self._emitted.append(ev)
        for fn in list(self._listeners):
            fn(ev)

    # -- time -----------------------------------------------------------

    def start(self) -> None:
        """Schedule telemetry ticks and background load steps (idempotent)."""
        if self._started:
            return
        self._started = True
        for cell_id in sorted(self.cells):
            for t, load in self.cells[cell_id].background_load_profile:
                if t >= self.clock.now:
                    self.clock.schedule(t, self._set_background, cell_id, load)
        first = -(-self.clock.now // self.telemetry_interval_ms) * self.telemetry_interval_ms
        self.clock.schedule(first, self._telemetry_tick)

    def schedule_fault(self, fault: FaultInjection) -> None:
        self.node(fault.target_node)
        self.clock.schedule(fault.t_inject, self.inject_fault, fault)

    def advance(self, until: int) -> list[Emitted]:
        """Run the event loop up to ``until`` and return what was emitted."""
        if until < self.clock.now:
            raise ValueError("until must be >= clock.now")
        self.start()
        self._emitted = []
        try:
            self.clock.run_until(until)
            return self._emitted
        finally:
            self._emitted = None

    def _telemetry_tick(self) -> None:
        for sample in self.telemetry():
            if self.log_telemetry:
                self.log.append(
                    sample.t,
                    "telemetry",
                    cell=sample.cell_id,
                    granted=sample.per_flow_granted,
                    offered=sample.cell_offered_load,
                    nodes=sample.node_usages,
                )
            self._emit(sample)
        self.clock.call_later(self.telemetry_interval_ms, self._telemetry_tick)

    def telemetry(self) -> list[TelemetrySample]:
        t = self.clock.now
        usages = {nid: dict(sorted(n.usage.items())) for nid, n in sorted(self.nodes.items())}
        if not self.cells:
            return [TelemetrySample(t, None, {}, 0.0, usages)]
        out = []
        for cid in sorted(self.cells):
            cell = self.cells[cid]
            flows = [self.flows[f] for f in sorted(cell.flows)]
            out.append(
                TelemetrySample(
                    t,
                    cid,
                    {f.id: f.granted_mbps for f in flows},
                    math.fsum(f.demand_mbps for f in flows),
                    usages,
                )
            )
        return out

    def _set_background(self, cell_id: str, total_mbps: float) -> None:
        cell = self.cells[cell_id]
        n = len(cell.background_flows)
        per = total_mbps / n if n else 0.0
        for fid in cell.background_flows:
            self.flows[fid].demand_mbps = per
        self.log.append(self.clock.now, "load", cell=cell_id, background_mbps=total_mbps)
        self._reallocate(cell_id)

    def _reallocate(self, cell_id: str) -> None:
        cell = self.cells[cell_id]
        grants = allocate_capacity(cell.capacity_mbps, (self.flows[f] for f in cell.flows))
        for fid, g in grants.items():
            self.flows[fid].granted_mbps = g

    def reserved_mbps(self, cell_id: str, exclude: str | None = None) -> float:
        cell = self.cells[cell_id]
        return math.fsum(
            self.flows[f].gbr_mbps
            for f in cell.flows
            if f != exclude and self.flows[f].ng_qi is NgQi.GUARANTEED_BITRATE
        )

    # -- faults and alarms ----------------------------------------------

    def inject_fault(self, fault: FaultInjection) -> list[Alert]:
        """Apply a fault's overrides to its node and raise the resulting alarms."""
        node = self.node(fault.target_node)
        p = fault.payload
        node.params.update(p.params)
        node.usage.update(p.usage)
        if p.health is not None:
            node.health = p.health
        if p.pod_running is not None:
            node.pod_running = p.pod_running
        if p.link_up is not None:
            node.link_up = p.link_up
        _apply_code_default(node, fault)
        self.log.append(
            self.clock.now,
            "fault",
            node=node.id,
            code=fault.code.value,
            params=dict(node.params),
            usage=dict(node.usage),
            health=node.health.value,
        )
        return self.raise_alarms(node.id)

    def raise_alarms(self, node_id: str) -> list[Alert]:
        """Re-evaluate alarm conditions of one node; returns newly raised alerts."""
        node = self.node(node_id)
        raised = []
        for code in AlertCode:
            key = incident_key(node.id, code)
            firing, details = _alarm_condition(node, code)
            if firing and key not in self.active_alerts:
                alert = Alert(self.clock.now, node.id, code, ALERT_SEVERITY[code], details)
                self.active_alerts[key] = alert
                self.log.append(
                    alert.t, "alarm", incident=key, node=node.id, code=code.value,
                    severity=alert.severity.value, details=details,
                )
                raised.append(alert)
                if self.dispatch_delay_ms is not None:
                    self.clock.call_later(self.dispatch_delay_ms, self._assign, alert)
                self._emit(alert)
            elif not firing and key in self.active_alerts:
                del self.active_alerts[key]
                self.log.append(self.clock.now, "alarm_cleared", incident=key, node=node.id, code=code.value)
        return raised

    def alert_active(self, key: str) -> bool:
        return key in self.active_alerts

    def _assign(self, alert: Alert) -> None:
        self.assignments[alert.key] = self.clock.now
        self.log.append(self.clock.now, "assigned", incident=alert.key)
        for fn in list(self._assignment_listeners):
            fn(alert)
        for fn in self._assignment_waiters.pop(alert.key, []):
            fn()

    # -- tool effects ---------------------------------------------------

    def apply_tool_effect(self, call):
        """Apply a tool call's effect now; failures leave state untouched."""
        from ..protocol import ToolResult

        effect = _EFFECTS.get(call.tool_name)
        if effect is None:
            return ToolResult(call.call_id, False, {}, self.clock.now, f"no effect for tool {call.tool_name!r}")
        try:
            outputs = effect(self, **call.args)
        except ToolEffectError as exc:
            return ToolResult(call.call_id, False, {}, self.clock.now, str(exc))
        except TypeError as exc:
            return ToolResult(call.call_id, False, {}, self.clock.now, f"bad arguments: {exc}")
        return ToolResult(call.call_id, True, outputs, self.clock.now, "")

    def _flow(self, flow_id: str) -> QosFlow:
        f = self.flows.get(flow_id)
        if f is None:
            raise ToolEffectError(f"unknown flow {flow_id!r}")
        return f

    def _node(self, node_id: str) -> NfNode:
        n = self.nodes.get(node_id)
        if n is None:
            raise ToolEffectError(f"unknown node {node_id!r}")
        return n

    def set_qos_profile(self, flow: str, ng_qi: str) -> dict[str, Any]:
        f = self._flow(flow)
        try:
            qi = NgQi(ng_qi)
        except ValueError:
            raise ToolEffectError(f"unknown NG-QI class {ng_qi!r}") from None
        f.ng_qi = qi
        if qi is not NgQi.GUARANTEED_BITRATE:
            f.gbr_mbps = 0.0
        self._reallocate(f.cell_id)
        return {"flow": f.id, "ng_qi": qi.value}

    def reserve_bandwidth(self, cell: str, flow: str, rate_mbps: float) -> dict[str, Any]:
        if cell not in self.cells:
            raise ToolEffectError(f"unknown cell {cell!r}")
        f = self._flow(flow)
        if f.cell_id != cell:
            raise ToolEffectError(f"flow {flow} is not on cell {cell}")
        if rate_mbps <= 0:
            raise ToolEffectError("reservation rate must be positive")
        residual = self.cells[cell].capacity_mbps - self.reserved_mbps(cell, exclude=flow)
        if rate_mbps > residual:
            raise ToolEffectError(f"reservation {rate_mbps} Mbps exceeds residual capacity {residual} Mbps")
        f.ng_qi = NgQi.GUARANTEED_BITRATE
        f.gbr_mbps = float(rate_mbps)
        self._reallocate(cell)
        return {"flow": f.id, "gbr_mbps": f.gbr_mbps, "granted_mbps": f.granted_mbps}

    def release_reservation(self, flow: str) -> dict[str, Any]:
        f = self._flow(flow)
        f.gbr_mbps = 0.0
        f.ng_qi = NgQi.BEST_EFFORT
        self._reallocate(f.cell_id)
        return {"flow": f.id, "gbr_mbps": 0.0}

    def update_node_config(self, node: str, param: str, value: int) -> dict[str, Any]:
        n = self._node(node)
        if param not in n.params:
            raise ToolEffectError(f"node {node} has no parameter {param!r}")
        n.params[param] = int(value)
        self.raise_alarms(n.id)
        return {"node": n.id, "param": param, "value": n.params[param]}

    def graceful_reload(self, node: str) -> dict[str, Any]:
        n = self._node(node)
        if n.health is Health.UNREACHABLE:
            raise ToolEffectError(f"node {node} is unreachable")
        if n.health is Health.DEGRADED:
            n.health = Health.UP
        self.raise_alarms(n.id)
        return {"node": n.id, "reloaded": True}

    def restart_node(self, node: str) -> dict[str, Any]:
        n = self._node(node)
        n.health = Health.UP
        n.pod_running = True
        self.raise_alarms(n.id)
        return {"node": n.id, "health": n.health.value}

    def scale_session_capacity(self, node: str, delta: int) -> dict[str, Any]:
        n = self._node(node)
        if "session_capacity" not in n.params:
            raise ToolEffectError(f"node {node} has no session_capacity")
        if n.params["session_capacity"] + int(delta) <= 0:
            raise ToolEffectError("session capacity must stay positive")
        n.params["session_capacity"] += int(delta)
        self.raise_alarms(n.id)
        return {"node": n.id, "session_capacity": n.params["session_capacity"]}

    def ping_check(self, node: str) -> dict[str, Any]:
        n = self._node(node)
        return {"node": n.id, "reachable": n.health is not Health.UNREACHABLE and n.link_up}

    def pod_status_check(self, node: str) -> dict[str, Any]:
        n = self._node(node)
        return {"node": n.id, "pod_running": n.pod_running}

    def link_check(self, node: str) -> dict[str, Any]:
        n = self._node(node)
        return {"node": n.id, "link_up": n.link_up}

    def query_metrics(self, selector: str) -> dict[str, Any]:
        if selector in self.nodes:
            n = self.nodes[selector]
            out: dict[str, Any] = {"node": n.id, "health": n.health.value}
            out.update({f"param.{k}": v for k, v in sorted(n.params.items())})
            out.update({f"usage.{k}": v for k, v in sorted(n.usage.items())})
            return out
        if selector in self.flows:
            f = self.flows[selector]
            return {"flow": f.id, "ng_qi": f.ng_qi.value, "gbr_mbps": f.gbr_mbps,
                    "demand_mbps": f.demand_mbps, "granted_mbps": f.granted_mbps}
        if selector in self.cells:
            c = self.cells[selector]
            return {"cell": c.id, "capacity_mbps": c.capacity_mbps, "reserved_mbps": self.reserved_mbps(c.id)}
        raise ToolEffectError(f"selector {selector!r} matches nothing")

    # -- read-only views ------------------------------------------------

    def node_states(self) -> dict[str, dict[str, Any]]:
        return {
            nid: {
                "kind": n.kind.value,
                "address": n.address,
                "health": n.health.value,
                "params": dict(sorted(n.params.items())),
                "usage": dict(sorted(n.usage.items())),
            }
            for nid, n in sorted(self.nodes.items())
        }

    def state_image(self) -> dict[str, Any]:
        """Full mutable-state image, used to check atomicity of failed calls."""
        return {
            "flows": {k: vars(v).copy() for k, v in sorted(self.flows.items())},
            "nodes": {k: {**vars(v), "params": dict(v.params), "usage": dict(v.usage)} for k, v in sorted(self.nodes.items())},
            "alerts": sorted(self.active_alerts),
        }


def _alarm_condition(node: NfNode, code: AlertCode) -> tuple[bool, dict[str, str]]:
    base = {"address": node.address, "node_kind": node.kind.value}
    if code is AlertCode.AMF_UNREACHABLE:
        firing = node.kind is NodeKind.AMF and node.health is Health.UNREACHABLE
        return firing, {**base, "health": node.health.value}
    if code is AlertCode.HTTP_CONN_EXHAUSTION:
        limit = node.params.get("max_http_connections")
        used = node.usage.get("http_connections_in_use", 0)
        if limit is None:
            return False, base
        return used >= limit, {**base, "metric": "http_connections_in_use",
                               "value": str(used), "threshold": str(limit)}
    if code is AlertCode.SESSION_CAPACITY_L1:
        cap = node.params.get("session_capacity")
        used = node.usage.get("active_sessions", 0)
        if cap is None:
            return False, base
        return used >= SESSION_L1_FRACTION * cap, {**base, "metric": "active_sessions",
                                                   "value": str(used), "threshold": str(cap)}
    raise AssertionError(code)


def _apply_code_default(node: NfNode, fault: FaultInjection) -> None:
    # A payload that does not itself trip the alarm drives usage to the threshold.
    p = fault.payload
    if fault.code is AlertCode.AMF_UNREACHABLE and p.health is None:
        node.health = Health.UNREACHABLE
    elif fault.code is AlertCode.HTTP_CONN_EXHAUSTION and "http_connections_in_use" not in p.usage:
        limit = node.params.get("max_http_connections")
        if limit is not None:
            node.usage["http_connections_in_use"] = max(node.usage.get("http_connections_in_use", 0), limit)
    elif fault.code is AlertCode.SESSION_CAPACITY_L1 and "active_sessions" not in p.usage:
        cap = node.params.get("session_capacity")
        if cap is not None:
            node.usage["active_sessions"] = max(node.usage.get("active_sessions", 0),
                                                math.ceil(SESSION_L1_FRACTION * cap))


_EFFECTS: dict[str, Callable[..., dict[str, Any]]] = {
    name: getattr(Network, name)
    for name in (
        "set_qos_profile",
        "reserve_bandwidth",
        "release_reservation",
        "update_node_config",
        "graceful_reload",
        "restart_node",
        "scale_session_capacity",
        "ping_check",
        "pod_status_check",
        "link_check",
        "query_metrics",
    )
}
