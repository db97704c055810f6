"""Executive agents: goal intake, preemptive goal management, planning,
tool execution, verification and experience recording."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Union

from ..memory import ExperienceRecord, NotFound, Outcome, PrivateMemory, PublicMemory, instantiate_steps
from ..protocol import (
    A2AMessage,
    Bus,
    GoalState,
    GoalStatus,
    InternalGoal,
    Objective,
    ReactiveStateEvent,
    RoutingError,
    ToolCall,
    ToolResult,
)
from ..simnet.model import NgQi, TelemetrySample
from ..simnet.network import Network
from ..toolbox import InvocationError, Toolbox

logger = logging.getLogger(__name__)

Body = Union[InternalGoal, ReactiveStateEvent]
CallFactory = Callable[..., ToolCall]

ASSURANCE = "assurance"
HEALING = "healing"


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class Verification:
    """Post-state predicate a plan must reach.

    ``throughput``: the flow's grant stays >= ``bound`` for ``samples``
    consecutive telemetry samples. ``alarm_clear``: the incident's alert is
    no longer active. ``none``: nothing to verify (escalations).
    """

    kind: str
    flow_id: str = ""
    bound: float = 0.0
    samples: int = 3
    incident: str = ""


@dataclass(frozen=True)
class Plan:
    plan_id: str
    steps: tuple[ToolCall, ...]
    verification: Verification
    source_id: str
    note: str = ""

    def __post_init__(self):
        if not self.steps:
            raise PlanningError(f"plan {self.plan_id} has no steps")

    def tools(self) -> tuple[str, ...]:
        return tuple(c.tool_name for c in self.steps)


@dataclass(eq=False)
class GoalQueueEntry:
    body: Body
    state: GoalState
    priority: int
    seq: int
    sender: str
    t_received: int
    context: dict[str, Any] = field(default_factory=dict)
    plan: Optional[Plan] = None
    epoch: int = 0
    resumed: int = 0

    @property
    def ref_id(self) -> str:
        return self.body.goal_id if isinstance(self.body, InternalGoal) else self.body.event_id

    @property
    def is_event(self) -> bool:
        return isinstance(self.body, ReactiveStateEvent)

    def order_key(self) -> tuple[int, int]:
        return (-self.priority, self.seq)


# -- planning (pure) ----------------------------------------------------


def plan_assurance(goal: InternalGoal, context: dict[str, Any], sla_bound: float, *,
                   plan_id: str, new_call: CallFactory) -> Plan:
    """Elevate the flow to GBR and reserve min(SLA bound, guardrail).

    A flow that already holds such a reservation gets a read-only plan
    noted ``already-satisfied``; a guardrail below the bound is noted
    ``partial``.
    """
    if goal.objective is not Objective.PREEMPTIVE_SERVICE_ASSURANCE:
        raise PlanningError(f"unsupported objective {goal.objective}")
    flow = context.get("flows", {}).get(goal.flow_id)
    if flow is None:
        raise PlanningError(f"unknown flow {goal.flow_id!r}")
    rate = min(float(sla_bound), goal.constraints.max_reserve_mbps)
    verify = Verification("throughput", flow_id=goal.flow_id, bound=rate)
    if flow["ng_qi"] == NgQi.GUARANTEED_BITRATE.value and flow["gbr_mbps"] >= rate:
        return Plan(plan_id, (new_call("query_metrics", selector=goal.flow_id),), verify, goal.goal_id,
                    "already-satisfied")
    steps = (
        new_call("set_qos_profile", flow=goal.flow_id, ng_qi=NgQi.GUARANTEED_BITRATE.value),
        new_call("reserve_bandwidth", cell=goal.cell_id, flow=goal.flow_id, rate_mbps=rate),
    )
    return Plan(plan_id, steps, verify, goal.goal_id, "partial" if rate < sla_bound else "")


def healing_bindings(node_id: str, node: dict[str, Any], recommended: dict[str, Any]) -> dict[str, Any]:
    return {
        "node": node_id,
        "address": node.get("address", ""),
        "param": dict(node.get("params", {})),
        "usage": dict(node.get("usage", {})),
        "recommended": dict(recommended),
    }


def plan_healing(event: ReactiveStateEvent, context: dict[str, Any], known_tools: Iterable[str], *,
                 plan_id: str, new_call: CallFactory, public_memory: PublicMemory | None = None) -> Plan:
    """Turn the event's diagnosis into a remedy plan against live node state.

    Confidence 0 yields a read-only escalation plan.
    """
    diag = event.diagnosis
    node_id = event.alert.source_node
    if diag.confidence == 0.0:
        return Plan(plan_id, (new_call("query_metrics", selector=node_id),), Verification("none"),
                    event.event_id, "escalation")
    steps: list[tuple[str, dict[str, Any]]]
    case = None
    if public_memory is not None:
        try:
            case = public_memory.get_case(diag.matched_case_id)
        except NotFound:
            case = None
    if case is not None:
        node = context.get("nodes", {}).get(node_id, {})
        steps = instantiate_steps(case.remedy_template, healing_bindings(node_id, node, case.recommended_params))
    else:
        steps = [(s.tool, dict(s.args)) for s in diag.recommended_remedy]
    if not steps:
        raise PlanningError(f"fault case {diag.matched_case_id} has an empty remedy")
    names = set(known_tools)
    for tool, _ in steps:
        if tool not in names:
            raise PlanningError(f"remedy references unknown tool {tool!r}")
    calls = tuple(new_call(tool, **args) for tool, args in steps)
    return Plan(plan_id, calls, Verification("alarm_clear", incident=event.alert.key), event.event_id)


# -- agent --------------------------------------------------------------


class ExecutiveAgent:
    """Runs one Active queue entry at a time.

    Higher-priority arrivals preempt the Active entry. If a tool call is in
    flight the pause is deferred until its result returns, so a preempting
    entry never runs alongside a call of the entry it displaced. Paused
    entries re-plan from the current state when resumed.
    """

    def __init__(
        self,
        agent_id: str,
        network: Network,
        toolbox: Toolbox,
        bus: Bus,
        private_memory: PrivateMemory,
        public_memory: PublicMemory | None = None,
        *,
        handles: Iterable[str] = (ASSURANCE, HEALING),
        review_ms: int = 0,
        verify_timeout_ms: int = 300_000,
        wait_for_assignment: bool = True,
    ):
        self.id = agent_id
        self.net = network
        self.toolbox = toolbox
        self.bus = bus
        self.private = private_memory
        self.public = public_memory
        self.handles = frozenset(handles)
        self.review_ms = int(review_ms)
        self.verify_timeout_ms = int(verify_timeout_ms)
        self.wait_for_assignment = wait_for_assignment
        self.queue: list[GoalQueueEntry] = []
        self.active: Optional[GoalQueueEntry] = None
        self._in_flight: Optional[str] = None
        self._verify: Optional[tuple[GoalQueueEntry, int, int]] = None  # entry, epoch, deadline
        self._streak = 0
        self._seq = itertools.count()
        self._plan_ids = itertools.count(1)
        self._msg_ids = itertools.count(1)
        bus.register(agent_id, self.receive)
        network.subscribe(self._on_emitted)

    @property
    def log(self):
        return self.net.log

    def _now(self) -> int:
        return self.net.clock.now

    def _owner(self, entry: GoalQueueEntry) -> str:
        return f"{self.id}:{entry.ref_id}"

    # intake
    def receive(self, msg: A2AMessage) -> Optional[GoalQueueEntry]:
        if msg.recipient != self.id:
            raise RoutingError(f"message {msg.msg_id} is addressed to {msg.recipient}, not {self.id}")
        body = msg.body
        kind = ASSURANCE if isinstance(body, InternalGoal) else HEALING if isinstance(body, ReactiveStateEvent) else None
        if kind is None or kind not in self.handles:
            ref = getattr(body, "goal_id", None) or getattr(body, "event_id", None) or msg.msg_id
            self.log.append(self._now(), "rejected", agent=self.id, ref=ref, reason=f"unsupported body {type(body).__name__}")
            self._status(msg.sender, ref, GoalState.FAILED, f"rejected: {self.id} does not handle {type(body).__name__}")
            return None
        entry = GoalQueueEntry(body, GoalState.PENDING, msg.priority, next(self._seq), msg.sender, self._now())
        entry.context = self._context(entry)
        self.queue.append(entry)
        self.log.append(self._now(), "received", agent=self.id, ref=entry.ref_id, kind=kind, priority=msg.priority,
                        history=len(entry.context["history"]))
        self._schedule()
        return entry

    def _context(self, entry: GoalQueueEntry) -> dict[str, Any]:
        """Experience history plus the live state the entry is about."""
        history = [r.to_doc() for r in self.private.experience()][-5:]
        flows = {}
        if isinstance(entry.body, InternalGoal) and entry.body.flow_id in self.net.flows:
            f = self.net.flows[entry.body.flow_id]
            flows[f.id] = {"ng_qi": f.ng_qi.value, "gbr_mbps": f.gbr_mbps, "granted_mbps": f.granted_mbps,
                           "cell_id": f.cell_id}
        return {"history": history, "flows": flows, "nodes": self.net.node_states()}

    # goal management
    def _schedule(self) -> None:
        waiting = [e for e in self.queue if e.state in (GoalState.PENDING, GoalState.PAUSED)]
        if not waiting:
            return
        best = min(waiting, key=GoalQueueEntry.order_key)
        if self.active is None:
            self._activate(best)
        elif best.priority > self.active.priority and self._in_flight is None:
            self._pause(self.active)
            self._activate(best)

    def _preempt_due(self) -> bool:
        return any(e.priority > self.active.priority for e in self.queue
                   if e.state in (GoalState.PENDING, GoalState.PAUSED))

    def _pause(self, entry: GoalQueueEntry) -> None:
        entry.state = GoalState.PAUSED
        entry.epoch += 1
        entry.plan = None
        self._verify = None
        self.active = None
        self.log.append(self._now(), "paused", agent=self.id, ref=entry.ref_id)

    def _activate(self, entry: GoalQueueEntry) -> None:
        resumed = entry.state is GoalState.PAUSED
        entry.state = GoalState.ACTIVE
        entry.epoch += 1
        entry.resumed += int(resumed)
        self.active = entry
        self.log.append(self._now(), "activated", agent=self.id, ref=entry.ref_id,
                        kind=HEALING if entry.is_event else ASSURANCE, resumed=resumed)
        start = self._guard(entry, self._analyse)
        if entry.is_event and self.wait_for_assignment:
            self.net.when_assigned(entry.body.alert.key, start)
        else:
            self.net.clock.call_later(0, start)

    def _guard(self, entry: GoalQueueEntry, fn: Callable[..., None]) -> Callable[..., None]:
        epoch = entry.epoch

        def run(*args: Any) -> None:
            if entry is self.active and entry.epoch == epoch:
                fn(entry, *args)

        return run

    # analysis: confirm the diagnosis with the matched case's read-only checks
    def _analyse(self, entry: GoalQueueEntry) -> None:
        steps: list[tuple[str, dict[str, Any]]] = []
        if entry.is_event and self.public is not None and entry.body.diagnosis.matched_case_id is not None:
            try:
                case = self.public.get_case(entry.body.diagnosis.matched_case_id)
            except NotFound:
                case = None
            if case is not None and case.confirm:
                node_id = entry.body.alert.source_node
                node = self.net.node_states().get(node_id, {})
                steps = instantiate_steps(case.confirm, healing_bindings(node_id, node, case.recommended_params))
        self._confirm(entry, steps, 0)

    def _confirm(self, entry: GoalQueueEntry, steps: list, i: int) -> None:
        if i == len(steps):
            self._plan(entry)
            return
        tool, args = steps[i]

        def reviewed(e: GoalQueueEntry) -> None:
            self._confirm(e, steps, i + 1)

        def done(e: GoalQueueEntry, result: ToolResult) -> None:
            self.net.clock.call_later(self.review_ms, self._guard(e, reviewed))

        self._invoke(entry, self.toolbox.new_call(tool, **args), done)

    def _plan(self, entry: GoalQueueEntry) -> None:
        entry.context = self._context(entry)
        plan_id = f"{self.id}-p{next(self._plan_ids):04d}"
        try:
            if isinstance(entry.body, InternalGoal):
                bound = self.private.get_sla(entry.body.terminal_id).lower_bound
                plan = plan_assurance(entry.body, entry.context, bound, plan_id=plan_id,
                                      new_call=self.toolbox.new_call)
            else:
                plan = plan_healing(entry.body, entry.context, self.toolbox.registry.names(), plan_id=plan_id,
                                    new_call=self.toolbox.new_call, public_memory=self.public)
        except (PlanningError, NotFound) as exc:
            self.log.append(self._now(), "plan_failed", agent=self.id, ref=entry.ref_id, reason=str(exc))
            self._finish(entry, GoalState.FAILED, f"planning failed: {exc}")
            return
        entry.plan = plan
        extra = {"incident": entry.body.alert.key} if entry.is_event else {}
        self.log.append(self._now(), "planned", agent=self.id, ref=entry.ref_id, plan_id=plan.plan_id,
                        steps=list(plan.tools()), note=plan.note, **extra)
        self._step(entry, 0)

    # execution
    def _invoke(self, entry: GoalQueueEntry, call: ToolCall, then: Callable[[GoalQueueEntry, ToolResult], None]) -> None:
        self._in_flight = call.call_id

        def on_result(result: ToolResult) -> None:
            self._in_flight = None
            if entry is not self.active:
                return
            if self._preempt_due():
                self._pause(entry)
                self._schedule()
                return
            then(entry, result)

        try:
            self.toolbox.invoke(call, on_result, owner=self._owner(entry))
        except InvocationError as exc:
            self._in_flight = None
            self._finish(entry, GoalState.FAILED, f"invocation error: {exc}")

    def _step(self, entry: GoalQueueEntry, i: int) -> None:
        plan = entry.plan
        if i == len(plan.steps):
            self.log.append(self._now(), "executed", agent=self.id, ref=entry.ref_id, plan_id=plan.plan_id,
                            success=True)
            self._start_verification(entry)
            return

        def done(e: GoalQueueEntry, result: ToolResult) -> None:
            if not result.success:
                self.log.append(self._now(), "executed", agent=self.id, ref=e.ref_id, plan_id=plan.plan_id,
                                success=False, failed_step=i, reason=result.reason)
                self._finish(e, GoalState.FAILED, f"step {i} ({plan.steps[i].tool_name}) failed: {result.reason}")
                return
            self._step(e, i + 1)

        self._invoke(entry, plan.steps[i], done)

    # verification
    def _start_verification(self, entry: GoalQueueEntry) -> None:
        v = entry.plan.verification
        if v.kind == "none":
            self._finish(entry, GoalState.FAILED, "escalated: no confident diagnosis")
            return
        if v.kind == "alarm_clear" and not self.net.alert_active(v.incident):
            self._finish(entry, GoalState.DONE, "alarm cleared")
            return
        self._streak = 0
        self._verify = (entry, entry.epoch, self._now() + self.verify_timeout_ms)

    def _on_emitted(self, ev) -> None:
        if self._verify is None or not isinstance(ev, TelemetrySample):
            return
        entry, epoch, deadline = self._verify
        if entry is not self.active or entry.epoch != epoch:
            self._verify = None
            return
        v = entry.plan.verification
        if v.kind == "alarm_clear":
            if not self.net.alert_active(v.incident):
                self._finish(entry, GoalState.DONE, "alarm cleared")
                return
        elif v.flow_id in ev.per_flow_granted:
            self._streak = self._streak + 1 if ev.per_flow_granted[v.flow_id] >= v.bound else 0
            if self._streak >= v.samples:
                self._finish(entry, GoalState.DONE, f"{v.samples} consecutive samples >= {v.bound} Mbps")
                return
        if self._now() >= deadline:
            self._finish(entry, GoalState.FAILED, "verification timed out")

    # completion
    def _finish(self, entry: GoalQueueEntry, state: GoalState, detail: str,
                outcome: Outcome | None = None) -> None:
        entry.state = state
        entry.epoch += 1
        if outcome is None:
            outcome = Outcome.RESOLVED if state is GoalState.DONE else Outcome.FAILED
        plan = entry.plan.tools() if entry.plan is not None else ()
        now = self._now()
        self.private.record_experience(ExperienceRecord(now, self.id, entry.ref_id, plan, outcome,
                                                        now - entry.t_received))
        extra = {"incident": entry.body.alert.key} if entry.is_event else {}
        self.log.append(now, "verified" if state is GoalState.DONE else "failed", agent=self.id, ref=entry.ref_id,
                        outcome=outcome.value, detail=detail, **extra)
        self._status(entry.sender, entry.ref_id, state, detail)
        if entry is self.active:
            self.active = None
            self._verify = None
            self._schedule()

    def _status(self, recipient: str, ref: str, state: GoalState, detail: str) -> None:
        if recipient not in self.bus.agents:
            return
        msg = A2AMessage(f"{self.id}-m{next(self._msg_ids):05d}", self._now(), self.id, recipient, 1,
                         GoalStatus(ref, state, detail))
        self.bus.send(msg)

    def close(self) -> None:
        """End of run: entries still Paused become Failed (preempted)."""
        for entry in self.queue:
            if entry.state is GoalState.PAUSED:
                self._finish(entry, GoalState.FAILED, "still paused at end of run", Outcome.PREEMPTED)

    def terminal_entries(self) -> list[GoalQueueEntry]:
        return [e for e in self.queue if e.state in (GoalState.DONE, GoalState.FAILED)]
