"""Dual-driven orchestrator.

Slow path (internal drive): telemetry window -> situation assessment ->
self-awareness check against meta-goals -> linear-trend prediction ->
choice making -> InternalGoal.

Fast path (external drive): alert -> fault-case matching in Public Memory ->
ReactiveStateEvent, with no prediction or choice making in between.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from .memory import NotFound, PrivateMemory, PublicMemory, instantiate_steps
from .protocol import (
    EVENT_PRIORITY,
    MAX_GOAL_PRIORITY,
    A2AMessage,
    Bus,
    Diagnosis,
    GoalStatus,
    Guardrails,
    InternalGoal,
    NodeState,
    Objective,
    ReactiveStateEvent,
    RemedyStep,
    RoutingError,
)
from .simnet.model import Alert, TelemetrySample
from .simnet.network import Network

logger = logging.getLogger(__name__)

# Float noise on a flat margin series must not read as a worsening trend.
SLOPE_EPS = 1e-12


@dataclass(frozen=True)
class OrchestratorSettings:
    window: int = 10
    confidence_threshold: float = 0.8
    lead_time_ms: int = 30_000
    hysteresis_ms: int = 60_000
    prediction_horizon_ms: int = 3_600_000
    memory_query_ms: int = 200


@dataclass(frozen=True)
class MetaGoal:
    """Persistent intent: the terminal's flow stays at or above its SLA bound."""

    id: str
    terminal_id: str
    flow_id: str
    cell_id: str

    def satisfied(self, sample: TelemetrySample, bound: float) -> bool:
        return sample.per_flow_granted.get(self.flow_id, 0.0) >= bound

    def margin(self, sample: TelemetrySample, capacity: float, bound: float) -> float:
        """Capacity left for the flow after everyone else's offered load, minus the bound.

        Stays positive while the flow is unaffected by contention and goes
        negative once the others' load would push it below its bound.
        """
        granted = sample.per_flow_granted.get(self.flow_id, 0.0)
        return capacity - (sample.cell_offered_load - granted) - bound


@dataclass(frozen=True)
class SituationAssessment:
    t: int
    cell_id: Optional[str]
    load_slope: float  # Mbps per second
    vip_flows: dict[str, str]  # terminal -> flow present in this cell
    alerts: tuple[Alert, ...]
    window: tuple[TelemetrySample, ...]


@dataclass(frozen=True)
class Deviation:
    meta_goal_id: str
    terminal_id: str
    flow_id: str
    cell_id: str
    margin_slope: float  # Mbps per second
    margins: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class Prediction:
    t_made: int
    metric: str
    forecast_violation: Optional[tuple[float, float]]  # (t_violation ms, confidence)
    window: int
    slope: float
    intercept: float
    r_squared: float


class PredictionError(ValueError):
    pass


# -- numerics -----------------------------------------------------------


def least_squares(points: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Ordinary least squares of y on x: (slope, intercept, R²).

    R² is 1.0 for data with no variance in y.
    """
    n = len(points)
    if n < 2:
        raise PredictionError("need at least two points for a line fit")
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise PredictionError("degenerate window: all timestamps are equal")
    sxy = math.fsum((x - mx) * (y - my) for x, y in points)
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_tot = math.fsum((y - my) ** 2 for y in ys)
    if ss_tot == 0:
        return slope, intercept, 1.0
    ss_res = math.fsum((y - (intercept + slope * x)) ** 2 for x, y in points)
    return slope, intercept, 1.0 - ss_res / ss_tot


def _seconds(points: Iterable[tuple[int, float]]) -> list[tuple[float, float]]:
    return [(t / 1000.0, v) for t, v in points]


# -- slow path ----------------------------------------------------------


def perceive(
    samples: Sequence[TelemetrySample],
    sla_terminals: Iterable[str],
    flow_terminals: dict[str, str],
    active_alerts: Iterable[Alert] = (),
) -> SituationAssessment:
    """Summarise a telemetry window: load trend, VIP presence, active alerts."""
    if not samples:
        raise ValueError("perceive needs at least one sample")
    last = samples[-1]
    if len(samples) >= 2 and samples[0].t != last.t:
        slope, _, _ = least_squares(_seconds((s.t, s.cell_offered_load) for s in samples))
    else:
        slope = 0.0
    vips = set(sla_terminals)
    present = {
        flow_terminals[f]: f
        for f in sorted(last.per_flow_granted)
        if f in flow_terminals and flow_terminals[f] in vips
    }
    return SituationAssessment(last.t, last.cell_id, slope, present, tuple(active_alerts), tuple(samples))


def load_meta_goals(mem: PrivateMemory) -> list[MetaGoal]:
    flows = mem.context("flows", {})
    goals = []
    for doc in mem.meta_goal_docs():
        term = doc["terminal_id"]
        flow_id = next((f for f, info in sorted(flows.items()) if info["terminal_id"] == term), None)
        if flow_id is None:
            continue
        goals.append(MetaGoal(doc["id"], term, flow_id, flows[flow_id]["cell_id"]))
    return sorted(goals, key=lambda g: g.id)


def self_awareness_check(assessment: SituationAssessment, mem: PrivateMemory) -> Optional[Deviation]:
    """Return a Deviation for the first meta-goal whose margin is shrinking.

    This fires while the goal is still met: a negative margin trend is
    enough. Meta-goals inside their post-goal hysteresis window are skipped.
    """
    suppressed_until = mem.context("suppressed_until", {})
    capacities = mem.context("cells", {})
    for goal in load_meta_goals(mem):
        if goal.cell_id != assessment.cell_id or goal.terminal_id not in assessment.vip_flows:
            continue
        if assessment.t < suppressed_until.get(goal.id, -1):
            continue
        try:
            bound = mem.get_sla(goal.terminal_id).lower_bound
        except NotFound:
            continue
        capacity = capacities[goal.cell_id]
        margins = tuple((s.t, goal.margin(s, capacity, bound)) for s in assessment.window)
        if len(margins) < 2 or margins[0][0] == margins[-1][0]:
            continue
        slope, _, _ = least_squares(_seconds(margins))
        if slope < -SLOPE_EPS:
            return Deviation(goal.id, goal.terminal_id, goal.flow_id, goal.cell_id, slope, margins)
    return None


def predict(
    deviation: Deviation,
    window: Sequence[tuple[int, float]] | None = None,
    horizon_ms: int = 3_600_000,
) -> Prediction:
    """Extrapolate the margin linearly and locate its zero crossing.

    ``window`` defaults to the deviation's own margin series. Confidence is
    the fit's R² clipped to [0, 1]. No forecast is made when the margin is
    not falling or the crossing lies beyond ``horizon_ms``.
    """
    pts = list(window if window is not None else deviation.margins)
    if len(pts) < 3:
        raise PredictionError("prediction window needs at least 3 samples")
    slope, intercept, r2 = least_squares(_seconds(pts))
    t_made = pts[-1][0]
    confidence = min(1.0, max(0.0, r2))
    forecast = None
    if slope < 0:
        t_cross = -intercept / slope * 1000.0
        # A crossing already behind the last sample means "violation imminent".
        t_violation = t_cross if t_cross > t_made else math.nextafter(float(t_made), math.inf)
        if t_violation - t_made <= horizon_ms:
            forecast = (t_violation, confidence)
    return Prediction(t_made, "margin_mbps", forecast, len(pts), slope, intercept, r2)


def choice_making(
    deviation: Deviation,
    prediction: Prediction,
    mem: PrivateMemory,
    *,
    goal_id: str,
    now: int | None = None,
    confidence_threshold: float = 0.8,
    lead_time_ms: int = 30_000,
) -> Optional[InternalGoal]:
    """Issue a preemptive assurance goal when a confident violation is near.

    The reservation cap never exceeds the SLA-derived bound and the goal's
    deadline is the forecast violation time.
    """
    if prediction.forecast_violation is None:
        return None
    t_violation, confidence = prediction.forecast_violation
    now = prediction.t_made if now is None else now
    if confidence < confidence_threshold or t_violation - now > lead_time_ms:
        return None
    sla = mem.get_sla(deviation.terminal_id)
    return InternalGoal(
        goal_id=goal_id,
        objective=Objective.PREEMPTIVE_SERVICE_ASSURANCE,
        terminal_id=deviation.terminal_id,
        flow_id=deviation.flow_id,
        cell_id=deviation.cell_id,
        constraints=Guardrails(max_reserve_mbps=sla.lower_bound, deadline_ms=math.ceil(t_violation)),
        originating_meta_goal_id=deviation.meta_goal_id,
    )


# -- fast path ----------------------------------------------------------


def alert_features(alert: Alert) -> set[str]:
    feats = {alert.code.value}
    for key in ("node_kind", "metric"):
        if alert.details.get(key):
            feats.add(alert.details[key])
    return feats


def handle_alert(
    alert: Alert,
    public_memory: PublicMemory,
    snapshot: dict[str, dict[str, Any]],
    event_id: str,
) -> ReactiveStateEvent:
    """Preliminary diagnosis by feature matching; no prediction, no planning."""
    ranked = public_memory.query_fault_cases(alert_features(alert))
    node = snapshot.get(alert.source_node, {})
    context = tuple(
        NodeState(nid, s["kind"], s["address"], s["health"], dict(s["params"]), dict(s["usage"]))
        for nid, s in sorted(snapshot.items())
    )
    if not ranked:
        diag = Diagnosis(None, f"no fault case matches {sorted(alert_features(alert))}", 0.0, ())
        return ReactiveStateEvent(event_id, alert, context, diag)
    case, score = ranked[0]
    bindings = {
        "node": alert.source_node,
        "address": node.get("address", alert.details.get("address", "")),
        "param": dict(node.get("params", {})),
        "usage": dict(node.get("usage", {})),
        "recommended": dict(case.recommended_params),
    }
    root_cause = case.root_cause.format(**bindings)
    remedy = tuple(RemedyStep(tool, args) for tool, args in instantiate_steps(case.remedy_template, bindings))
    return ReactiveStateEvent(event_id, alert, context, Diagnosis(case.id, root_cause, score, remedy))


# -- agent --------------------------------------------------------------


@dataclass
class Routes:
    healing: str
    assurance: list[str] = field(default_factory=list)


class Orchestrator:
    """Binds both drives to a network, a bus and the two memories."""

    def __init__(
        self,
        agent_id: str,
        network: Network,
        bus: Bus,
        public_memory: PublicMemory,
        private_memory: PrivateMemory,
        routes: Routes,
        settings: OrchestratorSettings | None = None,
        *,
        internal_drive: bool = True,
        external_drive: bool = True,
    ):
        self.id = agent_id
        self.net = network
        self.bus = bus
        self.public = public_memory
        self.private = private_memory
        self.routes = routes
        self.settings = settings or OrchestratorSettings()
        self.internal_drive = internal_drive
        self.external_drive = external_drive
        self._windows: dict[Optional[str], deque[TelemetrySample]] = {}
        self._msg_ids = itertools.count(1)
        self.goals_issued = 0
        self._event_ids = itertools.count(1)
        self._assurance_rr = itertools.count()
        self.statuses: list[GoalStatus] = []
        bus.register(agent_id, self.on_message)
        network.subscribe(self._on_emitted)

    @property
    def log(self):
        return self.net.log

    def _next_msg_id(self) -> str:
        return f"{self.id}-m{next(self._msg_ids):05d}"

    def _on_emitted(self, ev) -> None:
        if isinstance(ev, Alert):
            if self.external_drive:
                self.on_alert(ev)
        elif self.internal_drive:
            self.on_telemetry(ev)

    # slow path
    def on_telemetry(self, sample: TelemetrySample) -> Optional[InternalGoal]:
        win = self._windows.setdefault(sample.cell_id, deque(maxlen=self.settings.window))
        win.append(sample)
        if len(win) < 3 or not self.private.meta_goal_docs():
            return None
        flows = {f: info["terminal_id"] for f, info in self.private.context("flows", {}).items()}
        assessment = perceive(list(win), self.private.sla_terminals(), flows, self.net.active_alerts.values())
        dev = self_awareness_check(assessment, self.private)
        if dev is None:
            return None
        pred = predict(dev, horizon_ms=self.settings.prediction_horizon_ms)
        self.log.append(sample.t, "deviation", meta_goal=dev.meta_goal_id, slope=dev.margin_slope,
                        margin=dev.margins[-1][1])
        self.log.append(sample.t, "prediction", meta_goal=dev.meta_goal_id,
                        t_violation=None if pred.forecast_violation is None else pred.forecast_violation[0],
                        confidence=min(1.0, max(0.0, pred.r_squared)))
        goal = choice_making(
            dev, pred, self.private,
            goal_id=f"goal-{self.goals_issued + 1:04d}",
            now=sample.t,
            confidence_threshold=self.settings.confidence_threshold,
            lead_time_ms=self.settings.lead_time_ms,
        )
        if goal is None:
            return None
        self.goals_issued += 1
        suppressed = self.private.context("suppressed_until", {})
        suppressed[dev.meta_goal_id] = sample.t + self.settings.hysteresis_ms
        self.private.set_context("suppressed_until", suppressed)
        self.send_goal(goal)
        return goal

    def send_goal(self, goal: InternalGoal, recipient: str | None = None) -> A2AMessage:
        if recipient is None:
            agents = self.routes.assurance
            recipient = agents[next(self._assurance_rr) % len(agents)]
        try:
            prio = self.private.get_sla(goal.terminal_id).priority
        except NotFound:
            prio = 1
        msg = A2AMessage(self._next_msg_id(), self.net.clock.now, self.id, recipient,
                         max(1, min(prio, MAX_GOAL_PRIORITY)), goal)
        self.log.append(msg.t_sent, "goal_issued", goal_id=goal.goal_id, recipient=recipient,
                        reserve_cap=goal.constraints.max_reserve_mbps, deadline=goal.constraints.deadline_ms)
        self._send(msg)
        return msg

    # fast path
    def on_alert(self, alert: Alert) -> None:
        self.log.append(self.net.clock.now, "alert_received", incident=alert.key)
        event = handle_alert(alert, self.public, self.net.node_states(), f"evt-{next(self._event_ids):04d}")
        self.net.clock.call_later(self.settings.memory_query_ms, self._dispatch_event, event)

    def _dispatch_event(self, event: ReactiveStateEvent) -> None:
        msg = A2AMessage(self._next_msg_id(), self.net.clock.now, self.id, self.routes.healing,
                         EVENT_PRIORITY, event)
        self.log.append(msg.t_sent, "event_dispatched", incident=event.alert.key, event_id=event.event_id,
                        case=event.diagnosis.matched_case_id, confidence=event.diagnosis.confidence,
                        latency_ms=msg.t_sent - event.alert.t, root_cause=event.diagnosis.root_cause)
        self._send(msg)

    def _send(self, msg: A2AMessage) -> None:
        try:
            self.bus.send(msg)
        except RoutingError as exc:
            self.log.append(self.net.clock.now, "routing_error", msg_id=msg.msg_id, reason=str(exc))

    def on_message(self, msg: A2AMessage) -> None:
        if isinstance(msg.body, GoalStatus):
            self.statuses.append(msg.body)
            self.log.append(self.net.clock.now, "goal_status", ref=msg.body.ref_id, state=msg.body.state.value,
                            sender=msg.sender, detail=msg.body.detail)
