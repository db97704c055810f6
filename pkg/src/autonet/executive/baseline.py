"""Baselines: a debounced QoS script, a fixed diagnostic decision tree, and
a human operator with configured stage durations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping, Optional, Sequence

from ..memory import TemplateStep, instantiate_steps
from ..protocol import ToolResult
from ..simnet.model import SESSION_L1_FRACTION, Alert, AlertCode, NgQi, TelemetrySample
from ..simnet.network import Network
from ..toolbox import Toolbox

Runbooks = Mapping[str, Sequence[TemplateStep]]


def run_sequence(toolbox: Toolbox, steps: Sequence[tuple[str, dict[str, Any]]], owner: str,
                 on_done: Callable[[list[ToolResult]], None], gap_ms: int = 0) -> None:
    """Invoke steps one after another; stop at the first failure.

    ``gap_ms`` is waited after every successful step, the last included.
    """
    results: list[ToolResult] = []
    clock = toolbox.network.clock

    def step(i: int) -> None:
        if i == len(steps):
            on_done(results)
            return
        tool, args = steps[i]

        def got(result: ToolResult) -> None:
            results.append(result)
            if not result.success:
                on_done(results)
            elif gap_ms:
                clock.call_later(gap_ms, step, i + 1)
            else:
                step(i + 1)

        toolbox.invoke(toolbox.new_call(tool, **args), got, owner=owner)

    step(0)


class AlarmWatch:
    """Logs ``verified`` for an incident once its alarm is observed cleared."""

    def __init__(self, network: Network, incident: str, actor: str, timeout_ms: int = 3_600_000):
        self.net = network
        self.incident = incident
        self.actor = actor
        self.deadline = network.clock.now + timeout_ms
        self.done = False
        if not self._check():
            network.subscribe(self._on_emitted)

    def _check(self) -> bool:
        if self.done:
            return True
        if not self.net.alert_active(self.incident):
            self.done = True
            self.net.log.append(self.net.clock.now, "verified", incident=self.incident, agent=self.actor,
                                outcome="Resolved", detail="alarm cleared")
            return True
        if self.net.clock.now >= self.deadline:
            self.done = True
            self.net.log.append(self.net.clock.now, "failed", incident=self.incident, agent=self.actor,
                                outcome="Failed", detail="alarm still active")
            return True
        return False

    def _on_emitted(self, ev) -> None:
        if isinstance(ev, TelemetrySample):
            self._check()


def runbook_steps(runbooks: Runbooks, code: str, network: Network, node_id: str) -> list[tuple[str, dict[str, Any]]]:
    node = network.node(node_id)
    bindings = {"node": node_id, "address": node.address, "param": dict(node.params),
                "usage": dict(node.usage), "recommended": {}}
    return instantiate_steps(runbooks[code], bindings)


# -- Case A -------------------------------------------------------------


class RuleBasedQosScript:
    """Fires the QoS script once a breach has lasted ``debounce_ms``.

    The script runs its two steps sequentially, so the intervention lands
    debounce plus the two tool latencies after the first breached sample.
    """

    def __init__(self, network: Network, toolbox: Toolbox, *, flow_id: str, cell_id: str, bound: float,
                 debounce_ms: int = 20_000, agent_id: str = "rule-qos"):
        self.net = network
        self.toolbox = toolbox
        self.flow_id = flow_id
        self.cell_id = cell_id
        self.bound = float(bound)
        self.debounce_ms = int(debounce_ms)
        self.id = agent_id
        self.breach_since: Optional[int] = None
        self.running = False
        self.fired = 0
        network.subscribe(self._on_emitted)

    def _on_emitted(self, ev) -> None:
        if not isinstance(ev, TelemetrySample) or ev.cell_id != self.cell_id:
            return
        granted = ev.per_flow_granted.get(self.flow_id)
        if granted is None:
            return
        if granted >= self.bound:
            self.breach_since = None
            return
        if self.breach_since is None:
            self.breach_since = ev.t
            self.net.log.append(ev.t, "breach", agent=self.id, flow=self.flow_id, granted=granted)
        if not self.running and ev.t - self.breach_since >= self.debounce_ms:
            self._fire()

    def _fire(self) -> None:
        self.running = True
        self.fired += 1
        self.net.log.append(self.net.clock.now, "rule_fired", agent=self.id, flow=self.flow_id,
                            breach_since=self.breach_since)
        steps = [
            ("set_qos_profile", {"flow": self.flow_id, "ng_qi": NgQi.GUARANTEED_BITRATE.value}),
            ("reserve_bandwidth", {"cell": self.cell_id, "flow": self.flow_id, "rate_mbps": self.bound}),
        ]
        run_sequence(self.toolbox, steps, self.id, self._done)

    def _done(self, results: list[ToolResult]) -> None:
        self.running = False
        self.net.log.append(self.net.clock.now, "rule_done", agent=self.id,
                            success=all(r.success for r in results) and len(results) == 2)


# -- Case B -------------------------------------------------------------


@dataclass(frozen=True)
class StageTimes:
    analysis_ms: int
    resolution_ms: int


class HumanOperator:
    """NOC engineer: analyses for a fixed time, then applies the runbook.

    In manual mode the runbook's tool latencies are part of the configured
    resolution time; the remainder is preparation before the first tool.
    """

    def __init__(self, network: Network, toolbox: Toolbox, runbooks: Runbooks,
                 stage_times: Mapping[str, StageTimes] | None = None, *, agent_id: str = "noc-engineer",
                 manual: bool = False):
        self.net = network
        self.toolbox = toolbox
        self.runbooks = runbooks
        self.stage_times = dict(stage_times or {})
        self.id = agent_id
        self.watches: list[AlarmWatch] = []
        if manual:
            network.on_assignment(self._on_assigned)

    def _on_assigned(self, alert: Alert) -> None:
        times = self.stage_times[alert.code.value]
        latency = sum(self.toolbox.registry.get(s.tool).latency_ms for s in self.runbooks[alert.code.value])
        prep = times.resolution_ms - latency
        if prep < 0:
            raise ValueError(f"{alert.code.value}: resolution time {times.resolution_ms} ms is shorter "
                             f"than the runbook's tool latency {latency} ms")
        self.take_over(alert, times.analysis_ms, prep)

    def take_over(self, alert: Alert, analysis_ms: int, prep_ms: int = 0) -> None:
        self.net.log.append(self.net.clock.now, "human_analysis", incident=alert.key, agent=self.id,
                            analysis_ms=analysis_ms)
        self.net.clock.call_later(analysis_ms, self._planned, alert, prep_ms)

    def _planned(self, alert: Alert, prep_ms: int) -> None:
        steps = runbook_steps(self.runbooks, alert.code.value, self.net, alert.source_node)
        self.net.log.append(self.net.clock.now, "planned", incident=alert.key, agent=self.id,
                            steps=[t for t, _ in steps], note="runbook")
        self.net.clock.call_later(prep_ms, run_sequence, self.toolbox, steps, self.id,
                                  lambda results: self._executed(alert, results))

    def _executed(self, alert: Alert, results: list[ToolResult]) -> None:
        self.watches.append(AlarmWatch(self.net, alert.key, self.id))


class RuleBasedDecisionTree:
    """Fixed diagnostic tree: ping -> pod status -> link, then metrics.

    Every probe is followed by a debounce so a single transient reading
    does not drive the decision. Reachable nodes get threshold rules on
    their metrics; an unreachable node with a running pod and an up link
    matches no rule and is handed to a human.
    """

    PROBES = ("ping_check", "pod_status_check", "link_check")

    def __init__(self, network: Network, toolbox: Toolbox, runbooks: Runbooks, human: HumanOperator, *,
                 check_debounce_ms: int = 70_000, human_handoff_ms: int = 675_000, agent_id: str = "rule-tree"):
        self.net = network
        self.toolbox = toolbox
        self.runbooks = runbooks
        self.human = human
        self.check_debounce_ms = int(check_debounce_ms)
        self.human_handoff_ms = int(human_handoff_ms)
        self.id = agent_id
        self.watches: list[AlarmWatch] = []
        network.on_assignment(self._on_assigned)

    def _on_assigned(self, alert: Alert) -> None:
        node = alert.source_node
        probes = [(p, {"node": node}) for p in self.PROBES]
        run_sequence(self.toolbox, probes, self.id, lambda results: self._decide_probes(alert, results),
                     gap_ms=self.check_debounce_ms)

    def _decide_probes(self, alert: Alert, results: list[ToolResult]) -> None:
        out: dict[str, Any] = {}
        for r in results:
            out.update(r.outputs)
        self.net.log.append(self.net.clock.now, "tree_probes", incident=alert.key, agent=self.id,
                            reachable=out.get("reachable"), pod_running=out.get("pod_running"),
                            link_up=out.get("link_up"))
        if out.get("reachable"):
            self.toolbox.invoke(self.toolbox.new_call("query_metrics", selector=alert.source_node),
                                lambda r: self.net.clock.call_later(self.check_debounce_ms, self._decide_metrics,
                                                                    alert, r),
                                owner=self.id)
        elif out.get("pod_running") is False:
            self._apply(alert, AlertCode.AMF_UNREACHABLE.value, "pod down")
        else:
            self._handoff(alert, "unreachable with pod running and link up")

    def _decide_metrics(self, alert: Alert, result: ToolResult) -> None:
        m = result.outputs
        http_used, http_max = m.get("usage.http_connections_in_use"), m.get("param.max_http_connections")
        sess_used, sess_cap = m.get("usage.active_sessions"), m.get("param.session_capacity")
        if http_max is not None and http_used is not None and http_used >= http_max:
            self._apply(alert, AlertCode.HTTP_CONN_EXHAUSTION.value, "http connections at limit")
        elif sess_cap is not None and sess_used is not None and sess_used >= SESSION_L1_FRACTION * sess_cap:
            self._apply(alert, AlertCode.SESSION_CAPACITY_L1.value, "sessions above level-1 threshold")
        else:
            self._handoff(alert, "no threshold rule matched")

    def _apply(self, alert: Alert, rule: str, why: str) -> None:
        steps = runbook_steps(self.runbooks, rule, self.net, alert.source_node)
        self.net.log.append(self.net.clock.now, "planned", incident=alert.key, agent=self.id,
                            steps=[t for t, _ in steps], note=f"rule: {why}")
        run_sequence(self.toolbox, steps, self.id,
                     lambda results: self.watches.append(AlarmWatch(self.net, alert.key, self.id)))

    def _handoff(self, alert: Alert, why: str) -> None:
        self.net.log.append(self.net.clock.now, "handoff", incident=alert.key, agent=self.id, reason=why)
        self.human.take_over(alert, self.human_handoff_ms, 0)
