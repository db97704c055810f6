import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autonet.eventlog import EventLog
from autonet.executive import (
    ASSURANCE,
    HEALING,
    ExecutiveAgent,
    PlanningError,
    RuleBasedQosScript,
    plan_assurance,
    plan_healing,
)
from autonet.memory import Outcome, PrivateMemory, PublicMemory, SlaMetric, SlaRequirement
from autonet.orchestrator import Orchestrator, Routes, handle_alert
from autonet.protocol import (
    EVENT_PRIORITY,
    A2AMessage,
    Bus,
    Diagnosis,
    GoalState,
    Guardrails,
    InternalGoal,
    Objective,
    ReactiveStateEvent,
    RemedyStep,
    ToolCall,
)
from autonet.simnet import (
    Alert,
    AlertCode,
    Cell,
    FaultInjection,
    FaultPayload,
    Network,
    NfNode,
    NodeKind,
    QosFlow,
)
from autonet.simnet.model import NgQi, Severity
from autonet.harness.scenarios import preemption_trial
from autonet.toolbox import Toolbox, register_defaults


def calls():
    ids = itertools.count(1)
    return lambda tool, **args: ToolCall(f"c{next(ids)}", tool, args)


def goal(gid="g1", cap=2.0, flow="vip", cell="cell-1", terminal="cam"):
    return InternalGoal(gid, Objective.PREEMPTIVE_SERVICE_ASSURANCE, terminal, flow, cell,
                        Guardrails(cap, 30_000), "mg")


def flow_ctx(ng_qi="BestEffort", gbr=0.0):
    return {"flows": {"vip": {"ng_qi": ng_qi, "gbr_mbps": gbr, "granted_mbps": 0.25, "cell_id": "cell-1"}}}


# -- pure planning ------------------------------------------------------


def test_assurance_plan_elevates_then_reserves_bound():
    plan = plan_assurance(goal(), flow_ctx(), 2.0, plan_id="p", new_call=calls())
    assert plan.tools() == ("set_qos_profile", "reserve_bandwidth")
    assert plan.steps[1].args["rate_mbps"] == 2.0
    assert plan.verification.kind == "throughput" and plan.verification.bound == 2.0
    assert plan.note == ""


def test_assurance_plan_is_partial_under_tight_guardrail():
    plan = plan_assurance(goal(cap=1.5), flow_ctx(), 2.0, plan_id="p", new_call=calls())
    assert plan.steps[1].args["rate_mbps"] == 1.5 and plan.note == "partial"


def test_assurance_plan_when_already_reserved():
    plan = plan_assurance(goal(), flow_ctx("GuaranteedBitrate", 2.0), 2.0, plan_id="p", new_call=calls())
    assert plan.tools() == ("query_metrics",) and plan.note == "already-satisfied"


def test_assurance_plan_unknown_flow():
    with pytest.raises(PlanningError):
        plan_assurance(goal(flow="ghost"), flow_ctx(), 2.0, plan_id="p", new_call=calls())


def http_event(kb, max_http=100):
    state = {"smf-1": {"kind": "SMF", "address": "11.12.13.114", "health": "Up",
                       "params": {"max_http_connections": max_http}, "usage": {"http_connections_in_use": 100}}}
    alert = Alert(0, "smf-1", AlertCode.HTTP_CONN_EXHAUSTION, Severity.CRITICAL,
                  {"node_kind": "SMF", "metric": "http_connections_in_use"})
    return handle_alert(alert, kb.public_memory(), state, "evt-1"), state


def test_healing_plan_from_matched_case(kb):
    ev, state = http_event(kb)
    plan = plan_healing(ev, {"nodes": state}, register_defaults().names(), plan_id="p", new_call=calls(),
                        public_memory=kb.public_memory())
    assert plan.tools() == ("update_node_config", "graceful_reload")
    assert plan.steps[0].args["value"] == 1000
    assert plan.verification.incident == "smf-1:HttpConnExhaustion"


def test_healing_plan_escalates_without_diagnosis():
    alert = Alert(0, "smf-1", AlertCode.HTTP_CONN_EXHAUSTION, Severity.CRITICAL)
    ev = ReactiveStateEvent("e", alert, (), Diagnosis(None, "none", 0.0))
    plan = plan_healing(ev, {}, ["query_metrics"], plan_id="p", new_call=calls())
    assert plan.tools() == ("query_metrics",) and plan.note == "escalation"
    assert plan.verification.kind == "none"


def test_healing_plan_rejects_unknown_tool():
    alert = Alert(0, "smf-1", AlertCode.HTTP_CONN_EXHAUSTION, Severity.CRITICAL)
    ev = ReactiveStateEvent("e", alert, (), Diagnosis("x", "c", 1.0, (RemedyStep("wipe_node", {}),)))
    with pytest.raises(PlanningError, match="wipe_node"):
        plan_healing(ev, {}, ["restart_node"], plan_id="p", new_call=calls())


# -- agent --------------------------------------------------------------


class Rig:
    def __init__(self, kb, *, handles=(ASSURANCE, HEALING), latency=None, n_cells=1, agents=1, review_ms=0):
        self.net = Network(log=EventLog())
        for i in range(n_cells):
            cid = f"cell-{i + 1}"
            self.net.add_cell(Cell(cid, 10.0))
            fid = "vip" if i == 0 else f"vip-{i + 1}"
            self.net.add_flow(QosFlow(fid, "cam" if i == 0 else f"cam-{i + 1}", cid, 2.0))
            self.net.add_background(cid, 39, [(0, 12.0)], prefix=f"bg{i + 1}")
        self.net.add_node(NfNode("smf-1", NodeKind.SMF, "11.12.13.114", {"max_http_connections": 1000},
                                 {"http_connections_in_use": 80}))
        self.toolbox = Toolbox(self.net, register_defaults(latency or {}))
        self.bus = Bus(scheduler=lambda fn: self.net.clock.call_later(0, fn), log=self.net.log)
        self.bus.register("orch")
        self.public = kb.public_memory()
        self.agents = [ExecutiveAgent(f"exec-{i + 1}", self.net, self.toolbox, self.bus, self.memory(n_cells),
                                      self.public, handles=handles, review_ms=review_ms,
                                      wait_for_assignment=False)
                       for i in range(agents)]
        self.agent = self.agents[0]
        self._ids = itertools.count(1)

    @staticmethod
    def memory(n_cells):
        mem = PrivateMemory()
        mem.set_sla(SlaRequirement("cam", SlaMetric.UPLINK_THROUGHPUT, 2.0, 10))
        for i in range(1, n_cells):
            mem.set_sla(SlaRequirement(f"cam-{i + 1}", SlaMetric.UPLINK_THROUGHPUT, 2.0, 10))
        return mem

    def send(self, body, priority, t=None, to="exec-1"):
        def go():
            self.bus.send(A2AMessage(f"m{next(self._ids)}", self.net.clock.now, "orch", to, priority, body))

        if t is None:
            go()
        else:
            self.net.clock.schedule(t, go)

    def event_at(self, t_fault):
        self.net.schedule_fault(FaultInjection(t_fault, "smf-1", AlertCode.HTTP_CONN_EXHAUSTION,
                                               FaultPayload({"max_http_connections": 100},
                                                            {"http_connections_in_use": 100})))

        def dispatch(alert):
            if isinstance(alert, Alert):
                ev = handle_alert(alert, self.public, self.net.node_states(), f"evt-{alert.t}")
                self.send(ev, EVENT_PRIORITY)

        self.net.subscribe(dispatch)

    def kinds(self, *kinds):
        return [(r.t, r.kind, r.payload.get("ref")) for r in self.net.log.of_kind(*kinds)]


def test_goal_runs_to_verified(kb):
    rig = Rig(kb)
    rig.send(goal(), 10)
    rig.net.advance(30_000)
    a = rig.agent
    entry = a.queue[0]
    assert entry.state is GoalState.DONE
    assert rig.net.flows["vip"].gbr_mbps == 2.0
    # set_qos 5 s + reserve 5 s, then three samples at >= 2 Mbps.
    assert rig.kinds("verified") == [(12_000, "verified", "g1")]
    exp = a.private.experience()
    assert len(exp) == 1 and exp[0].outcome is Outcome.RESOLVED
    assert exp[0].plan == ("set_qos_profile", "reserve_bandwidth")
    status = rig.bus.poll("orch")
    assert [m.body.state for m in status] == [GoalState.DONE]


def test_failed_step_aborts_plan_and_records_failure(kb):
    rig = Rig(kb)
    rig.net.add_flow(QosFlow("hog", "hog", "cell-1", 9.0, NgQi.GUARANTEED_BITRATE, 9.0))
    rig.send(goal(), 10)
    rig.net.advance(30_000)
    entry = rig.agent.queue[0]
    assert entry.state is GoalState.FAILED
    assert rig.net.flows["vip"].gbr_mbps == 0.0
    executed = rig.net.log.of_kind("executed")
    assert executed[-1].payload["success"] is False and executed[-1].payload["failed_step"] == 1
    assert rig.agent.private.experience()[0].outcome is Outcome.FAILED


def test_agent_rejects_bodies_it_does_not_handle(kb):
    rig = Rig(kb, handles=(ASSURANCE,))
    ev, _ = http_event(kb)
    rig.send(ev, EVENT_PRIORITY)
    rig.net.advance(0)
    assert rig.agent.queue == []
    assert [r.payload["ref"] for r in rig.net.log.of_kind("rejected")] == ["evt-1"]
    assert [m.body.state for m in rig.bus.poll("orch")] == [GoalState.FAILED]


def test_escalation_ends_failed(kb):
    rig = Rig(kb)
    alert = Alert(0, "smf-1", AlertCode.HTTP_CONN_EXHAUSTION, Severity.CRITICAL)
    rig.send(ReactiveStateEvent("e0", alert, (), Diagnosis(None, "none", 0.0)), EVENT_PRIORITY)
    rig.net.advance(20_000)
    (entry,) = rig.agent.queue
    assert entry.state is GoalState.FAILED
    assert "escalated" in rig.net.log.of_kind("failed")[0].payload["detail"]


def test_event_preempts_only_after_in_flight_call_returns(kb):
    rig = Rig(kb)
    rig.send(goal(), 10)
    rig.event_at(1000)
    rig.net.advance(200_000)
    goal_entry, event_entry = rig.agent.queue
    # set_qos_profile was in flight until t=5 s; the pause waits for it.
    assert rig.kinds("paused") == [(5000, "paused", "g1")]
    activated = rig.kinds("activated")
    assert activated[0] == (0, "activated", "g1")
    assert activated[1] == (5000, "activated", "evt-1000")
    assert goal_entry.resumed == 1 and goal_entry.state is GoalState.DONE
    assert event_entry.state is GoalState.DONE
    # The resumed goal came back after the event and re-planned.
    replans = [r for r in rig.net.log.of_kind("planned") if r.payload["ref"] == "g1"]
    assert len(replans) == 2
    assert rig.kinds("verified")[0][2] == "evt-1000"


def test_close_turns_paused_entries_into_preempted(kb):
    rig = Rig(kb)
    rig.send(goal(), 10)
    rig.event_at(1000)
    rig.net.advance(6000)
    rig.agent.close()
    goal_entry = rig.agent.queue[0]
    assert goal_entry.state is GoalState.FAILED
    assert rig.agent.private.experience()[0].outcome is Outcome.PREEMPTED


@pytest.mark.parametrize("seed", range(40))
def test_every_terminal_entry_has_one_experience_record(kb, seed):
    trial = preemption_trial(seed, kb)
    assert trial.violations == []
    finished = [r for r in trial.log.of_kind("verified", "failed") if "ref" in r.payload]
    assert len(finished) == 2
    assert {r.payload["ref"] for r in finished} == {"goal-0001", next(
        r.payload["ref"] for r in trial.log.of_kind("received") if r.payload["kind"] == HEALING)}


@pytest.mark.parametrize("n", [1, 2, 4])
def test_goals_spread_across_assurance_agents(kb, n):
    rig = Rig(kb, handles=(ASSURANCE,), n_cells=n, agents=n)
    mem = Rig.memory(n)
    orch = Orchestrator("o", rig.net, rig.bus, rig.public, mem, Routes("none", [a.id for a in rig.agents]),
                        internal_drive=False, external_drive=False)
    for i in range(n):
        fid, cid, term = ("vip", "cell-1", "cam") if i == 0 else (f"vip-{i + 1}", f"cell-{i + 1}", f"cam-{i + 1}")
        orch.send_goal(goal(f"g{i + 1}", flow=fid, cell=cid, terminal=term))
    rig.net.advance(30_000)
    for a in rig.agents:
        assert len(a.queue) == 1 and a.queue[0].state is GoalState.DONE
    # All agents worked in parallel: every goal verifies at the same instant.
    assert len({r.t for r in rig.net.log.of_kind("verified")}) == 1


# -- baselines ----------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 40), st.sampled_from([5_000, 20_000]))
def test_rule_script_fires_after_debounce(t_breach_s, debounce_ms):
    net = Network(log=EventLog())
    net.add_cell(Cell("c", 10.0))
    net.add_flow(QosFlow("vip", "cam", "c", 2.0))
    net.add_background("c", 39, [(0, 2.0), (t_breach_s * 1000, 12.0)])
    script = RuleBasedQosScript(net, Toolbox(net), flow_id="vip", cell_id="c", bound=2.0, debounce_ms=debounce_ms)
    net.advance(120_000)
    assert script.fired == 1
    (fired,) = net.log.of_kind("rule_fired")
    assert fired.t == t_breach_s * 1000 + debounce_ms
    assert net.flows["vip"].gbr_mbps == 2.0
