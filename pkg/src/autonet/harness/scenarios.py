"""Scenario builders and runners. Every run owns its clock, network and log."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Optional

from ..eventlog import EventLog, LogRecord
from ..executive import ASSURANCE, HEALING, ExecutiveAgent, HumanOperator, RuleBasedDecisionTree, RuleBasedQosScript, StageTimes
from ..memory import KnowledgeBase, PrivateMemory
from ..orchestrator import Orchestrator, OrchestratorSettings, Routes
from ..protocol import Bus, GoalState, Guardrails, InternalGoal, Objective
from ..simnet import Cell, FaultInjection, FaultPayload, Network, NfNode, QosFlow, SimClock, incident_key
from ..simnet.model import AlertCode, NodeKind
from ..toolbox import DEFAULT_LATENCY_MS, Toolbox, register_defaults
from .config import CaseAConfig, CaseBConfig
from .metrics import MS_PER_MIN, MttrMode, MttrRecord, ThroughputTrace, TraceMode, mttr_from_log, trace_from_log

ORCHESTRATOR_ID = "orchestrator"
ASSURANCE_ID = "assurance-1"
HEALING_ID = "healing-1"


@dataclass
class RunResult:
    case: str
    mode: str
    seed: int
    log: EventLog
    header: dict[str, Any]
    trace: Optional[ThroughputTrace] = None
    record: Optional[MttrRecord] = None
    agents: list[Any] = field(default_factory=list)

    @property
    def name(self) -> str:
        failure = self.header.get("failure")
        return f"{self.case}_{failure}_{self.mode}" if failure else f"{self.case}_{self.mode}"


def _ms(seconds: float) -> int:
    return int(round(seconds * 1000))


def _bus(clock: SimClock, log: EventLog) -> Bus:
    return Bus(scheduler=lambda fn: clock.call_later(0, fn), log=log)


def _agent_memory(kb: KnowledgeBase) -> PrivateMemory:
    mem = PrivateMemory()
    kb.load_slas(mem)
    return mem


# -- Case A -------------------------------------------------------------


def build_case_a_network(cfg: CaseAConfig, seed: int, log: EventLog) -> Network:
    net = Network(SimClock(), log, telemetry_interval_ms=cfg.telemetry_interval_ms, seed=seed)
    net.add_cell(Cell(cfg.cell.id, cfg.cell.capacity_mbps))
    net.add_flow(QosFlow(cfg.vip.flow_id, cfg.vip.terminal_id, cfg.cell.id, cfg.vip.demand_mbps, cfg.vip.ng_qi))
    net.add_background(cfg.cell.id, cfg.background.flows, [(_ms(t), v) for t, v in cfg.background.profile])
    return net


def run_case_a_mode(cfg: CaseAConfig, kb: KnowledgeBase, mode: TraceMode, seed: int | None = None) -> RunResult:
    seed = cfg.seed if seed is None else seed
    log = EventLog()
    net = build_case_a_network(cfg, seed, log)
    toolbox = Toolbox(net, register_defaults(cfg.tool_latency_ms))
    agents: list[Any] = []
    sla = _agent_memory(kb).get_sla(cfg.vip.terminal_id)

    if mode is TraceMode.RULE_BASED:
        agents.append(RuleBasedQosScript(net, toolbox, flow_id=cfg.vip.flow_id, cell_id=cfg.cell.id,
                                         bound=sla.lower_bound, debounce_ms=_ms(cfg.rule_based.debounce_s)))
    elif mode is TraceMode.HANA:
        bus = _bus(net.clock, log)
        orch_mem = _agent_memory(kb)
        for mg in cfg.meta_goals:
            orch_mem.set_meta_goal(mg.id, {"id": mg.id, "terminal_id": mg.terminal_id,
                                           "intent": "granted >= SLA lower bound"})
        orch_mem.set_context("flows", {cfg.vip.flow_id: {"terminal_id": cfg.vip.terminal_id,
                                                         "cell_id": cfg.cell.id}})
        orch_mem.set_context("cells", {cfg.cell.id: cfg.cell.capacity_mbps})
        o = cfg.orchestrator
        settings = OrchestratorSettings(o.window, o.confidence_threshold, _ms(o.lead_time_s), _ms(o.hysteresis_s),
                                        _ms(o.prediction_horizon_s), o.memory_query_ms)
        public = kb.public_memory()
        agents.append(Orchestrator(ORCHESTRATOR_ID, net, bus, public, orch_mem,
                                   Routes(HEALING_ID, [ASSURANCE_ID]), settings))
        for agent_id, handles in ((ASSURANCE_ID, (ASSURANCE,)), (HEALING_ID, (HEALING,))):
            agents.append(ExecutiveAgent(agent_id, net, toolbox, bus, _agent_memory(kb), public, handles=handles,
                                         review_ms=_ms(cfg.executive.review_s),
                                         verify_timeout_ms=_ms(cfg.executive.verify_timeout_s)))

    net.advance(_ms(cfg.horizon_s))
    for a in agents:
        if isinstance(a, ExecutiveAgent):
            a.close()
    header = {"case": "case-a", "mode": mode.value, "seed": seed,
              "config": cfg.model_dump(mode="json"), "kb": kb.to_doc()}
    trace = trace_from_log(log, cfg.vip.flow_id, cfg.vip.terminal_id, mode)
    return RunResult("case-a", mode.value, seed, log, header, trace=trace, agents=agents)


def run_case_a(cfg: CaseAConfig, kb: KnowledgeBase, seed: int | None = None,
               modes: tuple[TraceMode, ...] = tuple(TraceMode)) -> dict[TraceMode, RunResult]:
    """Unprotected, RuleBased and Hana runs of the congestion scenario on one seed."""
    return {m: run_case_a_mode(cfg, kb, m, seed) for m in modes}


# -- Case B -------------------------------------------------------------


def build_case_b_network(cfg: CaseBConfig, seed: int, log: EventLog, failure: AlertCode) -> tuple[Network, str]:
    net = Network(SimClock(), log, telemetry_interval_ms=cfg.telemetry_interval_ms,
                  dispatch_delay_ms=int(round(cfg.dispatch_min * MS_PER_MIN)), seed=seed, log_telemetry=False)
    for n in cfg.nodes:
        net.add_node(NfNode(n.id, n.kind, n.address, dict(n.params), dict(n.usage)))
    fault = cfg.faults[failure]
    p = fault.payload
    net.schedule_fault(FaultInjection(_ms(cfg.t_inject_s), fault.target, failure,
                                      FaultPayload(dict(p.params), dict(p.usage), p.health, p.pod_running, p.link_up)))
    return net, incident_key(fault.target, failure)


def runbooks_of(cfg: CaseBConfig) -> dict[str, list]:
    return {code.value: [s.template() for s in steps] for code, steps in cfg.runbooks.items()}


def run_case_b_mode(cfg: CaseBConfig, kb: KnowledgeBase, failure: AlertCode, mode: MttrMode,
                    seed: int | None = None) -> RunResult:
    seed = cfg.seed if seed is None else seed
    log = EventLog()
    net, incident = build_case_b_network(cfg, seed, log, failure)
    toolbox = Toolbox(net, register_defaults(cfg.tool_latency_ms))
    runbooks = runbooks_of(cfg)
    agents: list[Any] = []

    if mode is MttrMode.NO_AGENT:
        stages = {c.value: StageTimes(int(round(s.analysis_min * MS_PER_MIN)), int(round(s.resolution_min * MS_PER_MIN)))
                  for c, s in cfg.manual.items()}
        agents.append(HumanOperator(net, toolbox, runbooks, stages, manual=True))
    elif mode is MttrMode.RULE_BASED:
        human = HumanOperator(net, toolbox, runbooks)
        agents += [human, RuleBasedDecisionTree(net, toolbox, runbooks, human,
                                                check_debounce_ms=_ms(cfg.rule_based.check_debounce_s),
                                                human_handoff_ms=_ms(cfg.rule_based.human_handoff_s))]
    else:
        bus = _bus(net.clock, log)
        public = kb.public_memory()
        settings = OrchestratorSettings(memory_query_ms=cfg.orchestrator.memory_query_ms)
        agents.append(Orchestrator(ORCHESTRATOR_ID, net, bus, public, _agent_memory(kb),
                                   Routes(HEALING_ID, [ASSURANCE_ID]), settings))
        for agent_id, handles in ((ASSURANCE_ID, (ASSURANCE,)), (HEALING_ID, (HEALING,))):
            agents.append(ExecutiveAgent(agent_id, net, toolbox, bus, _agent_memory(kb), public, handles=handles,
                                         review_ms=_ms(cfg.executive.review_s),
                                         verify_timeout_ms=_ms(cfg.executive.verify_timeout_s)))

    net.advance(int(round(cfg.horizon_min * MS_PER_MIN)))
    for a in agents:
        if isinstance(a, ExecutiveAgent):
            a.close()
    header = {"case": "case-b", "mode": mode.value, "failure": failure.value, "seed": seed,
              "config": cfg.model_dump(mode="json"), "kb": kb.to_doc()}
    record = mttr_from_log(log, incident, failure, mode)
    return RunResult("case-b", mode.value, seed, log, header, record=record, agents=agents)


def run_case_b(cfg: CaseBConfig, kb: KnowledgeBase, seed: int | None = None,
               modes: tuple[MttrMode, ...] = tuple(MttrMode)) -> list[RunResult]:
    """Each failure under each mode; improvements are relative to NoAgent."""
    out = []
    for failure in (AlertCode.AMF_UNREACHABLE, AlertCode.HTTP_CONN_EXHAUSTION, AlertCode.SESSION_CAPACITY_L1):
        runs = [run_case_b_mode(cfg, kb, failure, m, seed) for m in modes]
        base = next((r.record for r in runs if r.record.mode is MttrMode.NO_AGENT), None)
        for r in runs:
            if base is not None and base.resolved:
                r.record = r.record.with_improvement(base.total_min)
        out.extend(runs)
    return out


# -- preemption trial ---------------------------------------------------


@dataclass
class TrialResult:
    seed: int
    violations: list[str]
    goal_state: GoalState
    event_state: GoalState
    goal_paused: bool
    log: EventLog


def preemption_violations(records: list[LogRecord], goal_ref: str, event_ref: str, agent_id: str) -> list[str]:
    """Replay the log in execution order and flag goal calls overlapping an Active event."""
    goal_owner = f"{agent_id}:{goal_ref}"
    in_flight: set[str] = set()
    event_active = False
    out = []
    for r in records:
        p = r.payload
        if r.kind == "tool_call" and p["owner"] == goal_owner:
            if event_active:
                out.append(f"t={r.t}: goal call {p['call_id']} issued while event Active")
            in_flight.add(p["call_id"])
        elif r.kind == "tool_result" and p["owner"] == goal_owner:
            in_flight.discard(p["call_id"])
        elif r.kind == "activated" and p.get("ref") == event_ref:
            if in_flight:
                out.append(f"t={r.t}: event activated with goal call(s) {sorted(in_flight)} in flight")
            event_active = True
        elif r.kind in ("verified", "failed") and p.get("ref") == event_ref:
            event_active = False
    return out


def preemption_trial(seed: int, kb: KnowledgeBase) -> TrialResult:
    """One generalist agent receives a goal and an event at random times."""
    rng = random.Random(seed)
    log = EventLog()
    net = Network(SimClock(), log, log_telemetry=False, seed=seed)
    net.add_cell(Cell("cell-1", 10.0))
    net.add_flow(QosFlow("vip_flow", "vip_cam", "cell-1", 2.0))
    net.add_node(NfNode("amf-1", NodeKind.AMF, "11.12.13.110"))
    net.add_node(NfNode("smf-1", NodeKind.SMF, "11.12.13.114",
                        {"max_http_connections": 1000, "session_capacity": 20000},
                        {"http_connections_in_use": 80, "active_sessions": 9600}))
    latencies = {name: rng.randint(0, 20) * 500 for name in DEFAULT_LATENCY_MS}
    toolbox = Toolbox(net, register_defaults(latencies))
    failure = rng.choice(list(AlertCode))
    payloads = {
        AlertCode.AMF_UNREACHABLE: ("amf-1", FaultPayload()),
        AlertCode.HTTP_CONN_EXHAUSTION: ("smf-1", FaultPayload({"max_http_connections": 100},
                                                               {"http_connections_in_use": 100})),
        AlertCode.SESSION_CAPACITY_L1: ("smf-1", FaultPayload({"session_capacity": 10000},
                                                              {"active_sessions": 9600})),
    }
    target, payload = payloads[failure]
    # Coarse 500 ms grid so same-instant arrivals happen often.
    t_goal = rng.randint(0, 60) * 500
    t_fault = rng.randint(0, 60) * 500
    net.schedule_fault(FaultInjection(t_fault, target, failure, payload))

    bus = _bus(net.clock, log)
    public = kb.public_memory()
    orch = Orchestrator(ORCHESTRATOR_ID, net, bus, public, _agent_memory(kb), Routes("generalist", ["generalist"]),
                        OrchestratorSettings(memory_query_ms=rng.randint(0, 4) * 200), internal_drive=False)
    agent = ExecutiveAgent("generalist", net, toolbox, bus, _agent_memory(kb), public,
                           review_ms=rng.randint(0, 10) * 500, wait_for_assignment=False)
    sla = _agent_memory(kb).get_sla("vip_cam")
    goal = InternalGoal("goal-0001", Objective.PREEMPTIVE_SERVICE_ASSURANCE, "vip_cam", "vip_flow", "cell-1",
                        Guardrails(sla.lower_bound, t_goal + 30_000), "mg-vip-throughput")
    net.clock.schedule(t_goal, orch.send_goal, goal, "generalist")

    horizon = 4 * 3_600_000
    while net.clock.now < horizon:
        net.advance(min(horizon, net.clock.now + 60_000))
        if len(agent.terminal_entries()) == 2:
            break
    agent.close()
    event_entry = next((e for e in agent.queue if e.is_event), None)
    goal_entry = next(e for e in agent.queue if not e.is_event)
    violations = preemption_violations(log.records, goal_entry.ref_id,
                                       event_entry.ref_id if event_entry else "", agent.id)
    if event_entry is None:
        violations.append("no ReactiveStateEvent reached the agent")
    return TrialResult(seed, violations, goal_entry.state,
                       event_entry.state if event_entry else GoalState.PENDING,
                       goal_entry.resumed > 0 or any(r.kind == "paused" for r in log.records), log)
