import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autonet.protocol import (
    EVENT_PRIORITY,
    A2AMessage,
    Bus,
    DecodeError,
    Diagnosis,
    GoalState,
    GoalStatus,
    Guardrails,
    InternalGoal,
    NodeState,
    Objective,
    ReactiveStateEvent,
    RemedyStep,
    RoutingError,
    ToolCall,
    ToolResult,
    decode,
    encode,
)
from autonet.simnet.model import Alert, AlertCode, Severity

ident = st.text(alphabet="abcdefghij-0123456789", min_size=1, max_size=10)
text = st.text(max_size=12)
finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
scalar = st.booleans() | st.integers(-10**9, 10**9) | finite | text
scalar_dict = st.dictionaries(ident, scalar, max_size=4)
int_dict = st.dictionaries(ident, st.integers(0, 10**6), max_size=3)

alerts = st.builds(Alert, t=st.integers(0, 10**7), source_node=ident, code=st.sampled_from(list(AlertCode)),
                   severity=st.sampled_from(list(Severity)), details=st.dictionaries(ident, text, max_size=3))
node_states = st.builds(NodeState, node_id=ident, kind=text, address=text, health=text, params=int_dict, usage=int_dict)
steps = st.builds(RemedyStep, tool=ident, args=scalar_dict)
diagnoses = st.one_of(
    st.builds(Diagnosis, matched_case_id=st.none(), root_cause=text, confidence=st.just(0.0),
              recommended_remedy=st.just(())),
    st.builds(Diagnosis, matched_case_id=ident, root_cause=text,
              confidence=st.floats(0.01, 1.0), recommended_remedy=st.tuples(steps) | st.tuples(steps, steps)),
)
goals = st.builds(InternalGoal, goal_id=ident, objective=st.just(Objective.PREEMPTIVE_SERVICE_ASSURANCE),
                  terminal_id=ident, flow_id=ident, cell_id=ident,
                  constraints=st.builds(Guardrails, max_reserve_mbps=finite, deadline_ms=st.integers(0, 10**9)),
                  originating_meta_goal_id=ident)
events = st.builds(ReactiveStateEvent, event_id=ident, alert=alerts,
                   system_context=st.lists(node_states, max_size=2).map(tuple), diagnosis=diagnoses)
statuses = st.builds(GoalStatus, ref_id=ident, state=st.sampled_from(list(GoalState)), detail=text)


@st.composite
def a2a(draw):
    body = draw(st.one_of(goals, events, statuses))
    if isinstance(body, ReactiveStateEvent):
        prio = draw(st.integers(EVENT_PRIORITY, 200))
    elif isinstance(body, InternalGoal):
        prio = draw(st.integers(0, EVENT_PRIORITY - 1))
    else:
        prio = draw(st.integers(0, 200))
    return A2AMessage(draw(ident), draw(st.integers(0, 10**9)), draw(ident), draw(ident), prio, body)


messages = st.one_of(
    a2a(),
    st.builds(ToolCall, call_id=ident, tool_name=ident, args=scalar_dict),
    st.builds(ToolResult, call_id=ident, success=st.booleans(), outputs=scalar_dict,
              t_completed=st.integers(0, 10**9), reason=text),
)


@settings(max_examples=1000, deadline=None)
@given(messages)
def test_roundtrip_every_variant(msg):
    wire = encode(msg)
    assert decode(wire) == msg
    assert encode(decode(wire)) == wire


@settings(max_examples=200, deadline=None)
@given(messages)
def test_encoding_is_one_canonical_line(msg):
    wire = encode(msg)
    assert b"\n" not in wire
    obj = json.loads(wire)
    assert wire == json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def test_decode_reports_field_path():
    msg = A2AMessage("m1", 0, "o", "a", 5, GoalStatus("g", GoalState.DONE))
    obj = json.loads(encode(msg))
    obj["body"]["state"] = "Sleeping"
    with pytest.raises(DecodeError) as exc:
        decode(json.dumps(obj))
    assert exc.value.field == "body.state"

    obj = json.loads(encode(msg))
    del obj["priority"]
    with pytest.raises(DecodeError) as exc:
        decode(json.dumps(obj))
    assert exc.value.field == "priority"


def test_decode_rejects_garbage_and_unknown_type():
    with pytest.raises(DecodeError):
        decode(b"{not json")
    with pytest.raises(DecodeError) as exc:
        decode('{"type":"Nope"}')
    assert exc.value.field == "type"
    with pytest.raises(DecodeError):
        decode(b"\xff")


def test_integer_fields_reject_bools():
    obj = json.loads(encode(ToolResult("c", True, {}, 5)))
    obj["t_completed"] = True
    with pytest.raises(DecodeError) as exc:
        decode(json.dumps(obj))
    assert exc.value.field == "t_completed"


def test_priority_bands_are_enforced():
    goal = InternalGoal("g", Objective.PREEMPTIVE_SERVICE_ASSURANCE, "t", "f", "c", Guardrails(2.0, 1), "mg")
    with pytest.raises(ValueError):
        A2AMessage("m", 0, "o", "a", EVENT_PRIORITY, goal)
    ev = ReactiveStateEvent("e", Alert(0, "n", AlertCode.AMF_UNREACHABLE, Severity.CRITICAL), (),
                            Diagnosis(None, "unknown", 0.0))
    with pytest.raises(ValueError):
        A2AMessage("m", 0, "o", "a", EVENT_PRIORITY - 1, ev)


def test_diagnosis_confidence_consistency():
    with pytest.raises(ValueError):
        Diagnosis("case", "x", 0.0)
    with pytest.raises(ValueError):
        Diagnosis(None, "x", 0.5)
    with pytest.raises(ValueError):
        Diagnosis("case", "x", 1.5)


def status(mid, t, prio):
    return A2AMessage(mid, t, "o", "a", prio, GoalStatus(mid, GoalState.DONE))


def test_bus_orders_by_priority_then_time_then_id():
    bus = Bus()
    bus.register("a")
    for m in (status("m3", 5, 1), status("m2", 5, 1), status("m1", 9, 1), status("hi", 10, 50)):
        bus.send(m)
    assert [m.msg_id for m in bus.poll("a")] == ["hi", "m2", "m3", "m1"]
    assert bus.poll("a") == []


def test_bus_unknown_recipient_and_duplicate_id():
    bus = Bus()
    bus.register("a")
    with pytest.raises(RoutingError):
        bus.send(A2AMessage("x", 0, "o", "ghost", 1, GoalStatus("x", GoalState.DONE)))
    bus.send(status("m", 0, 1))
    with pytest.raises(ValueError):
        bus.send(status("m", 0, 1))


def test_bus_scheduler_delivers_same_instant_messages_in_order():
    queued = []
    bus = Bus(scheduler=queued.append)
    seen = []
    bus.register("a", seen.append)
    bus.send(status("low", 0, 1))
    bus.send(status("high", 0, 90))
    for fn in queued:
        fn()
    assert [m.msg_id for m in seen] == ["high", "low"]
