import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autonet.memory import (
    ExperienceRecord,
    FaultCase,
    KnowledgeBaseError,
    NotFound,
    Outcome,
    PrivateMemory,
    PublicMemory,
    SlaMetric,
    SlaRequirement,
    TemplateStep,
    VersionedStore,
    Write,
    instantiate_steps,
    load_knowledge_base,
    parse_knowledge_base,
    resolve_conflict,
)

json_value = st.recursive(
    st.none() | st.booleans() | st.integers(-10**6, 10**6) | st.text(max_size=8)
    | st.floats(allow_nan=False, allow_infinity=False),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=5), inner, max_size=4),
    max_leaves=12,
)
keys = st.text(alphabet="abcxyz/", min_size=1, max_size=6)


@settings(max_examples=300, deadline=None)
@given(st.dictionaries(keys, json_value, max_size=8), st.dictionaries(keys, json_value, max_size=8))
def test_rollback_restores_image_byte_for_byte(before, after):
    store = VersionedStore()
    for k, v in before.items():
        store.put(k, v)
    snap = store.snapshot(timestamp=5)
    for k, v in after.items():
        store.put(k, v)
    store.delete(next(iter(before), "none"))
    store.rollback(snap.version)
    assert store.image() == snap.contents


def test_snapshot_versions_strictly_increase():
    store = VersionedStore()
    a = store.snapshot()
    b = store.snapshot()
    store.put("k", 1)
    c = store.snapshot()
    assert a.version < b.version < c.version
    store.rollback(a.version)
    assert store.version > c.version


def test_rollback_unknown_version():
    with pytest.raises(NotFound):
        VersionedStore().rollback(42)


def test_put_rejects_non_json():
    with pytest.raises(TypeError):
        VersionedStore().put("k", object())


def test_get_returns_a_copy():
    store = VersionedStore()
    store.put("k", {"a": [1]})
    store.get("k")["a"].append(2)
    assert store.get("k") == {"a": [1]}


writes = st.builds(Write, key=st.just("k"), value=json_value, base_version=st.integers(0, 5),
                   t=st.integers(0, 5), writer=st.sampled_from(["a1", "a2", "a3"]))


@settings(max_examples=500, deadline=None)
@given(writes, writes)
def test_conflict_resolution_commutes(a, b):
    assert resolve_conflict(a, b) == resolve_conflict(b, a)


@settings(max_examples=200, deadline=None)
@given(st.lists(writes, min_size=1, max_size=6), st.randoms())
def test_concurrent_batch_order_does_not_matter(batch, rnd):
    s1, s2 = VersionedStore(), VersionedStore()
    s1.apply_concurrent(batch)
    shuffled = list(batch)
    rnd.shuffle(shuffled)
    s2.apply_concurrent(shuffled)
    assert s1.image() == s2.image()


def test_conflict_prefers_higher_base_then_later_time():
    old = Write("k", 1, 1, 9, "z")
    new = Write("k", 2, 2, 0, "a")
    assert resolve_conflict(old, new) is new
    late = Write("k", 3, 2, 5, "a")
    assert resolve_conflict(new, late) is late


# -- knowledge base -----------------------------------------------------


def case(cid, feats, steps=(TemplateStep("restart_node", {"node": "$node"}),)):
    return FaultCase(cid, frozenset(feats), "cause", tuple(steps))


def test_query_scores_by_symptom_fraction():
    mem = PublicMemory()
    mem.add_fault_case(case("full", {"A", "B"}))
    mem.add_fault_case(case("half", {"A", "C"}))
    mem.add_fault_case(case("none", {"D"}))
    ranked = [(c.id, s) for c, s in mem.query_fault_cases({"A", "B"})]
    assert ranked == [("full", 1.0), ("half", 0.5)]


def test_query_ties_break_on_case_id():
    mem = PublicMemory()
    mem.add_fault_case(case("b", {"X"}))
    mem.add_fault_case(case("a", {"X"}))
    assert [c.id for c, _ in mem.query_fault_cases({"X"})] == ["a", "b"]


def test_query_with_no_features_rejected():
    with pytest.raises(ValueError):
        PublicMemory().query_fault_cases([])


def test_empty_symptoms_rejected():
    with pytest.raises(KnowledgeBaseError):
        case("x", set())


def test_missing_case_and_template():
    mem = PublicMemory()
    with pytest.raises(NotFound):
        mem.get_case("nope")
    with pytest.raises(NotFound):
        mem.template("nope")


def test_slot_resolution_including_delta():
    steps = [TemplateStep("scale_session_capacity", {"node": "$node", "delta": "$delta.session_capacity"}),
             TemplateStep("update_node_config", {"value": "$recommended.max_http_connections", "param": "p"})]
    bindings = {"node": "smf-1", "param": {"session_capacity": 10000},
                "recommended": {"session_capacity": 20000, "max_http_connections": 1000}}
    assert instantiate_steps(steps, bindings) == [
        ("scale_session_capacity", {"node": "smf-1", "delta": 10000}),
        ("update_node_config", {"value": 1000, "param": "p"}),
    ]


def test_unresolved_slot_is_an_error():
    with pytest.raises(KnowledgeBaseError):
        instantiate_steps([TemplateStep("t", {"x": "$missing"})], {})


def test_kb_unknown_tool_rejected():
    doc = {"fault_cases": [case("c", {"A"}, [TemplateStep("rm_rf", {})]).to_doc()]}
    with pytest.raises(KnowledgeBaseError, match="rm_rf"):
        parse_knowledge_base(doc, tool_names={"restart_node"})


def test_kb_duplicate_ids_and_unknown_sections():
    doc = {"fault_cases": [case("c", {"A"}).to_doc(), case("c", {"B"}).to_doc()]}
    with pytest.raises(KnowledgeBaseError, match="duplicate"):
        parse_knowledge_base(doc)
    with pytest.raises(KnowledgeBaseError, match="unknown"):
        parse_knowledge_base({"extras": 1})


def test_kb_missing_file_names_path(tmp_path):
    p = tmp_path / "kb.yaml"
    with pytest.raises(FileNotFoundError, match="kb.yaml"):
        load_knowledge_base(p)


def test_kb_roundtrip_through_doc(tmp_path):
    import yaml

    kb = parse_knowledge_base({"fault_cases": [case("c", {"A"}).to_doc()],
                               "sla": [{"terminal_id": "t", "lower_bound": 2.0, "priority": 10}]})
    p = tmp_path / "kb.yaml"
    p.write_text(yaml.safe_dump(kb.to_doc()))
    again = load_knowledge_base(p)
    assert again.to_doc() == kb.to_doc()


# -- private memory -----------------------------------------------------


def test_sla_lookup():
    mem = PrivateMemory()
    mem.set_sla(SlaRequirement("cam", SlaMetric.UPLINK_THROUGHPUT, 2.0, 10))
    assert mem.get_sla("cam").lower_bound == 2.0
    assert mem.sla_terminals() == ["cam"]
    with pytest.raises(NotFound):
        mem.get_sla("other")


def test_sla_bound_must_be_positive():
    with pytest.raises(KnowledgeBaseError):
        SlaRequirement("cam", SlaMetric.UPLINK_THROUGHPUT, 0.0)


def test_experience_is_appended_in_order():
    mem = PrivateMemory()
    r1 = ExperienceRecord(1, "a", "g1", ("c1",), Outcome.RESOLVED, 10)
    r2 = ExperienceRecord(2, "a", "g2", (), Outcome.FAILED, 3)
    mem.record_experience(r1)
    mem.record_experience(r2)
    assert mem.experience() == [r1, r2]
