from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from govkernel.envelope import Approval
from govkernel.errors import DuplicateNode, UnknownNode
from govkernel.evidence import (
    AssetRecord,
    EvidenceGraph,
    EvidenceNode,
    kind_for,
    load_assets,
    policy_uri,
)


def node(nid, kind="RiskAssessment", t=0, thread="th", policies=()):
    return EvidenceNode(nid, kind, f"payload:{nid}", t, "spiffe://p", thread, tuple(policies))


def small_graph():
    g = EvidenceGraph()
    g.put_node(node(policy_uri("JML-Standard"), "PolicyBundle"))
    g.put_node(node(policy_uri("SoD"), "PolicyBundle"))
    g.put_node(node("uri://alerts/1", "Other(RawAlert)", t=1))
    g.put_node(node("uri://cluster/1", "AlertCluster", t=2))
    g.put_node(node("uri://risk/1", "RiskAssessment", t=3))
    g.put_node(node("uri://action/1", "Other(RevokeTokens)", t=4, policies=["SoD", "Missing"]))
    g.link("uri://cluster/1", "uri://alerts/1", "derived_from")
    g.link("uri://risk/1", "uri://cluster/1", "derived_from")
    g.link("uri://action/1", "uri://risk/1", "justified_by")
    g.link("uri://action/1", policy_uri("JML-Standard"), "governed_by")
    g.link("uri://action/1", policy_uri("SoD"), "governed_by")
    return g


def test_kind_for():
    assert kind_for("SCIMMutation") == "SCIMMutation"
    assert kind_for("RevokeTokens") == "Other(RevokeTokens)"


def test_put_and_link_errors():
    g = small_graph()
    with pytest.raises(DuplicateNode):
        g.put_node(node("uri://risk/1"))
    with pytest.raises(UnknownNode):
        g.link("uri://risk/1", "uri://nope", "derived_from")
    with pytest.raises(ValueError):
        g.link("uri://risk/1", "uri://alerts/1", "likes")
    with pytest.raises(UnknownNode):
        g.node("uri://nope")
    n = len(g.edges())
    g.link("uri://risk/1", "uri://cluster/1", "derived_from")
    assert len(g.edges()) == n


def test_trace_action():
    tr = small_graph().trace_action("uri://action/1")
    assert tr.policies == {policy_uri("JML-Standard"), policy_uri("SoD")}
    assert tr.policy_sources == {policy_uri("JML-Standard"): "edge", policy_uri("SoD"): "both"}
    assert tr.evidence == {"uri://risk/1", "uri://cluster/1", "uri://alerts/1"}


def test_trace_depth_limit():
    g = small_graph()
    assert g.trace_action("uri://action/1", depth=1).evidence == {"uri://risk/1"}
    assert g.trace_action("uri://action/1", depth=0).evidence == frozenset()


def test_query_thread_sorted_by_time_then_id():
    g = EvidenceGraph()
    for nid, t in [("b", 5), ("a", 5), ("c", 1)]:
        g.put_node(node(nid, t=t, thread="T"))
    g.put_node(node("z", t=0, thread="other"))
    assert g.query_thread("T") == ["c", "a", "b"]
    assert g.query_thread("missing") == []


def test_export_round_trip_and_hash():
    g = small_graph()
    g.record_approval("uri://action/1", "task-1", Approval("IR.Manager", "u1", 9, b"\xaa"), "th")
    back = EvidenceGraph.import_graph(g.export_graph())
    assert back.export_json() == g.export_json()
    assert back.content_hash() == g.content_hash()
    assert back.dangling_edges() == []
    assert [e.dst for e in back.out_edges("uri://action/1", "approved_by")] == ["uri://approvals/task-1/IR.Manager/u1"]


def test_assets():
    assets = load_assets([{"asset_id": "db", "name": "DB", "criticality": 0.9, "crown_jewel": True,
                           "owner_roles": ["SystemOwner.DB"]}])
    assert assets["db"].crown_jewel and assets["db"].owner_roles == ("SystemOwner.DB",)
    with pytest.raises(ValueError):
        AssetRecord("x", "x", 1.5, False)
    assert AssetRecord.from_dict(assets["db"].to_dict()) == assets["db"]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=30), st.integers(0, 9))
def test_trace_is_monotone_under_added_edges(pairs, start):
    # adding edges never removes evidence; result equals a reachability oracle
    g = EvidenceGraph()
    for i in range(10):
        g.put_node(node(f"n{i}", t=i))
    prev = frozenset()
    adj: dict[int, set[int]] = {}
    for a, b in pairs:
        g.link(f"n{a}", f"n{b}", "derived_from")
        adj.setdefault(a, set()).add(b)
        ev = g.trace_action(f"n{start}", depth=20).evidence
        assert prev <= ev
        seen, stack = set(), [start]
        while stack:
            for nxt in adj.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        assert ev == {f"n{i}" for i in seen} - {f"n{start}"}
        prev = ev
