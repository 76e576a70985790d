from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from govkernel.canonical import canonical_json, digest, sha256_hex
from govkernel.envelope import (
    Approval,
    Classification,
    Custom,
    DecisionBasis,
    Envelope,
    HitlOnGapDetected,
    NoEmergencyAdmin,
    PolicyCosign,
    PolicyRef,
    Provenance,
    ReadOnly,
    Timebox,
    approved_roles,
    child_envelope,
    constraint_from_wire,
    constraint_to_wire,
    cosign_satisfied,
    new_envelope,
    record_cosign,
    validate_envelope,
)
from govkernel.errors import DuplicateApproval, EmptyIdentifier, NoCosignConstraint

PROV = Provenance("spiffe://enterprise/orch/icam", "kid-orch-icam-01",
                  "uri://slsa/attestations/orch-icam@sha256:abc")
ROLES = ("IR.Manager", "SystemOwner.ServiceX")


def ids():
    n = itertools.count()
    return lambda: f"{next(n):032x}"


def joiner(constraints=(), **kw):
    return new_envelope(
        "mission-joiners-q1", "thread-emp-78421", "ICAM.Orchestrator", "provision joiner",
        ["JML-Standard@3", "SoD-Matrix"], constraints, "internal", False, PROV,
        id_source=kw.get("id_source", ids()),
    )


def test_new_envelope_fields():
    env = joiner([PolicyCosign(ROLES), Timebox(300_000)])
    assert env.mission_id == "mission-joiners-q1"
    assert env.thread_id == "thread-emp-78421"
    assert env.task_id == "task-" + "0" * 32
    assert env.policy_refs == (PolicyRef("JML-Standard", "3"), PolicyRef("SoD-Matrix"))
    assert env.classification is Classification.INTERNAL
    assert env.approvals == ()
    assert env.decision_basis == DecisionBasis()
    assert env.timebox_ms() == 300_000
    assert validate_envelope(env).ok


def test_task_ids_are_random_hex_by_default():
    a = new_envelope("m", "t", "r", "i", [], [], "internal", False, PROV)
    b = new_envelope("m", "t", "r", "i", [], [], "internal", False, PROV)
    assert a.task_id != b.task_id
    assert len(a.task_id) == len("task-") + 32
    int(a.task_id[5:], 16)


@pytest.mark.parametrize("field", ["mission_id", "thread_id", "role", "intent"])
def test_new_envelope_rejects_empty_identifiers(field):
    args = {"mission_id": "m", "thread_id": "t", "role": "r", "intent": "i"}
    args[field] = "  "
    with pytest.raises(EmptyIdentifier):
        new_envelope(args["mission_id"], args["thread_id"], args["role"], args["intent"],
                     [], [], "internal", False, PROV)


def test_new_envelope_rejects_empty_policy_id():
    with pytest.raises(EmptyIdentifier):
        new_envelope("m", "t", "r", "i", ["@2"], [], "internal", False, PROV)


def test_child_inherits_thread_and_hold_but_not_approvals():
    src = ids()
    parent = new_envelope("m", "thread-x", "r", "i", ["P"], [PolicyCosign(["A"])],
                          "confidential", True, PROV, id_source=src)
    parent = record_cosign(parent, Approval("A", "alice", 5))
    parent = parent.with_decision(["uri://x/1"], 0.7)
    child = child_envelope(parent, "Sub", "sub work", extra_constraints=[ReadOnly(), PolicyCosign(["A"])],
                           id_source=src)
    assert child.thread_id == "thread-x" and child.mission_id == "m"
    assert child.task_id != parent.task_id
    assert child.legal_hold is True
    assert child.approvals == () and child.decision_basis == DecisionBasis()
    # duplicate constraint is merged, new one appended
    assert child.constraints == (PolicyCosign(["A"]), ReadOnly())


def test_record_cosign_requires_constraint_and_rejects_duplicates():
    env = joiner()
    with pytest.raises(NoCosignConstraint):
        record_cosign(env, Approval("IR.Manager", "u1", 1))
    env = joiner([PolicyCosign(ROLES)])
    env = record_cosign(env, Approval("IR.Manager", "u1", 1))
    with pytest.raises(DuplicateApproval):
        record_cosign(env, Approval("IR.Manager", "u1", 2))
    # same role, different approver is fine
    record_cosign(env, Approval("IR.Manager", "u2", 2))


def test_cosign_example():
    env = joiner([PolicyCosign(ROLES)])
    assert not cosign_satisfied(env)
    env = record_cosign(env, Approval("IR.Manager", "u1", 1))
    assert not cosign_satisfied(env)
    env = record_cosign(env, Approval("SystemOwner.ServiceX", "u2", 2))
    assert cosign_satisfied(env)


def test_no_cosign_constraint_is_satisfied():
    assert cosign_satisfied(joiner())


class _Reject:
    def __init__(self, bad):
        self.bad = bad

    def verify_approval(self, a, task_id):
        return a.approver_id not in self.bad


def test_verifier_filters_invalid_approvals():
    env = joiner([PolicyCosign(ROLES)])
    env = record_cosign(env, Approval("IR.Manager", "u1", 1))
    env = record_cosign(env, Approval("SystemOwner.ServiceX", "u2", 2))
    assert approved_roles(env, _Reject({"u2"})) == {"IR.Manager"}
    assert not cosign_satisfied(env, _Reject({"u2"}))


ALL_ROLES = ["A", "B", "C", "D"]


@pytest.mark.parametrize("required", [s for n in range(1, 5) for s in itertools.combinations(ALL_ROLES, n)])
def test_cosign_is_set_inclusion_exhaustive(required):
    # oracle: required ⊆ approved, over every approved subset
    for n in range(0, 5):
        for approved in itertools.combinations(ALL_ROLES, n):
            env = joiner([PolicyCosign(required)])
            for i, r in enumerate(approved):
                env = record_cosign(env, Approval(r, f"u{i}", i))
            assert cosign_satisfied(env) == set(required).issubset(approved)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(ALL_ROLES), max_size=8), st.sets(st.sampled_from(ALL_ROLES), min_size=1))
def test_cosign_monotone(order, required):
    env = joiner([PolicyCosign(sorted(required))])
    prev = cosign_satisfied(env)
    for i, r in enumerate(order):
        env = record_cosign(env, Approval(r, f"u{i}", i))
        now = cosign_satisfied(env)
        assert now or not prev
        prev = now


def test_multiple_cosign_constraints_all_required():
    env = joiner([PolicyCosign(["A"]), PolicyCosign(["B"])])
    env = record_cosign(env, Approval("A", "u", 1))
    assert not cosign_satisfied(env)
    env = record_cosign(env, Approval("B", "u", 1))
    assert cosign_satisfied(env)


@pytest.mark.parametrize(
    "raw, parsed",
    [
        ("read_only", ReadOnly()),
        ("HITL_ON_GAP_DETECTED", HitlOnGapDetected()),
        ("timebox_5m", Timebox(300_000)),
        ("timebox_250ms", Timebox(250)),
        ("timebox_2h", Timebox(7_200_000)),
        ({"timebox": 42}, Timebox(42)),
        ({"policy_cosign": ["X", "Y"]}, PolicyCosign(["X", "Y"])),
        ({"no_emergency_admin": True}, NoEmergencyAdmin()),
        ("geo_fence", Custom("geo_fence")),
        ({"geo_fence": {"region": "eu"}}, Custom.make("geo_fence", {"region": "eu"})),
        ({"limit": 3}, Custom.make("limit", {"value": 3})),
    ],
)
def test_constraint_wire_parsing(raw, parsed):
    assert constraint_from_wire(raw) == parsed
    assert constraint_from_wire(constraint_to_wire(parsed)) == parsed


def _findings(env):
    return validate_envelope(env).codes()


def test_validate_envelope_reports_every_defect():
    env = joiner([PolicyCosign([]), Timebox(0), ReadOnly(), ReadOnly()])
    env = Envelope(**{**env.__dict__, "task_id": "", "policy_refs": (PolicyRef(""),),
                      "decision_basis": DecisionBasis(("not a uri",), 1.5),
                      "provenance": Provenance("", "k", ""), "classification": "secret",
                      "legal_hold": "yes"})
    codes = _findings(env)
    for c in ["empty_identifier", "empty_policy_id", "empty_cosign_roles", "nonpositive_timebox",
              "duplicate_constraint", "confidence_out_of_range", "bad_evidence_ref",
              "empty_provenance_field", "bad_classification", "bad_legal_hold"]:
        assert c in codes
    assert codes.count("empty_provenance_field") == 2


@pytest.mark.parametrize("conf, ok", [(0.0, True), (1.0, True), (-0.01, False), (1.01, False), (True, False)])
def test_confidence_bounds(conf, ok):
    assert validate_envelope(joiner().with_decision(confidence=conf)).ok == ok


def test_envelope_round_trip():
    env = joiner([PolicyCosign(ROLES), Timebox(60_000), Custom.make("geo", {"r": "eu"})])
    env = record_cosign(env, Approval("IR.Manager", "u1", 7, b"\x01\x02"))
    env = env.with_decision(["uri://evidence/1"], 0.5, "uri://why")
    wire = json.loads(canonical_json(env.to_dict()))
    assert Envelope.from_dict(wire) == env


def test_without_constraint():
    env = joiner([ReadOnly(), Timebox(5)])
    assert env.without_constraint(ReadOnly).constraints == (Timebox(5),)
    assert not env.without_constraint(ReadOnly).has(ReadOnly)


def test_timebox_takes_tightest():
    assert joiner([Timebox(500), Timebox(200)]).timebox_ms() == 200
    assert joiner().timebox_ms() is None


@given(st.dictionaries(st.text(max_size=5), st.one_of(st.integers(), st.text(max_size=5)), max_size=5))
def test_canonical_json_key_order_independent(d):
    rev = dict(reversed(list(d.items())))
    assert canonical_json(d) == canonical_json(rev)
    assert digest(d) == sha256_hex(canonical_json(d))


def test_canonical_json_is_compact_and_sorted():
    assert canonical_json({"b": 1, "a": [1, "é"]}) == '{"a":[1,"é"],"b":1}'
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})
