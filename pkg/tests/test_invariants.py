from __future__ import annotations

import itertools

import pytest

from govkernel.contracts.catalog import default_registry
from govkernel.contracts.events import sign_event
from govkernel.envelope import Approval, PolicyCosign, Provenance, new_envelope, record_cosign
from govkernel.errors import NotAnAction
from govkernel.evidence import AssetRecord, EvidenceGraph, EvidenceNode, policy_uri
from govkernel.identity import IdentityRegistry, KeyPair, enroll, sign_approval
from govkernel.invariants import audit_log, check_hitl, check_provenance, check_traceability, high_impact

AGENT = "spiffe://enterprise/agents/g5"
MGR = "spiffe://enterprise/human/ir-manager"
OWNER = "spiffe://enterprise/human/db-owner"
RISK = "uri://risk/r1"

ASSETS = {
    "laptop": AssetRecord("laptop", "Laptop", 0.3, False),
    "db": AssetRecord("db", "DB", 0.95, True, ("SystemOwner.DB",)),
    "wiki": AssetRecord("wiki", "Wiki", 0.8, False),
}


@pytest.fixture(scope="module")
def kit():
    contracts = default_registry()
    reg = IdentityRegistry(KeyPair.derive("att", b"att"))
    creds = enroll(reg, AGENT, KeyPair.derive("k-g5", b"g"), "aa" * 32, "b", (0, 10**12))
    keys = {}
    for who, seed in ((MGR, b"m"), (OWNER, b"o")):
        keys[who] = KeyPair.derive(f"k-{seed.decode()}", seed)
        reg.register_identity(who, keys[who].registered())
    return contracts, reg, creds, keys


def graph_with(policies=("IR-Playbook",)):
    g = EvidenceGraph()
    for p in policies:
        g.put_node(EvidenceNode(policy_uri(p), "PolicyBundle", p, 0, "", "policies"))
    g.put_node(EvidenceNode(RISK, "RiskAssessment", "r1", 1, AGENT, "th"))
    return g


def action(kit, *, policies=("IR-Playbook",), evidence=(RISK,), asset="laptop", cosign=(), approvals=(), at=1000):
    contracts, reg, creds, keys = kit
    env = new_envelope("mission-soc", "th", "IR.Responder", "revoke", list(policies),
                       [PolicyCosign(cosign)] if cosign else [], "confidential", False, Provenance("", "", ""))
    env = env.with_decision(list(evidence), 0.9)
    for role, who, t in approvals:
        env = record_cosign(env, sign_approval(keys[who], env.task_id, role, who, t), reg)
    payload = {"action_id": "a1", "incident_ref": "inc-1", "identity_id": "user-7", "asset_id": asset,
               "requested_at": at}
    return sign_event(contracts, reg, payload, "RevokeTokens", env, creds, at)


@pytest.mark.parametrize("has_policy, resolves, has_evidence", list(itertools.product([True, False], repeat=3)))
def test_traceability_table(kit, has_policy, resolves, has_evidence):
    contracts = kit[0]
    g = graph_with(("IR-Playbook",) if resolves else ())
    ev = action(kit, policies=("IR-Playbook",) if has_policy else (), evidence=(RISK,) if has_evidence else ())
    g.record_event(ev, contracts.get("RevokeTokens"))
    v = check_traceability(ev, g, contracts)
    expected = []
    if not has_policy:
        expected.append("MissingPolicyRefs")
    elif not resolves:
        expected.append("UnresolvedPolicyRef")
    if not has_evidence:
        expected += ["MissingDecisionArtifact", "MissingEvidenceRefs"]
    assert list(v.reason_codes) == expected


def test_traceability_unresolved_evidence_and_missing_node(kit):
    contracts = kit[0]
    g = graph_with()
    ev = action(kit, evidence=(RISK, "uri://risk/ghost"))
    assert "MissingActionNode" in check_traceability(ev, g, contracts).reason_codes
    g.record_event(ev, contracts.get("RevokeTokens"))
    assert check_traceability(ev, g, contracts).reason_codes == ("UnresolvedEvidenceRef",)


def test_not_an_action(kit):
    contracts, reg, creds, _ = kit
    env = new_envelope("m", "t", "r", "i", ["P"], [], "internal", False, Provenance("", "", ""))
    ticket = sign_event(contracts, reg, {"ticket_id": "t1", "reason": "x", "subject_ref": "s", "summary": "",
                                          "opened_at": 0}, "OpenTicket", env, creds, 0)
    with pytest.raises(NotAnAction):
        check_traceability(ticket, EvidenceGraph(), contracts)
    with pytest.raises(NotAnAction):
        check_hitl(ticket, ASSETS, contracts)


@pytest.mark.parametrize(
    "asset, threshold, gated, known",
    [("laptop", None, False, True), ("db", None, True, True), ("wiki", None, False, True),
     ("wiki", 0.8, True, True), ("wiki", 0.81, False, True), ("unknown", None, True, False)],
)
def test_high_impact(asset, threshold, gated, known):
    assert high_impact(asset, ASSETS, threshold) == (gated, known)


def test_hitl_non_gated_is_vacuous(kit):
    v = check_hitl(action(kit, asset="laptop"), ASSETS, kit[0], kit[1])
    assert v.passed and "VacuousPass" in v.notes


def test_hitl_gated_without_cosign(kit):
    v = check_hitl(action(kit, asset="db"), ASSETS, kit[0], kit[1])
    assert v.reason_codes == ("MissingCosignConstraint",)
    pending = check_hitl(action(kit, asset="db", cosign=("IR.Manager",)), ASSETS, kit[0], kit[1], executed=False)
    assert pending.passed and "GatedPending" in pending.notes


def test_hitl_unknown_asset_is_gated(kit):
    v = check_hitl(action(kit, asset="mystery"), ASSETS, kit[0], kit[1])
    assert not v.passed and "UnknownAsset" in v.notes


@pytest.mark.parametrize("delta", [-2, -1, 0, 1, 2])
def test_hitl_approval_must_precede_execution(kit, delta):
    at = 1000
    roles = ("IR.Manager", "SystemOwner.DB")
    ev = action(kit, asset="db", cosign=roles, at=at,
                approvals=[("IR.Manager", MGR, at - 10), ("SystemOwner.DB", OWNER, at + delta)])
    v = check_hitl(ev, ASSETS, kit[0], kit[1])
    assert v.passed == (at + delta < at)
    if not v.passed:
        assert v.reason_codes == ("ApprovalAfterExecution",)


def test_hitl_partial_cosign(kit):
    ev = action(kit, asset="db", cosign=("IR.Manager", "SystemOwner.DB"), approvals=[("IR.Manager", MGR, 5)])
    assert check_hitl(ev, ASSETS, kit[0], kit[1]).reason_codes == ("CosignUnsatisfied",)


def test_hitl_forged_approval_rejected_by_verifier(kit):
    ev = action(kit, asset="db", cosign=("IR.Manager",), approvals=[("IR.Manager", MGR, 5)])
    a = ev.envelope.approvals[0]
    forged_env = ev.envelope.__class__(**{**ev.envelope.__dict__,
                                          "approvals": (Approval(a.role, a.approver_id, a.approved_at, bytes(64)),)})
    forged = ev.__class__(**{**ev.__dict__, "envelope": forged_env})
    assert check_hitl(forged, ASSETS, kit[0], kit[1]).reason_codes == ("CosignUnsatisfied",)
    assert check_hitl(forged, ASSETS, kit[0], None).passed


def test_provenance_check(kit):
    contracts, reg = kit[0], kit[1]
    ev = action(kit)
    assert check_provenance(ev, contracts, reg).passed
    bad = ev.__class__(**{**ev.__dict__, "signature": bytes(64)})
    assert check_provenance(bad, contracts, reg).reason_codes == ("BadSignature",)


def test_audit_log_counts(kit):
    contracts, reg = kit[0], kit[1]
    g_items = [action(kit, asset="laptop"), action(kit, asset="db")]
    report = audit_log(g_items, ASSETS, contracts, reg, graph_with_events(contracts, g_items))
    assert report.events_checked == 2
    assert report.counts() == {"traceability": 0, "hitl": 1, "provenance": 0}
    assert report.summary["hitl"] == {"checked": 2, "passed": 1}
    assert report.violations[0].trace_id == g_items[1].trace_id
    assert "violations: 1" in report.to_text()


def graph_with_events(contracts, items):
    g = graph_with()
    for ev in items:
        g.record_event(ev, contracts.get(ev.oc_type))
    return g
