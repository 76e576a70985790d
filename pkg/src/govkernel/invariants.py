"""Machine checks for traceability, human approval gating and provenance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from govkernel.canonical import canonical_json
from govkernel.contracts.events import SignedEvent, verify_event
from govkernel.contracts.schema import ContractRegistry
from govkernel.envelope import ApprovalVerifier, Envelope, cosign_satisfied
from govkernel.errors import NotAnAction
from govkernel.evidence import DECISION_ARTIFACTS, AssetRecord, EvidenceGraph, graph_from_log, policy_uri
from govkernel.identity import IdentityRegistry
from govkernel.reports import Verdict

INVARIANTS = ("traceability", "hitl", "provenance")


def _require_action(ev: SignedEvent, contracts: ContractRegistry):
    schema = contracts.get(ev.oc_type, ev.version)
    if not schema.state_changing:
        raise NotAnAction(f"{ev.oc_type} is not state-changing")
    return schema


def check_traceability(
    action: SignedEvent,
    graph: EvidenceGraph,
    contracts: ContractRegistry,
    decision_kinds: frozenset[str] = DECISION_ARTIFACTS,
) -> Verdict:
    schema = _require_action(action, contracts)
    env = action.envelope
    reasons: list[str] = []
    details: list[tuple[str, str]] = []
    tid = action.trace_id

    if not env.policy_refs:
        reasons.append("MissingPolicyRefs")
    for p in env.policy_refs:
        uri = policy_uri(p.to_wire())
        if not graph.has(uri) or graph.node(uri).kind != "PolicyBundle":
            reasons.append("UnresolvedPolicyRef")
            details.append((tid, f"policy {p.to_wire()} has no PolicyBundle node"))

    node_id = action.node_id(schema)
    if not graph.has(node_id):
        reasons.append("MissingActionNode")
        details.append((tid, f"{node_id} not in graph"))
    else:
        trace = graph.trace_action(node_id)
        if not any(graph.node(n).kind in decision_kinds for n in trace.evidence):
            reasons.append("MissingDecisionArtifact")
        for uri, how in sorted(trace.policy_sources.items()):
            details.append((tid, f"policy {uri} via {how}"))

    refs = env.decision_basis.evidence_refs
    if not refs:
        reasons.append("MissingEvidenceRefs")
    for r in refs:
        if not graph.has(r):
            reasons.append("UnresolvedEvidenceRef")
            details.append((tid, f"evidence {r} not in graph"))
    return Verdict.of(reasons, details if reasons else ())


def target_asset(action: SignedEvent, contracts: ContractRegistry) -> str | None:
    schema = contracts.get(action.oc_type, action.version)
    if schema.asset_field is None:
        return None
    v = action.payload.get(schema.asset_field)
    return v if isinstance(v, str) and v else None


def high_impact(
    asset_id: str, assets: Mapping[str, AssetRecord], criticality_threshold: float | None = None
) -> tuple[bool, bool]:
    """(gated, known). Assets missing from the inventory count as crown jewels."""
    rec = assets.get(asset_id)
    if rec is None:
        return True, False
    if rec.crown_jewel:
        return True, True
    if criticality_threshold is not None and rec.criticality >= criticality_threshold:
        return True, True
    return False, True


def check_hitl(
    action: SignedEvent,
    assets: Mapping[str, AssetRecord],
    contracts: ContractRegistry,
    verifier: ApprovalVerifier | None = None,
    *,
    release: SignedEvent | None = None,
    executed: bool = True,
    criticality_threshold: float | None = None,
) -> Verdict:
    """Gate check for one state-changing action.

    A gated proposal is executed through an orchestrator release; in that case
    the release's envelope carries the approvals and its emission time is the
    execution boundary. A proposal that never executed passes as GatedPending.
    """
    _require_action(action, contracts)
    asset = target_asset(action, contracts)
    if asset is None:
        return Verdict.of(notes=["VacuousPass"])
    gated, known = high_impact(asset, assets, criticality_threshold)
    notes = [] if known else ["UnknownAsset"]
    if not gated:
        return Verdict.of(notes=["VacuousPass", *notes])

    env: Envelope = action.envelope
    boundary = action.emitted_at
    if release is not None:
        env, boundary = release.envelope, release.emitted_at
        notes.append("Released")
    elif not executed and not cosign_satisfied(env, verifier):
        return Verdict.of(notes=["GatedPending", *notes])

    reasons: list[str] = []
    details: list[tuple[str, str]] = []
    if not env.cosign_constraints():
        reasons.append("MissingCosignConstraint")
    elif not cosign_satisfied(env, verifier):
        reasons.append("CosignUnsatisfied")
    for a in env.approvals:
        if not a.approved_at < boundary:
            reasons.append("ApprovalAfterExecution")
            details.append((action.trace_id, f"{a.role} approved at {a.approved_at} >= {boundary}"))
    return Verdict.of(reasons, details, notes)


def check_provenance(
    ev: SignedEvent, contracts: ContractRegistry, identities: IdentityRegistry
) -> Verdict:
    return verify_event(ev, contracts, identities)


@dataclass(frozen=True)
class Violation:
    trace_id: str
    invariant: str
    verdict: Verdict

    def to_dict(self) -> dict:
        return {"trace_id": self.trace_id, "invariant": self.invariant, "verdict": self.verdict.to_dict()}


@dataclass
class AuditReport:
    events_checked: int = 0
    violations: list[Violation] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def counts(self) -> dict[str, int]:
        out = {k: 0 for k in INVARIANTS}
        for v in self.violations:
            out[v.invariant] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "events_checked": self.events_checked,
            "violations": [v.to_dict() for v in self.violations],
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def to_text(self) -> str:
        lines = [f"events checked: {self.events_checked}"]
        for inv in INVARIANTS:
            s = self.summary.get(inv, {})
            lines.append(f"{inv:<13} checked {s.get('checked', 0):>6}  passed {s.get('passed', 0):>6}")
        notes = self.summary.get("notes", {})
        if notes:
            lines.append("notes: " + ", ".join(f"{k}={v}" for k, v in sorted(notes.items())))
        lines.append(f"violations: {len(self.violations)}")
        for v in self.violations:
            lines.append(f"  {v.trace_id} {v.invariant}: {','.join(v.verdict.reason_codes)}")
        return "\n".join(lines)


def audit_log(
    items: Iterable,
    assets: Mapping[str, AssetRecord],
    contracts: ContractRegistry,
    identities: IdentityRegistry,
    graph: EvidenceGraph | None = None,
    *,
    criticality_threshold: float | None = None,
) -> AuditReport:
    """Check every event for provenance and every action for all three invariants."""
    items = list(items)
    events = [x for x in items if isinstance(x, SignedEvent)]
    if graph is None:
        graph = graph_from_log(items, contracts)
    releases: dict[str, SignedEvent] = {}
    for ev in events:
        if ev.oc_type == "ActionRelease":
            releases.setdefault(ev.payload.get("released_trace_id", ""), ev)
    executed = {
        x["trace_id"]
        for x in items
        if isinstance(x, dict) and x.get("record") == "delivery" and x.get("status") == "in_flight"
    }

    report = AuditReport(events_checked=len(events))
    checked = {k: 0 for k in INVARIANTS}
    passed = {k: 0 for k in INVARIANTS}
    notes: dict[str, int] = {}

    def note(inv: str, v: Verdict, tid: str) -> None:
        checked[inv] += 1
        if v.passed:
            passed[inv] += 1
        else:
            report.violations.append(Violation(tid, inv, v))
        for n in v.notes:
            notes[n] = notes.get(n, 0) + 1

    for ev in events:
        pv = check_provenance(ev, contracts, identities)
        note("provenance", pv, ev.trace_id)
        try:
            schema = contracts.get(ev.oc_type, ev.version)
        except LookupError:
            continue
        if not schema.state_changing:
            continue
        note("traceability", check_traceability(ev, graph, contracts), ev.trace_id)
        hv = check_hitl(
            ev,
            assets,
            contracts,
            identities,
            release=releases.get(ev.trace_id),
            executed=ev.trace_id in executed,
            criticality_threshold=criticality_threshold,
        )
        note("hitl", hv, ev.trace_id)

    report.violations.sort(key=lambda v: (v.trace_id, INVARIANTS.index(v.invariant)))
    report.summary = {
        **{k: {"checked": checked[k], "passed": passed[k]} for k in INVARIANTS},
        "notes": dict(sorted(notes.items())),
    }
    return report
