"""Context envelope carried with every agent invocation and output.

Envelopes are immutable values. Every mutator returns a new envelope so each
stage's snapshot can be reconstructed from the log.
"""

from __future__ import annotations

import re
import secrets
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable, Protocol, Union

from govkernel.canonical import canonical_bytes
from govkernel.errors import (
    BadApprovalSignature,
    DuplicateApproval,
    EmptyIdentifier,
    NoCosignConstraint,
)
from govkernel.reports import Finding, ValidationReport

URI_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*://\S+$")
_TIMEBOX_RE = re.compile(r"^timebox_(\d+)(ms|s|m|h)$", re.IGNORECASE)
_UNIT_MS = {"ms": 1, "s": 1000, "m": 60_000, "h": 3_600_000}

IdSource = Callable[[], str]


def random_hex128() -> str:
    return secrets.token_hex(16)


class Classification(str, Enum):
    INTERNAL = "internal"
    INTERNAL_PLUS_SENSITIVE = "internal-plus-sensitive"
    CONFIDENTIAL = "confidential"
    REGULATED_DATA_PRESENT = "regulated-data-present"


@dataclass(frozen=True)
class PolicyRef:
    policy_id: str
    version: str | None = None

    def to_wire(self) -> str:
        return self.policy_id if self.version is None else f"{self.policy_id}@{self.version}"

    @classmethod
    def parse(cls, raw: "str | PolicyRef") -> "PolicyRef":
        if isinstance(raw, PolicyRef):
            return raw
        pid, sep, ver = raw.partition("@")
        return cls(pid, ver if sep else None)


# --- constraints -----------------------------------------------------------


@dataclass(frozen=True)
class PolicyCosign:
    required_roles: tuple[str, ...]

    def __init__(self, required_roles: Iterable[str]):
        object.__setattr__(self, "required_roles", tuple(required_roles))


@dataclass(frozen=True)
class HitlOnGapDetected:
    pass


@dataclass(frozen=True)
class AutoOpenTicket:
    pass


@dataclass(frozen=True)
class NoEmergencyAdmin:
    pass


@dataclass(frozen=True)
class ReadOnly:
    pass


@dataclass(frozen=True)
class NoDirectContainment:
    pass


@dataclass(frozen=True)
class Timebox:
    limit_ms: int


@dataclass(frozen=True)
class Custom:
    name: str
    params: tuple[tuple[str, Any], ...] = ()

    @classmethod
    def make(cls, name: str, params: dict | None = None) -> "Custom":
        return cls(name, tuple(sorted((params or {}).items())))


Constraint = Union[
    PolicyCosign,
    HitlOnGapDetected,
    AutoOpenTicket,
    NoEmergencyAdmin,
    ReadOnly,
    NoDirectContainment,
    Timebox,
    Custom,
]

_FLAGS: dict[str, type] = {
    "hitl_on_gap_detected": HitlOnGapDetected,
    "auto_open_ticket": AutoOpenTicket,
    "no_emergency_admin": NoEmergencyAdmin,
    "read_only": ReadOnly,
    "no_direct_containment": NoDirectContainment,
}
_FLAG_NAMES = {v: k for k, v in _FLAGS.items()}


def constraint_to_wire(c: Constraint) -> Any:
    if isinstance(c, PolicyCosign):
        return {"policy_cosign": list(c.required_roles)}
    if isinstance(c, Timebox):
        return {"timebox": c.limit_ms}
    if isinstance(c, Custom):
        return c.name if not c.params else {c.name: dict(c.params)}
    return _FLAG_NAMES[type(c)]


def constraint_from_wire(raw: Any) -> Constraint:
    """Parse a wire constraint. Unrecognised names become ``Custom``."""
    if isinstance(raw, str):
        flag = _FLAGS.get(raw.lower())
        if flag is not None:
            return flag()
        m = _TIMEBOX_RE.match(raw)
        if m:
            return Timebox(int(m.group(1)) * _UNIT_MS[m.group(2).lower()])
        return Custom(raw)
    if isinstance(raw, dict) and len(raw) == 1:
        ((name, value),) = raw.items()
        if name == "policy_cosign":
            return PolicyCosign(value)
        if name == "timebox":
            return Timebox(int(value))
        if name.lower() in _FLAGS and value in (True, None):
            return _FLAGS[name.lower()]()
        return Custom.make(name, value if isinstance(value, dict) else {"value": value})
    raise ValueError(f"unparseable constraint: {raw!r}")


# --- envelope records ------------------------------------------------------


@dataclass(frozen=True)
class DecisionBasis:
    evidence_refs: tuple[str, ...] = ()
    confidence: float = 0.0
    explanation_ref: str | None = None


@dataclass(frozen=True)
class Provenance:
    producer_spiffe: str
    signing_kid: str
    attestation_ref: str


@dataclass(frozen=True)
class Approval:
    role: str
    approver_id: str
    approved_at: int
    signature: bytes = b""


def approval_message(task_id: str, role: str, approver_id: str, approved_at: int) -> bytes:
    return canonical_bytes(
        {"task_id": task_id, "role": role, "approver_id": approver_id, "approved_at": approved_at}
    )


class ApprovalVerifier(Protocol):
    def verify_approval(self, approval: Approval, task_id: str) -> bool: ...


@dataclass(frozen=True)
class Envelope:
    mission_id: str
    thread_id: str
    task_id: str
    role: str
    intent: str
    policy_refs: tuple[PolicyRef, ...]
    constraints: tuple[Constraint, ...]
    decision_basis: DecisionBasis
    provenance: Provenance
    classification: Classification
    legal_hold: bool
    approvals: tuple[Approval, ...] = field(default=())

    # convenience accessors

    def cosign_constraints(self) -> list[PolicyCosign]:
        return [c for c in self.constraints if isinstance(c, PolicyCosign)]

    def has(self, kind: type) -> bool:
        return any(isinstance(c, kind) for c in self.constraints)

    def timebox_ms(self) -> int | None:
        limits = [c.limit_ms for c in self.constraints if isinstance(c, Timebox)]
        return min(limits) if limits else None

    def policy_ids(self) -> list[str]:
        return [p.policy_id for p in self.policy_refs]

    def with_constraints(self, *extra: Constraint) -> "Envelope":
        merged = list(self.constraints)
        for c in extra:
            if c not in merged:
                merged.append(c)
        return replace(self, constraints=tuple(merged))

    def without_constraint(self, kind: type) -> "Envelope":
        return replace(
            self, constraints=tuple(c for c in self.constraints if not isinstance(c, kind))
        )

    def with_decision(
        self,
        evidence_refs: Iterable[str] | None = None,
        confidence: float | None = None,
        explanation_ref: str | None = None,
    ) -> "Envelope":
        db = self.decision_basis
        return replace(
            self,
            decision_basis=DecisionBasis(
                tuple(evidence_refs) if evidence_refs is not None else db.evidence_refs,
                db.confidence if confidence is None else confidence,
                explanation_ref if explanation_ref is not None else db.explanation_ref,
            ),
        )

    def with_provenance(self, provenance: Provenance) -> "Envelope":
        return replace(self, provenance=provenance)

    def to_dict(self) -> dict:
        db = self.decision_basis
        basis: dict[str, Any] = {
            "evidence_refs": list(db.evidence_refs),
            "confidence": db.confidence,
        }
        if db.explanation_ref is not None:
            basis["explanation_ref"] = db.explanation_ref
        return {
            "mission_id": self.mission_id,
            "thread_id": self.thread_id,
            "task_id": self.task_id,
            "role": self.role,
            "intent": self.intent,
            "policy_refs": [p.to_wire() for p in self.policy_refs],
            "constraints": [constraint_to_wire(c) for c in self.constraints],
            "decision_basis": basis,
            "provenance": {
                "producer_spiffe": self.provenance.producer_spiffe,
                "signing_kid": self.provenance.signing_kid,
                "attestation_ref": self.provenance.attestation_ref,
            },
            "classification": self.classification.value
            if isinstance(self.classification, Classification)
            else str(self.classification),
            "legal_hold": self.legal_hold,
            "approvals": [
                {
                    "role": a.role,
                    "approver_id": a.approver_id,
                    "approved_at": a.approved_at,
                    "signature": a.signature.hex(),
                }
                for a in self.approvals
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Envelope":
        db = d.get("decision_basis") or {}
        prov = d.get("provenance") or {}
        raw_cls = d.get("classification", "internal")
        try:
            classification: Any = Classification(raw_cls)
        except ValueError:
            # kept verbatim so validate_envelope can report it
            classification = raw_cls
        return cls(
            mission_id=d.get("mission_id", ""),
            thread_id=d.get("thread_id", ""),
            task_id=d.get("task_id", ""),
            role=d.get("role", ""),
            intent=d.get("intent", ""),
            policy_refs=tuple(PolicyRef.parse(p) for p in d.get("policy_refs", [])),
            constraints=tuple(constraint_from_wire(c) for c in d.get("constraints", [])),
            decision_basis=DecisionBasis(
                tuple(db.get("evidence_refs", [])),
                db.get("confidence", 0.0),
                db.get("explanation_ref"),
            ),
            provenance=Provenance(
                prov.get("producer_spiffe", ""),
                prov.get("signing_kid", ""),
                prov.get("attestation_ref", ""),
            ),
            classification=classification,
            legal_hold=bool(d.get("legal_hold", False)),
            approvals=tuple(
                Approval(a["role"], a["approver_id"], a["approved_at"], bytes.fromhex(a["signature"]))
                for a in d.get("approvals", [])
            ),
        )


# --- operations ------------------------------------------------------------


def _require(**idents: str) -> None:
    empty = [k for k, v in idents.items() if not isinstance(v, str) or not v.strip()]
    if empty:
        raise EmptyIdentifier(f"empty identifier(s): {', '.join(empty)}")


def new_envelope(
    mission_id: str,
    thread_id: str,
    role: str,
    intent: str,
    policy_refs: Iterable[str | PolicyRef],
    constraints: Iterable[Constraint],
    classification: Classification | str,
    legal_hold: bool,
    provenance: Provenance,
    *,
    id_source: IdSource = random_hex128,
) -> Envelope:
    _require(mission_id=mission_id, thread_id=thread_id, role=role, intent=intent)
    refs = tuple(PolicyRef.parse(p) for p in policy_refs)
    if any(not p.policy_id for p in refs):
        raise EmptyIdentifier("empty policy_id")
    return Envelope(
        mission_id=mission_id,
        thread_id=thread_id,
        task_id=f"task-{id_source()}",
        role=role,
        intent=intent,
        policy_refs=refs,
        constraints=tuple(constraints),
        decision_basis=DecisionBasis(),
        provenance=provenance,
        classification=Classification(classification),
        legal_hold=legal_hold,
    )


def child_envelope(
    parent: Envelope,
    role: str,
    intent: str,
    *,
    extra_constraints: Iterable[Constraint] = (),
    id_source: IdSource = random_hex128,
) -> Envelope:
    """Spawn a task in the parent's thread.

    legal_hold is inherited; the parent's approvals and decision basis are not.
    """
    _require(role=role, intent=intent)
    child = replace(
        parent,
        task_id=f"task-{id_source()}",
        role=role,
        intent=intent,
        decision_basis=DecisionBasis(),
        approvals=(),
    )
    return child.with_constraints(*extra_constraints)


def _approval_valid(env: Envelope, a: Approval, verifier: ApprovalVerifier | None) -> bool:
    return verifier is None or verifier.verify_approval(a, env.task_id)


def record_cosign(
    env: Envelope, approval: Approval, verifier: ApprovalVerifier | None = None
) -> Envelope:
    if not env.cosign_constraints():
        raise NoCosignConstraint(env.task_id)
    if not _approval_valid(env, approval, verifier):
        raise BadApprovalSignature(f"{approval.role}/{approval.approver_id}")
    if any(
        a.role == approval.role and a.approver_id == approval.approver_id for a in env.approvals
    ):
        raise DuplicateApproval(f"{approval.role}/{approval.approver_id}")
    return replace(env, approvals=env.approvals + (approval,))


def approved_roles(env: Envelope, verifier: ApprovalVerifier | None = None) -> set[str]:
    return {a.role for a in env.approvals if _approval_valid(env, a, verifier)}


def cosign_satisfied(env: Envelope, verifier: ApprovalVerifier | None = None) -> bool:
    """True iff every role of every cosign constraint holds a valid approval.

    ``verifier=None`` skips signature checks (trusted in-process callers only).
    """
    cosigns = env.cosign_constraints()
    if not cosigns:
        return True
    have = approved_roles(env, verifier)
    return all(set(c.required_roles) <= have for c in cosigns)


def validate_envelope(env: Envelope) -> ValidationReport:
    out: list[Finding] = []
    for name in ("mission_id", "thread_id", "task_id", "role", "intent"):
        v = getattr(env, name)
        if not isinstance(v, str) or not v.strip():
            out.append(Finding(name, "empty_identifier", f"{name} is empty"))
    for i, p in enumerate(env.policy_refs):
        if not p.policy_id:
            out.append(Finding(f"policy_refs[{i}]", "empty_policy_id", "policy_id is empty"))
    seen: list[Constraint] = []
    for i, c in enumerate(env.constraints):
        path = f"constraints[{i}]"
        if c in seen:
            out.append(Finding(path, "duplicate_constraint", f"duplicate {constraint_to_wire(c)!r}"))
        seen.append(c)
        if isinstance(c, PolicyCosign) and not c.required_roles:
            out.append(Finding(path, "empty_cosign_roles", "policy_cosign lists no roles"))
        if isinstance(c, Timebox) and not c.limit_ms > 0:
            out.append(Finding(path, "nonpositive_timebox", "timebox limit must be > 0"))
    conf = env.decision_basis.confidence
    if isinstance(conf, bool) or not isinstance(conf, (int, float)) or not 0.0 <= conf <= 1.0:
        out.append(
            Finding("decision_basis.confidence", "confidence_out_of_range", "confidence out of range")
        )
    for i, ref in enumerate(env.decision_basis.evidence_refs):
        if not isinstance(ref, str) or not URI_RE.match(ref):
            out.append(
                Finding(f"decision_basis.evidence_refs[{i}]", "bad_evidence_ref", f"not a URI: {ref!r}")
            )
    for name in ("producer_spiffe", "signing_kid", "attestation_ref"):
        if not getattr(env.provenance, name):
            out.append(Finding(f"provenance.{name}", "empty_provenance_field", f"{name} is empty"))
    if not isinstance(env.classification, Classification):
        out.append(
            Finding("classification", "bad_classification", f"unknown {env.classification!r}")
        )
    if not isinstance(env.legal_hold, bool):
        out.append(Finding("legal_hold", "bad_legal_hold", "legal_hold must be boolean"))
    return ValidationReport(tuple(out))
