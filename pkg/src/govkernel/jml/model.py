"""Joiner/mover/leaver data: role catalog, directory accounts, task states."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from govkernel.contracts.catalog import ENTITLEMENT_PATTERN

MINUTE = 60_000
EVENT_TYPES = ("hire", "transfer", "terminate", "extended_leave", "return_from_leave")
SLA_MS = {
    "hire": 15 * MINUTE,
    "return_from_leave": 15 * MINUTE,
    "terminate": 5 * MINUTE,
    "extended_leave": 5 * MINUTE,
    "transfer": 10 * MINUTE,
}
REASON = {
    "hire": "joiner",
    "return_from_leave": "joiner",
    "transfer": "mover",
    "terminate": "leaver",
    "extended_leave": "leaver",
}
LEAVER_TYPES = ("terminate", "extended_leave")
_ENT_RE = re.compile(ENTITLEMENT_PATTERN)


def ent_system(ent: str) -> str:
    return ent.split(":", 1)[0]


class TaskState(str, Enum):
    IDLE = "idle"
    AWAITING_HRIS_EVENT = "awaiting_hris_event"
    ROLE_RESOLUTION = "role_resolution"
    SOD_CHECK = "sod_check"
    AWAITING_APPROVAL = "awaiting_approval"
    PROVISIONING = "provisioning"
    VERIFYING = "verifying"
    SLA_BREACH = "sla_breach"
    CONTEST_WORKFLOW = "contest_workflow"
    ROLLED_BACK = "rolled_back"
    CLOSED = "closed"


S = TaskState
# The documented state machine.
BASE_EDGES = frozenset(
    {
        (S.IDLE, S.AWAITING_HRIS_EVENT),
        (S.AWAITING_HRIS_EVENT, S.ROLE_RESOLUTION),
        (S.ROLE_RESOLUTION, S.SOD_CHECK),
        (S.SOD_CHECK, S.AWAITING_APPROVAL),
        (S.SOD_CHECK, S.PROVISIONING),
        (S.AWAITING_APPROVAL, S.PROVISIONING),
        (S.PROVISIONING, S.VERIFYING),
        (S.VERIFYING, S.CLOSED),
        (S.PROVISIONING, S.ROLLED_BACK),
    }
    | {(s, S.SLA_BREACH) for s in S if s not in (S.SLA_BREACH,)}
    | {(s, S.CONTEST_WORKFLOW) for s in S if s not in (S.CONTEST_WORKFLOW,)}
)
# Outgoing edges the documented machine leaves implicit: one remediation pass,
# rollback after failed verification, and the two human dispositions of a contest.
EXTENSION_EDGES = frozenset(
    {
        (S.VERIFYING, S.PROVISIONING),
        (S.VERIFYING, S.ROLLED_BACK),
        (S.CONTEST_WORKFLOW, S.CLOSED),
        (S.CONTEST_WORKFLOW, S.ROLLED_BACK),
    }
)
EDGES = BASE_EDGES | EXTENSION_EDGES
TERMINAL_STATES = frozenset({S.CLOSED, S.ROLLED_BACK})


@dataclass(frozen=True)
class Account:
    active: bool = True
    entitlements: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {"active": self.active, "entitlements": sorted(self.entitlements)}

    @classmethod
    def from_dict(cls, d: dict) -> "Account":
        return cls(bool(d["active"]), frozenset(d["entitlements"]))


# Directory view of one employee: target_system -> account.
Accounts = Mapping[str, Account]


def all_entitlements(accounts: Accounts) -> frozenset[str]:
    out: set[str] = set()
    for a in accounts.values():
        out |= a.entitlements
    return frozenset(out)


def account_id(system: str, employee_id: str) -> str:
    return f"{system}:{employee_id}"


@dataclass(frozen=True)
class IdentityGraphRecord:
    employee_id: str
    accounts: dict[str, tuple[str, str]]  # system -> (account_id, "active" | "disabled")
    current_entitlements: frozenset[str]

    @classmethod
    def from_accounts(cls, employee_id: str, accounts: Accounts) -> "IdentityGraphRecord":
        return cls(
            employee_id,
            {
                s: (account_id(s, employee_id), "active" if a.active else "disabled")
                for s, a in sorted(accounts.items())
            },
            all_entitlements(accounts),
        )


@dataclass(frozen=True)
class DerivationRule:
    rule_id: str
    when: tuple[tuple[str, tuple[str, ...]], ...]  # attribute -> allowed values (all must hold)
    roles: tuple[str, ...]
    baseline: bool = False  # baseline rules alone do not count as a role match

    def matches(self, attrs: Mapping[str, str]) -> bool:
        return all(attrs.get(k) in allowed for k, allowed in self.when)


@dataclass(frozen=True)
class SodRule:
    rule_id: str
    pair: tuple[str, str]
    severity: str
    approver_chain: tuple[str, ...]
    droppable: str | None = None  # member that may be silently dropped when newly granted


@dataclass(frozen=True)
class RoleCatalog:
    roles: dict[str, frozenset[str]]
    derivation_rules: tuple[DerivationRule, ...]
    sod_rules: tuple[SodRule, ...]
    primary_system: str = "azure_ad"
    snapshot_id: str = "snapshot"

    def __post_init__(self):
        known = set(self.roles)
        for r in self.derivation_rules:
            missing = [x for x in r.roles if x not in known]
            if missing:
                raise ValueError(f"rule {r.rule_id} references unknown roles {missing}")
        every = set().union(*self.roles.values()) if self.roles else set()
        for role, ents in self.roles.items():
            for e in ents:
                if not _ENT_RE.fullmatch(e):
                    raise ValueError(f"role {role}: malformed entitlement {e!r}")
        for s in self.sod_rules:
            for member in s.pair:
                if member not in every:
                    raise ValueError(f"sod rule {s.rule_id}: {member} is not granted by any role")
            if s.droppable is not None and s.droppable not in s.pair:
                raise ValueError(f"sod rule {s.rule_id}: droppable member not in pair")
            if not s.approver_chain:
                raise ValueError(f"sod rule {s.rule_id}: empty approver chain")

    @property
    def snapshot_uri(self) -> str:
        return f"uri://role-catalog/snapshot/{self.snapshot_id}"

    def systems(self) -> list[str]:
        out = {self.primary_system}
        for ents in self.roles.values():
            out |= {ent_system(e) for e in ents}
        return sorted(out)

    @classmethod
    def from_dict(cls, d: dict) -> "RoleCatalog":
        return cls(
            roles={k: frozenset(v) for k, v in d["roles"].items()},
            derivation_rules=tuple(
                DerivationRule(
                    r["rule_id"],
                    tuple((k, tuple(v)) for k, v in sorted(r["when"].items())),
                    tuple(r["roles"]),
                    bool(r.get("baseline", False)),
                )
                for r in d["derivation_rules"]
            ),
            sod_rules=tuple(
                SodRule(
                    r["rule_id"], tuple(r["pair"]), r["severity"], tuple(r["approver_chain"]),
                    r.get("droppable"),
                )
                for r in d["sod_rules"]
            ),
            primary_system=d.get("primary_system", "azure_ad"),
            snapshot_id=d.get("snapshot_id", "snapshot"),
        )

    @classmethod
    def load(cls, path) -> "RoleCatalog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class Resolution(str, Enum):
    PENDING = "pending"
    APPROVED_EXCEPTION = "approved_exception"
    BLOCKED = "blocked"


@dataclass
class SoDFinding:
    violation_id: str
    employee_id: str
    rule: SodRule
    conflicting: tuple[str, str]
    resolution: Resolution = Resolution.PENDING

    def resolve(self, to: Resolution) -> None:
        if self.resolution is not Resolution.PENDING or to is Resolution.PENDING:
            raise ValueError(f"{self.violation_id}: {self.resolution.value} -> {to.value} not allowed")
        self.resolution = to

    def payload(self, at: int) -> dict:
        return {
            "violation_id": self.violation_id,
            "employee_id": self.employee_id,
            "rule_id": self.rule.rule_id,
            "conflicting": list(self.conflicting),
            "severity": self.rule.severity,
            "required_approvers": list(self.rule.approver_chain),
            "resolution": self.resolution.value,
            "detected_at": at,
        }


@dataclass
class JmlTask:
    task_id: str
    employee_id: str
    event_type: str
    effective_ts: int
    trigger: dict
    trigger_node: str
    state: TaskState = TaskState.IDLE
    entered_at: dict[str, int] = field(default_factory=dict)
    history: list[tuple[str, str, int]] = field(default_factory=list)
    sla_deadline: int | None = None
    sla_breached: bool = False
    desired: frozenset[str] = frozenset()
    target: dict[str, Account] | None = None
    pre_state: dict[str, Account] = field(default_factory=dict)
    planned: list = field(default_factory=list)
    rollback_plan: list = field(default_factory=list)
    sod_findings: list[SoDFinding] = field(default_factory=list)
    gap: bool = False
    remediated: bool = False
    contested: bool = False
    completed_at: int | None = None

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    def sod_pending(self) -> bool:
        return any(f.resolution is Resolution.PENDING for f in self.sod_findings)
