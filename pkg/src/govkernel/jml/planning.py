"""Pure planning functions: role derivation, SoD scanning, mutation plans."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from govkernel.errors import NoMatchingRole
from govkernel.jml.model import (
    LEAVER_TYPES,
    REASON,
    Account,
    Accounts,
    RoleCatalog,
    SodRule,
    all_entitlements,
    ent_system,
)

ATTRIBUTES = ("department", "job_title", "location", "employment_type")


@dataclass(frozen=True)
class Resolved:
    desired: frozenset[str]
    roles: tuple[str, ...]
    disable: bool = False  # leaver intent: remove access rather than grant it


def resolve_roles(trigger: Mapping, catalog: RoleCatalog) -> Resolved:
    """Union of entitlements of every role whose derivation rule matches."""
    if trigger["event_type"] in LEAVER_TYPES:
        return Resolved(frozenset(), (), disable=True)
    attrs = {k: trigger.get(k) for k in ATTRIBUTES}
    matched = [r for r in catalog.derivation_rules if r.matches(attrs)]
    if not any(not r.baseline for r in matched):
        raise NoMatchingRole(f"{trigger['employee_id']}: no role for {attrs}")
    roles = tuple(dict.fromkeys(role for r in matched for role in r.roles))
    desired: set[str] = set()
    for role in roles:
        desired |= catalog.roles[role]
    return Resolved(frozenset(desired), roles)


@dataclass(frozen=True)
class SodScan:
    conflicts: tuple[tuple[SodRule, tuple[str, str]], ...]  # need approval
    dropped: tuple[tuple[SodRule, str], ...]  # auto-resolved by dropping a member
    desired: frozenset[str]  # desired set after drops


def sod_check(desired: frozenset[str], current: frozenset[str], rules: Sequence[SodRule]) -> SodScan:
    """Flag rules whose pair would be held together and at least one member is new.

    Conflicts already held before the task (nothing new granted) are not
    re-raised, so a leaver is never stopped by a pre-existing combination.
    """
    held = set(desired | current)
    new = desired - current
    conflicts = []
    dropped = []
    out = set(desired)
    for rule in rules:
        a, b = rule.pair
        if not (a in held and b in held):
            continue
        if not ({a, b} & new):
            continue
        if rule.droppable is not None and rule.droppable in new and rule.droppable in out:
            out.discard(rule.droppable)
            held.discard(rule.droppable)
            dropped.append((rule, rule.droppable))
            continue
        conflicts.append((rule, (a, b)))
    return SodScan(tuple(conflicts), tuple(dropped), frozenset(out))


def target_accounts(
    current: Accounts, desired: frozenset[str], event_type: str, primary: str
) -> dict[str, Account]:
    """The directory state a task should leave behind for one employee."""
    if event_type == "terminate":
        return {}
    if event_type == "extended_leave":
        return {s: Account(False, frozenset()) for s in current}
    by_system: dict[str, set[str]] = {primary: set()}
    for e in desired:
        by_system.setdefault(ent_system(e), set()).add(e)
    out = {s: Account(True, frozenset(ents)) for s, ents in by_system.items()}
    for s, acct in current.items():
        if s not in out:  # keep the account, strip what the new role set no longer grants
            out[s] = Account(acct.active, frozenset())
    return out


@dataclass(frozen=True)
class Mutation:
    """A planned SCIM operation, before it becomes a signed payload."""

    system: str
    op: str  # create | update | deprovision
    active: bool | None = None
    add: tuple[str, ...] = ()
    remove: tuple[str, ...] = ()
    reason: str = "joiner"
    rollback_of: str | None = None

    def body(self) -> dict:
        if self.op == "update":
            d: dict = {"add": list(self.add), "remove": list(self.remove)}
            if self.active is not None:
                d["active"] = self.active
            return d
        return {}

    @property
    def disabling(self) -> bool:
        return self.op == "deprovision" or (self.op == "update" and self.active is False)


class DirectoryError(Exception):
    def __init__(self, status: int, msg: str):
        super().__init__(msg)
        self.status = status


def apply_mutation(state: Accounts, m: Mutation) -> dict[str, Account]:
    """Directory semantics: 409 on create of an existing account, 404 on a missing one."""
    out = dict(state)
    acct = out.get(m.system)
    if m.op == "create":
        if acct is not None:
            raise DirectoryError(409, f"{m.system}: account exists")
        out[m.system] = Account(True, frozenset())
    elif acct is None:
        raise DirectoryError(404, f"{m.system}: no account")
    elif m.op == "deprovision":
        del out[m.system]
    else:
        ents = (acct.entitlements | frozenset(m.add)) - frozenset(m.remove)
        out[m.system] = Account(acct.active if m.active is None else m.active, ents)
    return out


def apply_all(state: Accounts, plan: Sequence[Mutation]) -> dict[str, Account]:
    out = dict(state)
    for m in plan:
        out = apply_mutation(out, m)
    return out


def inverse(before: Accounts, m: Mutation) -> list[Mutation]:
    """Mutations undoing ``m`` when applied to the state ``m`` produced."""
    prior = before.get(m.system)
    if m.op == "create":
        return [Mutation(m.system, "deprovision", reason="remediation")]
    if m.op == "deprovision":
        assert prior is not None
        return [
            Mutation(m.system, "create", reason="remediation"),
            Mutation(
                m.system, "update", active=prior.active, add=tuple(sorted(prior.entitlements)),
                reason="remediation",
            ),
        ]
    assert prior is not None
    # Only undo what actually changed, so the inverse is exact.
    added = tuple(sorted(frozenset(m.add) - prior.entitlements))
    removed = tuple(sorted(frozenset(m.remove) & prior.entitlements))
    active = prior.active if m.active is not None and m.active != prior.active else None
    return [Mutation(m.system, "update", active=active, add=removed, remove=added, reason="remediation")]


def rollback_for(start: Accounts, applied: Sequence[Mutation]) -> list[Mutation]:
    """Inverse plan for an applied prefix, in reverse order."""
    states = [dict(start)]
    for m in applied:
        states.append(apply_mutation(states[-1], m))
    out: list[Mutation] = []
    for i in range(len(applied) - 1, -1, -1):
        out.extend(inverse(states[i], applied[i]))
    return out


@dataclass(frozen=True)
class Plan:
    mutations: tuple[Mutation, ...]
    rollback: tuple[Mutation, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.mutations)


def plan_mutations(
    current: Accounts, target: Mapping[str, Account], event_type: str, primary: str,
    *, reason: str | None = None,
) -> Plan:
    """Ordered mutations turning ``current`` into ``target``.

    Creates come first, then updates that grant, then updates that only
    revoke, then deprovisions. Leavers instead touch the primary identity
    provider first so access removal precedes everything else.
    """
    reason = reason or REASON[event_type]
    creates, grants, revokes, removals = [], [], [], []
    for s in sorted(set(current) | set(target)):
        cur, tgt = current.get(s), target.get(s)
        if cur is None and tgt is None:
            continue
        if tgt is None:
            removals.append(Mutation(s, "deprovision", reason=reason))
            continue
        base = cur
        if cur is None:
            creates.append(Mutation(s, "create", reason=reason))
            base = Account(True, frozenset())
        add = tuple(sorted(tgt.entitlements - base.entitlements))
        rem = tuple(sorted(base.entitlements - tgt.entitlements))
        active = tgt.active if tgt.active != base.active else None
        if not add and not rem and active is None:
            continue
        upd = Mutation(s, "update", active=active, add=add, remove=rem, reason=reason)
        (grants if add or active else revokes).append(upd)
    if event_type in LEAVER_TYPES and reason != "remediation":
        # a create must still precede any update of the same account
        ordered = sorted(creates + revokes + removals + grants, key=lambda m: m.system != primary)
    else:
        ordered = creates + grants + revokes + removals
    plan = tuple(ordered)
    return Plan(plan, tuple(rollback_for(current, plan)))


def diff_summary(before: Accounts, after: Accounts) -> dict:
    return {
        "added": sorted(all_entitlements(after) - all_entitlements(before)),
        "removed": sorted(all_entitlements(before) - all_entitlements(after)),
    }
