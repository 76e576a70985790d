"""Policy- and intent-based routing of events to agents."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from govkernel.contracts.events import SignedEvent
from govkernel.envelope import (
    Constraint,
    Envelope,
    IdSource,
    child_envelope,
    constraint_from_wire,
    constraint_to_wire,
    random_hex128,
)
from govkernel.errors import NoRoute


@dataclass(frozen=True)
class RuleMatch:
    """Conjunction of optional filters; an empty filter matches anything."""

    oc_types: frozenset[str] = frozenset()
    intents: frozenset[str] = frozenset()
    missions: frozenset[str] = frozenset()
    policies_any: frozenset[str] = frozenset()

    def matches(self, oc_type: str, env: Envelope) -> bool:
        if self.oc_types and oc_type not in self.oc_types:
            return False
        if self.intents and env.intent not in self.intents:
            return False
        if self.missions and env.mission_id not in self.missions:
            return False
        if self.policies_any and not self.policies_any & set(env.policy_ids()):
            return False
        return True

    def to_dict(self) -> dict:
        return {
            k: sorted(getattr(self, k))
            for k in ("oc_types", "intents", "missions", "policies_any")
            if getattr(self, k)
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RuleMatch":
        return cls(**{k: frozenset(d.get(k, ())) for k in ("oc_types", "intents", "missions", "policies_any")})


@dataclass(frozen=True)
class RoutingRule:
    name: str
    match: RuleMatch
    target_agent: str
    required_constraints: tuple[Constraint, ...] = ()
    priority: int = 0
    role: str | None = None  # role for the child envelope; defaults to the target code
    intent: str | None = None  # defaults to the inbound intent

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "match": self.match.to_dict(),
            "target_agent": self.target_agent,
            "required_constraints": [constraint_to_wire(c) for c in self.required_constraints],
            "priority": self.priority,
        }
        if self.role:
            d["role"] = self.role
        if self.intent:
            d["intent"] = self.intent
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RoutingRule":
        return cls(
            name=d["name"],
            match=RuleMatch.from_dict(d.get("match", {})),
            target_agent=d["target_agent"],
            required_constraints=tuple(constraint_from_wire(c) for c in d.get("required_constraints", ())),
            priority=int(d.get("priority", 0)),
            role=d.get("role"),
            intent=d.get("intent"),
        )


def load_rules(docs: Iterable[dict]) -> list[RoutingRule]:
    return [RoutingRule.from_dict(d) for d in docs]


def load_rules_file(path) -> list[RoutingRule]:
    with open(path, encoding="utf-8") as fh:
        return load_rules(json.load(fh))


def select_rule(oc_type: str, env: Envelope, rules: Sequence[RoutingRule]) -> RoutingRule | None:
    best: RoutingRule | None = None
    for r in rules:  # strict > keeps the earliest declaration on ties
        if r.match.matches(oc_type, env) and (best is None or r.priority > best.priority):
            best = r
    return best


@dataclass(frozen=True)
class Dispatch:
    rule: RoutingRule
    target_agent: str
    envelope: Envelope


@dataclass(frozen=True)
class DeadLetter:
    trace_id: str
    oc_type: str
    reason: str
    at: int

    def to_record(self) -> dict:
        return {
            "record": "dead_letter",
            "trace_id": self.trace_id,
            "oc_type": self.oc_type,
            "reason": self.reason,
            "at": self.at,
        }


def route(
    ev: SignedEvent,
    rules: Sequence[RoutingRule],
    now: int,
    *,
    dead_letters: list[DeadLetter] | None = None,
    id_source: IdSource = random_hex128,
) -> Dispatch:
    """Pick the rule for an already verified event and derive the child envelope."""
    rule = select_rule(ev.oc_type, ev.envelope, rules)
    if rule is None:
        if dead_letters is not None:
            dead_letters.append(DeadLetter(ev.trace_id, ev.oc_type, "no matching rule", now))
        raise NoRoute(f"{ev.oc_type} {ev.trace_id}")
    env = child_envelope(
        ev.envelope,
        rule.role or rule.target_agent,
        rule.intent or ev.envelope.intent,
        extra_constraints=rule.required_constraints,
        id_source=id_source,
    )
    return Dispatch(rule, rule.target_agent, env)
