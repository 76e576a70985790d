from __future__ import annotations

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from govkernel.contracts.catalog import default_registry
from govkernel.contracts.events import sign_event
from govkernel.envelope import Approval, PolicyCosign, Provenance, ReadOnly, new_envelope
from govkernel.errors import NoRoute, UnknownPending, VerificationFailed, WrongRole
from govkernel.identity import IdentityRegistry, KeyPair, enroll, sign_approval
from govkernel.orchestrator import (
    BackoffPolicy,
    Orchestrator,
    Response,
    RoutingRule,
    RuleMatch,
    Status,
    load_rules,
    ordered_drain,
    route,
    select_rule,
)
from govkernel.sim.clock import SimClock

ORCH = "spiffe://enterprise/orch/core"
AGENT = "spiffe://enterprise/agents/g5"
HUMANS = {"IR.Manager": "spiffe://enterprise/human/irm", "SystemOwner.DB": "spiffe://enterprise/human/dbo",
          "CISO": "spiffe://enterprise/human/ciso"}


@pytest.fixture(scope="module")
def ids():
    contracts = default_registry()
    reg = IdentityRegistry(KeyPair.derive("att", b"att"))
    orch = enroll(reg, ORCH, KeyPair.derive("k-orch", b"o"), "aa" * 32, "b", (0, 10**12))
    agent = enroll(reg, AGENT, KeyPair.derive("k-g5", b"g"), "bb" * 32, "b", (0, 10**12))
    keys = {}
    for role, who in HUMANS.items():
        keys[role] = KeyPair.derive(f"k-{role}", role.encode())
        reg.register_identity(who, keys[role].registered())
    return contracts, reg, orch, agent, keys


class Scripted:
    def __init__(self, statuses, latency=10):
        self.statuses = list(statuses)
        self.latency = latency
        self.calls: list[int] = []

    def request(self, body, now):
        self.calls.append(now)
        status = self.statuses.pop(0) if self.statuses else 200
        return Response(status, self.latency)


def make(ids, endpoint, **kw):
    contracts, reg, orch, _agent, _keys = ids
    clock = SimClock()
    log: list = []
    o = Orchestrator(contracts, reg, orch, clock, lambda ev: endpoint, log.append,
                     id_source=_counter(), **kw)
    return o, clock, log


def _counter():
    n = itertools.count()
    return lambda: f"{next(n):032x}"


def action(ids, identity="user-1", action_id="a1", cosign=(), at=0, intent="revoke"):
    contracts, reg, _orch, agent, _keys = ids
    env = new_envelope("m", "th", "IR", intent, ["IR-Playbook"], [PolicyCosign(cosign)] if cosign else [],
                       "internal", False, Provenance("", "", ""), id_source=_counter())
    payload = {"action_id": action_id, "incident_ref": "inc-1", "identity_id": identity, "asset_id": "db",
               "requested_at": at}
    return sign_event(contracts, reg, payload, "RevokeTokens", env, agent, at, id_source=_counter())


def statuses(log, key=None):
    return [(r["status"], r["at"]) for r in log
            if isinstance(r, dict) and r.get("record") == "delivery" and (key is None or r["key"] == key)]


# --- routing


def _env(intent="x", mission="m", policies=("P",)):
    return new_envelope(mission, "t", "r", intent, list(policies), [], "internal", False, Provenance("", "", ""))


def test_select_rule_priority_and_ties():
    rules = [
        RoutingRule("any", RuleMatch(), "Z1", priority=0),
        RoutingRule("alerts", RuleMatch(oc_types=frozenset({"RawAlert"})), "G1", priority=5),
        RoutingRule("alerts-2", RuleMatch(oc_types=frozenset({"RawAlert"})), "G2", priority=5),
        RoutingRule("policy", RuleMatch(policies_any=frozenset({"Q"})), "G3", priority=9),
    ]
    assert select_rule("RawAlert", _env(), rules).name == "alerts"
    assert select_rule("HrisEvent", _env(), rules).name == "any"
    assert select_rule("RawAlert", _env(policies=("Q",)), rules).name == "policy"
    assert select_rule("RawAlert", _env(), []) is None


MATCHES = [RuleMatch(), RuleMatch(oc_types=frozenset({"A"})), RuleMatch(intents=frozenset({"i"})),
           RuleMatch(missions=frozenset({"m2"})), RuleMatch(policies_any=frozenset({"P"}))]


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(-3, 3)), max_size=12),
       st.sampled_from(["A", "B"]), st.sampled_from(["i", "j"]), st.sampled_from(["m", "m2"]))
def test_select_rule_oracle(spec, oc_type, intent, mission):
    rules = [RoutingRule(f"r{n}", MATCHES[m], "X1", priority=p) for n, (m, p) in enumerate(spec)]
    env = _env(intent, mission)
    hits = [(r.priority, -n, r) for n, r in enumerate(rules) if r.match.matches(oc_type, env)]
    expected = max(hits, key=lambda h: h[:2])[2] if hits else None
    assert select_rule(oc_type, env, rules) is expected


def test_route_builds_child_and_dead_letters(ids):
    ev = action(ids)
    rules = load_rules([{"name": "r", "match": {"oc_types": ["RevokeTokens"]}, "target_agent": "G6",
                         "required_constraints": ["read_only"], "priority": 1, "intent": "contain"}])
    assert RoutingRule.from_dict(rules[0].to_dict()) == rules[0]
    d = route(ev, rules, 5)
    assert d.target_agent == "G6" and d.envelope.role == "G6" and d.envelope.intent == "contain"
    assert d.envelope.thread_id == ev.thread_id and d.envelope.has(ReadOnly)
    dead: list = []
    with pytest.raises(NoRoute):
        route(ev, [], 7, dead_letters=dead)
    assert dead[0].to_record() == {"record": "dead_letter", "trace_id": ev.trace_id, "oc_type": "RevokeTokens",
                                   "reason": "no matching rule", "at": 7}


# --- delivery


def test_happy_path_and_duplicate_submit(ids):
    ep = Scripted([200])
    o, clock, log = make(ids, ep)
    ev = action(ids)
    st_ = o.submit(ev)
    assert o.submit(ev) is st_ and o.duplicate_submits == 1
    clock.run()
    assert statuses(log) == [("queued", 0), ("in_flight", 0), ("acked", 10)]
    assert ep.calls == [0]


def test_backoff_delays():
    p = BackoffPolicy(base_ms=100, factor=2, cap_ms=350, max_retries=5)
    assert [p.delay(k) for k in range(4)] == [100, 200, 350, 350]
    assert BackoffPolicy(base_ms=100, factor=2, cap_ms=10**9).delay(10_000) == 10**9
    with pytest.raises(ValueError):
        BackoffPolicy(base_ms=0)


def test_retry_schedule_100_200_400(ids):
    ep = Scripted([503, 503, 503, 200], latency=10)
    o, clock, log = make(ids, ep, backoff=BackoffPolicy(100, 2.0, 60_000, 5))
    o.submit(action(ids))
    clock.run()
    # attempt at 0, completes at 10, waits 100; then 200; then 400
    assert ep.calls == [0, 110, 320, 730]
    assert statuses(log)[-1] == ("acked", 740)


def test_retries_exhausted_opens_ticket(ids):
    ep = Scripted([503] * 10, latency=10)
    o, clock, log = make(ids, ep, backoff=BackoffPolicy(100, 2.0, 60_000, 2))
    ev = action(ids)
    st_ = o.submit(ev)
    clock.run()
    assert len(ep.calls) == 3 and st_.status is Status.FAILED_PERMANENT and st_.reason == "RetriesExhausted"
    tickets = [x for x in log if not isinstance(x, dict) and x.oc_type == "OpenTicket"]
    assert len(tickets) == 1 and tickets[0].payload["subject_ref"] == ev.trace_id


def test_verification_required(ids):
    o, _clock, _log = make(ids, Scripted([]))
    ev = action(ids)
    with pytest.raises(VerificationFailed):
        o.submit(ev.__class__(**{**ev.__dict__, "signature": bytes(64)}))
    contracts, reg, orch, agent, _ = ids
    env = _env()
    ticket = sign_event(contracts, reg, {"ticket_id": "t", "reason": "r", "subject_ref": "s", "summary": "",
                                          "opened_at": 0}, "OpenTicket", env, agent, 0)
    with pytest.raises(ValueError):
        o.submit(ticket)


def _approve(ids, o, key, role, t):
    keys = ids[4]
    pa = o.pending[key]
    return o.approve(key, sign_approval(keys[role], pa.envelope.task_id, role, HUMANS[role], t))


ROLES = ("IR.Manager", "SystemOwner.DB", "CISO")


@pytest.mark.parametrize("order", list(itertools.permutations(ROLES)))
@pytest.mark.parametrize("required", [ROLES[:1], ROLES[:2], ROLES])
def test_pending_until_every_role_approves(ids, required, order):
    ep = Scripted([])
    o, clock, log = make(ids, ep)
    ev = action(ids, cosign=required)
    st_ = o.submit(ev)
    assert st_.status is Status.PENDING_APPROVAL
    approved: set[str] = set()
    for n, role in enumerate(order):
        if role not in required:
            with pytest.raises(WrongRole):
                _approve(ids, o, ev.idempotency_key, role, n)
            continue
        clock.run_until(clock.now + 1000)
        _approve(ids, o, ev.idempotency_key, role, clock.now - 1)
        approved.add(role)
        done = set(required) <= approved
        assert (ev.idempotency_key not in o.pending) == done
        if done:
            break
    clock.run()
    assert ep.calls and st_.status is Status.ACKED
    inflight = [r for r in log if isinstance(r, dict) and r.get("status") == "in_flight"]
    assert all(r["cosign_ok"] for r in inflight)
    release = st_.release
    assert release is not None and release.payload["released_trace_id"] == ev.trace_id
    assert all(a["approved_at"] < release.emitted_at for a in release.payload["approvals"])
    with pytest.raises(UnknownPending):
        o.approve(ev.idempotency_key, Approval("IR.Manager", "x", 0))


def test_approval_timeout(ids):
    ep = Scripted([])
    o, clock, log = make(ids, ep, approval_timeout_ms=5000)
    ev = action(ids, cosign=("IR.Manager",))
    st_ = o.submit(ev)
    clock.run()
    assert st_.status is Status.FAILED_PERMANENT and st_.reason == "ApprovalTimeout"
    assert ep.calls == []
    assert statuses(log)[-1] == ("failed_permanent", 5000)


def test_head_of_line_blocks_same_key_only(ids):
    ep = Scripted([])
    o, clock, log = make(ids, ep)
    gated = action(ids, identity="u1", action_id="a1", cosign=("IR.Manager",))
    behind = action(ids, identity="u1", action_id="a2")
    other = action(ids, identity="u2", action_id="a3")
    for ev in (gated, behind, other):
        o.submit(ev)
    clock.run()
    assert o.states[other.idempotency_key].status is Status.ACKED
    assert o.states[behind.idempotency_key].status is Status.QUEUED
    _approve(ids, o, gated.idempotency_key, "IR.Manager", clock.now)
    clock.run()
    acked = [r["trace_id"] for r in log if isinstance(r, dict) and r.get("status") == "acked"]
    assert acked == [other.trace_id, gated.trace_id, behind.trace_id]


@given(st.lists(st.tuples(st.integers(0, 4), st.integers()), max_size=40))
def test_ordered_drain_keeps_per_key_fifo(items):
    out = ordered_drain(items, lambda x: x[0])
    assert sorted(out) == sorted(items)
    for k in {x[0] for x in items}:
        assert [x for x in out if x[0] == k] == [x for x in items if x[0] == k]


def test_clock_ties_fire_in_schedule_order():
    clock, seen = SimClock(), []
    for n in range(5):
        clock.schedule(10, seen.append, n)
    clock.schedule(5, seen.append, "early")
    clock.run()
    assert seen == ["early", 0, 1, 2, 3, 4] and clock.now == 10
    with pytest.raises(ValueError):
        clock.schedule(9, seen.append, "late")
