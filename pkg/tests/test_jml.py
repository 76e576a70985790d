from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from govkernel.errors import NoMatchingRole
from govkernel.jml.model import EDGES, SLA_MS, Account, RoleCatalog, SodRule, TaskState
from govkernel.jml.planning import (
    DirectoryError,
    Mutation,
    apply_all,
    apply_mutation,
    plan_mutations,
    resolve_roles,
    rollback_for,
    sod_check,
    target_accounts,
)
from govkernel.sim.config import data_path
from govkernel.sim.generators import Person
from govkernel.sim.scenario import World
from support import events, hris, quiet_config, records

CATALOG = RoleCatalog.load(data_path("role_catalog.json"))
SYSTEMS = ["azure_ad", "github", "sap"]
ENTS = [f"{s}:group:g{i}" for s in SYSTEMS for i in range(3)]


def accounts_strategy():
    acct = st.builds(Account, st.booleans(), st.frozensets(st.sampled_from(ENTS), max_size=4))
    return st.dictionaries(st.sampled_from(SYSTEMS), acct, max_size=3)


# --- directory semantics


def test_apply_mutation_semantics():
    s = apply_mutation({}, Mutation("github", "create"))
    assert s == {"github": Account(True, frozenset())}
    with pytest.raises(DirectoryError) as e:
        apply_mutation(s, Mutation("github", "create"))
    assert e.value.status == 409
    with pytest.raises(DirectoryError) as e:
        apply_mutation({}, Mutation("github", "update", add=("github:group:g0",)))
    assert e.value.status == 404
    s = apply_mutation(s, Mutation("github", "update", active=False, add=("github:group:g0",)))
    assert s["github"] == Account(False, frozenset({"github:group:g0"}))
    assert apply_mutation(s, Mutation("github", "deprovision")) == {}


@settings(max_examples=300, deadline=None)
@given(accounts_strategy(), accounts_strategy(), st.sampled_from(["hire", "transfer", "terminate"]))
def test_plan_reaches_target_and_rollback_restores(current, target, event_type):
    plan = plan_mutations(current, target, event_type, "azure_ad")
    assert apply_all(current, plan.mutations) == target
    assert apply_all(target, plan.rollback) == current
    # every prefix is also undone exactly by its own rollback
    for k in range(len(plan.mutations) + 1):
        mid = apply_all(current, plan.mutations[:k])
        assert apply_all(mid, rollback_for(current, plan.mutations[:k])) == current


def test_plan_ordering():
    current = {"github": Account(True, frozenset({"github:group:g0"})), "sap": Account(True, frozenset())}
    target = {"azure_ad": Account(True, frozenset({"azure_ad:group:g1"})), "github": Account(True, frozenset())}
    ops = [(m.system, m.op) for m in plan_mutations(current, target, "transfer", "azure_ad").mutations]
    assert ops == [("azure_ad", "create"), ("azure_ad", "update"), ("github", "update"), ("sap", "deprovision")]
    # leavers touch the primary identity provider first
    leaver = plan_mutations({"github": Account(), "azure_ad": Account()}, {}, "terminate", "azure_ad")
    assert [m.system for m in leaver.mutations] == ["azure_ad", "github"]


def test_target_accounts():
    cur = {"github": Account(True, frozenset({"github:group:g0"}))}
    assert target_accounts(cur, frozenset(), "terminate", "azure_ad") == {}
    assert target_accounts(cur, frozenset(), "extended_leave", "azure_ad") == {"github": Account(False, frozenset())}
    t = target_accounts(cur, frozenset({"sap:group:g1"}), "transfer", "azure_ad")
    assert t == {"azure_ad": Account(True, frozenset()), "sap": Account(True, frozenset({"sap:group:g1"})),
                 "github": Account(True, frozenset())}


# --- role resolution


DEPTS = ["Finance", "Sales", "Engineering", "IT", "HR", "Legal"]
TITLES = ["Analyst", "AP Clerk", "AP Lead", "Controller", "Account Executive", "Sales Ops", "Software Engineer",
          "SRE", "Release Manager", "SRE Lead", "Helpdesk Analyst", "HR Generalist", "Intern"]


@pytest.mark.parametrize("emp_type", ["employee", "contractor"])
def test_resolve_roles_oracle(emp_type):
    for dept, title in itertools.product(DEPTS, TITLES):
        trig = {"event_type": "hire", "employee_id": "E1", "department": dept, "job_title": title,
                "location": "NYC", "employment_type": emp_type}
        attrs = {"department": dept, "job_title": title, "location": "NYC", "employment_type": emp_type}
        matched = [r for r in CATALOG.derivation_rules if all(attrs.get(k) in v for k, v in r.when)]
        if not any(not r.baseline for r in matched):
            with pytest.raises(NoMatchingRole):
                resolve_roles(trig, CATALOG)
            continue
        res = resolve_roles(trig, CATALOG)
        roles = {x for r in matched for x in r.roles}
        assert set(res.roles) == roles
        assert res.desired == frozenset().union(*(CATALOG.roles[x] for x in roles))


def test_resolve_roles_leavers_disable():
    for et in ("terminate", "extended_leave"):
        r = resolve_roles({"event_type": et, "employee_id": "E1"}, CATALOG)
        assert r.disable and r.desired == frozenset()


def test_catalog_validation():
    with pytest.raises(ValueError):
        RoleCatalog({"r": frozenset({"Bad Ent"})}, (), ())
    with pytest.raises(ValueError):
        RoleCatalog({"r": frozenset({"a:group:x"})}, (), (SodRule("s", ("a:group:x", "b:group:y"), "high", ("X",)),))
    with pytest.raises(ValueError):
        RoleCatalog({"r": frozenset({"a:group:x", "b:group:y"})}, (),
                    (SodRule("s", ("a:group:x", "b:group:y"), "high", ()),))
    assert CATALOG.primary_system in CATALOG.systems()


# --- SoD


RULE_ENTS = ["x:group:a", "x:group:b", "x:group:c", "x:group:d"]
RULES = (
    SodRule("ab", ("x:group:a", "x:group:b"), "high", ("Risk",)),
    SodRule("bc", ("x:group:b", "x:group:c"), "medium", ("Risk",), droppable="x:group:c"),
    SodRule("cd", ("x:group:c", "x:group:d"), "low", ("Risk",)),
)


@given(st.frozensets(st.sampled_from(RULE_ENTS)), st.frozensets(st.sampled_from(RULE_ENTS)))
def test_sod_pair_scan_oracle(desired, current):
    scan = sod_check(desired, current, RULES)
    # oracle: sequential scan with the same drop rule
    held, new, out = set(desired | current), desired - current, set(desired)
    conflicts, dropped = [], []
    for rule in RULES:
        a, b = rule.pair
        if a in held and b in held and {a, b} & new:
            if rule.droppable in new and rule.droppable in out:
                out.discard(rule.droppable)
                held.discard(rule.droppable)
                dropped.append(rule.rule_id)
            else:
                conflicts.append(rule.rule_id)
    assert [r.rule_id for r, _ in scan.conflicts] == conflicts
    assert [r.rule_id for r, _ in scan.dropped] == dropped
    assert scan.desired == out
    # pre-existing combinations are never re-raised
    assert sod_check(frozenset(), current, RULES).conflicts == ()


# --- the agent, driven through a quiet single-employee world


ENGINEER = {"department": "Engineering", "job_title": "Software Engineer"}
SALES = {"department": "Sales", "job_title": "Account Executive"}


def run_one(event_type, attrs, people=()):
    world = World(quiet_config(workloads=("jml",)), people=list(people))
    world.start()
    world.publish_governance()
    world.clock.schedule(1_000, world.send_hris, hris("E70001", event_type, attrs, 1_000))
    return world, world.finish()


@pytest.mark.parametrize(
    "event_type, attrs, people, n_mutations",
    [
        ("hire", ENGINEER, (), 6),
        ("terminate", SALES, (Person("E70001", "Employee 70001", SALES),), 2),
        ("transfer", ENGINEER, (Person("E70001", "Employee 70001", SALES),), None),
        ("extended_leave", SALES, (Person("E70001", "Employee 70001", SALES),), None),
    ],
)
def test_single_task_closes_within_sla(event_type, attrs, people, n_mutations):
    world, res = run_one(event_type, attrs, people)
    (task,) = records(res.log, "jml_task")
    assert task["final_state"] == "closed"
    assert task["completed_at"] - task["effective_ts"] <= SLA_MS[event_type]
    assert not task["sla_breached"]
    fwd = [e for e in events(res.log, "SCIMMutation") if "rollback_of" not in e.payload]
    if n_mutations is not None:
        assert len(fwd) == n_mutations
    assert fwd and all(e.payload["employee_id"] == "E70001" for e in fwd)
    for r in records(res.log, "jml_transition"):
        if r["task_id"] == task["task_id"]:
            assert (TaskState(r["from"]), TaskState(r["to"])) in EDGES
    assert res.audit.violations == []


def test_hire_grants_resolved_entitlements():
    world, _res = run_one("hire", ENGINEER)
    ents = set().union(*(a.entitlements for a in world.directory.observe("E70001").values()))
    assert ents == set(resolve_roles({"event_type": "hire", "employee_id": "E70001", **ENGINEER,
                                      "location": "NYC", "employment_type": "employee"}, CATALOG).desired)


def test_leaver_removes_all_access():
    world, _ = run_one("terminate", SALES, (Person("E70001", "Employee 70001", SALES),))
    assert world.directory.observe("E70001") == {}


def test_role_gap_escalates_and_grants_baseline_only():
    world, res = run_one("hire", {"department": "Legal", "job_title": "Intern"})
    (task,) = records(res.log, "jml_task")
    states = [r["to"] for r in records(res.log, "jml_transition") if r["task_id"] == task["task_id"]]
    assert "awaiting_approval" in states and task["final_state"] == "closed"
    ents = set().union(*(a.entitlements for a in world.directory.observe("E70001").values()))
    assert ents == set(CATALOG.roles["base-employee"])
