"""C1: turns HRIS lifecycle events into ordered, verified SCIM mutations."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping

from govkernel.contracts.events import SignedEvent
from govkernel.envelope import (
    Approval,
    Envelope,
    HitlOnGapDetected,
    IdSource,
    PolicyCosign,
    cosign_satisfied,
    random_hex128,
    record_cosign,
)
from govkernel.errors import IllegalTransition, InvalidEvent, NoMatchingRole, UnknownTarget
from govkernel.jml.model import (
    EDGES,
    LEAVER_TYPES,
    REASON,
    SLA_MS,
    Account,
    IdentityGraphRecord,
    JmlTask,
    Resolution,
    RoleCatalog,
    SoDFinding,
    TaskState,
    account_id,
    all_entitlements,
)
from govkernel.jml.planning import (
    Mutation,
    apply_mutation,
    inverse,
    plan_mutations,
    resolve_roles,
    sod_check,
    target_accounts,
    Resolved,
)
from govkernel.orchestrator.delivery import DeliveryState, Status
from govkernel.runtime.agents import AgentOutput, AgentRuntime
from govkernel.sim.clock import SimClock

S = TaskState
GAP_APPROVER = "IAM.Manager"


@dataclass(frozen=True)
class JmlCosts:
    resolve_ms: int = 2_000
    sod_ms: int = 1_000
    emit_ms: int = 500
    verify_ms: int = 1_000


@dataclass
class _Run:
    """Execution bookkeeping for one task (not part of the task record)."""

    env: Envelope
    start: dict[str, Account]
    queue: deque = field(default_factory=deque)
    applied: list[tuple[Mutation, str]] = field(default_factory=list)  # (mutation, trace_id)
    inflight: Mutation | None = None
    phase: str = "forward"  # forward | rollback
    frozen: bool = False
    pending_overturn: bool = False
    rollback_failures: int = 0
    rollback_count: int = 0
    failed: bool = False
    restore_to: dict[str, Account] | None = None  # set once remediation resynced the view


def baseline_only(trigger: Mapping, catalog: RoleCatalog) -> Resolved:
    attrs = {k: trigger.get(k) for k in ("department", "job_title", "location", "employment_type")}
    roles = tuple(
        dict.fromkeys(role for r in catalog.derivation_rules if r.baseline and r.matches(attrs) for role in r.roles)
    )
    desired: set[str] = set()
    for role in roles:
        desired |= catalog.roles[role]
    return Resolved(frozenset(desired), roles)


class JmlAgent:
    """Event-driven task workers, one active task per employee.

    ``publish`` persists a signed event (log, evidence graph, orchestrator for
    state-changing contracts). ``record`` persists plain log records.
    ``observe`` reads the simulated directory for one employee.
    """

    code = "C1"

    def __init__(
        self,
        runtime: AgentRuntime,
        clock: SimClock,
        catalog: RoleCatalog,
        *,
        publish: Callable[[SignedEvent], None],
        record: Callable[[dict], None],
        observe: Callable[[str], dict[str, Account]],
        baseline: Mapping[str, Mapping[str, Account]] | None = None,
        costs: JmlCosts = JmlCosts(),
        id_source: IdSource = random_hex128,
        evidence_refs: tuple[str, ...] = (),
    ):
        self.runtime = runtime
        self.clock = clock
        self.catalog = catalog
        self.publish = publish
        self.record = record
        self.observe = observe
        self.costs = costs
        self.ids = id_source
        self.evidence_refs = evidence_refs or (catalog.snapshot_uri,)
        self.accounts: dict[str, dict[str, Account]] = {
            e: dict(a) for e, a in (baseline or {}).items()
        }
        self.tasks: dict[str, JmlTask] = {}
        self._runs: dict[str, _Run] = {}
        self._dedup: dict[tuple, str] = {}
        self._lanes: dict[str, deque[str]] = {}
        self._by_trace: dict[str, tuple[str, Mutation]] = {}
        self._buckets: set[tuple] = set()
        self.on_approval_needed: Callable[[JmlTask, tuple[str, ...], str], None] | None = None
        self.on_sod_block: Callable[[JmlTask, SoDFinding], None] | None = None
        self.on_transition: Callable[[JmlTask, TaskState], None] | None = None

    # -- identity graph

    def identity_record(self, employee_id: str) -> IdentityGraphRecord:
        return IdentityGraphRecord.from_accounts(employee_id, self.accounts.get(employee_id, {}))

    # -- helpers

    def _transition(self, task: JmlTask, to: TaskState) -> None:
        now = self.clock.now
        if (task.state, to) not in EDGES:
            raise IllegalTransition(f"{task.task_id}: {task.state.value} -> {to.value}")
        self.record(
            {
                "record": "jml_transition",
                "task_id": task.task_id,
                "employee_id": task.employee_id,
                "event_type": task.event_type,
                "effective_ts": task.effective_ts,
                "from": task.state.value,
                "to": to.value,
                "at": now,
            }
        )
        task.history.append((task.state.value, to.value, now))
        task.state = to
        task.entered_at[to.value] = now
        if task.terminal:
            self._finish(task)
        if self.on_transition is not None:
            self.on_transition(task, to)

    def _emit(self, oc_type: str, payload: dict, env: Envelope) -> SignedEvent:
        ev = self.runtime.emit(self.code, oc_type, payload, env, self.clock.now)
        self.publish(ev)
        return ev

    def _node(self, ev: SignedEvent) -> str:
        return ev.node_id(self.runtime.contracts.get(ev.oc_type, ev.version))

    def _task(self, task_id: str) -> JmlTask:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise UnknownTarget(task_id) from None

    # -- ingestion

    def on_hris_event(self, ev: SignedEvent, env: Envelope, now: int | None = None) -> JmlTask:
        now = self.clock.now if now is None else now
        p = ev.payload
        if ev.oc_type != "HrisEvent" or not str(p.get("employee_id", "")).strip():
            raise InvalidEvent(f"{ev.trace_id}: not a usable HRIS event")
        if p["event_type"] in LEAVER_TYPES and p.get("end_date") is None and p.get("effective_ts") is None:
            raise InvalidEvent(f"{ev.trace_id}: leaver without end_date or effective_ts")
        key = (p["employee_id"], p["event_type"], p["effective_ts"])
        if key in self._dedup:
            self.record({"record": "hris_duplicate", "trace_id": ev.trace_id, "task_id": self._dedup[key], "at": now})
            return self.tasks[self._dedup[key]]
        # the runtime enforces input contract, lifecycle, provenance and timebox
        self.runtime.invoke(
            self.runtime.spec(self.code), lambda e, v, c: AgentOutput([], v, cost_ms=0), ev, env, now
        )
        task = JmlTask(
            task_id=env.task_id,
            employee_id=p["employee_id"],
            event_type=p["event_type"],
            effective_ts=p["effective_ts"],
            trigger=dict(p),
            trigger_node=self._node(ev),
        )
        self.tasks[task.task_id] = task
        self._dedup[key] = task.task_id
        env = env.with_decision(evidence_refs=[task.trigger_node, *self.evidence_refs])
        self._runs[task.task_id] = _Run(env, {})
        self._transition(task, S.AWAITING_HRIS_EVENT)
        lane = self._lanes.setdefault(task.employee_id, deque())
        lane.append(task.task_id)
        if len(lane) == 1:
            self._activate(task)
        return task

    def _activate(self, task: JmlTask) -> None:
        if task.effective_ts <= self.clock.now:
            self._begin(task)
        else:
            self.clock.schedule(task.effective_ts, self._begin, task)

    def _begin(self, task: JmlTask) -> None:
        now = self.clock.now
        self._transition(task, S.ROLE_RESOLUTION)
        task.sla_deadline = task.effective_ts + SLA_MS[task.event_type]
        self.clock.schedule(max(now, task.sla_deadline + 1), self._sla_check, task)
        task.pre_state = dict(self.observe(task.employee_id))
        self._runs[task.task_id].start = dict(self.accounts.get(task.employee_id, {}))
        self.clock.after(self.costs.resolve_ms, self._to_sod, task)

    def _to_sod(self, task: JmlTask) -> None:
        try:
            resolved = resolve_roles(task.trigger, self.catalog)
        except NoMatchingRole:
            task.gap = True
            resolved = baseline_only(task.trigger, self.catalog)
        task.desired = resolved.desired
        self._transition(task, S.SOD_CHECK)
        self.clock.after(self.costs.sod_ms, self._decide, task, resolved)

    def _decide(self, task: JmlTask, resolved: Resolved) -> None:
        now = self.clock.now
        run = self._runs[task.task_id]
        current = all_entitlements(self.accounts.get(task.employee_id, {}))
        scan = sod_check(task.desired, current, self.catalog.sod_rules)
        task.desired = scan.desired
        for rule, member in scan.dropped:
            self.record(
                {"record": "sod_auto_resolved", "task_id": task.task_id, "rule_id": rule.rule_id,
                 "dropped": member, "at": now}
            )
        task.sod_findings = [
            SoDFinding(f"sod-{self.ids()[:16]}", task.employee_id, rule, pair) for rule, pair in scan.conflicts
        ]
        if task.gap:
            decision = "escalate_gap"
        elif task.sod_findings:
            decision = "needs_approval"
        else:
            decision = "provision"
        score = 1.0 if task.gap else min(1.0, 0.5 * len(task.sod_findings))
        ra = self._emit(
            "RiskAssessment",
            {
                "assessment_id": f"ra-{self.ids()[:16]}",
                "assessment_type": "access_decision",
                "subject": task.employee_id,
                "score": score,
                "decision": decision,
                "inputs": {
                    "event_type": task.event_type,
                    "roles": list(resolved.roles),
                    "desired": sorted(task.desired),
                    "conflicts": [r.rule_id for r, _ in scan.conflicts],
                    "dropped": [m for _, m in scan.dropped],
                },
            },
            run.env,
        )
        run.env = run.env.with_decision(
            evidence_refs=[*run.env.decision_basis.evidence_refs, self._node(ra)], confidence=1.0 - score / 2
        )
        if task.sod_findings:
            roles: list[str] = []
            for f in task.sod_findings:
                self._emit("SoDViolation", f.payload(now), run.env)
                roles.extend(f.rule.approver_chain)
            self._await(task, tuple(dict.fromkeys(roles)), "sod")
        elif task.gap:
            run.env = run.env.with_constraints(HitlOnGapDetected())
            self._await(task, (GAP_APPROVER,), "gap")
        else:
            self._transition(task, S.PROVISIONING)
            self._provision(task)

    def _await(self, task: JmlTask, roles: tuple[str, ...], kind: str) -> None:
        run = self._runs[task.task_id]
        run.env = run.env.with_constraints(PolicyCosign(roles))
        self._transition(task, S.AWAITING_APPROVAL)
        if self.on_approval_needed is not None:
            self.on_approval_needed(task, roles, kind)

    # -- human inputs

    def approve(self, task_id: str, approval: Approval) -> JmlTask:
        task = self._task(task_id)
        if task.state is not S.AWAITING_APPROVAL:
            self.record({"record": "late_approval", "task_id": task_id, "role": approval.role, "at": self.clock.now})
            return task
        run = self._runs[task_id]
        run.env = record_cosign(run.env, approval, self.runtime.identities)
        if not cosign_satisfied(run.env, self.runtime.identities):
            return task
        for f in task.sod_findings:
            f.resolve(Resolution.APPROVED_EXCEPTION)
            self._emit("SoDViolation", f.payload(self.clock.now), run.env)
        self._transition(task, S.PROVISIONING)
        self._provision(task)
        return task

    def deny(self, task_id: str, role: str) -> JmlTask:
        task = self._task(task_id)
        if task.state is not S.AWAITING_APPROVAL:
            self.record({"record": "late_denial", "task_id": task_id, "role": role, "at": self.clock.now})
            return task
        now = self.clock.now
        run = self._runs[task_id]
        current = all_entitlements(self.accounts.get(task.employee_id, {}))
        desired = set(task.desired)
        for f in task.sod_findings:
            a, b = f.conflicting
            new = [m for m in (b, a) if m in desired and m not in current]
            if new:
                desired.discard(new[0])
            f.resolve(Resolution.BLOCKED)
            self._emit("SoDViolation", f.payload(now), run.env)
            self.record(
                {"record": "sod_block", "violation_id": f.violation_id, "task_id": task_id,
                 "employee_id": task.employee_id, "rule_id": f.rule.rule_id, "denied_by": role, "at": now}
            )
            if self.on_sod_block is not None:
                self.on_sod_block(task, f)
        task.desired = frozenset(desired)
        if task.gap:  # escalation refused: leave the directory as it is
            task.target = dict(self.accounts.get(task.employee_id, {}))
        run.env = run.env.without_constraint(PolicyCosign)
        self._transition(task, S.PROVISIONING)
        self._provision(task)
        return task

    def dispute(self, task_id: str) -> bool:
        task = self._task(task_id)
        run = self._runs[task_id]
        if task.state not in (S.PROVISIONING, S.VERIFYING) or run.phase != "forward":
            self.record({"record": "dispute_ignored", "task_id": task_id, "state": task.state.value,
                         "at": self.clock.now})
            return False
        task.contested = True
        run.frozen = True
        self._transition(task, S.CONTEST_WORKFLOW)
        return True

    def disposition(self, task_id: str, outcome: str) -> None:
        task = self._task(task_id)
        if outcome not in ("uphold", "overturn"):
            raise ValueError(f"unknown disposition {outcome!r}")
        if task.state is not S.CONTEST_WORKFLOW:
            # the contest already ended, e.g. a failed delivery forced a rollback
            self.record({"record": "disposition_ignored", "task_id": task_id, "outcome": outcome,
                         "state": task.state.value, "at": self.clock.now})
            return
        run = self._runs[task_id]
        self.record({"record": "disposition", "task_id": task_id, "outcome": outcome, "at": self.clock.now})
        run.frozen = False
        if outcome == "overturn":
            if run.inflight is not None:
                run.pending_overturn = True
            else:
                self._start_rollback(task)
        elif run.inflight is None:
            self._submit_next(task)

    # -- provisioning

    def _provision(self, task: JmlTask) -> None:
        current = dict(self.accounts.get(task.employee_id, {}))
        if task.target is None:
            task.target = target_accounts(current, task.desired, task.event_type, self.catalog.primary_system)
        plan = plan_mutations(current, task.target, task.event_type, self.catalog.primary_system)
        task.planned = [m.body() | {"system": m.system, "op": m.op} for m in plan.mutations]
        task.rollback_plan = [m.body() | {"system": m.system, "op": m.op} for m in plan.rollback]
        self._runs[task.task_id].queue.extend(plan.mutations)
        self._submit_next(task)

    def _submit_next(self, task: JmlTask) -> None:
        run = self._runs[task.task_id]
        if run.frozen or run.inflight is not None:
            return
        if not run.queue:
            if run.phase == "rollback":
                self._end_rollback(task)
            else:
                self._verify(task)
            return
        m = run.queue.popleft()
        run.inflight = m
        t = self.clock.now + self.costs.emit_ms
        while (m.system, m.op, task.employee_id, t // 60_000) in self._buckets:
            t = (t // 60_000 + 1) * 60_000  # same key inside one floor window would be deduplicated
        self._buckets.add((m.system, m.op, task.employee_id, t // 60_000))
        self.clock.schedule(t, self._emit_mutation, task, m)

    def _emit_mutation(self, task: JmlTask, m: Mutation) -> None:
        if task.sod_pending():
            raise IllegalTransition(f"{task.task_id}: mutation while SoD approval pending")
        run = self._runs[task.task_id]
        now = self.clock.now
        payload = {
            "mutation_id": f"mut-{self.ids()[:16]}",
            "target_system": m.system,
            "operation_type": m.op,
            "target_resource": "user",
            "target_id": None if m.op == "create" else account_id(m.system, task.employee_id),
            "employee_id": task.employee_id,
            "scim_payload": m.body(),
            "reason": m.reason,
            "requested_at": now,
            "effective_ts": task.effective_ts,
        }
        if m.rollback_of is not None:
            payload["rollback_of"] = m.rollback_of
        ev = self._emit("SCIMMutation", payload, run.env)
        self._by_trace[ev.trace_id] = (task.task_id, m)

    def on_delivery(self, st: DeliveryState, now: int) -> None:
        """Orchestrator listener; reactions run as separate clock steps."""
        if st.trace_id not in self._by_trace or st.status not in (Status.ACKED, Status.FAILED_PERMANENT):
            return
        task_id, m = self._by_trace.pop(st.trace_id)
        self.clock.schedule(now, self._settled, self.tasks[task_id], m, st.trace_id, st.status is Status.ACKED)

    def _settled(self, task: JmlTask, m: Mutation, trace_id: str, ok: bool) -> None:
        run = self._runs[task.task_id]
        run.inflight = None
        if ok:
            before = self.accounts.get(task.employee_id, {})
            after = apply_mutation(before, m)
            self.accounts[task.employee_id] = after
            if run.phase == "forward":
                run.applied.append((m, trace_id))
            self._emit_access_change(task, m, before, after, trace_id)
        elif run.phase == "rollback":
            run.rollback_failures += 1
        else:
            run.failed = True
            self._start_rollback(task)
            return
        if run.pending_overturn:
            run.pending_overturn = False
            self._start_rollback(task)
            return
        self._submit_next(task)

    def _emit_access_change(self, task, m: Mutation, before, after, trace_id: str) -> None:
        run = self._runs[task.task_id]
        node = f"uri://events/{trace_id}"
        b, a = before.get(m.system), after.get(m.system)
        change = {"create": "account_created", "deprovision": "account_removed"}.get(m.op, "account_updated")
        self._emit(
            "AccessChangeEvent",
            {
                "change_id": f"chg-{self.ids()[:16]}",
                "employee_id": task.employee_id,
                "target_system": m.system,
                "change": change,
                "active": None if a is None else a.active,
                "added": sorted((a.entitlements if a else frozenset()) - (b.entitlements if b else frozenset())),
                "removed": sorted((b.entitlements if b else frozenset()) - (a.entitlements if a else frozenset())),
                "mutation_node": node,
                "changed_at": self.clock.now,
            },
            run.env.with_decision(evidence_refs=[node]),
        )

    # -- rollback

    def _start_rollback(self, task: JmlTask) -> None:
        run = self._runs[task.task_id]
        run.phase = "rollback"
        run.frozen = False
        states = [dict(run.start)]
        for m, _ in run.applied:
            states.append(apply_mutation(states[-1], m))
        run.queue.clear()
        if run.restore_to is not None:
            current = self.accounts.get(task.employee_id, {})
            plan = plan_mutations(current, run.restore_to, task.event_type, self.catalog.primary_system,
                                  reason="remediation")
            run.queue.extend(plan.mutations)
        for i in range(len(run.applied) - 1, -1, -1):
            m, tid = run.applied[i]
            for inv in inverse(states[i], m):
                run.queue.append(
                    Mutation(inv.system, inv.op, inv.active, inv.add, inv.remove, "remediation", rollback_of=tid)
                )
        run.rollback_count = len(run.queue)
        self.record({"record": "rollback_start", "task_id": task.task_id, "mutations": run.rollback_count,
                     "at": self.clock.now})
        self._submit_next(task)

    def _end_rollback(self, task: JmlTask) -> None:
        run = self._runs[task.task_id]
        restored = dict(self.observe(task.employee_id)) == task.pre_state
        self.record(
            {
                "record": "rollback",
                "task_id": task.task_id,
                "employee_id": task.employee_id,
                "mutations": run.rollback_count,
                "failures": run.rollback_failures,
                "restored": restored,
                "success": restored and run.rollback_failures == 0,
                "at": self.clock.now,
            }
        )
        self._transition(task, S.ROLLED_BACK)

    # -- verification, SLA

    def _verify(self, task: JmlTask) -> None:
        if task.state is S.PROVISIONING:
            self._transition(task, S.VERIFYING)
        self.clock.after(self.costs.verify_ms, self._check, task)

    def _check(self, task: JmlTask) -> None:
        run = self._runs[task.task_id]
        if run.frozen or task.state not in (S.VERIFYING, S.CONTEST_WORKFLOW):
            return
        observed = dict(self.observe(task.employee_id))
        if observed == task.target:
            self._transition(task, S.CLOSED)
            return
        self.record({"record": "verify_mismatch", "task_id": task.task_id, "remediated": task.remediated,
                     "at": self.clock.now})
        if task.remediated or task.state is S.CONTEST_WORKFLOW:
            self._start_rollback(task)
            return
        task.remediated = True
        self.accounts[task.employee_id] = observed
        plan = plan_mutations(observed, task.target, task.event_type, self.catalog.primary_system,
                              reason="remediation")
        # the view drifted: later rollback restores the pre-task state by diff, not by inverses
        run.start, run.applied, run.restore_to = dict(observed), [], dict(task.pre_state)
        run.queue.extend(plan.mutations)
        self._transition(task, S.PROVISIONING)
        self._submit_next(task)

    def _sla_check(self, task: JmlTask) -> None:
        if task.terminal or task.sla_breached:
            return
        task.sla_breached = True
        self._emit(
            "SlaBreach",
            {
                "task_id": task.task_id,
                "employee_id": task.employee_id,
                "event_type": task.event_type,
                "state": task.state.value,
                "deadline": task.sla_deadline,
                "observed_at": self.clock.now,
            },
            self._runs[task.task_id].env,
        )

    # -- completion

    def task_record(self, task: JmlTask) -> dict:
        run = self._runs.get(task.task_id)
        return {
            "record": "jml_task",
            "task_id": task.task_id,
            "employee_id": task.employee_id,
            "event_type": task.event_type,
            "reason": REASON[task.event_type],
            "effective_ts": task.effective_ts,
            "sla_deadline": task.sla_deadline,
            "final_state": task.state.value,
            "completed_at": task.completed_at,
            "sla_breached": task.sla_breached,
            "contested": task.contested,
            "gap": task.gap,
            "failed": bool(run and run.failed),
            "sod_findings": [f.violation_id for f in task.sod_findings],
            "mutations": len(run.applied) if run else 0,
        }

    def _finish(self, task: JmlTask) -> None:
        task.completed_at = self.clock.now
        self.record(self.task_record(task))
        lane = self._lanes.get(task.employee_id)
        if lane and lane[0] == task.task_id:
            lane.popleft()
            if lane:
                self._activate(self.tasks[lane[0]])

    def unfinished(self) -> list[JmlTask]:
        return [t for t in self.tasks.values() if not t.terminal]

    def finalize(self) -> None:
        """Write records for tasks still open when the run ends."""
        for t in self.unfinished():
            self.record(self.task_record(t))
