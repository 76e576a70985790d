"""The simulated enterprise: agents, orchestrator, endpoints and desks on one clock."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

from govkernel.canonical import canonical_json
from govkernel.contracts.catalog import default_registry
from govkernel.contracts.events import SignedEvent, sign_event, write_log
from govkernel.envelope import Approval, Classification, Envelope, new_envelope
from govkernel.errors import KernelError, NoMatchingRole, NoRoute, UnknownTarget
from govkernel.evidence import AssetRecord, EvidenceGraph, load_assets
from govkernel.identity import AgentCredentials, IdentityRegistry, KeyPair, enroll, sign_approval
from govkernel.invariants import AuditReport, audit_log
from govkernel.jml import JmlAgent, JmlTask, RoleCatalog, SoDFinding, TaskState
from govkernel.jml.agent import baseline_only
from govkernel.jml.model import Account
from govkernel.jml.planning import resolve_roles, target_accounts
from govkernel.orchestrator.delivery import BackoffPolicy, Endpoint, Orchestrator
from govkernel.orchestrator.routing import DeadLetter, RoutingRule, load_rules_file, route
from govkernel.runtime.agents import AgentRuntime, AgentSpec, InvocationResult
from govkernel.sim.clock import SimClock
from govkernel.sim.config import ScenarioConfig, data_path
from govkernel.sim.generators import Person, alert_schedule, baseline_population, hris_schedule
from govkernel.sim.inject import DEFECT_KINDS, Defect, apply_defect
from govkernel.sim.report import SloReport, compute_slo_report
from govkernel.sim.rng import Streams
from govkernel.sim.scim import Directory, SimEndpoint, mutation_of
from govkernel.soc.agents import SocAgents, soc_specs
from govkernel.soc.scoring import Bands, RiskWeights

TRUST_DOMAIN = "spiffe://enterprise"
AGENT_CODES = ("C1", "D2", "G1", "G4", "L3", "A2", "A7")
SERVICES = ("orchestrator", "hris-connector", "siem-connector", "policy-registry")
APPROVER_ROLES = ("Finance.Controller", "IAM.Manager", "Eng.Director", "IR.Manager")

JML_POLICIES = ("AC-2", "SoD-Policy-v3", "JML-SLA-v1")
SOC_POLICIES = ("IR-Policy-v2", "NIST-800-61")
POLICY_TITLES = {
    "AC-2": "Account management",
    "SoD-Policy-v3": "Segregation of duties",
    "JML-SLA-v1": "Joiner/mover/leaver service levels",
    "IR-Policy-v2": "Incident response",
    "NIST-800-61": "Computer security incident handling",
}
ROUTED = frozenset({"HrisEvent", "RawAlert", "AlertCluster", "IncidentCase", "IncidentSummary"})
ACTION_TYPES = ("RevokeTokens", "ForcePasswordReset")

C1_SPEC_IO = (
    frozenset({"HrisEvent"}),
    frozenset({"SCIMMutation", "AccessChangeEvent", "SoDViolation", "RiskAssessment", "SlaBreach"}),
)


def agent_uri(code: str) -> str:
    return f"{TRUST_DOMAIN}/agent/{code}"


def human_uri(role: str) -> str:
    return f"{TRUST_DOMAIN}/human/{role}"


def _json_file(path) -> object:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def baseline_accounts(people: list[Person], catalog: RoleCatalog) -> dict[str, dict[str, Account]]:
    """Directory state before the run: everyone holds what their attributes derive."""
    out: dict[str, dict[str, Account]] = {}
    for p in people:
        try:
            desired = resolve_roles({**p.attrs, "event_type": "hire", "employee_id": p.employee_id}, catalog).desired
        except NoMatchingRole:
            desired = baseline_only(p.attrs, catalog).desired
        out[p.employee_id] = target_accounts({}, desired, "hire", catalog.primary_system)
    return out


@dataclass
class RunResult:
    log: list
    graph: EvidenceGraph
    report: SloReport
    audit: AuditReport


class World:
    """One seeded run. Only ``clock`` tells time; every draw comes from a named stream."""

    def __init__(
        self,
        cfg: ScenarioConfig,
        *,
        endpoints: Mapping[str, Endpoint] | None = None,
        people: list[Person] | None = None,
    ):
        self.cfg = cfg
        self.streams = Streams(cfg.seed)
        self.ids = self.streams.id_source("ids")
        self.clock = SimClock()
        self.contracts = default_registry()
        self.catalog = RoleCatalog.load(cfg.resolve("role_catalog") or data_path("role_catalog.json"))
        self.assets: dict[str, AssetRecord] = load_assets(_json_file(cfg.resolve("assets") or data_path("assets.json")))
        self.rules: list[RoutingRule] = load_rules_file(cfg.resolve("routing_rules") or data_path("routing_rules.json"))
        self.log: list = []
        self.graph = EvidenceGraph()
        self.dead_letters: list[DeadLetter] = []
        self._events: list[SignedEvent] = []
        self.workloads = set(cfg.workloads)

        # identities
        seed = cfg.seed.to_bytes(8, "big", signed=False)
        self.identities = IdentityRegistry(attestor=KeyPair.derive("attestor", seed))
        self.creds: dict[str, AgentCredentials] = {}
        for name in (*AGENT_CODES, *SERVICES):
            uri = agent_uri(name) if name in AGENT_CODES else f"{TRUST_DOMAIN}/service/{name}"
            self.creds[name] = enroll(
                self.identities, uri, KeyPair.derive(f"kid-{name}", seed),
                hashlib.sha256(f"govkernel/{name}".encode()).hexdigest(),
                f"build://govkernel/{name}@0.1.0", (0, 2**62),
            )
        roles = list(APPROVER_ROLES)
        for rec in self.assets.values():
            roles.extend(rec.owner_roles)
        self.approver_keys: dict[str, KeyPair] = {}
        for role in dict.fromkeys(roles):
            kp = KeyPair.derive(f"kid-human-{role}", seed)
            self.identities.register_identity(human_uri(role), kp.registered())
            self.approver_keys[role] = kp

        # agents
        self.runtime = AgentRuntime(self.contracts, self.identities, id_source=self.ids)
        c1 = AgentSpec("C1", "C", "Identity Provisioning Agent", *C1_SPEC_IO, agent_uri("C1"), cost_ms=0)
        for spec in (c1, *soc_specs(agent_uri)):
            self.runtime.register(spec, self.creds[spec.agent_code])

        # directory and endpoints
        if people is not None:
            self.people = list(people)
        else:
            self.people = baseline_population(cfg) if "jml" in self.workloads else []
        self.baseline = baseline_accounts(self.people, self.catalog)
        self.directory = Directory(self.baseline)
        self.endpoints: dict[str, Endpoint] = dict(endpoints or {})

        b = cfg.backoff
        self.orchestrator = Orchestrator(
            self.contracts, self.identities, self.creds["orchestrator"], self.clock,
            self._endpoint_for, self._sink,
            backoff=BackoffPolicy(b.base_ms, b.factor, b.cap_ms, b.max_retries),
            approval_timeout_ms=cfg.approval_timeout_ms, id_source=self.ids,
        )
        self.jml = JmlAgent(
            self.runtime, self.clock, self.catalog,
            publish=self.publish, record=self.record, observe=self.directory.observe,
            baseline=self.baseline, id_source=self.ids,
        )
        self.jml.on_approval_needed = self._jml_desk
        self.jml.on_sod_block = self._adjudicate
        self.jml.on_transition = self._maybe_dispute
        s = cfg.soc
        self.soc = SocAgents(
            self, weights=RiskWeights(*s.weights), threshold=s.threshold, bands=Bands(*s.bands),
            window_ms=s.window_ms, burst_threshold=s.burst_threshold, lookback_ms=s.lookback_ms,
        )
        self.handlers: dict[str, Callable[[SignedEvent, Envelope], None]] = {
            **self.soc.handlers(), "C1": self._c1, "G1": self._g1,
        }
        self.orchestrator.listeners += [self.jml.on_delivery, self.soc.on_delivery]
        self.burst_ids: set[str] = set()
        self.containment: list[dict] = []
        self._blocks = 0
        self._disputed: set[str] = set()
        self._defects: list[tuple[str, str]] = []
        self._governed = False
        self.defects: list[Defect] = []

    # -- host interface used by the agents

    def new_id(self) -> str:
        return self.ids()

    def node(self, ev: SignedEvent) -> str:
        return ev.node_id(self.contracts.get(ev.oc_type, ev.version))

    def events(self) -> list[SignedEvent]:
        return self._events

    def record(self, rec: dict) -> None:
        self.log.append(rec)

    def publish(self, ev: SignedEvent) -> None:
        """Persist, then hand state-changing events to the orchestrator and route the rest."""
        self._persist(ev)
        schema = self.contracts.get(ev.oc_type, ev.version)
        if schema.state_changing:
            self.orchestrator.submit(ev)
        elif ev.oc_type in ROUTED:
            self._route(ev)

    def publish_at(self, ev: SignedEvent) -> None:
        if ev.emitted_at <= self.clock.now:
            self.publish(ev)
        else:
            self.clock.schedule(ev.emitted_at, self.publish, ev)

    def execute(self, code: str, fn, ev: SignedEvent, env: Envelope) -> InvocationResult:
        now = self.clock.now
        res = self.runtime.invoke(self.runtime.spec(code), fn, ev, env, now)
        self.record({"record": "agent_ack", "agent": code, "trace_id": ev.trace_id,
                     "received_at": now, "acked_at": res.finished_at})
        for out in res.outputs:
            self.publish_at(out)
        return res

    def spawn(self, code: str, ev: SignedEvent, env: Envelope, at: int) -> None:
        self.clock.schedule(max(at, self.clock.now), self._dispatch, code, ev, env)

    def request_ir_approval(self, task_id: str, roles: tuple[str, ...], at: int) -> None:
        for role in roles:
            approval = self._approval(task_id, role, at)
            self.clock.schedule(approval.approved_at + self.cfg.approval_transit_ms,
                                self._deliver_ir, task_id, approval)

    # -- plumbing

    def _persist(self, ev: SignedEvent) -> None:
        self.log.append(ev)
        self._events.append(ev)
        self.graph.record_event(ev, self.contracts.get(ev.oc_type, ev.version))

    def _sink(self, item) -> None:
        if isinstance(item, SignedEvent):
            self._persist(item)
            return
        self.log.append(item)
        if item.get("record") == "approval" and self.graph.has(item["action_node"]):
            a = item["approval"]
            self.graph.record_approval(
                item["action_node"], item["task_id"],
                Approval(a["role"], a["approver_id"], a["approved_at"], bytes.fromhex(a["signature"])),
                item["thread_id"],
            )

    def _route(self, ev: SignedEvent) -> None:
        try:
            d = route(ev, self.rules, self.clock.now, dead_letters=self.dead_letters, id_source=self.ids)
        except NoRoute:
            self.record(self.dead_letters[-1].to_record())
            return
        self._dispatch(d.target_agent, ev, d.envelope)

    def _dispatch(self, code: str, ev: SignedEvent, env: Envelope) -> None:
        self.record({"record": "applicable", "agent": code, "trace_id": ev.trace_id, "at": self.clock.now})
        try:
            self.handlers[code](ev, env)
        except KernelError as exc:
            self.record({"record": "agent_error", "agent": code, "trace_id": ev.trace_id,
                         "error": type(exc).__name__, "detail": str(exc)[:200], "at": self.clock.now})

    def _c1(self, ev: SignedEvent, env: Envelope) -> None:
        now = self.clock.now
        self.jml.on_hris_event(ev, env)
        self.record({"record": "agent_ack", "agent": "C1", "trace_id": ev.trace_id,
                     "received_at": now, "acked_at": self.clock.now})

    def _g1(self, ev: SignedEvent, env: Envelope) -> None:
        self.soc.g1(ev, env)
        opened = self.soc.triage(ev.payload, self.assets) is not None
        truth = any(a in self.burst_ids for a in ev.payload["alerts"])
        self.record({"record": "disposition", "agent": "G1", "trace_id": ev.trace_id,
                     "correct": opened == truth, "at": self.clock.now})

    def _endpoint_for(self, ev: SignedEvent) -> Endpoint:
        system = ev.payload["target_system"] if ev.oc_type == "SCIMMutation" else "idp"
        ep = self.endpoints.get(system)
        if ep is None:
            apply = self.apply_scim if ev.oc_type == "SCIMMutation" else self.apply_containment
            ep = SimEndpoint(self.cfg.endpoint(system), self.streams.get(f"endpoint/{system}"), apply, self.record)
            self.endpoints[system] = ep
        return ep

    def apply_scim(self, doc: dict) -> None:
        p = doc["payload"]
        self.directory.apply(p["employee_id"], mutation_of(p))

    def apply_containment(self, doc: dict) -> None:
        p = doc["payload"]
        self.containment.append({"action": doc["oc_type"], "identity_id": p["identity_id"],
                                 "asset_id": p["asset_id"], "at": self.clock.now})

    # -- human desks

    def _approval(self, task_id: str, role: str, at: int):
        lo, hi = self.cfg.approval_latency_ms
        approved_at = at + int(self.streams.get("approvals").integers(lo, hi + 1))
        return sign_approval(self.approver_keys[role], task_id, role, human_uri(role), approved_at)

    def _deliver_ir(self, task_id: str, approval) -> None:
        if not self.orchestrator.approve_task(task_id, approval):
            self.record({"record": "late_approval", "task_id": task_id, "role": approval.role,
                         "at": self.clock.now})

    def _jml_desk(self, task: JmlTask, roles: tuple[str, ...], kind: str) -> None:
        now = self.clock.now
        transit = self.cfg.approval_transit_ms
        if kind == "sod" and self.streams.chance("sod-desk", self.cfg.sod_deny_rate):
            lo, hi = self.cfg.approval_latency_ms
            t = now + int(self.streams.get("approvals").integers(lo, hi + 1))
            self.clock.schedule(t + transit, self.jml.deny, task.task_id, roles[0])
            return
        for role in roles:
            a = self._approval(task.task_id, role, now)
            self.clock.schedule(a.approved_at + transit, self.jml.approve, task.task_id, a)

    def _adjudicate(self, task: JmlTask, finding: SoDFinding) -> None:
        """Block i is judged unjustified iff floor((i+1)f) > floor(i f): exactly floor(n f) of n blocks."""
        i, f = self._blocks, self.cfg.adjudication
        self._blocks += 1
        unjustified = int((i + 1) * f) > int(i * f)
        self.clock.after(self.cfg.adjudication_delay_ms, self.record, {
            "record": "adjudication", "violation_id": finding.violation_id, "task_id": task.task_id,
            "justified": not unjustified, "at": self.clock.now + self.cfg.adjudication_delay_ms,
        })

    def _maybe_dispute(self, task: JmlTask, to: TaskState) -> None:
        if to is not TaskState.PROVISIONING or task.task_id in self._disputed:
            return
        self._disputed.add(task.task_id)
        if not self.streams.chance("disputes", self.cfg.dispute_rate):
            return
        lo, hi = self.cfg.dispute_delay_ms
        delay = int(self.streams.get("disputes").integers(lo, hi + 1))
        self.clock.after(delay, self._dispute, task.task_id)

    def _dispute(self, task_id: str) -> None:
        if not self.jml.dispute(task_id):
            return
        lo, hi = self.cfg.disposition_delay_ms
        delay = int(self.streams.get("dispositions").integers(lo, hi + 1))
        outcome = "overturn" if self.streams.chance("dispositions", self.cfg.overturn_rate) else "uphold"
        self.clock.after(delay, self.jml.disposition, task_id, outcome)

    # -- scheduled injections

    def inject(self, kind: str, params: dict, at_ms: int) -> None:
        """Schedule a human input, or queue a log defect applied when the run ends."""
        if kind == "approval":
            role = params["role"]
            if role not in self.approver_keys:
                raise UnknownTarget(f"no approver holds role {role!r}")
            a = sign_approval(self.approver_keys[role], params["task_id"], role, human_uri(role), at_ms)
            self.clock.schedule(at_ms + self.cfg.approval_transit_ms, self._deliver_approval, params["task_id"], a)
        elif kind == "dispute":
            self.clock.schedule(at_ms, self._dispute_injected, params["task_id"])
        elif kind == "adjudication":
            self.clock.schedule(at_ms, self.record, {
                "record": "adjudication", "violation_id": params["violation_id"],
                "task_id": params.get("task_id"), "justified": bool(params["justified"]), "at": at_ms,
            })
        elif kind == "defect":
            if params.get("kind") not in DEFECT_KINDS:
                raise UnknownTarget(f"unknown defect kind {params.get('kind')!r}")
            self._defects.append((params["kind"], params["trace_id"]))
        else:
            raise UnknownTarget(f"unknown injection kind {kind!r}")

    def _deliver_approval(self, task_id: str, approval: Approval) -> None:
        if task_id in self.jml.tasks:
            self.jml.approve(task_id, approval)
        else:
            self._deliver_ir(task_id, approval)

    def _dispute_injected(self, task_id: str) -> None:
        if task_id not in self.jml.tasks:
            self.record({"record": "injection_rejected", "kind": "dispute", "task_id": task_id,
                         "at": self.clock.now})
            return
        self.jml.dispute(task_id)

    def _apply_defects(self) -> list[Defect]:
        ledger = []
        index = {x.trace_id: i for i, x in enumerate(self.log) if isinstance(x, SignedEvent)}
        for kind, trace_id in self._defects:
            if trace_id not in index:
                raise UnknownTarget(trace_id)
            ledger.append(apply_defect(self.log, index[trace_id], kind))
        return ledger

    # -- inputs

    def _envelope(self, creds: AgentCredentials, thread: str, role: str, intent: str,
                  policies: tuple[str, ...]) -> Envelope:
        return new_envelope(
            "enterprise-operations", thread, role, intent, policies, (),
            Classification.INTERNAL_PLUS_SENSITIVE, False, creds.provenance(), id_source=self.ids,
        )

    def _signed(self, name: str, oc_type: str, payload: dict, env: Envelope) -> SignedEvent:
        return sign_event(self.contracts, self.identities, payload, oc_type, env, self.creds[name],
                          self.clock.now, id_source=self.ids)

    def publish_governance(self) -> None:
        """PolicyBundles every envelope cites, plus the role-catalog manifest."""
        if self._governed:
            return
        self._governed = True
        creds = self.creds["policy-registry"]
        env = self._envelope(creds, "thread-governance", "PolicyRegistry", "publish_policy", ())
        for ref in (*JML_POLICIES, *SOC_POLICIES):
            self.publish(self._signed("policy-registry", "PolicyBundle", {
                "ref": ref, "policy_id": ref, "version": None, "title": POLICY_TITLES[ref],
            }, env))
        if "jml" in self.workloads:
            digest = hashlib.sha256(canonical_json(self._catalog_doc()).encode()).hexdigest()
            self.publish(self._signed("policy-registry", "EvidenceManifest", {
                "manifest_uri": self.catalog.snapshot_uri, "subject": "role-catalog",
                "digest": digest, "entries": len(self.catalog.roles),
            }, env))

    def _catalog_doc(self) -> object:
        return _json_file(self.cfg.resolve("role_catalog") or data_path("role_catalog.json"))

    def send_hris(self, payload: dict) -> None:
        env = self._envelope(self.creds["hris-connector"], f"thread-{self.ids()}", "HRISConnector",
                             "hris_feed", JML_POLICIES)
        self.publish(self._signed("hris-connector", "HrisEvent", payload, env))

    def send_alert(self, payload: dict) -> None:
        env = self._envelope(self.creds["siem-connector"], "thread-telemetry", "SIEMConnector",
                             "telemetry", SOC_POLICIES)
        self.publish(self._signed("siem-connector", "RawAlert", payload, env))

    # -- run

    def schedule_inputs(self) -> tuple[list, list]:
        hris = hris_schedule(self.cfg, self.people) if "jml" in self.workloads else []
        alerts: list[dict] = []
        if "soc" in self.workloads:
            alerts, self.burst_ids = alert_schedule(self.cfg, self.assets)
        for t, payload in hris:
            self.clock.schedule(t, self.send_hris, payload)
        for a in alerts:
            self.clock.schedule(a["observed_at"], self.send_alert, a)
        return hris, alerts

    def start(self) -> None:
        """Open the log and schedule the generated inputs."""
        cfg = self.cfg
        self.record({"record": "scenario_start", "seed": cfg.seed, "duration_ms": cfg.duration_ms,
                     "workloads": sorted(self.workloads), "at": 0})
        hris, alerts = self.schedule_inputs()
        if hris or alerts:
            self.publish_governance()

    def finish(self) -> RunResult:
        """Drain the clock, close open work and audit the log."""
        self.clock.run()
        self.soc.flush()
        self.clock.run()
        self.jml.finalize()
        for st in self.orchestrator.unsettled():
            self.record({"record": "unsettled", "key": st.idempotency_key, "trace_id": st.trace_id,
                         "status": st.status.value, "at": self.clock.now})
        self.record({"record": "scenario_end", "at": self.clock.now})
        self.defects = self._apply_defects()
        graph = None if self.defects else self.graph
        audit = audit_log(self.log, self.assets, self.contracts, self.identities, graph)
        report = compute_slo_report(self.log, audit=audit)
        return RunResult(self.log, self.graph, report, audit)

    def run(self) -> RunResult:
        self.start()
        self.clock.run_until(self.cfg.duration_ms)
        return self.finish()

    # -- outputs

    def write(self, result: RunResult, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_log(out / "events.jsonl", result.log)
        (out / "graph.json").write_text(result.graph.export_json() + "\n", encoding="utf-8")
        (out / "report.json").write_text(canonical_json(result.report.to_dict()) + "\n", encoding="utf-8")
        (out / "registry.json").write_text(self.identities.export_json() + "\n", encoding="utf-8")
        (out / "assets.json").write_text(
            canonical_json([r.to_dict() for _, r in sorted(self.assets.items())]) + "\n", encoding="utf-8"
        )
        return out


def run_scenario(cfg: ScenarioConfig) -> tuple[list, EvidenceGraph, SloReport]:
    res = World(cfg).run()
    return res.log, res.graph, res.report
