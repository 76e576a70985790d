"""SOC pipeline agents: D2 clustering, G1 triage, G4 timeline, L3 playbook, A2/A7 metrics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Protocol, Sequence

from govkernel.contracts.events import SignedEvent
from govkernel.envelope import AutoOpenTicket, Envelope, PolicyCosign, child_envelope
from govkernel.evidence import AssetRecord
from govkernel.orchestrator.delivery import TERMINAL, DeliveryState
from govkernel.runtime.agents import AgentOutput, AgentSpec, Emit, InvocationResult, AgentRuntime
from govkernel.runtime.judgment import Bound, TemplateExplainer, judge
from govkernel.errors import PostCheckFailure
from govkernel.sim.clock import SimClock
from govkernel.soc.clustering import Cluster, OnlineClusterer
from govkernel.soc.scoring import Bands, RiskInputs, RiskWeights, above_threshold, normalized, risk_exact

IR_MANAGER = "IR.Manager"
ACTIONS = ("RevokeTokens", "ForcePasswordReset")


def soc_specs(identity_of) -> list[AgentSpec]:
    def spec(code, domain, role, ins, outs, cost):
        return AgentSpec(code, domain, role, frozenset(ins), frozenset(outs), identity_of(code), cost_ms=cost)

    return [
        spec("D2", "D", "SIEM Analyst Agent", {"RawAlert"}, {"AlertCluster"}, 50),
        spec("G1", "G", "Incident Triage Agent", {"AlertCluster"}, {"IncidentCase", "RiskAssessment"}, 500),
        spec("G4", "G", "Forensic Analysis Agent", {"IncidentCase"}, {"IncidentTimeline"}, 1500),
        spec(
            "L3", "L", "SOAR Playbook Agent", {"IncidentCase"},
            {"RevokeTokens", "ForcePasswordReset", "OpenTicket", "IncidentSummary"}, 300,
        ),
        spec("A2", "A", "Risk Analytics Agent", {"IncidentSummary"}, {"RiskAssessment"}, 400),
        spec("A7", "A", "Metrics and Reporting Agent", {"IncidentSummary"}, {"MetricsRecord"}, 200),
    ]


@dataclass(frozen=True)
class PlaybookStep:
    actions: tuple[str, ...]
    cosign: bool
    ticket: bool


def playbook(band: str, crown_jewel: bool) -> PlaybookStep:
    """The declared response table.

    low: ticket only. medium/high: revoke tokens and force a password reset,
    held for IR manager plus asset owner approval when a crown jewel is involved.
    """
    if band == "low":
        return PlaybookStep((), False, True)
    return PlaybookStep(ACTIONS, crown_jewel, False)


class Host(Protocol):
    clock: SimClock
    runtime: AgentRuntime
    assets: Mapping[str, AssetRecord]

    def execute(self, code: str, fn, ev: SignedEvent, env: Envelope) -> InvocationResult: ...
    def publish_at(self, ev: SignedEvent) -> None: ...
    def spawn(self, code: str, ev: SignedEvent, env: Envelope, at: int) -> None: ...
    def events(self) -> Sequence[SignedEvent]: ...
    def record(self, rec: dict) -> None: ...
    def new_id(self) -> str: ...
    def node(self, ev: SignedEvent) -> str: ...
    def request_ir_approval(self, task_id: str, roles: tuple[str, ...], at: int) -> None: ...


@dataclass
class _Incident:
    case: SignedEvent
    env: Envelope
    actions: dict[str, str] = field(default_factory=dict)  # trace_id -> status
    pending: set[str] = field(default_factory=set)
    ticket: str | None = None
    summarized: bool = False


@dataclass
class MetricsState:
    """Running aggregate over incident summaries (A7)."""

    incidents: int = 0
    by_band: dict[str, int] = field(default_factory=lambda: {"low": 0, "medium": 0, "high": 0})
    by_asset: dict[str, int] = field(default_factory=dict)
    crown: dict[str, bool] = field(default_factory=dict)
    total_c2i: int = 0

    def add(self, summary: Mapping, assets: Mapping[str, AssetRecord]) -> None:
        self.incidents += 1
        self.by_band[summary["severity_band"]] += 1
        for a in summary["assets"]:
            self.by_asset[a] = self.by_asset.get(a, 0) + 1
            self.crown[a] = bool(assets[a].crown_jewel) if a in assets else True
        self.total_c2i += summary["cluster_to_incident_ms"]

    def payload(self, metrics_id: str, window: tuple[int, int]) -> dict:
        repeat = sorted(
            ({"asset": a, "count": n, "crown_jewel": self.crown[a]} for a, n in self.by_asset.items() if n >= 2),
            key=lambda r: (-r["count"], r["asset"]),
        )
        return {
            "metrics_id": metrics_id,
            "window_start": window[0],
            "window_end": window[1],
            "incidents": self.incidents,
            "by_band": dict(self.by_band),
            "by_asset": dict(sorted(self.by_asset.items())),
            "repeat_offenders": repeat,
            "mean_cluster_to_incident_ms": self.total_c2i / self.incidents if self.incidents else None,
        }


def aggregate_metrics(summaries: Iterable[Mapping], assets: Mapping[str, AssetRecord], metrics_id: str,
                      window: tuple[int, int]) -> dict:
    st = MetricsState()
    for s in summaries:
        st.add(s, assets)
    return st.payload(metrics_id, window)


def timeline_entries(events: Iterable[SignedEvent], identity_id: str, assets: Iterable[str],
                     start: int, end: int, node_of) -> list[dict]:
    """Events about the identity or the touched assets inside [start, end], ordered."""
    touched = set(assets)
    out = []
    for ev in events:
        if not start <= ev.emitted_at <= end:
            continue
        p = ev.payload
        hit = p.get("identity_id") == identity_id or p.get("asset_id") in touched
        if not hit:
            continue
        kind = p.get("alert_type") or p.get("status") or ""
        out.append(
            {"ts": ev.emitted_at, "event_ref": node_of(ev), "oc_type": ev.oc_type,
             "description": f"{ev.oc_type} {kind}".strip()}
        )
    out.sort(key=lambda e: (e["ts"], e["event_ref"]))
    return out


class SocAgents:
    def __init__(
        self,
        host: Host,
        *,
        weights: RiskWeights = RiskWeights(),
        threshold: float = 0.6,
        bands: Bands = Bands(),
        window_ms: int = 300_000,
        burst_threshold: int = 5,
        lookback_ms: int = 1_800_000,
        explain: bool = True,
    ):
        self.host = host
        self.weights = weights
        self.threshold = threshold
        self.bands = bands
        self.lookback_ms = lookback_ms
        self.explainer = TemplateExplainer() if explain else None
        self.clusterer = OnlineClusterer(window_ms, burst_threshold, host.assets, weights, self._cluster_closed)
        self._first_env: dict[str, tuple[Envelope, list[str]]] = {}
        self.incidents: dict[str, _Incident] = {}
        self._action_owner: dict[str, str] = {}
        self.metrics = MetricsState()

    def handlers(self) -> dict:
        return {"D2": self.d2, "G1": self.g1, "G4": self.g4, "L3": self.l3, "A2": self.a2, "A7": self.a7}

    def _noop(self, e, env, ctx):
        return AgentOutput([], env)

    # -- D2

    def d2(self, ev: SignedEvent, env: Envelope) -> None:
        self.host.execute("D2", self._noop, ev, env)
        ident = ev.payload["identity_id"]
        due = self.clusterer.add(ev.payload)
        if due is not None:
            self._first_env[ident] = (env, [])
            self.host.clock.schedule(max(self.host.clock.now, due + 1), self.clusterer.close_due, ident, due + 1)
        self._first_env[ident][1].append(self.host.node(ev))

    def _cluster_closed(self, c: Cluster) -> None:
        h = self.host
        env, nodes = self._first_env.pop(c.identity_id)
        spec = h.runtime.spec("D2")
        at = h.clock.now + spec.cost_ms
        payload = {
            "cluster_id": f"clu-{h.new_id()[:16]}",
            "identity_id": c.identity_id,
            "alerts": c.alert_ids,
            "window_start": c.window_start,
            "window_end": c.window_end,
            "risk_score": c.risk_score,
            "severity": c.severity,
            "confidence": c.confidence,
            "asset_criticality": c.asset_criticality,
            "assets": c.assets,
            "features": c.features(),
        }
        if self.explainer is not None:
            request = {"risk_score": round(normalized(c.risk_score, self.weights), 6),
                       "identity_id": c.identity_id, "alerts": len(c.alerts)}
            try:
                resp, trace = judge(self.explainer, request, bounds=(Bound("severity", 0.0, 1.0),),
                                    allowed_fields=("risk_score", "identity_id", "alerts"))
                payload["summary"] = resp["text"]
            except PostCheckFailure as exc:
                trace = exc.trace
            h.record({"record": "judgment", "agent": "D2", "at": at, **trace.to_dict()})
        thread = f"thread-{h.new_id()}"
        cenv = replace(
            child_envelope(env, "SIEMAnalystAgent", "cluster_alerts", id_source=h.new_id), thread_id=thread
        ).with_decision(evidence_refs=nodes, confidence=c.confidence)
        h.publish_at(h.runtime.emit("D2", "AlertCluster", payload, cenv, at))

    def flush(self) -> None:
        self.clusterer.flush()

    # -- G1

    def triage(self, cluster: Mapping, asset_records: Mapping[str, AssetRecord]) -> dict | None:
        score = risk_exact(
            RiskInputs(cluster["severity"], cluster["confidence"], cluster["asset_criticality"]), self.weights
        )
        if not above_threshold(score, self.threshold):
            return None
        touched = cluster["assets"]
        crown = [a for a in touched if a not in asset_records or asset_records[a].crown_jewel]
        owners: list[str] = []
        for a in crown:
            owners.extend(asset_records[a].owner_roles if a in asset_records else [f"SystemOwner.{a}"])
        return {
            "band": self.bands.band(normalized(score, self.weights)),
            "crown": bool(crown),
            "owner_roles": list(dict.fromkeys(owners)),
        }

    def g1(self, ev: SignedEvent, env: Envelope) -> None:
        h = self.host
        p = ev.payload
        verdict = self.triage(p, h.assets)
        cluster_node = h.node(ev)
        decision = "open_incident" if verdict else "no_incident"
        ra_payload = {
            "assessment_id": f"ra-{h.new_id()[:16]}",
            "assessment_type": "incident_risk",
            "subject": p["cluster_id"],
            "score": min(1.0, normalized(p["risk_score"], self.weights)),
            "decision": decision,
            "inputs": {"risk_score": p["risk_score"], "threshold": self.threshold,
                       "asset_criticality": p["asset_criticality"]},
        }
        renv = env.with_decision(evidence_refs=[cluster_node])
        res = h.execute("G1", lambda e, v, c: AgentOutput([Emit("RiskAssessment", ra_payload)], renv), ev, env)
        if verdict is None:
            return
        ra = res.outputs[0]
        case_env = env.with_decision(evidence_refs=[cluster_node, h.node(ra)], confidence=p["confidence"])
        case = h.runtime.emit(
            "G1",
            "IncidentCase",
            {
                "incident_id": f"inc-{h.new_id()[:16]}",
                "cluster_ref": p["cluster_id"],
                "cluster_node": cluster_node,
                "identity_id": p["identity_id"],
                "assets": p["assets"],
                "risk_score": p["risk_score"],
                "severity_band": verdict["band"],
                "status": "open",
                "crown_jewel_involved": verdict["crown"],
                "owner_roles": verdict["owner_roles"],
                "window_start": p["window_start"],
                "window_end": p["window_end"],
                "opened_at": res.finished_at,
            },
            case_env,
            res.finished_at,
        )
        h.publish_at(case)
        genv = child_envelope(case_env, "ForensicAnalysisAgent", "reconstruct_timeline", id_source=h.new_id)
        h.spawn("G4", case, genv, res.finished_at)

    # -- G4

    def g4(self, ev: SignedEvent, env: Envelope) -> None:
        h = self.host
        p = ev.payload
        end = h.clock.now
        entries = timeline_entries(
            h.events(), p["identity_id"], p["assets"], p["window_start"] - self.lookback_ms, end, h.node
        )
        case_node = h.node(ev)
        payload = {
            "incident_ref": p["incident_id"],
            "incident_node": case_node,
            "cluster_node": p["cluster_node"],
            "entries": entries,
            "lookback_ms": self.lookback_ms,
        }
        tenv = env.with_decision(evidence_refs=[case_node, p["cluster_node"]])
        h.execute("G4", lambda e, v, c: AgentOutput([Emit("IncidentTimeline", payload)], tenv), ev, env)

    # -- L3

    def l3(self, ev: SignedEvent, env: Envelope) -> None:
        h = self.host
        p = ev.payload
        step = playbook(p["severity_band"], p["crown_jewel_involved"])
        case_node = h.node(ev)
        aenv = env.with_decision(
            evidence_refs=list(dict.fromkeys([case_node, *ev.envelope.decision_basis.evidence_refs])),
            confidence=ev.envelope.decision_basis.confidence,
        )
        roles: tuple[str, ...] = ()
        if step.cosign:
            roles = tuple(dict.fromkeys([IR_MANAGER, *p["owner_roles"]]))
            aenv = aenv.with_constraints(PolicyCosign(roles))
        emits = []
        if step.ticket:
            tenv = aenv.with_constraints(AutoOpenTicket())
            emits.append(Emit("OpenTicket", {
                "ticket_id": f"tkt-{h.new_id()[:16]}",
                "reason": "LowSeverityIncident",
                "subject_ref": p["incident_id"],
                "summary": f"low-severity incident for {p['identity_id']} on {', '.join(p['assets'])}"[:400],
                "opened_at": h.clock.now + h.runtime.spec("L3").cost_ms,
            }, tenv))
        asset = self._action_asset(p)
        for oc in step.actions:
            emits.append(Emit(oc, {
                "action_id": f"act-{h.new_id()[:16]}",
                "incident_ref": p["incident_id"],
                "identity_id": p["identity_id"],
                "asset_id": asset,
                "requested_at": h.clock.now + h.runtime.spec("L3").cost_ms,
            }, aenv))
        res = h.execute("L3", lambda e, v, c: AgentOutput(emits, aenv), ev, env)
        inc = _Incident(ev, aenv)
        self.incidents[p["incident_id"]] = inc
        for out in res.outputs:
            if out.oc_type in ACTIONS:
                inc.actions[out.trace_id] = "submitted"
                inc.pending.add(out.trace_id)
                self._action_owner[out.trace_id] = p["incident_id"]
            else:
                inc.ticket = out.trace_id
        if roles:
            h.request_ir_approval(aenv.task_id, roles, res.finished_at)
        if not inc.pending:
            h.clock.schedule(res.finished_at, self._summarize, p["incident_id"])

    def _action_asset(self, case: Mapping) -> str:
        assets = self.host.assets
        def rank(a):
            rec = assets.get(a)
            crown = rec is None or rec.crown_jewel
            return (not crown, -(rec.criticality if rec else 1.0), a)
        return sorted(case["assets"], key=rank)[0]

    def on_delivery(self, st: DeliveryState, now: int) -> None:
        inc_id = self._action_owner.get(st.trace_id)
        if inc_id is None or st.status not in TERMINAL:
            return
        inc = self.incidents[inc_id]
        inc.actions[st.trace_id] = st.status.value
        inc.pending.discard(st.trace_id)
        if not inc.pending:
            self.host.clock.schedule(now, self._summarize, inc_id)

    def _summarize(self, inc_id: str) -> None:
        h = self.host
        inc = self.incidents[inc_id]
        if inc.summarized:
            return
        inc.summarized = True
        p = inc.case.payload
        spec = h.runtime.spec("L3")
        at = h.clock.now + spec.cost_ms
        action_nodes = [f"uri://events/{t}" for t in sorted(inc.actions)]
        by_type = {}
        for ev_trace, status in sorted(inc.actions.items()):
            by_type[ev_trace] = status
        summary = h.runtime.emit(
            "L3",
            "IncidentSummary",
            {
                "incident_ref": p["incident_id"],
                "incident_node": h.node(inc.case),
                "identity_id": p["identity_id"],
                "severity_band": p["severity_band"],
                "crown_jewel_involved": p["crown_jewel_involved"],
                "assets": p["assets"],
                "actions": {"outcomes": by_type, "ticket": inc.ticket},
                "cluster_to_incident_ms": p["opened_at"] - p["window_end"],
                "opened_at": p["opened_at"],
                "closed_at": at,
            },
            inc.env.without_constraint(PolicyCosign).with_decision(
                evidence_refs=[h.node(inc.case), *action_nodes]
            ),
            at,
        )
        h.publish_at(summary)

    # -- A2 / A7

    def a2(self, ev: SignedEvent, env: Envelope) -> None:
        h = self.host
        p = ev.payload
        base = {"low": 0.2, "medium": 0.55, "high": 0.85}[p["severity_band"]]
        score = min(1.0, base + (0.1 if p["crown_jewel_involved"] else 0.0))
        payload = {
            "assessment_id": f"ra-{h.new_id()[:16]}",
            "assessment_type": "summary_risk",
            "subject": p["incident_ref"],
            "score": score,
            "decision": "review_policy" if p["crown_jewel_involved"] else "no_change",
            "inputs": {"severity_band": p["severity_band"], "crown_jewel_involved": p["crown_jewel_involved"]},
        }
        renv = env.with_decision(evidence_refs=[h.node(ev)])
        res = h.execute("A2", lambda e, v, c: AgentOutput([Emit("RiskAssessment", payload)], renv), ev, env)
        aenv = child_envelope(env, "MetricsAgent", "aggregate_metrics", id_source=h.new_id)
        h.spawn("A7", ev, aenv, res.finished_at)

    def a7(self, ev: SignedEvent, env: Envelope) -> None:
        h = self.host
        self.metrics.add(ev.payload, h.assets)
        at = h.clock.now + h.runtime.spec("A7").cost_ms
        payload = self.metrics.payload(f"met-{h.new_id()[:16]}", (0, at))
        menv = env.with_decision(evidence_refs=[h.node(ev)])
        h.execute("A7", lambda e, v, c: AgentOutput([Emit("MetricsRecord", payload)], menv), ev, env)
