"""Evidence graph: typed nodes and relations answering traceability queries."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from govkernel.canonical import canonical_json, sha256_hex
from govkernel.contracts.schema import RELATIONS, SchemaDef
from govkernel.envelope import Approval
from govkernel.errors import DuplicateNode, UnknownNode

KINDS = frozenset(
    {
        "PolicyBundle",
        "RiskAssessment",
        "ComplianceGap",
        "EvidenceManifest",
        "IncidentCase",
        "IncidentTimeline",
        "IncidentSummary",
        "AlertCluster",
        "AnomalyReport",
        "BehavioralRisk",
        "HuntFinding",
        "SCIMMutation",
        "AccessChangeEvent",
        "SoDViolation",
        "HardeningRecommendation",
        "ModelValidationReport",
        "MetricsRecord",
        "AssetRecord",
    }
)
DECISION_ARTIFACTS = frozenset({"RiskAssessment", "BehavioralRisk", "HuntFinding", "ComplianceGap"})
DEFAULT_DEPTH = 8


def kind_for(name: str) -> str:
    return name if name in KINDS else f"Other({name})"


def policy_uri(ref: str) -> str:
    return f"uri://policy/{ref}"


def asset_uri(asset_id: str) -> str:
    return f"uri://assets/{asset_id}"


def approval_uri(task_id: str, a: Approval) -> str:
    return f"uri://approvals/{task_id}/{a.role}/{a.approver_id}"


@dataclass(frozen=True)
class AssetRecord:
    asset_id: str
    name: str
    criticality: float
    crown_jewel: bool
    owner_roles: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.criticality <= 1.0:
            raise ValueError(f"asset {self.asset_id}: criticality out of range")

    def to_dict(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "name": self.name,
            "criticality": self.criticality,
            "crown_jewel": self.crown_jewel,
            "owner_roles": list(self.owner_roles),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssetRecord":
        return cls(
            d["asset_id"], d.get("name", d["asset_id"]), float(d["criticality"]),
            bool(d["crown_jewel"]), tuple(d.get("owner_roles", ())),
        )


def load_assets(docs: Iterable[dict]) -> dict[str, AssetRecord]:
    out: dict[str, AssetRecord] = {}
    for d in docs:
        rec = AssetRecord.from_dict(d)
        out[rec.asset_id] = rec
    return out


@dataclass(frozen=True)
class EvidenceNode:
    node_id: str
    kind: str
    payload_ref: str
    created_at: int
    producer: str
    thread_id: str
    policy_refs: tuple[str, ...] = ()
    evidence_refs: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "kind": self.kind,
            "payload_ref": self.payload_ref,
            "created_at": self.created_at,
            "producer": self.producer,
            "thread_id": self.thread_id,
            "policy_refs": list(self.policy_refs),
            "evidence_refs": list(self.evidence_refs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceNode":
        return cls(
            d["node_id"], d["kind"], d["payload_ref"], d["created_at"], d["producer"],
            d["thread_id"], tuple(d.get("policy_refs", ())), tuple(d.get("evidence_refs", ())),
        )


@dataclass(frozen=True)
class EvidenceEdge:
    src: str
    dst: str
    relation: str

    def to_dict(self) -> dict:
        return {"from": self.src, "to": self.dst, "relation": self.relation}


@dataclass(frozen=True)
class TraceResult:
    policies: frozenset[str]
    evidence: frozenset[str]
    # which path produced each policy: "edge", "envelope" or "both"
    policy_sources: dict = field(default_factory=dict, compare=False)


class EvidenceGraph:
    """Append-only in-memory store with deterministic export."""

    def __init__(self):
        self._nodes: dict[str, EvidenceNode] = {}
        self._edges: list[EvidenceEdge] = []
        self._edge_set: set[EvidenceEdge] = set()
        self._out: dict[str, list[EvidenceEdge]] = {}
        self._threads: dict[str, list[str]] = {}

    # -- primitives

    def put_node(self, node: EvidenceNode) -> str:
        if node.node_id in self._nodes:
            raise DuplicateNode(node.node_id)
        self._nodes[node.node_id] = node
        self._threads.setdefault(node.thread_id, []).append(node.node_id)
        return node.node_id

    def link(self, src: str, dst: str, relation: str) -> EvidenceEdge:
        if relation not in RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        for n in (src, dst):
            if n not in self._nodes:
                raise UnknownNode(n)
        edge = EvidenceEdge(src, dst, relation)
        if edge not in self._edge_set:
            self._edge_set.add(edge)
            self._edges.append(edge)
            self._out.setdefault(src, []).append(edge)
        return edge

    def has(self, node_id: str) -> bool:
        return node_id in self._nodes

    def node(self, node_id: str) -> EvidenceNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def nodes(self) -> list[EvidenceNode]:
        return list(self._nodes.values())

    def edges(self) -> list[EvidenceEdge]:
        return list(self._edges)

    def out_edges(self, node_id: str, relation: str | None = None) -> list[EvidenceEdge]:
        return [e for e in self._out.get(node_id, ()) if relation is None or e.relation == relation]

    def __len__(self) -> int:
        return len(self._nodes)

    # -- queries

    def trace_action(self, node_id: str, depth: int = DEFAULT_DEPTH) -> TraceResult:
        node = self.node(node_id)
        sources: dict[str, str] = {}
        for e in self.out_edges(node_id, "governed_by"):
            if self._nodes[e.dst].kind == "PolicyBundle":
                sources[e.dst] = "edge"
        for ref in node.policy_refs:
            uri = policy_uri(ref)
            n = self._nodes.get(uri)
            if n is not None and n.kind == "PolicyBundle":
                sources[uri] = "both" if sources.get(uri) == "edge" else "envelope"
        evidence: set[str] = set()
        frontier = deque([(node_id, 0)])
        while frontier:
            cur, d = frontier.popleft()
            if d == depth:
                continue
            for e in self._out.get(cur, ()):
                if e.relation in ("justified_by", "derived_from") and e.dst not in evidence:
                    evidence.add(e.dst)
                    frontier.append((e.dst, d + 1))
        evidence.discard(node_id)
        return TraceResult(frozenset(sources), frozenset(evidence), sources)

    def query_thread(self, thread_id: str) -> list[str]:
        ids = self._threads.get(thread_id, [])
        return sorted(ids, key=lambda n: (self._nodes[n].created_at, n))

    # -- recording helpers used by the runtime and log replay

    def record_event(self, ev, schema: SchemaDef) -> str:
        """Add a node for a SignedEvent and link it to what it references."""
        env = ev.envelope
        node_id = ev.node_id(schema)
        self.put_node(
            EvidenceNode(
                node_id=node_id,
                kind=kind_for(ev.oc_type),
                payload_ref=ev.trace_id,
                created_at=ev.emitted_at,
                producer=ev.producer,
                thread_id=ev.thread_id,
                policy_refs=tuple(p.to_wire() for p in env.policy_refs),
                evidence_refs=tuple(env.decision_basis.evidence_refs),
            )
        )
        for ref in env.decision_basis.evidence_refs:
            if ref in self._nodes and ref != node_id:
                self.link(node_id, ref, "justified_by")
        for p in env.policy_refs:
            uri = policy_uri(p.to_wire())
            if uri in self._nodes:
                self.link(node_id, uri, "governed_by")
        for fname, rel in schema.links:
            value = ev.payload.get(fname)
            for target in value if isinstance(value, list) else [value]:
                if isinstance(target, str) and target in self._nodes and target != node_id:
                    self.link(node_id, target, rel)
        if schema.asset_field is not None:
            asset = ev.payload.get(schema.asset_field)
            if isinstance(asset, str) and asset:
                uri = asset_uri(asset)
                if uri not in self._nodes:
                    self.put_node(
                        EvidenceNode(uri, "AssetRecord", uri, ev.emitted_at, "", "assets")
                    )
                self.link(node_id, uri, "affects_asset")
        return node_id

    def record_approval(self, action_node: str, task_id: str, a: Approval, thread_id: str) -> str:
        uri = approval_uri(task_id, a)
        if uri not in self._nodes:
            self.put_node(
                EvidenceNode(uri, "Other(Approval)", a.signature.hex(), a.approved_at,
                             a.approver_id, thread_id)
            )
        self.link(action_node, uri, "approved_by")
        return uri

    # -- export / import

    def export_graph(self) -> dict:
        return {
            "nodes": [n.to_dict() for n in self._nodes.values()],
            "edges": [e.to_dict() for e in self._edges],
        }

    def export_json(self) -> str:
        return canonical_json(self.export_graph())

    def content_hash(self) -> str:
        return sha256_hex(self.export_json())

    @classmethod
    def import_graph(cls, doc: dict) -> "EvidenceGraph":
        g = cls()
        for n in doc.get("nodes", ()):
            g.put_node(EvidenceNode.from_dict(n))
        for e in doc.get("edges", ()):
            g.link(e["from"], e["to"], e["relation"])
        return g

    def dangling_edges(self) -> list[EvidenceEdge]:
        return [e for e in self._edges if e.src not in self._nodes or e.dst not in self._nodes]


def graph_from_log(items: Iterable, contracts) -> EvidenceGraph:
    """Rebuild the graph by replaying a mixed log of SignedEvents and records.

    Events of unknown schema are skipped; audit reports them separately.
    """
    g = EvidenceGraph()
    for item in items:
        if isinstance(item, dict):
            if item.get("record") == "approval" and g.has(item["action_node"]):
                a = item["approval"]
                approval = Approval(
                    a["role"], a["approver_id"], a["approved_at"], bytes.fromhex(a["signature"])
                )
                g.record_approval(item["action_node"], item["task_id"], approval, item["thread_id"])
            continue
        if not contracts.has(item.oc_type):
            continue
        try:
            schema = contracts.get(item.oc_type, item.version)
        except LookupError:
            continue
        if not g.has(item.node_id(schema)):
            g.record_event(item, schema)
    return g
