"""SLO report computed from a finished run's log."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from govkernel.contracts.events import SignedEvent
from govkernel.errors import EmptyWindow
from govkernel.invariants import AuditReport
from govkernel.runtime.slo import AgentSLO, evaluate_slos, nearest_rank

TARGETS_MS = {"joiner": 900_000, "leaver": 300_000, "mover": 600_000}
MAX_FALSE_BLOCK_RATE = 0.02
MIN_ROLLBACK_SUCCESS = 0.99


@dataclass
class SloReport:
    joiner_p95_ms: int | None
    leaver_p95_ms: int | None
    mover_p95_ms: int | None
    sod_false_block_rate: float | None
    rollback_success_rate: float | None
    window: tuple[int, int]
    counts: dict = field(default_factory=dict)
    agents: list[AgentSLO] = field(default_factory=list)
    audit: dict | None = None

    def meets_targets(self) -> dict[str, bool | None]:
        """Per-metric verdict; None where the metric is absent."""

        def le(v, bound):
            return None if v is None else v <= bound

        return {
            "joiner_p95_ms": le(self.joiner_p95_ms, TARGETS_MS["joiner"]),
            "leaver_p95_ms": le(self.leaver_p95_ms, TARGETS_MS["leaver"]),
            "mover_p95_ms": le(self.mover_p95_ms, TARGETS_MS["mover"]),
            "sod_false_block_rate": le(self.sod_false_block_rate, MAX_FALSE_BLOCK_RATE),
            "rollback_success_rate": None
            if self.rollback_success_rate is None
            else self.rollback_success_rate >= MIN_ROLLBACK_SUCCESS,
        }

    def to_dict(self) -> dict:
        return {
            "joiner_p95_ms": self.joiner_p95_ms,
            "leaver_p95_ms": self.leaver_p95_ms,
            "mover_p95_ms": self.mover_p95_ms,
            "sod_false_block_rate": self.sod_false_block_rate,
            "rollback_success_rate": self.rollback_success_rate,
            "window": {"start": self.window[0], "end": self.window[1], "label": "run span"},
            "targets": {
                **{f"{k}_p95_ms": v for k, v in TARGETS_MS.items()},
                "sod_false_block_rate": MAX_FALSE_BLOCK_RATE,
                "rollback_success_rate": MIN_ROLLBACK_SUCCESS,
            },
            "meets_targets": self.meets_targets(),
            "counts": self.counts,
            "agents": [a.to_dict() for a in self.agents],
            "audit": self.audit,
        }

    def to_text(self) -> str:
        def fmt(v):
            return "absent" if v is None else str(v)

        lines = [
            f"window            {self.window[0]}..{self.window[1]} ms (run span)",
            f"joiner_p95_ms     {fmt(self.joiner_p95_ms)}",
            f"leaver_p95_ms     {fmt(self.leaver_p95_ms)}",
            f"mover_p95_ms      {fmt(self.mover_p95_ms)}",
            f"sod_false_block   {fmt(self.sod_false_block_rate)}",
            f"rollback_success  {fmt(self.rollback_success_rate)}",
        ]
        for k, v in sorted(self.counts.items()):
            lines.append(f"  {k:<22} {v}")
        for a in self.agents:
            lines.append(
                f"agent {a.agent_code}: ack_p95={fmt(a.ack_p95_ms)} coverage={a.coverage:.4f} "
                f"false_alert={fmt(a.false_alert_rate)}"
            )
        if self.audit is not None:
            lines.append(f"audit violations  {self.audit.get('violations', 0)}")
        return "\n".join(lines)


def task_latencies(records: Iterable[dict]) -> dict[str, list[int]]:
    """completed_at - effective_ts of every closed task, per reason."""
    out: dict[str, list[int]] = {k: [] for k in TARGETS_MS}
    for r in records:
        if r.get("record") == "jml_task" and r["final_state"] == "closed":
            out[r["reason"]].append(r["completed_at"] - r["effective_ts"])
    return out


def compute_slo_report(items: Iterable, *, audit: AuditReport | None = None) -> SloReport:
    items = list(items)
    records = [x for x in items if isinstance(x, dict)]
    events = [x for x in items if isinstance(x, SignedEvent)]
    end = max((r["at"] for r in records if r.get("record") == "scenario_end"), default=None)
    if end is None:
        end = max([0, *(r.get("at", 0) for r in records), *(e.emitted_at for e in events)])
    window = (0, end)

    lat = task_latencies(records)
    tasks = [r for r in records if r.get("record") == "jml_task"]
    blocks = {r["violation_id"] for r in records if r.get("record") == "sod_block"}
    unjustified = {
        r["violation_id"]
        for r in records
        if r.get("record") == "adjudication" and not r["justified"] and r["violation_id"] in blocks
    }
    rollbacks = [r for r in records if r.get("record") == "rollback"]
    successes = sum(1 for r in rollbacks if r["success"])

    agents: list[AgentSLO] = []
    for code in sorted({r["agent"] for r in records if r.get("record") == "applicable"}):
        try:
            agents.append(evaluate_slos(code, records, window))
        except EmptyWindow:
            pass

    states: dict[str, int] = {}
    for t in tasks:
        states[t["final_state"]] = states.get(t["final_state"], 0) + 1
    counts = {
        "events": len(events),
        "tasks": len(tasks),
        **{f"tasks_{k}": v for k, v in sorted(states.items())},
        **{f"closed_{k}": len(v) for k, v in lat.items()},
        "sla_breaches": sum(1 for e in events if e.oc_type == "SlaBreach"),
        "sod_blocks": len(blocks),
        "sod_blocks_unjustified": len(unjustified),
        "rollbacks": len(rollbacks),
        "rollbacks_succeeded": successes,
        "scim_mutations": sum(1 for e in events if e.oc_type == "SCIMMutation"),
        "incidents": sum(1 for e in events if e.oc_type == "IncidentCase"),
    }
    return SloReport(
        joiner_p95_ms=nearest_rank(lat["joiner"]),
        leaver_p95_ms=nearest_rank(lat["leaver"]),
        mover_p95_ms=nearest_rank(lat["mover"]),
        sod_false_block_rate=len(unjustified) / len(blocks) if blocks else None,
        rollback_success_rate=successes / len(rollbacks) if rollbacks else None,
        window=window,
        counts=counts,
        agents=agents,
        audit=None if audit is None else {"events_checked": audit.events_checked,
                                          "violations": len(audit.violations), **audit.summary},
    )
