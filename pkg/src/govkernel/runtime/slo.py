"""Agent service levels and rollback criteria."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from govkernel.errors import EmptyWindow
from govkernel.runtime.agents import RUNNABLE, AgentSpec, Lifecycle


def nearest_rank(values: Sequence[int | float], pct: int = 95):
    """Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value.

    Integer arithmetic only, so there is no float rounding at the rank boundary.
    Returns None for an empty sample.
    """
    n = len(values)
    if n == 0:
        return None
    rank = max(1, (pct * n + 99) // 100)
    return sorted(values)[rank - 1]


@dataclass(frozen=True)
class AgentSLO:
    agent_code: str
    ack_p95_ms: int | None
    false_alert_rate: float | None
    coverage: float
    window: tuple[int, int]
    override_rate: float | None = None
    acks: int = 0
    dispositions: int = 0
    applicable: int = 0

    def to_dict(self) -> dict:
        return {
            "agent_code": self.agent_code,
            "ack_p95_ms": self.ack_p95_ms,
            "false_alert_rate": self.false_alert_rate,
            "coverage": self.coverage,
            "override_rate": self.override_rate,
            "window": list(self.window),
            "acks": self.acks,
            "dispositions": self.dispositions,
            "applicable": self.applicable,
        }


def _in(window: tuple[int, int], t: int) -> bool:
    return window[0] <= t <= window[1]


def evaluate_slos(agent_code: str, records: Iterable[dict], window: tuple[int, int]) -> AgentSLO:
    """Compute ack p95, false-alert rate, coverage and override rate from log records.

    Record shapes: ``applicable`` {agent, trace_id, at}; ``agent_ack`` {agent,
    trace_id, received_at, acked_at}; ``disposition`` {agent, correct, at};
    ``proposal`` {agent, outcome, at}.
    """
    applicable: set[str] = set()
    processed: set[str] = set()
    latencies: list[int] = []
    dispositions = incorrect = 0
    proposals = rejected = 0
    for r in records:
        if r.get("agent") != agent_code:
            continue
        kind = r.get("record")
        if kind == "applicable" and _in(window, r["at"]):
            applicable.add(r["trace_id"])
        elif kind == "agent_ack" and _in(window, r["received_at"]):
            processed.add(r["trace_id"])
            latencies.append(r["acked_at"] - r["received_at"])
        elif kind == "disposition" and _in(window, r["at"]):
            dispositions += 1
            incorrect += not r["correct"]
        elif kind == "proposal" and _in(window, r["at"]):
            proposals += 1
            rejected += r["outcome"] == "rejected"
    if not applicable:
        raise EmptyWindow(f"{agent_code}: no applicable events in {window}")
    return AgentSLO(
        agent_code=agent_code,
        ack_p95_ms=nearest_rank(latencies),
        false_alert_rate=incorrect / dispositions if dispositions else None,
        coverage=len(processed & applicable) / len(applicable),
        window=window,
        override_rate=rejected / proposals if proposals else None,
        acks=len(latencies),
        dispositions=dispositions,
        applicable=len(applicable),
    )


@dataclass(frozen=True)
class RollbackPolicy:
    max_false_alert_rate: float = 0.2
    max_ack_p95_ms: int = 60_000
    max_override_rate: float = 0.2
    require_valid_attestation: bool = True

    def __post_init__(self):
        for name in ("max_false_alert_rate", "max_override_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.max_ack_p95_ms < 0:
            raise ValueError("max_ack_p95_ms must be nonnegative")


@dataclass(frozen=True)
class LifecycleDecision:
    agent_code: str
    before: Lifecycle
    after: Lifecycle
    tripped: tuple[str, ...]

    @property
    def rolled_back(self) -> bool:
        return self.after is Lifecycle.ROLLED_BACK

    def to_dict(self) -> dict:
        return {
            "agent_code": self.agent_code,
            "before": self.before.value,
            "after": self.after.value,
            "tripped": list(self.tripped),
        }


def rollback_triggers(slo: AgentSLO, policy: RollbackPolicy, provenance_ok: bool) -> list[str]:
    out = []
    if slo.false_alert_rate is not None and slo.false_alert_rate > policy.max_false_alert_rate:
        out.append("false_alert_rate")
    if slo.ack_p95_ms is not None and slo.ack_p95_ms > policy.max_ack_p95_ms:
        out.append("ack_p95")
    if slo.override_rate is not None and slo.override_rate > policy.max_override_rate:
        out.append("override_rate")
    if policy.require_valid_attestation and not provenance_ok:
        out.append("provenance")
    return out


def apply_rollback_criteria(
    spec: AgentSpec, slo: AgentSLO, policy: RollbackPolicy, provenance_ok: bool
) -> tuple[AgentSpec, LifecycleDecision]:
    if spec.lifecycle not in RUNNABLE:
        raise ValueError(f"{spec.agent_code} is not running ({spec.lifecycle.value})")
    tripped = rollback_triggers(slo, policy, provenance_ok)
    after = Lifecycle.ROLLED_BACK if tripped else spec.lifecycle
    return replace(spec, lifecycle=after), LifecycleDecision(
        spec.agent_code, spec.lifecycle, after, tuple(tripped)
    )
