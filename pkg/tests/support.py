"""Builders shared by the test modules."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import replace

from govkernel.orchestrator.delivery import Response
from govkernel.sim.config import ALERT_TYPES, HRIS_TYPES, EndpointProfile, builtin_config


def quiet_config(**overrides):
    """Nominal config with every generator, desk randomness and endpoint fault switched off."""
    cfg = builtin_config("nominal")
    cfg = replace(
        cfg,
        hris_rates={t: 0.0 for t in HRIS_TYPES},
        alert_rates={t: 0.0 for t in ALERT_TYPES},
        soc=replace(cfg.soc, bursts_per_hour=0.0),
        employees=0,
        default_endpoint=EndpointProfile("*", (100, 100)),
        endpoints=(),
        sod_deny_rate=0.0,
        dispute_rate=0.0,
        adjudication=0.0,
        approval_latency_ms=(60_000, 60_000),
    )
    return replace(cfg, **overrides)


class FaultPlan:
    """Which forward mutation fails, shared by every endpoint of one run.

    Forward mutations are numbered by first arrival; the one at ``position`` fails
    on its first attempt (``transient``) or on every attempt (``permanent``).
    """

    def __init__(self, mode: str = "none", position: int | None = None):
        self.mode = mode
        self.position = position
        self.order: list[str] = []
        self.attempts: Counter = Counter()

    def fails(self, doc: dict) -> bool:
        if "rollback_of" in doc["payload"]:
            return False
        key = doc["idempotency_key"]
        if key not in self.order:
            self.order.append(key)
        self.attempts[key] += 1
        if self.mode == "none" or self.order.index(key) != self.position:
            return False
        return self.mode == "permanent" or self.attempts[key] == 1


class ScriptedEndpoint:
    """Fixed latency, failures from a ``FaultPlan``, each key applied at most once."""

    def __init__(self, apply, plan: FaultPlan | None = None, latency_ms: int = 100):
        self.apply = apply
        self.plan = plan or FaultPlan()
        self.latency_ms = latency_ms
        self.applied: set[str] = set()

    def request(self, body: bytes, now: int) -> Response:
        doc = json.loads(body)
        if self.plan.fails(doc):
            return Response(503, self.latency_ms)
        if doc["idempotency_key"] not in self.applied:
            self.apply(doc)
            self.applied.add(doc["idempotency_key"])
        return Response(200, self.latency_ms)


def hris(employee_id: str, event_type: str, attrs: dict, effective_ts: int, n: int = 0) -> dict:
    return {
        "event_id": f"hris-t{n:04d}",
        "event_type": event_type,
        "employee_id": employee_id,
        "name": f"Employee {employee_id}",
        "department": attrs["department"],
        "job_title": attrs["job_title"],
        "location": attrs.get("location", "NYC"),
        "manager_id": None,
        "employment_type": attrs.get("employment_type", "employee"),
        "start_date": None,
        "end_date": "2026-01-05" if event_type in ("terminate", "extended_leave") else None,
        "effective_ts": effective_ts,
    }


def alert(alert_id: str, kind: str, ident: str, asset: str, sev: float, conf: float, t: int) -> dict:
    source = {"login_failure": "idp", "geo_anomaly": "siem", "token_misuse": "idp", "malware": "edr"}.get(kind, "siem")
    return {
        "alert_id": alert_id, "source": source, "alert_type": kind, "identity_id": ident, "asset_id": asset,
        "severity": sev, "confidence": conf, "observed_at": t,
    }


def records(log, kind: str) -> list[dict]:
    return [x for x in log if isinstance(x, dict) and x.get("record") == kind]


def events(log, oc_type: str | None = None) -> list:
    return [x for x in log if not isinstance(x, dict) and (oc_type is None or x.oc_type == oc_type)]
