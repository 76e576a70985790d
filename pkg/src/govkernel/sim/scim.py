"""Simulated SCIM directory and action endpoints with seeded fault injection."""

from __future__ import annotations

import json
from typing import Callable, Iterable, Mapping

import numpy as np

from govkernel.jml.model import Account
from govkernel.jml.planning import DirectoryError, Mutation, apply_mutation
from govkernel.orchestrator.delivery import Response
from govkernel.sim.config import EndpointProfile

FAILURE_STATUSES = (429, 500, 502, 503)


def mutation_of(payload: Mapping) -> Mutation:
    body = payload.get("scim_payload") or {}
    return Mutation(
        payload["target_system"],
        payload["operation_type"],
        body.get("active"),
        tuple(body.get("add", ())),
        tuple(body.get("remove", ())),
        payload.get("reason", "joiner"),
        payload.get("rollback_of"),
    )


class Directory:
    """employee_id -> target_system -> account, shared by every SCIM endpoint."""

    def __init__(self, baseline: Mapping[str, Mapping[str, Account]] | None = None):
        self._state: dict[str, dict[str, Account]] = {
            e: dict(accts) for e, accts in (baseline or {}).items()
        }

    def observe(self, employee_id: str) -> dict[str, Account]:
        return dict(self._state.get(employee_id, {}))

    def apply(self, employee_id: str, m: Mutation) -> None:
        after = apply_mutation(self._state.get(employee_id, {}), m)
        if after:
            self._state[employee_id] = after
        else:
            self._state.pop(employee_id, None)

    def snapshot(self) -> dict:
        return {
            e: {s: a.to_dict() for s, a in sorted(accts.items())}
            for e, accts in sorted(self._state.items())
            if accts
        }

    def employees(self) -> list[str]:
        return sorted(self._state)


def replay_directory(baseline: Mapping[str, Mapping[str, Account]], mutations: Iterable[Mapping]) -> Directory:
    """A fresh directory with the given SCIMMutation payloads applied in order."""
    d = Directory(baseline)
    for p in mutations:
        d.apply(p["employee_id"], mutation_of(p))
    return d


class SimEndpoint:
    """One target system. Every attempt draws latency and failure from its own stream.

    A duplicated delivery hands the same request to the consumer twice; the
    consumer applies each idempotency key at most once.
    """

    def __init__(
        self,
        profile: EndpointProfile,
        rng: np.random.Generator,
        apply: Callable[[dict], None],
        record: Callable[[dict], None] | None = None,
    ):
        self.profile = profile
        self.rng = rng
        self._apply = apply
        self._record = record
        self.applied_keys: set[str] = set()
        self.applied = 0
        self.deduplicated = 0

    def _log(self, ev: dict, copy: int, outcome: str, status: int, now: int) -> None:
        if self._record is not None:
            self._record(
                {
                    "record": "endpoint_request",
                    "system": self.profile.target_system,
                    "key": ev["idempotency_key"],
                    "trace_id": ev["trace_id"],
                    "copy": copy,
                    "outcome": outcome,
                    "status": status,
                    "at": now,
                }
            )

    def request(self, body: bytes, now: int) -> Response:
        ev = json.loads(body)
        p = self.profile
        lo, hi = p.latency_ms
        latency = int(self.rng.integers(lo, hi + 1))
        fail_p = p.rollback_failure_rate if "rollback_of" in ev["payload"] else p.failure_rate
        failed = bool(self.rng.random() < fail_p)
        code = int(self.rng.choice(FAILURE_STATUSES))
        dup = bool(self.rng.random() < p.duplicate_delivery_rate)
        if failed:
            self._log(ev, 0, "failed", code, now)
            return Response(code, latency)
        status = 200
        for copy in range(2 if dup else 1):
            key = ev["idempotency_key"]
            if key in self.applied_keys:
                self.deduplicated += 1
                self._log(ev, copy, "deduplicated", 200, now)
                continue
            try:
                self._apply(ev)
            except DirectoryError as exc:
                self._log(ev, copy, "rejected", exc.status, now)
                return Response(exc.status, latency)
            self.applied_keys.add(key)
            self.applied += 1
            self._log(ev, copy, "applied", 200, now)
        return Response(status, latency)
