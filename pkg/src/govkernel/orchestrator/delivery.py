"""Exactly-once, per-key ordered, cosign-gated delivery of state-changing events."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Hashable, Iterable, Protocol, Sequence, TypeVar

from govkernel.contracts.events import SignedEvent, sign_event, verify_event
from govkernel.contracts.schema import ContractRegistry
from govkernel.envelope import (
    Approval,
    Envelope,
    IdSource,
    child_envelope,
    cosign_satisfied,
    random_hex128,
    record_cosign,
)
from govkernel.errors import UnknownPending, VerificationFailed, WrongRole
from govkernel.identity import AgentCredentials, IdentityRegistry
from govkernel.sim.clock import SimClock


class Status(str, Enum):
    PENDING_APPROVAL = "pending_approval"
    QUEUED = "queued"
    IN_FLIGHT = "in_flight"
    ACKED = "acked"
    FAILED_PERMANENT = "failed_permanent"


TERMINAL = (Status.ACKED, Status.FAILED_PERMANENT)


@dataclass(frozen=True)
class BackoffPolicy:
    base_ms: int = 1000
    factor: float = 2.0
    cap_ms: int = 60_000
    max_retries: int = 5

    def __post_init__(self):
        if self.base_ms <= 0 or self.factor < 1 or self.cap_ms < 0 or self.max_retries < 0:
            raise ValueError(f"invalid backoff policy {self}")

    def delay(self, k: int) -> int:
        """Wait before retry k+1, i.e. after the (k+1)-th failed attempt."""
        try:
            raw = self.base_ms * self.factor**k
        except OverflowError:
            return self.cap_ms
        return int(min(raw, self.cap_ms))


@dataclass(frozen=True)
class Response:
    status: int
    latency_ms: int

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300


class Endpoint(Protocol):
    def request(self, body: bytes, now: int) -> Response: ...


@dataclass
class DeliveryState:
    idempotency_key: str
    trace_id: str
    oc_type: str
    ordering_key: str
    status: Status
    submitted_at: int
    event: SignedEvent
    attempts: int = 0
    next_retry_at: int = 0
    release: SignedEvent | None = None
    reason: str | None = None
    history: list[tuple[str, int]] = field(default_factory=list)
    ticket_trace_id: str | None = None

    @property
    def envelope(self) -> Envelope:
        return self.release.envelope if self.release is not None else self.event.envelope


@dataclass
class PendingAction:
    event: SignedEvent
    required_roles: tuple[str, ...]
    collected: list[Approval]
    created_at: int
    envelope: Envelope


Listener = Callable[[DeliveryState, int], None]


class Orchestrator:
    """Single logical orchestrator. All time comes from ``clock``."""

    def __init__(
        self,
        contracts: ContractRegistry,
        identities: IdentityRegistry,
        creds: AgentCredentials,
        clock: SimClock,
        endpoint_for: Callable[[SignedEvent], Endpoint],
        sink: Callable[[SignedEvent | dict], None],
        *,
        backoff: BackoffPolicy = BackoffPolicy(),
        approval_timeout_ms: int | None = None,
        id_source: IdSource = random_hex128,
        verify: bool = True,
    ):
        self.contracts = contracts
        self.identities = identities
        self.creds = creds
        self.clock = clock
        self.endpoint_for = endpoint_for
        self.sink = sink
        self.backoff = backoff
        self.approval_timeout_ms = approval_timeout_ms
        self.id_source = id_source
        self.verify = verify
        self.states: dict[str, DeliveryState] = {}
        self.pending: dict[str, PendingAction] = {}
        self.listeners: list[Listener] = []
        self._queues: dict[str, deque[str]] = {}
        self._scheduled: set[str] = set()
        self.duplicate_submits = 0

    # -- bookkeeping

    def _transition(self, st: DeliveryState, status: Status, **extra) -> None:
        now = self.clock.now
        st.status = status
        st.history.append((status.value, now))
        rec = {
            "record": "delivery",
            "key": st.idempotency_key,
            "trace_id": st.trace_id,
            "oc_type": st.oc_type,
            "ordering_key": st.ordering_key,
            "status": status.value,
            "attempt": st.attempts,
            "at": now,
        }
        rec.update(extra)
        self.sink(rec)
        for fn in self.listeners:
            fn(st, now)

    def _sign(self, oc_type: str, payload: dict, env: Envelope) -> SignedEvent:
        ev = sign_event(
            self.contracts, self.identities, payload, oc_type, env, self.creds, self.clock.now,
            id_source=self.id_source,
        )
        self.sink(ev)
        return ev

    def _open_ticket(self, st: DeliveryState, reason: str) -> None:
        schema = self.contracts.get(st.oc_type, st.event.version)
        node = st.event.node_id(schema)
        env = child_envelope(
            st.event.envelope, "Orchestrator", "open_ticket", id_source=self.id_source
        ).with_decision(evidence_refs=[node])
        ticket = self._sign(
            "OpenTicket",
            {
                "ticket_id": f"tkt-{self.id_source()[:16]}",
                "reason": reason,
                "subject_ref": st.trace_id,
                "summary": f"{st.oc_type} {st.idempotency_key[:12]} {reason} after {st.attempts} attempt(s)",
                "opened_at": self.clock.now,
            },
            env,
        )
        st.ticket_trace_id = ticket.trace_id

    # -- submission

    def submit(self, ev: SignedEvent) -> DeliveryState:
        now = self.clock.now
        existing = self.states.get(ev.idempotency_key)
        if existing is not None:
            self.duplicate_submits += 1
            self.sink({"record": "duplicate_submit", "key": ev.idempotency_key, "trace_id": ev.trace_id, "at": now})
            return existing
        if self.verify:
            v = verify_event(ev, self.contracts, self.identities)
            if not v.passed:
                raise VerificationFailed(v)
        schema = self.contracts.get(ev.oc_type, ev.version)
        if not schema.state_changing:
            raise ValueError(f"{ev.oc_type} is not a state-changing contract")
        okey = ev.payload.get(schema.ordering_key_field) if schema.ordering_key_field else None
        st = DeliveryState(
            ev.idempotency_key, ev.trace_id, ev.oc_type, str(okey or ev.idempotency_key),
            Status.QUEUED, now, ev, next_retry_at=now,
        )
        self.states[st.idempotency_key] = st
        self._queues.setdefault(st.ordering_key, deque()).append(st.idempotency_key)
        env = ev.envelope
        if env.cosign_constraints() and not cosign_satisfied(env, self.identities):
            roles = tuple(dict.fromkeys(r for c in env.cosign_constraints() for r in c.required_roles))
            self.pending[st.idempotency_key] = PendingAction(ev, roles, list(env.approvals), now, env)
            self._transition(st, Status.PENDING_APPROVAL, required_roles=list(roles))
            if self.approval_timeout_ms is not None:
                self.clock.after(self.approval_timeout_ms, self._expire, st.idempotency_key)
        else:
            self._transition(st, Status.QUEUED)
        self._pump(st.ordering_key)
        return st

    # -- approvals

    def approve(self, key: str, approval: Approval) -> DeliveryState:
        pa = self.pending.get(key)
        if pa is None:
            raise UnknownPending(key)
        if approval.role not in pa.required_roles:
            raise WrongRole(f"{approval.role} not in {list(pa.required_roles)}")
        env = record_cosign(pa.envelope, approval, self.identities)
        pa.envelope = env
        pa.collected.append(approval)
        st = self.states[key]
        schema = self.contracts.get(st.oc_type, st.event.version)
        self.sink(
            {
                "record": "approval",
                "action_node": st.event.node_id(schema),
                "task_id": env.task_id,
                "thread_id": env.thread_id,
                "trace_id": st.trace_id,
                "approval": {
                    "role": approval.role,
                    "approver_id": approval.approver_id,
                    "approved_at": approval.approved_at,
                    "signature": approval.signature.hex(),
                },
                "at": self.clock.now,
            }
        )
        if cosign_satisfied(env, self.identities):
            del self.pending[key]
            st.release = self._release(st, env, schema)
            self._transition(st, Status.QUEUED, released_by=st.release.trace_id)
            self._pump(st.ordering_key)
        return st

    def approve_task(self, task_id: str, approval: Approval) -> list[DeliveryState]:
        """Apply one approval to every pending action proposed under ``task_id``."""
        keys = [k for k, pa in self.pending.items() if pa.envelope.task_id == task_id]
        out = []
        for k in keys:
            if approval.role in self.pending[k].required_roles:
                out.append(self.approve(k, approval))
        return out

    def _release(self, st: DeliveryState, env: Envelope, schema) -> SignedEvent:
        asset = st.event.payload.get(schema.asset_field) if schema.asset_field else None
        node = st.event.node_id(schema)
        refs = list(dict.fromkeys([*env.decision_basis.evidence_refs, node]))
        return self._sign(
            "ActionRelease",
            {
                "released_trace_id": st.trace_id,
                "released_node": node,
                "released_oc_type": st.oc_type,
                "released_idempotency_key": st.idempotency_key,
                "asset": asset,
                "approvals": [
                    {"role": a.role, "approver_id": a.approver_id, "approved_at": a.approved_at}
                    for a in env.approvals
                ],
            },
            env.with_decision(evidence_refs=refs),
        )

    def _expire(self, key: str) -> None:
        st = self.states[key]
        if st.status is not Status.PENDING_APPROVAL:
            return
        self.pending.pop(key, None)
        st.reason = "ApprovalTimeout"
        self._transition(st, Status.FAILED_PERMANENT, reason="ApprovalTimeout")
        self._open_ticket(st, "ApprovalTimeout")
        self._pump(st.ordering_key)

    # -- delivery loop

    def _pump(self, okey: str) -> None:
        q = self._queues.get(okey)
        while q:
            st = self.states[q[0]]
            if st.status in TERMINAL:
                q.popleft()
                continue
            if st.status is Status.QUEUED and st.idempotency_key not in self._scheduled:
                self._scheduled.add(st.idempotency_key)
                self.clock.schedule(max(self.clock.now, st.next_retry_at), self._attempt, st.idempotency_key)
            return  # head pending, queued or in flight: the key waits

    def _attempt(self, key: str) -> None:
        self._scheduled.discard(key)
        st = self.states[key]
        if st.status is not Status.QUEUED:
            return
        ok = cosign_satisfied(st.envelope, self.identities)
        if not ok:  # defensive: a gated event can never go out
            self._transition(st, Status.PENDING_APPROVAL, cosign_ok=False)
            return
        st.attempts += 1
        self._transition(st, Status.IN_FLIGHT, cosign_ok=True)
        resp = self.endpoint_for(st.event).request(st.event.canonical(), self.clock.now)
        self.clock.after(resp.latency_ms, self._complete, key, resp.status)

    def _complete(self, key: str, status: int) -> None:
        st = self.states[key]
        if 200 <= status < 300:
            self._transition(st, Status.ACKED, http=status)
        elif st.attempts >= self.backoff.max_retries + 1:
            st.reason = "RetriesExhausted"
            self._transition(st, Status.FAILED_PERMANENT, http=status, reason="RetriesExhausted")
            self._open_ticket(st, "RetriesExhausted")
        else:
            st.next_retry_at = self.clock.now + self.backoff.delay(st.attempts - 1)
            self._transition(st, Status.QUEUED, http=status, next_retry_at=st.next_retry_at)
        self._pump(st.ordering_key)

    # -- inspection

    def unsettled(self) -> list[DeliveryState]:
        return [s for s in self.states.values() if s.status not in TERMINAL]


T = TypeVar("T")


def ordered_drain(queue: Sequence[T], ordering_key: Callable[[T], Hashable]) -> list[T]:
    """A processing order that keeps per-key FIFO: round-robin over keys.

    Keys are visited in order of first appearance; within a key, submission
    order is preserved. Any interleaving with that property is valid.
    """
    lanes: dict[Hashable, deque[T]] = {}
    for item in queue:
        lanes.setdefault(ordering_key(item), deque()).append(item)
    out: list[T] = []
    while lanes:
        for k in list(lanes):
            out.append(lanes[k].popleft())
            if not lanes[k]:
                del lanes[k]
    return out


def per_key_subsequences(items: Iterable[tuple[Hashable, T]]) -> dict[Hashable, list[T]]:
    out: dict[Hashable, list[T]] = {}
    for k, v in items:
        out.setdefault(k, []).append(v)
    return out
