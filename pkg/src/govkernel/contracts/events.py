"""Signed Output Contract instances: idempotency keys, signing, verification, JSONL."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Any, Iterable, Iterator

from govkernel.canonical import canonical_bytes, canonical_json
from govkernel.contracts.schema import ContractRegistry, SchemaDef
from govkernel.envelope import Envelope, IdSource, random_hex128
from govkernel.errors import MissingRecipeField, ParseError, SchemaViolation, UnknownIdentity
from govkernel.identity import AgentCredentials, IdentityRegistry
from govkernel.reports import Finding, Verdict

UNIT_SEPARATOR = b"\x1f"


def _recipe_value(v: Any) -> bytes:
    if isinstance(v, str):
        return v.encode("utf-8")
    if isinstance(v, bool) or v is None or isinstance(v, (dict, list, float)):
        return canonical_bytes(v)
    return str(v).encode("utf-8")


def idempotency_key(payload: dict, schema: SchemaDef, emitted_at: int) -> str:
    """sha256 over recipe values (0x1F-joined) and the time-floor bucket, hex."""
    parts: list[bytes] = []
    for name in schema.idempotency_recipe:
        if name not in payload:
            raise MissingRecipeField(name)
        parts.append(_recipe_value(payload[name]))
    if schema.floor_seconds is not None:
        parts.append(str(emitted_at // (schema.floor_seconds * 1000)).encode())
    return hashlib.sha256(UNIT_SEPARATOR.join(parts)).hexdigest()


@dataclass(frozen=True)
class SignedEvent:
    oc_type: str
    version: int
    payload: dict
    idempotency_key: str
    trace_id: str
    mission_id: str
    thread_id: str
    envelope: Envelope
    signature: bytes
    producer: str
    emitted_at: int

    def signing_bytes(self) -> bytes:
        return canonical_bytes(
            {
                "oc_type": self.oc_type,
                "version": self.version,
                "payload": self.payload,
                "idempotency_key": self.idempotency_key,
                "trace_id": self.trace_id,
                "mission_id": self.mission_id,
                "thread_id": self.thread_id,
                "emitted_at": self.emitted_at,
            }
        )

    def to_dict(self) -> dict:
        return {
            "oc_type": self.oc_type,
            "version": self.version,
            "payload": self.payload,
            "idempotency_key": self.idempotency_key,
            "trace_id": self.trace_id,
            "mission_id": self.mission_id,
            "thread_id": self.thread_id,
            "envelope": self.envelope.to_dict(),
            "signature": self.signature.hex(),
            "producer": self.producer,
            "emitted_at": self.emitted_at,
        }

    def to_line(self) -> str:
        return canonical_json(self.to_dict())

    def canonical(self) -> bytes:
        return self.to_line().encode("utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "SignedEvent":
        return cls(
            oc_type=d["oc_type"],
            version=d["version"],
            payload=d["payload"],
            idempotency_key=d["idempotency_key"],
            trace_id=d["trace_id"],
            mission_id=d["mission_id"],
            thread_id=d["thread_id"],
            envelope=Envelope.from_dict(d["envelope"]),
            signature=bytes.fromhex(d["signature"]),
            producer=d["producer"],
            emitted_at=d["emitted_at"],
        )

    def node_id(self, schema: SchemaDef | None = None) -> str:
        template = schema.evidence_uri if schema else "uri://events/{trace_id}"
        return template.format(trace_id=self.trace_id, **self.payload)


def sign_event(
    contracts: ContractRegistry,
    identities: IdentityRegistry,
    payload: dict,
    oc_type: str,
    env: Envelope,
    creds: AgentCredentials,
    now: int,
    *,
    version: int | None = None,
    id_source: IdSource = random_hex128,
) -> SignedEvent:
    """Validate, key, and sign a payload; the envelope gets the signer's provenance."""
    schema = contracts.get(oc_type, version)
    report = contracts.validate_event(payload, oc_type, schema.version)
    if not report.ok:
        raise SchemaViolation(report)
    if not identities.is_active(creds.spiffe_uri):
        raise UnknownIdentity(creds.spiffe_uri)
    env = env.with_provenance(creds.provenance())
    unsigned = SignedEvent(
        oc_type=oc_type,
        version=schema.version,
        payload=payload,
        idempotency_key=idempotency_key(payload, schema, now),
        trace_id=f"trace-{id_source()}",
        mission_id=env.mission_id,
        thread_id=env.thread_id,
        envelope=env,
        signature=b"",
        producer=creds.spiffe_uri,
        emitted_at=now,
    )
    return replace(unsigned, signature=creds.keypair.sign(unsigned.signing_bytes()))


def verify_event(
    ev: SignedEvent, contracts: ContractRegistry, identities: IdentityRegistry
) -> Verdict:
    """Schema validity, signature and producer provenance at signing time."""
    reasons: list[str] = []
    details: list[tuple[str, str]] = []
    try:
        schema = contracts.get(ev.oc_type, ev.version)
    except LookupError:
        return Verdict.of(["UnknownSchema"], [(ev.trace_id, f"{ev.oc_type} v{ev.version}")])
    report = contracts.validate_event(ev.payload, ev.oc_type, ev.version)
    if not report.ok:
        reasons.append("SchemaInvalid")
        details.extend((ev.trace_id, f"{f.code}@{f.path}") for f in report.findings)
    else:
        try:
            if idempotency_key(ev.payload, schema, ev.emitted_at) != ev.idempotency_key:
                reasons.append("IdempotencyKeyMismatch")
        except MissingRecipeField:
            reasons.append("IdempotencyKeyMismatch")
    prov = ev.envelope.provenance
    if prov.producer_spiffe != ev.producer:
        reasons.append("ProducerMismatch")
    if ev.envelope.mission_id != ev.mission_id or ev.envelope.thread_id != ev.thread_id:
        reasons.append("EnvelopeMismatch")
    sig_ok = identities.verify_signature(prov.signing_kid, ev.signing_bytes(), ev.signature)
    prov_verdict = identities.verify_provenance(prov, sig_ok, ev.emitted_at, signed_at=ev.emitted_at)
    return Verdict.of(reasons, details).merge(prov_verdict)


# --- JSON Lines ------------------------------------------------------------


def is_record(obj: dict) -> bool:
    """Log lines are either SignedEvents or bookkeeping records (``record`` key)."""
    return "record" in obj


def parse_log(lines: Iterable[str]) -> Iterator[SignedEvent | dict]:
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(n, str(exc)) from None
        if not isinstance(obj, dict):
            raise ParseError(n, "line is not a JSON object")
        if is_record(obj):
            yield obj
            continue
        try:
            yield SignedEvent.from_dict(obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(n, f"malformed event: {exc!r}") from None


def read_log(path) -> list[SignedEvent | dict]:
    with open(path, encoding="utf-8") as fh:
        return list(parse_log(fh))


def write_log(path, items: Iterable[SignedEvent | dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(item.to_line() if isinstance(item, SignedEvent) else canonical_json(item))
            fh.write("\n")


def findings_of(ev: SignedEvent, contracts: ContractRegistry) -> list[Finding]:
    return list(contracts.validate_event(ev.payload, ev.oc_type, ev.version).findings)
