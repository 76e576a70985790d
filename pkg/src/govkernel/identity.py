"""Agent and approver identities, signing keys and build attestations.

Two detached-signature schemes are available: Ed25519 (default) and a
transparent HMAC-SHA256 scheme whose "public" key is the shared secret, which
lets tests forge or corrupt signatures on purpose.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass, replace
from enum import Enum
from urllib.parse import urlparse

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from govkernel.canonical import canonical_bytes, canonical_json
from govkernel.envelope import Approval, Provenance, approval_message
from govkernel.errors import (
    DuplicateIdentity,
    RevokedSubject,
    UnknownIdentity,
    UnknownKey,
    UnknownSubject,
)
from govkernel.reports import Verdict

FOREVER = 2**62

ED25519 = "ed25519"
HMAC_SHA256 = "hmac-sha256"


def _ed25519_sign(private: bytes, msg: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(private).sign(msg)


def _ed25519_verify(public: bytes, msg: bytes, sig: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig, msg)
    except (InvalidSignature, ValueError):
        return False
    return True


def _hmac_sign(private: bytes, msg: bytes) -> bytes:
    return hmac.new(private, msg, hashlib.sha256).digest()


def _hmac_verify(public: bytes, msg: bytes, sig: bytes) -> bool:
    return hmac.compare_digest(_hmac_sign(public, msg), sig)


_SCHEMES = {
    ED25519: (_ed25519_sign, _ed25519_verify),
    HMAC_SHA256: (_hmac_sign, _hmac_verify),
}


def verify_bytes(algorithm: str, public: bytes, msg: bytes, sig: bytes) -> bool:
    scheme = _SCHEMES.get(algorithm)
    return scheme is not None and scheme[1](public, msg, sig)


@dataclass(frozen=True)
class KeyPair:
    kid: str
    algorithm: str
    private: bytes
    public: bytes

    def sign(self, msg: bytes) -> bytes:
        return _SCHEMES[self.algorithm][0](self.private, msg)

    @classmethod
    def derive(cls, kid: str, seed: bytes, algorithm: str = ED25519) -> "KeyPair":
        """Deterministic key material from a seed (simulation runs)."""
        material = hashlib.sha256(seed + b"\x1f" + kid.encode()).digest()
        return cls._from_material(kid, material, algorithm)

    @classmethod
    def generate(cls, kid: str, algorithm: str = ED25519) -> "KeyPair":
        return cls._from_material(kid, secrets.token_bytes(32), algorithm)

    @classmethod
    def _from_material(cls, kid: str, material: bytes, algorithm: str) -> "KeyPair":
        if algorithm == HMAC_SHA256:
            return cls(kid, algorithm, material, material)
        if algorithm != ED25519:
            raise ValueError(f"unknown algorithm {algorithm!r}")
        pub = (
            Ed25519PrivateKey.from_private_bytes(material)
            .public_key()
            .public_bytes(Encoding.Raw, PublicFormat.Raw)
        )
        return cls(kid, algorithm, material, pub)

    def registered(self, valid_from: int = 0, valid_to: int = FOREVER) -> "RegisteredKey":
        return RegisteredKey(self.kid, self.public, self.algorithm, valid_from, valid_to)


@dataclass(frozen=True)
class RegisteredKey:
    kid: str
    public_key: bytes
    algorithm: str
    valid_from: int = 0
    valid_to: int = FOREVER

    def to_dict(self) -> dict:
        return {
            "kid": self.kid,
            "public_key": self.public_key.hex(),
            "algorithm": self.algorithm,
            "valid_from": self.valid_from,
            "valid_to": self.valid_to,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegisteredKey":
        return cls(
            d["kid"], bytes.fromhex(d["public_key"]), d["algorithm"], d["valid_from"], d["valid_to"]
        )


class IdentityStatus(str, Enum):
    ACTIVE = "active"
    REVOKED = "revoked"


@dataclass(frozen=True)
class AgentIdentity:
    spiffe_uri: str
    current_kid: str
    status: IdentityStatus = IdentityStatus.ACTIVE
    revoked_at: int | None = None

    def to_dict(self) -> dict:
        return {
            "spiffe_uri": self.spiffe_uri,
            "current_kid": self.current_kid,
            "status": self.status.value,
            "revoked_at": self.revoked_at,
        }


def attestation_name(spiffe_uri: str) -> str:
    """``spiffe://enterprise/orch/icam`` -> ``orch-icam``."""
    path = urlparse(spiffe_uri).path.strip("/")
    return path.replace("/", "-") or urlparse(spiffe_uri).netloc


@dataclass(frozen=True)
class Attestation:
    subject: str
    code_digest: str
    build_ref: str
    issued_at: int
    expires_at: int
    attestor_signature: bytes = b""

    @property
    def uri(self) -> str:
        return f"uri://slsa/attestations/{attestation_name(self.subject)}@sha256:{self.code_digest}"

    def statement(self) -> bytes:
        return canonical_bytes(
            {
                "subject": self.subject,
                "code_digest": self.code_digest,
                "build_ref": self.build_ref,
                "issued_at": self.issued_at,
                "expires_at": self.expires_at,
            }
        )

    def to_dict(self) -> dict:
        return {
            "uri": self.uri,
            "subject": self.subject,
            "code_digest": self.code_digest,
            "build_ref": self.build_ref,
            "issued_at": self.issued_at,
            "expires_at": self.expires_at,
            "attestor_signature": self.attestor_signature.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Attestation":
        return cls(
            d["subject"],
            d["code_digest"],
            d["build_ref"],
            d["issued_at"],
            d["expires_at"],
            bytes.fromhex(d["attestor_signature"]),
        )


@dataclass(frozen=True)
class AgentCredentials:
    """What an agent holds privately: its identity, signing key, attestation."""

    spiffe_uri: str
    keypair: KeyPair
    attestation_ref: str

    def provenance(self) -> Provenance:
        return Provenance(self.spiffe_uri, self.keypair.kid, self.attestation_ref)


class IdentityRegistry:
    """Single logical store of identities, keys and attestations."""

    def __init__(self, attestor: KeyPair | None = None, attestor_public: RegisteredKey | None = None):
        if attestor is None and attestor_public is None:
            raise ValueError("an attestor key (private or public) is required")
        self._attestor = attestor
        self.attestor_key = attestor_public or attestor.registered()  # type: ignore[union-attr]
        self._identities: dict[str, AgentIdentity] = {}
        self._keys: dict[str, RegisteredKey] = {}
        self._key_owner: dict[str, str] = {}
        self._attestations: dict[str, Attestation] = {}
        self._attestation_memo: dict[tuple[bytes, bytes], bool] = {}

    # -- writes

    def register_identity(self, spiffe_uri: str, key: RegisteredKey) -> AgentIdentity:
        if spiffe_uri in self._identities:
            raise DuplicateIdentity(spiffe_uri)
        if key.kid in self._keys:
            raise DuplicateIdentity(f"kid {key.kid} already registered")
        if not key.valid_from < key.valid_to:
            raise ValueError("key validity window is empty")
        self._keys[key.kid] = key
        self._key_owner[key.kid] = spiffe_uri
        ident = AgentIdentity(spiffe_uri, key.kid)
        self._identities[spiffe_uri] = ident
        return ident

    def rotate_key(self, spiffe_uri: str, new_key: RegisteredKey, at: int) -> AgentIdentity:
        """Make ``new_key`` current. The old key stays valid for signatures made before ``at``."""
        ident = self.identity(spiffe_uri)
        if new_key.kid in self._keys:
            raise DuplicateIdentity(f"kid {new_key.kid} already registered")
        old = self._keys[ident.current_kid]
        self._keys[old.kid] = replace(old, valid_to=min(old.valid_to, at))
        self._keys[new_key.kid] = new_key
        self._key_owner[new_key.kid] = spiffe_uri
        ident = replace(ident, current_kid=new_key.kid)
        self._identities[spiffe_uri] = ident
        return ident

    def attest(
        self, subject: str, code_digest: str, build_ref: str, validity: tuple[int, int]
    ) -> Attestation:
        ident = self._identities.get(subject)
        if ident is None:
            raise UnknownSubject(subject)
        if ident.status is IdentityStatus.REVOKED:
            raise RevokedSubject(subject)
        if self._attestor is None:
            raise RuntimeError("registry holds no attestor private key")
        issued_at, expires_at = validity
        if not issued_at < expires_at:
            raise ValueError("attestation validity window is empty")
        unsigned = Attestation(subject, code_digest, build_ref, issued_at, expires_at)
        att = replace(unsigned, attestor_signature=self._attestor.sign(unsigned.statement()))
        self._attestations[att.uri] = att
        return att

    def revoke(self, spiffe_uri: str, at: int = 0) -> AgentIdentity:
        ident = self._identities.get(spiffe_uri)
        if ident is None:
            raise UnknownIdentity(spiffe_uri)
        if ident.status is IdentityStatus.REVOKED:
            return ident
        ident = replace(ident, status=IdentityStatus.REVOKED, revoked_at=at)
        self._identities[spiffe_uri] = ident
        return ident

    # -- reads

    def identity(self, spiffe_uri: str) -> AgentIdentity:
        try:
            return self._identities[spiffe_uri]
        except KeyError:
            raise UnknownIdentity(spiffe_uri) from None

    def identities(self) -> list[AgentIdentity]:
        return list(self._identities.values())

    def key(self, kid: str) -> RegisteredKey:
        try:
            return self._keys[kid]
        except KeyError:
            raise UnknownKey(kid) from None

    def key_owner(self, kid: str) -> str | None:
        return self._key_owner.get(kid)

    def attestation(self, uri: str) -> Attestation | None:
        return self._attestations.get(uri)

    def is_active(self, spiffe_uri: str) -> bool:
        ident = self._identities.get(spiffe_uri)
        return ident is not None and ident.status is IdentityStatus.ACTIVE

    def key_valid_for(self, spiffe_uri: str, kid: str, at: int) -> bool:
        key = self._keys.get(kid)
        return (
            key is not None
            and self._key_owner.get(kid) == spiffe_uri
            and key.valid_from <= at < key.valid_to
        )

    def verify_signature(self, kid: str, msg: bytes, sig: bytes) -> bool:
        key = self._keys.get(kid)
        return key is not None and verify_bytes(key.algorithm, key.public_key, msg, sig)

    def attestation_ok(self, att: Attestation) -> bool:
        memo = (att.statement(), att.attestor_signature)
        hit = self._attestation_memo.get(memo)
        if hit is None:
            k = self.attestor_key
            hit = verify_bytes(k.algorithm, k.public_key, att.statement(), att.attestor_signature)
            self._attestation_memo[memo] = hit
        return hit

    def verify_approval(self, approval: Approval, task_id: str) -> bool:
        """Approver identities sign with whichever of their keys was valid at ``approved_at``."""
        ident = self._identities.get(approval.approver_id)
        if ident is None:
            return False
        if ident.revoked_at is not None and ident.revoked_at <= approval.approved_at:
            return False
        msg = approval_message(task_id, approval.role, approval.approver_id, approval.approved_at)
        for kid, owner in self._key_owner.items():
            if owner == approval.approver_id and self.key_valid_for(owner, kid, approval.approved_at):
                if self.verify_signature(kid, msg, approval.signature):
                    return True
        return False

    def verify_provenance(
        self,
        provenance: Provenance,
        signature_check: bool,
        now: int,
        signed_at: int | None = None,
    ) -> Verdict:
        """Check identity, key, attestation and signature; collect every failure.

        With ``signed_at`` earlier than a revocation the identity still passes,
        flagged by the note ``RevokedAfterSigning`` (historical traceability).
        """
        t = now if signed_at is None else signed_at
        reasons: list[str] = []
        details: list[tuple[str, str]] = []
        notes: list[str] = []
        spiffe = provenance.producer_spiffe
        ident = self._identities.get(spiffe)
        if ident is None:
            reasons.append("UnknownIdentity")
            details.append((spiffe, "identity not registered"))
        elif ident.status is IdentityStatus.REVOKED:
            assert ident.revoked_at is not None
            if signed_at is not None and signed_at < ident.revoked_at:
                notes.append("RevokedAfterSigning")
            else:
                reasons.append("RevokedIdentity")
                details.append((spiffe, f"revoked at {ident.revoked_at}"))
        if not self.key_valid_for(spiffe, provenance.signing_kid, t):
            reasons.append("UnknownKey")
            details.append((provenance.signing_kid, f"no key of {spiffe} valid at {t}"))
        att = self._attestations.get(provenance.attestation_ref)
        if att is None:
            reasons.append("StaleAttestation")
            details.append((provenance.attestation_ref, "attestation not found"))
        elif att.subject != spiffe or not self.attestation_ok(att):
            reasons.append("StaleAttestation")
            details.append((att.uri, "attestation not bound to producer"))
        elif not att.issued_at <= t < att.expires_at:
            reasons.append("StaleAttestation")
            details.append((att.uri, f"not valid at {t}"))
        if not signature_check:
            reasons.append("BadSignature")
            details.append((spiffe, "signature does not verify"))
        return Verdict.of(reasons, details, notes)

    # -- export / import

    def export(self) -> dict:
        keys = []
        for kid, key in self._keys.items():
            d = key.to_dict()
            d["owner"] = self._key_owner[kid]
            keys.append(d)
        return {
            "attestor": self.attestor_key.to_dict(),
            "identities": [i.to_dict() for i in self._identities.values()],
            "keys": keys,
            "attestations": [a.to_dict() for a in self._attestations.values()],
        }

    def export_json(self) -> str:
        return canonical_json(self.export())

    @classmethod
    def from_export(cls, doc: dict, attestor: KeyPair | None = None) -> "IdentityRegistry":
        reg = cls(attestor=attestor, attestor_public=RegisteredKey.from_dict(doc["attestor"]))
        for k in doc["keys"]:
            reg._keys[k["kid"]] = RegisteredKey.from_dict(k)
            reg._key_owner[k["kid"]] = k["owner"]
        for i in doc["identities"]:
            reg._identities[i["spiffe_uri"]] = AgentIdentity(
                i["spiffe_uri"], i["current_kid"], IdentityStatus(i["status"]), i["revoked_at"]
            )
        for a in doc["attestations"]:
            att = Attestation.from_dict(a)
            reg._attestations[att.uri] = att
        return reg


def enroll(
    registry: IdentityRegistry,
    spiffe_uri: str,
    keypair: KeyPair,
    code_digest: str,
    build_ref: str,
    validity: tuple[int, int],
    valid_from: int = 0,
) -> AgentCredentials:
    """Register, attest and hand back the credentials an agent signs with."""
    registry.register_identity(spiffe_uri, keypair.registered(valid_from))
    att = registry.attest(spiffe_uri, code_digest, build_ref, validity)
    return AgentCredentials(spiffe_uri, keypair, att.uri)


def sign_approval(
    keypair: KeyPair, task_id: str, role: str, approver_id: str, approved_at: int
) -> Approval:
    msg = approval_message(task_id, role, approver_id, approved_at)
    return Approval(role, approver_id, approved_at, keypair.sign(msg))

