"""Output Contracts: schemas, the shipped catalog, and signed event instances."""

from govkernel.contracts.catalog import CATALOG, default_registry
from govkernel.contracts.events import (
    SignedEvent,
    idempotency_key,
    parse_log,
    read_log,
    sign_event,
    verify_event,
    write_log,
)
from govkernel.contracts.schema import ContractRegistry, FieldSpec, SchemaDef, validate_payload

__all__ = [
    "CATALOG",
    "ContractRegistry",
    "FieldSpec",
    "SchemaDef",
    "SignedEvent",
    "default_registry",
    "idempotency_key",
    "parse_log",
    "read_log",
    "sign_event",
    "validate_payload",
    "verify_event",
    "write_log",
]
