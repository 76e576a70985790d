"""Output Contract schema definitions, validation and the schema registry."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Iterable

from govkernel.canonical import canonical_json
from govkernel.envelope import URI_RE
from govkernel.errors import DuplicateSchema, MalformedSchema, UnknownSchema
from govkernel.reports import Finding, ValidationReport

SCALAR_TYPES = frozenset({"string", "integer", "real", "boolean", "timestamp", "uri"})
FIELD_TYPES = SCALAR_TYPES | {"enum", "object", "list"}
RETENTION_CLASSES = frozenset({"audit-long", "operational"})
RELATIONS = (
    "justified_by",
    "governed_by",
    "derived_from",
    "approved_by",
    "part_of_thread",
    "affects_asset",
)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    type: str
    required: bool = True
    nullable: bool = False
    enum: tuple[str, ...] = ()
    minimum: float | None = None
    maximum: float | None = None
    pattern: str | None = None
    items: str | None = None  # element type for lists (scalar type name)
    max_length: int | None = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "type": self.type, "required": self.required}
        for k in ("nullable",):
            if getattr(self, k):
                d[k] = True
        if self.enum:
            d["enum"] = list(self.enum)
        for k in ("minimum", "maximum", "pattern", "items", "max_length"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FieldSpec":
        return cls(
            name=d["name"],
            type=d["type"],
            required=d.get("required", True),
            nullable=d.get("nullable", False),
            enum=tuple(d.get("enum", ())),
            minimum=d.get("minimum"),
            maximum=d.get("maximum"),
            pattern=d.get("pattern"),
            items=d.get("items"),
            max_length=d.get("max_length"),
        )


def F(name: str, type: str, **kw: Any) -> FieldSpec:
    """Terse FieldSpec constructor for catalog tables."""
    if "enum" in kw:
        kw["enum"] = tuple(kw["enum"])
    return FieldSpec(name, type, **kw)


@dataclass(frozen=True)
class SchemaDef:
    oc_type: str
    version: int
    fields: tuple[FieldSpec, ...]
    ordering_key_field: str | None = None
    idempotency_recipe: tuple[str, ...] = ()
    floor_seconds: int | None = None
    state_changing: bool = False
    retention_class: str = "operational"
    # payload field naming the asset an action affects (human-approval gating)
    asset_field: str | None = None
    # evidence node id template; "{trace_id}" and payload fields are available
    evidence_uri: str = "uri://events/{trace_id}"
    # (payload field, relation): fields holding node ids this event links to
    links: tuple[tuple[str, str], ...] = ()
    description: str = ""

    def field(self, name: str) -> FieldSpec | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    @property
    def key(self) -> tuple[str, int]:
        return (self.oc_type, self.version)

    def to_dict(self) -> dict:
        return {
            "oc_type": self.oc_type,
            "version": self.version,
            "fields": [f.to_dict() for f in self.fields],
            "ordering_key_field": self.ordering_key_field,
            "idempotency_recipe": list(self.idempotency_recipe),
            "floor_seconds": self.floor_seconds,
            "state_changing": self.state_changing,
            "retention_class": self.retention_class,
            "asset_field": self.asset_field,
            "evidence_uri": self.evidence_uri,
            "links": [list(x) for x in self.links],
            "description": self.description,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SchemaDef":
        try:
            return cls(
                oc_type=d["oc_type"],
                version=d["version"],
                fields=tuple(FieldSpec.from_dict(f) for f in d["fields"]),
                ordering_key_field=d.get("ordering_key_field"),
                idempotency_recipe=tuple(d.get("idempotency_recipe", ())),
                floor_seconds=d.get("floor_seconds"),
                state_changing=d.get("state_changing", False),
                retention_class=d.get("retention_class", "operational"),
                asset_field=d.get("asset_field"),
                evidence_uri=d.get("evidence_uri", "uri://events/{trace_id}"),
                links=tuple((f, r) for f, r in d.get("links", ())),
                description=d.get("description", ""),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedSchema(f"schema document: {exc}") from exc


def check_schema(s: SchemaDef) -> None:
    if not s.oc_type or not isinstance(s.version, int) or isinstance(s.version, bool) or s.version < 1:
        raise MalformedSchema(f"bad name/version {s.oc_type!r}/{s.version!r}")
    names = [f.name for f in s.fields]
    if len(set(names)) != len(names):
        raise MalformedSchema(f"{s.oc_type}: duplicate field names")
    for f in s.fields:
        if f.type not in FIELD_TYPES:
            raise MalformedSchema(f"{s.oc_type}.{f.name}: unknown type {f.type!r}")
        if f.type == "enum" and not f.enum:
            raise MalformedSchema(f"{s.oc_type}.{f.name}: enum without values")
        if f.type == "list" and f.items is not None and f.items not in FIELD_TYPES - {"list"}:
            raise MalformedSchema(f"{s.oc_type}.{f.name}: bad list item type")
    link_fields = [f for f, _r in s.links]
    for ref in (s.ordering_key_field, s.asset_field, *s.idempotency_recipe, *link_fields):
        if ref is not None and ref not in names:
            raise MalformedSchema(f"{s.oc_type}: references unknown field {ref!r}")
    for _f, rel in s.links:
        if rel not in RELATIONS:
            raise MalformedSchema(f"{s.oc_type}: unknown relation {rel!r}")
    if s.floor_seconds is not None and s.floor_seconds <= 0:
        raise MalformedSchema(f"{s.oc_type}: floor_seconds must be positive")
    if s.retention_class not in RETENTION_CLASSES:
        raise MalformedSchema(f"{s.oc_type}: unknown retention class")


def _type_ok(kind: str, v: Any) -> bool:
    if kind == "string":
        return isinstance(v, str)
    if kind == "integer":
        return isinstance(v, int) and not isinstance(v, bool)
    if kind == "real":
        return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
    if kind == "boolean":
        return isinstance(v, bool)
    if kind == "timestamp":
        return isinstance(v, int) and not isinstance(v, bool) and v >= 0
    if kind == "uri":
        return isinstance(v, str) and bool(URI_RE.match(v))
    if kind == "object":
        return isinstance(v, dict)
    if kind == "list":
        return isinstance(v, list)
    return False


def _check_field(spec: FieldSpec, v: Any) -> list[Finding]:
    path = spec.name
    if v is None:
        return [] if spec.nullable else [Finding(path, "null_value", "null not allowed")]
    if spec.type == "enum":
        if not isinstance(v, str):
            return [Finding(path, "type_mismatch", "expected enum string")]
        if v not in spec.enum:
            return [Finding(path, "enum_violation", f"{v!r} not in {'|'.join(spec.enum)}")]
        return []
    if not _type_ok(spec.type, v):
        return [Finding(path, "type_mismatch", f"expected {spec.type}, got {type(v).__name__}")]
    out: list[Finding] = []
    if spec.type in ("integer", "real", "timestamp"):
        if spec.minimum is not None and v < spec.minimum:
            out.append(Finding(path, "out_of_range", f"{v} < {spec.minimum}"))
        if spec.maximum is not None and v > spec.maximum:
            out.append(Finding(path, "out_of_range", f"{v} > {spec.maximum}"))
    if spec.type in ("string", "uri"):
        if spec.pattern is not None and not re.fullmatch(spec.pattern, v):
            out.append(Finding(path, "pattern_mismatch", f"{v!r} !~ {spec.pattern}"))
        if spec.max_length is not None and len(v) > spec.max_length:
            out.append(Finding(path, "too_long", f"length {len(v)} > {spec.max_length}"))
    if spec.type == "list":
        if spec.max_length is not None and len(v) > spec.max_length:
            out.append(Finding(path, "too_long", f"length {len(v)} > {spec.max_length}"))
        if spec.items is not None:
            for i, item in enumerate(v):
                if not _type_ok(spec.items, item):
                    out.append(Finding(f"{path}[{i}]", "type_mismatch", f"expected {spec.items}"))
    return out


def validate_payload(schema: SchemaDef, payload: Any, *, strict: bool = True) -> ValidationReport:
    if not isinstance(payload, dict):
        return ValidationReport((Finding("", "type_mismatch", "payload must be an object"),))
    out: list[Finding] = []
    for spec in schema.fields:
        if spec.name not in payload:
            if spec.required:
                out.append(Finding(spec.name, "missing_field", "required field absent"))
            continue
        out.extend(_check_field(spec, payload[spec.name]))
    if strict:
        known = {f.name for f in schema.fields}
        for name in payload:
            if name not in known:
                out.append(Finding(name, "unknown_field", "field not declared by schema"))
    return ValidationReport(tuple(out))


class ContractRegistry:
    """Schema registry. ``strict=False`` tolerates unknown payload fields."""

    def __init__(self, schemas: Iterable[SchemaDef] = (), *, strict: bool = True):
        self.strict = strict
        self._schemas: dict[tuple[str, int], SchemaDef] = {}
        for s in schemas:
            self.register_schema(s)

    def register_schema(self, schema: SchemaDef) -> SchemaDef:
        check_schema(schema)
        if schema.key in self._schemas:
            raise DuplicateSchema(f"{schema.oc_type} v{schema.version}")
        self._schemas[schema.key] = schema
        return schema

    def get(self, oc_type: str, version: int | None = None) -> SchemaDef:
        if version is None:
            versions = [v for (n, v) in self._schemas if n == oc_type]
            if not versions:
                raise UnknownSchema(oc_type)
            version = max(versions)
        try:
            return self._schemas[(oc_type, version)]
        except KeyError:
            raise UnknownSchema(f"{oc_type} v{version}") from None

    def has(self, oc_type: str) -> bool:
        return any(n == oc_type for (n, _v) in self._schemas)

    def list_schemas(self) -> list[SchemaDef]:
        return [self._schemas[k] for k in sorted(self._schemas)]

    def validate_event(self, payload: Any, oc_type: str, version: int) -> ValidationReport:
        return validate_payload(self.get(oc_type, version), payload, strict=self.strict)

    def state_changing(self, oc_type: str, version: int | None = None) -> bool:
        return self.get(oc_type, version).state_changing

    def export(self) -> list[dict]:
        return [s.to_dict() for s in self.list_schemas()]
