"""Bounded, post-checked judgment calls.

Rules decide; a judgment plugin may only explain or classify, and whatever it
returns is validated against a schema and numeric bounds before use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from govkernel.canonical import digest
from govkernel.contracts.schema import F, SchemaDef, validate_payload
from govkernel.errors import PostCheckFailure, UnboundedRequest

EXPLANATION = SchemaDef(
    "Explanation",
    1,
    (
        F("text", "string", max_length=280),
        F("severity", "real"),
        F("label", "enum", enum=("benign", "suspicious", "malicious")),
    ),
)


@dataclass(frozen=True)
class Bound:
    field: str
    minimum: float | None = None
    maximum: float | None = None

    @property
    def name(self) -> str:
        return f"bound:{self.field}"

    def holds(self, response: dict) -> bool:
        v = response.get(self.field)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return False
        if self.minimum is not None and v < self.minimum:
            return False
        if self.maximum is not None and v > self.maximum:
            return False
        return True


@dataclass(frozen=True)
class JudgmentTrace:
    request_digest: str
    response_digest: str
    post_checks: tuple[tuple[str, bool], ...]
    used: bool

    def to_dict(self) -> dict:
        return {
            "request_digest": self.request_digest,
            "response_digest": self.response_digest,
            "post_checks": [list(c) for c in self.post_checks],
            "used": self.used,
        }


class JudgmentPlugin(Protocol):
    def respond(self, request: dict) -> dict: ...


class TemplateExplainer:
    """Deterministic stand-in for a language model: fills a fixed template."""

    def respond(self, request: dict) -> dict:
        score = float(request.get("risk_score", 0.0))
        label = "malicious" if score >= 0.7 else "suspicious" if score >= 0.4 else "benign"
        parts = ", ".join(f"{k}={request[k]}" for k in sorted(request) if k != "risk_score")
        text = f"risk {score:.3f} ({label}); inputs: {parts}"[:280]
        return {"text": text, "severity": min(max(score, 0.0), 1.0), "label": label}


class AdversarialStub:
    """Seeded stub that sometimes breaks the rules, for exercising post-checks."""

    def __init__(self, rng: np.random.Generator, violation_rate: float = 0.5):
        self.rng = rng
        self.violation_rate = violation_rate

    def respond(self, request: dict) -> dict:
        r = self.rng
        resp = {
            "text": "x" * int(r.integers(1, 200)),
            "severity": float(r.random()),
            "label": "suspicious",
        }
        if r.random() < self.violation_rate:
            kind = int(r.integers(0, 4))
            if kind == 0:
                resp["severity"] = float(1.0 + r.random())
            elif kind == 1:
                resp["severity"] = float(-r.random() - 1e-9)
            elif kind == 2:
                resp["text"] = "y" * int(r.integers(281, 400))
            else:
                resp["label"] = "catastrophic"
        return resp


def judge(
    plugin: JudgmentPlugin,
    request: dict,
    expected_schema: SchemaDef = EXPLANATION,
    bounds: Sequence[Bound] = (Bound("severity", 0.0, 1.0),),
    *,
    allowed_fields: Iterable[str] | None = None,
) -> tuple[dict, JudgmentTrace]:
    """Call the plugin and accept the answer only if every post-check passes."""
    if allowed_fields is not None:
        extra = set(request) - set(allowed_fields)
        if extra:
            raise UnboundedRequest(f"undeclared request fields: {sorted(extra)}")
    response = plugin.respond(dict(request))
    checks = [("schema", validate_payload(expected_schema, response).ok)]
    checks += [(b.name, b.holds(response)) for b in bounds]
    used = all(ok for _n, ok in checks)
    trace = JudgmentTrace(digest(request), digest(response), tuple(checks), used)
    if not used:
        raise PostCheckFailure(trace, [n for n, ok in checks if not ok])
    return response, trace
