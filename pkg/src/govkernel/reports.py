"""Verdicts and validation reports returned by every checking operation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable


@dataclass(frozen=True)
class Finding:
    path: str
    code: str
    message: str

    def to_dict(self) -> dict:
        return {"path": self.path, "code": self.code, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]

    def paths(self) -> list[str]:
        return [f.path for f in self.findings]

    def to_dict(self) -> dict:
        return {"findings": [f.to_dict() for f in self.findings]}


@dataclass(frozen=True)
class Verdict:
    """Outcome of a check.

    ``reason_codes`` holds failures only; ``passed`` is true iff it is empty.
    ``notes`` carries informational codes (e.g. ``VacuousPass``) that never
    affect the outcome.
    """

    reason_codes: tuple[str, ...] = ()
    details: tuple[tuple[str, str], ...] = ()
    notes: tuple[str, ...] = field(default=())

    @property
    def passed(self) -> bool:
        return not self.reason_codes

    @classmethod
    def of(
        cls,
        reasons: Iterable[str] = (),
        details: Iterable[tuple[str, str]] = (),
        notes: Iterable[str] = (),
    ) -> "Verdict":
        # keep first occurrence order, drop repeats
        return cls(
            tuple(dict.fromkeys(reasons)), tuple(details), tuple(dict.fromkeys(notes))
        )

    def merge(self, other: "Verdict") -> "Verdict":
        return Verdict.of(
            self.reason_codes + other.reason_codes,
            self.details + other.details,
            self.notes + other.notes,
        )

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "reason_codes": list(self.reason_codes),
            "details": [list(d) for d in self.details],
            "notes": list(self.notes),
        }
