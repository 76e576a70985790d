"""Transparent linear risk scoring and severity bands.

Decisions (threshold, band, ranking) are taken on the exact rational value of
the weighted sum, so scaling every weight and the threshold by the same c > 0
never flips one. Floats are only the reported form.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

Number = float | Fraction


def _unit(name: str, v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class RiskInputs:
    severity: float
    confidence: float
    asset_criticality: float

    def __post_init__(self):
        for name in ("severity", "confidence", "asset_criticality"):
            _unit(name, getattr(self, name))


@dataclass(frozen=True)
class RiskWeights:
    w1: Number = 0.4
    w2: Number = 0.3
    w3: Number = 0.3

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3) < 0:
            raise ValueError("weights must be nonnegative")
        if self.w1 + self.w2 + self.w3 <= 0:
            raise ValueError("weights must not all be zero")

    def scaled(self, c: Number) -> "RiskWeights":
        """Every weight times c, exactly."""
        if c <= 0:
            raise ValueError("scale must be positive")
        k = Fraction(c)
        return RiskWeights(Fraction(self.w1) * k, Fraction(self.w2) * k, Fraction(self.w3) * k)

    def total(self) -> Fraction:
        return Fraction(self.w1) + Fraction(self.w2) + Fraction(self.w3)


def risk_exact(x: RiskInputs, w: RiskWeights) -> Fraction:
    """w1*severity + w2*confidence + w3*asset_criticality with no rounding."""
    return (
        Fraction(w.w1) * Fraction(x.severity)
        + Fraction(w.w2) * Fraction(x.confidence)
        + Fraction(w.w3) * Fraction(x.asset_criticality)
    )


def risk_score(x: RiskInputs, w: RiskWeights) -> float:
    """The weighted sum, correctly rounded to a float."""
    return float(risk_exact(x, w))


@dataclass(frozen=True)
class Bands:
    """low < low_max <= medium < medium_max <= high."""

    low_max: float = 0.4
    medium_max: float = 0.7

    def __post_init__(self):
        if self.low_max > self.medium_max:
            raise ValueError("band cut-points must be ascending")

    def band(self, score: Number) -> str:
        if score < self.low_max:
            return "low"
        if score < self.medium_max:
            return "medium"
        return "high"


def above_threshold(score: Number, threshold: Number) -> bool:
    # strict: a score equal to the threshold opens nothing. float/Fraction comparison is exact.
    return score > threshold


def normalized(score: Number, w: RiskWeights) -> Number:
    """Score on the [0, 1] scale of the inputs, so bands survive weight scaling.

    Exact for a Fraction score; a float score gives a float.
    """
    if isinstance(score, Fraction):
        return score / w.total()
    return score / float(w.total())


def ranking(scores: list[Number]) -> list[int]:
    """Indices by descending score, ties by position."""
    return sorted(range(len(scores)), key=lambda i: (-Fraction(scores[i]), i))
