"""Deterministic per-identity windowed grouping of raw alerts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from govkernel.evidence import AssetRecord
from govkernel.soc.scoring import RiskInputs, RiskWeights, risk_score

UNKNOWN_CRITICALITY = 1.0  # an asset missing from inventory is treated as critical


@dataclass(frozen=True)
class Cluster:
    identity_id: str
    alerts: tuple[dict, ...]  # RawAlert payloads, ascending (observed_at, alert_id)
    window_start: int
    window_end: int
    severity: float
    confidence: float
    asset_criticality: float
    risk_score: float

    @property
    def alert_ids(self) -> list[str]:
        return [a["alert_id"] for a in self.alerts]

    @property
    def assets(self) -> list[str]:
        return sorted({a["asset_id"] for a in self.alerts})

    def features(self) -> dict:
        counts: dict[str, int] = {}
        for a in self.alerts:
            counts[a["alert_type"]] = counts.get(a["alert_type"], 0) + 1
        return {
            "alert_types": sorted(counts),
            "counts": dict(sorted(counts.items())),
            "sources": sorted({a["source"] for a in self.alerts}),
            "size": len(self.alerts),
        }


def criticality(asset_ids: Iterable[str], assets: Mapping[str, AssetRecord]) -> float:
    vals = [assets[a].criticality if a in assets else UNKNOWN_CRITICALITY for a in asset_ids]
    return max(vals) if vals else 0.0


def qualifies(group: Sequence[dict], burst_threshold: int) -> bool:
    return len(group) >= burst_threshold or len({a["alert_type"] for a in group}) >= 2


def make_cluster(
    group: Sequence[dict], window_start: int, window_ms: int, assets: Mapping[str, AssetRecord],
    weights: RiskWeights,
) -> Cluster:
    sev = max(a["severity"] for a in group)
    conf = sum(a["confidence"] for a in group) / len(group)
    crit = criticality((a["asset_id"] for a in group), assets)
    return Cluster(
        group[0]["identity_id"],
        tuple(group),
        window_start,
        window_start + window_ms,
        sev,
        conf,
        crit,
        risk_score(RiskInputs(sev, conf, crit), weights),
    )


def _key(a: dict) -> tuple:
    return (a["observed_at"], a["alert_id"])


def cluster_alerts(
    alerts: Iterable[dict],
    window_ms: int,
    burst_threshold: int,
    assets: Mapping[str, AssetRecord],
    weights: RiskWeights = RiskWeights(),
) -> list[Cluster]:
    """Batch form. Windows are anchored at the earliest alert not yet grouped and
    cover [start, start + window_ms]; groups that qualify become clusters."""
    by_identity: dict[str, list[dict]] = {}
    for a in alerts:
        by_identity.setdefault(a["identity_id"], []).append(a)
    out: list[Cluster] = []
    for ident in sorted(by_identity):
        seq = sorted(by_identity[ident], key=_key)
        i = 0
        while i < len(seq):
            start = seq[i]["observed_at"]
            j = i
            while j < len(seq) and seq[j]["observed_at"] <= start + window_ms:
                j += 1
            group = seq[i:j]
            if qualifies(group, burst_threshold):
                out.append(make_cluster(group, start, window_ms, assets, weights))
            i = j
    out.sort(key=lambda c: (c.window_start, c.identity_id))
    return out


class OnlineClusterer:
    """Streaming form of ``cluster_alerts`` for time-ordered input.

    ``on_close`` receives every qualifying group once its window has passed;
    callers must invoke ``close_due`` once time moves beyond a window end.
    """

    def __init__(
        self,
        window_ms: int,
        burst_threshold: int,
        assets: Mapping[str, AssetRecord],
        weights: RiskWeights,
        on_close: Callable[[Cluster], None],
    ):
        self.window_ms = window_ms
        self.burst_threshold = burst_threshold
        self.assets = assets
        self.weights = weights
        self.on_close = on_close
        self._open: dict[str, tuple[int, list[dict]]] = {}

    def add(self, alert: dict) -> int | None:
        """Add an alert; returns a window end the caller should revisit, if a window opened."""
        ident = alert["identity_id"]
        cur = self._open.get(ident)
        if cur is not None and alert["observed_at"] > cur[0] + self.window_ms:
            self._close(ident)
            cur = None
        if cur is None:
            self._open[ident] = (alert["observed_at"], [alert])
            return alert["observed_at"] + self.window_ms
        cur[1].append(alert)
        return None

    def close_due(self, identity_id: str, now: int) -> None:
        cur = self._open.get(identity_id)
        if cur is not None and now > cur[0] + self.window_ms:
            self._close(identity_id)

    def flush(self) -> None:
        for ident in sorted(self._open):
            self._close(ident)

    def _close(self, ident: str) -> None:
        start, group = self._open.pop(ident)
        group.sort(key=_key)
        if qualifies(group, self.burst_threshold):
            self.on_close(make_cluster(group, start, self.window_ms, self.assets, self.weights))
