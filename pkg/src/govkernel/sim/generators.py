"""Seeded synthetic HRIS and alert streams.

Generators are pure functions of (seed, config): they never look at simulation
state, so a schedule can be replayed independently of a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta
from typing import Mapping, Sequence

import numpy as np

from govkernel.evidence import AssetRecord
from govkernel.sim.config import ALERT_TYPES, HOUR, HRIS_TYPES, ScenarioConfig
from govkernel.sim.rng import Streams

DEPARTMENTS: dict[str, tuple[tuple[str, int], ...]] = {
    "Finance": (("Analyst", 5), ("AP Clerk", 4), ("AP Lead", 1), ("Controller", 1), ("Intern", 1)),
    "Sales": (("Account Executive", 6), ("Sales Ops", 2), ("Intern", 1)),
    "Engineering": (
        ("Software Engineer", 8), ("SRE", 3), ("Release Manager", 1), ("SRE Lead", 1), ("Intern", 1),
    ),
    "IT": (("Helpdesk Analyst", 3), ("Intern", 1)),
    "HR": (("HR Generalist", 3),),
}
DEPT_WEIGHTS = {"Finance": 2, "Sales": 3, "Engineering": 4, "IT": 1, "HR": 1}
LOCATIONS = ("NYC", "LON", "BLR", "SFO")
EPOCH = date(2026, 1, 5)  # calendar date of simulated t = 0
FUTURE_DATED_HIRE = 0.2
MAX_FUTURE_MS = 30 * 60_000


def _pick(rng: np.random.Generator, items: Sequence, weights: Sequence[float]):
    w = np.asarray(weights, dtype=float)
    return items[int(rng.choice(len(items), p=w / w.sum()))]


def draw_attributes(rng: np.random.Generator) -> dict:
    depts = sorted(DEPARTMENTS)
    dept = _pick(rng, depts, [DEPT_WEIGHTS[d] for d in depts])
    titles = DEPARTMENTS[dept]
    title = _pick(rng, [t for t, _ in titles], [w for _, w in titles])
    return {
        "department": dept,
        "job_title": title,
        "location": LOCATIONS[int(rng.integers(len(LOCATIONS)))],
        "employment_type": "contractor" if rng.random() < 0.1 else "employee",
    }


@dataclass(frozen=True)
class Person:
    employee_id: str
    name: str
    attrs: dict


def baseline_population(cfg: ScenarioConfig) -> list[Person]:
    rng = Streams(cfg.seed).get("population")
    return [
        Person(f"E{i:05d}", f"Employee {i:05d}", draw_attributes(rng)) for i in range(1, cfg.employees + 1)
    ]


def _arrivals(rng: np.random.Generator, rate_per_hour: float, duration_ms: int) -> list[int]:
    if rate_per_hour <= 0:
        return []
    mean_gap = HOUR / rate_per_hour
    out, t = [], 0.0
    while True:
        t += rng.exponential(mean_gap)
        if t >= duration_ms:
            return out
        out.append(int(t))


def _iso(ms: int) -> str:
    return (EPOCH + timedelta(milliseconds=ms)).isoformat()


def hris_schedule(cfg: ScenarioConfig, people: Sequence[Person] | None = None) -> list[tuple[int, dict]]:
    """(send time, HrisEvent payload) pairs in send order."""
    streams = Streams(cfg.seed)
    people = list(people if people is not None else baseline_population(cfg))
    arrivals: list[tuple[int, int, str]] = []
    for idx, et in enumerate(HRIS_TYPES):
        for t in _arrivals(streams.get(f"hris/{et}"), cfg.hris_rates.get(et, 0.0), cfg.duration_ms):
            arrivals.append((t, idx, et))
    arrivals.sort()
    rng = streams.get("hris/attrs")
    active: dict[str, Person] = {p.employee_id: p for p in people}
    on_leave: dict[str, Person] = {}
    next_id = len(people) + 1
    out: list[tuple[int, dict]] = []
    for n, (t, _, et) in enumerate(arrivals):
        effective = t
        end_date = None
        if et == "hire":
            person = Person(f"E{next_id:05d}", f"Employee {next_id:05d}", draw_attributes(rng))
            next_id += 1
            if rng.random() < FUTURE_DATED_HIRE:
                effective = t + int(rng.integers(1, MAX_FUTURE_MS))
            active[person.employee_id] = person
        elif et == "return_from_leave":
            if not on_leave:
                continue
            person = on_leave.pop(sorted(on_leave)[int(rng.integers(len(on_leave)))])
            active[person.employee_id] = person
        else:
            if not active:
                continue
            person = active[sorted(active)[int(rng.integers(len(active)))]]
            if et == "transfer":
                person = Person(person.employee_id, person.name, draw_attributes(rng))
                active[person.employee_id] = person
            else:
                del active[person.employee_id]
                end_date = _iso(t)
                if et == "extended_leave":
                    on_leave[person.employee_id] = person
        out.append(
            (
                t,
                {
                    "event_id": f"hris-{n:06d}",
                    "event_type": et,
                    "employee_id": person.employee_id,
                    "name": person.name,
                    "department": person.attrs["department"],
                    "job_title": person.attrs["job_title"],
                    "location": person.attrs["location"],
                    "manager_id": None,
                    "employment_type": person.attrs["employment_type"],
                    "start_date": _iso(effective) if et in ("hire", "return_from_leave") else None,
                    "end_date": end_date,
                    "effective_ts": effective,
                },
            )
        )
    return out


def _alert(alert_id: str, source: str, kind: str, ident: str, asset: str, sev: float, conf: float, t: int) -> dict:
    return {
        "alert_id": alert_id,
        "source": source,
        "alert_type": kind,
        "identity_id": ident,
        "asset_id": asset,
        "severity": sev,
        "confidence": conf,
        "observed_at": t,
    }


SOURCE_OF = {"login_failure": "idp", "geo_anomaly": "siem", "token_misuse": "idp", "malware": "edr", "other": "siem"}


def alert_schedule(cfg: ScenarioConfig, assets: Mapping[str, AssetRecord]) -> tuple[list[dict], set[str]]:
    """Background noise plus injected bursts; returns (alerts, ids of burst alerts)."""
    streams = Streams(cfg.seed)
    soc = cfg.soc
    ordinary = sorted(a for a, r in assets.items() if not r.crown_jewel)
    crown = sorted(a for a, r in assets.items() if r.crown_jewel)
    rng = streams.get("alerts/attrs")
    alerts: list[dict] = []
    n = 0
    for kind in ALERT_TYPES:
        for t in _arrivals(streams.get(f"alerts/{kind}"), cfg.alert_rates.get(kind, 0.0), cfg.duration_ms):
            ident = f"u{int(rng.integers(1, soc.identities + 1)):05d}"
            asset = ordinary[int(rng.integers(len(ordinary)))] if ordinary else "unknown-asset"
            alerts.append(
                _alert(f"al-{n:07d}", SOURCE_OF[kind], kind, ident, asset,
                       round(float(rng.uniform(0.05, 0.4)), 4), round(float(rng.uniform(0.2, 0.6)), 4), t)
            )
            n += 1
    burst_ids: set[str] = set()
    brng = streams.get("alerts/bursts")
    for b, t in enumerate(_arrivals(streams.get("alerts/burst-times"), soc.bursts_per_hour, cfg.duration_ms)):
        ident = f"burst{b:04d}"
        use_crown = bool(crown) and brng.random() < soc.crown_jewel_burst_fraction
        pool = crown if use_crown else ordinary
        asset = pool[int(brng.integers(len(pool)))] if pool else "unknown-asset"
        for burst in burst_alerts(brng, ident, asset, t, soc.burst_failures, f"bu-{b:04d}"):
            alerts.append(burst)
            burst_ids.add(burst["alert_id"])
    alerts.sort(key=lambda a: (a["observed_at"], a["alert_id"]))
    return alerts, burst_ids


def burst_alerts(rng: np.random.Generator, ident: str, asset: str, start: int, failures: int, prefix: str,
                 span_ms: int = 4 * 60_000) -> list[dict]:
    """``failures`` login failures and one geo anomaly within ``span_ms``."""
    times = sorted(int(x) for x in rng.integers(start, start + span_ms, size=failures + 1))
    out = []
    for i, t in enumerate(times[:-1]):
        out.append(_alert(f"{prefix}-{i:02d}", "idp", "login_failure", ident, asset,
                          round(float(rng.uniform(0.55, 0.9)), 4), round(float(rng.uniform(0.7, 0.95)), 4), t))
    out.append(_alert(f"{prefix}-geo", "siem", "geo_anomaly", ident, asset,
                      round(float(rng.uniform(0.6, 0.9)), 4), round(float(rng.uniform(0.7, 0.95)), 4), times[-1]))
    return out
