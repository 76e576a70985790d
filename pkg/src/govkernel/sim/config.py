"""Scenario configuration with path-qualified validation errors."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

from govkernel.errors import ConfigError

HOUR = 3_600_000
MINUTE = 60_000
HRIS_TYPES = ("hire", "transfer", "terminate", "extended_leave", "return_from_leave")
ALERT_TYPES = ("login_failure", "geo_anomaly", "token_misuse", "malware", "other")


@dataclass(frozen=True)
class EndpointProfile:
    target_system: str
    latency_ms: tuple[int, int] = (50, 500)
    failure_rate: float = 0.0
    duplicate_delivery_rate: float = 0.0
    rollback_failure_rate: float = 0.0


@dataclass(frozen=True)
class SocConfig:
    weights: tuple[float, float, float] = (0.4, 0.3, 0.3)
    threshold: float = 0.6
    bands: tuple[float, float] = (0.4, 0.7)  # low < bands[0] <= medium < bands[1] <= high
    window_ms: int = 5 * MINUTE
    burst_threshold: int = 5
    lookback_ms: int = 30 * MINUTE
    bursts_per_hour: float = 0.0
    burst_failures: int = 6
    crown_jewel_burst_fraction: float = 0.25
    identities: int = 2000


@dataclass(frozen=True)
class BackoffConfig:
    base_ms: int = 1000
    factor: float = 2.0
    cap_ms: int = 60_000
    max_retries: int = 5


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 42
    duration_ms: int = 8 * HOUR
    hris_rates: dict[str, float] = field(default_factory=lambda: {t: 0.0 for t in HRIS_TYPES})
    alert_rates: dict[str, float] = field(default_factory=lambda: {t: 0.0 for t in ALERT_TYPES})
    employees: int = 300
    endpoints: tuple[EndpointProfile, ...] = ()
    default_endpoint: EndpointProfile = EndpointProfile("*")
    approval_latency_ms: tuple[int, int] = (MINUTE, 5 * MINUTE)
    approval_transit_ms: int = 1000
    sod_deny_rate: float = 0.3
    dispute_rate: float = 0.0
    dispute_delay_ms: tuple[int, int] = (5_000, 20_000)
    disposition_delay_ms: tuple[int, int] = (5 * MINUTE, 30 * MINUTE)
    overturn_rate: float = 0.5
    adjudication: float = 0.0
    adjudication_delay_ms: int = HOUR
    role_catalog: str | None = None
    assets: str | None = None
    routing_rules: str | None = None
    soc: SocConfig = SocConfig()
    backoff: BackoffConfig = BackoffConfig()
    approval_timeout_ms: int | None = None
    workloads: tuple[str, ...] = ("jml", "soc")
    base_dir: str | None = None  # directory relative paths resolve against

    def endpoint(self, system: str) -> EndpointProfile:
        for e in self.endpoints:
            if e.target_system == system:
                return e
        return replace(self.default_endpoint, target_system=system)

    def resolve(self, name: str) -> Path | None:
        raw = getattr(self, name)
        if raw is None:
            return None
        p = Path(raw)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p

    def with_workloads(self, *names: str) -> "ScenarioConfig":
        return replace(self, workloads=tuple(names))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return _lists(d)


def _lists(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _lists(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_lists(v) for v in x]
    return x


# -- validation


def _num(path: str, v: Any, *, lo: float | None = None, hi: float | None = None, integer: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(v).__name__}")
    if integer and not float(v).is_integer():
        raise ConfigError(path, "expected an integer")
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be >= {lo}")
    if hi is not None and v > hi:
        raise ConfigError(path, f"must be <= {hi}")
    return int(v) if integer else float(v)


def _rate(path: str, v: Any) -> float:
    return _num(path, v, lo=0.0, hi=1.0)


def _range(path: str, v: Any) -> tuple[int, int]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(path, "expected [min, max]")
    lo = _num(f"{path}[0]", v[0], lo=0, integer=True)
    hi = _num(f"{path}[1]", v[1], lo=0, integer=True)
    if lo > hi:
        raise ConfigError(path, "min must not exceed max")
    return (lo, hi)


def _known(path: str, d: dict, cls) -> None:
    names = {f.name for f in fields(cls)}
    for k in d:
        if k not in names:
            raise ConfigError(f"{path}{k}", "unknown field")


def _endpoint(path: str, d: Any, default_system: str | None = None) -> EndpointProfile:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    _known(f"{path}.", d, EndpointProfile)
    system = d.get("target_system", default_system)
    if not isinstance(system, str) or not system:
        raise ConfigError(f"{path}.target_system", "required")
    return EndpointProfile(
        system,
        _range(f"{path}.latency_ms", d.get("latency_ms", (50, 500))),
        _rate(f"{path}.failure_rate", d.get("failure_rate", 0.0)),
        _rate(f"{path}.duplicate_delivery_rate", d.get("duplicate_delivery_rate", 0.0)),
        _rate(f"{path}.rollback_failure_rate", d.get("rollback_failure_rate", 0.0)),
    )


def _rates(path: str, d: Any, allowed: tuple[str, ...]) -> dict[str, float]:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    out = {t: 0.0 for t in allowed}
    for k, v in d.items():
        if k not in allowed:
            raise ConfigError(f"{path}.{k}", "unknown category")
        out[k] = _num(f"{path}.{k}", v, lo=0.0)
    return out


def parse_duration(raw: Any, path: str = "duration") -> int:
    """'8h', '30m', '45s', '1500ms' or an integer millisecond count."""
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return _num(path, raw, lo=1, integer=True)
    if not isinstance(raw, str) or not raw:
        raise ConfigError(path, "expected a duration")
    for suffix, mult in (("ms", 1), ("h", HOUR), ("m", MINUTE), ("s", 1000)):
        if raw.endswith(suffix):
            try:
                value = float(raw[: -len(suffix)])
            except ValueError:
                raise ConfigError(path, f"bad duration {raw!r}") from None
            ms = value * mult
            if ms <= 0 or not ms.is_integer():
                raise ConfigError(path, f"bad duration {raw!r}")
            return int(ms)
    try:
        return parse_duration(int(raw), path)
    except ValueError:
        raise ConfigError(path, f"bad duration {raw!r}") from None


def config_from_dict(d: dict, *, base_dir: str | None = None) -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigError("$", "expected an object")
    _known("", d, ScenarioConfig)
    kw: dict[str, Any] = {"base_dir": base_dir}
    if "seed" in d:
        kw["seed"] = _num("seed", d["seed"], lo=0, hi=2**64 - 1, integer=True)
    if "duration_ms" in d:
        kw["duration_ms"] = parse_duration(d["duration_ms"], "duration_ms")
    if "hris_rates" in d:
        kw["hris_rates"] = _rates("hris_rates", d["hris_rates"], HRIS_TYPES)
    if "alert_rates" in d:
        kw["alert_rates"] = _rates("alert_rates", d["alert_rates"], ALERT_TYPES)
    if "employees" in d:
        kw["employees"] = _num("employees", d["employees"], lo=0, integer=True)
    if "endpoints" in d:
        if not isinstance(d["endpoints"], list):
            raise ConfigError("endpoints", "expected a list")
        kw["endpoints"] = tuple(_endpoint(f"endpoints[{i}]", e) for i, e in enumerate(d["endpoints"]))
        systems = [e.target_system for e in kw["endpoints"]]
        if len(set(systems)) != len(systems):
            raise ConfigError("endpoints", "duplicate target_system")
    if "default_endpoint" in d:
        kw["default_endpoint"] = _endpoint("default_endpoint", d["default_endpoint"], "*")
    for name in ("approval_latency_ms", "dispute_delay_ms", "disposition_delay_ms"):
        if name in d:
            kw[name] = _range(name, d[name])
    for name in ("sod_deny_rate", "dispute_rate", "overturn_rate", "adjudication"):
        if name in d:
            kw[name] = _rate(name, d[name])
    for name in ("approval_transit_ms", "adjudication_delay_ms"):
        if name in d:
            kw[name] = _num(name, d[name], lo=0, integer=True)
    if d.get("approval_timeout_ms") is not None:
        kw["approval_timeout_ms"] = _num("approval_timeout_ms", d["approval_timeout_ms"], lo=1, integer=True)
    for name in ("role_catalog", "assets", "routing_rules"):
        if d.get(name) is not None:
            if not isinstance(d[name], str):
                raise ConfigError(name, "expected a path")
            kw[name] = d[name]
    if "workloads" in d:
        w = d["workloads"]
        if not isinstance(w, list) or any(x not in ("jml", "soc") for x in w):
            raise ConfigError("workloads", "expected a subset of [jml, soc]")
        kw["workloads"] = tuple(w)
    if "soc" in d:
        kw["soc"] = _soc(d["soc"])
    if "backoff" in d:
        kw["backoff"] = _backoff(d["backoff"])
    return ScenarioConfig(**kw)


def _soc(d: Any) -> SocConfig:
    if not isinstance(d, dict):
        raise ConfigError("soc", "expected an object")
    _known("soc.", d, SocConfig)
    kw: dict[str, Any] = {}
    if "weights" in d:
        w = d["weights"]
        if not isinstance(w, list) or len(w) != 3:
            raise ConfigError("soc.weights", "expected [w1, w2, w3]")
        kw["weights"] = tuple(_num(f"soc.weights[{i}]", x, lo=0.0) for i, x in enumerate(w))
        if sum(kw["weights"]) <= 0:
            raise ConfigError("soc.weights", "weights must not all be zero")
    if "threshold" in d:
        kw["threshold"] = _num("soc.threshold", d["threshold"], lo=0.0)
    if "bands" in d:
        b = d["bands"]
        if not isinstance(b, list) or len(b) != 2:
            raise ConfigError("soc.bands", "expected [low_max, medium_max]")
        lo, hi = (_num(f"soc.bands[{i}]", x, lo=0.0) for i, x in enumerate(b))
        if lo > hi:
            raise ConfigError("soc.bands", "cut-points must be ascending")
        kw["bands"] = (lo, hi)
    for name in ("window_ms", "lookback_ms", "identities"):
        if name in d:
            kw[name] = _num(f"soc.{name}", d[name], lo=1, integer=True)
    for name in ("burst_threshold", "burst_failures"):
        if name in d:
            kw[name] = _num(f"soc.{name}", d[name], lo=1, integer=True)
    if "bursts_per_hour" in d:
        kw["bursts_per_hour"] = _num("soc.bursts_per_hour", d["bursts_per_hour"], lo=0.0)
    if "crown_jewel_burst_fraction" in d:
        kw["crown_jewel_burst_fraction"] = _rate("soc.crown_jewel_burst_fraction", d["crown_jewel_burst_fraction"])
    return SocConfig(**kw)


def _backoff(d: Any) -> BackoffConfig:
    if not isinstance(d, dict):
        raise ConfigError("backoff", "expected an object")
    _known("backoff.", d, BackoffConfig)
    kw: dict[str, Any] = {}
    if "base_ms" in d:
        kw["base_ms"] = _num("backoff.base_ms", d["base_ms"], lo=1, integer=True)
    if "factor" in d:
        kw["factor"] = _num("backoff.factor", d["factor"], lo=1.0)
    if "cap_ms" in d:
        kw["cap_ms"] = _num("backoff.cap_ms", d["cap_ms"], lo=0, integer=True)
    if "max_retries" in d:
        kw["max_retries"] = _num("backoff.max_retries", d["max_retries"], lo=0, integer=True)
    return BackoffConfig(**kw)


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(p), f"cannot read: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}", exc.msg) from None
    return config_from_dict(doc, base_dir=str(p.parent))


def builtin_config(name: str = "nominal") -> ScenarioConfig:
    """One of the shipped configs (``nominal`` or ``degraded``)."""
    try:
        text = resources.files("govkernel.data").joinpath(f"{name}.json").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(name, "no such built-in config") from None
    return config_from_dict(json.loads(text))


def data_path(name: str):
    return resources.files("govkernel.data").joinpath(name)
