"""Command-line driver: run scenarios, audit logs, report SLOs, inspect schemas."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from govkernel.canonical import canonical_json
from govkernel.contracts.catalog import default_registry
from govkernel.contracts.events import read_log, write_log
from govkernel.contracts.schema import SchemaDef, check_schema
from govkernel.errors import ConfigError, KernelError, MalformedSchema, ParseError
from govkernel.evidence import load_assets
from govkernel.identity import IdentityRegistry
from govkernel.invariants import audit_log
from govkernel.sim.config import builtin_config, data_path, load_config, parse_duration
from govkernel.sim.inject import inject_defects
from govkernel.sim.report import compute_slo_report
from govkernel.sim.scenario import World

EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3

WORKLOADS = {"run-jml": ("jml",), "run-soc": ("soc",), "run-all": ("jml", "soc")}


def _config(args):
    cfg = load_config(args.config) if args.config else builtin_config("nominal")
    cfg = replace(cfg, workloads=WORKLOADS[args.cmd])
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.duration is not None:
        cfg = replace(cfg, duration_ms=parse_duration(args.duration, "--duration"))
    if args.failure_rate is not None:
        if not 0.0 <= args.failure_rate <= 1.0:
            raise ConfigError("--failure-rate", "must lie in [0, 1]")
        cfg = replace(
            cfg,
            default_endpoint=replace(cfg.default_endpoint, failure_rate=args.failure_rate),
            endpoints=tuple(replace(e, failure_rate=args.failure_rate) for e in cfg.endpoints),
        )
    return cfg


def _emit(args, doc: dict, text: str) -> None:
    print(canonical_json(doc) if args.format == "json" else text)


def cmd_run(args) -> int:
    cfg = _config(args)
    world = World(cfg)
    result = world.run()
    out = world.write(result, args.out)
    summary = {
        "out": str(out),
        "events": result.report.counts.get("events", 0),
        "violations": len(result.audit.violations),
        "report": result.report.to_dict(),
    }
    _emit(args, summary, f"wrote {out}/events.jsonl, graph.json, report.json\n{result.report.to_text()}")
    return 0


def _sidecar(log: Path, explicit: str | None, name: str) -> Path | None:
    if explicit:
        return Path(explicit)
    p = log.parent / name
    return p if p.exists() else None


def _load_context(args):
    log = Path(args.log)
    items = read_log(log)
    reg_path = _sidecar(log, getattr(args, "registry", None), "registry.json")
    if reg_path is None:
        raise ConfigError("--registry", f"no registry.json next to {log}; pass --registry")
    registry = IdentityRegistry.from_export(json.loads(reg_path.read_text(encoding="utf-8")))
    assets_path = _sidecar(log, getattr(args, "assets", None), "assets.json") or data_path("assets.json")
    assets = load_assets(json.loads(Path(assets_path).read_text(encoding="utf-8")))
    return items, registry, assets


def cmd_audit(args) -> int:
    items, registry, assets = _load_context(args)
    report = audit_log(items, assets, default_registry(), registry)
    _emit(args, report.to_dict(), report.to_text())
    return EXIT_VIOLATIONS if report.violations else 0


def cmd_report(args) -> int:
    if args.no_audit:
        items, audit = read_log(args.log), None
    else:
        items, registry, assets = _load_context(args)
        audit = audit_log(items, assets, default_registry(), registry)
    rep = compute_slo_report(items, audit=audit)
    _emit(args, rep.to_dict(), rep.to_text())
    return 0


def cmd_schemas(args) -> int:
    reg = default_registry()
    if args.validate:
        bad = []
        for path in args.validate:
            try:
                docs = json.loads(Path(path).read_text(encoding="utf-8"))
                for d in docs if isinstance(docs, list) else [docs]:
                    check_schema(SchemaDef.from_dict(d))
            except (OSError, ValueError, KeyError, MalformedSchema) as exc:
                bad.append({"path": path, "error": str(exc)})
        _emit(args, {"invalid": bad}, "\n".join(f"{b['path']}: {b['error']}" for b in bad) or "all valid")
        return EXIT_VIOLATIONS if bad else 0
    schemas = reg.list_schemas()
    for s in schemas:
        check_schema(s)
    text = "\n".join(
        f"{s.oc_type:<20} v{s.version}  {'state-changing' if s.state_changing else 'informational':<14} "
        f"key=({', '.join(s.idempotency_recipe)})" + (f" floor={s.floor_seconds}s" if s.floor_seconds else "")
        for s in schemas
    )
    _emit(args, {"schemas": reg.export()}, text)
    return 0


def cmd_inject(args) -> int:
    items = read_log(args.log)
    out, ledger = inject_defects(items, args.k, np.random.default_rng(args.seed), default_registry())
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    write_log(dest / "events.jsonl", out)
    src = Path(args.log).parent
    for name in ("registry.json", "assets.json"):
        if (src / name).exists():
            (dest / name).write_text((src / name).read_text(encoding="utf-8"), encoding="utf-8")
    (dest / "ledger.json").write_text(canonical_json([d.to_dict() for d in ledger]) + "\n", encoding="utf-8")
    _emit(args, {"defects": [d.to_dict() for d in ledger]}, f"injected {len(ledger)} defect(s) into {dest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="govkernel", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--format", choices=("json", "text"), default="text")

    for name in WORKLOADS:
        r = sub.add_parser(name, parents=[fmt], help=f"run the {'/'.join(WORKLOADS[name])} scenario")
        r.add_argument("--seed", type=int)
        r.add_argument("--duration", help="e.g. 8h, 30m, 45s or milliseconds")
        r.add_argument("--config", help="scenario config JSON (default: built-in nominal)")
        r.add_argument("--out", default="run")
        r.add_argument("--failure-rate", type=float, dest="failure_rate")
        r.set_defaults(fn=cmd_run)

    a = sub.add_parser("audit", parents=[fmt], help="check invariants over an event log")
    a.add_argument("log")
    a.add_argument("--registry")
    a.add_argument("--assets")
    a.set_defaults(fn=cmd_audit)

    rp = sub.add_parser("report", parents=[fmt], help="SLO report from an event log")
    rp.add_argument("log")
    rp.add_argument("--registry")
    rp.add_argument("--assets")
    rp.add_argument("--no-audit", action="store_true", dest="no_audit")
    rp.set_defaults(fn=cmd_report)

    s = sub.add_parser("schemas", parents=[fmt], help="list the contract catalog or validate schema files")
    s.add_argument("--validate", nargs="+", metavar="FILE")
    s.set_defaults(fn=cmd_schemas)

    i = sub.add_parser("inject-defects", parents=[fmt], help="corrupt k events and write an injection ledger")
    i.add_argument("log")
    i.add_argument("--k", type=int, default=1)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out", required=True)
    i.set_defaults(fn=cmd_inject)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KernelError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
