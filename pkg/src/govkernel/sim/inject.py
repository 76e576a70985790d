"""Controlled log corruption for checking that audit catches what it should.

Each defect kind breaks exactly one invariant on exactly one action:

- ``strip_policy_refs`` empties an action's envelope policy list (traceability);
- ``flip_signature`` flips one signature byte of any event (provenance);
- ``drop_approval`` removes an approval from a release envelope (hitl, charged
  to the released action).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from govkernel.contracts.events import SignedEvent
from govkernel.contracts.schema import ContractRegistry
from govkernel.errors import UnknownTarget

DEFECT_KINDS = ("strip_policy_refs", "flip_signature", "drop_approval")
INVARIANT_OF = {"strip_policy_refs": "traceability", "flip_signature": "provenance", "drop_approval": "hitl"}


@dataclass(frozen=True)
class Defect:
    kind: str
    target_trace_id: str  # the event that was altered
    charged_trace_id: str  # the event audit should flag
    invariant: str
    index: int  # position in the log

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target_trace_id": self.target_trace_id,
            "charged_trace_id": self.charged_trace_id,
            "invariant": self.invariant,
            "index": self.index,
        }


def strip_policy_refs(ev: SignedEvent) -> SignedEvent:
    return replace(ev, envelope=replace(ev.envelope, policy_refs=()))


def flip_signature(ev: SignedEvent, byte: int = 0) -> SignedEvent:
    sig = bytearray(ev.signature)
    sig[byte % len(sig)] ^= 0x01
    return replace(ev, signature=bytes(sig))


def drop_approval(release: SignedEvent, which: int = 0) -> SignedEvent:
    approvals = release.envelope.approvals
    if not approvals:
        raise UnknownTarget(f"{release.trace_id} carries no approvals")
    kept = approvals[: which % len(approvals)] + approvals[which % len(approvals) + 1:]
    return replace(release, envelope=replace(release.envelope, approvals=kept))


def candidates(items: Sequence, contracts: ContractRegistry) -> dict[str, list[int]]:
    """Log positions each defect kind can be applied to."""
    out: dict[str, list[int]] = {k: [] for k in DEFECT_KINDS}
    for i, x in enumerate(items):
        if not isinstance(x, SignedEvent):
            continue
        out["flip_signature"].append(i)
        if contracts.has(x.oc_type) and contracts.state_changing(x.oc_type) and x.envelope.policy_refs:
            out["strip_policy_refs"].append(i)
        if x.oc_type == "ActionRelease" and x.envelope.approvals:
            out["drop_approval"].append(i)
    return out


def apply_defect(items: list, index: int, kind: str) -> Defect:
    ev = items[index]
    if not isinstance(ev, SignedEvent):
        raise UnknownTarget(f"log line {index} is not an event")
    if kind == "strip_policy_refs":
        items[index] = strip_policy_refs(ev)
        charged = ev.trace_id
    elif kind == "flip_signature":
        items[index] = flip_signature(ev)
        charged = ev.trace_id
    elif kind == "drop_approval":
        items[index] = drop_approval(ev)
        charged = ev.payload["released_trace_id"]
    else:
        raise UnknownTarget(f"unknown defect kind {kind!r}")
    return Defect(kind, ev.trace_id, charged, INVARIANT_OF[kind], index)


def inject_defects(
    items: Sequence, k: int, rng: np.random.Generator, contracts: ContractRegistry,
    kinds: Sequence[str] = DEFECT_KINDS,
) -> tuple[list, list[Defect]]:
    """Corrupt ``k`` distinct events; returns the new log and the injection ledger."""
    out = list(items)
    pools = {kind: list(v) for kind, v in candidates(out, contracts).items() if kind in kinds}
    used: set[int] = set()
    ledger: list[Defect] = []
    for _ in range(k):
        live = [kind for kind in kinds if any(i not in used for i in pools.get(kind, ()))]
        if not live:
            raise UnknownTarget(f"only {len(ledger)} injectable targets, {k} requested")
        kind = live[int(rng.integers(len(live)))]
        free = [i for i in pools[kind] if i not in used]
        idx = free[int(rng.integers(len(free)))]
        used.add(idx)
        ledger.append(apply_defect(out, idx, kind))
    return out, ledger
