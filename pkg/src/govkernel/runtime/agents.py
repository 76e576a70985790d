"""Agents as functions from (input event, envelope) to signed outputs."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable

from govkernel.contracts.events import SignedEvent, sign_event, verify_event
from govkernel.contracts.schema import ContractRegistry
from govkernel.envelope import Envelope, IdSource, ReadOnly, random_hex128
from govkernel.errors import (
    LifecycleBlocked,
    ReadOnlyViolation,
    SchemaMismatch,
    TimeboxExceeded,
    UndeclaredOutput,
    VerificationFailed,
)
from govkernel.identity import AgentCredentials, IdentityRegistry
from govkernel.runtime.judgment import JudgmentTrace

AGENT_CODE_RE = re.compile(r"^[A-L][0-9]+$")


class Lifecycle(str, Enum):
    DEV = "dev"
    CANARY = "canary"
    PRODUCTION = "production"
    ROLLED_BACK = "rolled_back"


RUNNABLE = (Lifecycle.CANARY, Lifecycle.PRODUCTION)


@dataclass(frozen=True)
class AgentSpec:
    agent_code: str
    domain: str
    role_name: str
    input_schemas: frozenset[str]
    output_schemas: frozenset[str]
    identity: str
    lifecycle: Lifecycle = Lifecycle.PRODUCTION
    cost_ms: int = 0  # simulated duration of one invocation

    def check(self, contracts: ContractRegistry) -> None:
        if not AGENT_CODE_RE.match(self.agent_code) or self.agent_code[0] != self.domain:
            raise ValueError(f"bad agent code {self.agent_code!r} for domain {self.domain!r}")
        if not self.input_schemas or not self.output_schemas:
            raise ValueError(f"{self.agent_code}: input and output schema sets must be nonempty")
        for name in self.input_schemas | self.output_schemas:
            if not contracts.has(name):
                raise ValueError(f"{self.agent_code}: schema {name} not registered")


@dataclass(frozen=True)
class Emit:
    """One output an agent asks the runtime to sign."""

    oc_type: str
    payload: dict
    envelope: Envelope | None = None  # defaults to the updated envelope


@dataclass
class AgentOutput:
    emits: list[Emit]
    envelope: Envelope
    cost_ms: int | None = None
    judgment_calls: list[JudgmentTrace] = field(default_factory=list)


@dataclass(frozen=True)
class InvocationResult:
    outputs: tuple[SignedEvent, ...]
    updated_envelope: Envelope
    judgment_calls: tuple[JudgmentTrace, ...] = ()
    finished_at: int = 0


AgentFn = Callable[[SignedEvent, Envelope, Any], AgentOutput]


class AgentRuntime:
    """Checks and signs agent outputs. Persisting them is the caller's job."""

    def __init__(
        self,
        contracts: ContractRegistry,
        identities: IdentityRegistry,
        *,
        id_source: IdSource = random_hex128,
    ):
        self.contracts = contracts
        self.identities = identities
        self.id_source = id_source
        self._specs: dict[str, AgentSpec] = {}
        self._creds: dict[str, AgentCredentials] = {}

    def register(self, spec: AgentSpec, creds: AgentCredentials) -> AgentSpec:
        spec.check(self.contracts)
        if creds.spiffe_uri != spec.identity:
            raise ValueError(f"{spec.agent_code}: credentials do not match spec identity")
        self._specs[spec.agent_code] = spec
        self._creds[spec.agent_code] = creds
        return spec

    def spec(self, code: str) -> AgentSpec:
        return self._specs[code]

    def specs(self) -> list[AgentSpec]:
        return list(self._specs.values())

    def set_lifecycle(self, code: str, lifecycle: Lifecycle) -> AgentSpec:
        spec = replace(self._specs[code], lifecycle=lifecycle)
        self._specs[code] = spec
        return spec

    def _check_outputs(self, spec: AgentSpec, emits: list[Emit], env: Envelope) -> None:
        for e in emits:
            if e.oc_type not in spec.output_schemas:
                raise UndeclaredOutput(f"{spec.agent_code} may not emit {e.oc_type}")
            out_env = e.envelope or env
            if (out_env.has(ReadOnly) or env.has(ReadOnly)) and self.contracts.state_changing(e.oc_type):
                raise ReadOnlyViolation(f"{spec.agent_code}: {e.oc_type} under read_only")

    def _sign_all(self, spec: AgentSpec, emits: list[Emit], env: Envelope, at: int) -> tuple[SignedEvent, ...]:
        creds = self._creds[spec.agent_code]
        return tuple(
            sign_event(
                self.contracts, self.identities, e.payload, e.oc_type, e.envelope or env, creds, at,
                id_source=self.id_source,
            )
            for e in emits
        )

    def invoke(
        self,
        spec: AgentSpec,
        agent_fn: AgentFn,
        e_in: SignedEvent,
        env: Envelope,
        now: int,
        ctx: Any = None,
        *,
        verify_input: bool = True,
    ) -> InvocationResult:
        spec = self._specs.get(spec.agent_code, spec)
        if e_in.oc_type not in spec.input_schemas:
            raise SchemaMismatch(f"{spec.agent_code} does not consume {e_in.oc_type}")
        if spec.lifecycle not in RUNNABLE:
            raise LifecycleBlocked(f"{spec.agent_code} is {spec.lifecycle.value}")
        if verify_input:
            v = verify_event(e_in, self.contracts, self.identities)
            if not v.passed:
                raise VerificationFailed(v)
        out = agent_fn(e_in, env, ctx)
        cost = spec.cost_ms if out.cost_ms is None else out.cost_ms
        limit = env.timebox_ms()
        if limit is not None and cost > limit:
            raise TimeboxExceeded(f"{spec.agent_code}: {cost} ms > {limit} ms")
        self._check_outputs(spec, out.emits, out.envelope)
        outputs = self._sign_all(spec, out.emits, out.envelope, now + cost)
        return InvocationResult(outputs, out.envelope, tuple(out.judgment_calls), now + cost)

    def emit(
        self, code: str, oc_type: str, payload: dict, env: Envelope, at: int
    ) -> SignedEvent:
        """Sign a single output outside an input-triggered invocation (timers, ACK hooks)."""
        spec = self._specs[code]
        if spec.lifecycle not in RUNNABLE:
            raise LifecycleBlocked(f"{code} is {spec.lifecycle.value}")
        emits = [Emit(oc_type, payload)]
        self._check_outputs(spec, emits, env)
        return self._sign_all(spec, emits, env, at)[0]
