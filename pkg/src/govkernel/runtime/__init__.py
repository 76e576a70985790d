"""Agent execution: invocation discipline, bounded judgment and service levels."""

from govkernel.runtime.agents import (
    AgentOutput,
    AgentRuntime,
    AgentSpec,
    Emit,
    InvocationResult,
    Lifecycle,
)
from govkernel.runtime.judgment import Bound, JudgmentTrace, TemplateExplainer, judge
from govkernel.runtime.slo import (
    AgentSLO,
    RollbackPolicy,
    apply_rollback_criteria,
    evaluate_slos,
    nearest_rank,
)

__all__ = [
    "AgentOutput",
    "AgentRuntime",
    "AgentSLO",
    "AgentSpec",
    "Bound",
    "Emit",
    "InvocationResult",
    "JudgmentTrace",
    "Lifecycle",
    "RollbackPolicy",
    "TemplateExplainer",
    "apply_rollback_criteria",
    "evaluate_slos",
    "judge",
    "nearest_rank",
]
