from govkernel.jml.agent import JmlAgent, JmlCosts
from govkernel.jml.model import (
    EDGES,
    SLA_MS,
    Account,
    IdentityGraphRecord,
    JmlTask,
    Resolution,
    RoleCatalog,
    SoDFinding,
    TaskState,
)
from govkernel.jml.planning import (
    Mutation,
    Plan,
    apply_all,
    apply_mutation,
    plan_mutations,
    resolve_roles,
    rollback_for,
    sod_check,
    target_accounts,
)

__all__ = [
    "EDGES", "SLA_MS", "Account", "IdentityGraphRecord", "JmlAgent", "JmlCosts", "JmlTask",
    "Mutation", "Plan", "Resolution", "RoleCatalog", "SoDFinding", "TaskState", "apply_all",
    "apply_mutation", "plan_mutations", "resolve_roles", "rollback_for", "sod_check", "target_accounts",
]
