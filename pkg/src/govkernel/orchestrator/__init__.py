"""Routing and governed delivery."""

from govkernel.orchestrator.delivery import (
    BackoffPolicy,
    DeliveryState,
    Endpoint,
    Orchestrator,
    PendingAction,
    Response,
    Status,
    ordered_drain,
)
from govkernel.orchestrator.routing import (
    DeadLetter,
    Dispatch,
    RoutingRule,
    RuleMatch,
    load_rules,
    route,
    select_rule,
)

__all__ = [
    "BackoffPolicy",
    "DeadLetter",
    "DeliveryState",
    "Dispatch",
    "Endpoint",
    "Orchestrator",
    "PendingAction",
    "Response",
    "RoutingRule",
    "RuleMatch",
    "Status",
    "load_rules",
    "ordered_drain",
    "route",
    "select_rule",
]
