"""Governed multi-agent runtime kernel and discrete-event simulator.

Agents exchange schema-validated, signed events wrapped in context envelopes.
An orchestrator gates human-approval constraints and delivers state-changing
events exactly once; an invariant engine audits traceability, human-in-the-loop
approval and provenance over the resulting event log and evidence graph.
"""

__version__ = "0.1.0"
