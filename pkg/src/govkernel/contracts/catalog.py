"""The shipped Output Contract catalog."""

from __future__ import annotations

from govkernel.contracts.schema import F, ContractRegistry, SchemaDef

ENTITLEMENT_PATTERN = r"[a-z0-9_]+:(group|app_role|permission):[A-Za-z0-9_.\-]+"

SCIM_MUTATION = SchemaDef(
    "SCIMMutation",
    1,
    (
        F("mutation_id", "string"),
        F("target_system", "string"),
        F("operation_type", "enum", enum=("create", "update", "deprovision")),
        F("target_resource", "enum", enum=("user", "group")),
        F("target_id", "string", nullable=True),
        F("employee_id", "string"),
        F("scim_payload", "object"),
        F("reason", "enum", enum=("joiner", "mover", "leaver", "remediation")),
        F("requested_at", "timestamp"),
        F("effective_ts", "timestamp"),
        F("rollback_of", "string", required=False),
    ),
    ordering_key_field="employee_id",
    idempotency_recipe=("target_system", "operation_type", "employee_id"),
    floor_seconds=60,
    state_changing=True,
    retention_class="audit-long",
    asset_field="target_system",
    description="create/update/deprovision of a directory identity",
)

ACCESS_CHANGE = SchemaDef(
    "AccessChangeEvent",
    1,
    (
        F("change_id", "string"),
        F("employee_id", "string"),
        F("target_system", "string"),
        F(
            "change",
            "enum",
            enum=("account_created", "account_updated", "account_removed"),
        ),
        F("active", "boolean", nullable=True),
        F("added", "list", items="string"),
        F("removed", "list", items="string"),
        F("mutation_node", "uri"),
        F("changed_at", "timestamp"),
    ),
    ordering_key_field="employee_id",
    idempotency_recipe=("change_id",),
    retention_class="audit-long",
    links=(("mutation_node", "derived_from"),),
)

SOD_VIOLATION = SchemaDef(
    "SoDViolation",
    1,
    (
        F("violation_id", "string"),
        F("employee_id", "string"),
        F("rule_id", "string"),
        F("conflicting", "list", items="string", max_length=2),
        F("severity", "enum", enum=("low", "medium", "high", "critical")),
        F("required_approvers", "list", items="string"),
        F("resolution", "enum", enum=("pending", "approved_exception", "blocked")),
        F("detected_at", "timestamp"),
    ),
    ordering_key_field="employee_id",
    idempotency_recipe=("violation_id", "resolution"),
    retention_class="audit-long",
)

HRIS_EVENT = SchemaDef(
    "HrisEvent",
    1,
    (
        F("event_id", "string", pattern=r"[A-Za-z0-9_.\-]+"),
        F(
            "event_type",
            "enum",
            enum=("hire", "transfer", "terminate", "extended_leave", "return_from_leave"),
        ),
        F("employee_id", "string", pattern=r"\S+"),
        F("name", "string"),
        F("department", "string"),
        F("job_title", "string"),
        F("location", "string"),
        F("manager_id", "string", nullable=True),
        F("employment_type", "enum", enum=("employee", "contractor")),
        F("start_date", "string", required=False, nullable=True),
        F("end_date", "string", required=False, nullable=True),
        F("effective_ts", "timestamp"),
    ),
    ordering_key_field="employee_id",
    idempotency_recipe=("employee_id", "event_type", "effective_ts"),
    retention_class="audit-long",
    evidence_uri="uri://hris/events/{event_id}",
)

RAW_ALERT = SchemaDef(
    "RawAlert",
    1,
    (
        F("alert_id", "string"),
        F("source", "enum", enum=("siem", "edr", "idp")),
        F(
            "alert_type",
            "enum",
            enum=("login_failure", "geo_anomaly", "token_misuse", "malware", "other"),
        ),
        F("identity_id", "string"),
        F("asset_id", "string"),
        F("severity", "real", minimum=0.0, maximum=1.0),
        F("confidence", "real", minimum=0.0, maximum=1.0),
        F("observed_at", "timestamp"),
    ),
    ordering_key_field="identity_id",
    idempotency_recipe=("alert_id",),
)

ALERT_CLUSTER = SchemaDef(
    "AlertCluster",
    1,
    (
        F("cluster_id", "string"),
        F("identity_id", "string"),
        F("alerts", "list", items="string"),
        F("window_start", "timestamp"),
        F("window_end", "timestamp"),
        F("risk_score", "real", minimum=0.0),
        F("severity", "real", minimum=0.0, maximum=1.0),
        F("confidence", "real", minimum=0.0, maximum=1.0),
        F("asset_criticality", "real", minimum=0.0, maximum=1.0),
        F("assets", "list", items="string"),
        F("features", "object"),
        F("summary", "string", required=False, max_length=280),
    ),
    ordering_key_field="identity_id",
    idempotency_recipe=("cluster_id",),
)

INCIDENT_CASE = SchemaDef(
    "IncidentCase",
    1,
    (
        F("incident_id", "string"),
        F("cluster_ref", "string"),
        F("cluster_node", "uri"),
        F("identity_id", "string"),
        F("assets", "list", items="string"),
        F("risk_score", "real", minimum=0.0),
        F("severity_band", "enum", enum=("low", "medium", "high")),
        F("status", "enum", enum=("open", "contained", "closed")),
        F("crown_jewel_involved", "boolean"),
        F("owner_roles", "list", items="string"),
        F("window_start", "timestamp"),
        F("window_end", "timestamp"),
        F("opened_at", "timestamp"),
    ),
    idempotency_recipe=("incident_id", "status"),
    retention_class="audit-long",
    links=(("cluster_node", "derived_from"),),
)

INCIDENT_TIMELINE = SchemaDef(
    "IncidentTimeline",
    1,
    (
        F("incident_ref", "string"),
        F("incident_node", "uri"),
        F("cluster_node", "uri"),
        F("entries", "list", items="object"),
        F("lookback_ms", "integer", minimum=0),
    ),
    idempotency_recipe=("incident_ref",),
    retention_class="audit-long",
    links=(("cluster_node", "derived_from"), ("incident_node", "part_of_thread")),
)

INCIDENT_SUMMARY = SchemaDef(
    "IncidentSummary",
    1,
    (
        F("incident_ref", "string"),
        F("incident_node", "uri"),
        F("identity_id", "string"),
        F("severity_band", "enum", enum=("low", "medium", "high")),
        F("crown_jewel_involved", "boolean"),
        F("assets", "list", items="string"),
        F("actions", "object"),
        F("cluster_to_incident_ms", "integer", minimum=0),
        F("opened_at", "timestamp"),
        F("closed_at", "timestamp"),
    ),
    idempotency_recipe=("incident_ref",),
    retention_class="audit-long",
    links=(("incident_node", "derived_from"),),
)

RISK_ASSESSMENT = SchemaDef(
    "RiskAssessment",
    1,
    (
        F("assessment_id", "string"),
        F(
            "assessment_type",
            "enum",
            enum=(
                "access_decision",
                "incident_risk",
                "rollback_decision",
                "summary_risk",
                "lifecycle_decision",
            ),
        ),
        F("subject", "string"),
        F("score", "real", minimum=0.0, maximum=1.0),
        F("decision", "string"),
        F("inputs", "object"),
        F("explanation", "string", required=False, max_length=400),
    ),
    idempotency_recipe=("assessment_id",),
    retention_class="audit-long",
)

METRICS_RECORD = SchemaDef(
    "MetricsRecord",
    1,
    (
        F("metrics_id", "string"),
        F("window_start", "timestamp"),
        F("window_end", "timestamp"),
        F("incidents", "integer", minimum=0),
        F("by_band", "object"),
        F("by_asset", "object"),
        F("repeat_offenders", "list", items="object"),
        F("mean_cluster_to_incident_ms", "real", nullable=True, minimum=0.0),
    ),
    idempotency_recipe=("metrics_id",),
)

POLICY_BUNDLE = SchemaDef(
    "PolicyBundle",
    1,
    (
        F("ref", "string"),
        F("policy_id", "string"),
        F("version", "string", nullable=True),
        F("title", "string"),
    ),
    idempotency_recipe=("ref",),
    retention_class="audit-long",
    evidence_uri="uri://policy/{ref}",
)

EVIDENCE_MANIFEST = SchemaDef(
    "EvidenceManifest",
    1,
    (
        F("manifest_uri", "uri"),
        F("subject", "string"),
        F("digest", "string", pattern=r"[0-9a-f]{64}"),
        F("entries", "integer", minimum=0),
    ),
    idempotency_recipe=("manifest_uri",),
    retention_class="audit-long",
    evidence_uri="{manifest_uri}",
)

_ACTION_FIELDS = (
    F("action_id", "string"),
    F("incident_ref", "string"),
    F("identity_id", "string"),
    F("asset_id", "string"),
    F("requested_at", "timestamp"),
)

REVOKE_TOKENS = SchemaDef(
    "RevokeTokens",
    1,
    _ACTION_FIELDS,
    ordering_key_field="identity_id",
    idempotency_recipe=("incident_ref", "identity_id", "action_id"),
    state_changing=True,
    retention_class="audit-long",
    asset_field="asset_id",
)

FORCE_PASSWORD_RESET = SchemaDef(
    "ForcePasswordReset",
    1,
    _ACTION_FIELDS,
    ordering_key_field="identity_id",
    idempotency_recipe=("incident_ref", "identity_id", "action_id"),
    state_changing=True,
    retention_class="audit-long",
    asset_field="asset_id",
)

OPEN_TICKET = SchemaDef(
    "OpenTicket",
    1,
    (
        F("ticket_id", "string"),
        F("reason", "string"),
        F("subject_ref", "string"),
        F("summary", "string", max_length=400),
        F("opened_at", "timestamp"),
    ),
    idempotency_recipe=("ticket_id",),
    retention_class="audit-long",
)

ACTION_RELEASE = SchemaDef(
    "ActionRelease",
    1,
    (
        F("released_trace_id", "string"),
        F("released_node", "uri"),
        F("released_oc_type", "string"),
        F("released_idempotency_key", "string", pattern=r"[0-9a-f]{64}"),
        F("asset", "string", nullable=True),
        F("approvals", "list", items="object"),
    ),
    idempotency_recipe=("released_trace_id",),
    retention_class="audit-long",
    links=(("released_node", "derived_from"),),
)

SLA_BREACH = SchemaDef(
    "SlaBreach",
    1,
    (
        F("task_id", "string"),
        F("employee_id", "string"),
        F("event_type", "string"),
        F("state", "string"),
        F("deadline", "timestamp"),
        F("observed_at", "timestamp"),
    ),
    idempotency_recipe=("task_id",),
    retention_class="audit-long",
)

CATALOG: tuple[SchemaDef, ...] = (
    SCIM_MUTATION,
    ACCESS_CHANGE,
    SOD_VIOLATION,
    HRIS_EVENT,
    RAW_ALERT,
    ALERT_CLUSTER,
    INCIDENT_CASE,
    INCIDENT_TIMELINE,
    INCIDENT_SUMMARY,
    RISK_ASSESSMENT,
    METRICS_RECORD,
    POLICY_BUNDLE,
    EVIDENCE_MANIFEST,
    REVOKE_TOKENS,
    FORCE_PASSWORD_RESET,
    OPEN_TICKET,
    ACTION_RELEASE,
    SLA_BREACH,
)


def default_registry(*, strict: bool = True) -> ContractRegistry:
    return ContractRegistry(CATALOG, strict=strict)
