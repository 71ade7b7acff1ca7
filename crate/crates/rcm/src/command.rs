//! Every operation the service offers, as data. The HTTP API and the CLI both
//! speak [`Command`]; [`ROUTES`] fixes how each one maps onto HTTP.

use std::collections::BTreeMap;

use rcm_core::analysis::AnalysisInput;
use rcm_core::backlog::CategorizationPlan;
use rcm_core::event::RefineOutcome;
use rcm_core::scenario::Roster;
use rcm_core::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub requirement_id: RequirementId,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    Health,
    State,
    ExportSnapshot,
    ImportSnapshot {
        document: Value,
    },
    Bootstrap {
        #[serde(default)]
        roster: Option<Roster>,
    },
    RegisterSite {
        site: Site,
    },
    SetSiteActive {
        site_id: SiteId,
        active: bool,
    },
    RegisterActor {
        actor: Actor,
    },
    RegisterRequirement {
        title: String,
        #[serde(default)]
        description: String,
    },
    RetireRequirement {
        requirement_id: RequirementId,
    },
    TraceReport {
        requirement_id: RequirementId,
    },
    Submit {
        #[serde(flatten)]
        draft: ChangeDraft,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        idempotency_key: Option<String>,
    },
    ListRequests {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        queue: Option<String>,
    },
    GetRequest {
        request_id: RequestId,
    },
    Transition {
        request_id: RequestId,
        target: ChangeState,
        #[serde(default)]
        note: String,
    },
    Clarify {
        request_id: RequestId,
        #[serde(default)]
        priority: Option<Priority>,
        #[serde(default)]
        change_type: Option<ChangeType>,
        #[serde(default)]
        note: String,
    },
    LinkRequirements {
        request_id: RequestId,
        links: Vec<LinkSpec>,
    },
    Duplicates {
        request_id: RequestId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    MarkDuplicate {
        request_id: RequestId,
        canonical_id: RequestId,
    },
    RecordAnalysis {
        request_id: RequestId,
        #[serde(flatten)]
        analysis: AnalysisInput,
    },
    CastVote {
        request_id: RequestId,
        choice: VoteChoice,
        #[serde(default)]
        rationale: String,
    },
    FinalizeDecision {
        request_id: RequestId,
        reasons: String,
    },
    Refine {
        request_id: RequestId,
        outcome: RefineOutcome,
    },
    Categorize {
        request_id: RequestId,
        plan: CategorizationPlan,
    },
    Phases {
        request_id: RequestId,
    },
    GetWorkItem {
        work_item_id: WorkItemId,
    },
    Estimate {
        work_item_id: WorkItemId,
        ballots: BTreeMap<ActorId, u32>,
    },
    Rank {
        work_item_id: WorkItemId,
        rank: u32,
    },
    UpdateStatus {
        work_item_id: WorkItemId,
        stage: ImplementationStage,
    },
    Verify {
        work_item_id: WorkItemId,
        functional_pass: bool,
        nonfunctional_pass: bool,
        regression_passed: bool,
        #[serde(default)]
        deviations: Vec<String>,
    },
    Validate {
        work_item_id: WorkItemId,
        verdict: ValidationVerdict,
        #[serde(default)]
        issues: Vec<String>,
    },
    Release {
        work_item_id: WorkItemId,
    },
    ListSprints,
    CreateSprint {
        name: String,
        capacity_points: u32,
    },
    PlanSprint {
        sprint_id: SprintId,
    },
    SetSprintState {
        sprint_id: SprintId,
        state: SprintState,
    },
    Audit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from_seq: Option<u64>,
    },
    Notifications,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, Copy)]
pub struct Route {
    pub op: &'static str,
    pub method: Method,
    /// Axum-style template; `{name}` segments are command fields.
    pub path: &'static str,
}

const fn get(op: &'static str, path: &'static str) -> Route {
    Route {
        op,
        method: Method::Get,
        path,
    }
}

const fn post(op: &'static str, path: &'static str) -> Route {
    Route {
        op,
        method: Method::Post,
        path,
    }
}

pub const ROUTES: &[Route] = &[
    get("health", "/health"),
    get("state", "/state"),
    get("export_snapshot", "/snapshot"),
    post("import_snapshot", "/snapshot"),
    post("bootstrap", "/bootstrap"),
    post("register_site", "/sites"),
    post("set_site_active", "/sites/{site_id}/active"),
    post("register_actor", "/actors"),
    post("register_requirement", "/requirements"),
    post("retire_requirement", "/requirements/{requirement_id}/retire"),
    get("trace_report", "/requirements/{requirement_id}/trace-report"),
    post("submit", "/requests"),
    get("list_requests", "/requests"),
    get("get_request", "/requests/{request_id}"),
    post("transition", "/requests/{request_id}/transition"),
    post("clarify", "/requests/{request_id}/clarify"),
    post("link_requirements", "/requests/{request_id}/trace-links"),
    get("duplicates", "/requests/{request_id}/duplicates"),
    post("mark_duplicate", "/requests/{request_id}/duplicate-of"),
    post("record_analysis", "/requests/{request_id}/analysis"),
    post("cast_vote", "/requests/{request_id}/votes"),
    post("finalize_decision", "/requests/{request_id}/decision"),
    post("refine", "/requests/{request_id}/refine"),
    post("categorize", "/requests/{request_id}/categorize"),
    get("phases", "/requests/{request_id}/phases"),
    get("get_work_item", "/work-items/{work_item_id}"),
    post("estimate", "/work-items/{work_item_id}/estimation-rounds"),
    post("rank", "/work-items/{work_item_id}/rank"),
    post("update_status", "/work-items/{work_item_id}/status"),
    post("verify", "/work-items/{work_item_id}/verification"),
    post("validate", "/work-items/{work_item_id}/validation"),
    post("release", "/work-items/{work_item_id}/release"),
    get("list_sprints", "/sprints"),
    post("create_sprint", "/sprints"),
    post("plan_sprint", "/sprints/{sprint_id}/plan"),
    post("set_sprint_state", "/sprints/{sprint_id}/state"),
    get("audit", "/audit"),
    get("notifications", "/notifications"),
];

/// Header carrying the acting user.
pub const ACTOR_HEADER: &str = "X-Actor-Id";
/// Header carrying a client-chosen submission key.
pub const IDEMPOTENCY_HEADER: &str = "Idempotency-Key";

/// A command laid out as an HTTP call.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpCall {
    pub method: Method,
    pub path: String,
    pub query: Vec<(String, String)>,
    pub idempotency_key: Option<String>,
    pub body: Option<Value>,
}

fn path_params(template: &str) -> impl Iterator<Item = &str> {
    template
        .split('/')
        .filter_map(|seg| seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')))
}

fn scalar(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Command {
    pub fn op(&self) -> String {
        match serde_json::to_value(self) {
            Ok(Value::Object(map)) => map.get("op").map(scalar).unwrap_or_default(),
            _ => String::new(),
        }
    }

    pub fn route(&self) -> Route {
        let op = self.op();
        *ROUTES.iter().find(|r| r.op == op).expect("every command has a route")
    }

    /// True for commands that may append events.
    pub fn is_mutating(&self) -> bool {
        self.route().method == Method::Post
    }

    pub fn to_http(&self) -> HttpCall {
        let route = self.route();
        let Ok(Value::Object(mut fields)) = serde_json::to_value(self) else {
            unreachable!("commands serialize to objects")
        };
        fields.remove("op");
        let mut path = route.path.to_string();
        for name in path_params(route.path) {
            let value = fields.remove(name).map(|v| scalar(&v)).unwrap_or_default();
            path = path.replace(&format!("{{{name}}}"), &encode_segment(&value));
        }
        let idempotency_key = fields
            .remove("idempotency_key")
            .and_then(|v| v.as_str().map(str::to_owned));
        match route.method {
            Method::Get => HttpCall {
                method: route.method,
                path,
                query: fields
                    .iter()
                    .filter(|(_, v)| !v.is_null())
                    .map(|(k, v)| (k.clone(), scalar(v)))
                    .collect(),
                idempotency_key,
                body: None,
            },
            Method::Post => HttpCall {
                method: route.method,
                path,
                query: Vec::new(),
                idempotency_key,
                body: Some(Value::Object(fields)),
            },
        }
    }

    /// Rebuilds a command from the pieces of an HTTP request matched to
    /// `route`. Query values are read as JSON scalars when they parse.
    pub fn from_http(
        route: &Route,
        path: &BTreeMap<String, String>,
        query: &BTreeMap<String, String>,
        idempotency_key: Option<String>,
        body: Option<Value>,
    ) -> Result<Self, String> {
        let mut fields = match body {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(map)) => map,
            Some(_) => return Err("request body must be a JSON object".into()),
        };
        for (k, v) in query {
            let value = serde_json::from_str::<Value>(v)
                .ok()
                .filter(|v| v.is_number() || v.is_boolean())
                .unwrap_or_else(|| Value::String(v.clone()));
            fields.insert(k.clone(), value);
        }
        for (k, v) in path {
            fields.insert(k.clone(), Value::String(v.clone()));
        }
        if let Some(key) = idempotency_key {
            fields.entry("idempotency_key").or_insert(Value::String(key));
        }
        fields.insert("op".into(), Value::String(route.op.into()));
        serde_json::from_value(Value::Object(fields)).map_err(|e| e.to_string())
    }
}

fn encode_segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}
