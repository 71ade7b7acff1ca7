//! Audit events: the single source of truth. Each event carries the old and
//! new values it changed, so the log reads without replay and [`crate::State::apply`]
//! never has to re-run business rules.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::ids::*;
use crate::lifecycle::{ChangeState, WorkItemState};
use crate::model::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Site,
    Actor,
    Request,
    Requirement,
    WorkItem,
    Sprint,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: String,
}

impl EntityRef {
    pub fn new(kind: EntityKind, id: impl Into<String>) -> Self {
        Self { kind, id: id.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub at: Timestamp,
    pub actor: ActorId,
    pub entity: EntityRef,
    pub action: String,
    pub payload: Change,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition<S> {
    pub from: S,
    pub to: S,
}

impl<S: Copy> Transition<S> {
    pub fn new(from: S, to: S) -> Self {
        Self { from, to }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RefineOutcome {
    Ready,
    ReferBack { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankChange {
    pub work_item_id: WorkItemId,
    pub old: Option<u32>,
    pub new: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedStory {
    pub work_item_id: WorkItemId,
    pub story_points: u32,
    pub rank: u32,
}

/// What an event changed. One variant per mutating operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Change {
    SiteRegistered {
        site: Site,
    },
    SiteActivation {
        site_id: SiteId,
        old: bool,
        new: bool,
    },
    ActorRegistered {
        actor: Actor,
    },
    RequirementRegistered {
        requirement: Requirement,
    },
    RequirementRetired {
        requirement_id: RequirementId,
    },
    RequestSubmitted {
        request: ChangeRequest,
        idempotency_key: Option<String>,
    },
    RequestTransitioned {
        request_id: RequestId,
        transition: Transition<ChangeState>,
        note: String,
    },
    RequestClarified {
        request_id: RequestId,
        old_priority: Priority,
        new_priority: Priority,
        old_change_type: ChangeType,
        new_change_type: ChangeType,
        note: String,
    },
    TraceLinked {
        request_id: RequestId,
        links: Vec<TraceLink>,
    },
    DuplicateMarked {
        request_id: RequestId,
        canonical_id: RequestId,
        transition: Transition<ChangeState>,
    },
    AnalysisRecorded {
        record: AnalysisRecord,
        transition: Option<Transition<ChangeState>>,
    },
    VoteCast {
        vote: Vote,
        replaced: Option<Vote>,
    },
    DecisionFinalized {
        decision: Decision,
        transition: Transition<ChangeState>,
    },
    Refined {
        request_id: RequestId,
        outcome: RefineOutcome,
        transition: Option<Transition<ChangeState>>,
    },
    Categorized {
        request_id: RequestId,
        items: Vec<WorkItem>,
        transition: Transition<ChangeState>,
    },
    EstimationRound {
        session: EstimationSession,
        story_points: Option<u32>,
        transition: Option<Transition<WorkItemState>>,
    },
    Prioritized {
        work_item_id: WorkItemId,
        transition: Option<Transition<WorkItemState>>,
        ranks: Vec<RankChange>,
    },
    SprintCreated {
        sprint: Sprint,
    },
    SprintStateChanged {
        sprint_id: SprintId,
        old: SprintState,
        new: SprintState,
    },
    SprintPlanned {
        sprint_id: SprintId,
        committed: Vec<PlannedStory>,
        skipped: Vec<PlannedStory>,
        remaining_capacity: u32,
        started_requests: Vec<RequestId>,
    },
    ImplementationStatus {
        work_item_id: WorkItemId,
        developer: ActorId,
        stage: ImplementationStage,
        transition: Option<Transition<WorkItemState>>,
    },
    VerificationRecorded {
        record: VerificationRecord,
        transition: Transition<WorkItemState>,
    },
    ValidationRecorded {
        record: ValidationRecord,
        transition: Transition<WorkItemState>,
    },
    WorkItemReleased {
        work_item_id: WorkItemId,
        transition: Transition<WorkItemState>,
        request_released: Option<Transition<ChangeState>>,
    },
}

impl Change {
    /// Human-readable verb stored next to the payload.
    pub fn action(&self) -> &'static str {
        match self {
            Self::SiteRegistered { .. } => "site.registered",
            Self::SiteActivation { .. } => "site.activation",
            Self::ActorRegistered { .. } => "actor.registered",
            Self::RequirementRegistered { .. } => "requirement.registered",
            Self::RequirementRetired { .. } => "requirement.retired",
            Self::RequestSubmitted { .. } => "request.submitted",
            Self::RequestTransitioned { .. } => "request.transitioned",
            Self::RequestClarified { .. } => "request.clarified",
            Self::TraceLinked { .. } => "request.trace_linked",
            Self::DuplicateMarked { .. } => "request.duplicate_marked",
            Self::AnalysisRecorded { .. } => "request.analysis_recorded",
            Self::VoteCast { .. } => "request.vote_cast",
            Self::DecisionFinalized { .. } => "request.decision_finalized",
            Self::Refined { .. } => "request.refined",
            Self::Categorized { .. } => "request.categorized",
            Self::EstimationRound { .. } => "work_item.estimation_round",
            Self::Prioritized { .. } => "work_item.prioritized",
            Self::SprintCreated { .. } => "sprint.created",
            Self::SprintStateChanged { .. } => "sprint.state_changed",
            Self::SprintPlanned { .. } => "sprint.planned",
            Self::ImplementationStatus { .. } => "work_item.implementation_status",
            Self::VerificationRecorded { .. } => "work_item.verification_recorded",
            Self::ValidationRecorded { .. } => "work_item.validation_recorded",
            Self::WorkItemReleased { .. } => "work_item.released",
        }
    }

    /// The entity the event is filed under.
    pub fn entity(&self) -> EntityRef {
        use EntityKind as K;
        match self {
            Self::SiteRegistered { site } => EntityRef::new(K::Site, site.id.as_str()),
            Self::SiteActivation { site_id, .. } => EntityRef::new(K::Site, site_id.as_str()),
            Self::ActorRegistered { actor } => EntityRef::new(K::Actor, actor.id.as_str()),
            Self::RequirementRegistered { requirement } => {
                EntityRef::new(K::Requirement, requirement.id.as_str())
            }
            Self::RequirementRetired { requirement_id } => {
                EntityRef::new(K::Requirement, requirement_id.as_str())
            }
            Self::RequestSubmitted { request, .. } => EntityRef::new(K::Request, request.id.as_str()),
            Self::RequestTransitioned { request_id, .. }
            | Self::RequestClarified { request_id, .. }
            | Self::TraceLinked { request_id, .. }
            | Self::DuplicateMarked { request_id, .. }
            | Self::Refined { request_id, .. }
            | Self::Categorized { request_id, .. } => EntityRef::new(K::Request, request_id.as_str()),
            Self::AnalysisRecorded { record, .. } => {
                EntityRef::new(K::Request, record.request_id.as_str())
            }
            Self::VoteCast { vote, .. } => EntityRef::new(K::Request, vote.request_id.as_str()),
            Self::DecisionFinalized { decision, .. } => {
                EntityRef::new(K::Request, decision.request_id.as_str())
            }
            Self::EstimationRound { session, .. } => {
                EntityRef::new(K::WorkItem, session.work_item_id.as_str())
            }
            Self::Prioritized { work_item_id, .. }
            | Self::ImplementationStatus { work_item_id, .. }
            | Self::WorkItemReleased { work_item_id, .. } => {
                EntityRef::new(K::WorkItem, work_item_id.as_str())
            }
            Self::VerificationRecorded { record, .. } => {
                EntityRef::new(K::WorkItem, record.work_item_id.as_str())
            }
            Self::ValidationRecorded { record, .. } => {
                EntityRef::new(K::WorkItem, record.work_item_id.as_str())
            }
            Self::SprintCreated { sprint } => EntityRef::new(K::Sprint, sprint.id.as_str()),
            Self::SprintStateChanged { sprint_id, .. } | Self::SprintPlanned { sprint_id, .. } => {
                EntityRef::new(K::Sprint, sprint_id.as_str())
            }
        }
    }
}
