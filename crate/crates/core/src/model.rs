//! Domain records. Every record is plain data; mutation happens only through
//! [`crate::Engine`] and [`crate::State::apply`].

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::ids::*;
use crate::lifecycle::{ChangeState, WorkItemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChangeType {
    Addition,
    Modification,
    Deletion,
    /// A defect that turns into a new requirement.
    DefectDriven,
    Clarification,
}

/// Lower value sorts first in the review queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Priority {
    Critical = 1,
    High = 2,
    #[default]
    Medium = 3,
    Low = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Severity {
    Blocker,
    Major,
    #[default]
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Initiator,
    Client,
    Stakeholder,
    CCBMember,
    SystemAnalyst,
    ProductOwner,
    ScrumMaster,
    Developer,
    QA,
    Maintenance,
}

impl Role {
    pub fn can_initiate(self) -> bool {
        matches!(self, Self::Initiator | Self::Client | Self::Stakeholder)
    }

    pub fn can_estimate(self) -> bool {
        matches!(self, Self::Developer | Self::ScrumMaster | Self::ProductOwner)
    }

    pub fn is_backlog_role(self) -> bool {
        matches!(self, Self::ProductOwner | Self::ScrumMaster)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub id: SiteId,
    pub name: String,
    pub utc_offset_minutes: i32,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub name: String,
    pub role: Role,
    pub site: SiteId,
}

/// Initiation fields supplied by whoever raises a change.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChangeDraft {
    pub title: String,
    pub description: String,
    pub change_type: Option<ChangeType>,
    pub business_value: u8,
    #[serde(default)]
    pub priority: Option<Priority>,
    #[serde(default)]
    pub severity: Option<Severity>,
    /// Defaults to the initiator's site.
    #[serde(default)]
    pub origin_site: Option<SiteId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRequest {
    pub id: RequestId,
    pub title: String,
    pub description: String,
    pub change_type: ChangeType,
    pub business_value: u8,
    pub priority: Priority,
    pub severity: Severity,
    pub initiator: ActorId,
    pub origin_site: SiteId,
    pub submitted_at: Timestamp,
    pub state: ChangeState,
    pub duplicate_of: Option<RequestId>,
    pub trace_links: Vec<LinkId>,
    pub work_items: Vec<WorkItemId>,
    pub clarifications: Vec<String>,
    pub referrals: Vec<String>,
    /// Incremented every time the backlog refers the request back to the CCB.
    pub analysis_cycle: u32,
    /// Set by a `Ready` refinement, cleared by a referral.
    pub ready: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RequirementStatus {
    Active,
    Retired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: RequirementId,
    pub title: String,
    pub description: String,
    pub status: RequirementStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    Impacts,
    Implements,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLink {
    pub id: LinkId,
    pub request_id: RequestId,
    pub requirement_id: RequirementId,
    pub relation: Relation,
    pub created_at: Timestamp,
    pub created_by: ActorId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactAnalysis {
    pub affected_requirement_ids: Vec<RequirementId>,
    pub affected_components: Vec<String>,
    pub scope_note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskCategory {
    Technical,
    Schedule,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Risk {
    pub category: RiskCategory,
    pub probability: f64,
    pub impact_level: u8,
    pub mitigation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBenefit {
    pub cost_person_hours: f64,
    pub expected_benefit: u8,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub request_id: RequestId,
    pub cycle: u32,
    pub impact: Option<ImpactAnalysis>,
    pub risks: Option<Vec<Risk>>,
    pub cost_benefit: Option<CostBenefit>,
    pub analyst: ActorId,
    pub completed_at: Timestamp,
}

impl AnalysisRecord {
    pub fn is_complete(&self) -> bool {
        self.impact.is_some() && self.risks.is_some() && self.cost_benefit.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteChoice {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub request_id: RequestId,
    pub member: ActorId,
    pub site: SiteId,
    pub choice: VoteChoice,
    pub rationale: String,
    pub cast_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub request_id: RequestId,
    pub cycle: u32,
    pub outcome: Outcome,
    pub reasons: String,
    pub votes: Vec<Vote>,
    pub decided_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkItemKind {
    Epic,
    UserStory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkItem {
    pub id: WorkItemId,
    pub parent_request: RequestId,
    pub kind: WorkItemKind,
    pub parent_epic: Option<WorkItemId>,
    pub title: String,
    pub story_points: Option<u32>,
    pub rank: Option<u32>,
    pub state: WorkItemState,
    pub sprint: Option<SprintId>,
    /// Developer who last reported implementation progress.
    pub assignee: Option<ActorId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SprintState {
    Planned,
    Active,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sprint {
    pub id: SprintId,
    pub name: String,
    pub capacity_points: u32,
    pub state: SprintState,
    pub committed_item_ids: Vec<WorkItemId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Open,
    Consensus,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationSession {
    pub id: SessionId,
    pub work_item_id: WorkItemId,
    pub round: u8,
    pub ballots: alloc::collections::BTreeMap<ActorId, u32>,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub work_item_id: WorkItemId,
    pub verified_against: RequestId,
    pub functional_pass: bool,
    pub nonfunctional_pass: bool,
    pub regression_passed: bool,
    pub deviations: Vec<String>,
    pub verifier: ActorId,
    pub at: Timestamp,
}

impl VerificationRecord {
    pub fn passed(&self) -> bool {
        self.functional_pass
            && self.nonfunctional_pass
            && self.regression_passed
            && self.deviations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationVerdict {
    Accepted,
    IssuesReported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub work_item_id: WorkItemId,
    pub verdict: ValidationVerdict,
    pub issues: Vec<String>,
    pub validator: ActorId,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImplementationStage {
    Started,
    InCodeReview,
    DevTested,
}
