use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::ids::SiteId;
use crate::lifecycle::{ChangeState, WorkItemState};
use crate::model::Role;

pub type Result<T, E = RcmError> = core::result::Result<T, E>;

/// Every failure the model can report. [`RcmError::code`] is the stable,
/// machine-readable name shared by the REST API and the CLI.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RcmError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("actor {actor} ({role:?}) may not {action}")]
    Authorization {
        actor: String,
        role: Option<Role>,
        action: &'static str,
    },
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: ChangeState, to: ChangeState },
    #[error("illegal work item transition {from:?} -> {to:?}")]
    IllegalWorkItemTransition {
        from: WorkItemState,
        to: WorkItemState,
    },
    #[error("guard failed: {0}")]
    GuardFailed(&'static str),
    #[error("operation not allowed in current state: {0}")]
    IllegalState(String),
    #[error("unknown request {0}")]
    UnknownRequest(String),
    #[error("unknown requirement {0}")]
    UnknownRequirement(String),
    #[error("unknown work item {0}")]
    UnknownWorkItem(String),
    #[error("unknown sprint {0}")]
    UnknownSprint(String),
    #[error("unknown site {0}")]
    UnknownSite(String),
    #[error("trace link already exists: {request} -> {requirement}")]
    DuplicateLink { request: String, requirement: String },
    #[error("a request cannot duplicate itself")]
    SelfDuplicate,
    #[error("canonical request {canonical} was not submitted before {request}")]
    ChronologyViolation { request: String, canonical: String },
    #[error("requirement {0} is not trace-linked to the request")]
    UnlinkedRequirement(String),
    #[error("quorum not met, missing votes from sites {missing:?}")]
    QuorumNotMet { missing: Vec<SiteId> },
    #[error("tied vote ({approve} approve / {reject} reject), decision deferred")]
    TieDeferred { approve: usize, reject: usize },
    #[error("refer-back requires a reason")]
    EmptyReason,
    #[error("an epic needs at least one user story")]
    EmptyEpic,
    #[error("{0} is not a planning poker card")]
    IllegalCard(u32),
    #[error("epics are containers and cannot be estimated, ranked or planned")]
    EpicNotEstimable,
    #[error("sprint {0} is closed")]
    SprintClosed(String),
    #[error("verification record passes every check yet lists deviations")]
    InconsistentRecord,
    #[error("issues reported without any issue text")]
    EmptyIssues,
    #[error("event references unknown {0}")]
    ReferentialError(String),
    #[error("corrupt event log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("snapshot schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
}

impl RcmError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Validation(_) => "ValidationError",
            Self::Authorization { .. } => "AuthorizationError",
            Self::IllegalTransition { .. } | Self::IllegalWorkItemTransition { .. } => {
                "IllegalTransition"
            }
            Self::GuardFailed(_) => "GuardFailed",
            Self::IllegalState(_) => "IllegalState",
            Self::UnknownRequest(_) => "UnknownRequest",
            Self::UnknownRequirement(_) => "UnknownRequirement",
            Self::UnknownWorkItem(_) => "UnknownWorkItem",
            Self::UnknownSprint(_) => "UnknownSprint",
            Self::UnknownSite(_) => "UnknownSite",
            Self::DuplicateLink { .. } => "DuplicateLink",
            Self::SelfDuplicate => "SelfDuplicate",
            Self::ChronologyViolation { .. } => "ChronologyViolation",
            Self::UnlinkedRequirement(_) => "UnlinkedRequirement",
            Self::QuorumNotMet { .. } => "QuorumNotMet",
            Self::TieDeferred { .. } => "TieDeferred",
            Self::EmptyReason => "EmptyReason",
            Self::EmptyEpic => "EmptyEpic",
            Self::IllegalCard(_) => "IllegalCard",
            Self::EpicNotEstimable => "EpicNotEstimable",
            Self::SprintClosed(_) => "SprintClosed",
            Self::InconsistentRecord => "InconsistentRecord",
            Self::EmptyIssues => "EmptyIssues",
            Self::ReferentialError(_) => "ReferentialError",
            Self::CorruptLog { .. } => "CorruptLog",
            Self::StorageFailure(_) => "StorageFailure",
            Self::SchemaVersionMismatch { .. } => "SchemaVersionMismatch",
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    pub(crate) fn illegal_state(msg: impl Into<String>) -> Self {
        Self::IllegalState(msg.into())
    }
}
