//! The fixed lifecycle graphs for change requests and work items, and the
//! role matrix that guards each edge.

use serde::{Deserialize, Serialize};

use crate::model::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChangeState {
    Submitted,
    UnderReview,
    Traced,
    ClosedDuplicate,
    UnderAnalysis,
    Analyzed,
    Approved,
    Rejected,
    InBacklog,
    Categorized,
    InProgress,
    Released,
    Closed,
}

impl ChangeState {
    pub const ALL: [ChangeState; 13] = [
        Self::Submitted,
        Self::UnderReview,
        Self::Traced,
        Self::ClosedDuplicate,
        Self::UnderAnalysis,
        Self::Analyzed,
        Self::Approved,
        Self::Rejected,
        Self::InBacklog,
        Self::Categorized,
        Self::InProgress,
        Self::Released,
        Self::Closed,
    ];

    /// Every legal edge of the request lifecycle.
    pub const EDGES: [(ChangeState, ChangeState); 13] = [
        (Self::Submitted, Self::UnderReview),
        (Self::UnderReview, Self::Traced),
        (Self::Traced, Self::ClosedDuplicate),
        (Self::Traced, Self::UnderAnalysis),
        (Self::UnderAnalysis, Self::Analyzed),
        (Self::Analyzed, Self::Approved),
        (Self::Analyzed, Self::Rejected),
        (Self::Approved, Self::InBacklog),
        (Self::InBacklog, Self::UnderAnalysis),
        (Self::InBacklog, Self::Categorized),
        (Self::Categorized, Self::InProgress),
        (Self::InProgress, Self::Released),
        (Self::Released, Self::Closed),
    ];

    pub fn can_transition_to(self, target: ChangeState) -> bool {
        use ChangeState::*;
        matches!(
            (self, target),
            (Submitted, UnderReview)
                | (UnderReview, Traced)
                | (Traced, ClosedDuplicate)
                | (Traced, UnderAnalysis)
                | (UnderAnalysis, Analyzed)
                | (Analyzed, Approved)
                | (Analyzed, Rejected)
                | (Approved, InBacklog)
                | (InBacklog, UnderAnalysis)
                | (InBacklog, Categorized)
                | (Categorized, InProgress)
                | (InProgress, Released)
                | (Released, Closed)
        )
    }

    /// Archived states: kept forever, never left.
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Rejected | Self::ClosedDuplicate)
    }

    /// Roles allowed to drive `self -> target`. Empty for non-edges.
    pub fn edge_roles(self, target: ChangeState) -> &'static [Role] {
        use ChangeState::*;
        if !self.can_transition_to(target) {
            return &[];
        }
        match (self, target) {
            (UnderAnalysis, Analyzed) => &[Role::SystemAnalyst],
            (Approved, InBacklog) | (InBacklog, UnderAnalysis) | (InBacklog, Categorized) => {
                &[Role::ProductOwner, Role::ScrumMaster]
            }
            (Categorized, InProgress) => &[Role::Developer],
            (InProgress, Released) => &[Role::Maintenance],
            (Released, Closed) => &[Role::ProductOwner],
            _ => &[Role::CCBMember],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WorkItemState {
    New,
    Estimated,
    Prioritized,
    InSprint,
    InImplementation,
    DevTested,
    InVerification,
    Verified,
    InValidation,
    Accepted,
    Released,
}

impl WorkItemState {
    pub const ALL: [WorkItemState; 11] = [
        Self::New,
        Self::Estimated,
        Self::Prioritized,
        Self::InSprint,
        Self::InImplementation,
        Self::DevTested,
        Self::InVerification,
        Self::Verified,
        Self::InValidation,
        Self::Accepted,
        Self::Released,
    ];

    pub fn can_transition_to(self, target: WorkItemState) -> bool {
        use WorkItemState::*;
        matches!(
            (self, target),
            (New, Estimated)
                | (Estimated, Prioritized)
                | (Prioritized, InSprint)
                | (InSprint, InImplementation)
                | (InImplementation, DevTested)
                | (DevTested, InVerification)
                | (InVerification, Verified)
                | (InVerification, InImplementation)
                | (Verified, InValidation)
                | (InValidation, Accepted)
                | (InValidation, InImplementation)
                | (Accepted, Released)
        )
    }

    pub fn requires_points(self) -> bool {
        self >= Self::Estimated
    }

    pub fn requires_rank(self) -> bool {
        self >= Self::Prioritized
    }
}
