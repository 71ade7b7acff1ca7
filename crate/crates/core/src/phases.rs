//! Maps audit events to the ten phases a change request passes through, so a
//! run can prove that every phase actually happened.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::event::{AuditEvent, Change, EntityKind, RefineOutcome};
use crate::ids::{RequestId, WorkItemId};
use crate::model::ValidationVerdict;
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    ChangeTraceability,
    UnderstandingNeedForChange,
    ChangeAnalysis,
    ChangeEvaluationAndDecision,
    ChangeCategorization,
    ChangePrioritization,
    EffortEstimation,
    ChangeImplementation,
    ChangeVerificationAndValidation,
    RequirementsBacklogManagement,
}

impl Phase {
    pub const ALL: [Phase; 10] = [
        Self::ChangeTraceability,
        Self::UnderstandingNeedForChange,
        Self::ChangeAnalysis,
        Self::ChangeEvaluationAndDecision,
        Self::ChangeCategorization,
        Self::ChangePrioritization,
        Self::EffortEstimation,
        Self::ChangeImplementation,
        Self::ChangeVerificationAndValidation,
        Self::RequirementsBacklogManagement,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::ChangeTraceability => "Change Traceability",
            Self::UnderstandingNeedForChange => "Understanding Need for Change",
            Self::ChangeAnalysis => "Change Analysis",
            Self::ChangeEvaluationAndDecision => "Change Evaluation & Decision",
            Self::ChangeCategorization => "Change Categorization",
            Self::ChangePrioritization => "Change Prioritization",
            Self::EffortEstimation => "Effort Estimation",
            Self::ChangeImplementation => "Change Implementation",
            Self::ChangeVerificationAndValidation => "Change Verification and Validation",
            Self::RequirementsBacklogManagement => "Requirements Backlog Management",
        }
    }

    /// Does `event` evidence this phase? Verification and validation is
    /// evidenced by the accepting validation, which is only reachable after a
    /// passing verification.
    fn evidenced_by(self, change: &Change) -> bool {
        match (self, change) {
            (Self::ChangeTraceability, Change::TraceLinked { .. }) => true,
            (Self::UnderstandingNeedForChange, Change::RequestClarified { .. }) => true,
            (Self::ChangeAnalysis, Change::AnalysisRecorded { transition, .. }) => transition.is_some(),
            (Self::ChangeEvaluationAndDecision, Change::DecisionFinalized { .. }) => true,
            (Self::ChangeCategorization, Change::Categorized { .. }) => true,
            (Self::ChangePrioritization, Change::Prioritized { .. }) => true,
            (Self::EffortEstimation, Change::EstimationRound { story_points, .. }) => {
                story_points.is_some()
            }
            (Self::ChangeImplementation, Change::ImplementationStatus { .. }) => true,
            (Self::ChangeVerificationAndValidation, Change::ValidationRecorded { record, .. }) => {
                record.verdict == ValidationVerdict::Accepted
            }
            (
                Self::RequirementsBacklogManagement,
                Change::Refined {
                    outcome: RefineOutcome::Ready,
                    ..
                },
            ) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseEvidence {
    pub phase: Phase,
    pub label: String,
    /// First event evidencing the phase for this request.
    pub seq: Option<u64>,
}

fn concerns(state: &State, event: &AuditEvent, request: &RequestId) -> bool {
    match event.entity.kind {
        EntityKind::Request => event.entity.id == request.as_str(),
        EntityKind::WorkItem => state
            .work_items
            .get(&WorkItemId::new(event.entity.id.as_str()))
            .is_some_and(|w| &w.parent_request == request),
        _ => false,
    }
}

/// One line per phase, in the canonical order.
pub fn checklist(state: &State, events: &[AuditEvent], request: &RequestId) -> Vec<PhaseEvidence> {
    Phase::ALL
        .iter()
        .map(|&phase| PhaseEvidence {
            phase,
            label: phase.label().into(),
            seq: events
                .iter()
                .filter(|e| concerns(state, e, request))
                .find(|e| phase.evidenced_by(&e.payload))
                .map(|e| e.seq),
        })
        .collect()
}
