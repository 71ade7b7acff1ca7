//! Implementation progress, QA verification, stakeholder validation and
//! production release of user stories.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::engine::{check_item_path, check_path, Engine, EventSink};
use crate::error::{RcmError, Result};
use crate::event::{Change, Transition};
use crate::ids::*;
use crate::lifecycle::{ChangeState, WorkItemState};
use crate::model::*;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationInput {
    pub work_item_id: WorkItemId,
    pub functional_pass: bool,
    pub nonfunctional_pass: bool,
    pub regression_passed: bool,
    #[serde(default)]
    pub deviations: Vec<String>,
    pub verifier: ActorId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationInput {
    pub work_item_id: WorkItemId,
    pub verdict: ValidationVerdict,
    #[serde(default)]
    pub issues: Vec<String>,
    pub validator: ActorId,
}

impl<C: Clock, S: EventSink> Engine<C, S> {
    fn story(&self, id: &WorkItemId) -> Result<&WorkItem> {
        let item = self.state.work_item(id)?;
        if item.kind == WorkItemKind::Epic {
            return Err(RcmError::illegal_state(format!("{id} is an epic")));
        }
        Ok(item)
    }

    /// Reports implementation progress. `DevTested` hands the story to QA.
    pub fn update_implementation_status(
        &mut self,
        work_item_id: &WorkItemId,
        stage: ImplementationStage,
        actor: &ActorId,
    ) -> Result<WorkItem> {
        let item = self.story(work_item_id)?;
        let from = item.state;
        if !matches!(from, WorkItemState::InSprint | WorkItemState::InImplementation) {
            return Err(RcmError::illegal_state(format!(
                "status updates need InSprint or InImplementation; {work_item_id} is {from:?}"
            )));
        }
        self.require_role(actor, &[Role::Developer], "report implementation status")?;
        let mut path = Vec::new();
        if from == WorkItemState::InSprint {
            path.push(WorkItemState::InImplementation);
        }
        if stage == ImplementationStage::DevTested {
            path.push(WorkItemState::DevTested);
            path.push(WorkItemState::InVerification);
        }
        check_item_path(from, &path)?;
        let transition = path.last().map(|&to| Transition::new(from, to));
        self.commit(
            actor,
            Change::ImplementationStatus {
                work_item_id: work_item_id.clone(),
                developer: actor.clone(),
                stage,
                transition,
            },
        )?;
        Ok(self.state.work_items[work_item_id].clone())
    }

    /// QA gate. A pass moves the story on to stakeholder validation; any
    /// failure sends it back to the developers with the deviations attached.
    pub fn record_verification(&mut self, input: VerificationInput) -> Result<WorkItem> {
        let item = self.story(&input.work_item_id)?;
        if item.state != WorkItemState::InVerification {
            return Err(RcmError::illegal_state(format!(
                "verification needs InVerification; {} is {:?}",
                input.work_item_id, item.state
            )));
        }
        self.require_role(&input.verifier, &[Role::QA], "verify changes")?;
        let all_pass = input.functional_pass && input.nonfunctional_pass && input.regression_passed;
        if all_pass && !input.deviations.is_empty() {
            return Err(RcmError::InconsistentRecord);
        }
        let record = VerificationRecord {
            work_item_id: input.work_item_id.clone(),
            verified_against: item.parent_request.clone(),
            functional_pass: input.functional_pass,
            nonfunctional_pass: input.nonfunctional_pass,
            regression_passed: input.regression_passed,
            deviations: input.deviations,
            verifier: input.verifier.clone(),
            at: self.peek_time(),
        };
        let path: &[WorkItemState] = if record.passed() {
            &[WorkItemState::Verified, WorkItemState::InValidation]
        } else {
            &[WorkItemState::InImplementation]
        };
        check_item_path(WorkItemState::InVerification, path)?;
        let transition = Transition::new(WorkItemState::InVerification, path[path.len() - 1]);
        let at = record.at;
        let id = input.work_item_id;
        self.commit_at(
            &input.verifier,
            Change::VerificationRecorded { record, transition },
            at,
        )?;
        Ok(self.state.work_items[&id].clone())
    }

    /// User acceptance. Reported issues return the story to implementation.
    pub fn record_validation(&mut self, input: ValidationInput) -> Result<WorkItem> {
        let item = self.story(&input.work_item_id)?;
        if item.state != WorkItemState::InValidation {
            return Err(RcmError::illegal_state(format!(
                "validation needs InValidation; {} is {:?}",
                input.work_item_id, item.state
            )));
        }
        self.require_role(
            &input.validator,
            &[Role::Stakeholder, Role::Client],
            "validate changes",
        )?;
        if input.verdict == ValidationVerdict::IssuesReported
            && input.issues.iter().all(|i| i.trim().is_empty())
        {
            return Err(RcmError::EmptyIssues);
        }
        let to = match input.verdict {
            ValidationVerdict::Accepted => WorkItemState::Accepted,
            ValidationVerdict::IssuesReported => WorkItemState::InImplementation,
        };
        let at = self.peek_time();
        let record = ValidationRecord {
            work_item_id: input.work_item_id.clone(),
            verdict: input.verdict,
            issues: input.issues,
            validator: input.validator.clone(),
            at,
        };
        let id = input.work_item_id;
        self.commit_at(
            &input.validator,
            Change::ValidationRecorded {
                record,
                transition: Transition::new(WorkItemState::InValidation, to),
            },
            at,
        )?;
        Ok(self.state.work_items[&id].clone())
    }

    /// Deploys an accepted story. Releasing the last unreleased story of a
    /// request releases the request in the same event.
    pub fn release(&mut self, work_item_id: &WorkItemId, actor: &ActorId) -> Result<WorkItem> {
        let item = self.story(work_item_id)?;
        if item.state != WorkItemState::Accepted {
            return Err(RcmError::illegal_state(format!(
                "release needs Accepted; {work_item_id} is {:?}",
                item.state
            )));
        }
        self.require_role(actor, &[Role::Maintenance], "release to production")?;
        let parent = &item.parent_request;
        let siblings_done = self
            .state
            .stories_of(parent)
            .filter(|w| &w.id != work_item_id)
            .all(|w| w.state == WorkItemState::Released);
        let request_state = self.state.requests[parent].state;
        let request_released = if siblings_done && request_state == ChangeState::InProgress {
            check_path(request_state, &[ChangeState::Released])?;
            Some(Transition::new(ChangeState::InProgress, ChangeState::Released))
        } else {
            None
        };
        self.commit(
            actor,
            Change::WorkItemReleased {
                work_item_id: work_item_id.clone(),
                transition: Transition::new(WorkItemState::Accepted, WorkItemState::Released),
                request_released,
            },
        )?;
        Ok(self.state.work_items[work_item_id].clone())
    }
}
