//! Who hears about what. The matrix is a pure function of an event and the
//! state it was applied to; delivery lives with the caller.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::event::{AuditEvent, Change, RefineOutcome};
use crate::ids::*;
use crate::model::*;
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Log,
    Webhook,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub id: String,
    pub recipient: ActorId,
    pub trigger_event_seq: u64,
    pub channel: Channel,
    pub body: String,
    pub delivered: bool,
}

struct Recipients(Vec<ActorId>);

impl Recipients {
    fn add(&mut self, id: &ActorId) {
        if !self.0.contains(id) {
            self.0.push(id.clone());
        }
    }

    fn add_role(&mut self, state: &State, role: Role) {
        for actor in state.actors_with_role(role) {
            self.add(&actor.id);
        }
    }
}

/// Recipients and message for `event`, in a stable order. Empty when the
/// event does not notify anyone.
pub fn recipients(state: &State, event: &AuditEvent) -> (Vec<ActorId>, String) {
    let mut to = Recipients(Vec::new());
    let initiator_of = |id: &RequestId| state.requests.get(id).map(|r| r.initiator.clone());
    let body = match &event.payload {
        Change::DecisionFinalized { decision, .. } => {
            if let Some(initiator) = initiator_of(&decision.request_id) {
                to.add(&initiator);
            }
            to.add_role(state, Role::Developer);
            if decision.outcome == Outcome::Approved {
                to.add_role(state, Role::Stakeholder);
            }
            format!(
                "{} {:?}: {}",
                decision.request_id, decision.outcome, decision.reasons
            )
        }
        Change::Refined {
            request_id,
            outcome: RefineOutcome::ReferBack { reason },
            ..
        } => {
            to.add_role(state, Role::CCBMember);
            format!("{request_id} referred back to the CCB: {reason}")
        }
        Change::DuplicateMarked {
            request_id,
            canonical_id,
            ..
        } => {
            if let Some(initiator) = initiator_of(request_id) {
                to.add(&initiator);
            }
            format!("{request_id} closed as duplicate of {canonical_id}")
        }
        Change::ImplementationStatus {
            work_item_id,
            stage,
            ..
        } => {
            if let Some(item) = state.work_items.get(work_item_id) {
                if let Some(initiator) = initiator_of(&item.parent_request) {
                    to.add(&initiator);
                }
            }
            to.add_role(state, Role::Stakeholder);
            format!("{work_item_id} implementation status: {stage:?}")
        }
        Change::VerificationRecorded { record, .. } if !record.passed() => {
            match state.work_items.get(&record.work_item_id).and_then(|w| w.assignee.as_ref()) {
                Some(dev) => to.add(dev),
                None => to.add_role(state, Role::Developer),
            }
            format!(
                "{} failed verification: {:?}",
                record.work_item_id, record.deviations
            )
        }
        Change::ValidationRecorded { record, .. }
            if record.verdict == ValidationVerdict::IssuesReported =>
        {
            match state.work_items.get(&record.work_item_id).and_then(|w| w.assignee.as_ref()) {
                Some(dev) => to.add(dev),
                None => to.add_role(state, Role::Developer),
            }
            format!("{} issues reported: {:?}", record.work_item_id, record.issues)
        }
        Change::WorkItemReleased {
            work_item_id,
            request_released: Some(_),
            ..
        } => {
            let parent = state.work_items.get(work_item_id).map(|w| w.parent_request.clone());
            if let Some(initiator) = parent.as_ref().and_then(initiator_of) {
                to.add(&initiator);
            }
            to.add_role(state, Role::Stakeholder);
            to.add_role(state, Role::Client);
            match parent {
                Some(p) => format!("{p} released to production"),
                None => format!("{work_item_id} released to production"),
            }
        }
        _ => String::new(),
    };
    (to.0, body)
}

/// Notification records for `event` on `channel`, undelivered.
pub fn notifications_for(state: &State, event: &AuditEvent, channel: Channel) -> Vec<Notification> {
    let (to, body) = recipients(state, event);
    to.into_iter()
        .enumerate()
        .map(|(i, recipient)| Notification {
            id: format!("N-{}-{}", event.seq, i + 1),
            recipient,
            trigger_event_seq: event.seq,
            channel,
            body: body.clone(),
            delivered: false,
        })
        .collect()
}
