//! The materialized view of the audit log.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::error::{RcmError, Result};
use crate::event::{AuditEvent, Change, RefineOutcome, Transition};
use crate::ids::*;
use crate::lifecycle::{ChangeState, WorkItemState};
use crate::model::*;

/// Full system state. Two states are equal iff every record is equal, which is
/// what replay determinism is checked against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub last_seq: u64,
    pub last_at: Option<Timestamp>,
    pub sites: BTreeMap<SiteId, Site>,
    pub actors: BTreeMap<ActorId, Actor>,
    pub requests: BTreeMap<RequestId, ChangeRequest>,
    pub requirements: BTreeMap<RequirementId, Requirement>,
    pub links: BTreeMap<LinkId, TraceLink>,
    /// Every analysis ever recorded per request, oldest first.
    pub analyses: BTreeMap<RequestId, Vec<AnalysisRecord>>,
    /// Votes of the current decision cycle.
    pub votes: BTreeMap<RequestId, BTreeMap<ActorId, Vote>>,
    pub decisions: BTreeMap<RequestId, Vec<Decision>>,
    pub work_items: BTreeMap<WorkItemId, WorkItem>,
    pub sprints: BTreeMap<SprintId, Sprint>,
    pub sessions: BTreeMap<WorkItemId, EstimationSession>,
    pub verifications: BTreeMap<WorkItemId, Vec<VerificationRecord>>,
    pub validations: BTreeMap<WorkItemId, Vec<ValidationRecord>>,
    pub idempotency_keys: BTreeMap<String, RequestId>,
}

fn corrupt(seq: u64, reason: impl Into<String>) -> RcmError {
    RcmError::CorruptLog {
        seq,
        reason: reason.into(),
    }
}

impl State {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds state from a complete log. Fails with `CorruptLog` naming the
    /// first missing or inapplicable seq.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a AuditEvent>) -> Result<Self> {
        let mut state = Self::new();
        state.replay_onto(events)?;
        Ok(state)
    }

    /// Applies a log suffix on top of this state (e.g. after a snapshot).
    pub fn replay_onto<'a>(&mut self, events: impl IntoIterator<Item = &'a AuditEvent>) -> Result<()> {
        for event in events {
            let expected = self.last_seq + 1;
            if event.seq != expected {
                return Err(corrupt(expected, "sequence gap"));
            }
            self.apply(event).map_err(|e| match e {
                RcmError::CorruptLog { .. } => e,
                other => corrupt(event.seq, other.to_string()),
            })?;
        }
        Ok(())
    }

    pub fn request(&self, id: &RequestId) -> Result<&ChangeRequest> {
        self.requests
            .get(id)
            .ok_or_else(|| RcmError::UnknownRequest(id.0.clone()))
    }

    pub fn work_item(&self, id: &WorkItemId) -> Result<&WorkItem> {
        self.work_items
            .get(id)
            .ok_or_else(|| RcmError::UnknownWorkItem(id.0.clone()))
    }

    pub fn requirement(&self, id: &RequirementId) -> Result<&Requirement> {
        self.requirements
            .get(id)
            .ok_or_else(|| RcmError::UnknownRequirement(id.0.clone()))
    }

    pub fn sprint(&self, id: &SprintId) -> Result<&Sprint> {
        self.sprints
            .get(id)
            .ok_or_else(|| RcmError::UnknownSprint(id.0.clone()))
    }

    pub fn links_of<'a>(&'a self, request: &'a RequestId) -> impl Iterator<Item = &'a TraceLink> + 'a {
        self.links.values().filter(move |l| &l.request_id == request)
    }

    /// Analysis of the request's current cycle, if any.
    pub fn current_analysis(&self, request: &ChangeRequest) -> Option<&AnalysisRecord> {
        self.analyses
            .get(&request.id)
            .and_then(|all| all.last())
            .filter(|a| a.cycle == request.analysis_cycle)
    }

    pub fn latest_decision(&self, request: &RequestId) -> Option<&Decision> {
        self.decisions.get(request).and_then(|d| d.last())
    }

    pub fn stories_of<'a>(&'a self, request: &'a RequestId) -> impl Iterator<Item = &'a WorkItem> + 'a {
        self.work_items
            .values()
            .filter(move |w| &w.parent_request == request && w.kind == WorkItemKind::UserStory)
    }

    pub fn actors_with_role(&self, role: Role) -> impl Iterator<Item = &Actor> {
        self.actors.values().filter(move |a| a.role == role)
    }

    /// Applies one event. The event must be the next in sequence.
    pub fn apply(&mut self, event: &AuditEvent) -> Result<()> {
        if event.seq != self.last_seq + 1 {
            return Err(corrupt(self.last_seq + 1, "sequence gap"));
        }
        self.apply_change(&event.payload)?;
        self.last_seq = event.seq;
        self.last_at = Some(event.at);
        Ok(())
    }

    fn request_mut(&mut self, id: &RequestId) -> Result<&mut ChangeRequest> {
        self.requests
            .get_mut(id)
            .ok_or_else(|| RcmError::ReferentialError(format!("request {id}")))
    }

    fn work_item_mut(&mut self, id: &WorkItemId) -> Result<&mut WorkItem> {
        self.work_items
            .get_mut(id)
            .ok_or_else(|| RcmError::ReferentialError(format!("work item {id}")))
    }

    fn move_request(&mut self, id: &RequestId, t: Transition<ChangeState>) -> Result<()> {
        let request = self.request_mut(id)?;
        if request.state != t.from {
            return Err(RcmError::illegal_state(format!(
                "{id} is {:?}, event expects {:?}",
                request.state, t.from
            )));
        }
        request.state = t.to;
        Ok(())
    }

    fn move_item(&mut self, id: &WorkItemId, t: Transition<WorkItemState>) -> Result<()> {
        let item = self.work_item_mut(id)?;
        if item.state != t.from {
            return Err(RcmError::illegal_state(format!(
                "{id} is {:?}, event expects {:?}",
                item.state, t.from
            )));
        }
        item.state = t.to;
        Ok(())
    }

    fn apply_change(&mut self, change: &Change) -> Result<()> {
        match change {
            Change::SiteRegistered { site } => {
                if self.sites.contains_key(&site.id) {
                    return Err(RcmError::validation(format!("site {} already registered", site.id)));
                }
                self.sites.insert(site.id.clone(), site.clone());
            }
            Change::SiteActivation { site_id, new, .. } => {
                let site = self
                    .sites
                    .get_mut(site_id)
                    .ok_or_else(|| RcmError::ReferentialError(format!("site {site_id}")))?;
                site.active = *new;
            }
            Change::ActorRegistered { actor } => {
                if !self.sites.contains_key(&actor.site) {
                    return Err(RcmError::ReferentialError(format!("site {}", actor.site)));
                }
                if self.actors.contains_key(&actor.id) {
                    return Err(RcmError::validation(format!("actor {} already registered", actor.id)));
                }
                self.actors.insert(actor.id.clone(), actor.clone());
            }
            Change::RequirementRegistered { requirement } => {
                if self.requirements.contains_key(&requirement.id) {
                    return Err(RcmError::validation(format!(
                        "requirement {} already registered",
                        requirement.id
                    )));
                }
                self.requirements
                    .insert(requirement.id.clone(), requirement.clone());
            }
            Change::RequirementRetired { requirement_id } => {
                let req = self
                    .requirements
                    .get_mut(requirement_id)
                    .ok_or_else(|| RcmError::ReferentialError(format!("requirement {requirement_id}")))?;
                req.status = RequirementStatus::Retired;
            }
            Change::RequestSubmitted {
                request,
                idempotency_key,
            } => {
                if !self.actors.contains_key(&request.initiator) {
                    return Err(RcmError::ReferentialError(format!("actor {}", request.initiator)));
                }
                if self.requests.contains_key(&request.id) {
                    return Err(RcmError::validation(format!("request {} exists", request.id)));
                }
                if let Some(key) = idempotency_key {
                    self.idempotency_keys.insert(key.clone(), request.id.clone());
                }
                self.requests.insert(request.id.clone(), request.clone());
            }
            Change::RequestTransitioned {
                request_id,
                transition,
                ..
            } => self.move_request(request_id, *transition)?,
            Change::RequestClarified {
                request_id,
                new_priority,
                new_change_type,
                note,
                ..
            } => {
                let request = self.request_mut(request_id)?;
                request.priority = *new_priority;
                request.change_type = *new_change_type;
                request.clarifications.push(note.clone());
            }
            Change::TraceLinked { request_id, links } => {
                for link in links {
                    if !self.requirements.contains_key(&link.requirement_id) {
                        return Err(RcmError::ReferentialError(format!(
                            "requirement {}",
                            link.requirement_id
                        )));
                    }
                }
                let request = self.request_mut(request_id)?;
                request.trace_links.extend(links.iter().map(|l| l.id.clone()));
                for link in links {
                    self.links.insert(link.id.clone(), link.clone());
                }
            }
            Change::DuplicateMarked {
                request_id,
                canonical_id,
                transition,
            } => {
                if !self.requests.contains_key(canonical_id) {
                    return Err(RcmError::ReferentialError(format!("request {canonical_id}")));
                }
                self.move_request(request_id, *transition)?;
                self.request_mut(request_id)?.duplicate_of = Some(canonical_id.clone());
            }
            Change::AnalysisRecorded { record, transition } => {
                self.request_mut(&record.request_id)?;
                if let Some(t) = transition {
                    self.move_request(&record.request_id, *t)?;
                }
                self.analyses
                    .entry(record.request_id.clone())
                    .or_default()
                    .push(record.clone());
            }
            Change::VoteCast { vote, .. } => {
                self.request_mut(&vote.request_id)?;
                self.votes
                    .entry(vote.request_id.clone())
                    .or_default()
                    .insert(vote.member.clone(), vote.clone());
            }
            Change::DecisionFinalized {
                decision,
                transition,
            } => {
                self.move_request(&decision.request_id, *transition)?;
                self.votes.remove(&decision.request_id);
                self.decisions
                    .entry(decision.request_id.clone())
                    .or_default()
                    .push(decision.clone());
            }
            Change::Refined {
                request_id,
                outcome,
                transition,
            } => {
                if let Some(t) = transition {
                    self.move_request(request_id, *t)?;
                }
                let request = self.request_mut(request_id)?;
                match outcome {
                    RefineOutcome::Ready => request.ready = true,
                    RefineOutcome::ReferBack { reason } => {
                        request.ready = false;
                        request.analysis_cycle += 1;
                        request.referrals.push(reason.clone());
                    }
                }
            }
            Change::Categorized {
                request_id,
                items,
                transition,
            } => {
                self.move_request(request_id, *transition)?;
                let request = self.request_mut(request_id)?;
                request.work_items.extend(items.iter().map(|w| w.id.clone()));
                for item in items {
                    self.work_items.insert(item.id.clone(), item.clone());
                }
            }
            Change::EstimationRound {
                session,
                story_points,
                transition,
            } => {
                if let Some(t) = transition {
                    self.move_item(&session.work_item_id, *t)?;
                }
                let item = self.work_item_mut(&session.work_item_id)?;
                if story_points.is_some() {
                    item.story_points = *story_points;
                }
                self.sessions
                    .insert(session.work_item_id.clone(), session.clone());
            }
            Change::Prioritized {
                work_item_id,
                transition,
                ranks,
            } => {
                if let Some(t) = transition {
                    self.move_item(work_item_id, *t)?;
                }
                for change in ranks {
                    self.work_item_mut(&change.work_item_id)?.rank = Some(change.new);
                }
            }
            Change::SprintCreated { sprint } => {
                if self.sprints.contains_key(&sprint.id) {
                    return Err(RcmError::validation(format!("sprint {} exists", sprint.id)));
                }
                self.sprints.insert(sprint.id.clone(), sprint.clone());
            }
            Change::SprintStateChanged { sprint_id, new, .. } => {
                self.sprints
                    .get_mut(sprint_id)
                    .ok_or_else(|| RcmError::ReferentialError(format!("sprint {sprint_id}")))?
                    .state = *new;
            }
            Change::SprintPlanned {
                sprint_id,
                committed,
                started_requests,
                ..
            } => {
                if !self.sprints.contains_key(sprint_id) {
                    return Err(RcmError::ReferentialError(format!("sprint {sprint_id}")));
                }
                for story in committed {
                    self.move_item(
                        &story.work_item_id,
                        Transition::new(WorkItemState::Prioritized, WorkItemState::InSprint),
                    )?;
                    self.work_item_mut(&story.work_item_id)?.sprint = Some(sprint_id.clone());
                }
                let sprint = self.sprints.get_mut(sprint_id).expect("checked above");
                sprint
                    .committed_item_ids
                    .extend(committed.iter().map(|s| s.work_item_id.clone()));
                for request in started_requests {
                    self.move_request(
                        request,
                        Transition::new(ChangeState::Categorized, ChangeState::InProgress),
                    )?;
                }
            }
            Change::ImplementationStatus {
                work_item_id,
                developer,
                transition,
                ..
            } => {
                if let Some(t) = transition {
                    self.move_item(work_item_id, *t)?;
                }
                self.work_item_mut(work_item_id)?.assignee = Some(developer.clone());
            }
            Change::VerificationRecorded { record, transition } => {
                self.move_item(&record.work_item_id, *transition)?;
                self.verifications
                    .entry(record.work_item_id.clone())
                    .or_default()
                    .push(record.clone());
            }
            Change::ValidationRecorded { record, transition } => {
                self.move_item(&record.work_item_id, *transition)?;
                self.validations
                    .entry(record.work_item_id.clone())
                    .or_default()
                    .push(record.clone());
            }
            Change::WorkItemReleased {
                work_item_id,
                transition,
                request_released,
            } => {
                self.move_item(work_item_id, *transition)?;
                if let Some(t) = request_released {
                    let parent = self.work_item_mut(work_item_id)?.parent_request.clone();
                    self.move_request(&parent, *t)?;
                }
            }
        }
        Ok(())
    }
}
