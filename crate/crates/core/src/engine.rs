use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use chrono::Duration;

use crate::clock::{Clock, Timestamp};
use crate::error::{RcmError, Result};
use crate::event::{AuditEvent, Change, Transition};
use crate::ids::*;
use crate::lifecycle::{ChangeState, WorkItemState};
use crate::model::*;
use crate::state::State;

/// Durable destination for committed events. `append` must not return
/// before the event is stored.
pub trait EventSink {
    fn append(&mut self, event: &AuditEvent) -> Result<()>;
}

impl<S: EventSink + ?Sized> EventSink for &mut S {
    fn append(&mut self, event: &AuditEvent) -> Result<()> {
        (**self).append(event)
    }
}

/// In-memory log. Rejects out-of-order appends.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemorySink {
    pub events: Vec<AuditEvent>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }
}

impl EventSink for MemorySink {
    fn append(&mut self, event: &AuditEvent) -> Result<()> {
        let expected = self.events.len() as u64 + 1;
        if event.seq != expected {
            return Err(RcmError::StorageFailure(format!(
                "append of seq {} but next seq is {expected}",
                event.seq
            )));
        }
        self.events.push(event.clone());
        Ok(())
    }
}

/// Single writer over [`State`]. Every successful mutating call validates
/// against the current state, persists exactly one event through the sink,
/// then applies it.
pub struct Engine<C, S> {
    pub(crate) state: State,
    clock: C,
    sink: S,
}

impl<C: Clock, S: EventSink> Engine<C, S> {
    pub fn new(clock: C, sink: S) -> Self {
        Self::with_state(State::new(), clock, sink)
    }

    /// Resumes from a recovered state; the sink must already hold its events.
    pub fn with_state(state: State, clock: C, sink: S) -> Self {
        Self { state, clock, sink }
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn sink_mut(&mut self) -> &mut S {
        &mut self.sink
    }

    pub fn into_parts(self) -> (State, C, S) {
        (self.state, self.clock, self.sink)
    }

    /// Event timestamps are strictly increasing even if the clock is not.
    fn next_timestamp(&self) -> Timestamp {
        let now = self.clock.now();
        match self.state.last_at {
            Some(last) if now <= last => last + Duration::milliseconds(1),
            _ => now,
        }
    }

    /// Timestamp the next committed event will carry.
    pub(crate) fn peek_time(&self) -> Timestamp {
        self.next_timestamp()
    }

    pub(crate) fn commit(&mut self, actor: &ActorId, change: Change) -> Result<AuditEvent> {
        let event = AuditEvent {
            seq: self.state.last_seq + 1,
            at: self.next_timestamp(),
            actor: actor.clone(),
            entity: change.entity(),
            action: change.action().to_owned(),
            payload: change,
        };
        self.sink.append(&event)?;
        self.state.apply(&event)?;
        Ok(event)
    }

    pub(crate) fn commit_at(&mut self, actor: &ActorId, change: Change, at: Timestamp) -> Result<AuditEvent> {
        let event = AuditEvent {
            seq: self.state.last_seq + 1,
            at,
            actor: actor.clone(),
            entity: change.entity(),
            action: change.action().to_owned(),
            payload: change,
        };
        self.sink.append(&event)?;
        self.state.apply(&event)?;
        Ok(event)
    }

    pub(crate) fn actor(&self, id: &ActorId) -> Result<&Actor> {
        self.state.actors.get(id).ok_or_else(|| RcmError::Authorization {
            actor: id.0.clone(),
            role: None,
            action: "act without being registered",
        })
    }

    pub(crate) fn require_role(
        &self,
        id: &ActorId,
        allowed: &[Role],
        action: &'static str,
    ) -> Result<Actor> {
        let actor = self.actor(id)?;
        if allowed.contains(&actor.role) {
            Ok(actor.clone())
        } else {
            Err(RcmError::Authorization {
                actor: id.0.clone(),
                role: Some(actor.role),
                action,
            })
        }
    }

    // ---- registry ----------------------------------------------------------

    pub fn register_site(&mut self, site: Site) -> Result<Site> {
        if site.name.trim().is_empty() {
            return Err(RcmError::validation("site name is empty"));
        }
        if !(-720..=840).contains(&site.utc_offset_minutes) {
            return Err(RcmError::validation(format!(
                "utc offset {} outside [-720, 840]",
                site.utc_offset_minutes
            )));
        }
        if self.state.sites.contains_key(&site.id) {
            return Err(RcmError::validation(format!("site {} already registered", site.id)));
        }
        let id = site.id.clone();
        self.commit(&ActorId::system(), Change::SiteRegistered { site })?;
        Ok(self.state.sites[&id].clone())
    }

    pub fn set_site_active(&mut self, site_id: &SiteId, active: bool) -> Result<Site> {
        let site = self
            .state
            .sites
            .get(site_id)
            .ok_or_else(|| RcmError::UnknownSite(site_id.0.clone()))?;
        let others_active = self
            .state
            .sites
            .values()
            .any(|s| s.active && &s.id != site_id);
        if !active && !others_active {
            return Err(RcmError::validation("at least one site must stay active"));
        }
        let old = site.active;
        self.commit(
            &ActorId::system(),
            Change::SiteActivation {
                site_id: site_id.clone(),
                old,
                new: active,
            },
        )?;
        Ok(self.state.sites[site_id].clone())
    }

    pub fn register_actor(&mut self, actor: Actor) -> Result<Actor> {
        if actor.name.trim().is_empty() {
            return Err(RcmError::validation("actor name is empty"));
        }
        if !self.state.sites.contains_key(&actor.site) {
            return Err(RcmError::UnknownSite(actor.site.0.clone()));
        }
        if self.state.actors.contains_key(&actor.id) || actor.id == ActorId::system() {
            return Err(RcmError::validation(format!("actor {} already registered", actor.id)));
        }
        let id = actor.id.clone();
        self.commit(&ActorId::system(), Change::ActorRegistered { actor })?;
        Ok(self.state.actors[&id].clone())
    }

    /// Adds a system requirement. `actor` is either the system bootstrap actor
    /// or a CCB member / system analyst.
    pub fn register_requirement(
        &mut self,
        title: &str,
        description: &str,
        actor: &ActorId,
    ) -> Result<Requirement> {
        if actor != &ActorId::system() {
            self.require_role(
                actor,
                &[Role::CCBMember, Role::SystemAnalyst],
                "register requirements",
            )?;
        }
        if title.trim().is_empty() {
            return Err(RcmError::validation("requirement title is empty"));
        }
        let id = RequirementId::new(format!("REQT-{}", self.state.requirements.len() + 1));
        let requirement = Requirement {
            id: id.clone(),
            title: title.into(),
            description: description.into(),
            status: RequirementStatus::Active,
        };
        self.commit(actor, Change::RequirementRegistered { requirement })?;
        Ok(self.state.requirements[&id].clone())
    }

    pub fn retire_requirement(&mut self, id: &RequirementId, actor: &ActorId) -> Result<Requirement> {
        if actor != &ActorId::system() {
            self.require_role(
                actor,
                &[Role::CCBMember, Role::SystemAnalyst],
                "retire requirements",
            )?;
        }
        let req = self.state.requirement(id)?;
        if req.status == RequirementStatus::Retired {
            return Err(RcmError::illegal_state(format!("requirement {id} already retired")));
        }
        self.commit(
            actor,
            Change::RequirementRetired {
                requirement_id: id.clone(),
            },
        )?;
        Ok(self.state.requirements[id].clone())
    }

    // ---- initiation and review --------------------------------------------

    /// Records a new change request in `Submitted`, queued for the CCB.
    ///
    /// With an idempotency key that was already used, returns the request
    /// created the first time and appends nothing.
    pub fn submit_change_request(
        &mut self,
        draft: ChangeDraft,
        actor: &ActorId,
        idempotency_key: Option<&str>,
    ) -> Result<ChangeRequest> {
        if let Some(existing) = idempotency_key.and_then(|k| self.state.idempotency_keys.get(k)) {
            return Ok(self.state.requests[existing].clone());
        }
        let initiator = self.actor(actor)?.clone();
        // Maintenance files production issues as defect-driven requests.
        let production_issue =
            initiator.role == Role::Maintenance && draft.change_type == Some(ChangeType::DefectDriven);
        if !initiator.role.can_initiate() && !production_issue {
            return Err(RcmError::Authorization {
                actor: actor.0.clone(),
                role: Some(initiator.role),
                action: "submit change requests",
            });
        }
        if draft.title.trim().is_empty() {
            return Err(RcmError::validation("title is empty"));
        }
        if draft.description.trim().is_empty() {
            return Err(RcmError::validation("description is empty"));
        }
        if !(1..=5).contains(&draft.business_value) {
            return Err(RcmError::validation(format!(
                "business value {} outside [1, 5]",
                draft.business_value
            )));
        }
        let change_type = draft
            .change_type
            .ok_or_else(|| RcmError::validation("change type is missing"))?;
        let origin_site = draft.origin_site.unwrap_or(initiator.site);
        if !self.state.sites.contains_key(&origin_site) {
            return Err(RcmError::UnknownSite(origin_site.0));
        }
        let id = RequestId::new(format!("CR-{}", self.state.requests.len() + 1));
        let submitted_at = self.peek_time();
        let request = ChangeRequest {
            id: id.clone(),
            title: draft.title,
            description: draft.description,
            change_type,
            business_value: draft.business_value,
            priority: draft.priority.unwrap_or_default(),
            severity: draft.severity.unwrap_or_default(),
            initiator: actor.clone(),
            origin_site,
            submitted_at,
            state: ChangeState::Submitted,
            duplicate_of: None,
            trace_links: Vec::new(),
            work_items: Vec::new(),
            clarifications: Vec::new(),
            referrals: Vec::new(),
            analysis_cycle: 1,
            ready: false,
        };
        self.commit_at(
            actor,
            Change::RequestSubmitted {
                request,
                idempotency_key: idempotency_key.map(String::from),
            },
            submitted_at,
        )?;
        Ok(self.state.requests[&id].clone())
    }

    /// Generic guarded transition along one edge of the request lifecycle.
    pub fn transition(
        &mut self,
        request_id: &RequestId,
        target: ChangeState,
        actor: &ActorId,
        note: &str,
    ) -> Result<ChangeRequest> {
        let request = self.state.request(request_id)?;
        let from = request.state;
        if !from.can_transition_to(target) {
            return Err(RcmError::IllegalTransition { from, to: target });
        }
        self.require_role(actor, from.edge_roles(target), "take this lifecycle edge")?;
        if let Some(guard) = self.unmet_guard(request, target) {
            return Err(RcmError::GuardFailed(guard));
        }
        self.commit(
            actor,
            Change::RequestTransitioned {
                request_id: request_id.clone(),
                transition: Transition::new(from, target),
                note: note.into(),
            },
        )?;
        Ok(self.state.requests[request_id].clone())
    }

    /// Name of the first unmet edge guard, if any. Edges whose guard names an
    /// operation are only taken by that operation.
    fn unmet_guard(&self, request: &ChangeRequest, target: ChangeState) -> Option<&'static str> {
        use ChangeState::*;
        let has_links = !request.trace_links.is_empty();
        match (request.state, target) {
            (UnderReview, Traced) | (Traced, UnderAnalysis) if !has_links => {
                Some("trace-links-required")
            }
            (Traced, ClosedDuplicate) => Some("duplicate-of-required"),
            (UnderAnalysis, Analyzed) => match self.state.current_analysis(request) {
                Some(a) if a.is_complete() => None,
                _ => Some("analysis-incomplete"),
            },
            (Analyzed, Approved) | (Analyzed, Rejected) => Some("decision-required"),
            (InBacklog, UnderAnalysis) => Some("referral-required"),
            (InBacklog, Categorized) => Some("categorization-required"),
            (Categorized, InProgress) => {
                let started = self
                    .state
                    .stories_of(&request.id)
                    .any(|w| w.state >= WorkItemState::InSprint);
                (!started).then_some("story-in-sprint-required")
            }
            (InProgress, Released) => {
                let mut stories = self.state.stories_of(&request.id).peekable();
                let all = stories.peek().is_some()
                    && self
                        .state
                        .stories_of(&request.id)
                        .all(|w| w.state == WorkItemState::Released);
                (!all).then_some("stories-unreleased")
            }
            _ => None,
        }
    }

    /// Requests awaiting the CCB: `Submitted` and `UnderReview`, Critical
    /// first, then oldest first.
    pub fn review_queue(&self) -> Vec<ChangeRequest> {
        review_queue(&self.state)
    }

    pub fn clarify_request(
        &mut self,
        request_id: &RequestId,
        revised_priority: Option<Priority>,
        confirmed_change_type: Option<ChangeType>,
        notes: &str,
        actor: &ActorId,
    ) -> Result<ChangeRequest> {
        let request = self.state.request(request_id)?;
        if request.state != ChangeState::UnderReview {
            return Err(RcmError::illegal_state(format!(
                "clarification needs UnderReview, {} is {:?}",
                request_id, request.state
            )));
        }
        self.require_role(actor, &[Role::CCBMember], "clarify change requests")?;
        let change = Change::RequestClarified {
            request_id: request_id.clone(),
            old_priority: request.priority,
            new_priority: revised_priority.unwrap_or(request.priority),
            old_change_type: request.change_type,
            new_change_type: confirmed_change_type.unwrap_or(request.change_type),
            note: notes.into(),
        };
        self.commit(actor, change)?;
        Ok(self.state.requests[request_id].clone())
    }
}

pub(crate) fn review_queue(state: &State) -> Vec<ChangeRequest> {
    let mut queue: Vec<ChangeRequest> = state
        .requests
        .values()
        .filter(|r| matches!(r.state, ChangeState::Submitted | ChangeState::UnderReview))
        .cloned()
        .collect();
    queue.sort_by(|a, b| {
        (a.priority, a.submitted_at, &a.id).cmp(&(b.priority, b.submitted_at, &b.id))
    });
    queue
}

/// Checks that every step of `path` is a legal lifecycle edge.
pub(crate) fn check_path(from: ChangeState, path: &[ChangeState]) -> Result<()> {
    let mut at = from;
    for &next in path {
        if !at.can_transition_to(next) {
            return Err(RcmError::IllegalTransition { from: at, to: next });
        }
        at = next;
    }
    Ok(())
}

pub(crate) fn check_item_path(from: WorkItemState, path: &[WorkItemState]) -> Result<()> {
    let mut at = from;
    for &next in path {
        if !at.can_transition_to(next) {
            return Err(RcmError::IllegalWorkItemTransition { from: at, to: next });
        }
        at = next;
    }
    Ok(())
}
