//! Trace links between change requests and system requirements, duplicate
//! detection, and requirement history.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Timestamp};
use crate::engine::{check_path, Engine, EventSink};
use crate::error::{RcmError, Result};
use crate::event::{Change, Transition};
use crate::ids::*;
use crate::lifecycle::{ChangeState, WorkItemState};
use crate::model::*;
use crate::similarity::{tokenize, Score};
use crate::state::State;

pub const DEFAULT_DUPLICATE_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateSuggestion {
    pub request_id: RequestId,
    pub score: f64,
    pub shared_tokens: usize,
    pub union_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub outcome: Outcome,
    pub reasons: String,
    pub decided_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub request_id: RequestId,
    pub title: String,
    pub submitted_at: Timestamp,
    pub relations: Vec<Relation>,
    pub state: ChangeState,
    pub duplicate_of: Option<RequestId>,
    pub decisions: Vec<DecisionSummary>,
    pub stories_total: usize,
    pub stories_released: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceReport {
    pub requirement: Requirement,
    pub history: Vec<TraceEntry>,
}

pub(crate) fn request_tokens(request: &ChangeRequest) -> BTreeSet<String> {
    let mut text = String::with_capacity(request.title.len() + request.description.len() + 1);
    text.push_str(&request.title);
    text.push(' ');
    text.push_str(&request.description);
    tokenize(&text)
}

/// Earlier, non-archived requests whose token-set similarity to `request_id`
/// reaches `threshold`, best first; ties go to the older request.
pub fn suggest_duplicates(
    state: &State,
    request_id: &RequestId,
    threshold: f64,
) -> Result<Vec<DuplicateSuggestion>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(RcmError::validation(format!("threshold {threshold} outside (0, 1]")));
    }
    let probe = state.request(request_id)?;
    let probe_tokens = request_tokens(probe);

    let candidates: Vec<(&ChangeRequest, BTreeSet<String>)> = state
        .requests
        .values()
        .filter(|r| r.submitted_at < probe.submitted_at && !r.state.is_terminal())
        .map(|r| (r, request_tokens(r)))
        .collect();

    // Inverted index: token -> candidates containing it.
    let mut index: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (_, tokens)) in candidates.iter().enumerate() {
        for token in tokens {
            index.entry(token.as_str()).or_default().push(i);
        }
    }
    let mut shared = alloc::vec![0usize; candidates.len()];
    for token in &probe_tokens {
        if let Some(hits) = index.get(token.as_str()) {
            for &i in hits {
                shared[i] += 1;
            }
        }
    }

    let mut scored: Vec<(Score, &ChangeRequest)> = candidates
        .iter()
        .zip(shared)
        .map(|((r, tokens), n)| (Score::from_counts(n, probe_tokens.len(), tokens.len()), *r))
        .filter(|(s, _)| s.value() >= threshold)
        .collect();
    scored.sort_by(|(sa, ra), (sb, rb)| {
        sb.cmp(sa)
            .then(ra.submitted_at.cmp(&rb.submitted_at))
            .then(ra.id.cmp(&rb.id))
    });
    Ok(scored
        .into_iter()
        .map(|(score, r)| DuplicateSuggestion {
            request_id: r.id.clone(),
            score: score.value(),
            shared_tokens: score.shared,
            union_tokens: score.union,
        })
        .collect())
}

pub fn trace_report(state: &State, requirement_id: &RequirementId) -> Result<TraceReport> {
    let requirement = state.requirement(requirement_id)?.clone();
    let mut relations: BTreeMap<&RequestId, Vec<Relation>> = BTreeMap::new();
    for link in state.links.values().filter(|l| &l.requirement_id == requirement_id) {
        relations.entry(&link.request_id).or_default().push(link.relation);
    }
    let mut history: Vec<TraceEntry> = relations
        .into_iter()
        .map(|(id, relations)| {
            let request = &state.requests[id];
            let stories: Vec<&WorkItem> = state.stories_of(id).collect();
            TraceEntry {
                request_id: id.clone(),
                title: request.title.clone(),
                submitted_at: request.submitted_at,
                relations,
                state: request.state,
                duplicate_of: request.duplicate_of.clone(),
                decisions: state
                    .decisions
                    .get(id)
                    .map(|ds| {
                        ds.iter()
                            .map(|d| DecisionSummary {
                                outcome: d.outcome,
                                reasons: d.reasons.clone(),
                                decided_at: d.decided_at,
                            })
                            .collect()
                    })
                    .unwrap_or_default(),
                stories_total: stories.len(),
                stories_released: stories
                    .iter()
                    .filter(|w| w.state == WorkItemState::Released)
                    .count(),
            }
        })
        .collect();
    history.sort_by(|a, b| (a.submitted_at, &a.request_id).cmp(&(b.submitted_at, &b.request_id)));
    Ok(TraceReport {
        requirement,
        history,
    })
}

impl<C: Clock, S: EventSink> Engine<C, S> {
    pub fn link_requirements(
        &mut self,
        request_id: &RequestId,
        links: &[(RequirementId, Relation)],
        actor: &ActorId,
    ) -> Result<Vec<TraceLink>> {
        let request = self.state.request(request_id)?;
        if !matches!(
            request.state,
            ChangeState::UnderReview | ChangeState::Traced | ChangeState::InBacklog
        ) {
            return Err(RcmError::illegal_state(format!(
                "trace links need UnderReview, Traced or InBacklog; {request_id} is {:?}",
                request.state
            )));
        }
        self.require_role(actor, &[Role::CCBMember], "link requirements")?;
        if links.is_empty() {
            return Err(RcmError::validation("no trace links given"));
        }
        let mut seen: BTreeSet<(&RequirementId, Relation)> = self
            .state
            .links_of(request_id)
            .map(|l| (&l.requirement_id, l.relation))
            .collect();
        for (requirement_id, relation) in links {
            let requirement = self.state.requirement(requirement_id)?;
            if requirement.status != RequirementStatus::Active {
                return Err(RcmError::validation(format!(
                    "requirement {requirement_id} is retired"
                )));
            }
            if !seen.insert((requirement_id, *relation)) {
                return Err(RcmError::DuplicateLink {
                    request: request_id.0.clone(),
                    requirement: requirement_id.0.clone(),
                });
            }
        }
        let created_at = self.peek_time();
        let first = self.state.links.len() + 1;
        let new_links: Vec<TraceLink> = links
            .iter()
            .enumerate()
            .map(|(i, (requirement_id, relation))| TraceLink {
                id: LinkId::new(format!("TL-{}", first + i)),
                request_id: request_id.clone(),
                requirement_id: requirement_id.clone(),
                relation: *relation,
                created_at,
                created_by: actor.clone(),
            })
            .collect();
        self.commit_at(
            actor,
            Change::TraceLinked {
                request_id: request_id.clone(),
                links: new_links.clone(),
            },
            created_at,
        )?;
        Ok(new_links)
    }

    pub fn suggest_duplicates(
        &self,
        request_id: &RequestId,
        threshold: f64,
    ) -> Result<Vec<DuplicateSuggestion>> {
        suggest_duplicates(&self.state, request_id, threshold)
    }

    /// Closes `request_id` as a duplicate of an earlier request. From
    /// `UnderReview` the request passes through `Traced` in the same event.
    pub fn mark_duplicate(
        &mut self,
        request_id: &RequestId,
        canonical_id: &RequestId,
        actor: &ActorId,
    ) -> Result<ChangeRequest> {
        if request_id == canonical_id {
            return Err(RcmError::SelfDuplicate);
        }
        let request = self.state.request(request_id)?;
        let canonical = self.state.request(canonical_id)?;
        let path: &[ChangeState] = match request.state {
            ChangeState::UnderReview => &[ChangeState::Traced, ChangeState::ClosedDuplicate],
            ChangeState::Traced => &[ChangeState::ClosedDuplicate],
            other => {
                return Err(RcmError::illegal_state(format!(
                    "duplicate marking needs UnderReview or Traced; {request_id} is {other:?}"
                )))
            }
        };
        self.require_role(actor, &[Role::CCBMember], "mark duplicates")?;
        if canonical.submitted_at >= request.submitted_at {
            return Err(RcmError::ChronologyViolation {
                request: request_id.0.clone(),
                canonical: canonical_id.0.clone(),
            });
        }
        if canonical.state == ChangeState::ClosedDuplicate {
            return Err(RcmError::validation(format!(
                "canonical request {canonical_id} is itself a duplicate"
            )));
        }
        check_path(request.state, path)?;
        let transition = Transition::new(request.state, ChangeState::ClosedDuplicate);
        self.commit(
            actor,
            Change::DuplicateMarked {
                request_id: request_id.clone(),
                canonical_id: canonical_id.clone(),
                transition,
            },
        )?;
        Ok(self.state.requests[request_id].clone())
    }

    pub fn trace_report(&self, requirement_id: &RequirementId) -> Result<TraceReport> {
        trace_report(&self.state, requirement_id)
    }
}
