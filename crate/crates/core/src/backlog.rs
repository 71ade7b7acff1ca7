//! Product backlog refinement, epic/story categorization, planning poker,
//! ranking and capacity-bounded sprint planning.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::engine::{Engine, EventSink};
use crate::error::{RcmError, Result};
use crate::event::{Change, PlannedStory, RankChange, RefineOutcome, Transition};
use crate::ids::*;
use crate::lifecycle::{ChangeState, WorkItemState};
use crate::model::*;

/// Planning poker deck.
pub const CARDS: [u32; 7] = [1, 2, 3, 5, 8, 13, 21];

pub const MAX_ROUNDS: u8 = 3;

pub fn card_index(value: u32) -> Option<usize> {
    CARDS.iter().position(|&c| c == value)
}

/// Consensus when the lowest and highest ballots are the same card or
/// neighbours on the deck.
pub fn has_consensus(ballots: &[u32]) -> bool {
    let idx = ballots.iter().filter_map(|&b| card_index(b));
    match (idx.clone().min(), idx.max()) {
        (Some(lo), Some(hi)) => hi - lo <= 1,
        _ => false,
    }
}

/// Median of the ballots rounded up to the nearest card. For an even count
/// the median is the mean of the two middle ballots.
pub fn median_card(ballots: &[u32]) -> Option<u32> {
    if ballots.is_empty() {
        return None;
    }
    let mut sorted = ballots.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    // twice the median, kept integral
    let twice = if n % 2 == 1 {
        2 * sorted[n / 2]
    } else {
        sorted[n / 2 - 1] + sorted[n / 2]
    };
    CARDS.iter().copied().find(|&c| 2 * c >= twice)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationOutcome {
    pub session: EstimationSession,
    pub consensus: bool,
    pub story_points: Option<u32>,
    pub work_item: WorkItem,
}

/// First-fit in rank order: commit every story that still fits, skip the
/// rest and keep going. Returns (committed, skipped, remaining capacity).
pub fn first_fit<T: Clone>(capacity: u32, ranked: &[(T, u32)]) -> (Vec<(T, u32)>, Vec<(T, u32)>, u32) {
    let mut remaining = capacity;
    let mut committed = Vec::new();
    let mut skipped = Vec::new();
    for (item, points) in ranked {
        if *points <= remaining {
            remaining -= points;
            committed.push((item.clone(), *points));
        } else {
            skipped.push((item.clone(), *points));
        }
    }
    (committed, skipped, remaining)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CategorizationPlan {
    SingleStory { title: String },
    Epic { title: String, story_titles: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedStory {
    pub work_item_id: WorkItemId,
    pub story_points: u32,
    pub rank: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SprintPlanReport {
    pub sprint_id: SprintId,
    pub capacity_points: u32,
    pub committed: Vec<PlannedStory>,
    pub skipped: Vec<SkippedStory>,
    pub remaining_capacity: u32,
}

impl<C: Clock, S: EventSink> Engine<C, S> {
    /// Backlog refinement outcome: `Ready` unlocks categorization,
    /// `ReferBack` returns the request to the CCB for further analysis.
    pub fn refine(
        &mut self,
        request_id: &RequestId,
        outcome: RefineOutcome,
        actor: &ActorId,
    ) -> Result<ChangeRequest> {
        let request = self.state.request(request_id)?;
        if request.state != ChangeState::InBacklog {
            return Err(RcmError::illegal_state(format!(
                "refinement needs InBacklog; {request_id} is {:?}",
                request.state
            )));
        }
        self.require_role(
            actor,
            &[Role::ProductOwner, Role::ScrumMaster],
            "refine the backlog",
        )?;
        let transition = match &outcome {
            RefineOutcome::Ready => None,
            RefineOutcome::ReferBack { reason } => {
                if reason.trim().is_empty() {
                    return Err(RcmError::EmptyReason);
                }
                Some(Transition::new(ChangeState::InBacklog, ChangeState::UnderAnalysis))
            }
        };
        self.commit(
            actor,
            Change::Refined {
                request_id: request_id.clone(),
                outcome,
                transition,
            },
        )?;
        Ok(self.state.requests[request_id].clone())
    }

    pub fn categorize(
        &mut self,
        request_id: &RequestId,
        plan: CategorizationPlan,
        actor: &ActorId,
    ) -> Result<Vec<WorkItem>> {
        let request = self.state.request(request_id)?;
        if request.state != ChangeState::InBacklog || !request.ready {
            return Err(RcmError::illegal_state(format!(
                "categorization needs a refined (Ready) request in InBacklog; {request_id} is {:?}",
                request.state
            )));
        }
        self.require_role(actor, &[Role::ProductOwner], "categorize requests")?;
        let next = self.state.work_items.len() + 1;
        let item = |n: usize, kind, parent_epic, title: &str| WorkItem {
            id: WorkItemId::new(format!("WI-{n}")),
            parent_request: request_id.clone(),
            kind,
            parent_epic,
            title: title.into(),
            story_points: None,
            rank: None,
            state: WorkItemState::New,
            sprint: None,
            assignee: None,
        };
        let items = match &plan {
            CategorizationPlan::SingleStory { title } => {
                if title.trim().is_empty() {
                    return Err(RcmError::validation("story title is empty"));
                }
                alloc::vec![item(next, WorkItemKind::UserStory, None, title)]
            }
            CategorizationPlan::Epic {
                title,
                story_titles,
            } => {
                if story_titles.is_empty() {
                    return Err(RcmError::EmptyEpic);
                }
                if title.trim().is_empty() || story_titles.iter().any(|t| t.trim().is_empty()) {
                    return Err(RcmError::validation("epic and story titles must be non-empty"));
                }
                let epic = item(next, WorkItemKind::Epic, None, title);
                let epic_id = epic.id.clone();
                let mut items = alloc::vec![epic];
                for (i, t) in story_titles.iter().enumerate() {
                    items.push(item(
                        next + 1 + i,
                        WorkItemKind::UserStory,
                        Some(epic_id.clone()),
                        t,
                    ));
                }
                items
            }
        };
        self.commit(
            actor,
            Change::Categorized {
                request_id: request_id.clone(),
                items: items.clone(),
                transition: Transition::new(ChangeState::InBacklog, ChangeState::Categorized),
            },
        )?;
        Ok(items)
    }

    /// Plays one planning poker round for a new user story.
    pub fn run_estimation_round(
        &mut self,
        work_item_id: &WorkItemId,
        ballots: &BTreeMap<ActorId, u32>,
        actor: &ActorId,
    ) -> Result<EstimationOutcome> {
        let item = self.state.work_item(work_item_id)?;
        if item.kind == WorkItemKind::Epic {
            return Err(RcmError::EpicNotEstimable);
        }
        if item.state != WorkItemState::New {
            return Err(RcmError::illegal_state(format!(
                "estimation needs New; {work_item_id} is {:?}",
                item.state
            )));
        }
        self.require_role(
            actor,
            &[Role::Developer, Role::ScrumMaster, Role::ProductOwner],
            "run planning poker",
        )?;
        if ballots.is_empty() {
            return Err(RcmError::validation("no ballots"));
        }
        for (member, &card) in ballots {
            if card_index(card).is_none() {
                return Err(RcmError::IllegalCard(card));
            }
            let voter = self.actor(member)?;
            if !voter.role.can_estimate() {
                return Err(RcmError::Authorization {
                    actor: member.0.clone(),
                    role: Some(voter.role),
                    action: "cast planning poker ballots",
                });
            }
        }
        let round = match self.state.sessions.get(work_item_id) {
            Some(s) if s.status == SessionStatus::Open => s.round,
            _ => 1,
        };
        let values: Vec<u32> = ballots.values().copied().collect();
        let consensus = has_consensus(&values);
        let (status, next_round, points) = if consensus {
            (SessionStatus::Consensus, round, median_card(&values))
        } else if round >= MAX_ROUNDS {
            (SessionStatus::Exhausted, round, median_card(&values))
        } else {
            (SessionStatus::Open, round + 1, None)
        };
        let session_id = match self.state.sessions.get(work_item_id) {
            Some(s) => s.id.clone(),
            None => SessionId::new(format!("ES-{}", self.state.sessions.len() + 1)),
        };
        let session = EstimationSession {
            id: session_id,
            work_item_id: work_item_id.clone(),
            round: next_round,
            ballots: ballots.clone(),
            status,
        };
        let transition = points.map(|_| Transition::new(WorkItemState::New, WorkItemState::Estimated));
        self.commit(
            actor,
            Change::EstimationRound {
                session: session.clone(),
                story_points: points,
                transition,
            },
        )?;
        Ok(EstimationOutcome {
            session,
            consensus,
            story_points: points,
            work_item: self.state.work_items[work_item_id].clone(),
        })
    }

    /// Inserts the story at `rank` (clamped to the end of the ranked list)
    /// and renumbers so ranks stay `1..=n`.
    pub fn prioritize(&mut self, work_item_id: &WorkItemId, rank: u32, actor: &ActorId) -> Result<WorkItem> {
        let item = self.state.work_item(work_item_id)?;
        if item.kind == WorkItemKind::Epic {
            return Err(RcmError::EpicNotEstimable);
        }
        if !matches!(item.state, WorkItemState::Estimated | WorkItemState::Prioritized) {
            return Err(RcmError::illegal_state(format!(
                "ranking needs Estimated (or Prioritized to re-rank); {work_item_id} is {:?}",
                item.state
            )));
        }
        self.require_role(actor, &[Role::ProductOwner], "rank the backlog")?;
        if rank == 0 {
            return Err(RcmError::validation("rank starts at 1"));
        }
        let mut ranked: Vec<(&WorkItemId, u32)> = self
            .state
            .work_items
            .values()
            .filter_map(|w| w.rank.map(|r| (&w.id, r)))
            .filter(|(id, _)| *id != work_item_id)
            .collect();
        ranked.sort_by_key(|&(id, r)| (r, id));
        let position = (rank as usize - 1).min(ranked.len());
        let mut order: Vec<&WorkItemId> = ranked.iter().map(|(id, _)| *id).collect();
        order.insert(position, work_item_id);
        let ranks: Vec<RankChange> = order
            .iter()
            .enumerate()
            .filter_map(|(i, id)| {
                let old = self.state.work_items[*id].rank;
                let new = i as u32 + 1;
                (old != Some(new) || *id == work_item_id).then(|| RankChange {
                    work_item_id: (*id).clone(),
                    old,
                    new,
                })
            })
            .collect();
        let transition = (item.state == WorkItemState::Estimated)
            .then(|| Transition::new(WorkItemState::Estimated, WorkItemState::Prioritized));
        self.commit(
            actor,
            Change::Prioritized {
                work_item_id: work_item_id.clone(),
                transition,
                ranks,
            },
        )?;
        Ok(self.state.work_items[work_item_id].clone())
    }

    pub fn create_sprint(&mut self, name: &str, capacity_points: u32, actor: &ActorId) -> Result<Sprint> {
        self.require_role(
            actor,
            &[Role::ProductOwner, Role::ScrumMaster],
            "create sprints",
        )?;
        if name.trim().is_empty() {
            return Err(RcmError::validation("sprint name is empty"));
        }
        let id = SprintId::new(format!("SP-{}", self.state.sprints.len() + 1));
        let sprint = Sprint {
            id: id.clone(),
            name: name.into(),
            capacity_points,
            state: SprintState::Planned,
            committed_item_ids: Vec::new(),
        };
        self.commit(actor, Change::SprintCreated { sprint })?;
        Ok(self.state.sprints[&id].clone())
    }

    /// `Planned -> Active -> Closed`.
    pub fn set_sprint_state(&mut self, sprint_id: &SprintId, target: SprintState, actor: &ActorId) -> Result<Sprint> {
        let sprint = self.state.sprint(sprint_id)?;
        self.require_role(actor, &[Role::ProductOwner, Role::ScrumMaster], "change sprint state")?;
        let ok = matches!(
            (sprint.state, target),
            (SprintState::Planned, SprintState::Active) | (SprintState::Active, SprintState::Closed)
        );
        if !ok {
            return Err(RcmError::illegal_state(format!(
                "sprint {sprint_id} cannot go {:?} -> {target:?}",
                sprint.state
            )));
        }
        let old = sprint.state;
        self.commit(
            actor,
            Change::SprintStateChanged {
                sprint_id: sprint_id.clone(),
                old,
                new: target,
            },
        )?;
        Ok(self.state.sprints[sprint_id].clone())
    }

    /// Commits prioritized stories to the sprint in rank order while they fit.
    /// Requests with their first story committed move to `InProgress`.
    pub fn plan_sprint(&mut self, sprint_id: &SprintId, actor: &ActorId) -> Result<SprintPlanReport> {
        let sprint = self.state.sprint(sprint_id)?;
        if sprint.state == SprintState::Closed {
            return Err(RcmError::SprintClosed(sprint_id.0.clone()));
        }
        self.require_role(actor, &[Role::ProductOwner, Role::ScrumMaster], "plan sprints")?;
        let used: u32 = sprint
            .committed_item_ids
            .iter()
            .filter_map(|id| self.state.work_items[id].story_points)
            .sum();
        let capacity = sprint.capacity_points.saturating_sub(used);
        let mut backlog: Vec<&WorkItem> = self
            .state
            .work_items
            .values()
            .filter(|w| {
                w.kind == WorkItemKind::UserStory
                    && w.state == WorkItemState::Prioritized
                    && w.sprint.is_none()
            })
            .collect();
        backlog.sort_by_key(|w| (w.rank, &w.id));
        let ranked: Vec<(&WorkItem, u32)> = backlog
            .iter()
            .map(|w| (*w, w.story_points.expect("prioritized stories carry points")))
            .collect();
        let (committed, skipped, remaining) = first_fit(capacity, &ranked);
        let planned = |w: &WorkItem, points: u32| PlannedStory {
            work_item_id: w.id.clone(),
            story_points: points,
            rank: w.rank.unwrap_or_default(),
        };
        let committed: Vec<PlannedStory> = committed.iter().map(|(w, p)| planned(w, *p)).collect();
        let skipped: Vec<PlannedStory> = skipped.iter().map(|(w, p)| planned(w, *p)).collect();
        let mut started_requests: Vec<RequestId> = Vec::new();
        for story in &committed {
            let parent = &self.state.work_items[&story.work_item_id].parent_request;
            if self.state.requests[parent].state == ChangeState::Categorized
                && !started_requests.contains(parent)
            {
                started_requests.push(parent.clone());
            }
        }
        let report = SprintPlanReport {
            sprint_id: sprint_id.clone(),
            capacity_points: self.state.sprints[sprint_id].capacity_points,
            committed: committed.clone(),
            skipped: skipped
                .iter()
                .map(|s| SkippedStory {
                    work_item_id: s.work_item_id.clone(),
                    story_points: s.story_points,
                    rank: s.rank,
                    reason: String::from("capacity"),
                })
                .collect(),
            remaining_capacity: remaining,
        };
        self.commit(
            actor,
            Change::SprintPlanned {
                sprint_id: sprint_id.clone(),
                committed,
                skipped,
                remaining_capacity: remaining,
                started_requests,
            },
        )?;
        Ok(report)
    }
}
