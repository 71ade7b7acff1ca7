//! Change analysis (impact, risk, cost-benefit) and the CCB's voted decision.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::engine::{Engine, EventSink};
use crate::error::{RcmError, Result};
use crate::event::{Change, Transition};
use crate::ids::*;
use crate::lifecycle::ChangeState;
use crate::model::*;

/// Parts of an analysis supplied in one call. Missing parts are carried over
/// from the request's current-cycle record, if one exists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisInput {
    #[serde(default)]
    pub impact: Option<ImpactAnalysis>,
    #[serde(default)]
    pub risks: Option<Vec<Risk>>,
    #[serde(default)]
    pub cost_benefit: Option<CostBenefit>,
}

fn validate_input(input: &AnalysisInput) -> Result<()> {
    if let Some(risks) = &input.risks {
        for risk in risks {
            if !(risk.probability.is_finite() && (0.0..=1.0).contains(&risk.probability)) {
                return Err(RcmError::validation(format!(
                    "risk probability {} outside [0, 1]",
                    risk.probability
                )));
            }
            if !(1..=5).contains(&risk.impact_level) {
                return Err(RcmError::validation(format!(
                    "risk impact level {} outside [1, 5]",
                    risk.impact_level
                )));
            }
        }
    }
    if let Some(cb) = &input.cost_benefit {
        if !(cb.cost_person_hours.is_finite() && cb.cost_person_hours >= 0.0) {
            return Err(RcmError::validation(format!(
                "cost {} must be a non-negative number of person-hours",
                cb.cost_person_hours
            )));
        }
        if !(1..=5).contains(&cb.expected_benefit) {
            return Err(RcmError::validation(format!(
                "expected benefit {} outside [1, 5]",
                cb.expected_benefit
            )));
        }
    }
    Ok(())
}

/// Active sites that seat at least one CCB member but have no vote in
/// `votes`.
pub fn missing_sites<'a>(
    sites: impl IntoIterator<Item = &'a Site>,
    actors: impl IntoIterator<Item = &'a Actor>,
    votes: impl IntoIterator<Item = &'a Vote>,
) -> Vec<SiteId> {
    let voted: BTreeSet<&SiteId> = votes.into_iter().map(|v| &v.site).collect();
    let seated: BTreeSet<&SiteId> = actors
        .into_iter()
        .filter(|a| a.role == Role::CCBMember)
        .map(|a| &a.site)
        .collect();
    sites
        .into_iter()
        .filter(|s| s.active && seated.contains(&s.id) && !voted.contains(&s.id))
        .map(|s| s.id.clone())
        .collect()
}

/// Strict majority of cast votes; `None` on a tie.
pub fn majority<'a>(votes: impl IntoIterator<Item = &'a Vote>) -> (usize, usize, Option<Outcome>) {
    let (mut approve, mut reject) = (0, 0);
    for vote in votes {
        match vote.choice {
            VoteChoice::Approve => approve += 1,
            VoteChoice::Reject => reject += 1,
        }
    }
    let outcome = match approve.cmp(&reject) {
        core::cmp::Ordering::Greater => Some(Outcome::Approved),
        core::cmp::Ordering::Less => Some(Outcome::Rejected),
        core::cmp::Ordering::Equal => None,
    };
    (approve, reject, outcome)
}

impl<C: Clock, S: EventSink> Engine<C, S> {
    /// Stores the analysis for the current cycle; a complete record moves the
    /// request to `Analyzed` in the same event.
    pub fn record_analysis(
        &mut self,
        request_id: &RequestId,
        input: AnalysisInput,
        actor: &ActorId,
    ) -> Result<AnalysisRecord> {
        let request = self.state.request(request_id)?;
        if request.state != ChangeState::UnderAnalysis {
            return Err(RcmError::illegal_state(format!(
                "analysis needs UnderAnalysis; {request_id} is {:?}",
                request.state
            )));
        }
        self.require_role(actor, &[Role::SystemAnalyst], "record analyses")?;
        validate_input(&input)?;
        if let Some(impact) = &input.impact {
            let linked: BTreeSet<&RequirementId> = self
                .state
                .links_of(request_id)
                .map(|l| &l.requirement_id)
                .collect();
            if let Some(unlinked) = impact
                .affected_requirement_ids
                .iter()
                .find(|r| !linked.contains(r))
            {
                return Err(RcmError::UnlinkedRequirement(unlinked.0.clone()));
            }
        }
        let previous = self.state.current_analysis(request);
        let completed_at = self.peek_time();
        let record = AnalysisRecord {
            request_id: request_id.clone(),
            cycle: request.analysis_cycle,
            impact: input.impact.or_else(|| previous.and_then(|p| p.impact.clone())),
            risks: input.risks.or_else(|| previous.and_then(|p| p.risks.clone())),
            cost_benefit: input
                .cost_benefit
                .or_else(|| previous.and_then(|p| p.cost_benefit.clone())),
            analyst: actor.clone(),
            completed_at,
        };
        let transition = record
            .is_complete()
            .then(|| Transition::new(ChangeState::UnderAnalysis, ChangeState::Analyzed));
        self.commit_at(
            actor,
            Change::AnalysisRecorded {
                record: record.clone(),
                transition,
            },
            completed_at,
        )?;
        Ok(record)
    }

    /// Records or replaces `member`'s vote for the current decision cycle.
    pub fn cast_vote(
        &mut self,
        request_id: &RequestId,
        member: &ActorId,
        choice: VoteChoice,
        rationale: &str,
    ) -> Result<Vote> {
        let request = self.state.request(request_id)?;
        if request.state != ChangeState::Analyzed {
            return Err(RcmError::illegal_state(format!(
                "voting needs Analyzed; {request_id} is {:?}",
                request.state
            )));
        }
        let voter = self.require_role(member, &[Role::CCBMember], "vote")?;
        let replaced = self
            .state
            .votes
            .get(request_id)
            .and_then(|v| v.get(member))
            .cloned();
        let cast_at = self.peek_time();
        let vote = Vote {
            request_id: request_id.clone(),
            member: member.clone(),
            site: voter.site,
            choice,
            rationale: rationale.into(),
            cast_at,
        };
        self.commit_at(
            member,
            Change::VoteCast {
                vote: vote.clone(),
                replaced,
            },
            cast_at,
        )?;
        Ok(vote)
    }

    /// Counts the current votes and, if every active site with a CCB member voted and one side
    /// holds a strict majority, records the immutable decision and moves the
    /// request to `Approved` or `Rejected` atomically.
    pub fn finalize_decision(
        &mut self,
        request_id: &RequestId,
        reasons: &str,
        actor: &ActorId,
    ) -> Result<Decision> {
        let request = self.state.request(request_id)?;
        if request.state != ChangeState::Analyzed {
            return Err(RcmError::illegal_state(format!(
                "decision needs Analyzed; {request_id} is {:?}",
                request.state
            )));
        }
        self.require_role(actor, &[Role::CCBMember], "finalize decisions")?;
        if reasons.trim().is_empty() {
            return Err(RcmError::validation("decision reasons are empty"));
        }
        let votes: Vec<Vote> = self
            .state
            .votes
            .get(request_id)
            .map(|v| v.values().cloned().collect())
            .unwrap_or_default();
        let missing = missing_sites(self.state.sites.values(), self.state.actors.values(), &votes);
        if !missing.is_empty() {
            return Err(RcmError::QuorumNotMet { missing });
        }
        let (approve, reject, outcome) = majority(&votes);
        let outcome = outcome.ok_or(RcmError::TieDeferred { approve, reject })?;
        let target = match outcome {
            Outcome::Approved => ChangeState::Approved,
            Outcome::Rejected => ChangeState::Rejected,
        };
        let decided_at = self.peek_time();
        let decision = Decision {
            request_id: request_id.clone(),
            cycle: request.analysis_cycle,
            outcome,
            reasons: String::from(reasons),
            votes,
            decided_at,
        };
        self.commit_at(
            actor,
            Change::DecisionFinalized {
                decision: decision.clone(),
                transition: Transition::new(ChangeState::Analyzed, target),
            },
            decided_at,
        )?;
        Ok(decision)
    }
}
