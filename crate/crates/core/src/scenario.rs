//! Scripted and randomized workloads: the standard multi-site roster, the
//! ten-phase walkthrough of one change request, and a driver that picks
//! random applicable operations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisInput;
use crate::backlog::{CategorizationPlan, CARDS};
use crate::clock::Clock;
use crate::delivery::{ValidationInput, VerificationInput};
use crate::engine::{Engine, EventSink};
use crate::error::{RcmError, Result};
use crate::event::{AuditEvent, RefineOutcome};
use crate::ids::*;
use crate::lifecycle::{ChangeState, WorkItemState};
use crate::model::*;
use crate::phases::{checklist, Phase, PhaseEvidence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    pub sites: Vec<Site>,
    pub actors: Vec<Actor>,
    pub requirements: Vec<(String, String)>,
}

fn site(id: &str, name: &str, offset: i32) -> Site {
    Site {
        id: SiteId::new(id),
        name: name.into(),
        utc_offset_minutes: offset,
        active: true,
    }
}

fn actor(id: &str, name: &str, role: Role, site: &str) -> Actor {
    Actor {
        id: ActorId::new(id),
        name: name.into(),
        role,
        site: SiteId::new(site),
    }
}

/// Three sites, one CCB member per site and one actor for every other role.
pub fn standard_roster() -> Roster {
    Roster {
        sites: vec![
            site("berlin", "Berlin", 60),
            site("austin", "Austin", -360),
            site("lahore", "Lahore", 300),
        ],
        actors: vec![
            actor("ines", "Ines (initiator)", Role::Initiator, "berlin"),
            actor("carla", "Carla (client)", Role::Client, "austin"),
            actor("sami", "Sami (stakeholder)", Role::Stakeholder, "lahore"),
            actor("ccb-berlin", "CCB Berlin", Role::CCBMember, "berlin"),
            actor("ccb-austin", "CCB Austin", Role::CCBMember, "austin"),
            actor("ccb-lahore", "CCB Lahore", Role::CCBMember, "lahore"),
            actor("ana", "Ana (system analyst)", Role::SystemAnalyst, "berlin"),
            actor("pablo", "Pablo (product owner)", Role::ProductOwner, "austin"),
            actor("sara", "Sara (scrum master)", Role::ScrumMaster, "lahore"),
            actor("dev-1", "Dana (developer)", Role::Developer, "lahore"),
            actor("dev-2", "Deniz (developer)", Role::Developer, "berlin"),
            actor("quinn", "Quinn (QA)", Role::QA, "austin"),
            actor("max", "Max (maintenance)", Role::Maintenance, "berlin"),
        ],
        requirements: vec![
            ("Reporting".into(), "Users can export monthly reports".into()),
            ("Billing".into(), "Invoices are generated per tenant".into()),
            ("Audit".into(), "Every change is traceable".into()),
        ],
    }
}

pub fn bootstrap<C: Clock, S: EventSink>(engine: &mut Engine<C, S>, roster: &Roster) -> Result<()> {
    for s in &roster.sites {
        if !engine.state().sites.contains_key(&s.id) {
            engine.register_site(s.clone())?;
        }
    }
    for a in &roster.actors {
        if !engine.state().actors.contains_key(&a.id) {
            engine.register_actor(a.clone())?;
        }
    }
    for (title, description) in &roster.requirements {
        let known = engine.state().requirements.values().any(|r| &r.title == title);
        if !known {
            engine.register_requirement(title, description, &ActorId::system())?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoReport {
    pub request_id: RequestId,
    pub checklist: Vec<PhaseEvidence>,
    /// Seqs of failed verifications that sent a story back to implementation.
    pub rework: Vec<u64>,
    pub final_state: ChangeState,
}

impl DemoReport {
    pub fn complete(&self) -> bool {
        self.checklist.iter().all(|p| p.seq.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{phase}: {error}")]
pub struct DemoError {
    pub phase: String,
    pub error: RcmError,
}

fn at<T>(phase: &str, r: Result<T>) -> core::result::Result<T, DemoError> {
    r.map_err(|error| DemoError {
        phase: phase.into(),
        error,
    })
}

/// Drives one change request from initiation to closure through every phase,
/// on an engine already bootstrapped with [`standard_roster`].
///
/// `events` must return the committed log so the checklist can be built.
pub fn run_demo<C: Clock, S: EventSink>(
    engine: &mut Engine<C, S>,
    inject_verification_failure: bool,
    events: impl Fn(&Engine<C, S>) -> Vec<AuditEvent>,
) -> core::result::Result<DemoReport, DemoError> {
    let id = |s: &str| ActorId::new(s);
    let ccb = id("ccb-berlin");
    let initiation = "Change Initiation";
    let req = at(
        initiation,
        engine.submit_change_request(
            ChangeDraft {
                title: "Export monthly report as CSV".into(),
                description: "Finance needs the monthly usage report as a CSV download".into(),
                change_type: Some(ChangeType::Addition),
                business_value: 4,
                priority: Some(Priority::High),
                severity: Some(Severity::Major),
                origin_site: None,
            },
            &id("ines"),
            None,
        ),
    )?;
    let rid = req.id.clone();
    let understanding = Phase::UnderstandingNeedForChange.label();
    at(understanding, engine.transition(&rid, ChangeState::UnderReview, &ccb, "picked from queue"))?;
    at(
        understanding,
        engine.clarify_request(
            &rid,
            Some(Priority::Critical),
            Some(ChangeType::Modification),
            "Extends the existing report export; month-end close depends on it",
            &ccb,
        ),
    )?;

    let tracing = Phase::ChangeTraceability.label();
    let reporting = engine
        .state()
        .requirements
        .values()
        .find(|r| r.title == "Reporting")
        .map(|r| r.id.clone())
        .ok_or(DemoError {
            phase: tracing.into(),
            error: RcmError::UnknownRequirement("Reporting".into()),
        })?;
    at(tracing, engine.link_requirements(&rid, &[(reporting.clone(), Relation::Impacts)], &ccb))?;
    let duplicates = at(tracing, engine.suggest_duplicates(&rid, 0.6))?;
    if let Some(dup) = duplicates.first() {
        let canonical = dup.request_id.clone();
        at(tracing, engine.mark_duplicate(&rid, &canonical, &ccb))?;
        return Err(DemoError {
            phase: tracing.into(),
            error: RcmError::illegal_state(format!("request duplicates {canonical}")),
        });
    }
    at(tracing, engine.transition(&rid, ChangeState::Traced, &ccb, "traced to Reporting"))?;
    at(tracing, engine.transition(&rid, ChangeState::UnderAnalysis, &ccb, "ready for analysis"))?;

    let analysis = Phase::ChangeAnalysis.label();
    at(
        analysis,
        engine.record_analysis(
            &rid,
            AnalysisInput {
                impact: Some(ImpactAnalysis {
                    affected_requirement_ids: vec![reporting],
                    affected_components: vec!["report-service".into(), "web-ui".into()],
                    scope_note: "New export format next to PDF".into(),
                }),
                risks: Some(vec![Risk {
                    category: RiskCategory::Schedule,
                    probability: 0.25,
                    impact_level: 2,
                    mitigation: "Reuse the existing PDF pipeline".into(),
                }]),
                cost_benefit: Some(CostBenefit {
                    cost_person_hours: 24.0,
                    expected_benefit: 4,
                    note: "Removes manual spreadsheet work at month end".into(),
                }),
            },
            &id("ana"),
        ),
    )?;

    let decision = Phase::ChangeEvaluationAndDecision.label();
    for member in ["ccb-berlin", "ccb-austin", "ccb-lahore"] {
        at(
            decision,
            engine.cast_vote(&rid, &id(member), VoteChoice::Approve, "worth it"),
        )?;
    }
    at(
        decision,
        engine.finalize_decision(&rid, "Low risk, high value for finance", &ccb),
    )?;

    let backlog = Phase::RequirementsBacklogManagement.label();
    at(backlog, engine.transition(&rid, ChangeState::InBacklog, &id("pablo"), "approved"))?;
    at(backlog, engine.refine(&rid, RefineOutcome::Ready, &id("sara")))?;

    let items = at(
        Phase::ChangeCategorization.label(),
        engine.categorize(
            &rid,
            CategorizationPlan::Epic {
                title: "CSV export".into(),
                story_titles: vec!["CSV writer for report rows".into(), "Download button".into()],
            },
            &id("pablo"),
        ),
    )?;
    let stories: Vec<WorkItemId> = items
        .iter()
        .filter(|w| w.kind == WorkItemKind::UserStory)
        .map(|w| w.id.clone())
        .collect();

    let estimation = Phase::EffortEstimation.label();
    let rounds: [&[u32]; 2] = [&[3, 5, 5], &[1, 2, 2]];
    for (story, cards) in stories.iter().zip(rounds) {
        let ballots: BTreeMap<ActorId, u32> = ["dev-1", "dev-2", "sara"]
            .iter()
            .map(|a| id(a))
            .zip(cards.iter().copied())
            .collect();
        at(estimation, engine.run_estimation_round(story, &ballots, &id("sara")))?;
    }

    let prioritization = Phase::ChangePrioritization.label();
    for (rank, story) in stories.iter().enumerate() {
        at(prioritization, engine.prioritize(story, rank as u32 + 1, &id("pablo")))?;
    }
    let sprint = at(prioritization, engine.create_sprint("Sprint 1", 13, &id("sara")))?;
    at(prioritization, engine.plan_sprint(&sprint.id, &id("sara")))?;
    at(prioritization, engine.set_sprint_state(&sprint.id, SprintState::Active, &id("sara")))?;

    let implementation = Phase::ChangeImplementation.label();
    let vv = Phase::ChangeVerificationAndValidation.label();
    let mut rework = Vec::new();
    for (i, story) in stories.iter().enumerate() {
        for stage in [
            ImplementationStage::Started,
            ImplementationStage::InCodeReview,
            ImplementationStage::DevTested,
        ] {
            at(implementation, engine.update_implementation_status(story, stage, &id("dev-1")))?;
        }
        if inject_verification_failure && i == 0 {
            at(
                vv,
                engine.record_verification(VerificationInput {
                    work_item_id: story.clone(),
                    functional_pass: true,
                    nonfunctional_pass: true,
                    regression_passed: false,
                    deviations: vec!["PDF export regressed".into()],
                    verifier: id("quinn"),
                }),
            )?;
            rework.push(engine.state().last_seq);
            for stage in [ImplementationStage::Started, ImplementationStage::DevTested] {
                at(implementation, engine.update_implementation_status(story, stage, &id("dev-1")))?;
            }
        }
        at(
            vv,
            engine.record_verification(VerificationInput {
                work_item_id: story.clone(),
                functional_pass: true,
                nonfunctional_pass: true,
                regression_passed: true,
                deviations: vec![],
                verifier: id("quinn"),
            }),
        )?;
        at(
            vv,
            engine.record_validation(ValidationInput {
                work_item_id: story.clone(),
                verdict: ValidationVerdict::Accepted,
                issues: vec![],
                validator: id("sami"),
            }),
        )?;
        at("Release", engine.release(story, &id("max")))?;
    }
    at("Closure", engine.transition(&rid, ChangeState::Closed, &id("pablo"), "delivered"))?;

    let log = events(engine);
    let report = DemoReport {
        request_id: rid.clone(),
        checklist: checklist(engine.state(), &log, &rid),
        rework,
        final_state: engine.state().requests[&rid].state,
    };
    if let Some(missing) = report.checklist.iter().find(|p| p.seq.is_none()) {
        return Err(DemoError {
            phase: missing.label.clone(),
            error: RcmError::illegal_state("phase not evidenced in the audit log"),
        });
    }
    Ok(report)
}

/// Source of randomness for [`random_step`]; returns a value in `0..n`.
pub trait Chooser {
    fn below(&mut self, n: usize) -> usize;

    fn coin(&mut self, percent: usize) -> bool {
        self.below(100) < percent
    }

    fn pick<'a, T>(&mut self, items: &'a [T]) -> Option<&'a T> {
        if items.is_empty() {
            None
        } else {
            Some(&items[self.below(items.len())])
        }
    }
}

impl<F: FnMut(usize) -> usize> Chooser for F {
    fn below(&mut self, n: usize) -> usize {
        self(n) % n.max(1)
    }
}

const TITLE_WORDS: [&str; 12] = [
    "export", "report", "csv", "billing", "invoice", "login", "audit", "search", "filter",
    "tenant", "mobile", "latency",
];

fn random_text<R: Chooser + ?Sized>(rng: &mut R, words: usize) -> String {
    let mut text = String::new();
    for i in 0..words {
        if i > 0 {
            text.push(' ');
        }
        text.push_str(TITLE_WORDS[rng.below(TITLE_WORDS.len())]);
    }
    text
}

fn pick_actor<C: Clock, S: EventSink, R: Chooser + ?Sized>(
    engine: &Engine<C, S>,
    rng: &mut R,
    role: Role,
) -> ActorId {
    let actors: Vec<&Actor> = engine.state().actors_with_role(role).collect();
    match rng.pick(&actors) {
        Some(a) => a.id.clone(),
        None => ActorId::new("nobody"),
    }
}

/// Performs one randomly chosen operation that fits the current state of a
/// random entity. Operations may still fail (ties, quorum, capacity, ...);
/// failures append nothing. Returns the operation name and its result.
pub fn random_step<C: Clock, S: EventSink, R: Chooser + ?Sized>(
    engine: &mut Engine<C, S>,
    rng: &mut R,
) -> (&'static str, Result<()>) {
    let requests: Vec<ChangeRequest> = engine.state().requests.values().cloned().collect();
    let stories: Vec<WorkItem> = engine
        .state()
        .work_items
        .values()
        .filter(|w| w.kind == WorkItemKind::UserStory)
        .cloned()
        .collect();
    let choice = rng.below(10);
    if requests.is_empty() || choice == 0 {
        let role = [Role::Initiator, Role::Client, Role::Stakeholder][rng.below(3)];
        let initiator = pick_actor(engine, rng, role);
        let words = 2 + rng.below(4);
        let title = random_text(rng, words);
        let description = random_text(rng, 3);
        let draft = ChangeDraft {
            title,
            description,
            change_type: Some(ChangeType::Addition),
            business_value: 1 + rng.below(5) as u8,
            priority: [None, Some(Priority::Critical), Some(Priority::High), Some(Priority::Low)]
                [rng.below(4)],
            severity: None,
            origin_site: None,
        };
        return ("submit", engine.submit_change_request(draft, &initiator, None).map(|_| ()));
    }
    if choice >= 6 && !stories.is_empty() {
        let story = stories[rng.below(stories.len())].clone();
        return story_step(engine, rng, &story);
    }
    let request = requests[rng.below(requests.len())].clone();
    request_step(engine, rng, &request)
}

fn request_step<C: Clock, S: EventSink, R: Chooser + ?Sized>(
    engine: &mut Engine<C, S>,
    rng: &mut R,
    request: &ChangeRequest,
) -> (&'static str, Result<()>) {
    let ccb = pick_actor(engine, rng, Role::CCBMember);
    let rid = &request.id;
    match request.state {
        ChangeState::Submitted => (
            "review",
            engine
                .transition(rid, ChangeState::UnderReview, &ccb, "review")
                .map(|_| ()),
        ),
        ChangeState::UnderReview => match rng.below(4) {
            0 => (
                "clarify",
                engine
                    .clarify_request(rid, Some(Priority::High), None, "clarified", &ccb)
                    .map(|_| ()),
            ),
            1 => {
                let earlier: Vec<RequestId> = engine
                    .state()
                    .requests
                    .values()
                    .filter(|r| r.submitted_at < request.submitted_at)
                    .map(|r| r.id.clone())
                    .collect();
                match rng.pick(&earlier) {
                    Some(canonical) => (
                        "mark_duplicate",
                        engine.mark_duplicate(rid, &canonical.clone(), &ccb).map(|_| ()),
                    ),
                    None => ("noop", Ok(())),
                }
            }
            2 if !request.trace_links.is_empty() => (
                "trace",
                engine
                    .transition(rid, ChangeState::Traced, &ccb, "traced")
                    .map(|_| ()),
            ),
            _ => {
                let reqs: Vec<RequirementId> =
                    engine.state().requirements.keys().cloned().collect();
                let target = rng.pick(&reqs).cloned().unwrap_or_else(|| RequirementId::new("none"));
                let relation = if rng.coin(50) { Relation::Impacts } else { Relation::Implements };
                (
                    "link",
                    engine
                        .link_requirements(rid, &[(target, relation)], &ccb)
                        .map(|_| ()),
                )
            }
        },
        ChangeState::Traced => (
            "start_analysis",
            engine
                .transition(rid, ChangeState::UnderAnalysis, &ccb, "analyse")
                .map(|_| ()),
        ),
        ChangeState::UnderAnalysis => {
            let analyst = pick_actor(engine, rng, Role::SystemAnalyst);
            let linked: Vec<RequirementId> = engine
                .state()
                .links_of(rid)
                .map(|l| l.requirement_id.clone())
                .collect();
            let input = AnalysisInput {
                impact: rng.coin(80).then(|| ImpactAnalysis {
                    affected_requirement_ids: linked,
                    affected_components: vec!["core".into()],
                    scope_note: "scope".into(),
                }),
                risks: rng.coin(80).then(|| {
                    vec![Risk {
                        category: RiskCategory::Technical,
                        probability: rng.below(101) as f64 / 100.0,
                        impact_level: 1 + rng.below(5) as u8,
                        mitigation: "mitigate".into(),
                    }]
                }),
                cost_benefit: rng.coin(80).then(|| CostBenefit {
                    cost_person_hours: rng.below(200) as f64,
                    expected_benefit: 1 + rng.below(5) as u8,
                    note: "note".into(),
                }),
            };
            ("analyze", engine.record_analysis(rid, input, &analyst).map(|_| ()))
        }
        ChangeState::Analyzed => {
            if rng.coin(70) {
                let choice = if rng.coin(65) { VoteChoice::Approve } else { VoteChoice::Reject };
                ("vote", engine.cast_vote(rid, &ccb, choice, "because").map(|_| ()))
            } else {
                ("decide", engine.finalize_decision(rid, "decided", &ccb).map(|_| ()))
            }
        }
        ChangeState::Approved => {
            let po = pick_actor(engine, rng, Role::ProductOwner);
            (
                "to_backlog",
                engine
                    .transition(rid, ChangeState::InBacklog, &po, "backlog")
                    .map(|_| ()),
            )
        }
        ChangeState::InBacklog => {
            let po = pick_actor(engine, rng, Role::ProductOwner);
            if !request.ready {
                let outcome = if rng.coin(20) {
                    RefineOutcome::ReferBack {
                        reason: "missing dependency".into(),
                    }
                } else {
                    RefineOutcome::Ready
                };
                ("refine", engine.refine(rid, outcome, &po).map(|_| ()))
            } else {
                let plan = if rng.coin(50) {
                    CategorizationPlan::SingleStory {
                        title: random_text(rng, 2),
                    }
                } else {
                    let n = 1 + rng.below(3);
                    CategorizationPlan::Epic {
                        title: random_text(rng, 2),
                        story_titles: (0..n).map(|_| random_text(rng, 2)).collect(),
                    }
                };
                ("categorize", engine.categorize(rid, plan, &po).map(|_| ()))
            }
        }
        ChangeState::Categorized | ChangeState::InProgress => {
            let sm = pick_actor(engine, rng, Role::ScrumMaster);
            let open: Vec<SprintId> = engine
                .state()
                .sprints
                .values()
                .filter(|s| s.state != SprintState::Closed)
                .map(|s| s.id.clone())
                .collect();
            match rng.pick(&open) {
                Some(sprint) if rng.coin(70) => {
                    ("plan_sprint", engine.plan_sprint(&sprint.clone(), &sm).map(|_| ()))
                }
                Some(sprint) if rng.coin(30) => {
                    let target = match engine.state().sprints[sprint].state {
                        SprintState::Planned => SprintState::Active,
                        _ => SprintState::Closed,
                    };
                    (
                        "sprint_state",
                        engine.set_sprint_state(&sprint.clone(), target, &sm).map(|_| ()),
                    )
                }
                _ => {
                    let capacity = rng.below(30) as u32;
                    ("create_sprint", engine.create_sprint("sprint", capacity, &sm).map(|_| ()))
                }
            }
        }
        ChangeState::Released => {
            let po = pick_actor(engine, rng, Role::ProductOwner);
            (
                "close",
                engine.transition(rid, ChangeState::Closed, &po, "done").map(|_| ()),
            )
        }
        ChangeState::Rejected | ChangeState::ClosedDuplicate | ChangeState::Closed => {
            // Archived requests accept nothing; try an arbitrary edge anyway.
            let target = ChangeState::ALL[rng.below(ChangeState::ALL.len())];
            ("archived_transition", engine.transition(rid, target, &ccb, "x").map(|_| ()))
        }
    }
}

fn story_step<C: Clock, S: EventSink, R: Chooser + ?Sized>(
    engine: &mut Engine<C, S>,
    rng: &mut R,
    story: &WorkItem,
) -> (&'static str, Result<()>) {
    let id = &story.id;
    match story.state {
        WorkItemState::New => {
            let mut ballots = BTreeMap::new();
            for role in [Role::Developer, Role::ScrumMaster, Role::ProductOwner] {
                let voter = pick_actor(engine, rng, role);
                ballots.insert(voter, CARDS[rng.below(CARDS.len())]);
            }
            let sm = pick_actor(engine, rng, Role::ScrumMaster);
            ("estimate", engine.run_estimation_round(id, &ballots, &sm).map(|_| ()))
        }
        WorkItemState::Estimated | WorkItemState::Prioritized => {
            let po = pick_actor(engine, rng, Role::ProductOwner);
            let rank = 1 + rng.below(engine.state().work_items.len() + 2) as u32;
            ("prioritize", engine.prioritize(id, rank, &po).map(|_| ()))
        }
        WorkItemState::InSprint | WorkItemState::InImplementation => {
            let dev = pick_actor(engine, rng, Role::Developer);
            let stage = [
                ImplementationStage::Started,
                ImplementationStage::InCodeReview,
                ImplementationStage::DevTested,
            ][rng.below(3)];
            ("status", engine.update_implementation_status(id, stage, &dev).map(|_| ()))
        }
        WorkItemState::InVerification => {
            let qa = pick_actor(engine, rng, Role::QA);
            let pass = rng.coin(60);
            let input = VerificationInput {
                work_item_id: id.clone(),
                functional_pass: pass || rng.coin(50),
                nonfunctional_pass: pass || rng.coin(50),
                regression_passed: pass || rng.coin(30),
                deviations: if pass { vec![] } else { vec!["deviation".into()] },
                verifier: qa,
            };
            ("verify", engine.record_verification(input).map(|_| ()))
        }
        WorkItemState::InValidation => {
            let role = if rng.coin(50) { Role::Stakeholder } else { Role::Client };
            let validator = pick_actor(engine, rng, role);
            let accepted = rng.coin(70);
            let input = ValidationInput {
                work_item_id: id.clone(),
                verdict: if accepted {
                    ValidationVerdict::Accepted
                } else {
                    ValidationVerdict::IssuesReported
                },
                issues: if accepted { vec![] } else { vec!["issue".into()] },
                validator,
            };
            ("validate", engine.record_validation(input).map(|_| ()))
        }
        WorkItemState::Accepted => {
            let maint = pick_actor(engine, rng, Role::Maintenance);
            ("release", engine.release(id, &maint).map(|_| ()))
        }
        // Transient or final states: poke an operation that must be refused.
        WorkItemState::DevTested | WorkItemState::Verified | WorkItemState::Released => {
            let maint = pick_actor(engine, rng, Role::Maintenance);
            ("release_again", engine.release(id, &maint).map(|_| ()))
        }
    }
}
