//! Acceptance suite. Runs every primary criterion and prints one PASS/FAIL
//! line for each; exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command as Process, Stdio};
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcm::client::Client;
use rcm::{Command, Options, Service};
use rcm_core::analysis::AnalysisInput;
use rcm_core::backlog::{CategorizationPlan, CARDS};
use rcm_core::delivery::{ValidationInput, VerificationInput};
use rcm_core::event::{RefineOutcome, Transition};
use rcm_core::notify::Notification;
use rcm_core::scenario::{bootstrap, random_step, standard_roster};
use rcm_core::*;

const BIN: &str = env!("CARGO_BIN_EXE_rcm");

type TestEngine = Engine<SteppingClock, MemorySink>;

fn a(id: &str) -> ActorId {
    ActorId::new(id)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn chooser(rng: &mut ChaCha8Rng) -> impl FnMut(usize) -> usize + '_ {
    move |n| rng.random_range(0..n.max(1))
}

fn start() -> Timestamp {
    Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
}

fn fresh_engine() -> TestEngine {
    let mut e = Engine::new(SteppingClock::new(start()), MemorySink::new());
    bootstrap(&mut e, &standard_roster()).unwrap();
    e
}

/// Copy of `e` with its own log; the clock resumes after the last event.
fn fork(e: &TestEngine) -> TestEngine {
    let resume = e.state().last_at.map_or(start(), |t| t + chrono::Duration::seconds(1));
    Engine::with_state(e.state().clone(), SteppingClock::new(resume), e.sink().clone())
}

fn events(e: &TestEngine) -> &[AuditEvent] {
    &e.sink().events
}

fn draft(title: &str, description: &str) -> ChangeDraft {
    ChangeDraft {
        title: title.into(),
        description: description.into(),
        change_type: Some(ChangeType::Modification),
        business_value: 3,
        priority: None,
        severity: None,
        origin_site: None,
    }
}

fn submit(e: &mut TestEngine, title: &str) -> RequestId {
    e.submit_change_request(draft(title, "details"), &a("ines"), None)
        .unwrap()
        .id
}

fn requirement(e: &TestEngine, title: &str) -> RequirementId {
    e.state().requirements.values().find(|r| r.title == title).unwrap().id.clone()
}

fn full_analysis(e: &TestEngine, rid: &RequestId) -> AnalysisInput {
    AnalysisInput {
        impact: Some(ImpactAnalysis {
            affected_requirement_ids: e.state().links_of(rid).map(|l| l.requirement_id.clone()).collect(),
            affected_components: vec!["reports".into()],
            scope_note: "one module".into(),
        }),
        risks: Some(vec![Risk {
            category: RiskCategory::Technical,
            probability: 0.3,
            impact_level: 2,
            mitigation: "spike first".into(),
        }]),
        cost_benefit: Some(CostBenefit {
            cost_person_hours: 12.0,
            expected_benefit: 4,
            note: "cheap".into(),
        }),
    }
}

fn estimate(e: &mut TestEngine, story: &WorkItemId, card: u32) {
    let ballots: BTreeMap<ActorId, u32> = [(a("dev-1"), card), (a("dev-2"), card)].into();
    let w = e.run_estimation_round(story, &ballots, &a("sara")).unwrap();
    assert_eq!(w.story_points, Some(card));
}

fn decide(e: &mut TestEngine, rid: &RequestId, choice: VoteChoice) {
    for m in ["ccb-berlin", "ccb-austin", "ccb-lahore"] {
        e.cast_vote(rid, &a(m), choice, "reviewed").unwrap();
    }
    e.finalize_decision(rid, "majority of the board", &a("ccb-berlin")).unwrap();
}

// ---- lifecycle oracle ---------------------------------------------------------

/// The legal request edges, written out independently of the engine.
fn request_edges() -> BTreeSet<(ChangeState, ChangeState)> {
    use ChangeState::*;
    [
        (Submitted, UnderReview),
        (UnderReview, Traced),
        (Traced, ClosedDuplicate),
        (Traced, UnderAnalysis),
        (UnderAnalysis, Analyzed),
        (Analyzed, Approved),
        (Analyzed, Rejected),
        (Approved, InBacklog),
        (InBacklog, UnderAnalysis),
        (InBacklog, Categorized),
        (Categorized, InProgress),
        (InProgress, Released),
        (Released, Closed),
    ]
    .into()
}

fn work_item_edges() -> BTreeSet<(WorkItemState, WorkItemState)> {
    use WorkItemState::*;
    [
        (New, Estimated),
        (Estimated, Prioritized),
        (Prioritized, InSprint),
        (InSprint, InImplementation),
        (InImplementation, DevTested),
        (DevTested, InVerification),
        (InVerification, Verified),
        (InVerification, InImplementation),
        (Verified, InValidation),
        (InValidation, Accepted),
        (InValidation, InImplementation),
        (Accepted, Released),
    ]
    .into()
}

/// Is `to` reachable from `from` in one to three legal steps?
fn realizable<S: Copy + Ord>(edges: &BTreeSet<(S, S)>, t: &Transition<S>) -> bool {
    let mut frontier = vec![t.from];
    for _ in 0..3 {
        let next: Vec<S> = edges
            .iter()
            .filter(|(f, _)| frontier.contains(f))
            .map(|&(_, to)| to)
            .collect();
        if next.contains(&t.to) {
            return true;
        }
        frontier = next;
    }
    false
}

/// Performs the operation that owns the edge `from -> to` on `rid`.
fn take_edge(e: &mut TestEngine, rid: &RequestId, to: ChangeState) {
    use ChangeState::*;
    let from = e.state().requests[rid].state;
    let ccb = a("ccb-austin");
    match (from, to) {
        (Submitted, UnderReview) | (Traced, UnderAnalysis) => {
            e.transition(rid, to, &ccb, "next").unwrap();
        }
        (UnderReview, Traced) => {
            let r = requirement(e, "Reporting");
            e.link_requirements(rid, &[(r, Relation::Impacts)], &ccb).unwrap();
            e.transition(rid, Traced, &ccb, "linked").unwrap();
        }
        (Traced, ClosedDuplicate) => {
            let canonical = e.state().requests.values().find(|r| r.title == "canonical").unwrap().id.clone();
            e.mark_duplicate(rid, &canonical, &ccb).unwrap();
        }
        (UnderAnalysis, Analyzed) => {
            let input = full_analysis(e, rid);
            e.record_analysis(rid, input, &a("ana")).unwrap();
        }
        (Analyzed, Approved) => decide(e, rid, VoteChoice::Approve),
        (Analyzed, Rejected) => decide(e, rid, VoteChoice::Reject),
        (Approved, InBacklog) | (Released, Closed) => {
            e.transition(rid, to, &a("pablo"), "next").unwrap();
        }
        (InBacklog, UnderAnalysis) => {
            let reason = RefineOutcome::ReferBack {
                reason: "depends on billing".into(),
            };
            e.refine(rid, reason, &a("pablo")).unwrap();
        }
        (InBacklog, Categorized) => {
            e.refine(rid, RefineOutcome::Ready, &a("pablo")).unwrap();
            let plan = CategorizationPlan::SingleStory {
                title: "the story".into(),
            };
            e.categorize(rid, plan, &a("pablo")).unwrap();
        }
        (Categorized, InProgress) => {
            let story = e.state().stories_of(rid).next().unwrap().id.clone();
            estimate(e, &story, 3);
            e.prioritize(&story, 1, &a("pablo")).unwrap();
            let sprint = e.create_sprint("sprint", 40, &a("sara")).unwrap();
            e.plan_sprint(&sprint.id, &a("sara")).unwrap();
        }
        (InProgress, Released) => {
            let story = e.state().stories_of(rid).next().unwrap().id.clone();
            e.update_implementation_status(&story, ImplementationStage::DevTested, &a("dev-1"))
                .unwrap();
            e.record_verification(VerificationInput {
                work_item_id: story.clone(),
                functional_pass: true,
                nonfunctional_pass: true,
                regression_passed: true,
                deviations: vec![],
                verifier: a("quinn"),
            })
            .unwrap();
            e.record_validation(ValidationInput {
                work_item_id: story.clone(),
                verdict: ValidationVerdict::Accepted,
                issues: vec![],
                validator: a("carla"),
            })
            .unwrap();
            e.release(&story, &a("max")).unwrap();
        }
        other => panic!("no operation owns {other:?}"),
    }
    assert_eq!(e.state().requests[rid].state, to, "edge {from:?} -> {to:?}");
}

/// Shortest legal path from `Submitted` to `target`.
fn path_to(target: ChangeState) -> Vec<ChangeState> {
    let edges = request_edges();
    let mut paths: BTreeMap<ChangeState, Vec<ChangeState>> = [(ChangeState::Submitted, vec![])].into();
    let mut queue = vec![ChangeState::Submitted];
    while let Some(s) = queue.first().copied() {
        queue.remove(0);
        for &(f, t) in &edges {
            if f == s && !paths.contains_key(&t) {
                let mut p = paths[&s].clone();
                p.push(t);
                paths.insert(t, p);
                queue.push(t);
            }
        }
    }
    paths.remove(&target).expect("every state is reachable")
}

/// Engine holding a canonical request plus one request driven to `state`.
fn request_in(state: ChangeState) -> (TestEngine, RequestId) {
    let mut e = fresh_engine();
    submit(&mut e, "canonical");
    let rid = submit(&mut e, "probe");
    for step in path_to(state) {
        take_edge(&mut e, &rid, step);
    }
    (e, rid)
}

fn transition_soundness() -> Result<String, String> {
    let oracle = request_edges();
    let declared: BTreeSet<_> = ChangeState::EDGES.into_iter().collect();
    if declared != oracle {
        return Err(format!("declared edge set differs: {declared:?}"));
    }
    let mut violations = Vec::new();
    let mut attempts = 0usize;
    for from in ChangeState::ALL {
        let (mut e, rid) = request_in(from);
        let mut actors: Vec<ActorId> = e.state().actors.keys().cloned().collect();
        actors.push(ActorId::system());
        for to in ChangeState::ALL {
            if from.can_transition_to(to) != oracle.contains(&(from, to)) {
                violations.push(format!("table disagrees on {from:?} -> {to:?}"));
            }
            if oracle.contains(&(from, to)) {
                // accepted through the operation that owns the edge
                let mut probe = fork(&e);
                take_edge(&mut probe, &rid, to);
                attempts += 1;
                continue;
            }
            for actor in &actors {
                attempts += 1;
                let before = e.state().last_seq;
                match e.transition(&rid, to, actor, "probe") {
                    Err(RcmError::IllegalTransition { from: f, to: t }) if f == from && t == to => {}
                    other => violations.push(format!("{from:?} -> {to:?} by {actor}: {other:?}")),
                }
                if e.state().last_seq != before || e.state().requests[&rid].state != from {
                    violations.push(format!("{from:?} -> {to:?} by {actor} changed state"));
                }
            }
        }
    }

    // every transition recorded in random runs follows the tables
    let items = work_item_edges();
    let mut observed = 0usize;
    for seed in 0..60 {
        let mut e = fresh_engine();
        let mut r = rng(1000 + seed);
        let mut pick = chooser(&mut r);
        for _ in 0..250 {
            let _ = random_step(&mut e, &mut pick);
        }
        for event in events(&e) {
            let (req, item) = transitions_of(&event.payload);
            for t in req {
                observed += 1;
                if !realizable(&oracle, &t) {
                    violations.push(format!("seq {}: request {:?} -> {:?}", event.seq, t.from, t.to));
                }
            }
            for t in item {
                observed += 1;
                if !realizable(&items, &t) {
                    violations.push(format!("seq {}: work item {:?} -> {:?}", event.seq, t.from, t.to));
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(format!(
            "169 pairs, {attempts} attempts, {observed} logged transitions, 0 violations"
        ))
    } else {
        Err(format!("{} violations, first: {}", violations.len(), violations[0]))
    }
}

fn transitions_of(change: &Change) -> (Vec<Transition<ChangeState>>, Vec<Transition<WorkItemState>>) {
    let mut req = Vec::new();
    let mut item = Vec::new();
    match change {
        Change::RequestTransitioned { transition, .. }
        | Change::DuplicateMarked { transition, .. }
        | Change::DecisionFinalized { transition, .. }
        | Change::Categorized { transition, .. } => req.push(*transition),
        Change::AnalysisRecorded { transition, .. } | Change::Refined { transition, .. } => {
            req.extend(*transition)
        }
        Change::SprintPlanned { started_requests, .. } => req.extend(
            started_requests
                .iter()
                .map(|_| Transition::new(ChangeState::Categorized, ChangeState::InProgress)),
        ),
        Change::EstimationRound { transition, .. }
        | Change::Prioritized { transition, .. }
        | Change::ImplementationStatus { transition, .. } => item.extend(*transition),
        Change::VerificationRecorded { transition, .. } | Change::ValidationRecorded { transition, .. } => {
            item.push(*transition)
        }
        Change::WorkItemReleased {
            transition,
            request_released,
            ..
        } => {
            item.push(*transition);
            req.extend(*request_released);
        }
        _ => {}
    }
    (req, item)
}

// ---- ten-phase coverage -------------------------------------------------------

/// Event kinds that evidence each phase, restated for the check.
const PHASE_EVIDENCE: [(&str, &str); 10] = [
    ("Change Traceability", "request.trace_linked"),
    ("Understanding Need for Change", "request.clarified"),
    ("Change Analysis", "request.analysis_recorded"),
    ("Change Evaluation & Decision", "request.decision_finalized"),
    ("Change Categorization", "request.categorized"),
    ("Change Prioritization", "work_item.prioritized"),
    ("Effort Estimation", "work_item.estimation_round"),
    ("Change Implementation", "work_item.implementation_status"),
    ("Change Verification and Validation", "work_item.validation_recorded"),
    ("Requirements Backlog Management", "request.refined"),
];

fn ten_phase_coverage() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path().to_str().unwrap();
    let started = Instant::now();
    let out = Process::new(BIN)
        .args(["--data-dir", d, "--output", "structured", "demo"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    if out.status.code() != Some(0) {
        return Err(format!("demo exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let log = std::fs::read_to_string(dir.path().join("rcm-events.log")).map_err(|e| e.to_string())?;
    let log: Vec<AuditEvent> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let state = State::replay(&log).map_err(|e| e.to_string())?;
    let rid = RequestId::new(report["request_id"].as_str().unwrap_or_default());
    let request = state.request(&rid).map_err(|e| e.to_string())?;
    if !matches!(request.state, ChangeState::Released | ChangeState::Closed) {
        return Err(format!("demo request ended {:?}", request.state));
    }
    let checklist = report["checklist"].as_array().cloned().unwrap_or_default();
    if checklist.len() != PHASE_EVIDENCE.len() {
        return Err(format!("{} phases reported", checklist.len()));
    }
    let belongs = |event: &AuditEvent| {
        event.entity.id == rid.as_str()
            || state
                .work_items
                .get(&WorkItemId::new(event.entity.id.as_str()))
                .is_some_and(|w| w.parent_request == rid)
    };
    for (entry, (label, action)) in checklist.iter().zip(PHASE_EVIDENCE) {
        if entry["label"] != label {
            return Err(format!("expected phase {label}, got {}", entry["label"]));
        }
        let seq = entry["seq"].as_u64().ok_or(format!("{label}: no evidence"))?;
        let event = log.iter().find(|e| e.seq == seq).ok_or(format!("{label}: seq {seq} not in log"))?;
        if event.action != action || !belongs(event) {
            return Err(format!("{label}: seq {seq} is {} on {}", event.action, event.entity.id));
        }
    }
    // acceptance must follow a passing verification of the same story
    let accepted = log.iter().find_map(|e| match &e.payload {
        Change::ValidationRecorded { record, .. } if record.verdict == ValidationVerdict::Accepted && belongs(e) => {
            Some((e.seq, record.work_item_id.clone()))
        }
        _ => None,
    });
    let (seq, story) = accepted.ok_or("no accepted validation")?;
    let verified = log.iter().any(|e| {
        e.seq < seq
            && matches!(&e.payload, Change::VerificationRecorded { record, .. }
                if record.work_item_id == story && record.passed())
    });
    if !verified {
        return Err("validation without a passing verification".into());
    }
    if elapsed >= Duration::from_secs(5) {
        return Err(format!("took {:.2} s", elapsed.as_secs_f64()));
    }
    Ok(format!(
        "10/10 phases evidenced, request {:?}, {:.2} s",
        request.state,
        elapsed.as_secs_f64()
    ))
}

// ---- sprint capacity ----------------------------------------------------------

fn oracle_first_fit(capacity: u32, ranked: &[(WorkItemId, u32)]) -> Vec<WorkItemId> {
    let mut used = 0;
    let mut taken = Vec::new();
    for (id, points) in ranked {
        if used + points <= capacity {
            used += points;
            taken.push(id.clone());
        }
    }
    taken
}

fn sprint_capacity() -> Result<String, String> {
    let mut base = fresh_engine();
    let rid = submit(&mut base, "backlog owner");
    for step in path_to(ChangeState::InBacklog) {
        take_edge(&mut base, &rid, step);
    }
    base.refine(&rid, RefineOutcome::Ready, &a("pablo")).unwrap();

    let mut r = rng(7);
    let mut committed_total = 0usize;
    for case in 0..1000 {
        let mut e = fork(&base);
        let n = r.random_range(0..=50usize);
        let mut points: BTreeMap<WorkItemId, u32> = BTreeMap::new();
        let mut order: Vec<WorkItemId> = Vec::new();
        if n > 0 {
            let plan = CategorizationPlan::Epic {
                title: "epic".into(),
                story_titles: (0..n).map(|i| format!("story {i}")).collect(),
            };
            e.categorize(&rid, plan, &a("pablo")).unwrap();
            let stories: Vec<WorkItemId> = e.state().stories_of(&rid).map(|w| w.id.clone()).collect();
            for s in &stories {
                let card = CARDS[r.random_range(0..CARDS.len())];
                estimate(&mut e, s, card);
                points.insert(s.clone(), card);
                // some stories stay unranked and must never be planned
                if r.random_range(0..10) == 0 {
                    continue;
                }
                let rank = r.random_range(1..=order.len() as u32 + 3);
                e.prioritize(s, rank, &a("pablo")).unwrap();
                order.insert((rank as usize - 1).min(order.len()), s.clone());
            }
            // a few re-ranks of already prioritized stories
            for _ in 0..r.random_range(0..4) {
                if order.is_empty() {
                    break;
                }
                let moved = order.remove(r.random_range(0..order.len()));
                let rank = r.random_range(1..=order.len() as u32 + 1);
                e.prioritize(&moved, rank, &a("pablo")).unwrap();
                order.insert((rank as usize - 1).min(order.len()), moved);
            }
        }
        let capacity = r.random_range(0..=100u32);
        let sprint = e.create_sprint("sprint", capacity, &a("sara")).unwrap();
        let report = e.plan_sprint(&sprint.id, &a("sara")).map_err(|err| format!("case {case}: {err}"))?;
        let got: Vec<WorkItemId> = report.committed.iter().map(|p| p.work_item_id.clone()).collect();
        let sum: u32 = got.iter().map(|id| points[id]).sum();
        if sum > capacity {
            return Err(format!("case {case}: committed {sum} > capacity {capacity}"));
        }
        let ranked: Vec<(WorkItemId, u32)> = order.iter().map(|id| (id.clone(), points[id])).collect();
        let expected = oracle_first_fit(capacity, &ranked);
        if got != expected {
            return Err(format!("case {case}: committed {got:?}, oracle {expected:?}"));
        }
        if report.remaining_capacity != capacity - sum {
            return Err(format!("case {case}: remaining {}", report.remaining_capacity));
        }
        let in_sprint = &e.state().sprints[&sprint.id].committed_item_ids;
        if in_sprint != &got {
            return Err(format!("case {case}: sprint holds {in_sprint:?}"));
        }
        committed_total += got.len();
    }
    Ok(format!("1000 backlogs, {committed_total} stories committed, 0 violations"))
}

// ---- duplicate suggestions ----------------------------------------------------

const VOCAB: [&str; 16] = [
    "export", "Report", "csv", "billing", "invoice", "login", "audit", "search", "filter", "tenant",
    "mobile", "a", "x", "PDF", "über", "2fa",
];
const SEPARATORS: [&str; 5] = [" ", ", ", "-", "/", " ("];

fn phrase(r: &mut ChaCha8Rng, words: usize) -> String {
    let mut text = String::new();
    for i in 0..words {
        if i > 0 {
            text.push_str(SEPARATORS[r.random_range(0..SEPARATORS.len())]);
        }
        text.push_str(VOCAB[r.random_range(0..VOCAB.len())]);
    }
    text
}

fn oracle_tokens(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

/// Pairwise Jaccard over every earlier live request: (id, shared, union).
fn oracle_duplicates(state: &State, probe: &RequestId, threshold: f64) -> Vec<(RequestId, usize, usize)> {
    let text = |r: &ChangeRequest| oracle_tokens(&format!("{} {}", r.title, r.description));
    let p = &state.requests[probe];
    let pt = text(p);
    let mut hits: Vec<(&ChangeRequest, usize, usize)> = state
        .requests
        .values()
        .filter(|r| r.submitted_at < p.submitted_at)
        .filter(|r| !matches!(r.state, ChangeState::Rejected | ChangeState::ClosedDuplicate))
        .map(|r| {
            let rt = text(r);
            let shared = pt.intersection(&rt).count();
            (r, shared, pt.len() + rt.len() - shared)
        })
        .filter(|&(_, s, u)| {
            let score = if u == 0 { 1.0 } else { s as f64 / u as f64 };
            score >= threshold
        })
        .collect();
    let ratio = |s: usize, u: usize| if u == 0 { (1u64, 1u64) } else { (s as u64, u as u64) };
    hits.sort_by(|(ra, sa, ua), (rb, sb, ub)| {
        let (a1, a2) = ratio(*sa, *ua);
        let (b1, b2) = ratio(*sb, *ub);
        (b1 * a2)
            .cmp(&(a1 * b2))
            .then(ra.submitted_at.cmp(&rb.submitted_at))
            .then(ra.id.cmp(&rb.id))
    });
    hits.into_iter().map(|(r, s, u)| (r.id.clone(), s, u)).collect()
}

fn reject(e: &mut TestEngine, rid: &RequestId) {
    use ChangeState::*;
    for step in [UnderReview, Traced, UnderAnalysis, Analyzed, Rejected] {
        take_edge(e, rid, step);
    }
}

fn duplicate_suggestions() -> Result<String, String> {
    let started = Instant::now();
    let thresholds = [0.2, 0.25, 1.0 / 3.0, 0.5, 0.6, 2.0 / 3.0, 0.75, 1.0];
    let mut r = rng(11);
    let (mut probes, mut suggestions, mut archived) = (0usize, 0usize, 0usize);
    for corpus in 0..24 {
        let size = if corpus == 0 { 200 } else { r.random_range(1..=200usize) };
        let mut e = fresh_engine();
        let mut ids: Vec<RequestId> = Vec::new();
        for _ in 0..size {
            let words = r.random_range(1..=5);
            let title = phrase(&mut r, words);
            let words = r.random_range(1..=4);
            let description = phrase(&mut r, words);
            let rid = e
                .submit_change_request(draft(&title, &description), &a("carla"), None)
                .map_err(|err| format!("submit {title:?}: {err}"))?
                .id;
            match r.random_range(0..100) {
                0..10 if !ids.is_empty() => {
                    let canonical = ids[r.random_range(0..ids.len())].clone();
                    if e.state().requests[&canonical].state != ChangeState::ClosedDuplicate {
                        e.transition(&rid, ChangeState::UnderReview, &a("ccb-berlin"), "").unwrap();
                        e.mark_duplicate(&rid, &canonical, &a("ccb-berlin")).unwrap();
                        archived += 1;
                    }
                }
                10..14 => {
                    reject(&mut e, &rid);
                    archived += 1;
                }
                _ => {}
            }
            ids.push(rid);
        }
        for id in &ids {
            let threshold = thresholds[r.random_range(0..thresholds.len())];
            let got: Vec<(RequestId, usize, usize)> = e
                .suggest_duplicates(id, threshold)
                .map_err(|err| err.to_string())?
                .into_iter()
                .map(|s| (s.request_id, s.shared_tokens, s.union_tokens))
                .collect();
            let expected = oracle_duplicates(e.state(), id, threshold);
            if got != expected {
                return Err(format!(
                    "corpus {corpus}, probe {id} at {threshold}: got {got:?}, oracle {expected:?}"
                ));
            }
            probes += 1;
            suggestions += got.len();
        }
    }
    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(10) {
        return Err(format!("took {:.2} s", elapsed.as_secs_f64()));
    }
    Ok(format!(
        "{probes} probes over 24 corpora ({archived} archived requests), {suggestions} suggestions identical, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

// ---- quorum safety ------------------------------------------------------------

/// Active sites seating a CCB member with no vote among the current ballots.
fn uncovered(state: &State, rid: &RequestId) -> Vec<SiteId> {
    let voted: BTreeSet<&SiteId> = state.votes.get(rid).into_iter().flat_map(|v| v.values()).map(|v| &v.site).collect();
    state
        .sites
        .values()
        .filter(|s| s.active && !voted.contains(&s.id))
        .filter(|s| state.actors.values().any(|a| a.role == Role::CCBMember && a.site == s.id))
        .map(|s| s.id.clone())
        .collect()
}

fn tally(state: &State, rid: &RequestId) -> (usize, usize) {
    let votes: Vec<&Vote> = state.votes.get(rid).into_iter().flat_map(|v| v.values()).collect();
    let approve = votes.iter().filter(|v| v.choice == VoteChoice::Approve).count();
    (approve, votes.len() - approve)
}

fn quorum_safety() -> Result<String, String> {
    let mut r = rng(23);
    let (mut finalized, mut ties, mut refused) = (0usize, 0usize, 0usize);
    for case in 0..1000 {
        let mut roster = standard_roster();
        let site_count = r.random_range(1..=5usize);
        let mut members: Vec<Vec<ActorId>> = Vec::new();
        for i in 0..site_count {
            roster.sites.push(Site {
                id: SiteId::new(format!("g{i}")),
                name: format!("Generated {i}"),
                utc_offset_minutes: 60 * i as i32,
                active: true,
            });
            let ids: Vec<ActorId> = (0..r.random_range(0..=3usize)).map(|m| a(&format!("g{i}-m{m}"))).collect();
            for id in &ids {
                roster.actors.push(Actor {
                    id: id.clone(),
                    name: "member".into(),
                    role: Role::CCBMember,
                    site: SiteId::new(format!("g{i}")),
                });
            }
            members.push(ids);
        }
        let mut e = Engine::new(SteppingClock::new(start()), MemorySink::new());
        bootstrap(&mut e, &roster).unwrap();
        let rid = submit(&mut e, "decision under test");
        for step in path_to(ChangeState::Analyzed) {
            take_edge(&mut e, &rid, step);
        }
        for s in ["berlin", "austin", "lahore"] {
            if r.random_range(0..4) > 0 {
                e.set_site_active(&SiteId::new(s), false).ok();
            }
        }
        let voters: Vec<ActorId> = members.iter().flatten().cloned().chain(
            ["ccb-berlin", "ccb-austin", "ccb-lahore"].map(a),
        ).collect();
        for _ in 0..r.random_range(1..=16) {
            match r.random_range(0..10) {
                0..6 => {
                    let voter = &voters[r.random_range(0..voters.len())];
                    let choice = if r.random_bool(0.5) { VoteChoice::Approve } else { VoteChoice::Reject };
                    e.cast_vote(&rid, voter, choice, "view").unwrap();
                }
                6 => {
                    let site = SiteId::new(format!("g{}", r.random_range(0..site_count)));
                    let active = r.random_bool(0.5);
                    e.set_site_active(&site, active).ok();
                }
                _ => {
                    let missing = uncovered(e.state(), &rid);
                    let (approve, reject) = tally(e.state(), &rid);
                    let result = e.finalize_decision(&rid, "board decision", &a("ccb-berlin"));
                    match (&result, missing.is_empty(), approve.cmp(&reject)) {
                        (Err(RcmError::QuorumNotMet { missing: m }), false, _) if *m == missing => refused += 1,
                        (Err(RcmError::TieDeferred { approve: x, reject: y }), true, std::cmp::Ordering::Equal)
                            if (*x, *y) == (approve, reject) =>
                        {
                            ties += 1
                        }
                        (Ok(d), true, std::cmp::Ordering::Greater) if d.outcome == Outcome::Approved => {
                            finalized += 1;
                            break;
                        }
                        (Ok(d), true, std::cmp::Ordering::Less) if d.outcome == Outcome::Rejected => {
                            finalized += 1;
                            break;
                        }
                        _ => {
                            return Err(format!(
                                "case {case}: missing {missing:?}, {approve}-{reject}, got {result:?}"
                            ))
                        }
                    }
                }
            }
        }
        // log scan: every decision covered its active sites when it was taken
        let log = events(&e);
        for (i, event) in log.iter().enumerate() {
            if let Change::DecisionFinalized { decision, .. } = &event.payload {
                let before = State::replay(&log[..i]).map_err(|err| err.to_string())?;
                let missing = uncovered(&before, &decision.request_id);
                let (approve, reject) = tally(&before, &decision.request_id);
                if !missing.is_empty() || approve == reject {
                    return Err(format!("case {case}: seq {} finalized with {missing:?} {approve}-{reject}", event.seq));
                }
            }
        }
    }
    Ok(format!(
        "1000 configurations: {finalized} decisions, {ties} ties deferred, {refused} quorum refusals, 0 violations"
    ))
}

// ---- replay determinism -------------------------------------------------------

fn random_run(seed: u64, steps: usize) -> TestEngine {
    let mut e = fresh_engine();
    let mut r = rng(seed);
    let mut pick = chooser(&mut r);
    for _ in 0..steps {
        let _ = random_step(&mut e, &mut pick);
    }
    e
}

fn replay_determinism() -> Result<String, String> {
    let mut r = rng(31);
    let mut total_events = 0usize;
    for run in 0..1000u64 {
        let steps = r.random_range(0..200);
        let e = random_run(5000 + run, steps);
        // through the on-disk encoding, as a restart would read it
        let lines: Vec<String> = events(&e).iter().map(|ev| serde_json::to_string(ev).unwrap()).collect();
        let decoded: Vec<AuditEvent> = lines.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
        let replayed = State::replay(&decoded).map_err(|err| format!("run {run}: {err}"))?;
        if &replayed != e.state() {
            return Err(format!("run {run}: replayed state differs"));
        }
        total_events += decoded.len();
    }

    // file-backed service: reopen equals live
    for run in 0..5u64 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let opts = Options {
            fixed_clock: Some(start()),
            ..Options::default()
        };
        let mut service = Service::open(dir.path(), opts.clone()).map_err(|e| e.to_string())?;
        service.execute(&ActorId::system(), Command::Bootstrap { roster: None }).map_err(|e| e.to_string())?;
        let mut r = rng(9000 + run);
        let mut pick = chooser(&mut r);
        for _ in 0..150 {
            let _ = service.with_engine(|e| random_step(e, &mut pick));
        }
        let live = service.state().clone();
        drop(service);
        let reopened = Service::open(dir.path(), opts).map_err(|e| e.to_string())?;
        if reopened.state() != &live {
            return Err(format!("store run {run}: reopened state differs"));
        }
    }

    serve_restart()?;
    Ok(format!(
        "1000 runs ({total_events} events) replay identically; store reopen and serve restart identical"
    ))
}

fn serve_restart() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path().to_str().unwrap().to_string();
    let spawn = || -> Result<(std::process::Child, Client), String> {
        let mut child = Process::new(BIN)
            .args(["--data-dir", &d, "--fixed-clock", common::T0, "serve", "--listen", "127.0.0.1:0", "--grace-ms", "50"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).map_err(|e| e.to_string())?;
        let url = line.trim().strip_prefix("listening on ").ok_or(format!("unexpected banner {line:?}"))?.to_string();
        Ok((child, Client::new(&url)))
    };
    let stop = |mut child: std::process::Child| -> Result<(), String> {
        Process::new("kill")
            .args(["-TERM", &child.id().to_string()])
            .status()
            .map_err(|e| e.to_string())?;
        match child.wait().map_err(|e| e.to_string())?.code() {
            Some(0) => Ok(()),
            other => Err(format!("serve exited {other:?}")),
        }
    };
    let (child, client) = spawn()?;
    for (actor, command) in common::scripted_scenario() {
        client.execute(Some(actor), &command).map_err(|e| e.to_string())?;
    }
    let before = client.execute(None, &Command::State).map_err(|e| e.to_string())?;
    stop(child)?;
    let (child, client) = spawn()?;
    let after = client.execute(None, &Command::State).map_err(|e| e.to_string())?;
    stop(child)?;
    if after != before {
        return Err("state after serve restart differs".into());
    }
    Ok(())
}

// ---- notification matrix ------------------------------------------------------

/// Events that must reach the request's initiator: (seq, request).
fn mandated(events: &[AuditEvent]) -> Vec<(u64, RequestId)> {
    events
        .iter()
        .filter_map(|e| match &e.payload {
            Change::DecisionFinalized { decision, .. } => Some((e.seq, decision.request_id.clone())),
            Change::RequestTransitioned { request_id, transition, .. } if transition.to == ChangeState::Released => {
                Some((e.seq, request_id.clone()))
            }
            Change::WorkItemReleased {
                work_item_id,
                request_released: Some(_),
                ..
            } => {
                let parent = events.iter().find_map(|c| match &c.payload {
                    Change::Categorized { request_id, items, .. } if items.iter().any(|w| &w.id == work_item_id) => {
                        Some(request_id.clone())
                    }
                    _ => None,
                });
                parent.map(|p| (e.seq, p))
            }
            _ => None,
        })
        .collect()
}

fn misses(state: &State, events: &[AuditEvent], log: &[Notification]) -> (usize, Vec<u64>) {
    let due = mandated(events);
    let missed = due
        .iter()
        .filter(|(seq, rid)| {
            let initiator = &state.requests[rid].initiator;
            !log.iter().any(|n| n.trigger_event_seq == *seq && &n.recipient == initiator)
        })
        .map(|(seq, _)| *seq)
        .collect();
    (due.len(), missed)
}

fn notification_matrix() -> Result<String, String> {
    let (mut checked, mut scenarios) = (0usize, 0usize);
    // file-backed services: scan the notification log on disk
    for run in 0..20u64 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut service = Service::open(dir.path(), Options::default()).map_err(|e| e.to_string())?;
        if run == 0 {
            service.run_demo(false).map_err(|e| e.to_string())?;
        } else {
            service.execute(&ActorId::system(), Command::Bootstrap { roster: None }).map_err(|e| e.to_string())?;
            let mut r = rng(7000 + run);
            let mut pick = chooser(&mut r);
            for _ in 0..300 {
                let _ = service.with_engine(|e| random_step(e, &mut pick));
            }
        }
        service.flush_notifications();
        let text = std::fs::read_to_string(dir.path().join("rcm-notifications.log")).unwrap_or_default();
        let log: Vec<Notification> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let (due, missed) = misses(service.state(), service.events(), &log);
        if !missed.is_empty() {
            return Err(format!("run {run}: initiator not notified for seqs {missed:?}"));
        }
        checked += due;
        scenarios += 1;
    }
    // in-memory services: scan the dispatcher's record
    for run in 0..200u64 {
        let mut service = Service::in_memory(Options::default());
        service.execute(&ActorId::system(), Command::Bootstrap { roster: None }).map_err(|e| e.to_string())?;
        let mut r = rng(8000 + run);
        let mut pick = chooser(&mut r);
        for _ in 0..300 {
            let _ = service.with_engine(|e| random_step(e, &mut pick));
        }
        service.flush_notifications();
        let (due, missed) = misses(service.state(), service.events(), &service.notifications());
        if !missed.is_empty() {
            return Err(format!("memory run {run}: initiator not notified for seqs {missed:?}"));
        }
        checked += due;
        scenarios += 1;
    }
    if checked == 0 {
        return Err("no decisions or releases generated".into());
    }
    Ok(format!("{scenarios} scenarios, {checked} decisions and releases, 0 misses"))
}

// ---- gate integrity -----------------------------------------------------------

fn gate_violations(events: &[AuditEvent]) -> Vec<String> {
    let mut found = Vec::new();
    let mut released_stories = 0;
    for (i, event) in events.iter().enumerate() {
        let Change::WorkItemReleased { work_item_id, .. } = &event.payload else {
            continue;
        };
        released_stories += 1;
        let mut passed_at = None;
        let mut accepted_at = None;
        for (j, earlier) in events[..i].iter().enumerate() {
            match &earlier.payload {
                Change::VerificationRecorded { record, .. } if &record.work_item_id == work_item_id => {
                    passed_at = record.passed().then_some(j);
                    accepted_at = None;
                }
                Change::ValidationRecorded { record, .. } if &record.work_item_id == work_item_id => {
                    accepted_at = (record.verdict == ValidationVerdict::Accepted).then_some(j);
                }
                Change::ImplementationStatus { work_item_id: w, .. } if w == work_item_id => {
                    passed_at = None;
                    accepted_at = None;
                }
                _ => {}
            }
        }
        match (passed_at, accepted_at) {
            (Some(v), Some(u)) if u > v => {}
            _ => found.push(format!("seq {}: {work_item_id} released without both gates", event.seq)),
        }
    }
    let _ = released_stories;
    found
}

fn gate_integrity() -> Result<String, String> {
    let mut released = 0usize;
    let mut refused = 0usize;
    for run in 0..300u64 {
        let mut e = fresh_engine();
        let mut r = rng(20_000 + run);
        for _ in 0..300 {
            {
                let mut pick = chooser(&mut r);
                let _ = random_step(&mut e, &mut pick);
            }
            // shortcut attempts the gates must refuse
            if r.random_range(0..4) == 0 {
                let stories: Vec<WorkItem> = e
                    .state()
                    .work_items
                    .values()
                    .filter(|w| w.kind == WorkItemKind::UserStory && w.state != WorkItemState::Accepted)
                    .cloned()
                    .collect();
                if let Some(w) = stories.get(r.random_range(0..stories.len().max(1))) {
                    if e.release(&w.id, &a("max")).is_ok() {
                        return Err(format!("run {run}: released {} from {:?}", w.id, w.state));
                    }
                    refused += 1;
                }
                let open: Vec<RequestId> = e
                    .state()
                    .requests
                    .values()
                    .filter(|q| q.state == ChangeState::InProgress)
                    .map(|q| q.id.clone())
                    .collect();
                for rid in open {
                    if e.transition(&rid, ChangeState::Released, &a("max"), "skip").is_ok() {
                        return Err(format!("run {run}: {rid} released by transition"));
                    }
                    refused += 1;
                }
            }
        }
        let violations = gate_violations(events(&e));
        if let Some(v) = violations.first() {
            return Err(format!("run {run}: {v}"));
        }
        // every released request has every story through both gates
        for q in e.state().requests.values() {
            if matches!(q.state, ChangeState::Released | ChangeState::Closed) {
                for w in e.state().stories_of(&q.id) {
                    if w.state != WorkItemState::Released {
                        return Err(format!("run {run}: {} released with {} at {:?}", q.id, w.id, w.state));
                    }
                }
                released += 1;
            }
        }
    }
    if released == 0 {
        return Err("no request reached Released".into());
    }
    Ok(format!(
        "300 runs, {released} released requests, {refused} shortcut attempts refused, 0 violations"
    ))
}

fn main() {
    type Check = fn() -> Result<String, String>;
    let criteria: [(&str, Check); 8] = [
        ("ten-phase coverage", ten_phase_coverage),
        ("transition-table soundness", transition_soundness),
        ("sprint capacity", sprint_capacity),
        ("duplicate suggestions", duplicate_suggestions),
        ("quorum safety", quorum_safety),
        ("replay determinism", replay_determinism),
        ("notification matrix", notification_matrix),
        ("gate integrity", gate_integrity),
    ];
    let quiet_panics = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(result) => result,
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1} s]"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name}: {reason} [{secs:.1} s]");
            }
        }
    }
    std::panic::set_hook(quiet_panics);
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
