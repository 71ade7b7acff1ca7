#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcm_core::analysis::AnalysisInput;
use rcm_core::backlog::CategorizationPlan;
use rcm_core::delivery::{ValidationInput, VerificationInput};
use rcm_core::event::RefineOutcome;
use rcm_core::scenario::{bootstrap, standard_roster};
use rcm_core::*;

pub type TestEngine = Engine<SteppingClock, MemorySink>;

pub fn a(id: &str) -> ActorId {
    ActorId::new(id)
}

pub fn engine() -> TestEngine {
    let start = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    let mut engine = Engine::new(SteppingClock::new(start), MemorySink::new());
    bootstrap(&mut engine, &standard_roster()).unwrap();
    engine
}

pub fn events(engine: &TestEngine) -> &[AuditEvent] {
    &engine.sink().events
}

pub fn draft(title: &str, description: &str) -> ChangeDraft {
    ChangeDraft {
        title: title.into(),
        description: description.into(),
        change_type: Some(ChangeType::Addition),
        business_value: 3,
        priority: None,
        severity: None,
        origin_site: None,
    }
}

pub fn submit(engine: &mut TestEngine, title: &str) -> RequestId {
    engine
        .submit_change_request(draft(title, "details of the change"), &a("ines"), None)
        .unwrap()
        .id
}

pub fn requirement(engine: &TestEngine, title: &str) -> RequirementId {
    engine
        .state()
        .requirements
        .values()
        .find(|r| r.title == title)
        .unwrap()
        .id
        .clone()
}

pub fn complete_analysis(engine: &TestEngine, rid: &RequestId) -> AnalysisInput {
    let linked = engine
        .state()
        .links_of(rid)
        .map(|l| l.requirement_id.clone())
        .collect();
    AnalysisInput {
        impact: Some(ImpactAnalysis {
            affected_requirement_ids: linked,
            affected_components: vec!["api".into()],
            scope_note: "small".into(),
        }),
        risks: Some(vec![Risk {
            category: RiskCategory::Budget,
            probability: 0.1,
            impact_level: 2,
            mitigation: "none needed".into(),
        }]),
        cost_benefit: Some(CostBenefit {
            cost_person_hours: 8.0,
            expected_benefit: 3,
            note: "cheap".into(),
        }),
    }
}

const CCB: [&str; 3] = ["ccb-berlin", "ccb-austin", "ccb-lahore"];

/// Drives a fresh request along the happy path until it reaches `target`.
/// Rejected and ClosedDuplicate branch off at the decision and trace steps.
pub fn drive_to(engine: &mut TestEngine, target: ChangeState) -> RequestId {
    use ChangeState::*;
    if target == ClosedDuplicate {
        let canonical = submit(engine, "original request");
        let rid = submit(engine, "duplicate request");
        engine.transition(&rid, UnderReview, &a("ccb-berlin"), "").unwrap();
        engine.mark_duplicate(&rid, &canonical, &a("ccb-berlin")).unwrap();
        return rid;
    }
    let rid = submit(engine, "drive request");
    let ccb = a("ccb-berlin");
    let steps: &[ChangeState] = &[
        UnderReview,
        Traced,
        UnderAnalysis,
        Analyzed,
        Approved,
        InBacklog,
        Categorized,
        InProgress,
        Released,
        Closed,
    ];
    if target == Submitted {
        return rid;
    }
    for &step in steps {
        match step {
            UnderReview => {
                engine.transition(&rid, UnderReview, &ccb, "").unwrap();
            }
            Traced => {
                let r1 = requirement(engine, "Reporting");
                engine
                    .link_requirements(&rid, &[(r1, Relation::Impacts)], &ccb)
                    .unwrap();
                engine.transition(&rid, Traced, &ccb, "").unwrap();
            }
            UnderAnalysis => {
                engine.transition(&rid, UnderAnalysis, &ccb, "").unwrap();
            }
            Analyzed => {
                let input = complete_analysis(engine, &rid);
                engine.record_analysis(&rid, input, &a("ana")).unwrap();
            }
            Approved => {
                let choice = if target == Rejected {
                    VoteChoice::Reject
                } else {
                    VoteChoice::Approve
                };
                for m in CCB {
                    engine.cast_vote(&rid, &a(m), choice, "r").unwrap();
                }
                engine.finalize_decision(&rid, "reasons", &ccb).unwrap();
                if target == Rejected {
                    return rid;
                }
            }
            InBacklog => {
                engine.transition(&rid, InBacklog, &a("pablo"), "").unwrap();
            }
            Categorized => {
                engine.refine(&rid, RefineOutcome::Ready, &a("pablo")).unwrap();
                engine
                    .categorize(
                        &rid,
                        CategorizationPlan::SingleStory {
                            title: "story".into(),
                        },
                        &a("pablo"),
                    )
                    .unwrap();
            }
            InProgress => {
                let story = story_of(engine, &rid);
                estimate(engine, &story, 3);
                engine.prioritize(&story, 1, &a("pablo")).unwrap();
                let sprint = engine.create_sprint("s", 100, &a("sara")).unwrap();
                engine.plan_sprint(&sprint.id, &a("sara")).unwrap();
            }
            Released => {
                let story = story_of(engine, &rid);
                deliver(engine, &story);
            }
            Closed => {
                engine.transition(&rid, Closed, &a("pablo"), "").unwrap();
            }
            _ => unreachable!(),
        }
        if step == target {
            break;
        }
    }
    assert_eq!(engine.state().requests[&rid].state, target);
    rid
}

pub fn story_of(engine: &TestEngine, rid: &RequestId) -> WorkItemId {
    engine.state().stories_of(rid).next().unwrap().id.clone()
}

pub fn estimate(engine: &mut TestEngine, story: &WorkItemId, card: u32) {
    let ballots: BTreeMap<ActorId, u32> = [(a("dev-1"), card), (a("dev-2"), card)].into();
    engine.run_estimation_round(story, &ballots, &a("sara")).unwrap();
}

/// Takes an InSprint story through implementation, QA, UAT and release.
pub fn deliver(engine: &mut TestEngine, story: &WorkItemId) {
    engine
        .update_implementation_status(story, ImplementationStage::DevTested, &a("dev-1"))
        .unwrap();
    engine.record_verification(pass_verification(story)).unwrap();
    engine.record_validation(accept(story)).unwrap();
    engine.release(story, &a("max")).unwrap();
}

pub fn pass_verification(story: &WorkItemId) -> VerificationInput {
    VerificationInput {
        work_item_id: story.clone(),
        functional_pass: true,
        nonfunctional_pass: true,
        regression_passed: true,
        deviations: vec![],
        verifier: a("quinn"),
    }
}

pub fn accept(story: &WorkItemId) -> ValidationInput {
    ValidationInput {
        work_item_id: story.clone(),
        verdict: ValidationVerdict::Accepted,
        issues: vec![],
        validator: a("sami"),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adapts a seeded RNG to the scenario driver.
pub fn chooser(rng: &mut ChaCha8Rng) -> impl FnMut(usize) -> usize + '_ {
    move |n| rng.random_range(0..n.max(1))
}
