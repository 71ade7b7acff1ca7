#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rcm::command::LinkSpec;
use rcm::{Command, Options};
use rcm_core::analysis::AnalysisInput;
use rcm_core::*;

pub const T0: &str = "2026-03-01T09:00:00Z";

pub fn t0() -> Timestamp {
    T0.parse().unwrap()
}

pub fn fixed() -> Options {
    Options {
        fixed_clock: Some(t0()),
        ..Options::default()
    }
}

/// Runs the CLI in-process: (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("rcm").chain(args.iter().copied());
    let code = rcm::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

pub fn analysis_input() -> AnalysisInput {
    AnalysisInput {
        impact: Some(ImpactAnalysis {
            affected_requirement_ids: vec![RequirementId::new("REQT-1")],
            affected_components: vec!["reports".into()],
            scope_note: "one module".into(),
        }),
        risks: Some(vec![Risk {
            category: RiskCategory::Schedule,
            probability: 0.2,
            impact_level: 2,
            mitigation: "timebox".into(),
        }]),
        cost_benefit: Some(CostBenefit {
            cost_person_hours: 16.0,
            expected_benefit: 4,
            note: "worth it".into(),
        }),
    }
}

pub fn draft(title: &str) -> ChangeDraft {
    ChangeDraft {
        title: title.into(),
        description: "Finance wants the monthly usage report as CSV".into(),
        change_type: Some(ChangeType::Addition),
        business_value: 4,
        priority: Some(Priority::High),
        severity: None,
        origin_site: None,
    }
}

/// Bootstrap followed by twelve state-changing operations.
pub fn scripted_scenario() -> Vec<(&'static str, Command)> {
    let rid = || RequestId::new("CR-1");
    let vote = |choice| Command::CastVote {
        request_id: rid(),
        choice,
        rationale: "reviewed".into(),
    };
    vec![
        ("system", Command::Bootstrap { roster: None }),
        (
            "ines",
            Command::Submit {
                draft: draft("Export report as CSV"),
                idempotency_key: Some("k-1".into()),
            },
        ),
        (
            "carla",
            Command::Submit {
                draft: draft("Export usage report to CSV"),
                idempotency_key: None,
            },
        ),
        (
            "ccb-berlin",
            Command::Transition {
                request_id: rid(),
                target: ChangeState::UnderReview,
                note: "picked".into(),
            },
        ),
        (
            "ccb-berlin",
            Command::Clarify {
                request_id: rid(),
                priority: Some(Priority::Critical),
                change_type: None,
                note: "quarter close depends on it".into(),
            },
        ),
        (
            "ccb-berlin",
            Command::LinkRequirements {
                request_id: rid(),
                links: vec![LinkSpec {
                    requirement_id: RequirementId::new("REQT-1"),
                    relation: Relation::Impacts,
                }],
            },
        ),
        (
            "ccb-berlin",
            Command::Transition {
                request_id: rid(),
                target: ChangeState::Traced,
                note: String::new(),
            },
        ),
        (
            "ccb-austin",
            Command::Transition {
                request_id: rid(),
                target: ChangeState::UnderAnalysis,
                note: String::new(),
            },
        ),
        (
            "ana",
            Command::RecordAnalysis {
                request_id: rid(),
                analysis: analysis_input(),
            },
        ),
        ("ccb-berlin", vote(VoteChoice::Approve)),
        ("ccb-austin", vote(VoteChoice::Approve)),
        ("ccb-lahore", vote(VoteChoice::Reject)),
        (
            "ccb-lahore",
            Command::FinalizeDecision {
                request_id: rid(),
                reasons: "2-1 in favour".into(),
            },
        ),
    ]
}

/// Accepts HTTP POSTs and records their bodies, always answering `status`.
pub struct Receiver {
    pub url: String,
    pub bodies: Arc<Mutex<Vec<String>>>,
}

pub fn receiver(status: u16) -> Receiver {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/hook", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&bodies);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; length];
            let _ = reader.read_exact(&mut body);
            sink.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
            );
        }
    });
    Receiver { url, bodies }
}

/// A local port with nothing listening on it.
pub fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/hook")
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) {
    std::fs::write(path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
}
