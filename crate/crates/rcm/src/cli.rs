//! `rcm` command line. Exit codes: 0 success, 1 domain or storage error
//! (the error code is printed), 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rcm_core::analysis::AnalysisInput;
use rcm_core::backlog::CategorizationPlan;
use rcm_core::event::RefineOutcome;
use rcm_core::scenario::Roster;
use rcm_core::*;
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::api::{self, App};
use crate::client::{Client, ClientError};
use crate::command::{Command, LinkSpec};
use crate::config::ServiceConfig;
use crate::output;
use crate::service::{Options, Service};
use crate::store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputMode {
    Table,
    Structured,
}

#[derive(Debug, Parser)]
#[command(name = "rcm", version, about = "Requirements change management")]
pub struct Cli {
    /// Base URL of a running service.
    #[arg(long, global = true)]
    server: Option<String>,
    /// Work directly on a local data directory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Acting user id.
    #[arg(long, global = true)]
    actor: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = OutputMode::Table)]
    output: OutputMode,
    /// Stamp events from this instant onwards, one second apart.
    #[arg(long, global = true)]
    fixed_clock: Option<Timestamp>,
    #[command(subcommand)]
    command: Cmd,
}

/// Accepts `UnderReview`, `under-review` or `under_review` for enum values.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    let pascal: String = s
        .split(['-', '_'])
        .map(|part| {
            let mut chars = part.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().chain(chars).collect::<String>(),
                None => String::new(),
            }
        })
        .collect();
    serde_json::from_value(Value::String(s.into()))
        .or_else(|_| serde_json::from_value(Value::String(pascal)))
        .map_err(|_| format!("unrecognised value {s:?}"))
}

fn parse_link(s: &str) -> Result<LinkSpec, String> {
    let (id, relation) = match s.split_once(':') {
        Some((id, rel)) => (id, parse_enum(rel)?),
        None => (s, Relation::Impacts),
    };
    Ok(LinkSpec {
        requirement_id: RequirementId::new(id),
        relation,
    })
}

fn parse_ballot(s: &str) -> Result<(ActorId, u32), String> {
    let (who, card) = s.split_once('=').ok_or("ballots look like member=card")?;
    let card = card.parse().map_err(|_| format!("bad card {card:?}"))?;
    Ok((ActorId::new(who), card))
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Register sites, actors and requirements from a roster file (or the standard roster).
    Bootstrap {
        #[arg(long)]
        roster: Option<PathBuf>,
    },
    /// Raise a change request.
    Submit {
        #[arg(long)]
        title: String,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long = "type", value_parser = parse_enum::<ChangeType>)]
        change_type: Option<ChangeType>,
        #[arg(long, default_value_t = 3)]
        business_value: u8,
        #[arg(long, value_parser = parse_enum::<Priority>)]
        priority: Option<Priority>,
        #[arg(long, value_parser = parse_enum::<Severity>)]
        severity: Option<Severity>,
        #[arg(long)]
        origin_site: Option<String>,
        #[arg(long)]
        idempotency_key: Option<String>,
    },
    /// CCB review queue, or every request with --all.
    Queue {
        #[arg(long)]
        all: bool,
    },
    /// Show one change request.
    Show { request_id: String },
    /// Move a request along a plain lifecycle edge.
    Transition {
        request_id: String,
        #[arg(value_parser = parse_enum::<ChangeState>)]
        target: ChangeState,
        #[arg(long, default_value = "")]
        note: String,
    },
    Clarify {
        request_id: String,
        #[arg(long, value_parser = parse_enum::<Priority>)]
        priority: Option<Priority>,
        #[arg(long = "type", value_parser = parse_enum::<ChangeType>)]
        change_type: Option<ChangeType>,
        #[arg(long, default_value = "")]
        note: String,
    },
    /// Link requirements: `REQT-1` or `REQT-1:implements`.
    Trace {
        request_id: String,
        #[arg(required = true, value_parser = parse_link)]
        links: Vec<LinkSpec>,
    },
    Duplicates {
        request_id: String,
        #[arg(long)]
        threshold: Option<f64>,
    },
    MarkDuplicate { request_id: String, canonical_id: String },
    /// Record impact, risk and cost-benefit analysis from a JSON file.
    Analyze {
        request_id: String,
        #[arg(long)]
        file: PathBuf,
    },
    Vote {
        request_id: String,
        #[arg(value_parser = parse_enum::<VoteChoice>)]
        choice: VoteChoice,
        #[arg(long, default_value = "")]
        rationale: String,
    },
    Decide {
        request_id: String,
        #[arg(long)]
        reasons: String,
    },
    /// Mark a backlog request ready, or refer it back to the CCB.
    Refine {
        request_id: String,
        #[arg(long)]
        refer_back: Option<String>,
    },
    /// One --story makes a single story; --epic groups several.
    Categorize {
        request_id: String,
        #[arg(long)]
        epic: Option<String>,
        #[arg(long = "story", required = true)]
        stories: Vec<String>,
    },
    /// Which of the ten phases a request has been through.
    Phases { request_id: String },
    /// Show one work item.
    Item { work_item_id: String },
    /// Planning poker round: `member=card` ballots.
    Estimate {
        work_item_id: String,
        #[arg(required = true, value_parser = parse_ballot)]
        ballots: Vec<(ActorId, u32)>,
    },
    Rank { work_item_id: String, rank: u32 },
    #[command(subcommand)]
    Sprint(SprintCmd),
    /// Report implementation progress.
    Status {
        work_item_id: String,
        #[arg(value_parser = parse_enum::<ImplementationStage>)]
        stage: ImplementationStage,
    },
    Verify {
        work_item_id: String,
        #[arg(long)]
        fail_functional: bool,
        #[arg(long)]
        fail_nonfunctional: bool,
        #[arg(long)]
        fail_regression: bool,
        #[arg(long = "deviation")]
        deviations: Vec<String>,
    },
    /// Accept, or report issues with --issue.
    Validate {
        work_item_id: String,
        #[arg(long = "issue")]
        issues: Vec<String>,
    },
    Release { work_item_id: String },
    Audit {
        #[arg(long)]
        from_seq: Option<u64>,
    },
    #[command(subcommand)]
    Report(ReportCmd),
    #[command(subcommand)]
    Requirement(RequirementCmd),
    #[command(subcommand)]
    Snapshot(SnapshotCmd),
    Notifications,
    Health,
    State,
    /// Run the HTTP service on --data-dir.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, default_value_t = rcm_core::traceability::DEFAULT_DUPLICATE_THRESHOLD)]
        threshold: f64,
        #[arg(long = "webhook")]
        webhooks: Vec<String>,
        #[arg(long)]
        bootstrap: Option<PathBuf>,
        /// How long the health check reports 503 before connections close.
        #[arg(long, default_value_t = 500)]
        grace_ms: u64,
    },
    /// Drive one request through every phase on an empty --data-dir.
    Demo {
        #[arg(long)]
        inject_verification_failure: bool,
    },
}

#[derive(Debug, Subcommand)]
enum SprintCmd {
    Create { name: String, capacity: u32 },
    Plan { sprint_id: String },
    Start { sprint_id: String },
    Close { sprint_id: String },
    List,
}

#[derive(Debug, Subcommand)]
enum ReportCmd {
    /// Change history of one requirement.
    Trace { requirement_id: String },
}

#[derive(Debug, Subcommand)]
enum RequirementCmd {
    Add {
        title: String,
        #[arg(long, default_value = "")]
        description: String,
    },
    Retire { requirement_id: String },
}

#[derive(Debug, Subcommand)]
enum SnapshotCmd {
    Export,
    Import { file: PathBuf },
}

struct Usage(String);

fn read_json<T: DeserializeOwned>(path: &PathBuf) -> Result<T, Usage> {
    let text = std::fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn to_command(cmd: Cmd) -> Result<Command, Usage> {
    let rid = RequestId::new;
    let wid = WorkItemId::new;
    Ok(match cmd {
        Cmd::Bootstrap { roster } => Command::Bootstrap {
            roster: roster.as_ref().map(read_json::<Roster>).transpose()?,
        },
        Cmd::Submit {
            title,
            description,
            change_type,
            business_value,
            priority,
            severity,
            origin_site,
            idempotency_key,
        } => Command::Submit {
            draft: ChangeDraft {
                title,
                description,
                change_type,
                business_value,
                priority,
                severity,
                origin_site: origin_site.map(SiteId::new),
            },
            idempotency_key,
        },
        Cmd::Queue { all } => Command::ListRequests {
            queue: (!all).then(|| "ccb".into()),
        },
        Cmd::Show { request_id } => Command::GetRequest {
            request_id: rid(request_id),
        },
        Cmd::Transition {
            request_id,
            target,
            note,
        } => Command::Transition {
            request_id: rid(request_id),
            target,
            note,
        },
        Cmd::Clarify {
            request_id,
            priority,
            change_type,
            note,
        } => Command::Clarify {
            request_id: rid(request_id),
            priority,
            change_type,
            note,
        },
        Cmd::Trace { request_id, links } => Command::LinkRequirements {
            request_id: rid(request_id),
            links,
        },
        Cmd::Duplicates {
            request_id,
            threshold,
        } => Command::Duplicates {
            request_id: rid(request_id),
            threshold,
        },
        Cmd::MarkDuplicate {
            request_id,
            canonical_id,
        } => Command::MarkDuplicate {
            request_id: rid(request_id),
            canonical_id: rid(canonical_id),
        },
        Cmd::Analyze { request_id, file } => Command::RecordAnalysis {
            request_id: rid(request_id),
            analysis: read_json::<AnalysisInput>(&file)?,
        },
        Cmd::Vote {
            request_id,
            choice,
            rationale,
        } => Command::CastVote {
            request_id: rid(request_id),
            choice,
            rationale,
        },
        Cmd::Decide {
            request_id,
            reasons,
        } => Command::FinalizeDecision {
            request_id: rid(request_id),
            reasons,
        },
        Cmd::Refine {
            request_id,
            refer_back,
        } => Command::Refine {
            request_id: rid(request_id),
            outcome: match refer_back {
                Some(reason) => RefineOutcome::ReferBack { reason },
                None => RefineOutcome::Ready,
            },
        },
        Cmd::Categorize {
            request_id,
            epic,
            mut stories,
        } => Command::Categorize {
            request_id: rid(request_id),
            plan: match epic {
                Some(title) => CategorizationPlan::Epic {
                    title,
                    story_titles: stories,
                },
                None if stories.len() == 1 => CategorizationPlan::SingleStory {
                    title: stories.remove(0),
                },
                None => return Err(Usage("several stories need an --epic title".into())),
            },
        },
        Cmd::Phases { request_id } => Command::Phases {
            request_id: rid(request_id),
        },
        Cmd::Item { work_item_id } => Command::GetWorkItem {
            work_item_id: wid(work_item_id),
        },
        Cmd::Estimate {
            work_item_id,
            ballots,
        } => Command::Estimate {
            work_item_id: wid(work_item_id),
            ballots: ballots.into_iter().collect(),
        },
        Cmd::Rank { work_item_id, rank } => Command::Rank {
            work_item_id: wid(work_item_id),
            rank,
        },
        Cmd::Sprint(s) => match s {
            SprintCmd::Create { name, capacity } => Command::CreateSprint {
                name,
                capacity_points: capacity,
            },
            SprintCmd::Plan { sprint_id } => Command::PlanSprint {
                sprint_id: SprintId::new(sprint_id),
            },
            SprintCmd::Start { sprint_id } => Command::SetSprintState {
                sprint_id: SprintId::new(sprint_id),
                state: SprintState::Active,
            },
            SprintCmd::Close { sprint_id } => Command::SetSprintState {
                sprint_id: SprintId::new(sprint_id),
                state: SprintState::Closed,
            },
            SprintCmd::List => Command::ListSprints,
        },
        Cmd::Status {
            work_item_id,
            stage,
        } => Command::UpdateStatus {
            work_item_id: wid(work_item_id),
            stage,
        },
        Cmd::Verify {
            work_item_id,
            fail_functional,
            fail_nonfunctional,
            fail_regression,
            deviations,
        } => Command::Verify {
            work_item_id: wid(work_item_id),
            functional_pass: !fail_functional,
            nonfunctional_pass: !fail_nonfunctional,
            regression_passed: !fail_regression,
            deviations,
        },
        Cmd::Validate {
            work_item_id,
            issues,
        } => Command::Validate {
            work_item_id: wid(work_item_id),
            verdict: if issues.is_empty() {
                ValidationVerdict::Accepted
            } else {
                ValidationVerdict::IssuesReported
            },
            issues,
        },
        Cmd::Release { work_item_id } => Command::Release {
            work_item_id: wid(work_item_id),
        },
        Cmd::Audit { from_seq } => Command::Audit { from_seq },
        Cmd::Report(ReportCmd::Trace { requirement_id }) => Command::TraceReport {
            requirement_id: RequirementId::new(requirement_id),
        },
        Cmd::Requirement(RequirementCmd::Add { title, description }) => {
            Command::RegisterRequirement { title, description }
        }
        Cmd::Requirement(RequirementCmd::Retire { requirement_id }) => Command::RetireRequirement {
            requirement_id: RequirementId::new(requirement_id),
        },
        Cmd::Snapshot(SnapshotCmd::Export) => Command::ExportSnapshot,
        Cmd::Snapshot(SnapshotCmd::Import { file }) => Command::ImportSnapshot {
            document: read_json::<Value>(&file)?,
        },
        Cmd::Notifications => Command::Notifications,
        Cmd::Health => Command::Health,
        Cmd::State => Command::State,
        Cmd::Serve { .. } | Cmd::Demo { .. } => unreachable!("handled before dispatch"),
    })
}

fn columns(command: &Command) -> Option<&'static [&'static str]> {
    Some(match command {
        Command::ListRequests { .. } => &["id", "priority", "state", "title"],
        Command::Audit { .. } => &["seq", "at", "actor", "action", "entity"],
        Command::Duplicates { .. } => &["request_id", "score", "shared_tokens", "union_tokens"],
        Command::Notifications => &["id", "recipient", "trigger_event_seq", "channel", "delivered"],
        Command::Phases { .. } => &["label", "seq"],
        Command::ListSprints => &["id", "name", "state", "capacity_points"],
        _ => return None,
    })
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    mode: OutputMode,
}

impl Io<'_> {
    fn print(&mut self, value: &Value, columns: Option<&[&str]>) {
        let text = match self.mode {
            OutputMode::Structured => {
                format!("{}\n", serde_json::to_string_pretty(value).unwrap_or_default())
            }
            OutputMode::Table => output::render(value, columns),
        };
        let _ = self.out.write_all(text.as_bytes());
    }

    fn usage(&mut self, message: &str) -> i32 {
        let _ = writeln!(self.err, "error: {message}\n\nFor more information, try '--help'.");
        2
    }

    fn domain(&mut self, error: &RcmError) -> i32 {
        self.fail(error.code(), &error.to_string(), api::error_body(error))
    }

    fn fail(&mut self, code: &str, message: &str, body: Value) -> i32 {
        if self.mode == OutputMode::Structured {
            self.print(&body, None);
        }
        let _ = writeln!(self.err, "{code}: {message}");
        1
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(rendered.as_bytes());
                2
            } else {
                let _ = out.write_all(rendered.as_bytes());
                0
            };
        }
    };
    let mut io = Io {
        out,
        err,
        mode: cli.output,
    };
    let data_dir = match (&cli.server, &cli.data_dir) {
        (Some(_), Some(_)) | (None, None) => {
            return io.usage("exactly one of --server or --data-dir is required")
        }
        (None, Some(dir)) => Some(dir.clone()),
        (Some(_), None) => None,
    };
    let options = Options {
        fixed_clock: cli.fixed_clock,
        ..Options::default()
    };
    match cli.command {
        Cmd::Serve {
            listen,
            threshold,
            webhooks,
            bootstrap,
            grace_ms,
        } => {
            let Some(dir) = data_dir else {
                return io.usage("serve needs --data-dir");
            };
            let config = ServiceConfig {
                listen,
                data_dir: dir,
                duplicate_threshold: threshold,
                webhook_urls: webhooks,
                bootstrap,
                fixed_clock: cli.fixed_clock,
            };
            serve(&mut io, &config, Duration::from_millis(grace_ms))
        }
        Cmd::Demo {
            inject_verification_failure,
        } => {
            let Some(dir) = data_dir else {
                return io.usage("demo needs --data-dir");
            };
            if !store::is_pristine(&dir) {
                return io.usage(&format!(
                    "refusing to run the demo on non-empty data directory {}",
                    dir.display()
                ));
            }
            demo(&mut io, &dir, options, inject_verification_failure)
        }
        other => {
            let command = match to_command(other) {
                Ok(c) => c,
                Err(Usage(message)) => return io.usage(&message),
            };
            let actor = cli.actor.unwrap_or_else(|| ActorId::system().0);
            let cols = columns(&command);
            let result = match (&cli.server, data_dir) {
                (Some(url), _) => Client::new(url).execute(Some(&actor), &command),
                (None, Some(dir)) => {
                    let mut service = match Service::open(&dir, options) {
                        Ok(s) => s,
                        Err(e) => return io.domain(&e),
                    };
                    let result = service.execute(&ActorId::new(actor), command);
                    service.flush_notifications();
                    match result {
                        Ok(v) => Ok(v),
                        Err(e) => return io.domain(&e),
                    }
                }
                (None, None) => unreachable!(),
            };
            match result {
                Ok(value) => {
                    io.print(&value, cols);
                    0
                }
                Err(ClientError::Api {
                    code, message, body, ..
                }) => io.fail(&code, &message, body),
                Err(ClientError::Transport(message)) => io.fail(
                    "TransportError",
                    &message,
                    serde_json::json!({"error": {"code": "TransportError", "message": message}}),
                ),
            }
        }
    }
}

fn demo(io: &mut Io, dir: &PathBuf, options: Options, inject: bool) -> i32 {
    let mut service = match Service::open(dir, options) {
        Ok(s) => s,
        Err(e) => return io.domain(&e),
    };
    let result = service.run_demo(inject);
    service.flush_notifications();
    match result {
        Ok(report) => {
            match io.mode {
                OutputMode::Structured => io.print(&serde_json::to_value(&report).unwrap_or_default(), None),
                OutputMode::Table => {
                    let mut text = String::new();
                    for p in &report.checklist {
                        match p.seq {
                            Some(seq) => text.push_str(&format!("[x] {:<42} seq {seq}\n", p.label)),
                            None => text.push_str(&format!("[ ] {}\n", p.label)),
                        }
                    }
                    for seq in &report.rework {
                        text.push_str(&format!("rework: verification failed at seq {seq}\n"));
                    }
                    text.push_str(&format!(
                        "{} finished {:?} after {} events\n",
                        report.request_id,
                        report.final_state,
                        service.state().last_seq
                    ));
                    let _ = io.out.write_all(text.as_bytes());
                }
            }
            if report.complete() {
                0
            } else {
                let _ = writeln!(io.err, "demo left phases without evidence");
                1
            }
        }
        Err(e) => {
            let _ = writeln!(io.err, "demo failed in phase {}", e.phase);
            io.domain(&e.error)
        }
    }
}

#[cfg(unix)]
async fn terminate() {
    use tokio::signal::unix::{signal, SignalKind};
    match signal(SignalKind::terminate()) {
        Ok(mut s) => {
            s.recv().await;
        }
        Err(_) => std::future::pending().await,
    }
}

#[cfg(not(unix))]
async fn terminate() {
    std::future::pending::<()>().await
}

fn serve(io: &mut Io, config: &ServiceConfig, grace: Duration) -> i32 {
    let service = match Service::from_config(config) {
        Ok(s) => s,
        Err(e) => return io.domain(&e),
    };
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(r) => r,
        Err(e) => return io.fail("StorageFailure", &e.to_string(), Value::Null),
    };
    let app = App::new(service);
    let listener = match runtime.block_on(tokio::net::TcpListener::bind(config.listen)) {
        Ok(l) => l,
        Err(e) => {
            let message = format!("cannot listen on {}: {e}", config.listen);
            let body = serde_json::json!({"error": {"code": "BindFailure", "message": message}});
            return io.fail("BindFailure", &message, body);
        }
    };
    let addr = listener.local_addr().map(|a| a.to_string()).unwrap_or_default();
    let _ = writeln!(io.out, "listening on http://{addr}");
    let _ = io.out.flush();
    let shutdown = async {
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = terminate() => {}
        }
    };
    let served = runtime.block_on(api::serve(listener, app.clone(), grace, shutdown));
    app.service().lock().expect("service").flush_notifications();
    match served {
        Ok(()) => 0,
        Err(e) => io.fail("StorageFailure", &e.to_string(), Value::Null),
    }
}
