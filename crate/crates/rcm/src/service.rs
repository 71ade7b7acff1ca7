//! The service layer: one engine over a data directory, plus notification
//! dispatch. Executes [`Command`]s and answers with JSON documents.

use std::path::Path;

use chrono::{Duration, Utc};
use rcm_core::delivery::{ValidationInput, VerificationInput};
use rcm_core::notify::notifications_for;
use rcm_core::phases::checklist;
use rcm_core::scenario::{self, standard_roster, DemoError, DemoReport, Roster};
use rcm_core::traceability::DEFAULT_DUPLICATE_THRESHOLD;
use rcm_core::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::command::Command;
use crate::config::ServiceConfig;
use crate::dispatch::Dispatcher;
use crate::snapshot;
use crate::store::{self, DataDir, Journal};

/// Wall-clock time.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Utc::now()
    }
}

pub type ServiceEngine = Engine<Box<dyn Clock + Send>, Journal>;

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub duplicate_threshold: Option<f64>,
    pub webhook_urls: Vec<String>,
    pub fixed_clock: Option<Timestamp>,
}

impl From<&ServiceConfig> for Options {
    fn from(c: &ServiceConfig) -> Self {
        Self {
            duplicate_threshold: Some(c.duplicate_threshold),
            webhook_urls: c.webhook_urls.clone(),
            fixed_clock: c.fixed_clock,
        }
    }
}

pub struct Service {
    engine: ServiceEngine,
    dispatcher: Dispatcher,
    threshold: f64,
    dir: Option<DataDir>,
}

fn clock_for(state: &State, fixed: Option<Timestamp>) -> Box<dyn Clock + Send> {
    match fixed {
        // a reopened store continues one second after its last event
        Some(start) => {
            let start = match state.last_at {
                Some(last) if last + Duration::seconds(1) > start => last + Duration::seconds(1),
                _ => start,
            };
            Box::new(SteppingClock::new(start))
        }
        None => Box::new(SystemClock),
    }
}

fn to_json<T: Serialize>(value: T) -> Result<Value> {
    serde_json::to_value(value).map_err(|e| RcmError::StorageFailure(format!("encode: {e}")))
}

impl Service {
    /// In-memory service; nothing survives the process.
    pub fn in_memory(options: Options) -> Self {
        let state = State::new();
        let clock = clock_for(&state, options.fixed_clock);
        Self {
            engine: Engine::with_state(state, clock, Journal::memory()),
            dispatcher: Dispatcher::start(options.webhook_urls, None),
            threshold: options.duplicate_threshold.unwrap_or(DEFAULT_DUPLICATE_THRESHOLD),
            dir: None,
        }
    }

    /// Locks `path` and recovers state from its snapshot and event log.
    pub fn open(path: &Path, options: Options) -> Result<Self> {
        let dir = DataDir::open(path)?;
        let mut state = match std::fs::read(dir.snapshot_path()) {
            Ok(bytes) => {
                let document: Value = serde_json::from_slice(&bytes)
                    .map_err(|e| RcmError::StorageFailure(format!("snapshot: {e}")))?;
                snapshot::import(&document)?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => State::new(),
            Err(e) => return Err(RcmError::StorageFailure(format!("snapshot: {e}"))),
        };
        let base = state.last_seq;
        let events = store::read_log(&dir.log_path(), base)?;
        state.replay_onto(&events)?;
        let journal = Journal::file(&dir.log_path(), base, events)?;
        let clock = clock_for(&state, options.fixed_clock);
        Ok(Self {
            engine: Engine::with_state(state, clock, journal),
            dispatcher: Dispatcher::start(options.webhook_urls, Some(dir.notifications_path())),
            threshold: options.duplicate_threshold.unwrap_or(DEFAULT_DUPLICATE_THRESHOLD),
            dir: Some(dir),
        })
    }

    /// Opens the configured data directory and applies the bootstrap roster
    /// if the store is still empty.
    pub fn from_config(config: &ServiceConfig) -> Result<Self> {
        config.validate()?;
        let mut service = Self::open(&config.data_dir, config.into())?;
        if let Some(path) = &config.bootstrap {
            if service.state().last_seq == 0 {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| RcmError::Validation(format!("{}: {e}", path.display())))?;
                let roster: Roster = serde_json::from_str(&text)
                    .map_err(|e| RcmError::Validation(format!("{}: {e}", path.display())))?;
                service.execute(&ActorId::system(), Command::Bootstrap { roster: Some(roster) })?;
            }
        }
        Ok(service)
    }

    pub fn state(&self) -> &State {
        self.engine.state()
    }

    pub fn events(&self) -> &[AuditEvent] {
        self.engine.sink().events()
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.dir.as_ref().map(DataDir::path)
    }

    /// Waits for queued notifications to be delivered or recorded as failed.
    pub fn flush_notifications(&self) {
        self.dispatcher.flush();
    }

    pub fn notifications(&self) -> Vec<rcm_core::notify::Notification> {
        self.dispatcher.records()
    }

    pub fn health(&self) -> Value {
        json!({
            "status": "ok",
            "version": env!("CARGO_PKG_VERSION"),
            "event_count": self.state().last_seq,
            "last_seq": self.state().last_seq,
        })
    }

    /// Hands every event committed after `since` to the dispatcher.
    fn notify_since(&self, since: u64) {
        let channel = self.dispatcher.channel();
        for event in self.engine.sink().since(since + 1) {
            let notes = notifications_for(self.state(), event, channel);
            self.dispatcher.dispatch(event.clone(), notes);
        }
    }

    /// Runs the scripted ten-phase scenario on this store.
    pub fn run_demo(&mut self, inject_verification_failure: bool) -> std::result::Result<DemoReport, DemoError> {
        let before = self.state().last_seq;
        let boot = scenario::bootstrap(&mut self.engine, &standard_roster()).map_err(|error| DemoError {
            phase: "Bootstrap".into(),
            error,
        });
        let result = boot.and_then(|_| {
            scenario::run_demo(&mut self.engine, inject_verification_failure, |e| {
                e.sink().events().to_vec()
            })
        });
        self.notify_since(before);
        result
    }

    /// Runs `f` directly against the engine, then dispatches notifications
    /// for whatever it committed.
    pub fn with_engine<R>(&mut self, f: impl FnOnce(&mut ServiceEngine) -> R) -> R {
        let before = self.state().last_seq;
        let result = f(&mut self.engine);
        if self.state().last_seq > before {
            self.notify_since(before);
        }
        result
    }

    pub fn execute(&mut self, actor: &ActorId, command: Command) -> Result<Value> {
        let before = self.state().last_seq;
        let result = self.run(actor, command);
        if self.state().last_seq > before {
            self.notify_since(before);
        }
        result
    }

    fn run(&mut self, actor: &ActorId, command: Command) -> Result<Value> {
        let e = &mut self.engine;
        match command {
            Command::Health => Ok(self.health()),
            Command::State => to_json(e.state()),
            Command::ExportSnapshot => to_json(snapshot::export(e.state())),
            Command::ImportSnapshot { document } => self.import_snapshot(&document),
            Command::Bootstrap { roster } => {
                let roster = roster.unwrap_or_else(standard_roster);
                scenario::bootstrap(e, &roster)?;
                Ok(json!({
                    "sites": e.state().sites.len(),
                    "actors": e.state().actors.len(),
                    "requirements": e.state().requirements.len(),
                }))
            }
            Command::RegisterSite { site } => to_json(e.register_site(site)?),
            Command::SetSiteActive { site_id, active } => to_json(e.set_site_active(&site_id, active)?),
            Command::RegisterActor { actor: new } => to_json(e.register_actor(new)?),
            Command::RegisterRequirement { title, description } => {
                to_json(e.register_requirement(&title, &description, actor)?)
            }
            Command::RetireRequirement { requirement_id } => {
                to_json(e.retire_requirement(&requirement_id, actor)?)
            }
            Command::TraceReport { requirement_id } => to_json(e.trace_report(&requirement_id)?),
            Command::Submit {
                draft,
                idempotency_key,
            } => to_json(e.submit_change_request(draft, actor, idempotency_key.as_deref())?),
            Command::ListRequests { queue } => match queue.as_deref() {
                Some("ccb") => to_json(e.review_queue()),
                None => to_json(e.state().requests.values().collect::<Vec<_>>()),
                Some(other) => Err(RcmError::Validation(format!("unknown queue {other:?}"))),
            },
            Command::GetRequest { request_id } => to_json(e.state().request(&request_id)?),
            Command::Transition {
                request_id,
                target,
                note,
            } => to_json(e.transition(&request_id, target, actor, &note)?),
            Command::Clarify {
                request_id,
                priority,
                change_type,
                note,
            } => to_json(e.clarify_request(&request_id, priority, change_type, &note, actor)?),
            Command::LinkRequirements { request_id, links } => {
                let links: Vec<(RequirementId, Relation)> =
                    links.into_iter().map(|l| (l.requirement_id, l.relation)).collect();
                to_json(e.link_requirements(&request_id, &links, actor)?)
            }
            Command::Duplicates {
                request_id,
                threshold,
            } => to_json(e.suggest_duplicates(&request_id, threshold.unwrap_or(self.threshold))?),
            Command::MarkDuplicate {
                request_id,
                canonical_id,
            } => to_json(e.mark_duplicate(&request_id, &canonical_id, actor)?),
            Command::RecordAnalysis {
                request_id,
                analysis,
            } => to_json(e.record_analysis(&request_id, analysis, actor)?),
            Command::CastVote {
                request_id,
                choice,
                rationale,
            } => to_json(e.cast_vote(&request_id, actor, choice, &rationale)?),
            Command::FinalizeDecision {
                request_id,
                reasons,
            } => to_json(e.finalize_decision(&request_id, &reasons, actor)?),
            Command::Refine {
                request_id,
                outcome,
            } => to_json(e.refine(&request_id, outcome, actor)?),
            Command::Categorize { request_id, plan } => to_json(e.categorize(&request_id, plan, actor)?),
            Command::Phases { request_id } => {
                e.state().request(&request_id)?;
                let events = e.sink().events();
                to_json(checklist(e.state(), events, &request_id))
            }
            Command::GetWorkItem { work_item_id } => to_json(e.state().work_item(&work_item_id)?),
            Command::Estimate {
                work_item_id,
                ballots,
            } => to_json(e.run_estimation_round(&work_item_id, &ballots, actor)?),
            Command::Rank { work_item_id, rank } => to_json(e.prioritize(&work_item_id, rank, actor)?),
            Command::UpdateStatus {
                work_item_id,
                stage,
            } => to_json(e.update_implementation_status(&work_item_id, stage, actor)?),
            Command::Verify {
                work_item_id,
                functional_pass,
                nonfunctional_pass,
                regression_passed,
                deviations,
            } => to_json(e.record_verification(VerificationInput {
                work_item_id,
                functional_pass,
                nonfunctional_pass,
                regression_passed,
                deviations,
                verifier: actor.clone(),
            })?),
            Command::Validate {
                work_item_id,
                verdict,
                issues,
            } => to_json(e.record_validation(ValidationInput {
                work_item_id,
                verdict,
                issues,
                validator: actor.clone(),
            })?),
            Command::Release { work_item_id } => to_json(e.release(&work_item_id, actor)?),
            Command::ListSprints => to_json(e.state().sprints.values().collect::<Vec<_>>()),
            Command::CreateSprint {
                name,
                capacity_points,
            } => to_json(e.create_sprint(&name, capacity_points, actor)?),
            Command::PlanSprint { sprint_id } => to_json(e.plan_sprint(&sprint_id, actor)?),
            Command::SetSprintState { sprint_id, state } => {
                to_json(e.set_sprint_state(&sprint_id, state, actor)?)
            }
            Command::Audit { from_seq } => to_json(e.sink().since(from_seq.unwrap_or(1))),
            Command::Notifications => {
                self.dispatcher.flush();
                to_json(self.dispatcher.records())
            }
        }
    }

    /// Replaces an empty store with the snapshot's state. The log then
    /// continues from the snapshot's last seq.
    fn import_snapshot(&mut self, document: &Value) -> Result<Value> {
        let state = snapshot::import(document)?;
        if self.state().last_seq != 0 {
            return Err(RcmError::Validation(
                "snapshots can only be imported into an empty store".into(),
            ));
        }
        let journal = match &self.dir {
            Some(dir) => {
                let bytes = serde_json::to_vec_pretty(&snapshot::export(&state))
                    .map_err(|e| RcmError::StorageFailure(format!("encode: {e}")))?;
                std::fs::write(dir.snapshot_path(), bytes)
                    .map_err(|e| RcmError::StorageFailure(format!("snapshot: {e}")))?;
                Journal::file(&dir.log_path(), state.last_seq, Vec::new())?
            }
            None => Journal::memory_after(state.last_seq),
        };
        let (_, clock, _) = std::mem::replace(
            &mut self.engine,
            Engine::with_state(State::new(), Box::new(SystemClock), Journal::memory()),
        )
        .into_parts();
        self.engine = Engine::with_state(state, clock, journal);
        Ok(json!({
            "schema_version": snapshot::SCHEMA_VERSION,
            "last_seq": self.state().last_seq,
        }))
    }
}
