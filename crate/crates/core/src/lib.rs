//! Requirements change management for globally distributed agile teams.
//!
//! The crate is `no_std` (with `alloc`). It holds the domain model, the guarded
//! lifecycle of change requests and work items, and an [`Engine`] that turns
//! operations into append-only [`AuditEvent`]s. [`State::replay`] rebuilds the
//! full system state from those events.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod backlog;
pub mod clock;
pub mod delivery;
mod engine;
pub mod error;
pub mod event;
pub mod ids;
pub mod lifecycle;
pub mod model;
pub mod notify;
pub mod phases;
pub mod scenario;
pub mod similarity;
pub mod state;
pub mod traceability;

pub use clock::{Clock, FixedClock, SteppingClock, Timestamp};
pub use engine::{Engine, EventSink, MemorySink};
pub use error::{RcmError, Result};
pub use event::{AuditEvent, Change, EntityKind, EntityRef};
pub use ids::{ActorId, LinkId, RequestId, RequirementId, SessionId, SiteId, SprintId, WorkItemId};
pub use lifecycle::{ChangeState, WorkItemState};
pub use model::*;
pub use state::State;
