//! Storage, HTTP service and command-line client for the requirements
//! change management engine in `rcm-core`.

pub mod api;
pub mod cli;
pub mod client;
pub mod command;
pub mod config;
pub mod dispatch;
pub mod output;
pub mod service;
pub mod snapshot;
pub mod store;

pub use command::Command;
pub use config::ServiceConfig;
pub use service::{Options, Service};
