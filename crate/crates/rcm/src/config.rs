use std::net::SocketAddr;
use std::path::PathBuf;

use rcm_core::traceability::DEFAULT_DUPLICATE_THRESHOLD;
use rcm_core::{RcmError, Result, Timestamp};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub duplicate_threshold: f64,
    #[serde(default)]
    pub webhook_urls: Vec<String>,
    /// Roster file applied when the store is empty.
    #[serde(default)]
    pub bootstrap: Option<PathBuf>,
    /// Start of a one-second-per-event clock, for reproducible runs.
    #[serde(default)]
    pub fixed_clock: Option<Timestamp>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: data_dir.into(),
            duplicate_threshold: DEFAULT_DUPLICATE_THRESHOLD,
            webhook_urls: Vec::new(),
            bootstrap: None,
            fixed_clock: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duplicate_threshold > 0.0 && self.duplicate_threshold <= 1.0) {
            return Err(RcmError::Validation(format!(
                "duplicate threshold {} is outside (0, 1]",
                self.duplicate_threshold
            )));
        }
        std::fs::create_dir_all(&self.data_dir).map_err(|e| {
            RcmError::StorageFailure(format!("{}: {e}", self.data_dir.display()))
        })?;
        let probe = self.data_dir.join(".rcm-write-probe");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| {
                RcmError::StorageFailure(format!("{} is not writable: {e}", self.data_dir.display()))
            })?;
        Ok(())
    }
}
