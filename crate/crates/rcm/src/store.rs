//! On-disk layout of a data directory: the append-only event log, the
//! optional snapshot it continues from, and the writer lock.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rcm_core::{AuditEvent, EventSink, RcmError, Result};

pub const LOG_FILE: &str = "rcm-events.log";
pub const SNAPSHOT_FILE: &str = "rcm-snapshot.json";
pub const NOTIFICATIONS_FILE: &str = "rcm-notifications.log";
pub const LOCK_FILE: &str = ".rcm.lock";

fn storage(context: &str, err: impl std::fmt::Display) -> RcmError {
    RcmError::StorageFailure(format!("{context}: {err}"))
}

/// An exclusively locked data directory. The lock is released on drop.
#[derive(Debug)]
pub struct DataDir {
    path: PathBuf,
    _lock: File,
}

impl DataDir {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        fs::create_dir_all(&path).map_err(|e| storage(&path.display().to_string(), e))?;
        let lock_path = path.join(LOCK_FILE);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| storage(&lock_path.display().to_string(), e))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => {
                return Err(RcmError::StorageFailure(format!(
                    "data directory {} is locked by another process",
                    path.display()
                )))
            }
            Err(TryLockError::Error(e)) => return Err(storage("lock", e)),
        }
        Ok(Self { path, _lock: lock })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn log_path(&self) -> PathBuf {
        self.path.join(LOG_FILE)
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.path.join(SNAPSHOT_FILE)
    }

    pub fn notifications_path(&self) -> PathBuf {
        self.path.join(NOTIFICATIONS_FILE)
    }
}

/// True when `path` holds no events and no snapshot.
pub fn is_pristine(path: &Path) -> bool {
    let has_content = |name: &str| fs::metadata(path.join(name)).is_ok_and(|m| m.len() > 0);
    !has_content(LOG_FILE) && !has_content(SNAPSHOT_FILE)
}

/// Reads the log, expecting the first event to carry `after + 1`.
pub fn read_log(path: &Path, after: u64) -> Result<Vec<AuditEvent>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(storage(&path.display().to_string(), e)),
    };
    let mut events = Vec::new();
    for line in BufReader::new(file).lines() {
        let expected = after + events.len() as u64 + 1;
        let line = line.map_err(|e| RcmError::CorruptLog {
            seq: expected,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event: AuditEvent = serde_json::from_str(&line).map_err(|e| RcmError::CorruptLog {
            seq: expected,
            reason: format!("undecodable event: {e}"),
        })?;
        if event.seq != expected {
            return Err(RcmError::CorruptLog {
                seq: expected,
                reason: format!("sequence gap, found seq {}", event.seq),
            });
        }
        events.push(event);
    }
    Ok(events)
}

/// Event sink that keeps committed events in memory and, when backed by a
/// file, appends each one as a JSON line and syncs before returning.
#[derive(Debug, Default)]
pub struct Journal {
    file: Option<File>,
    base_seq: u64,
    events: Vec<AuditEvent>,
}

impl Journal {
    pub fn memory() -> Self {
        Self::default()
    }

    pub fn memory_after(base_seq: u64) -> Self {
        Self {
            base_seq,
            ..Self::default()
        }
    }

    /// Opens `path` for appending after the already validated `events`.
    pub fn file(path: &Path, base_seq: u64, events: Vec<AuditEvent>) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| storage(&path.display().to_string(), e))?;
        Ok(Self {
            file: Some(file),
            base_seq,
            events,
        })
    }

    /// Seq of the last event covered by the snapshot this log continues.
    pub fn base_seq(&self) -> u64 {
        self.base_seq
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn since(&self, from_seq: u64) -> &[AuditEvent] {
        let skip = from_seq.saturating_sub(self.base_seq + 1) as usize;
        &self.events[skip.min(self.events.len())..]
    }

    pub fn last_seq(&self) -> u64 {
        self.base_seq + self.events.len() as u64
    }
}

impl EventSink for Journal {
    fn append(&mut self, event: &AuditEvent) -> Result<()> {
        let expected = self.last_seq() + 1;
        if event.seq != expected {
            return Err(RcmError::StorageFailure(format!(
                "append of seq {} but next seq is {expected}",
                event.seq
            )));
        }
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_string(event).map_err(|e| storage("encode", e))?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.sync_data())
                .map_err(|e| storage("append", e))?;
        }
        self.events.push(event.clone());
        Ok(())
    }
}
