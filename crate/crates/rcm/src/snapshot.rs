//! Versioned whole-state documents.

use rcm_core::{RcmError, Result, State};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub state: State,
}

pub fn export(state: &State) -> Snapshot {
    Snapshot {
        schema_version: SCHEMA_VERSION,
        state: state.clone(),
    }
}

/// Checks the schema version before decoding the rest of the document.
pub fn import(document: &Value) -> Result<State> {
    let found = document
        .get("schema_version")
        .and_then(Value::as_u64)
        .unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(RcmError::SchemaVersionMismatch {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    let snapshot: Snapshot = serde_json::from_value(document.clone())
        .map_err(|e| RcmError::Validation(format!("snapshot: {e}")))?;
    Ok(snapshot.state)
}
