//! The run trace: an append-only, line-delimited JSON log of everything
//! the orchestrator did, kept inside the workspace under the engine's
//! internal area so the workspace stays the total system of record.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const TRACE_REL_PATH: &str = "agent/.engine/trace.log";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    /// A native tool call made by the orchestrator, or a malformed action.
    Action,
    /// A specialist or subagent invocation boundary or record.
    Delegate,
    /// A summary appended to the control context.
    Summary,
    /// A budget check between steps.
    Budget,
    /// The terminal run status.
    Status,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    /// Milliseconds since the Unix epoch, from the run's clock.
    pub ts: u64,
    pub kind: TraceKind,
    pub payload: Value,
}

pub fn trace_path(workspace_root: &Path) -> PathBuf {
    workspace_root.join(TRACE_REL_PATH)
}

/// Append-only writer. Reopening continues the sequence from the existing
/// file instead of restarting it.
pub struct TraceWriter {
    file: File,
    next_seq: u64,
}

impl TraceWriter {
    pub fn open(workspace_root: &Path) -> Result<Self, TraceError> {
        let path = trace_path(workspace_root);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let next_seq = if path.is_file() {
            let events = read_trace(workspace_root)?;
            events.last().map(|e| e.seq + 1).unwrap_or(0)
        } else {
            0
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(TraceWriter { file, next_seq })
    }

    pub fn emit(&mut self, ts: u64, kind: TraceKind, payload: Value) -> Result<u64, TraceError> {
        let event = TraceEvent {
            seq: self.next_seq,
            ts,
            kind,
            payload,
        };
        let mut line = serde_json::to_string(&event).expect("trace events serialize");
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.next_seq += 1;
        Ok(event.seq)
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }
}

pub fn read_trace(workspace_root: &Path) -> Result<Vec<TraceEvent>, TraceError> {
    let path = trace_path(workspace_root);
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(&path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: TraceEvent = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            line: i + 1,
            detail: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// key=value filter over trace events. `kind` matches the event kind;
/// any other key matches a string or number field of the payload.
pub fn matches_filter(event: &TraceEvent, key: &str, value: &str) -> bool {
    if key == "kind" {
        let kind = serde_json::to_value(event.kind).expect("kind serializes");
        return kind.as_str() == Some(value);
    }
    if key == "seq" {
        return event.seq.to_string() == value;
    }
    match event.payload.get(key) {
        Some(Value::String(s)) => s == value,
        Some(Value::Number(n)) => n.to_string() == value,
        Some(Value::Bool(b)) => b.to_string() == value,
        _ => false,
    }
}
