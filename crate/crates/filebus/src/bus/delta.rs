//! Workspace deltas: the transactional unit of mutation.
//!
//! A delta is an ordered list of operations from a single invocation. The
//! kernel validates every operation before applying any of them, so a delta
//! either lands in full or leaves the tree untouched.

use crate::bus::perm::AccessKind;
use crate::path::BusPath;
use serde::{Deserialize, Serialize};

/// A single filesystem operation inside a delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum DeltaOp {
    /// Create a file that must not already exist. Parent directories are
    /// created as needed.
    CreateFile { path: BusPath, content: Vec<u8> },
    /// Replace a file's contents, creating it if absent.
    Overwrite { path: BusPath, content: Vec<u8> },
    /// Extend an existing file; creates it when absent so first use of a
    /// log does not need a separate create.
    Append { path: BusPath, content: Vec<u8> },
    /// Create a directory (and parents).
    CreateDir { path: BusPath },
}

impl DeltaOp {
    pub fn path(&self) -> &BusPath {
        match self {
            DeltaOp::CreateFile { path, .. }
            | DeltaOp::Overwrite { path, .. }
            | DeltaOp::Append { path, .. }
            | DeltaOp::CreateDir { path } => path,
        }
    }

    pub fn access_kind(&self) -> AccessKind {
        match self {
            DeltaOp::CreateFile { .. } => AccessKind::CreateFile,
            DeltaOp::Overwrite { .. } => AccessKind::Overwrite,
            DeltaOp::Append { .. } => AccessKind::Append,
            DeltaOp::CreateDir { .. } => AccessKind::CreateDir,
        }
    }

    pub fn payload_len(&self) -> usize {
        match self {
            DeltaOp::CreateFile { content, .. }
            | DeltaOp::Overwrite { content, .. }
            | DeltaOp::Append { content, .. } => content.len(),
            DeltaOp::CreateDir { .. } => 0,
        }
    }
}

/// An ordered batch of operations attributed to one invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkspaceDelta {
    /// Role name of the author, e.g. `tier0` or `implementation`.
    pub role: String,
    /// Invocation identifier for audit attribution.
    pub invocation: String,
    pub ops: Vec<DeltaOp>,
}

impl WorkspaceDelta {
    pub fn new(role: impl Into<String>, invocation: impl Into<String>) -> Self {
        WorkspaceDelta {
            role: role.into(),
            invocation: invocation.into(),
            ops: Vec::new(),
        }
    }

    pub fn create_file(mut self, path: BusPath, content: impl Into<Vec<u8>>) -> Self {
        self.ops.push(DeltaOp::CreateFile { path, content: content.into() });
        self
    }

    pub fn overwrite(mut self, path: BusPath, content: impl Into<Vec<u8>>) -> Self {
        self.ops.push(DeltaOp::Overwrite { path, content: content.into() });
        self
    }

    pub fn append(mut self, path: BusPath, content: impl Into<Vec<u8>>) -> Self {
        self.ops.push(DeltaOp::Append { path, content: content.into() });
        self
    }

    pub fn create_dir(mut self, path: BusPath) -> Self {
        self.ops.push(DeltaOp::CreateDir { path });
        self
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn total_payload(&self) -> usize {
        self.ops.iter().map(DeltaOp::payload_len).sum()
    }
}
