//! Permission scopes and the access decision procedure.
//!
//! Every specialist invocation carries a [`PermissionScope`]. The kernel
//! consults [`check_permission`] for each read and each delta operation;
//! denials surface to the caller and land in the audit log, they are never
//! silently dropped.

use crate::bus::regions::RegionConfig;
use crate::path::{BusPath, PathPattern};
use serde::{Deserialize, Serialize};

/// What a role may touch. Patterns ending in `/` cover a subtree, others
/// name exact files. `readable` containing `*` grants read on everything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionScope {
    pub readable: Vec<String>,
    pub writable: Vec<String>,
    pub appendable: Vec<String>,
}

impl PermissionScope {
    pub fn read_only() -> Self {
        PermissionScope {
            readable: vec!["*".into()],
            writable: Vec::new(),
            appendable: Vec::new(),
        }
    }

    pub fn new<S: Into<String>>(
        readable: impl IntoIterator<Item = S>,
        writable: impl IntoIterator<Item = S>,
        appendable: impl IntoIterator<Item = S>,
    ) -> Self {
        PermissionScope {
            readable: readable.into_iter().map(Into::into).collect(),
            writable: writable.into_iter().map(Into::into).collect(),
            appendable: appendable.into_iter().map(Into::into).collect(),
        }
    }

    fn matches_any(patterns: &[String], path: &BusPath) -> bool {
        patterns
            .iter()
            .filter_map(|p| PathPattern::parse(p).ok())
            .any(|p| p.matches(path))
    }

    pub fn can_read(&self, path: &BusPath) -> bool {
        Self::matches_any(&self.readable, path)
    }

    fn in_writable(&self, path: &BusPath) -> bool {
        Self::matches_any(&self.writable, path)
    }

    fn in_appendable(&self, path: &BusPath) -> bool {
        Self::matches_any(&self.appendable, path)
    }
}

/// The kind of access being requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Read,
    /// Creating a file that does not exist yet.
    CreateFile,
    /// Replacing the full contents of a path.
    Overwrite,
    Append,
    CreateDir,
}

impl AccessKind {
    pub fn is_mutation(self) -> bool {
        !matches!(self, AccessKind::Read)
    }
}

/// Why an access was denied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    /// The path is outside every pattern the scope grants for this access.
    OutOfScope,
    /// The path may only grow; overwrite and create-over were refused.
    AppendOnlyViolation,
}

impl std::fmt::Display for DenyReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DenyReason::OutOfScope => write!(f, "out of scope"),
            DenyReason::AppendOnlyViolation => write!(f, "append-only violation"),
        }
    }
}

/// Outcome of a permission check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

impl Decision {
    pub fn is_allow(self) -> bool {
        matches!(self, Decision::Allow)
    }
}

/// Decide whether `scope` permits `access` on `path` under `regions`.
///
/// Reads are governed only by the readable set. For mutations, region-level
/// append-only paths refuse overwrite and create even when the scope lists
/// the path as writable; scope-level appendable paths likewise accept
/// appends but refuse replacement. A mutation matching neither writable nor
/// appendable is out of scope.
pub fn check_permission(
    scope: &PermissionScope,
    regions: &RegionConfig,
    access: AccessKind,
    path: &BusPath,
) -> Decision {
    match access {
        AccessKind::Read => {
            if scope.can_read(path) {
                Decision::Allow
            } else {
                Decision::Deny(DenyReason::OutOfScope)
            }
        }
        AccessKind::Overwrite | AccessKind::CreateFile | AccessKind::CreateDir => {
            if scope.in_writable(path) {
                if access != AccessKind::CreateDir && regions.is_append_only(path) {
                    Decision::Deny(DenyReason::AppendOnlyViolation)
                } else {
                    Decision::Allow
                }
            } else if access != AccessKind::CreateDir && scope.in_appendable(path) {
                Decision::Deny(DenyReason::AppendOnlyViolation)
            } else {
                Decision::Deny(DenyReason::OutOfScope)
            }
        }
        AccessKind::Append => {
            if scope.in_writable(path) || scope.in_appendable(path) {
                Decision::Allow
            } else {
                Decision::Deny(DenyReason::OutOfScope)
            }
        }
    }
}
