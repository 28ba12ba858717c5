//! Workspace-relative paths and scope patterns.
//!
//! All bus operations address artifacts by [`BusPath`], a normalized
//! workspace-relative path that is proven at construction time not to escape
//! the workspace root. OS `PathBuf` values never cross the kernel boundary.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("path escapes the workspace root: {0}")]
    Traversal(String),
    #[error("absolute paths are not workspace-relative: {0}")]
    Absolute(String),
    #[error("empty path")]
    Empty,
    #[error("NUL byte in path")]
    NulByte,
}

/// Normalized workspace-relative path.
///
/// Invariants: non-empty, `/`-separated, no `.` or `..` components, no
/// leading or trailing slash, no empty components.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BusPath(String);

impl BusPath {
    /// Normalize a raw path string. `..` is rejected outright rather than
    /// resolved: a workspace path has no business naming parents.
    pub fn parse(raw: &str) -> Result<Self, PathError> {
        if raw.contains('\0') {
            return Err(PathError::NulByte);
        }
        let trimmed = raw.trim_end_matches('/');
        if trimmed.starts_with('/') || trimmed.starts_with('\\') || has_windows_prefix(trimmed) {
            return Err(PathError::Absolute(raw.to_string()));
        }
        let mut parts: Vec<&str> = Vec::new();
        for comp in trimmed.split('/') {
            match comp {
                "" | "." => continue,
                ".." => return Err(PathError::Traversal(raw.to_string())),
                c => parts.push(c),
            }
        }
        if parts.is_empty() {
            return Err(PathError::Empty);
        }
        Ok(BusPath(parts.join("/")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Path components, in order.
    pub fn components(&self) -> impl Iterator<Item = &str> {
        self.0.split('/')
    }

    pub fn depth(&self) -> usize {
        self.components().count()
    }

    /// True when `self` equals `prefix` or sits beneath it.
    pub fn starts_with_dir(&self, prefix: &BusPath) -> bool {
        self.0 == prefix.0
            || (self.0.len() > prefix.0.len()
                && self.0.starts_with(&prefix.0)
                && self.0.as_bytes()[prefix.0.len()] == b'/')
    }

    /// Parent path, if any.
    pub fn parent(&self) -> Option<BusPath> {
        self.0.rsplit_once('/').map(|(p, _)| BusPath(p.to_string()))
    }

    /// Join a single trailing component (used when walking directories).
    pub fn child(&self, name: &str) -> BusPath {
        BusPath(format!("{}/{}", self.0, name))
    }
}

impl fmt::Display for BusPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for BusPath {
    type Error = PathError;
    fn try_from(s: String) -> Result<Self, PathError> {
        BusPath::parse(&s)
    }
}

impl From<BusPath> for String {
    fn from(p: BusPath) -> String {
        p.0
    }
}

fn has_windows_prefix(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() >= 2 && b[1] == b':' && b[0].is_ascii_alphabetic()
}

/// A scope pattern: either a directory prefix (written with a trailing `/`)
/// or an exact path. No globbing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PathPattern {
    /// Matches the named directory and everything beneath it. The empty
    /// prefix matches every workspace path.
    Prefix(String),
    Exact(String),
}

impl PathPattern {
    /// Parse from config syntax: a trailing `/` marks a prefix pattern,
    /// anything else is an exact path. `"*"` is the match-everything prefix.
    pub fn parse(raw: &str) -> Result<Self, PathError> {
        if raw == "*" || raw.is_empty() {
            return Ok(PathPattern::Prefix(String::new()));
        }
        if let Some(dir) = raw.strip_suffix('/') {
            let p = BusPath::parse(dir)?;
            Ok(PathPattern::Prefix(String::from(p)))
        } else {
            let p = BusPath::parse(raw)?;
            Ok(PathPattern::Exact(String::from(p)))
        }
    }

    pub fn matches(&self, path: &BusPath) -> bool {
        match self {
            PathPattern::Prefix(dir) => {
                if dir.is_empty() {
                    return true;
                }
                let d = BusPath(dir.clone());
                path.starts_with_dir(&d)
            }
            PathPattern::Exact(p) => path.as_str() == p,
        }
    }
}

impl fmt::Display for PathPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathPattern::Prefix(d) if d.is_empty() => f.write_str("*"),
            PathPattern::Prefix(d) => write!(f, "{d}/"),
            PathPattern::Exact(p) => f.write_str(p),
        }
    }
}

impl TryFrom<String> for PathPattern {
    type Error = PathError;
    fn try_from(s: String) -> Result<Self, PathError> {
        PathPattern::parse(&s)
    }
}

impl From<PathPattern> for String {
    fn from(p: PathPattern) -> String {
        p.to_string()
    }
}

/// Ordered set of patterns.
pub fn any_match(patterns: &[PathPattern], path: &BusPath) -> bool {
    patterns.iter().any(|p| p.matches(path))
}
