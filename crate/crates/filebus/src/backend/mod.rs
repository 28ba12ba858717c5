//! The decision source behind every agent: a single completion interface
//! with a deterministic scripted implementation for tests and replay, and
//! an HTTP client for real model services.
//!
//! Callers never branch on which implementation they hold. A backend gets
//! the full per-invocation picture (directive, rendered map, transcript,
//! tool signatures) and returns raw bytes in the action wire format; the
//! agent loop parses them and treats parse failures as [`wire::MalformedAction`].
//!
//! [`wire::MalformedAction`]: crate::wire::MalformedAction

pub mod http;
pub mod scripted;

use crate::agent::LocalContext;
use std::sync::Arc;
use thiserror::Error;

/// Everything a backend may condition on for one turn.
///
/// The transcript is exactly the invoking agent's `LocalContext` events;
/// nothing outside the current invocation leaks in. The scripted backend
/// derives its per-invocation turn index from the transcript, which keeps
/// `complete` a pure function of the request.
#[derive(Debug, Clone)]
pub struct ModelRequest {
    pub role_id: String,
    pub system_directive: String,
    pub directive: String,
    pub rendered_map: String,
    pub local_events: LocalContext,
    /// One line per available tool: `tool_id: signature`.
    pub available_tools: Vec<String>,
}

/// Raw bytes in the action wire format. Parsing is the caller's job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelResponse {
    pub raw: Vec<u8>,
}

impl ModelResponse {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.raw).unwrap_or("")
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no scripted rule matches role {role:?} at turn {turn}")]
    NoMatchingRule { role: String, turn: usize },
    #[error("backend request failed after {attempts} attempts: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("backend returned an unusable response: {0}")]
    BadResponse(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Uniform completion interface. Implementations must be safe to call from
/// multiple threads at once; parallel subagents share one handle.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError>;
}

pub type SharedBackend = Arc<dyn ModelBackend>;
