//! Deterministic scripted backend: a rule table consulted instead of a
//! model.
//!
//! A scenario is line-delimited JSON, one rule per line:
//!
//! ```text
//! {"match": {"role": "implementation", "turn": 0, "directive_contains": "build"},
//!  "respond": {"tool": "shell", "args": {"cmd": "ls"}}}
//! ```
//!
//! Rules are matched in file order, first match wins. The primary key is
//! (role, per-invocation turn index); the two substring guards are
//! optional. Every `respond` object is validated against the action wire
//! format when the scenario loads, so a typo fails fast instead of
//! surfacing as a mid-run malformed action.

use super::{BackendError, ModelBackend, ModelRequest, ModelResponse};
use crate::wire;
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario {path}: {0}", path = .1)]
    Io(#[source] std::io::Error, String),
    #[error("scenario {path} line {line}: {detail}", path = .path)]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("scenario {path} line {line}: respond is not a valid action: {detail}", path = .path)]
    InvalidAction {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("scenario {0}: no rules")]
    Empty(String),
}

#[derive(Debug, Clone, Deserialize)]
struct RawRule {
    #[serde(rename = "match")]
    matcher: RawMatch,
    respond: serde_json::Value,
}

#[derive(Debug, Clone, Deserialize)]
struct RawMatch {
    role: String,
    turn: usize,
    #[serde(default)]
    directive_contains: Option<String>,
    #[serde(default)]
    transcript_contains: Option<String>,
}

/// One match arm plus its canned response bytes.
#[derive(Debug, Clone)]
pub struct ScriptedRule {
    pub role: String,
    pub turn: usize,
    pub directive_contains: Option<String>,
    pub transcript_contains: Option<String>,
    pub respond: Vec<u8>,
}

impl ScriptedRule {
    fn matches(&self, role: &str, turn: usize, directive: &str, transcript: &str) -> bool {
        self.role == role
            && self.turn == turn
            && self
                .directive_contains
                .as_ref()
                .is_none_or(|s| directive.contains(s.as_str()))
            && self
                .transcript_contains
                .as_ref()
                .is_none_or(|s| transcript.contains(s.as_str()))
    }
}

/// A validated rule table.
#[derive(Debug, Clone)]
pub struct ScriptedScenario {
    pub name: String,
    pub rules: Vec<ScriptedRule>,
}

impl ScriptedScenario {
    /// Load and validate a scenario file.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io(e, display.clone()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| display.clone());
        Self::parse(&name, &display, &text)
    }

    fn parse(name: &str, origin: &str, text: &str) -> Result<Self, ScenarioError> {
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let raw: RawRule =
                serde_json::from_str(trimmed).map_err(|e| ScenarioError::Parse {
                    path: origin.to_string(),
                    line: line_no,
                    detail: e.to_string(),
                })?;
            let respond =
                serde_json::to_string(&raw.respond).expect("re-serializing parsed JSON");
            if let Err(e) = wire::parse_action(&respond) {
                return Err(ScenarioError::InvalidAction {
                    path: origin.to_string(),
                    line: line_no,
                    detail: e.to_string(),
                });
            }
            rules.push(ScriptedRule {
                role: raw.matcher.role,
                turn: raw.matcher.turn,
                directive_contains: raw.matcher.directive_contains,
                transcript_contains: raw.matcher.transcript_contains,
                respond: respond.into_bytes(),
            });
        }
        if rules.is_empty() {
            return Err(ScenarioError::Empty(origin.to_string()));
        }
        Ok(ScriptedScenario {
            name: name.to_string(),
            rules,
        })
    }

    /// Parse scenario text that did not come from a file.
    pub fn from_text(name: &str, text: &str) -> Result<Self, ScenarioError> {
        Self::parse(name, name, text)
    }
}

/// Backend that answers from a [`ScriptedScenario`]. Stateless between
/// calls: the turn index is recomputed from each request's transcript, so
/// concurrent invocations cannot skew each other's matching.
pub struct ScriptedBackend {
    scenario: ScriptedScenario,
}

impl ScriptedBackend {
    pub fn new(scenario: ScriptedScenario) -> Self {
        ScriptedBackend { scenario }
    }

    pub fn scenario(&self) -> &ScriptedScenario {
        &self.scenario
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let turn = request.local_events.turn_index();
        let transcript = request.local_events.transcript_text();
        for rule in &self.scenario.rules {
            if rule.matches(&request.role_id, turn, &request.directive, &transcript) {
                return Ok(ModelResponse {
                    raw: rule.respond.clone(),
                });
            }
        }
        Err(BackendError::NoMatchingRule {
            role: request.role_id.clone(),
            turn,
        })
    }
}
