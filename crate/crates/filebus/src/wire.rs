//! Action wire format.
//!
//! Every agent turn, at any tier, produces one JSON object that either
//! calls a tool or finishes the invocation:
//!
//! ```json
//! {"thought": "optional", "tool": "write_file", "args": {"path": "...", "content": "..."}}
//! {"thought": "optional", "finish": {"status": "completed", "summary": "...", "artifacts": ["agent/plan.md"]}}
//! ```
//!
//! Exactly one of `tool` and `finish` must be present. Anything else is a
//! [`MalformedAction`], which the caller surfaces back to the agent as a
//! corrective note rather than crashing the run.

use crate::path::BusPath;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed action: {reason}")]
pub struct MalformedAction {
    pub reason: String,
}

fn malformed(reason: impl Into<String>) -> MalformedAction {
    MalformedAction {
        reason: reason.into(),
    }
}

/// Terminal status of an invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishStatus {
    Completed,
    Blocked,
    Failed,
}

/// A parsed agent action.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    ToolCall {
        thought: Option<String>,
        tool: String,
        args: Value,
    },
    Finish {
        thought: Option<String>,
        status: FinishStatus,
        summary: String,
        artifacts: Vec<BusPath>,
    },
}

impl Action {
    pub fn tool_call(tool: impl Into<String>, args: Value) -> Action {
        Action::ToolCall {
            thought: None,
            tool: tool.into(),
            args,
        }
    }

    pub fn finish(status: FinishStatus, summary: impl Into<String>) -> Action {
        Action::Finish {
            thought: None,
            status,
            summary: summary.into(),
            artifacts: Vec::new(),
        }
    }

    pub fn with_artifacts(self, artifacts: Vec<BusPath>) -> Action {
        match self {
            Action::Finish {
                thought,
                status,
                summary,
                ..
            } => Action::Finish {
                thought,
                status,
                summary,
                artifacts,
            },
            other => other,
        }
    }
}

/// Parse one action from raw model output.
pub fn parse_action(text: &str) -> Result<Action, MalformedAction> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| malformed(format!("not a JSON object: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("top level is not a JSON object"))?;

    let thought = match obj.get("thought") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(malformed("thought must be a string")),
    };

    let tool = obj.get("tool");
    let finish = obj.get("finish");
    match (tool, finish) {
        (Some(_), Some(_)) => Err(malformed("action has both tool and finish")),
        (None, None) => Err(malformed("action has neither tool nor finish")),
        (Some(tool), None) => {
            let name = tool
                .as_str()
                .ok_or_else(|| malformed("tool must be a string"))?;
            if name.is_empty() {
                return Err(malformed("tool name is empty"));
            }
            let args = obj
                .get("args")
                .ok_or_else(|| malformed("tool call is missing args"))?;
            if !args.is_object() {
                return Err(malformed("args must be a JSON object"));
            }
            Ok(Action::ToolCall {
                thought,
                tool: name.to_string(),
                args: args.clone(),
            })
        }
        (None, Some(finish)) => {
            let obj = finish
                .as_object()
                .ok_or_else(|| malformed("finish must be a JSON object"))?;
            let status = match obj.get("status").and_then(Value::as_str) {
                Some("completed") => FinishStatus::Completed,
                Some("blocked") => FinishStatus::Blocked,
                Some("failed") => FinishStatus::Failed,
                Some(other) => {
                    return Err(malformed(format!(
                        "finish.status must be completed, blocked, or failed, got {other:?}"
                    )))
                }
                None => return Err(malformed("finish.status missing")),
            };
            let summary = obj
                .get("summary")
                .and_then(Value::as_str)
                .ok_or_else(|| malformed("finish.summary missing"))?
                .to_string();
            let artifacts = match obj.get("artifacts") {
                None | Some(Value::Null) => Vec::new(),
                Some(Value::Array(items)) => {
                    let mut out = Vec::with_capacity(items.len());
                    for item in items {
                        let raw = item
                            .as_str()
                            .ok_or_else(|| malformed("artifacts must be path strings"))?;
                        let path = BusPath::parse(raw).map_err(|e| {
                            malformed(format!("invalid artifact path {raw:?}: {e}"))
                        })?;
                        out.push(path);
                    }
                    out
                }
                Some(_) => return Err(malformed("artifacts must be an array")),
            };
            Ok(Action::Finish {
                thought,
                status,
                summary,
                artifacts,
            })
        }
    }
}

/// Serialize an action back to its wire form.
pub fn serialize_action(action: &Action) -> String {
    let value = match action {
        Action::ToolCall {
            thought,
            tool,
            args,
        } => {
            let mut obj = serde_json::Map::new();
            if let Some(t) = thought {
                obj.insert("thought".into(), Value::String(t.clone()));
            }
            obj.insert("tool".into(), Value::String(tool.clone()));
            obj.insert("args".into(), args.clone());
            Value::Object(obj)
        }
        Action::Finish {
            thought,
            status,
            summary,
            artifacts,
        } => {
            let mut finish = serde_json::Map::new();
            finish.insert(
                "status".into(),
                serde_json::to_value(status).expect("status serializes"),
            );
            finish.insert("summary".into(), Value::String(summary.clone()));
            if !artifacts.is_empty() {
                finish.insert(
                    "artifacts".into(),
                    Value::Array(
                        artifacts
                            .iter()
                            .map(|p| Value::String(p.as_str().to_string()))
                            .collect(),
                    ),
                );
            }
            let mut obj = serde_json::Map::new();
            if let Some(t) = thought {
                obj.insert("thought".into(), Value::String(t.clone()));
            }
            obj.insert("finish".into(), Value::Object(finish));
            Value::Object(obj)
        }
    };
    serde_json::to_string(&value).expect("action serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn tool_call_round_trips() {
        let text = r#"{"thought":"look first","tool":"read_file","args":{"path":"agent/plan.md"}}"#;
        let action = parse_action(text).unwrap();
        match &action {
            Action::ToolCall { thought, tool, args } => {
                assert_eq!(thought.as_deref(), Some("look first"));
                assert_eq!(tool, "read_file");
                assert_eq!(args["path"], "agent/plan.md");
            }
            other => panic!("unexpected {other:?}"),
        }
        let back = parse_action(&serialize_action(&action)).unwrap();
        assert_eq!(back, action);
    }

    #[test]
    fn finish_round_trips_with_artifacts() {
        let text = r#"{"finish":{"status":"completed","summary":"built it","artifacts":["submission/main.py","agent/plan.md"]}}"#;
        let action = parse_action(text).unwrap();
        match &action {
            Action::Finish {
                status, artifacts, ..
            } => {
                assert_eq!(*status, FinishStatus::Completed);
                assert_eq!(artifacts.len(), 2);
                assert_eq!(artifacts[0].as_str(), "submission/main.py");
            }
            other => panic!("unexpected {other:?}"),
        }
        let back = parse_action(&serialize_action(&action)).unwrap();
        assert_eq!(back, action);
    }

    #[test]
    fn artifacts_default_to_empty() {
        let action =
            parse_action(r#"{"finish":{"status":"blocked","summary":"missing data"}}"#).unwrap();
        match action {
            Action::Finish { artifacts, status, .. } => {
                assert!(artifacts.is_empty());
                assert_eq!(status, FinishStatus::Blocked);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn both_or_neither_is_malformed() {
        let both = r#"{"tool":"read_file","args":{},"finish":{"status":"completed","summary":""}}"#;
        assert!(parse_action(both).unwrap_err().reason.contains("both"));
        let neither = r#"{"thought":"hmm"}"#;
        assert!(parse_action(neither).unwrap_err().reason.contains("neither"));
    }

    #[test]
    fn missing_or_non_object_args_is_malformed() {
        assert!(parse_action(r#"{"tool":"shell"}"#)
            .unwrap_err()
            .reason
            .contains("missing args"));
        assert!(parse_action(r#"{"tool":"shell","args":"ls"}"#)
            .unwrap_err()
            .reason
            .contains("JSON object"));
    }

    #[test]
    fn bad_finish_fields_are_malformed() {
        assert!(parse_action(r#"{"finish":{"summary":"x"}}"#)
            .unwrap_err()
            .reason
            .contains("status"));
        assert!(parse_action(r#"{"finish":{"status":"maybe","summary":"x"}}"#)
            .unwrap_err()
            .reason
            .contains("completed, blocked, or failed"));
        assert!(parse_action(r#"{"finish":{"status":"failed"}}"#)
            .unwrap_err()
            .reason
            .contains("summary"));
        assert!(
            parse_action(r#"{"finish":{"status":"completed","summary":"x","artifacts":["../esc"]}}"#)
                .unwrap_err()
                .reason
                .contains("artifact path")
        );
    }

    #[test]
    fn non_json_and_non_object_are_malformed() {
        assert!(parse_action("do the thing").is_err());
        assert!(parse_action("[1,2,3]").unwrap_err().reason.contains("object"));
    }

    #[test]
    fn builders_produce_parseable_actions() {
        let call = Action::tool_call("search", json!({"query": "learning rate"}));
        assert_eq!(parse_action(&serialize_action(&call)).unwrap(), call);
        let fin = Action::finish(FinishStatus::Completed, "summary")
            .with_artifacts(vec![BusPath::parse("agent/plan.md").unwrap()]);
        assert_eq!(parse_action(&serialize_action(&fin)).unwrap(), fin);
    }
}
