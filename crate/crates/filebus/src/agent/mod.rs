//! Agent control plane: profiles, directives, summaries, contexts, and the
//! tool registry that exposes specialists through the same interface as
//! native tools.
//!
//! Two context types with opposite lifetimes live here. [`ControlContext`]
//! is the orchestrator's bounded, append-only event list; it holds compact
//! summaries and references, never raw artifact content, which is how
//! control stays thin while state grows in the workspace. [`LocalContext`]
//! is a specialist's private transcript, created empty at each invocation
//! and discarded at return.

use crate::bus::perm::PermissionScope;
use crate::path::BusPath;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub mod invoke;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("tool id already registered: {0}")]
    DuplicateToolId(String),
    #[error("tier violation: {0}")]
    TierViolation(String),
    #[error("unknown tool: {0}")]
    UnknownTool(String),
    #[error("unknown subagent role: {0}")]
    UnknownSubagent(String),
    #[error("event of {len} bytes exceeds the context event cap of {cap}")]
    OversizeEvent { len: usize, cap: usize },
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("stale map: rendered at revision {map}, workspace is at {workspace}")]
    StaleMap { map: u64, workspace: u64 },
    #[error("unknown role: {0}")]
    UnknownRole(String),
}

/// A configured agent: who it is, what it may touch, and what it may call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentProfile {
    pub role_id: String,
    /// 0 = orchestrator, 1 = specialist, 2 = leaf worker.
    pub tier: u8,
    pub scope: PermissionScope,
    pub tool_ids: Vec<String>,
    /// Tier-2 roles this agent may spawn; empty for tier 2.
    pub subagent_role_ids: Vec<String>,
    pub backend_binding: String,
    /// Role instruction text shown to the backend on every turn.
    pub system_directive: String,
}

/// An instruction handed down the hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directive {
    pub text: String,
    pub issuer: String,
    pub stage_label: String,
    pub invocation_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStatus {
    Completed,
    Blocked,
    Failed,
}

impl From<crate::wire::FinishStatus> for SummaryStatus {
    fn from(s: crate::wire::FinishStatus) -> Self {
        match s {
            crate::wire::FinishStatus::Completed => SummaryStatus::Completed,
            crate::wire::FinishStatus::Blocked => SummaryStatus::Blocked,
            crate::wire::FinishStatus::Failed => SummaryStatus::Failed,
        }
    }
}

/// What flows back up: a bounded digest of an invocation, plus pointers to
/// the durable artifacts that carry the real payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub text: String,
    pub status: SummaryStatus,
    pub artifact_pointers: Vec<BusPath>,
    /// Size of this summary as a serialized context event.
    #[serde(skip)]
    pub byte_len: usize,
}

impl Summary {
    /// Build a summary guaranteed to fit the context event cap, truncating
    /// the text (and, in extremis, the pointer list) with explicit markers.
    pub fn capped(
        text: impl Into<String>,
        status: SummaryStatus,
        artifact_pointers: Vec<BusPath>,
        cap: usize,
    ) -> Summary {
        let mut summary = Summary {
            text: text.into(),
            status,
            artifact_pointers,
            byte_len: 0,
        };
        loop {
            let len = event_len(&ContextEvent::Summary(summary.clone()));
            if len <= cap {
                summary.byte_len = len;
                return summary;
            }
            if !summary.text.is_empty() {
                let overshoot = len - cap;
                let keep = summary.text.len().saturating_sub(overshoot + 32);
                let mut cut = keep;
                while cut > 0 && !summary.text.is_char_boundary(cut) {
                    cut -= 1;
                }
                summary.text.truncate(cut);
                summary.text.push_str("\n[truncated]");
                if cut == 0 {
                    summary.text = "[truncated]".into();
                }
            } else if summary.artifact_pointers.is_empty() {
                summary.byte_len = len;
                return summary;
            } else {
                summary.artifact_pointers.pop();
                if summary.text.is_empty() {
                    summary.text = "[truncated]".into();
                }
            }
        }
    }
}

/// Events the orchestrator's context is made of. The map enters by
/// reference (a revision number), not by content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextEvent {
    Directive(Directive),
    Summary(Summary),
    MapRef { revision: u64 },
    Note { text: String },
}

/// Serialized size of an event; the unit `total_bytes` is measured in.
pub fn event_len(event: &ContextEvent) -> usize {
    serde_json::to_string(event)
        .expect("context event serializes")
        .len()
}

/// The orchestrator's bounded working memory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlContext {
    pub goal: String,
    pub events: Vec<ContextEvent>,
    pub total_bytes: usize,
    pub event_cap: usize,
}

impl ControlContext {
    pub fn new(goal: impl Into<String>, event_cap: usize) -> Self {
        ControlContext {
            goal: goal.into(),
            events: Vec::new(),
            total_bytes: 0,
            event_cap,
        }
    }

    /// Append one event. Events larger than the cap are refused, which is
    /// what keeps raw artifact content out of the control context.
    pub fn append(&mut self, event: ContextEvent) -> Result<(), AgentError> {
        let len = event_len(&event);
        if len > self.event_cap {
            return Err(AgentError::OversizeEvent {
                len,
                cap: self.event_cap,
            });
        }
        self.events.push(event);
        self.total_bytes += len;
        Ok(())
    }

    /// Recompute total_bytes from scratch; must equal the running value.
    pub fn recomputed_total(&self) -> usize {
        self.events.iter().map(event_len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Ok,
    Failed,
}

/// Events in a specialist's private transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalEvent {
    Directive(Directive),
    ToolInvocation {
        tool_id: String,
        args: Value,
        invocation_id: String,
    },
    ToolResult {
        tool_id: String,
        status: ToolStatus,
        output: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        summary: Option<Summary>,
        invocation_id: String,
    },
    Note { text: String },
}

/// Private per-invocation transcript. Dropped at return; nothing here is
/// reachable from persisted state unless the specialist explicitly wrote it
/// to the workspace.
#[derive(Debug, Default, Clone)]
pub struct LocalContext {
    pub events: Vec<LocalEvent>,
}

impl LocalContext {
    pub fn push(&mut self, event: LocalEvent) {
        self.events.push(event);
    }

    /// Flat text view used for transcript matching by scripted backends.
    pub fn transcript_text(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("local event serializes"));
            out.push('\n');
        }
        out
    }

    /// Number of completed agent turns so far: a turn ends in a tool result
    /// or a corrective note.
    pub fn turn_index(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, LocalEvent::ToolResult { .. } | LocalEvent::Note { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Native,
    Agent,
}

/// Registry entry. Agent-kind descriptors are indistinguishable from native
/// ones at the call site; only the metadata differs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub tool_id: String,
    pub kind: ToolKind,
    pub signature: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_role: Option<String>,
}

/// Tool registry: one namespace for native tools and agents-as-tools.
#[derive(Debug, Default, Clone)]
pub struct ToolRegistry {
    tools: std::collections::BTreeMap<String, ToolDescriptor>,
}

impl ToolRegistry {
    pub fn register_native(
        &mut self,
        tool_id: impl Into<String>,
        signature: impl Into<String>,
    ) -> Result<(), AgentError> {
        let tool_id = tool_id.into();
        if self.tools.contains_key(&tool_id) {
            return Err(AgentError::DuplicateToolId(tool_id));
        }
        self.tools.insert(
            tool_id.clone(),
            ToolDescriptor {
                tool_id,
                kind: ToolKind::Native,
                signature: signature.into(),
                target_role: None,
            },
        );
        Ok(())
    }

    pub fn get(&self, tool_id: &str) -> Option<&ToolDescriptor> {
        self.tools.get(tool_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }
}

/// Expose a specialist as a callable tool named after its role.
pub fn register_agent_as_tool(
    registry: &mut ToolRegistry,
    profile: &AgentProfile,
) -> Result<ToolDescriptor, AgentError> {
    if profile.tier == 0 {
        return Err(AgentError::TierViolation(
            "the orchestrator cannot be registered as a tool".into(),
        ));
    }
    if registry.tools.contains_key(&profile.role_id) {
        return Err(AgentError::DuplicateToolId(profile.role_id.clone()));
    }
    let descriptor = ToolDescriptor {
        tool_id: profile.role_id.clone(),
        kind: ToolKind::Agent,
        signature: format!(
            "{{\"directive\": str{}}}",
            if profile.role_id == "implementation" {
                ", \"mode\": \"full|fix\"?, \"rebuild\": bool?"
            } else {
                ""
            }
        ),
        target_role: Some(profile.role_id.clone()),
    };
    registry
        .tools
        .insert(profile.role_id.clone(), descriptor.clone());
    Ok(descriptor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn directive(text: &str) -> Directive {
        Directive {
            text: text.into(),
            issuer: "tier0".into(),
            stage_label: "stage".into(),
            invocation_id: "inv-1".into(),
        }
    }

    #[test]
    fn context_append_is_monotone_and_accounted() {
        let mut ctx = ControlContext::new("reproduce the result", 4096);
        ctx.append(ContextEvent::Directive(directive("analyze")))
            .unwrap();
        ctx.append(ContextEvent::MapRef { revision: 3 }).unwrap();
        let prefix = ctx.events.clone();
        ctx.append(ContextEvent::Note {
            text: "note".into(),
        })
        .unwrap();
        assert_eq!(&ctx.events[..2], &prefix[..]);
        assert_eq!(ctx.total_bytes, ctx.recomputed_total());
        assert_eq!(ctx.events.len(), 3);
    }

    #[test]
    fn oversize_event_is_refused_and_context_unchanged() {
        let mut ctx = ControlContext::new("goal", 256);
        let big = ContextEvent::Note {
            text: "x".repeat(300),
        };
        let before = ctx.events.len();
        let err = ctx.append(big).unwrap_err();
        assert!(matches!(err, AgentError::OversizeEvent { .. }));
        assert_eq!(ctx.events.len(), before);
        assert_eq!(ctx.total_bytes, 0);
    }

    #[test]
    fn summary_capping_truncates_with_marker() {
        let cap = 512;
        let summary = Summary::capped(
            "y".repeat(5000),
            SummaryStatus::Completed,
            vec![BusPath::parse("agent/plan.md").unwrap()],
            cap,
        );
        assert!(summary.byte_len <= cap);
        assert!(summary.text.contains("[truncated]"));
        let mut ctx = ControlContext::new("goal", cap);
        ctx.append(ContextEvent::Summary(summary)).unwrap();
    }

    #[test]
    fn short_summary_is_untouched() {
        let summary = Summary::capped(
            "all done",
            SummaryStatus::Completed,
            vec![],
            4096,
        );
        assert_eq!(summary.text, "all done");
        assert!(summary.byte_len > 0);
    }

    #[test]
    fn registry_rejects_duplicates_and_tier0() {
        let mut registry = ToolRegistry::default();
        registry.register_native("shell", "{\"cmd\": str}").unwrap();
        assert!(matches!(
            registry.register_native("shell", "{}"),
            Err(AgentError::DuplicateToolId(_))
        ));

        let mut profile = AgentProfile {
            role_id: "implementation".into(),
            tier: 1,
            scope: PermissionScope::read_only(),
            tool_ids: vec![],
            subagent_role_ids: vec![],
            backend_binding: "default".into(),
            system_directive: String::new(),
        };
        let descriptor = register_agent_as_tool(&mut registry, &profile).unwrap();
        assert_eq!(descriptor.kind, ToolKind::Agent);
        assert_eq!(descriptor.target_role.as_deref(), Some("implementation"));
        assert!(matches!(
            register_agent_as_tool(&mut registry, &profile),
            Err(AgentError::DuplicateToolId(_))
        ));

        profile.role_id = "orchestrator".into();
        profile.tier = 0;
        assert!(matches!(
            register_agent_as_tool(&mut registry, &profile),
            Err(AgentError::TierViolation(_))
        ));
    }

    #[test]
    fn local_context_counts_turns() {
        let mut local = LocalContext::default();
        local.push(LocalEvent::Directive(directive("go")));
        assert_eq!(local.turn_index(), 0);
        local.push(LocalEvent::ToolInvocation {
            tool_id: "read_file".into(),
            args: serde_json::json!({"path": "agent/plan.md"}),
            invocation_id: "inv-1.1".into(),
        });
        assert_eq!(local.turn_index(), 0);
        local.push(LocalEvent::ToolResult {
            tool_id: "read_file".into(),
            status: ToolStatus::Ok,
            output: "plan".into(),
            summary: None,
            invocation_id: "inv-1.1".into(),
        });
        assert_eq!(local.turn_index(), 1);
        local.push(LocalEvent::Note {
            text: "malformed action".into(),
        });
        assert_eq!(local.turn_index(), 2);
        assert!(local.transcript_text().contains("read_file"));
    }
}
