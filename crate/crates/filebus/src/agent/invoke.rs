//! Invocation machinery: the specialist loop, the single tool dispatcher,
//! and subagent fan-out.
//!
//! One dispatcher serves every tool kind. Native tools run in-process,
//! agent-kind tools recurse into a fresh specialist loop, and `spawn` fans
//! out to tier-2 leaf workers; the caller cannot tell these apart except
//! by reading descriptor metadata. Each invocation gets a brand-new
//! [`LocalContext`] that dies at return, so the only state an invocation
//! leaves behind is what it wrote to the workspace and the summary it
//! handed back.

use super::{
    AgentError, AgentProfile, Directive, LocalContext, LocalEvent, Summary, SummaryStatus,
    ToolKind, ToolRegistry, ToolStatus,
};
use crate::backend::{ModelRequest, SharedBackend};
use crate::bus::delta::WorkspaceDelta;
use crate::bus::regions::RegionConfig;
use crate::bus::{Kernel, KernelLimits};
use crate::clock::SharedClock;
use crate::map::{render_map, MapOptions};
use crate::path::BusPath;
use crate::roles::{ImplementationMode, RoleCatalog};
use crate::tools::{self, search::SearchProvider, ToolHost, ToolOutput, ToolTarget};
use crate::wire::{self, Action};
use serde::Deserialize;
use serde_json::Value;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

pub const DEFAULT_STEP_CAP: usize = 64;
pub const DEFAULT_SUMMARY_CAP: usize = 4096;
pub const DEFAULT_FANOUT_WIDTH: usize = 4;

/// Longest permitted invocation chain: orchestrator → specialist → leaf.
pub const MAX_DEPTH: usize = 3;

/// Depth of a tool call made by the orchestrator itself.
pub const TIER0_DEPTH: usize = 1;

#[derive(Debug, Clone)]
pub struct InvokeLimits {
    pub step_cap: usize,
    pub summary_cap: usize,
    pub fanout_width: usize,
    pub shell_timeout: Duration,
    pub shell_output_cap: usize,
}

impl Default for InvokeLimits {
    fn default() -> Self {
        InvokeLimits {
            step_cap: DEFAULT_STEP_CAP,
            summary_cap: DEFAULT_SUMMARY_CAP,
            fanout_width: DEFAULT_FANOUT_WIDTH,
            shell_timeout: tools::shell::DEFAULT_TIMEOUT,
            shell_output_cap: tools::shell::DEFAULT_OUTPUT_CAP,
        }
    }
}

/// Run-wide invocation id source. Ids are dense and deterministic so two
/// processes replaying the same scenario mint identical ids.
#[derive(Debug)]
pub struct IdGen {
    counter: AtomicU64,
}

impl IdGen {
    pub fn starting_at(next: u64) -> Self {
        IdGen {
            counter: AtomicU64::new(next),
        }
    }

    pub fn next_id(&self) -> String {
        format!("inv-{:04}", self.counter.fetch_add(1, Ordering::SeqCst))
    }

    /// The id the next call will mint; checkpointed so resume continues
    /// the sequence instead of reusing ids.
    pub fn next_value(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }
}

impl Default for IdGen {
    fn default() -> Self {
        IdGen::starting_at(1)
    }
}

/// A rendered workspace map plus the revision it was rendered at.
#[derive(Debug, Clone)]
pub struct MapInput {
    pub text: String,
    pub revision: u64,
}

/// Everything invocations share for one run.
pub struct Invoker {
    pub catalog: Arc<RoleCatalog>,
    pub registry: Arc<ToolRegistry>,
    pub backend: SharedBackend,
    pub kernel: Arc<Kernel>,
    pub search: Arc<SearchProvider>,
    pub regions: RegionConfig,
    pub map_options: MapOptions,
    pub limits: InvokeLimits,
    pub ids: IdGen,
    /// False under the no-file-bus ablation: specialists get no map and
    /// their non-submission writes land in a per-invocation overlay.
    pub file_bus: bool,
    pub clock: SharedClock,
    pub kernel_limits: KernelLimits,
}

/// One completed agent invocation, as seen by the run trace.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DelegationRecord {
    pub role: String,
    pub invocation_id: String,
    pub depth: usize,
    pub steps: usize,
    pub status: String,
}

/// Result of one dispatched tool call, shaped identically for every kind.
#[derive(Debug)]
pub struct Dispatched {
    pub output: ToolOutput,
    /// Present for agent-kind calls (and single-task spawns).
    pub summary: Option<Summary>,
    /// Durable workspace ops applied during the call.
    pub delta: Option<WorkspaceDelta>,
    /// Every agent invocation the call performed, parents before children,
    /// children in completion order.
    pub delegations: Vec<DelegationRecord>,
}

impl Dispatched {
    fn plain(output: ToolOutput) -> Self {
        Dispatched {
            output,
            summary: None,
            delta: None,
            delegations: Vec::new(),
        }
    }
}

struct LoopOutcome {
    summary: Summary,
    delta: WorkspaceDelta,
    steps: usize,
    delegations: Vec<DelegationRecord>,
}

#[derive(Deserialize)]
struct AgentArgs {
    directive: String,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    rebuild: bool,
    #[serde(default)]
    stage: Option<String>,
}

#[derive(Deserialize)]
struct SpawnTask {
    role: String,
    directive: String,
}

#[derive(Deserialize)]
struct SpawnArgs {
    #[serde(default)]
    tasks: Vec<SpawnTask>,
    #[serde(default)]
    role: Option<String>,
    #[serde(default)]
    directive: Option<String>,
}

impl Invoker {
    /// Render the current workspace map, or nothing when the file bus is
    /// ablated away.
    pub fn render_current_map(&self) -> Option<MapInput> {
        if !self.file_bus {
            return None;
        }
        let snapshot = self.kernel.snapshot();
        Some(MapInput {
            revision: snapshot.revision,
            text: render_map(&snapshot, &self.regions, self.map_options),
        })
    }

    /// Invoke a tier-1 specialist against the live workspace. The returned
    /// delta is the record of what the invocation already applied.
    pub fn invoke_specialist(
        &self,
        profile: &AgentProfile,
        directive: Directive,
        map: Option<MapInput>,
    ) -> Result<(Summary, WorkspaceDelta), AgentError> {
        let outcome = self.agent_loop(profile, &directive, map.as_ref(), 2)?;
        Ok((outcome.summary, outcome.delta))
    }

    /// Invoke one tier-2 leaf worker on behalf of a tier-1 parent.
    pub fn spawn_subagent(
        &self,
        parent: &AgentProfile,
        child_role: &str,
        directive: Directive,
        map: Option<MapInput>,
    ) -> Result<(Summary, WorkspaceDelta), AgentError> {
        self.check_spawn_rights(parent, std::slice::from_ref(&child_role.to_string()))?;
        let child = self
            .catalog
            .get(child_role)
            .map_err(|_| AgentError::UnknownSubagent(child_role.to_string()))?;
        let outcome = self.agent_loop(child, &directive, map.as_ref(), 3)?;
        Ok((outcome.summary, outcome.delta))
    }

    fn check_spawn_rights(
        &self,
        parent: &AgentProfile,
        child_roles: &[String],
    ) -> Result<(), AgentError> {
        if parent.tier != 1 {
            return Err(AgentError::TierViolation(format!(
                "spawn requires a tier-1 caller; {} is tier {}",
                parent.role_id, parent.tier
            )));
        }
        for role in child_roles {
            if !parent.subagent_role_ids.contains(role) {
                return Err(AgentError::UnknownSubagent(role.clone()));
            }
        }
        Ok(())
    }

    /// Where this invocation's file operations land. With the file bus on,
    /// straight at the shared kernel; ablated, non-submission regions go to
    /// a throwaway overlay workspace that the returned guard deletes.
    fn make_target(&self) -> Result<(ToolTarget, Option<tempfile::TempDir>), AgentError> {
        if self.file_bus {
            return Ok((ToolTarget::direct(self.kernel.clone()), None));
        }
        let dir = tempfile::tempdir()
            .map_err(|e| AgentError::BackendFailure(format!("overlay setup: {e}")))?;
        let overlay = Kernel::init_workspace(
            dir.path().join("overlay"),
            self.regions.clone(),
            self.kernel_limits.clone(),
            self.clock.clone(),
        )
        .map_err(|e| AgentError::BackendFailure(format!("overlay setup: {e}")))?;
        let redirected: Vec<BusPath> = self
            .regions
            .prefixes()
            .into_iter()
            .filter(|p| p.as_str() != "submission")
            .collect();
        Ok((
            ToolTarget::with_overlay(self.kernel.clone(), Arc::new(overlay), redirected),
            Some(dir),
        ))
    }

    fn tool_lines(&self, profile: &AgentProfile) -> Vec<String> {
        profile
            .tool_ids
            .iter()
            .filter_map(|id| {
                self.registry
                    .get(id)
                    .map(|d| format!("{}: {}", d.tool_id, d.signature))
            })
            .collect()
    }

    /// The specialist's internal loop: ask the backend, act, repeat until a
    /// finish, the step cap, or a backend fault.
    fn agent_loop(
        &self,
        profile: &AgentProfile,
        directive: &Directive,
        map: Option<&MapInput>,
        depth: usize,
    ) -> Result<LoopOutcome, AgentError> {
        if profile.tier == 0 {
            return Err(AgentError::TierViolation(
                "the orchestrator cannot be invoked as a specialist".into(),
            ));
        }
        if depth > MAX_DEPTH {
            return Err(AgentError::TierViolation(format!(
                "invocation depth {depth} exceeds the cap of {MAX_DEPTH}"
            )));
        }
        if let Some(m) = map {
            let workspace = self.kernel.revision();
            if m.revision != workspace {
                return Err(AgentError::StaleMap {
                    map: m.revision,
                    workspace,
                });
            }
        }

        let (target, _overlay_guard) = self.make_target()?;
        let host = ToolHost {
            target,
            scope: profile.scope.clone(),
            role: profile.role_id.clone(),
            invocation_id: directive.invocation_id.clone(),
            search: self.search.clone(),
            shell_timeout: self.limits.shell_timeout,
            shell_output_cap: self.limits.shell_output_cap,
        };
        let map_text = map.map(|m| m.text.clone()).unwrap_or_default();
        let tools_available = self.tool_lines(profile);

        let mut local = LocalContext::default();
        local.push(LocalEvent::Directive(directive.clone()));
        let mut accumulated = WorkspaceDelta::new(
            profile.role_id.clone(),
            directive.invocation_id.clone(),
        );
        let mut steps = 0usize;
        let mut consecutive_malformed = 0u32;
        let mut denial: Option<String> = None;
        let mut delegations: Vec<DelegationRecord> = Vec::new();

        let finish = |text: String,
                      status: SummaryStatus,
                      pointers: Vec<BusPath>,
                      delta: WorkspaceDelta,
                      steps: usize,
                      delegations: Vec<DelegationRecord>| {
            Ok(LoopOutcome {
                summary: Summary::capped(text, status, pointers, self.limits.summary_cap),
                delta,
                steps,
                delegations,
            })
        };

        loop {
            if steps >= self.limits.step_cap {
                return finish(
                    format!("step cap: invocation halted after {steps} steps"),
                    SummaryStatus::Failed,
                    Vec::new(),
                    accumulated,
                    steps,
                    delegations,
                );
            }
            let request = ModelRequest {
                role_id: profile.role_id.clone(),
                system_directive: profile.system_directive.clone(),
                directive: directive.text.clone(),
                rendered_map: map_text.clone(),
                local_events: local.clone(),
                available_tools: tools_available.clone(),
            };
            let response = match self.backend.complete(&request) {
                Ok(r) => r,
                Err(e) => {
                    return finish(
                        format!("backend failure: {e}"),
                        SummaryStatus::Failed,
                        Vec::new(),
                        accumulated,
                        steps,
                        delegations,
                    )
                }
            };
            steps += 1;

            match wire::parse_action(response.as_str()) {
                Err(e) => {
                    consecutive_malformed += 1;
                    local.push(LocalEvent::Note {
                        text: format!("malformed action: {e}"),
                    });
                    if consecutive_malformed >= 3 {
                        return finish(
                            "3 consecutive malformed actions".into(),
                            SummaryStatus::Failed,
                            Vec::new(),
                            accumulated,
                            steps,
                            delegations,
                        );
                    }
                }
                Ok(Action::ToolCall { tool, args, .. }) => {
                    consecutive_malformed = 0;
                    let call_id = self.ids.next_id();
                    local.push(LocalEvent::ToolInvocation {
                        tool_id: tool.clone(),
                        args: args.clone(),
                        invocation_id: call_id.clone(),
                    });
                    let dispatched = self.dispatch_tool(profile, &host, &tool, &args, depth);
                    delegations.extend(dispatched.delegations);
                    if let Some(delta) = dispatched.delta {
                        accumulated.ops.extend(delta.ops);
                    }
                    if let Some(reason) = &dispatched.output.permission_denial {
                        denial.get_or_insert_with(|| reason.clone());
                    }
                    local.push(LocalEvent::ToolResult {
                        tool_id: tool,
                        status: dispatched.output.status,
                        output: dispatched.output.output,
                        summary: dispatched.summary,
                        invocation_id: call_id,
                    });
                }
                Ok(Action::Finish {
                    status,
                    summary,
                    artifacts,
                    ..
                }) => {
                    for pointer in &artifacts {
                        if !host.target.artifact_exists(pointer) {
                            return finish(
                                format!("artifact pointer missing at return: {pointer}"),
                                SummaryStatus::Failed,
                                Vec::new(),
                                accumulated,
                                steps,
                                delegations,
                            );
                        }
                    }
                    let mut status = SummaryStatus::from(status);
                    let mut text = summary;
                    if let Some(reason) = denial {
                        status = SummaryStatus::Failed;
                        text = format!("permission denied during invocation: {reason}; {text}");
                    }
                    return finish(text, status, artifacts, accumulated, steps, delegations);
                }
            }
        }
    }

    /// The one dispatcher behind every tool call, regardless of kind.
    pub fn dispatch_tool(
        &self,
        caller: &AgentProfile,
        host: &ToolHost,
        tool_id: &str,
        args: &Value,
        depth: usize,
    ) -> Dispatched {
        // The spawn right is tier-structural, so its tier check runs ahead
        // of the per-role availability gate: a tier-2 attempt reports a
        // tier violation, not a missing tool.
        if tool_id == "spawn" {
            return self.dispatch_spawn(caller, args, depth);
        }
        if !caller.tool_ids.iter().any(|t| t == tool_id) {
            return Dispatched::plain(ToolOutput::failed(format!(
                "tool {tool_id:?} is not available to role {:?}",
                caller.role_id
            )));
        }
        if let Some(descriptor) = self.registry.get(tool_id) {
            if descriptor.kind == ToolKind::Agent {
                let target_role = descriptor
                    .target_role
                    .clone()
                    .unwrap_or_else(|| tool_id.to_string());
                return self.dispatch_agent(caller, &target_role, args, depth);
            }
        }
        if tools::is_native_tool(tool_id) {
            let (output, delta) = tools::run_native(host, tool_id, args);
            return Dispatched {
                output,
                summary: None,
                delta,
                delegations: Vec::new(),
            };
        }
        Dispatched::plain(ToolOutput::failed(format!("unknown tool: {tool_id}")))
    }

    fn dispatch_agent(
        &self,
        caller: &AgentProfile,
        target_role: &str,
        args: &Value,
        depth: usize,
    ) -> Dispatched {
        if caller.tier != 0 {
            return Dispatched::plain(ToolOutput::failed(
                AgentError::TierViolation(format!(
                    "only the orchestrator may invoke specialists; {} is tier {}",
                    caller.role_id, caller.tier
                ))
                .to_string(),
            ));
        }
        let args: AgentArgs = match AgentArgs::deserialize(args) {
            Ok(a) => a,
            Err(e) => {
                return Dispatched::plain(ToolOutput::failed(format!("bad arguments: {e}")))
            }
        };
        let profile = match self.catalog.get(target_role) {
            Ok(p) => p,
            Err(e) => return Dispatched::plain(ToolOutput::failed(e.to_string())),
        };

        let mut text = args.directive.clone();
        if target_role == "implementation" {
            let mode = match args.mode.as_deref() {
                Some(raw) => match ImplementationMode::parse(raw) {
                    Ok(m) => m,
                    Err(e) => {
                        return Dispatched::plain(ToolOutput::failed(e.to_string()))
                    }
                },
                None => {
                    if self.submission_nonempty() {
                        ImplementationMode::Fix
                    } else {
                        ImplementationMode::Full
                    }
                }
            };
            if let Err(reason) = self.gate_implementation_mode(mode, args.rebuild) {
                let summary = Summary::capped(
                    reason.clone(),
                    SummaryStatus::Failed,
                    Vec::new(),
                    self.limits.summary_cap,
                );
                return Dispatched {
                    output: ToolOutput::failed(reason),
                    summary: Some(summary),
                    delta: None,
                    delegations: Vec::new(),
                };
            }
            text.push_str(&format!(" [mode={}", mode.as_str()));
            if args.rebuild {
                text.push_str(" rebuild");
            }
            text.push(']');
        }

        let directive = Directive {
            text,
            issuer: caller.role_id.clone(),
            stage_label: args.stage.unwrap_or_else(|| target_role.to_string()),
            invocation_id: self.ids.next_id(),
        };
        let map = self.render_current_map();
        match self.agent_loop(profile, &directive, map.as_ref(), depth + 1) {
            Ok(outcome) => {
                let mut delegations = vec![DelegationRecord {
                    role: profile.role_id.clone(),
                    invocation_id: directive.invocation_id.clone(),
                    depth: depth + 1,
                    steps: outcome.steps,
                    status: status_word(outcome.summary.status).into(),
                }];
                delegations.extend(outcome.delegations);
                Dispatched {
                    output: summary_as_output(&outcome.summary),
                    summary: Some(outcome.summary),
                    delta: Some(outcome.delta),
                    delegations,
                }
            }
            Err(e) => {
                let mut dispatched =
                    Dispatched::plain(ToolOutput::failed(format!("invocation failed: {e}")));
                dispatched.delegations.push(DelegationRecord {
                    role: profile.role_id.clone(),
                    invocation_id: directive.invocation_id.clone(),
                    depth: depth + 1,
                    steps: 0,
                    status: format!("error: {e}"),
                });
                dispatched
            }
        }
    }

    fn dispatch_spawn(&self, caller: &AgentProfile, args: &Value, depth: usize) -> Dispatched {
        let args: SpawnArgs = match SpawnArgs::deserialize(args) {
            Ok(a) => a,
            Err(e) => {
                return Dispatched::plain(ToolOutput::failed(format!("bad arguments: {e}")))
            }
        };
        let mut tasks: Vec<SpawnTask> = args.tasks;
        if let (Some(role), Some(directive)) = (args.role, args.directive) {
            tasks.push(SpawnTask { role, directive });
        }
        if tasks.is_empty() {
            return Dispatched::plain(ToolOutput::failed(
                "spawn needs a task list or a role/directive pair",
            ));
        }
        let roles: Vec<String> = tasks.iter().map(|t| t.role.clone()).collect();
        if let Err(e) = self.check_spawn_rights(caller, &roles) {
            return Dispatched::plain(ToolOutput::failed(e.to_string()));
        }
        if !caller.tool_ids.iter().any(|t| t == "spawn") {
            return Dispatched::plain(ToolOutput::failed(format!(
                "tool \"spawn\" is not available to role {:?}",
                caller.role_id
            )));
        }
        if depth + 1 > MAX_DEPTH {
            return Dispatched::plain(ToolOutput::failed(
                AgentError::TierViolation(format!(
                    "invocation depth {} exceeds the cap of {MAX_DEPTH}",
                    depth + 1
                ))
                .to_string(),
            ));
        }

        let prepared: Vec<(usize, &AgentProfile, Directive)> = tasks
            .iter()
            .enumerate()
            .map(|(index, task)| {
                let profile = self.catalog.get(&task.role).expect("validated above");
                let directive = Directive {
                    text: task.directive.clone(),
                    issuer: caller.role_id.clone(),
                    stage_label: "subagent".into(),
                    invocation_id: self.ids.next_id(),
                };
                (index, profile, directive)
            })
            .collect();

        struct ChildRun {
            index: usize,
            invocation_id: String,
            role: String,
            result: Result<LoopOutcome, AgentError>,
        }

        let mut runs: Vec<ChildRun> = Vec::with_capacity(prepared.len());
        for wave in prepared.chunks(self.limits.fanout_width.max(1)) {
            let map = self.render_current_map();
            let wave_runs: Vec<ChildRun> = std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|(index, profile, directive)| {
                        let map_ref = map.as_ref();
                        scope.spawn(move || ChildRun {
                            index: *index,
                            invocation_id: directive.invocation_id.clone(),
                            role: profile.role_id.clone(),
                            result: self.agent_loop(profile, directive, map_ref, depth + 1),
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("subagent thread panicked"))
                    .collect()
            });
            runs.extend(wave_runs);
        }

        // Deterministic completion order: a child's virtual completion
        // time is its step count, ties broken by task position.
        runs.sort_by_key(|run| {
            let steps = run.result.as_ref().map(|o| o.steps).unwrap_or(usize::MAX);
            (steps, run.index)
        });

        let mut output = String::new();
        let mut merged: Option<WorkspaceDelta> = None;
        let mut single_summary: Option<Summary> = None;
        let mut all_completed = true;
        let mut delegations: Vec<DelegationRecord> = Vec::new();
        for run in runs {
            match run.result {
                Ok(outcome) => {
                    if outcome.summary.status != SummaryStatus::Completed {
                        all_completed = false;
                    }
                    delegations.push(DelegationRecord {
                        role: run.role.clone(),
                        invocation_id: run.invocation_id.clone(),
                        depth: depth + 1,
                        steps: outcome.steps,
                        status: status_word(outcome.summary.status).into(),
                    });
                    delegations.extend(outcome.delegations.clone());
                    output.push_str(&format!(
                        "[{} {} {}] {}\n",
                        run.invocation_id,
                        run.role,
                        status_word(outcome.summary.status),
                        outcome.summary.text
                    ));
                    match &mut merged {
                        None => {
                            let mut delta = outcome.delta.clone();
                            delta.role = caller.role_id.clone();
                            merged = Some(delta);
                        }
                        Some(m) => m.ops.extend(outcome.delta.ops),
                    }
                    if tasks.len() == 1 {
                        single_summary = Some(outcome.summary);
                    }
                }
                Err(e) => {
                    all_completed = false;
                    delegations.push(DelegationRecord {
                        role: run.role.clone(),
                        invocation_id: run.invocation_id.clone(),
                        depth: depth + 1,
                        steps: 0,
                        status: format!("error: {e}"),
                    });
                    output.push_str(&format!(
                        "[{} {} failed] {e}\n",
                        run.invocation_id, run.role
                    ));
                }
            }
        }
        let merged = merged.filter(|d| !d.is_empty());
        let status = if all_completed {
            ToolStatus::Ok
        } else {
            ToolStatus::Failed
        };
        Dispatched {
            output: ToolOutput {
                status,
                output,
                permission_denial: None,
            },
            summary: single_summary,
            delta: merged,
            delegations,
        }
    }

    fn submission_nonempty(&self) -> bool {
        let submission = BusPath::parse("submission").expect("static path");
        self.kernel
            .snapshot()
            .files
            .iter()
            .any(|(p, _)| p.starts_with_dir(&submission))
    }

    /// Mode admission for the implementation specialist, checked before
    /// any backend call.
    pub fn gate_implementation_mode(
        &self,
        mode: ImplementationMode,
        rebuild: bool,
    ) -> Result<(), String> {
        let built = self.submission_nonempty();
        match mode {
            ImplementationMode::Fix if !built => Err(
                "fix mode rejected: submission/ is empty, nothing to patch".into(),
            ),
            ImplementationMode::Full if built && !rebuild => Err(
                "full mode refused: a build already exists in submission/ (pass rebuild to replace it)"
                    .into(),
            ),
            _ => Ok(()),
        }
    }
}

fn status_word(status: SummaryStatus) -> &'static str {
    match status {
        SummaryStatus::Completed => "completed",
        SummaryStatus::Blocked => "blocked",
        SummaryStatus::Failed => "failed",
    }
}

fn summary_as_output(summary: &Summary) -> ToolOutput {
    let mut text = format!("[{}] {}", status_word(summary.status), summary.text);
    if !summary.artifact_pointers.is_empty() {
        text.push_str("\nartifacts:");
        for pointer in &summary.artifact_pointers {
            text.push_str(&format!(" {pointer}"));
        }
    }
    ToolOutput {
        status: if summary.status == SummaryStatus::Completed {
            ToolStatus::Ok
        } else {
            ToolStatus::Failed
        },
        output: text,
        permission_denial: None,
    }
}

/// Registry with the native tool set registered under their wire schemas.
pub fn native_registry() -> ToolRegistry {
    let mut registry = ToolRegistry::default();
    let entries = [
        ("read_file", r#"{"path": str, "offset": int?, "len": int?}"#),
        ("write_file", r#"{"path": str, "content": str}"#),
        ("append_file", r#"{"path": str, "content": str}"#),
        ("shell", r#"{"cmd": str, "cwd": str?, "timeout_s": int?}"#),
        ("search", r#"{"query": str}"#),
        (
            "spawn",
            r#"{"tasks": [{"role": str, "directive": str}]} (tier-1 only)"#,
        ),
    ];
    for (id, signature) in entries {
        registry
            .register_native(id, signature)
            .expect("fresh registry has no duplicates");
    }
    registry
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::scripted::{ScriptedBackend, ScriptedScenario};
    use crate::backend::{BackendError, ModelBackend, ModelResponse};
    use crate::clock::fixed_clock;
    use crate::roles::{register_specialists_into, SUBAGENT_ROLE};
    use tempfile::TempDir;

    fn invoker_with(dir: &TempDir, scenario: &str, registry: ToolRegistry) -> Invoker {
        let catalog = Arc::new(RoleCatalog::builtin());
        let kernel = Arc::new(
            Kernel::init_workspace(
                dir.path().join("ws"),
                RegionConfig::default_config(),
                KernelLimits::default(),
                fixed_clock(50_000, 10),
            )
            .unwrap(),
        );
        Invoker {
            catalog,
            registry: Arc::new(registry),
            backend: Arc::new(ScriptedBackend::new(
                ScriptedScenario::from_text("test", scenario).unwrap(),
            )),
            kernel,
            search: Arc::new(SearchProvider::Unset),
            regions: RegionConfig::default_config(),
            map_options: MapOptions::default(),
            limits: InvokeLimits::default(),
            ids: IdGen::default(),
            file_bus: true,
            clock: fixed_clock(50_000, 10),
            kernel_limits: KernelLimits::default(),
        }
    }

    fn invoker(dir: &TempDir, scenario: &str) -> Invoker {
        invoker_with(dir, scenario, native_registry())
    }

    fn directive(text: &str, id: &str) -> Directive {
        Directive {
            text: text.into(),
            issuer: "tier0".into(),
            stage_label: "test".into(),
            invocation_id: id.into(),
        }
    }

    #[test]
    fn specialist_writes_and_reports_artifacts() {
        let dir = TempDir::new().unwrap();
        let scenario = r##"
{"match": {"role": "comprehension", "turn": 0}, "respond": {"tool": "write_file", "args": {"path": "paper_analysis/structure.md", "content": "# Structure\n"}}}
{"match": {"role": "comprehension", "turn": 1}, "respond": {"finish": {"status": "completed", "summary": "digested the source", "artifacts": ["paper_analysis/structure.md"]}}}
"##;
        let inv = invoker(&dir, scenario);
        let profile = inv.catalog.get("comprehension").unwrap().clone();
        let map = inv.render_current_map();
        let (summary, delta) = inv
            .invoke_specialist(&profile, directive("analyze", "inv-a"), map)
            .unwrap();
        assert_eq!(summary.status, SummaryStatus::Completed);
        assert_eq!(
            summary.artifact_pointers,
            vec![BusPath::parse("paper_analysis/structure.md").unwrap()]
        );
        assert_eq!(delta.ops.len(), 1);
        assert!(inv
            .kernel
            .artifact_exists(&BusPath::parse("paper_analysis/structure.md").unwrap()));
    }

    #[test]
    fn no_op_specialist_leaves_revision_unchanged() {
        let dir = TempDir::new().unwrap();
        let scenario = r#"
{"match": {"role": "helper", "turn": 0}, "respond": {"finish": {"status": "completed", "summary": "nothing to do"}}}
"#;
        let inv = invoker(&dir, scenario);
        let before = inv.kernel.revision();
        let profile = inv.catalog.get("helper").unwrap().clone();
        let map = inv.render_current_map();
        let (summary, delta) = inv
            .invoke_specialist(&profile, directive("idle", "inv-b"), map)
            .unwrap();
        assert_eq!(summary.status, SummaryStatus::Completed);
        assert!(delta.is_empty());
        assert_eq!(inv.kernel.revision(), before);
    }

    #[test]
    fn identical_invocations_return_identical_results() {
        let dir = TempDir::new().unwrap();
        let scenario = r#"
{"match": {"role": "helper", "turn": 0}, "respond": {"tool": "read_file", "args": {"path": "paper_analysis/seed.md"}}}
{"match": {"role": "helper", "turn": 1}, "respond": {"finish": {"status": "completed", "summary": "seed reviewed"}}}
{"match": {"role": "prioritization", "turn": 0}, "respond": {"tool": "write_file", "args": {"path": "agent/plan.md", "content": "plan v1\n"}}}
{"match": {"role": "prioritization", "turn": 1}, "respond": {"finish": {"status": "completed", "summary": "planned"}}}
"#;
        let inv = invoker(&dir, scenario);
        let seed = WorkspaceDelta::new("tier0", "seed").create_file(
            BusPath::parse("paper_analysis/seed.md").unwrap(),
            "seed text\n",
        );
        let tier0 = crate::roles::tier0_scope(&inv.regions);
        inv.kernel.apply_delta(&tier0, &seed).unwrap();

        let helper = inv.catalog.get("helper").unwrap().clone();
        let map = inv.render_current_map();
        let first = inv
            .invoke_specialist(&helper, directive("review", "inv-same"), map.clone())
            .unwrap();

        // Unrelated work in between must not bleed into the repeat.
        let planner = inv.catalog.get("prioritization").unwrap().clone();
        let map2 = inv.render_current_map();
        inv.invoke_specialist(&planner, directive("plan", "inv-mid"), map2)
            .unwrap();

        let map3 = inv.render_current_map();
        assert_eq!(map3.as_ref().unwrap().revision, inv.kernel.revision());
        // The helper reads only seed.md, whose content is unchanged, so its
        // transcript and result must repeat exactly. Maps differ, but the
        // scripted rules do not condition on the map.
        let second = inv
            .invoke_specialist(&helper, directive("review", "inv-same"), map3)
            .unwrap();
        assert_eq!(first.0, second.0);
        assert_eq!(first.1.ops, second.1.ops);
    }

    #[test]
    fn step_cap_finishes_failed() {
        let dir = TempDir::new().unwrap();
        let mut lines = String::new();
        for turn in 0..10 {
            lines.push_str(&format!(
                "{{\"match\": {{\"role\": \"helper\", \"turn\": {turn}}}, \"respond\": {{\"tool\": \"search\", \"args\": {{\"query\": \"q\"}}}}}}\n"
            ));
        }
        let mut inv = invoker(&dir, &lines);
        inv.limits.step_cap = 3;
        inv.search = Arc::new(SearchProvider::from_fixture_toml("[queries]\n").unwrap());
        let profile = inv.catalog.get("helper").unwrap().clone();
        let (summary, _) = inv
            .invoke_specialist(&profile, directive("loop forever", "inv-c"), None)
            .unwrap();
        assert_eq!(summary.status, SummaryStatus::Failed);
        assert!(summary.text.contains("step cap"), "{}", summary.text);
    }

    #[test]
    fn missing_rule_surfaces_as_failed_summary() {
        let dir = TempDir::new().unwrap();
        let scenario = r#"
{"match": {"role": "helper", "turn": 0}, "respond": {"tool": "search", "args": {"query": "q"}}}
"#;
        let mut inv = invoker(&dir, scenario);
        inv.search = Arc::new(SearchProvider::from_fixture_toml("[queries]\n").unwrap());
        let profile = inv.catalog.get("helper").unwrap().clone();
        let (summary, _) = inv
            .invoke_specialist(&profile, directive("go", "inv-d"), None)
            .unwrap();
        assert_eq!(summary.status, SummaryStatus::Failed);
        assert!(
            summary.text.contains("no scripted rule matches"),
            "{}",
            summary.text
        );
    }

    struct FlakyBackend {
        good_after: u32,
        inner: ScriptedBackend,
    }

    impl ModelBackend for FlakyBackend {
        fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
            let malformed_notes = request
                .local_events
                .events
                .iter()
                .filter(
                    |e| matches!(e, LocalEvent::Note { text } if text.starts_with("malformed")),
                )
                .count() as u32;
            if malformed_notes < self.good_after {
                return Ok(ModelResponse {
                    raw: b"not even json".to_vec(),
                });
            }
            self.inner.complete(request)
        }
    }

    fn flaky_invoker(dir: &TempDir, good_after: u32) -> Invoker {
        let scenario = r#"
{"match": {"role": "helper", "turn": 2}, "respond": {"finish": {"status": "completed", "summary": "recovered"}}}
{"match": {"role": "helper", "turn": 3}, "respond": {"finish": {"status": "completed", "summary": "recovered"}}}
"#;
        let mut inv = invoker(&dir, scenario);
        inv.backend = Arc::new(FlakyBackend {
            good_after,
            inner: ScriptedBackend::new(ScriptedScenario::from_text("s", scenario).unwrap()),
        });
        inv
    }

    #[test]
    fn malformed_actions_allow_recovery_then_three_strikes() {
        let dir = TempDir::new().unwrap();
        let inv = flaky_invoker(&dir, 2);
        let profile = inv.catalog.get("helper").unwrap().clone();
        let (summary, _) = inv
            .invoke_specialist(&profile, directive("go", "inv-e"), None)
            .unwrap();
        assert_eq!(summary.status, SummaryStatus::Completed);
        assert_eq!(summary.text, "recovered");

        let dir2 = TempDir::new().unwrap();
        let inv2 = flaky_invoker(&dir2, 99);
        let profile2 = inv2.catalog.get("helper").unwrap().clone();
        let (summary2, _) = inv2
            .invoke_specialist(&profile2, directive("go", "inv-f"), None)
            .unwrap();
        assert_eq!(summary2.status, SummaryStatus::Failed);
        assert!(summary2.text.contains("malformed"), "{}", summary2.text);
    }

    #[test]
    fn helper_write_denial_forces_failed_summary() {
        let dir = TempDir::new().unwrap();
        let scenario = r#"
{"match": {"role": "helper", "turn": 0}, "respond": {"tool": "write_file", "args": {"path": "agent/notes.md", "content": "sneaky"}}}
{"match": {"role": "helper", "turn": 1}, "respond": {"finish": {"status": "completed", "summary": "all done"}}}
"#;
        let inv = invoker(&dir, scenario);
        // A helper granted the write tool but no write scope: the kernel
        // rejection, not tool availability, is what must deny it.
        let mut profile = inv.catalog.get("helper").unwrap().clone();
        profile.tool_ids.push("write_file".into());
        let map = inv.render_current_map();
        let (summary, delta) = inv
            .invoke_specialist(&profile, directive("try writing", "inv-g"), map)
            .unwrap();
        assert_eq!(summary.status, SummaryStatus::Failed);
        assert!(
            summary.text.contains("permission denied"),
            "{}",
            summary.text
        );
        assert!(summary.text.contains("out of scope"), "{}", summary.text);
        assert!(delta.is_empty());
    }

    #[test]
    fn fanout_returns_summaries_in_completion_order() {
        let dir = TempDir::new().unwrap();
        // First task takes two turns, second finishes in one, so the
        // second completes first under virtual time.
        let scenario = r#"
{"match": {"role": "subagent", "turn": 0, "directive_contains": "slow"}, "respond": {"tool": "read_file", "args": {"path": "agent/plan.md"}}}
{"match": {"role": "subagent", "turn": 1, "directive_contains": "slow"}, "respond": {"finish": {"status": "completed", "summary": "slow done"}}}
{"match": {"role": "subagent", "turn": 0, "directive_contains": "fast"}, "respond": {"finish": {"status": "completed", "summary": "fast done"}}}
{"match": {"role": "comprehension", "turn": 0}, "respond": {"tool": "spawn", "args": {"tasks": [{"role": "subagent", "directive": "slow scan"}, {"role": "subagent", "directive": "fast scan"}]}}}
{"match": {"role": "comprehension", "turn": 1}, "respond": {"finish": {"status": "completed", "summary": "synthesized"}}}
"#;
        let inv = invoker(&dir, scenario);
        let profile = inv.catalog.get("comprehension").unwrap().clone();
        let map = inv.render_current_map();
        let (summary, delta) = inv
            .invoke_specialist(&profile, directive("fan out", "inv-h"), map)
            .unwrap();
        assert_eq!(summary.status, SummaryStatus::Completed);
        assert!(delta.is_empty());
        // Completion order is visible in the parent transcript; re-run the
        // scripted spawn directly to inspect ordering.
        let host = ToolHost::new(
            ToolTarget::direct(inv.kernel.clone()),
            profile.scope.clone(),
            "comprehension",
            "inv-direct",
            inv.search.clone(),
        );
        let dispatched = inv.dispatch_tool(
            &profile,
            &host,
            "spawn",
            &serde_json::json!({"tasks": [
                {"role": "subagent", "directive": "slow scan"},
                {"role": "subagent", "directive": "fast scan"},
            ]}),
            2,
        );
        assert_eq!(dispatched.output.status, ToolStatus::Ok);
        let fast = dispatched.output.output.find("fast done").unwrap();
        let slow = dispatched.output.output.find("slow done").unwrap();
        assert!(fast < slow, "{}", dispatched.output.output);
    }

    #[test]
    fn tier2_spawn_attempt_is_a_tier_violation_and_parent_continues() {
        let dir = TempDir::new().unwrap();
        // The child's turn-1 rule only fires if its own transcript carries
        // the violation text, and the parent's turn-1 rule only fires if
        // the child's summary made it back.
        let scenario = r#"
{"match": {"role": "subagent", "turn": 0}, "respond": {"tool": "spawn", "args": {"tasks": [{"role": "subagent", "directive": "deeper"}]}}}
{"match": {"role": "subagent", "turn": 1, "transcript_contains": "tier violation"}, "respond": {"finish": {"status": "completed", "summary": "stayed in my lane"}}}
{"match": {"role": "helper", "turn": 0}, "respond": {"tool": "spawn", "args": {"role": "subagent", "directive": "probe"}}}
{"match": {"role": "helper", "turn": 1, "transcript_contains": "stayed in my lane"}, "respond": {"finish": {"status": "completed", "summary": "child reported back"}}}
"#;
        let inv = invoker(&dir, scenario);
        let helper = inv.catalog.get("helper").unwrap().clone();
        let (summary, _) = inv
            .invoke_specialist(&helper, directive("probe depth", "inv-i"), None)
            .unwrap();
        assert_eq!(summary.status, SummaryStatus::Completed, "{}", summary.text);
        assert_eq!(summary.text, "child reported back");
    }

    #[test]
    fn spawn_rejects_unknown_children_and_tier0() {
        let dir = TempDir::new().unwrap();
        let inv = invoker(
            &dir,
            r#"{"match": {"role": "x", "turn": 0}, "respond": {"finish": {"status": "failed", "summary": "unused"}}}"#,
        );
        let helper = inv.catalog.get("helper").unwrap().clone();
        let err = inv
            .spawn_subagent(
                &helper,
                "nonexistent",
                directive("x", "inv-j"),
                None,
            )
            .unwrap_err();
        assert!(matches!(err, AgentError::UnknownSubagent(_)));

        let sub = inv.catalog.get(SUBAGENT_ROLE).unwrap().clone();
        let err = inv
            .spawn_subagent(&sub, SUBAGENT_ROLE, directive("x", "inv-k"), None)
            .unwrap_err();
        assert!(matches!(err, AgentError::TierViolation(_)));
    }

    #[test]
    fn specialists_cannot_invoke_specialists() {
        let dir = TempDir::new().unwrap();
        let mut registry = native_registry();
        let catalog = RoleCatalog::builtin();
        register_specialists_into(&mut registry, &catalog).unwrap();
        let inv = invoker_with(
            &dir,
            r#"{"match": {"role": "x", "turn": 0}, "respond": {"finish": {"status": "failed", "summary": "unused"}}}"#,
            registry,
        );
        let mut rogue = inv.catalog.get("helper").unwrap().clone();
        rogue.tool_ids.push("comprehension".into());
        let host = ToolHost::new(
            ToolTarget::direct(inv.kernel.clone()),
            rogue.scope.clone(),
            "helper",
            "inv-l",
            inv.search.clone(),
        );
        let dispatched = inv.dispatch_tool(
            &rogue,
            &host,
            "comprehension",
            &serde_json::json!({"directive": "dig"}),
            2,
        );
        assert_eq!(dispatched.output.status, ToolStatus::Failed);
        assert!(
            dispatched.output.output.contains("tier violation"),
            "{}",
            dispatched.output.output
        );
    }

    #[test]
    fn implementation_mode_gating_runs_before_the_backend() {
        let dir = TempDir::new().unwrap();
        let mut registry = native_registry();
        let catalog = RoleCatalog::builtin();
        register_specialists_into(&mut registry, &catalog).unwrap();
        // Deliberately no implementation rules: reaching the backend would
        // produce a NoMatchingRule failure instead of the gate text.
        let inv = invoker_with(
            &dir,
            r#"{"match": {"role": "x", "turn": 0}, "respond": {"finish": {"status": "failed", "summary": "unused"}}}"#,
            registry,
        );
        let tier0 = crate::roles::tier0_profile(
            &inv.regions,
            &["implementation".to_string()],
            "orchestrate".into(),
        );
        let host = ToolHost::new(
            ToolTarget::direct(inv.kernel.clone()),
            tier0.scope.clone(),
            "tier0",
            "inv-m",
            inv.search.clone(),
        );
        let fix_on_empty = inv.dispatch_tool(
            &tier0,
            &host,
            "implementation",
            &serde_json::json!({"directive": "patch it", "mode": "fix"}),
            TIER0_DEPTH,
        );
        assert_eq!(fix_on_empty.output.status, ToolStatus::Failed);
        assert!(
            fix_on_empty.output.output.contains("fix mode rejected"),
            "{}",
            fix_on_empty.output.output
        );
        assert_eq!(
            fix_on_empty.summary.unwrap().status,
            SummaryStatus::Failed
        );

        let seed = WorkspaceDelta::new("tier0", "seed").create_file(
            BusPath::parse("submission/main.py").unwrap(),
            "print()\n",
        );
        inv.kernel.apply_delta(&tier0.scope, &seed).unwrap();
        let full_on_built = inv.dispatch_tool(
            &tier0,
            &host,
            "implementation",
            &serde_json::json!({"directive": "build", "mode": "full"}),
            TIER0_DEPTH,
        );
        assert!(
            full_on_built.output.output.contains("full mode refused"),
            "{}",
            full_on_built.output.output
        );
    }

    #[test]
    fn finish_with_missing_artifact_pointer_fails() {
        let dir = TempDir::new().unwrap();
        let scenario = r#"
{"match": {"role": "helper", "turn": 0}, "respond": {"finish": {"status": "completed", "summary": "done", "artifacts": ["paper_analysis/ghost.md"]}}}
"#;
        let inv = invoker(&dir, scenario);
        let profile = inv.catalog.get("helper").unwrap().clone();
        let (summary, _) = inv
            .invoke_specialist(&profile, directive("point at ghosts", "inv-n"), None)
            .unwrap();
        assert_eq!(summary.status, SummaryStatus::Failed);
        assert!(
            summary.text.contains("artifact pointer missing"),
            "{}",
            summary.text
        );
    }

    #[test]
    fn stale_map_is_rejected() {
        let dir = TempDir::new().unwrap();
        let inv = invoker(
            &dir,
            r#"{"match": {"role": "helper", "turn": 0}, "respond": {"finish": {"status": "completed", "summary": "ok"}}}"#,
        );
        let profile = inv.catalog.get("helper").unwrap().clone();
        let stale = MapInput {
            text: "# old".into(),
            revision: inv.kernel.revision() + 5,
        };
        let err = inv
            .invoke_specialist(&profile, directive("x", "inv-o"), Some(stale))
            .unwrap_err();
        assert!(matches!(err, AgentError::StaleMap { .. }));
    }

    #[test]
    fn local_context_does_not_leak_into_persistent_state() {
        let dir = TempDir::new().unwrap();
        let sentinel = "SENTINEL-9f2c1a";
        let scenario = format!(
            r#"
{{"match": {{"role": "helper", "turn": 0}}, "respond": {{"tool": "search", "args": {{"query": "{sentinel}"}}}}}}
{{"match": {{"role": "helper", "turn": 1}}, "respond": {{"finish": {{"status": "completed", "summary": "looked it up"}}}}}}
"#
        );
        let mut inv = invoker(&dir, &scenario);
        inv.search = Arc::new(
            SearchProvider::from_fixture_toml(&format!(
                "[queries]\n\"{sentinel}\" = \"secret result {sentinel}\"\n"
            ))
            .unwrap(),
        );
        let profile = inv.catalog.get("helper").unwrap().clone();
        let map = inv.render_current_map();
        let (summary, _) = inv
            .invoke_specialist(&profile, directive("look up", "inv-p"), map)
            .unwrap();
        assert!(!summary.text.contains(sentinel));

        let mut found = false;
        for entry in walkdir(inv.kernel.root()) {
            let content = std::fs::read(&entry).unwrap_or_default();
            if String::from_utf8_lossy(&content).contains(sentinel) {
                found = true;
            }
        }
        assert!(!found, "sentinel leaked into the workspace");
    }

    fn walkdir(root: &std::path::Path) -> Vec<std::path::PathBuf> {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.push(path);
                }
            }
        }
        files
    }
}
