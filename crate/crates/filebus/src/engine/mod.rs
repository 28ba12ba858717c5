//! The orchestrator loop: map refresh, backend-decided actions, context
//! accumulation, budget enforcement, checkpointing, and resume.
//!
//! The engine holds no stage policy of its own. Which specialist runs
//! next, and when the run is finished, is decided entirely by the tier-0
//! backend; the engine enforces contracts (budgets, caps, permissions,
//! checkpoint atomicity) and records what happened.

pub mod checkpoint;
pub mod config;
pub mod trace;

use crate::agent::invoke::{native_registry, IdGen, InvokeLimits, Invoker, TIER0_DEPTH};
use crate::agent::{
    event_len, AgentError, AgentProfile, ContextEvent, ControlContext, LocalContext, LocalEvent,
    SummaryStatus, ToolKind, ToolStatus,
};
use crate::backend::scripted::{ScenarioError, ScriptedBackend, ScriptedScenario};
use crate::backend::{http::HttpBackend, BackendError, ModelRequest, SharedBackend};
use crate::bus::delta::WorkspaceDelta;
use crate::bus::regions::RegionConfig;
use crate::bus::{BusError, Kernel, KernelLimits};
use crate::clock::{fixed_clock, system_clock, SharedClock};
use crate::map::MapOptions;
use crate::path::BusPath;
use crate::roles::{
    register_specialists_into, tier0_profile, RoleCatalog, RoleError, TIER0_ROLE,
};
use crate::tools::search::{SearchError, SearchProvider};
use crate::tools::{ToolHost, ToolTarget};
use crate::wire::{self, Action, FinishStatus};
use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_SCHEMA};
use config::{apply_overrides, BackendSelection, ConfigError, Orchestration, Overrides, RunConfig};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;
use trace::{TraceError, TraceKind, TraceWriter};

/// Directory task materials are seeded into.
pub const TASK_SOURCE_DIR: &str = "paper_analysis/source";

/// Every failure that can prevent a run from starting. Once the loop is
/// running, failures fold into [`RunStatus`] instead.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("workspace {0} is not fresh; use resume")]
    WorkspaceNotFresh(PathBuf),
    #[error(transparent)]
    Role(#[from] RoleError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("config mismatch on resume: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    BudgetExhausted,
    Failed(String),
    Interrupted,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::BudgetExhausted => 2,
            RunStatus::Failed(_) => 3,
            RunStatus::Interrupted => 4,
        }
    }

    fn word(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::BudgetExhausted => "budget_exhausted",
            RunStatus::Failed(_) => "failed",
            RunStatus::Interrupted => "interrupted",
        }
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunStatus::Completed => write!(f, "Completed"),
            RunStatus::BudgetExhausted => write!(f, "BudgetExhausted"),
            RunStatus::Failed(reason) => write!(f, "Failed: {reason}"),
            RunStatus::Interrupted => write!(f, "Interrupted"),
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub steps: u64,
    pub workspace: PathBuf,
}

#[derive(Debug, PartialEq, Eq)]
pub enum BudgetDecision {
    Continue,
    Halt(&'static str),
}

/// Preemptive budget check between orchestrator steps.
pub fn enforce_budget(
    elapsed: Duration,
    steps: u64,
    budget: &config::Budget,
) -> BudgetDecision {
    if let Some(limit) = budget.step_limit {
        if steps >= limit {
            return BudgetDecision::Halt("step limit reached");
        }
    }
    if elapsed >= budget.wall_clock() {
        return BudgetDecision::Halt("wall clock limit reached");
    }
    BudgetDecision::Continue
}

fn make_clock(config: &RunConfig) -> SharedClock {
    match config.fixed_clock {
        Some(spec) => fixed_clock(spec.start_ms, spec.tick_ms),
        None => system_clock(),
    }
}

fn make_backend(config: &RunConfig) -> Result<SharedBackend, EngineError> {
    match &config.backend {
        BackendSelection::Scripted { scenario } => {
            let scenario = ScriptedScenario::load(scenario)?;
            Ok(Arc::new(ScriptedBackend::new(scenario)))
        }
        BackendSelection::Http => Ok(Arc::new(HttpBackend::from_env()?)),
    }
}

fn make_search(config: &RunConfig) -> Result<Arc<SearchProvider>, EngineError> {
    match &config.search_fixture {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Ok(Arc::new(SearchProvider::from_fixture_toml(&text)?))
        }
        None => Ok(Arc::new(SearchProvider::Unset)),
    }
}

/// Start a fresh run. The workspace root must not already contain one.
pub fn run(
    config: RunConfig,
    interrupt: Option<Arc<AtomicBool>>,
) -> Result<RunOutcome, EngineError> {
    config.validate()?;
    let root = config.workspace.clone();
    if checkpoint::checkpoint_path(&root).exists() {
        return Err(EngineError::WorkspaceNotFresh(root));
    }
    if root.exists() && std::fs::read_dir(&root)?.next().is_some() {
        return Err(EngineError::WorkspaceNotFresh(root));
    }
    let clock = make_clock(&config);
    let kernel = Arc::new(Kernel::init_workspace(
        &root,
        RegionConfig::default_config(),
        KernelLimits::default(),
        clock.clone(),
    )?);
    let mut engine = Engine::build(config, kernel, clock, None)?;
    engine.seed_task_material()?;
    engine.seed_context()?;
    Ok(engine.drive(interrupt))
}

/// Continue an interrupted run from its checkpoint. The control context
/// and counters come from the checkpoint; the map is always rebuilt from
/// the live tree.
pub fn resume(
    workspace: &Path,
    overrides: &Overrides,
    interrupt: Option<Arc<AtomicBool>>,
) -> Result<RunOutcome, EngineError> {
    let restored = checkpoint::load(workspace)?;
    let mut config = restored.config.clone();
    apply_overrides(&mut config, overrides)?;
    if config.file_bus != restored.config.file_bus {
        return Err(EngineError::ConfigMismatch(
            "file bus mode differs from the interrupted run".into(),
        ));
    }
    if config.orchestration != restored.config.orchestration {
        return Err(EngineError::ConfigMismatch(
            "orchestration mode differs from the interrupted run".into(),
        ));
    }
    config.workspace = workspace.to_path_buf();
    let clock = make_clock(&config);
    let kernel = Arc::new(Kernel::open(
        workspace,
        KernelLimits::default(),
        clock.clone(),
    )?);
    let mut engine = Engine::build(config, kernel, clock, Some(restored))?;
    Ok(engine.drive(interrupt))
}

struct Engine {
    config: RunConfig,
    invoker: Invoker,
    tier0: AgentProfile,
    control: ControlContext,
    steps: u64,
    stage_label: String,
    elapsed_base_ms: u64,
    session_start_ms: u64,
    last_map_revision: Option<u64>,
    map_text: String,
    trace: TraceWriter,
}

impl Engine {
    fn build(
        config: RunConfig,
        kernel: Arc<Kernel>,
        clock: SharedClock,
        restored: Option<Checkpoint>,
    ) -> Result<Engine, EngineError> {
        let catalog = match &config.catalog {
            Some(path) => RoleCatalog::load(path)?,
            None => RoleCatalog::builtin(),
        };

        let mut registry = native_registry();
        let specialist_ids: Vec<String> = match config.orchestration {
            Orchestration::Hierarchical => {
                register_specialists_into(&mut registry, &catalog)?
                    .into_iter()
                    .map(|d| d.tool_id)
                    .collect()
            }
            Orchestration::Flat => Vec::new(),
        };

        let backend = make_backend(&config)?;
        let search = make_search(&config)?;
        let regions = kernel.regions().clone();
        let tier0 = tier0_profile(
            &regions,
            &specialist_ids,
            include_str!("../../assets/prompts/tier0.md").to_string(),
        );

        let limits = InvokeLimits {
            step_cap: config.caps.specialist_step_cap,
            summary_cap: config.caps.summary_bytes,
            fanout_width: config.caps.fanout_width,
            shell_timeout: Duration::from_secs(config.caps.shell_timeout_s),
            shell_output_cap: config.caps.shell_output_bytes,
        };
        let ids = match &restored {
            Some(cp) => IdGen::starting_at(cp.next_invocation_id),
            None => IdGen::default(),
        };
        let invoker = Invoker {
            catalog: Arc::new(catalog),
            registry: Arc::new(registry),
            backend,
            kernel,
            search,
            regions,
            map_options: MapOptions {
                cap_bytes: config.caps.map_bytes,
            },
            limits,
            ids,
            file_bus: config.file_bus,
            clock: clock.clone(),
            kernel_limits: KernelLimits::default(),
        };

        let session_start_ms = clock.now_unix_ms();
        let trace = TraceWriter::open(&config.workspace)?;
        let (control, steps, stage_label, elapsed_base_ms, last_map_revision) = match restored {
            Some(cp) => (
                cp.control,
                cp.step,
                cp.stage_label,
                cp.elapsed_ms,
                cp.last_map_revision,
            ),
            None => (
                ControlContext::new(config.goal.clone(), config.caps.summary_bytes),
                0,
                "start".to_string(),
                0,
                None,
            ),
        };

        Ok(Engine {
            config,
            invoker,
            tier0,
            control,
            steps,
            stage_label,
            elapsed_base_ms,
            session_start_ms,
            last_map_revision,
            map_text: String::new(),
            trace,
        })
    }

    /// Copy task materials into `paper_analysis/source/` as one audited
    /// delta attributed to the orchestrator.
    fn seed_task_material(&mut self) -> Result<(), EngineError> {
        let Some(source) = self.config.task_source.clone() else {
            return Ok(());
        };
        if !source.is_dir() {
            return Err(EngineError::Config(ConfigError::Invalid(format!(
                "task_source {} is not a directory",
                source.display()
            ))));
        }
        let mut files: Vec<(PathBuf, PathBuf)> = Vec::new();
        collect_files(&source, PathBuf::new(), &mut files)?;
        files.sort();
        if files.is_empty() {
            return Ok(());
        }
        let mut delta = WorkspaceDelta::new(TIER0_ROLE, "seed");
        for (rel, abs) in files {
            let rel_str = rel
                .to_str()
                .ok_or_else(|| {
                    EngineError::Config(ConfigError::Invalid(format!(
                        "task file name is not UTF-8: {}",
                        abs.display()
                    )))
                })?
                .replace('\\', "/");
            let dest = BusPath::parse(&format!("{TASK_SOURCE_DIR}/{rel_str}")).map_err(|e| {
                EngineError::Config(ConfigError::Invalid(format!(
                    "task file {rel_str}: {e}"
                )))
            })?;
            delta = delta.create_file(dest, std::fs::read(&abs)?);
        }
        self.invoker
            .kernel
            .apply_delta(&self.tier0.scope, &delta)?;
        Ok(())
    }

    /// Initial control context: the environment note, then the first map
    /// reference once the loop renders it.
    fn seed_context(&mut self) -> Result<(), EngineError> {
        if !self.config.environment_note.is_empty() {
            let note = note_capped(
                &format!("environment: {}", self.config.environment_note),
                self.control.event_cap,
            );
            self.control.append(note)?;
        }
        Ok(())
    }

    fn now(&self) -> u64 {
        self.invoker.clock.now_unix_ms()
    }

    fn elapsed(&self) -> Duration {
        let session = self.now().saturating_sub(self.session_start_ms);
        Duration::from_millis(self.elapsed_base_ms + session)
    }

    fn emit(&mut self, kind: TraceKind, payload: Value) -> Result<(), String> {
        let ts = self.now();
        self.trace
            .emit(ts, kind, payload)
            .map(|_| ())
            .map_err(|e| format!("trace write failed: {e}"))
    }

    fn save_checkpoint(&mut self) -> Result<(), String> {
        let checkpoint = Checkpoint {
            schema: CHECKPOINT_SCHEMA,
            config: self.config.clone(),
            step: self.steps,
            stage_label: self.stage_label.clone(),
            elapsed_ms: self.elapsed().as_millis() as u64,
            next_invocation_id: self.invoker.ids.next_value(),
            last_map_revision: self.last_map_revision,
            control: self.control.clone(),
        };
        checkpoint::save(&self.config.workspace, &checkpoint)
            .map_err(|e| format!("checkpoint write failed: {e}"))
    }

    /// Terminal bookkeeping: status trace event, then a final checkpoint.
    fn finish(&mut self, status: RunStatus) -> RunStatus {
        let payload = match &status {
            RunStatus::Failed(reason) => json!({"status": status.word(), "reason": reason}),
            _ => json!({"status": status.word()}),
        };
        let _ = self.emit(TraceKind::Status, payload);
        let _ = self.save_checkpoint();
        status
    }

    fn drive(&mut self, interrupt: Option<Arc<AtomicBool>>) -> RunOutcome {
        let status = self.run_loop(interrupt.as_deref());
        RunOutcome {
            status,
            steps: self.steps,
            workspace: self.config.workspace.clone(),
        }
    }

    fn run_loop(&mut self, interrupt: Option<&AtomicBool>) -> RunStatus {
        loop {
            if interrupt.is_some_and(|flag| flag.load(Ordering::SeqCst)) {
                return self.finish(RunStatus::Interrupted);
            }

            let elapsed = self.elapsed();
            match enforce_budget(elapsed, self.steps, &self.config.budget) {
                BudgetDecision::Halt(reason) => {
                    let _ = self.emit(
                        TraceKind::Budget,
                        json!({
                            "decision": "halt",
                            "reason": reason,
                            "elapsed_ms": elapsed.as_millis() as u64,
                            "steps": self.steps,
                        }),
                    );
                    return self.finish(RunStatus::BudgetExhausted);
                }
                BudgetDecision::Continue => {
                    if let Err(e) = self.emit(
                        TraceKind::Budget,
                        json!({
                            "decision": "continue",
                            "elapsed_ms": elapsed.as_millis() as u64,
                            "steps": self.steps,
                        }),
                    ) {
                        return self.finish(RunStatus::Failed(e));
                    }
                }
            }

            if let Err(e) = self.refresh_map() {
                return self.finish(RunStatus::Failed(e));
            }

            let request = ModelRequest {
                role_id: TIER0_ROLE.to_string(),
                system_directive: self.tier0.system_directive.clone(),
                directive: self.config.goal.clone(),
                rendered_map: self.map_text.clone(),
                local_events: tier0_transcript(&self.control),
                available_tools: self.tier0_tool_lines(),
            };
            let response = match self.invoker.backend.complete(&request) {
                Ok(r) => r,
                Err(e) => {
                    return self.finish(RunStatus::Failed(format!("backend failure: {e}")));
                }
            };

            match wire::parse_action(response.as_str()) {
                Err(e) => {
                    if let Some(status) = self.step_malformed(e) {
                        return status;
                    }
                }
                Ok(Action::Finish {
                    status, summary, ..
                }) => {
                    let _ = self.emit(
                        TraceKind::Action,
                        json!({"finish": {"status": format!("{status:?}").to_lowercase(), "summary": summary}}),
                    );
                    let terminal = match status {
                        FinishStatus::Completed => RunStatus::Completed,
                        FinishStatus::Blocked => RunStatus::Failed(format!("blocked: {summary}")),
                        FinishStatus::Failed => RunStatus::Failed(summary),
                    };
                    return self.finish(terminal);
                }
                Ok(Action::ToolCall { tool, args, .. }) => {
                    if let Some(status) = self.step_tool(&tool, &args) {
                        return status;
                    }
                }
            }
        }
    }

    /// A malformed tier-0 action consumes a step and leaves a note; three
    /// in a row fail the run. Returns a terminal status if the run ends.
    fn step_malformed(&mut self, error: wire::MalformedAction) -> Option<RunStatus> {
        let text = format!("malformed action: {error}");
        let trailing = self
            .control
            .events
            .iter()
            .rev()
            .take_while(
                |e| matches!(e, ContextEvent::Note { text } if text.starts_with("malformed action")),
            )
            .count();
        if let Err(e) = self.emit(TraceKind::Action, json!({"malformed": error.to_string()})) {
            return Some(self.finish(RunStatus::Failed(e)));
        }
        if let Err(e) = self.control.append(note_capped(&text, self.control.event_cap)) {
            return Some(self.finish(RunStatus::Failed(e.to_string())));
        }
        self.steps += 1;
        if trailing + 1 >= 3 {
            return Some(self.finish(RunStatus::Failed(
                "3 consecutive malformed actions".into(),
            )));
        }
        if let Err(e) = self.save_checkpoint() {
            return Some(self.finish(RunStatus::Failed(e)));
        }
        None
    }

    /// Execute one decided tool action. Returns a terminal status only
    /// when bookkeeping itself fails; tool failures stay in the loop.
    fn step_tool(&mut self, tool: &str, args: &Value) -> Option<RunStatus> {
        let is_agent = self
            .invoker
            .registry
            .get(tool)
            .map(|d| d.kind == ToolKind::Agent)
            .unwrap_or(false);

        let result = if is_agent {
            self.step_delegate(tool, args)
        } else {
            self.step_native(tool, args)
        };
        if let Err(e) = result {
            return Some(self.finish(RunStatus::Failed(e)));
        }
        self.steps += 1;
        if let Err(e) = self.save_checkpoint() {
            return Some(self.finish(RunStatus::Failed(e)));
        }
        None
    }

    fn step_delegate(&mut self, tool: &str, args: &Value) -> Result<(), String> {
        let stage = args
            .get("stage")
            .and_then(Value::as_str)
            .unwrap_or(tool)
            .to_string();
        self.stage_label = stage.clone();
        self.emit(
            TraceKind::Delegate,
            json!({"phase": "start", "role": tool, "stage": stage}),
        )?;

        let host = self.tier0_host();
        let dispatched = self
            .invoker
            .dispatch_tool(&self.tier0, &host, tool, args, TIER0_DEPTH);

        for record in &dispatched.delegations {
            let mut payload = serde_json::to_value(record).expect("record serializes");
            payload["phase"] = json!("record");
            self.emit(TraceKind::Delegate, payload)?;
        }
        self.emit(
            TraceKind::Delegate,
            json!({
                "phase": "end",
                "role": tool,
                "status": status_name(dispatched.output.status),
                "records": dispatched.delegations.len(),
            }),
        )?;

        match dispatched.summary {
            Some(summary) => {
                self.emit(
                    TraceKind::Summary,
                    json!({
                        "role": tool,
                        "status": summary_status_name(summary.status),
                        "bytes": summary.byte_len,
                        "artifacts": summary
                            .artifact_pointers
                            .iter()
                            .map(|p| p.as_str())
                            .collect::<Vec<_>>(),
                    }),
                )?;
                self.control
                    .append(ContextEvent::Summary(summary))
                    .map_err(|e| e.to_string())?;
            }
            None => {
                let note = note_capped(
                    &format!("{tool} [{}]: {}", status_name(dispatched.output.status), dispatched.output.output),
                    self.control.event_cap,
                );
                self.control.append(note).map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    fn step_native(&mut self, tool: &str, args: &Value) -> Result<(), String> {
        let host = self.tier0_host();
        let invocation_id = host.invocation_id.clone();
        let dispatched = self
            .invoker
            .dispatch_tool(&self.tier0, &host, tool, args, TIER0_DEPTH);
        self.emit(
            TraceKind::Action,
            json!({
                "tool": tool,
                "invocation_id": invocation_id,
                "status": status_name(dispatched.output.status),
                "output_bytes": dispatched.output.output.len(),
            }),
        )?;
        let note = note_capped(
            &format!("{tool} [{}]: {}", status_name(dispatched.output.status), dispatched.output.output),
            self.control.event_cap,
        );
        self.control.append(note).map_err(|e| e.to_string())?;
        Ok(())
    }

    fn tier0_host(&self) -> ToolHost {
        ToolHost {
            target: ToolTarget::direct(self.invoker.kernel.clone()),
            scope: self.tier0.scope.clone(),
            role: self.tier0.role_id.clone(),
            invocation_id: self.invoker.ids.next_id(),
            search: self.invoker.search.clone(),
            shell_timeout: self.invoker.limits.shell_timeout,
            shell_output_cap: self.invoker.limits.shell_output_cap,
        }
    }

    fn tier0_tool_lines(&self) -> Vec<String> {
        self.tier0
            .tool_ids
            .iter()
            .filter_map(|id| {
                self.invoker
                    .registry
                    .get(id)
                    .map(|d| format!("{}: {}", d.tool_id, d.signature))
            })
            .collect()
    }

    /// Rebuild the map when the workspace moved; record the reference in
    /// the control context. A no-op with the file bus ablated.
    fn refresh_map(&mut self) -> Result<(), String> {
        if !self.config.file_bus {
            return Ok(());
        }
        let revision = self.invoker.kernel.revision();
        if self.last_map_revision == Some(revision) {
            return Ok(());
        }
        let map = self
            .invoker
            .render_current_map()
            .expect("file bus is on");
        self.map_text = map.text;
        self.last_map_revision = Some(map.revision);
        self.control
            .append(ContextEvent::MapRef {
                revision: map.revision,
            })
            .map_err(|e| e.to_string())
    }
}

fn status_name(status: ToolStatus) -> &'static str {
    match status {
        ToolStatus::Ok => "ok",
        ToolStatus::Failed => "failed",
    }
}

fn summary_status_name(status: SummaryStatus) -> &'static str {
    match status {
        SummaryStatus::Completed => "completed",
        SummaryStatus::Blocked => "blocked",
        SummaryStatus::Failed => "failed",
    }
}

/// The orchestrator's transcript as handed to the backend: summaries and
/// notes count as turns, map references travel out of band.
pub fn tier0_transcript(control: &ControlContext) -> LocalContext {
    let mut local = LocalContext::default();
    for event in &control.events {
        match event {
            ContextEvent::Directive(d) => local.push(LocalEvent::Directive(d.clone())),
            ContextEvent::Summary(s) => {
                let mut text = format!("[{}] {}", summary_status_name(s.status), s.text);
                if !s.artifact_pointers.is_empty() {
                    text.push_str("\nartifacts:");
                    for pointer in &s.artifact_pointers {
                        text.push_str(&format!(" {pointer}"));
                    }
                }
                local.push(LocalEvent::ToolResult {
                    tool_id: "delegate".into(),
                    status: if s.status == SummaryStatus::Completed {
                        ToolStatus::Ok
                    } else {
                        ToolStatus::Failed
                    },
                    output: text,
                    summary: Some(s.clone()),
                    invocation_id: String::new(),
                });
            }
            ContextEvent::MapRef { .. } => {}
            ContextEvent::Note { text } => local.push(LocalEvent::Note { text: text.clone() }),
        }
    }
    local
}

/// Truncate a note until its serialized event fits the cap.
fn note_capped(text: &str, cap: usize) -> ContextEvent {
    let mut note = ContextEvent::Note {
        text: text.to_string(),
    };
    loop {
        let len = event_len(&note);
        if len <= cap {
            return note;
        }
        let ContextEvent::Note { text } = &mut note else {
            unreachable!()
        };
        if text.is_empty() {
            return note;
        }
        let overshoot = len - cap;
        let keep = text.len().saturating_sub(overshoot.max(1));
        let mut cut = keep;
        while cut > 0 && !text.is_char_boundary(cut) {
            cut -= 1;
        }
        text.truncate(cut);
    }
}

fn collect_files(
    dir: &Path,
    rel: PathBuf,
    out: &mut Vec<(PathBuf, PathBuf)>,
) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let child_rel = rel.join(&name);
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            collect_files(&path, child_rel, out)?;
        } else if entry.file_type()?.is_file() {
            out.push((child_rel, path));
        }
    }
    Ok(())
}
