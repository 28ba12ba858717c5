//! Native tools: scope-checked file access, sandboxed shell, and search,
//! all behind one dispatch function.
//!
//! Adapters never panic the agent loop: argument and kernel errors come
//! back as `Failed` tool results with the error text as output, exactly
//! what a scripted (or live) backend needs to react.

pub mod search;
pub mod shell;

use crate::agent::ToolStatus;
use crate::bus::delta::WorkspaceDelta;
use crate::bus::perm::PermissionScope;
use crate::bus::Kernel;
use crate::path::BusPath;
use search::SearchProvider;
use serde::Deserialize;
use shell::{ShellRequest, ShellResult};
use std::sync::Arc;
use std::time::Duration;

/// What a tool call hands back to the agent loop.
#[derive(Debug, Clone)]
pub struct ToolOutput {
    pub status: ToolStatus,
    pub output: String,
    /// Set when the call was refused by permission checking; the denial
    /// reason is carried separately so the invocation can surface it in
    /// its final summary.
    pub permission_denial: Option<String>,
}

impl ToolOutput {
    pub fn ok(output: impl Into<String>) -> Self {
        ToolOutput {
            status: ToolStatus::Ok,
            output: output.into(),
            permission_denial: None,
        }
    }

    pub fn failed(output: impl Into<String>) -> Self {
        ToolOutput {
            status: ToolStatus::Failed,
            output: output.into(),
            permission_denial: None,
        }
    }

    fn denied(output: impl Into<String>) -> Self {
        let output = output.into();
        ToolOutput {
            status: ToolStatus::Failed,
            output: output.clone(),
            permission_denial: Some(output),
        }
    }
}

/// A tool call's effect on the durable workspace: the mini-delta it
/// applied to the primary kernel, if any. Overlay writes do not count;
/// they die with the invocation.
pub type AppliedDelta = Option<WorkspaceDelta>;

/// Where file operations land. Normally one kernel; under the
/// no-file-bus ablation, paths under the redirected prefixes are served
/// by an ephemeral overlay kernel instead.
#[derive(Clone)]
pub struct ToolTarget {
    primary: Arc<Kernel>,
    overlay: Option<OverlayRouting>,
}

#[derive(Clone)]
struct OverlayRouting {
    kernel: Arc<Kernel>,
    prefixes: Vec<BusPath>,
}

impl ToolTarget {
    pub fn direct(kernel: Arc<Kernel>) -> Self {
        ToolTarget {
            primary: kernel,
            overlay: None,
        }
    }

    /// Route paths under `prefixes` to `overlay`; everything else stays on
    /// the primary kernel.
    pub fn with_overlay(
        primary: Arc<Kernel>,
        overlay: Arc<Kernel>,
        prefixes: Vec<BusPath>,
    ) -> Self {
        ToolTarget {
            primary,
            overlay: Some(OverlayRouting {
                kernel: overlay,
                prefixes,
            }),
        }
    }

    pub fn primary(&self) -> &Arc<Kernel> {
        &self.primary
    }

    /// Existence check against whichever kernel the path resolves to.
    pub fn artifact_exists(&self, path: &BusPath) -> bool {
        let (kernel, _) = self.route(path);
        kernel.artifact_exists(path)
    }

    fn route(&self, path: &BusPath) -> (&Arc<Kernel>, bool) {
        if let Some(overlay) = &self.overlay {
            if overlay.prefixes.iter().any(|p| path.starts_with_dir(p)) {
                return (&overlay.kernel, false);
            }
        }
        (&self.primary, true)
    }
}

/// Per-invocation tool environment: who is calling, with what scope,
/// against which kernels.
#[derive(Clone)]
pub struct ToolHost {
    pub target: ToolTarget,
    pub scope: PermissionScope,
    pub role: String,
    pub invocation_id: String,
    pub search: Arc<SearchProvider>,
    pub shell_timeout: Duration,
    pub shell_output_cap: usize,
}

impl ToolHost {
    pub fn new(
        target: ToolTarget,
        scope: PermissionScope,
        role: impl Into<String>,
        invocation_id: impl Into<String>,
        search: Arc<SearchProvider>,
    ) -> Self {
        ToolHost {
            target,
            scope,
            role: role.into(),
            invocation_id: invocation_id.into(),
            search,
            shell_timeout: shell::DEFAULT_TIMEOUT,
            shell_output_cap: shell::DEFAULT_OUTPUT_CAP,
        }
    }
}

#[derive(Deserialize)]
struct ReadArgs {
    path: String,
    offset: Option<u64>,
    len: Option<u64>,
}

#[derive(Deserialize)]
struct WriteArgs {
    path: String,
    content: String,
}

#[derive(Deserialize)]
struct ShellArgs {
    cmd: String,
    cwd: Option<String>,
    timeout_s: Option<u64>,
}

#[derive(Deserialize)]
struct SearchArgs {
    query: String,
}

/// True for tool ids this module serves.
pub fn is_native_tool(tool_id: &str) -> bool {
    matches!(
        tool_id,
        "read_file" | "write_file" | "append_file" | "shell" | "search"
    )
}

/// Run one native tool call. Unknown ids and bad arguments fail the call,
/// not the process.
pub fn run_native(host: &ToolHost, tool_id: &str, args: &serde_json::Value) -> (ToolOutput, AppliedDelta) {
    match tool_id {
        "read_file" => (read_file(host, args), None),
        "write_file" => write_like(host, args, false),
        "append_file" => write_like(host, args, true),
        "shell" => run_shell(host, args),
        "search" => (run_search(host, args), None),
        other => (
            ToolOutput::failed(format!("unknown tool: {other}")),
            None,
        ),
    }
}

fn parse_args<'a, T: Deserialize<'a>>(args: &'a serde_json::Value) -> Result<T, ToolOutput> {
    T::deserialize(args).map_err(|e| ToolOutput::failed(format!("bad arguments: {e}")))
}

fn read_file(host: &ToolHost, args: &serde_json::Value) -> ToolOutput {
    let args: ReadArgs = match parse_args(args) {
        Ok(a) => a,
        Err(out) => return out,
    };
    let path = match BusPath::parse(&args.path) {
        Ok(p) => p,
        Err(e) => return ToolOutput::failed(format!("bad path {:?}: {e}", args.path)),
    };
    let (kernel, _) = host.target.route(&path);
    match kernel.read_artifact(&host.scope, &path, args.offset, args.len) {
        Ok(bytes) => ToolOutput::ok(String::from_utf8_lossy(&bytes).into_owned()),
        Err(e) => ToolOutput::failed(e.to_string()),
    }
}

fn write_like(
    host: &ToolHost,
    args: &serde_json::Value,
    append: bool,
) -> (ToolOutput, AppliedDelta) {
    let args: WriteArgs = match parse_args(args) {
        Ok(a) => a,
        Err(out) => return (out, None),
    };
    let path = match BusPath::parse(&args.path) {
        Ok(p) => p,
        Err(e) => {
            return (
                ToolOutput::failed(format!("bad path {:?}: {e}", args.path)),
                None,
            )
        }
    };
    let (kernel, durable) = host.target.route(&path);
    let delta = WorkspaceDelta::new(host.role.clone(), host.invocation_id.clone());
    let delta = if append {
        delta.append(path.clone(), args.content.as_bytes())
    } else if kernel.artifact_exists(&path) {
        delta.overwrite(path.clone(), args.content.as_bytes())
    } else {
        delta.create_file(path.clone(), args.content.as_bytes())
    };
    match kernel.apply_delta(&host.scope, &delta) {
        Ok(report) => {
            let verb = if append { "appended" } else { "wrote" };
            let output = format!(
                "{verb} {} bytes to {path} (revision {})",
                args.content.len(),
                report.revision
            );
            (ToolOutput::ok(output), durable.then_some(delta))
        }
        Err(e) => {
            let denial = matches!(
                &e,
                crate::bus::BusError::DeltaRejected {
                    reason: crate::bus::RejectReason::OutOfScope
                        | crate::bus::RejectReason::AppendOnlyViolation
                        | crate::bus::RejectReason::InternalArea,
                    ..
                }
            );
            let output = e.to_string();
            if denial {
                (ToolOutput::denied(output), None)
            } else {
                (ToolOutput::failed(output), None)
            }
        }
    }
}

fn run_shell(host: &ToolHost, args: &serde_json::Value) -> (ToolOutput, AppliedDelta) {
    let args: ShellArgs = match parse_args(args) {
        Ok(a) => a,
        Err(out) => return (out, None),
    };
    let request = ShellRequest {
        command: args.cmd,
        working_dir: args.cwd,
        timeout: args
            .timeout_s
            .map(Duration::from_secs)
            .unwrap_or(host.shell_timeout),
        output_cap: host.shell_output_cap,
    };
    let kernel = host.target.primary();
    let result = match shell::exec_shell(kernel.root(), &request) {
        Ok(r) => r,
        Err(e) => return (ToolOutput::failed(e.to_string()), None),
    };
    let rescan = kernel.rescan_after_shell(&host.role, &host.invocation_id);
    let mut output = render_shell_result(&result);
    match rescan {
        Ok(report) if !report.changes.is_empty() => {
            output.push_str(&format!(
                "[workspace: {} paths changed, revision {}]\n",
                report.changes.len(),
                report.revision.unwrap_or_default()
            ));
        }
        Ok(_) => {}
        Err(e) => {
            return (
                ToolOutput::failed(format!("{output}[rescan failed: {e}]")),
                None,
            )
        }
    }
    let status = if result.exit_code == 0 && !result.timed_out {
        ToolStatus::Ok
    } else {
        ToolStatus::Failed
    };
    (
        ToolOutput {
            status,
            output,
            permission_denial: None,
        },
        None,
    )
}

fn render_shell_result(result: &ShellResult) -> String {
    let mut out = String::new();
    if result.timed_out {
        out.push_str(&format!(
            "[timed out after {:.1}s, process group killed]\n",
            result.duration.as_secs_f64()
        ));
    }
    out.push_str(&format!("exit_code: {}\n", result.exit_code));
    out.push_str("stdout:\n");
    if result.stdout_truncated {
        out.push_str("[truncated, tail follows]\n");
    }
    out.push_str(&result.stdout_tail);
    if !result.stdout_tail.ends_with('\n') && !result.stdout_tail.is_empty() {
        out.push('\n');
    }
    out.push_str("stderr:\n");
    if result.stderr_truncated {
        out.push_str("[truncated, tail follows]\n");
    }
    out.push_str(&result.stderr_tail);
    if !result.stderr_tail.ends_with('\n') && !result.stderr_tail.is_empty() {
        out.push('\n');
    }
    out
}

fn run_search(host: &ToolHost, args: &serde_json::Value) -> ToolOutput {
    let args: SearchArgs = match parse_args(args) {
        Ok(a) => a,
        Err(out) => return out,
    };
    match host.search.search(&args.query) {
        Ok(Some(text)) => ToolOutput::ok(text),
        Ok(None) => ToolOutput::ok("(no results)"),
        Err(e) => ToolOutput::failed(e.to_string()),
    }
}
