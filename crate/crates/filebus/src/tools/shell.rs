//! Sandboxed shell execution.
//!
//! Commands run through `/bin/sh -c` in their own process group, with a
//! scrubbed environment and the working directory pinned inside the
//! workspace root. On timeout the whole group is killed, so pipelines and
//! well-behaved children cannot outlive the call. Output is captured into
//! rolling tail buffers; a flood of output costs memory proportional to
//! the cap, never to the flood.
//!
//! The one liveness hazard left is a grandchild that both detaches from
//! the process group and inherits the output pipes. Reader threads are
//! abandoned rather than joined if they are still blocked after the grace
//! window, so even that case returns within timeout + 2 s.

use crate::path::BusPath;
use std::collections::VecDeque;
use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Variables allowed through to child processes.
pub const ENV_ALLOWLIST: [&str; 5] = ["PATH", "HOME", "LANG", "LC_ALL", "TMPDIR"];

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);
pub const DEFAULT_OUTPUT_CAP: usize = 64 * 1024;

/// Extra time allowed past the timeout for teardown and pipe draining.
const GRACE: Duration = Duration::from_secs(2);

const POLL: Duration = Duration::from_millis(5);

/// Sentinel exit code reported when the command was killed at timeout.
pub const TIMEOUT_EXIT_CODE: i32 = -1;

#[derive(Debug, Error)]
pub enum ShellError {
    #[error("empty command")]
    EmptyCommand,
    #[error("working dir escapes the workspace: {0}")]
    WorkingDirEscape(String),
    #[error("failed to spawn shell: {0}")]
    SpawnFailure(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ShellRequest {
    pub command: String,
    /// Workspace-relative working directory; the root when absent.
    pub working_dir: Option<String>,
    pub timeout: Duration,
    pub output_cap: usize,
}

impl ShellRequest {
    pub fn new(command: impl Into<String>) -> Self {
        ShellRequest {
            command: command.into(),
            working_dir: None,
            timeout: DEFAULT_TIMEOUT,
            output_cap: DEFAULT_OUTPUT_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShellResult {
    pub exit_code: i32,
    /// Suffix of the true stdout stream, at most `output_cap` bytes.
    pub stdout_tail: String,
    pub stdout_truncated: bool,
    pub stderr_tail: String,
    pub stderr_truncated: bool,
    pub duration: Duration,
    pub timed_out: bool,
}

struct RollingTail {
    cap: usize,
    buf: VecDeque<u8>,
    truncated: bool,
}

impl RollingTail {
    fn new(cap: usize) -> Self {
        RollingTail {
            cap,
            buf: VecDeque::new(),
            truncated: false,
        }
    }

    fn push(&mut self, bytes: &[u8]) {
        if bytes.len() >= self.cap {
            if !self.buf.is_empty() || bytes.len() > self.cap {
                self.truncated = true;
            }
            self.buf.clear();
            self.buf.extend(&bytes[bytes.len() - self.cap..]);
            return;
        }
        self.buf.extend(bytes);
        while self.buf.len() > self.cap {
            self.buf.pop_front();
            self.truncated = true;
        }
    }

    fn snapshot(&self) -> (String, bool) {
        let bytes: Vec<u8> = self.buf.iter().copied().collect();
        (
            String::from_utf8_lossy(&bytes).into_owned(),
            self.truncated,
        )
    }
}

fn spawn_reader(
    mut pipe: impl Read + Send + 'static,
    tail: Arc<Mutex<RollingTail>>,
    done: Arc<AtomicBool>,
) {
    std::thread::spawn(move || {
        let mut chunk = [0u8; 8192];
        loop {
            match pipe.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => tail.lock().unwrap().push(&chunk[..n]),
            }
        }
        done.store(true, Ordering::SeqCst);
    });
}

/// Run a command under the workspace root. Always returns within
/// `timeout + 2 s`.
pub fn exec_shell(root: &Path, request: &ShellRequest) -> Result<ShellResult, ShellError> {
    if request.command.trim().is_empty() {
        return Err(ShellError::EmptyCommand);
    }
    let cwd = match &request.working_dir {
        None => root.to_path_buf(),
        Some(rel) if rel.is_empty() => root.to_path_buf(),
        Some(rel) => {
            let p = BusPath::parse(rel)
                .map_err(|_| ShellError::WorkingDirEscape(rel.clone()))?;
            root.join(p.as_str())
        }
    };

    let mut cmd = Command::new("/bin/sh");
    cmd.arg("-c")
        .arg(&request.command)
        .current_dir(&cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .env_clear();
    for key in ENV_ALLOWLIST {
        if let Ok(value) = std::env::var(key) {
            cmd.env(key, value);
        }
    }

    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pgid = child.id() as i32;

    let out_tail = Arc::new(Mutex::new(RollingTail::new(request.output_cap)));
    let err_tail = Arc::new(Mutex::new(RollingTail::new(request.output_cap)));
    let out_done = Arc::new(AtomicBool::new(false));
    let err_done = Arc::new(AtomicBool::new(false));
    if let Some(pipe) = child.stdout.take() {
        spawn_reader(pipe, out_tail.clone(), out_done.clone());
    } else {
        out_done.store(true, Ordering::SeqCst);
    }
    if let Some(pipe) = child.stderr.take() {
        spawn_reader(pipe, err_tail.clone(), err_done.clone());
    } else {
        err_done.store(true, Ordering::SeqCst);
    }

    let mut timed_out = false;
    let exit_code;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => {
                exit_code = exit_code_of(status);
                break;
            }
            Ok(None) => {}
            Err(e) => return Err(ShellError::SpawnFailure(e)),
        }
        if start.elapsed() >= request.timeout {
            timed_out = true;
            unsafe {
                libc::killpg(pgid, libc::SIGKILL);
            }
            exit_code = TIMEOUT_EXIT_CODE;
            let kill_deadline = Instant::now() + GRACE / 2;
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if Instant::now() < kill_deadline => {
                        std::thread::sleep(POLL)
                    }
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
            break;
        }
        std::thread::sleep(POLL);
    }

    let hard_deadline = start + request.timeout.min(start.elapsed()) + GRACE;
    while !(out_done.load(Ordering::SeqCst) && err_done.load(Ordering::SeqCst)) {
        if Instant::now() >= hard_deadline {
            break;
        }
        std::thread::sleep(POLL);
    }

    let (stdout_tail, stdout_truncated) = out_tail.lock().unwrap().snapshot();
    let (stderr_tail, stderr_truncated) = err_tail.lock().unwrap().snapshot();
    Ok(ShellResult {
        exit_code,
        stdout_tail,
        stdout_truncated,
        stderr_tail,
        stderr_truncated,
        duration: start.elapsed(),
        timed_out,
    })
}

fn exit_code_of(status: std::process::ExitStatus) -> i32 {
    status
        .code()
        .or_else(|| status.signal().map(|s| 128 + s))
        .unwrap_or(TIMEOUT_EXIT_CODE)
}
