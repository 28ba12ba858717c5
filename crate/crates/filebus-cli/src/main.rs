//! Operator interface: launch, resume, inspect, and audit runs.
//!
//! Every handler is a thin adapter over the `filebus` library; any
//! behavior reachable from here is reachable from the library API too.
//! Usage and configuration problems exit 5; run outcomes map to the
//! engine's exit codes (0 completed, 2 budget exhausted, 3 failed,
//! 4 interrupted).

use clap::{Args, Parser, Subcommand};
use filebus::backend::scripted::ScriptedScenario;
use filebus::bus::audit::read_records;
use filebus::bus::{Kernel, KernelLimits};
use filebus::clock::system_clock;
use filebus::engine::config::{AblationFlag, Overrides, RunConfig};
use filebus::engine::trace::{matches_filter, read_trace};
use filebus::engine::{self, RunOutcome};
use filebus::map::{render_map, MapOptions};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

const USAGE_EXIT: u8 = 5;

#[derive(Parser)]
#[command(
    name = "filebus",
    version,
    about = "Multi-agent orchestration over a shared filesystem workspace"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a fresh run from a TOML config file
    Run {
        /// Run configuration file
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Continue an interrupted run from its checkpoint
    Resume {
        /// Workspace root of the interrupted run
        workspace: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Print the current workspace map
    Map {
        /// Workspace root
        workspace: PathBuf,
    },
    /// Print trace events as JSON lines
    Trace {
        /// Workspace root
        workspace: PathBuf,
        /// Keep only events where <key>=<value> (e.g. kind=delegate)
        #[arg(long)]
        filter: Option<String>,
    },
    /// List audit records, or verify the trail replays to the live tree
    Audit {
        /// Workspace root
        workspace: PathBuf,
        /// Replay the trail into a scratch root and compare digests
        #[arg(long)]
        verify: bool,
    },
    /// Scenario file utilities
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Check that a scenario file parses and its rules are well formed
    Validate {
        /// Scenario file (JSON lines)
        path: PathBuf,
    },
}

/// Flag overrides shared by `run` and `resume`; flags beat file values.
#[derive(Args)]
struct OverrideArgs {
    /// Wall clock budget in seconds
    #[arg(long = "budget-s", value_name = "N")]
    budget_s: Option<u64>,
    /// Maximum orchestrator steps
    #[arg(long = "step-limit", value_name = "N")]
    step_limit: Option<u64>,
    /// Ablation mode: filebus-off or flat
    #[arg(long, value_parser = parse_ablation)]
    ablation: Option<AblationFlag>,
    /// Backend kind: scripted or http
    #[arg(long)]
    backend: Option<String>,
    /// Scenario file for the scripted backend
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Seed recorded for the run
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_ablation(text: &str) -> Result<AblationFlag, String> {
    AblationFlag::parse(text).map_err(|e| e.to_string())
}

impl From<OverrideArgs> for Overrides {
    fn from(args: OverrideArgs) -> Overrides {
        Overrides {
            budget_s: args.budget_s,
            step_limit: args.step_limit,
            ablation: args.ablation,
            backend: args.backend,
            scenario: args.scenario,
            seed: args.seed,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(USAGE_EXIT);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(USAGE_EXIT)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Run { config, overrides } => {
            let mut run_config = RunConfig::load(&config).map_err(|e| e.to_string())?;
            filebus::engine::config::apply_overrides(&mut run_config, &overrides.into())
                .map_err(|e| e.to_string())?;
            let outcome = engine::run(run_config, Some(interrupt_flag()))
                .map_err(|e| e.to_string())?;
            Ok(report_outcome(outcome))
        }
        Command::Resume {
            workspace,
            overrides,
        } => {
            let outcome = engine::resume(&workspace, &overrides.into(), Some(interrupt_flag()))
                .map_err(|e| e.to_string())?;
            Ok(report_outcome(outcome))
        }
        Command::Map { workspace } => {
            let kernel = open_kernel(&workspace)?;
            let map = render_map(&kernel.snapshot(), kernel.regions(), MapOptions::default());
            print!("{map}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace { workspace, filter } => {
            let filter = match filter {
                Some(text) => Some(
                    text.split_once('=')
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .ok_or_else(|| format!("filter {text:?} is not key=value"))?,
                ),
                None => None,
            };
            let events = read_trace(&workspace).map_err(|e| e.to_string())?;
            for event in events {
                let keep = match &filter {
                    Some((key, value)) => matches_filter(&event, key, value),
                    None => true,
                };
                if keep {
                    let line = serde_json::to_string(&event).map_err(|e| e.to_string())?;
                    println!("{line}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { workspace, verify } => {
            let kernel = open_kernel(&workspace)?;
            if verify {
                match kernel.verify_audit() {
                    Ok(count) => {
                        println!("OK ({count} records)");
                        Ok(ExitCode::SUCCESS)
                    }
                    Err(e) => {
                        eprintln!("audit verification failed: {e}");
                        Ok(ExitCode::from(3))
                    }
                }
            } else {
                let records =
                    read_records(&kernel.audit_log_path()).map_err(|e| e.to_string())?;
                for record in records {
                    let line = serde_json::to_string(&record).map_err(|e| e.to_string())?;
                    println!("{line}");
                }
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Scenario { action } => match action {
            ScenarioAction::Validate { path } => {
                let scenario = ScriptedScenario::load(&path).map_err(|e| e.to_string())?;
                println!("OK ({} rules)", scenario.rules.len());
                Ok(ExitCode::SUCCESS)
            }
        },
    }
}

fn report_outcome(outcome: RunOutcome) -> ExitCode {
    println!("{}", outcome.status);
    ExitCode::from(outcome.status.exit_code() as u8)
}

fn open_kernel(workspace: &std::path::Path) -> Result<Arc<Kernel>, String> {
    Kernel::open(workspace, KernelLimits::default(), system_clock())
        .map(Arc::new)
        .map_err(|e| e.to_string())
}

/// A Ctrl-C sets the flag; the engine notices at the next step boundary,
/// checkpoints, and exits with status Interrupted.
fn interrupt_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let handle = flag.clone();
    let _ = ctrlc::set_handler(move || {
        handle.store(true, std::sync::atomic::Ordering::SeqCst);
    });
    flag
}
