//! Run configuration: goal, task material, budget, backend selection, and
//! the two ablation switches. Loadable from TOML; command-line overrides
//! are applied on top, so precedence is flags > file > defaults.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether tier-1 specialists are registered as tools at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Orchestration {
    #[default]
    Hierarchical,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSelection {
    /// Deterministic rule-table backend driven by a scenario file.
    Scripted { scenario: PathBuf },
    /// Live chat-completions endpoint configured through the environment.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Wall-clock limit in seconds. Enforcement is preemptive between
    /// orchestrator steps and cooperative within tool calls, so overshoot
    /// is bounded by the longest single tool timeout.
    pub wall_clock_s: u64,
    /// Optional cap on orchestrator steps.
    #[serde(default)]
    pub step_limit: Option<u64>,
}

impl Budget {
    pub fn wall_clock(&self) -> Duration {
        Duration::from_secs(self.wall_clock_s)
    }
}

fn default_summary_bytes() -> usize {
    4096
}
fn default_map_bytes() -> usize {
    8 * 1024
}
fn default_specialist_step_cap() -> usize {
    64
}
fn default_fanout_width() -> usize {
    4
}
fn default_shell_timeout_s() -> u64 {
    300
}
fn default_shell_output_bytes() -> usize {
    64 * 1024
}

/// Size and step caps; each doubles as the matching context-event cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    #[serde(default = "default_summary_bytes")]
    pub summary_bytes: usize,
    #[serde(default = "default_map_bytes")]
    pub map_bytes: usize,
    #[serde(default = "default_specialist_step_cap")]
    pub specialist_step_cap: usize,
    #[serde(default = "default_fanout_width")]
    pub fanout_width: usize,
    #[serde(default = "default_shell_timeout_s")]
    pub shell_timeout_s: u64,
    #[serde(default = "default_shell_output_bytes")]
    pub shell_output_bytes: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            summary_bytes: default_summary_bytes(),
            map_bytes: default_map_bytes(),
            specialist_step_cap: default_specialist_step_cap(),
            fanout_width: default_fanout_width(),
            shell_timeout_s: default_shell_timeout_s(),
            shell_output_bytes: default_shell_output_bytes(),
        }
    }
}

fn default_tick_ms() -> u64 {
    10
}

/// Deterministic clock for replay tests: starts at `start_ms` and advances
/// by `tick_ms` per sample instead of reading the system time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedClockSpec {
    pub start_ms: u64,
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
}

fn default_environment_note() -> String {
    "no environment details provided".to_string()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// The task goal handed to the orchestrator.
    pub goal: String,
    /// Directory of task materials seeded into `paper_analysis/source/`.
    #[serde(default)]
    pub task_source: Option<PathBuf>,
    /// Description of the execution environment, seeded into the control
    /// context as its first note. The note is always present so scripted
    /// scenarios see the orchestrator's first decision at turn 1.
    #[serde(default = "default_environment_note")]
    pub environment_note: String,
    /// Workspace root directory.
    pub workspace: PathBuf,
    pub budget: Budget,
    pub backend: BackendSelection,
    /// Role catalog TOML; the built-in catalog when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    /// Search index fixture; the search tool reports unavailable when absent.
    #[serde(default)]
    pub search_fixture: Option<PathBuf>,
    /// File bus on (default) or ablated off.
    #[serde(default = "default_true")]
    pub file_bus: bool,
    #[serde(default)]
    pub orchestration: Orchestration,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fixed_clock: Option<FixedClockSpec>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Load from a file; relative paths inside the config resolve against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_relative(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        anchor(&mut self.workspace);
        if let Some(p) = self.task_source.as_mut() {
            anchor(p);
        }
        if let Some(p) = self.catalog.as_mut() {
            anchor(p);
        }
        if let Some(p) = self.search_fixture.as_mut() {
            anchor(p);
        }
        if let BackendSelection::Scripted { scenario } = &mut self.backend {
            anchor(scenario);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.goal.trim().is_empty() {
            return Err(ConfigError::Invalid("goal must not be empty".into()));
        }
        if self.budget.wall_clock_s == 0 {
            return Err(ConfigError::Invalid(
                "budget.wall_clock_s must be positive".into(),
            ));
        }
        let caps = &self.caps;
        if caps.summary_bytes == 0
            || caps.map_bytes == 0
            || caps.specialist_step_cap == 0
            || caps.fanout_width == 0
            || caps.shell_timeout_s == 0
            || caps.shell_output_bytes == 0
        {
            return Err(ConfigError::Invalid("caps must all be positive".into()));
        }
        Ok(())
    }
}

/// Ablation selector as exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationFlag {
    FileBusOff,
    Flat,
}

impl AblationFlag {
    pub fn parse(raw: &str) -> Result<Self, ConfigError> {
        match raw {
            "filebus-off" => Ok(AblationFlag::FileBusOff),
            "flat" => Ok(AblationFlag::Flat),
            other => Err(ConfigError::Invalid(format!(
                "unknown ablation {other:?} (expected \"filebus-off\" or \"flat\")"
            ))),
        }
    }
}

/// Command-line overrides layered over a config file or a checkpoint.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub budget_s: Option<u64>,
    pub step_limit: Option<u64>,
    pub ablation: Option<AblationFlag>,
    pub backend: Option<String>,
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn apply_overrides(config: &mut RunConfig, overrides: &Overrides) -> Result<(), ConfigError> {
    if let Some(s) = overrides.budget_s {
        config.budget.wall_clock_s = s;
    }
    if let Some(n) = overrides.step_limit {
        config.budget.step_limit = Some(n);
    }
    match overrides.ablation {
        Some(AblationFlag::FileBusOff) => config.file_bus = false,
        Some(AblationFlag::Flat) => config.orchestration = Orchestration::Flat,
        None => {}
    }
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if let Some(path) = &overrides.scenario {
        config.backend = BackendSelection::Scripted {
            scenario: path.clone(),
        };
    }
    match overrides.backend.as_deref() {
        None => {}
        Some("http") => config.backend = BackendSelection::Http,
        Some("scripted") => {
            if !matches!(config.backend, BackendSelection::Scripted { .. }) {
                return Err(ConfigError::Invalid(
                    "backend \"scripted\" requires --scenario or a configured scenario".into(),
                ));
            }
        }
        Some(other) => {
            return Err(ConfigError::Invalid(format!(
                "unknown backend {other:?} (expected \"scripted\" or \"http\")"
            )));
        }
    }
    config.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
goal = "reproduce the toy paper"
workspace = "ws"

[budget]
wall_clock_s = 60

[backend]
kind = "scripted"
scenario = "scenarios/toy.jsonl"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = RunConfig::from_toml(MINIMAL).unwrap();
        assert!(config.file_bus);
        assert_eq!(config.orchestration, Orchestration::Hierarchical);
        assert_eq!(config.caps.summary_bytes, 4096);
        assert_eq!(config.caps.map_bytes, 8192);
        assert!(config.budget.step_limit.is_none());
        assert!(config.fixed_clock.is_none());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.workspace, dir.path().join("ws"));
        match &config.backend {
            BackendSelection::Scripted { scenario } => {
                assert_eq!(scenario, &dir.path().join("scenarios/toy.jsonl"));
            }
            other => panic!("unexpected backend {other:?}"),
        }
    }

    #[test]
    fn zero_budget_and_empty_goal_are_rejected() {
        let bad = MINIMAL.replace("wall_clock_s = 60", "wall_clock_s = 0");
        assert!(matches!(
            RunConfig::from_toml(&bad),
            Err(ConfigError::Invalid(_))
        ));
        let bad = MINIMAL.replace("reproduce the toy paper", "  ");
        assert!(matches!(
            RunConfig::from_toml(&bad),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn overrides_apply_with_flag_precedence() {
        let mut config = RunConfig::from_toml(MINIMAL).unwrap();
        let overrides = Overrides {
            budget_s: Some(5),
            step_limit: Some(3),
            ablation: Some(AblationFlag::Flat),
            seed: Some(9),
            ..Overrides::default()
        };
        apply_overrides(&mut config, &overrides).unwrap();
        assert_eq!(config.budget.wall_clock_s, 5);
        assert_eq!(config.budget.step_limit, Some(3));
        assert_eq!(config.orchestration, Orchestration::Flat);
        assert!(config.file_bus);
        assert_eq!(config.seed, 9);

        let mut config = RunConfig::from_toml(MINIMAL).unwrap();
        apply_overrides(
            &mut config,
            &Overrides {
                ablation: Some(AblationFlag::FileBusOff),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert!(!config.file_bus);
        assert_eq!(config.orchestration, Orchestration::Hierarchical);
    }

    #[test]
    fn switching_to_scripted_without_scenario_is_rejected() {
        let mut config = RunConfig::from_toml(MINIMAL).unwrap();
        config.backend = BackendSelection::Http;
        let err = apply_overrides(
            &mut config,
            &Overrides {
                backend: Some("scripted".into()),
                ..Overrides::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("scenario"), "{err}");
    }
}
