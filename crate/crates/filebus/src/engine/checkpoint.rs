//! Engine checkpoints: the serialized control context plus the counters
//! needed to continue a run, written atomically after every orchestrator
//! step with a digest sidecar to detect torn or tampered files.

use super::config::RunConfig;
use crate::agent::ControlContext;
use crate::bus::audit::sha256_hex;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CHECKPOINT_REL_PATH: &str = "agent/.engine/checkpoint";
pub const CHECKPOINT_DIGEST_REL_PATH: &str = "agent/.engine/checkpoint.sha256";

pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("no checkpoint under {0}")]
    NoCheckpoint(PathBuf),
    #[error("checkpoint corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Checkpoint {
    pub schema: u32,
    /// The effective configuration of the interrupted run; resume restores
    /// it and layers overrides on top.
    pub config: RunConfig,
    /// Orchestrator steps completed.
    pub step: u64,
    /// Label of the stage in flight when the checkpoint was taken.
    pub stage_label: String,
    /// Wall-clock consumed across all sessions of this run.
    pub elapsed_ms: u64,
    /// Continuation point for the invocation id sequence.
    pub next_invocation_id: u64,
    /// Revision of the last map handed to the backend, if any.
    pub last_map_revision: Option<u64>,
    pub control: ControlContext,
}

pub fn checkpoint_path(workspace_root: &Path) -> PathBuf {
    workspace_root.join(CHECKPOINT_REL_PATH)
}

pub fn save(workspace_root: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    let path = checkpoint_path(workspace_root);
    let digest_path = workspace_root.join(CHECKPOINT_DIGEST_REL_PATH);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let bytes = serde_json::to_vec_pretty(checkpoint).expect("checkpoint serializes");

    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, &path)?;

    let digest_tmp = digest_path.with_extension("tmp");
    std::fs::write(&digest_tmp, sha256_hex(&bytes))?;
    std::fs::rename(&digest_tmp, &digest_path)?;
    Ok(())
}

pub fn load(workspace_root: &Path) -> Result<Checkpoint, CheckpointError> {
    let path = checkpoint_path(workspace_root);
    if !path.is_file() {
        return Err(CheckpointError::NoCheckpoint(workspace_root.to_path_buf()));
    }
    let bytes = std::fs::read(&path)?;
    let digest_path = workspace_root.join(CHECKPOINT_DIGEST_REL_PATH);
    let recorded = std::fs::read_to_string(&digest_path)
        .map_err(|_| CheckpointError::Corrupt("digest sidecar missing".into()))?;
    let actual = sha256_hex(&bytes);
    if recorded.trim() != actual {
        return Err(CheckpointError::Corrupt(format!(
            "digest mismatch: sidecar {} vs content {}",
            recorded.trim(),
            actual
        )));
    }
    let checkpoint: Checkpoint = serde_json::from_slice(&bytes)
        .map_err(|e| CheckpointError::Corrupt(format!("unreadable checkpoint: {e}")))?;
    if checkpoint.schema != CHECKPOINT_SCHEMA {
        return Err(CheckpointError::Corrupt(format!(
            "schema {} is not supported (expected {CHECKPOINT_SCHEMA})",
            checkpoint.schema
        )));
    }
    Ok(checkpoint)
}
