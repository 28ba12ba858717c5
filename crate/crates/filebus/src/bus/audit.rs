//! Append-only audit trail and content-addressed blob store.
//!
//! Every mutation the kernel applies, every denial it refuses, and every
//! effect a shell command has on the artifact tree produces one LD-JSON
//! record in `agent/.audit/audit.log`. Payload bytes live beside it in
//! `agent/.audit_blobs/<sha256>`, so the log plus the blob store replays to
//! a bit-exact copy of the tree.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Hex SHA-256 of a byte slice. This is the digest used throughout the
/// audit trail, the blob store, and workspace tree digests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("audit log line {line} is not valid json: {source}")]
    BadRecord {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("audit log has seq {found} where {expected} was expected")]
    SeqGap { expected: u64, found: u64 },
    #[error("blob {digest} missing from blob store")]
    MissingBlob { digest: String },
    #[error("blob {digest} has wrong content (hashes to {actual})")]
    CorruptBlob { digest: String, actual: String },
    #[error("append record targets {path} but file is absent in replay")]
    AppendToMissing { path: String },
}

/// What an audit record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    CreateFile,
    Overwrite,
    Append,
    CreateDir,
    /// A refused operation. Consumes a sequence number, replays as a no-op.
    Denied,
    /// A file created or modified by a shell command, found by rescan.
    ShellEffect,
    /// A file removed by a shell command.
    ShellRemove,
    /// A directory created by a shell command.
    ShellMkdir,
    /// A directory removed by a shell command.
    ShellRmdir,
}

/// One line of the audit log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    /// 1-based, strictly increasing, no gaps.
    pub seq: u64,
    /// RFC 3339 timestamp from the run clock.
    pub ts: String,
    pub role: String,
    pub invocation: String,
    pub kind: AuditKind,
    pub path: String,
    /// SHA-256 of the payload blob; empty when the record carries none.
    pub digest: String,
    /// Extra context, currently the denial reason.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Content-addressed payload store.
#[derive(Debug, Clone)]
pub struct BlobStore {
    dir: PathBuf,
}

impl BlobStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        BlobStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Store `bytes`, returning their digest. Idempotent: an existing blob
    /// is left alone, so repeated payloads cost one file.
    pub fn store(&self, bytes: &[u8]) -> Result<String, AuditError> {
        let digest = sha256_hex(bytes);
        let target = self.dir.join(&digest);
        if !target.exists() {
            std::fs::create_dir_all(&self.dir)?;
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
            tmp.write_all(bytes)?;
            tmp.persist(&target).map_err(|e| AuditError::Io(e.error))?;
        }
        Ok(digest)
    }

    pub fn load(&self, digest: &str) -> Result<Vec<u8>, AuditError> {
        let path = self.dir.join(digest);
        let bytes = std::fs::read(&path).map_err(|_| AuditError::MissingBlob {
            digest: digest.to_string(),
        })?;
        let actual = sha256_hex(&bytes);
        if actual != digest {
            return Err(AuditError::CorruptBlob {
                digest: digest.to_string(),
                actual,
            });
        }
        Ok(bytes)
    }
}

/// Append one record as an LD-JSON line.
pub fn append_record(log_path: &Path, record: &AuditRecord) -> Result<(), AuditError> {
    if let Some(parent) = log_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(log_path)?;
    let mut line = serde_json::to_string(record).expect("audit record serializes");
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.flush()?;
    Ok(())
}

/// Read and validate the full log: every line parses and seq runs 1..=n.
pub fn read_records(log_path: &Path) -> Result<Vec<AuditRecord>, AuditError> {
    if !log_path.exists() {
        return Ok(Vec::new());
    }
    let file = std::fs::File::open(log_path)?;
    let mut records = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AuditRecord =
            serde_json::from_str(&line).map_err(|source| AuditError::BadRecord {
                line: idx + 1,
                source,
            })?;
        let expected = records.len() as u64 + 1;
        if record.seq != expected {
            return Err(AuditError::SeqGap {
                expected,
                found: record.seq,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// A replayed artifact tree: file contents plus explicitly created
/// directories (directories implied by file paths are not listed).
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ReplayedTree {
    pub files: BTreeMap<String, Vec<u8>>,
    pub dirs: BTreeSet<String>,
}

/// Fold the audit log over an empty tree.
pub fn replay(records: &[AuditRecord], blobs: &BlobStore) -> Result<ReplayedTree, AuditError> {
    let mut tree = ReplayedTree::default();
    for record in records {
        match record.kind {
            AuditKind::CreateFile | AuditKind::Overwrite | AuditKind::ShellEffect => {
                let bytes = blobs.load(&record.digest)?;
                tree.files.insert(record.path.clone(), bytes);
            }
            AuditKind::Append => {
                let bytes = blobs.load(&record.digest)?;
                tree.files
                    .entry(record.path.clone())
                    .or_default()
                    .extend_from_slice(&bytes);
            }
            AuditKind::CreateDir | AuditKind::ShellMkdir => {
                tree.dirs.insert(record.path.clone());
            }
            AuditKind::ShellRemove => {
                tree.files.remove(&record.path);
            }
            AuditKind::ShellRmdir => {
                tree.dirs.remove(&record.path);
                let prefix = format!("{}/", record.path);
                tree.dirs.retain(|d| !d.starts_with(&prefix));
                tree.files.retain(|f, _| !f.starts_with(&prefix));
            }
            AuditKind::Denied => {}
        }
    }
    Ok(tree)
}

/// Write a replayed tree into `target` on the real filesystem.
pub fn materialize(tree: &ReplayedTree, target: &Path) -> Result<(), AuditError> {
    std::fs::create_dir_all(target)?;
    for dir in &tree.dirs {
        std::fs::create_dir_all(target.join(dir))?;
    }
    for (path, bytes) in &tree.files {
        let full = target.join(path);
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(full, bytes)?;
    }
    Ok(())
}

/// Revision boundary: all records with `seq <= last_seq` belong to
/// revisions up to and including `revision`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RevisionBoundary {
    pub revision: u64,
    pub last_seq: u64,
}

pub fn append_boundary(path: &Path, boundary: &RevisionBoundary) -> Result<(), AuditError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut line = serde_json::to_string(boundary).expect("boundary serializes");
    line.push('\n');
    file.write_all(line.as_bytes())?;
    Ok(())
}

pub fn read_boundaries(path: &Path) -> Result<Vec<RevisionBoundary>, AuditError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let b: RevisionBoundary =
            serde_json::from_str(&line).map_err(|source| AuditError::BadRecord {
                line: idx + 1,
                source,
            })?;
        out.push(b);
    }
    Ok(out)
}

/// Map each record seq to the revision it landed in.
pub fn revision_of_seq(boundaries: &[RevisionBoundary], seq: u64) -> u64 {
    for b in boundaries {
        if seq <= b.last_seq {
            return b.revision;
        }
    }
    boundaries.last().map(|b| b.revision).unwrap_or(0)
}
