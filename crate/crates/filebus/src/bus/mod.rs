//! The workspace bus: a permission-scoped, audited artifact tree.
//!
//! The [`Kernel`] owns one workspace rooted at a host directory. All agent
//! communication rides on files beneath that root, so the kernel is the
//! single chokepoint where scopes are enforced, mutations are made
//! transactional, and every change or refusal is written to the audit
//! trail. Callers address artifacts by [`crate::path::BusPath`]; host paths
//! never leak out.
//!
//! Mutations arrive as a [`WorkspaceDelta`], validated in full before any
//! byte is written. A delta that fails validation leaves the tree unchanged
//! and costs exactly one `denied` audit record. Shell commands bypass the
//! delta path by nature, so [`Kernel::rescan_after_shell`] diffs the disk
//! against the in-memory index afterwards and audits what the command did.

pub mod audit;
pub mod delta;
pub mod perm;
pub mod regions;

use crate::clock::{format_rfc3339, SharedClock};
use crate::path::{BusPath, PathError};
use audit::{
    append_boundary, append_record, read_boundaries, read_records, revision_of_seq, sha256_hex,
    AuditError, AuditKind, AuditRecord, BlobStore, RevisionBoundary,
};
use delta::{DeltaOp, WorkspaceDelta};
use perm::{check_permission, AccessKind, Decision, DenyReason, PermissionScope};
use regions::{is_internal, RegionConfig, RegionConfigError};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use thiserror::Error;

/// Role name attributed to records the kernel writes on its own behalf.
pub const SYSTEM_ROLE: &str = "system";

const REGIONS_FILE: &str = "agent/.engine/regions.toml";

/// Size limits the kernel enforces.
#[derive(Debug, Clone, Copy)]
pub struct KernelLimits {
    /// Maximum total payload bytes a single delta may carry.
    pub payload_max_bytes: usize,
}

impl Default for KernelLimits {
    fn default() -> Self {
        KernelLimits {
            payload_max_bytes: 16 * 1024 * 1024,
        }
    }
}

/// Why a delta was refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    OutOfScope,
    AppendOnlyViolation,
    /// The path lies inside kernel bookkeeping areas.
    InternalArea,
    /// `create_file` on a path that already exists.
    AlreadyExists,
    /// File/directory shape mismatch, e.g. writing where a directory sits.
    PathConflict(String),
    PayloadTooLarge { limit: usize, actual: usize },
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::OutOfScope => write!(f, "out of scope"),
            RejectReason::AppendOnlyViolation => write!(f, "append-only violation"),
            RejectReason::InternalArea => write!(f, "kernel-internal area"),
            RejectReason::AlreadyExists => write!(f, "path already exists"),
            RejectReason::PathConflict(msg) => write!(f, "path conflict: {msg}"),
            RejectReason::PayloadTooLarge { limit, actual } => {
                write!(f, "payload too large: {actual} bytes exceeds cap of {limit}")
            }
        }
    }
}

impl From<DenyReason> for RejectReason {
    fn from(r: DenyReason) -> Self {
        match r {
            DenyReason::OutOfScope => RejectReason::OutOfScope,
            DenyReason::AppendOnlyViolation => RejectReason::AppendOnlyViolation,
        }
    }
}

#[derive(Debug, Error)]
pub enum BusError {
    #[error("{0}")]
    Path(#[from] PathError),
    #[error("workspace root {0} already exists and is not empty")]
    RootNotEmpty(PathBuf),
    #[error("workspace at {root} is unusable: {detail}")]
    Corrupt { root: PathBuf, detail: String },
    #[error("delta op {op_index} on {path} rejected: {reason}")]
    DeltaRejected {
        op_index: usize,
        path: String,
        reason: RejectReason,
    },
    #[error("read of {path} denied: out of scope")]
    ReadDenied { path: String },
    #[error("artifact not found: {path}")]
    NotFound { path: String },
    #[error("{path} is a directory, not a file")]
    NotAFile { path: String },
    #[error("region config error: {0}")]
    Regions(#[from] RegionConfigError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("workspace io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-file bookkeeping mirrored from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileMeta {
    pub size: u64,
    pub digest: String,
    /// Workspace revision of the last change that touched this file.
    pub last_revision: u64,
}

/// A consistent view of the artifact tree for map building and assertions.
#[derive(Debug, Clone)]
pub struct TreeSnapshot {
    pub files: Vec<(BusPath, FileMeta)>,
    pub dirs: Vec<BusPath>,
    pub revision: u64,
}

/// Result of a committed delta.
#[derive(Debug, Clone, Copy)]
pub struct ApplyReport {
    pub revision: u64,
    pub first_seq: u64,
    pub last_seq: u64,
    pub ops_applied: usize,
}

/// One filesystem change a shell command made.
#[derive(Debug, Clone)]
pub struct ShellChange {
    pub kind: AuditKind,
    pub path: String,
}

/// Result of a post-shell rescan.
#[derive(Debug, Clone, Default)]
pub struct ShellReport {
    pub changes: Vec<ShellChange>,
    /// Revision the changes landed in; `None` when nothing changed.
    pub revision: Option<u64>,
}

#[derive(Debug, Default)]
struct Inner {
    files: BTreeMap<BusPath, FileMeta>,
    dirs: BTreeSet<BusPath>,
    revision: u64,
    next_seq: u64,
}

enum UndoOp {
    RestoreFile { path: BusPath, bytes: Vec<u8> },
    RemoveFile { path: BusPath },
    RemoveDirs { paths: Vec<BusPath> },
}

pub struct Kernel {
    root: PathBuf,
    regions: RegionConfig,
    limits: KernelLimits,
    clock: SharedClock,
    blobs: BlobStore,
    inner: RwLock<Inner>,
}

impl Kernel {
    /// Create a fresh workspace. The root must not exist yet or be an empty
    /// directory. The region skeleton is created and audited as revision 1.
    pub fn init_workspace(
        root: impl Into<PathBuf>,
        regions: RegionConfig,
        limits: KernelLimits,
        clock: SharedClock,
    ) -> Result<Self, BusError> {
        let root = root.into();
        if root.exists() {
            if !root.is_dir() || std::fs::read_dir(&root)?.next().is_some() {
                return Err(BusError::RootNotEmpty(root));
            }
        } else {
            std::fs::create_dir_all(&root)?;
        }
        regions.validate()?;

        for area in regions::INTERNAL_AREAS {
            std::fs::create_dir_all(root.join(area))?;
        }
        std::fs::write(
            root.join(REGIONS_FILE),
            toml::to_string_pretty(&regions).expect("region config serializes"),
        )?;

        let kernel = Kernel {
            blobs: BlobStore::new(root.join(regions::BLOB_DIR)),
            root,
            regions,
            limits,
            clock,
            inner: RwLock::new(Inner {
                next_seq: 1,
                ..Inner::default()
            }),
        };

        let mut skeleton: Vec<BusPath> = kernel
            .regions
            .prefixes()
            .into_iter()
            .collect();
        skeleton.push(BusPath::parse(regions::EXPERIMENTS_DIR)?);
        {
            let mut inner = kernel.inner.write().unwrap();
            let revision = 1;
            let mut seq = inner.next_seq;
            for dir in &skeleton {
                std::fs::create_dir_all(kernel.root.join(dir.as_str()))?;
                append_record(
                    &kernel.audit_log_path(),
                    &AuditRecord {
                        seq,
                        ts: kernel.ts(),
                        role: SYSTEM_ROLE.into(),
                        invocation: "init".into(),
                        kind: AuditKind::CreateDir,
                        path: dir.as_str().to_string(),
                        digest: String::new(),
                        detail: None,
                    },
                )?;
                seq += 1;
                inner.dirs.insert(dir.clone());
            }
            append_boundary(
                &kernel.revisions_log_path(),
                &RevisionBoundary {
                    revision,
                    last_seq: seq - 1,
                },
            )?;
            inner.next_seq = seq;
            inner.revision = revision;
        }
        Ok(kernel)
    }

    /// Open an existing workspace, rebuilding the index from the disk tree
    /// and the audit trail.
    pub fn open(
        root: impl Into<PathBuf>,
        limits: KernelLimits,
        clock: SharedClock,
    ) -> Result<Self, BusError> {
        let root = root.into();
        let regions_path = root.join(REGIONS_FILE);
        if !regions_path.is_file() {
            return Err(BusError::Corrupt {
                root,
                detail: "missing region config (not an initialized workspace)".into(),
            });
        }
        let regions = RegionConfig::load(&regions_path)?;

        let kernel = Kernel {
            blobs: BlobStore::new(root.join(regions::BLOB_DIR)),
            root,
            regions,
            limits,
            clock,
            inner: RwLock::new(Inner::default()),
        };

        let records = read_records(&kernel.audit_log_path())?;
        let boundaries = read_boundaries(&kernel.revisions_log_path())?;
        let mut last_touch: BTreeMap<String, u64> = BTreeMap::new();
        for record in &records {
            match record.kind {
                AuditKind::CreateFile
                | AuditKind::Overwrite
                | AuditKind::Append
                | AuditKind::ShellEffect => {
                    last_touch.insert(
                        record.path.clone(),
                        revision_of_seq(&boundaries, record.seq),
                    );
                }
                _ => {}
            }
        }

        let (disk_files, disk_dirs) = walk_surface(&kernel.root)?;
        {
            let mut inner = kernel.inner.write().unwrap();
            for path in disk_files {
                let bytes = std::fs::read(kernel.root.join(path.as_str()))?;
                inner.files.insert(
                    path.clone(),
                    FileMeta {
                        size: bytes.len() as u64,
                        digest: sha256_hex(&bytes),
                        last_revision: last_touch.get(path.as_str()).copied().unwrap_or(0),
                    },
                );
            }
            inner.dirs = disk_dirs;
            inner.revision = boundaries.last().map(|b| b.revision).unwrap_or(0);
            inner.next_seq = records.len() as u64 + 1;
        }
        Ok(kernel)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn regions(&self) -> &RegionConfig {
        &self.regions
    }

    pub fn limits(&self) -> KernelLimits {
        self.limits
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    pub fn audit_log_path(&self) -> PathBuf {
        self.root.join(regions::AUDIT_LOG_PATH)
    }

    pub fn revisions_log_path(&self) -> PathBuf {
        self.root.join(regions::REVISIONS_LOG_PATH)
    }

    pub fn revision(&self) -> u64 {
        self.inner.read().unwrap().revision
    }

    /// True when a file or directory exists at `path` on the user surface.
    pub fn artifact_exists(&self, path: &BusPath) -> bool {
        let inner = self.inner.read().unwrap();
        inner.files.contains_key(path) || inner.dirs.contains(path)
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        let inner = self.inner.read().unwrap();
        TreeSnapshot {
            files: inner
                .files
                .iter()
                .map(|(p, m)| (p.clone(), m.clone()))
                .collect(),
            dirs: inner.dirs.iter().cloned().collect(),
            revision: inner.revision,
        }
    }

    fn ts(&self) -> String {
        format_rfc3339(self.clock.now_unix_ms())
    }

    /// Read a file, honoring the scope's readable set. `offset`/`len`
    /// select a byte window of the content.
    pub fn read_artifact(
        &self,
        scope: &PermissionScope,
        path: &BusPath,
        offset: Option<u64>,
        len: Option<u64>,
    ) -> Result<Vec<u8>, BusError> {
        if !check_permission(scope, &self.regions, AccessKind::Read, path).is_allow() {
            return Err(BusError::ReadDenied {
                path: path.as_str().to_string(),
            });
        }
        let inner = self.inner.read().unwrap();
        if inner.dirs.contains(path) {
            return Err(BusError::NotAFile {
                path: path.as_str().to_string(),
            });
        }
        if !inner.files.contains_key(path) {
            return Err(BusError::NotFound {
                path: path.as_str().to_string(),
            });
        }
        let bytes = std::fs::read(self.root.join(path.as_str()))?;
        let start = offset.unwrap_or(0).min(bytes.len() as u64) as usize;
        let end = match len {
            Some(n) => (start as u64 + n).min(bytes.len() as u64) as usize,
            None => bytes.len(),
        };
        Ok(bytes[start..end].to_vec())
    }

    /// Validate and apply a delta transactionally.
    ///
    /// Validation walks the ops in order against a scratch view of the
    /// tree, so an op may depend on an earlier op in the same delta. The
    /// first failure rejects the whole delta: nothing is written except a
    /// single `denied` audit record naming the offending path.
    pub fn apply_delta(
        &self,
        scope: &PermissionScope,
        delta: &WorkspaceDelta,
    ) -> Result<ApplyReport, BusError> {
        let mut inner = self.inner.write().unwrap();
        if delta.is_empty() {
            return Ok(ApplyReport {
                revision: inner.revision,
                first_seq: 0,
                last_seq: 0,
                ops_applied: 0,
            });
        }

        let total = delta.total_payload();
        if total > self.limits.payload_max_bytes {
            let reason = RejectReason::PayloadTooLarge {
                limit: self.limits.payload_max_bytes,
                actual: total,
            };
            return Err(self.reject(&mut inner, delta, 0, delta.ops[0].path(), reason));
        }

        let mut files_view: BTreeSet<BusPath> = inner.files.keys().cloned().collect();
        let mut dirs_view = inner.dirs.clone();
        for (i, op) in delta.ops.iter().enumerate() {
            let path = op.path();
            if is_internal(path) {
                return Err(self.reject(&mut inner, delta, i, path, RejectReason::InternalArea));
            }
            if let Decision::Deny(reason) =
                check_permission(scope, &self.regions, op.access_kind(), path)
            {
                return Err(self.reject(&mut inner, delta, i, path, reason.into()));
            }
            if let Some(conflict) = ancestor_file(&files_view, path) {
                let reason = RejectReason::PathConflict(format!(
                    "ancestor {conflict} is a file"
                ));
                return Err(self.reject(&mut inner, delta, i, path, reason));
            }
            match op {
                DeltaOp::CreateFile { .. } => {
                    if files_view.contains(path) {
                        return Err(self.reject(
                            &mut inner,
                            delta,
                            i,
                            path,
                            RejectReason::AlreadyExists,
                        ));
                    }
                    if dirs_view.contains(path) {
                        let reason =
                            RejectReason::PathConflict("a directory exists at this path".into());
                        return Err(self.reject(&mut inner, delta, i, path, reason));
                    }
                    add_file_to_view(&mut files_view, &mut dirs_view, path);
                }
                DeltaOp::Overwrite { .. } | DeltaOp::Append { .. } => {
                    if dirs_view.contains(path) {
                        let reason =
                            RejectReason::PathConflict("a directory exists at this path".into());
                        return Err(self.reject(&mut inner, delta, i, path, reason));
                    }
                    add_file_to_view(&mut files_view, &mut dirs_view, path);
                }
                DeltaOp::CreateDir { .. } => {
                    if files_view.contains(path) {
                        let reason =
                            RejectReason::PathConflict("a file exists at this path".into());
                        return Err(self.reject(&mut inner, delta, i, path, reason));
                    }
                    let mut cur = Some(path.clone());
                    while let Some(p) = cur {
                        dirs_view.insert(p.clone());
                        cur = p.parent();
                    }
                }
            }
        }

        let revision = inner.revision + 1;
        let first_seq = inner.next_seq;
        let mut records = Vec::with_capacity(delta.ops.len());
        for (i, op) in delta.ops.iter().enumerate() {
            let digest = match op {
                DeltaOp::CreateFile { content, .. }
                | DeltaOp::Overwrite { content, .. }
                | DeltaOp::Append { content, .. } => self.blobs.store(content)?,
                DeltaOp::CreateDir { .. } => String::new(),
            };
            records.push(AuditRecord {
                seq: first_seq + i as u64,
                ts: self.ts(),
                role: delta.role.clone(),
                invocation: delta.invocation.clone(),
                kind: match op.access_kind() {
                    AccessKind::CreateFile => AuditKind::CreateFile,
                    AccessKind::Overwrite => AuditKind::Overwrite,
                    AccessKind::Append => AuditKind::Append,
                    AccessKind::CreateDir => AuditKind::CreateDir,
                    AccessKind::Read => unreachable!("deltas carry no reads"),
                },
                path: path_string(op.path()),
                digest,
                detail: None,
            });
        }

        let mut undo: Vec<UndoOp> = Vec::new();
        let mut touched_files: BTreeSet<BusPath> = BTreeSet::new();
        let mut added_dirs: Vec<BusPath> = Vec::new();
        let apply_result = (|| -> Result<(), BusError> {
            for op in &delta.ops {
                self.apply_op(op, &mut undo, &mut touched_files, &mut added_dirs)?;
            }
            Ok(())
        })();
        if let Err(err) = apply_result {
            self.rollback(undo);
            return Err(err);
        }

        for record in &records {
            append_record(&self.audit_log_path(), record)?;
        }
        let last_seq = first_seq + records.len() as u64 - 1;
        append_boundary(
            &self.revisions_log_path(),
            &RevisionBoundary { revision, last_seq },
        )?;

        for dir in added_dirs {
            inner.dirs.insert(dir);
        }
        for path in touched_files {
            let bytes = std::fs::read(self.root.join(path.as_str()))?;
            inner.files.insert(
                path,
                FileMeta {
                    size: bytes.len() as u64,
                    digest: sha256_hex(&bytes),
                    last_revision: revision,
                },
            );
        }
        inner.revision = revision;
        inner.next_seq = last_seq + 1;

        Ok(ApplyReport {
            revision,
            first_seq,
            last_seq,
            ops_applied: records.len(),
        })
    }

    fn reject(
        &self,
        inner: &mut Inner,
        delta: &WorkspaceDelta,
        op_index: usize,
        path: &BusPath,
        reason: RejectReason,
    ) -> BusError {
        let record = AuditRecord {
            seq: inner.next_seq,
            ts: self.ts(),
            role: delta.role.clone(),
            invocation: delta.invocation.clone(),
            kind: AuditKind::Denied,
            path: path_string(path),
            digest: String::new(),
            detail: Some(reason.to_string()),
        };
        if append_record(&self.audit_log_path(), &record).is_ok() {
            inner.next_seq += 1;
        }
        BusError::DeltaRejected {
            op_index,
            path: path_string(path),
            reason,
        }
    }

    fn apply_op(
        &self,
        op: &DeltaOp,
        undo: &mut Vec<UndoOp>,
        touched_files: &mut BTreeSet<BusPath>,
        added_dirs: &mut Vec<BusPath>,
    ) -> Result<(), BusError> {
        match op {
            DeltaOp::CreateFile { path, content } | DeltaOp::Overwrite { path, content } => {
                let created = self.create_parent_dirs(path)?;
                added_dirs.extend(created.iter().cloned());
                if !created.is_empty() {
                    undo.push(UndoOp::RemoveDirs { paths: created });
                }
                let host = self.root.join(path.as_str());
                match std::fs::read(&host) {
                    Ok(old) => undo.push(UndoOp::RestoreFile {
                        path: path.clone(),
                        bytes: old,
                    }),
                    Err(_) => undo.push(UndoOp::RemoveFile { path: path.clone() }),
                }
                std::fs::write(&host, content)?;
                touched_files.insert(path.clone());
            }
            DeltaOp::Append { path, content } => {
                let created = self.create_parent_dirs(path)?;
                added_dirs.extend(created.iter().cloned());
                if !created.is_empty() {
                    undo.push(UndoOp::RemoveDirs { paths: created });
                }
                let host = self.root.join(path.as_str());
                match std::fs::read(&host) {
                    Ok(old) => undo.push(UndoOp::RestoreFile {
                        path: path.clone(),
                        bytes: old,
                    }),
                    Err(_) => undo.push(UndoOp::RemoveFile { path: path.clone() }),
                }
                use std::io::Write;
                let mut file = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&host)?;
                file.write_all(content)?;
                touched_files.insert(path.clone());
            }
            DeltaOp::CreateDir { path } => {
                let mut chain = self.create_parent_dirs(path)?;
                let host = self.root.join(path.as_str());
                if !host.exists() {
                    std::fs::create_dir(&host)?;
                    chain.push(path.clone());
                }
                added_dirs.extend(chain.iter().cloned());
                if !chain.is_empty() {
                    undo.push(UndoOp::RemoveDirs { paths: chain });
                }
            }
        }
        Ok(())
    }

    /// Create missing ancestors of `path`, returning those actually made,
    /// parent-first.
    fn create_parent_dirs(&self, path: &BusPath) -> Result<Vec<BusPath>, BusError> {
        let mut created = Vec::new();
        let mut ancestors = Vec::new();
        let mut cur = path.parent();
        while let Some(p) = cur {
            cur = p.parent();
            ancestors.push(p);
        }
        for dir in ancestors.into_iter().rev() {
            let host = self.root.join(dir.as_str());
            if !host.exists() {
                std::fs::create_dir(&host)?;
                created.push(dir);
            }
        }
        Ok(created)
    }

    fn rollback(&self, undo: Vec<UndoOp>) {
        for entry in undo.into_iter().rev() {
            match entry {
                UndoOp::RestoreFile { path, bytes } => {
                    let _ = std::fs::write(self.root.join(path.as_str()), bytes);
                }
                UndoOp::RemoveFile { path } => {
                    let _ = std::fs::remove_file(self.root.join(path.as_str()));
                }
                UndoOp::RemoveDirs { paths } => {
                    for dir in paths.into_iter().rev() {
                        let _ = std::fs::remove_dir(self.root.join(dir.as_str()));
                    }
                }
            }
        }
    }

    /// Diff the disk against the index and audit what a shell command
    /// changed. New and modified files become `shell_effect` records with
    /// their content in the blob store; deletions and directory changes get
    /// their own kinds. No change, no new revision.
    pub fn rescan_after_shell(
        &self,
        role: &str,
        invocation: &str,
    ) -> Result<ShellReport, BusError> {
        let mut inner = self.inner.write().unwrap();
        let (disk_files, disk_dirs) = walk_surface(&self.root)?;

        struct Pending {
            kind: AuditKind,
            path: BusPath,
            digest: String,
        }
        let mut pending: Vec<Pending> = Vec::new();

        for dir in disk_dirs.difference(&inner.dirs) {
            pending.push(Pending {
                kind: AuditKind::ShellMkdir,
                path: dir.clone(),
                digest: String::new(),
            });
        }

        let mut new_meta: BTreeMap<BusPath, FileMeta> = BTreeMap::new();
        for path in &disk_files {
            let bytes = std::fs::read(self.root.join(path.as_str()))?;
            let digest = sha256_hex(&bytes);
            let changed = match inner.files.get(path) {
                None => true,
                Some(meta) => meta.digest != digest,
            };
            if changed {
                self.blobs.store(&bytes)?;
                pending.push(Pending {
                    kind: AuditKind::ShellEffect,
                    path: path.clone(),
                    digest: digest.clone(),
                });
                new_meta.insert(
                    path.clone(),
                    FileMeta {
                        size: bytes.len() as u64,
                        digest,
                        last_revision: 0,
                    },
                );
            }
        }

        for path in inner.files.keys() {
            if !disk_files.contains(path) {
                pending.push(Pending {
                    kind: AuditKind::ShellRemove,
                    path: path.clone(),
                    digest: String::new(),
                });
            }
        }
        let removed_dirs: Vec<BusPath> = inner.dirs.difference(&disk_dirs).cloned().collect();
        for dir in removed_dirs.into_iter().rev() {
            pending.push(Pending {
                kind: AuditKind::ShellRmdir,
                path: dir,
                digest: String::new(),
            });
        }

        if pending.is_empty() {
            return Ok(ShellReport::default());
        }

        let revision = inner.revision + 1;
        let first_seq = inner.next_seq;
        let mut changes = Vec::with_capacity(pending.len());
        for (i, p) in pending.iter().enumerate() {
            append_record(
                &self.audit_log_path(),
                &AuditRecord {
                    seq: first_seq + i as u64,
                    ts: self.ts(),
                    role: role.to_string(),
                    invocation: invocation.to_string(),
                    kind: p.kind,
                    path: path_string(&p.path),
                    digest: p.digest.clone(),
                    detail: None,
                },
            )?;
            changes.push(ShellChange {
                kind: p.kind,
                path: path_string(&p.path),
            });
        }
        let last_seq = first_seq + pending.len() as u64 - 1;
        append_boundary(
            &self.revisions_log_path(),
            &RevisionBoundary { revision, last_seq },
        )?;

        let kept: Vec<(BusPath, FileMeta)> = inner
            .files
            .iter()
            .filter(|(p, _)| disk_files.contains(*p) && !new_meta.contains_key(*p))
            .map(|(p, m)| (p.clone(), m.clone()))
            .collect();
        inner.files.clear();
        for (p, m) in kept {
            inner.files.insert(p, m);
        }
        for (p, mut m) in new_meta {
            m.last_revision = revision;
            inner.files.insert(p, m);
        }
        inner.dirs = disk_dirs;
        inner.revision = revision;
        inner.next_seq = last_seq + 1;

        Ok(ShellReport {
            changes,
            revision: Some(revision),
        })
    }

    /// Deterministic digest of the artifact tree: directory names plus each
    /// file's path and content digest, in sorted order.
    pub fn tree_digest(&self) -> String {
        let inner = self.inner.read().unwrap();
        let mut hasher = Sha256::new();
        for dir in &inner.dirs {
            hasher.update(b"D ");
            hasher.update(dir.as_str().as_bytes());
            hasher.update(b"\n");
        }
        for (path, meta) in &inner.files {
            hasher.update(b"F ");
            hasher.update(path.as_str().as_bytes());
            hasher.update(b" ");
            hasher.update(meta.digest.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Copy the audit log and blob store into `dest` as `audit.log` and
    /// `blobs/`, a self-contained bundle that replays to the current tree.
    pub fn export_audit(&self, dest: &Path) -> Result<(), BusError> {
        let _guard = self.inner.read().unwrap();
        std::fs::create_dir_all(dest)?;
        std::fs::copy(self.audit_log_path(), dest.join("audit.log"))?;
        let blob_dest = dest.join("blobs");
        std::fs::create_dir_all(&blob_dest)?;
        if self.blobs.dir().is_dir() {
            for entry in std::fs::read_dir(self.blobs.dir())? {
                let entry = entry?;
                if entry.file_type()?.is_file() {
                    std::fs::copy(entry.path(), blob_dest.join(entry.file_name()))?;
                }
            }
        }
        Ok(())
    }

    /// Replay the audit trail and compare it against the live tree. Returns
    /// the number of records checked.
    pub fn verify_audit(&self) -> Result<usize, BusError> {
        let records = read_records(&self.audit_log_path())?;
        let replayed = audit::replay(&records, &self.blobs)?;
        let inner = self.inner.read().unwrap();

        for (path, meta) in &inner.files {
            match replayed.files.get(path.as_str()) {
                None => {
                    return Err(self.corrupt(format!(
                        "file {path} exists on disk but not in the replayed tree"
                    )))
                }
                Some(bytes) => {
                    if sha256_hex(bytes) != meta.digest {
                        return Err(self.corrupt(format!(
                            "file {path} differs between disk and replay"
                        )));
                    }
                }
            }
        }
        for path in replayed.files.keys() {
            let p = BusPath::parse(path).map_err(BusError::Path)?;
            if !inner.files.contains_key(&p) {
                return Err(self.corrupt(format!(
                    "replayed tree has {path} which is absent on disk"
                )));
            }
        }

        let mut implied: BTreeSet<String> = BTreeSet::new();
        for path in replayed.files.keys() {
            let p = BusPath::parse(path).map_err(BusError::Path)?;
            let mut cur = p.parent();
            while let Some(d) = cur {
                cur = d.parent();
                implied.insert(d.as_str().to_string());
            }
        }
        for dir in &replayed.dirs {
            implied.insert(dir.clone());
            if let Ok(p) = BusPath::parse(dir) {
                let mut cur = p.parent();
                while let Some(d) = cur {
                    cur = d.parent();
                    implied.insert(d.as_str().to_string());
                }
            }
        }
        let live: BTreeSet<String> = inner
            .dirs
            .iter()
            .map(|d| d.as_str().to_string())
            .collect();
        if implied != live {
            return Err(self.corrupt(format!(
                "directory sets differ: replay implies {implied:?}, disk has {live:?}"
            )));
        }
        Ok(records.len())
    }

    fn corrupt(&self, detail: String) -> BusError {
        BusError::Corrupt {
            root: self.root.clone(),
            detail,
        }
    }
}

fn path_string(p: &BusPath) -> String {
    p.as_str().to_string()
}

fn add_file_to_view(
    files: &mut BTreeSet<BusPath>,
    dirs: &mut BTreeSet<BusPath>,
    path: &BusPath,
) {
    files.insert(path.clone());
    let mut cur = path.parent();
    while let Some(p) = cur {
        cur = p.parent();
        dirs.insert(p);
    }
}

fn ancestor_file(files: &BTreeSet<BusPath>, path: &BusPath) -> Option<BusPath> {
    let mut cur = path.parent();
    while let Some(p) = cur {
        if files.contains(&p) {
            return Some(p);
        }
        cur = p.parent();
    }
    None
}

/// Walk the user-visible tree under `root`, skipping kernel-internal
/// areas. Symbolic links are not followed and do not appear in the result.
fn walk_surface(root: &Path) -> Result<(BTreeSet<BusPath>, BTreeSet<BusPath>), BusError> {
    let mut files = BTreeSet::new();
    let mut dirs = BTreeSet::new();
    let mut stack: Vec<Option<BusPath>> = vec![None];
    while let Some(rel) = stack.pop() {
        let host = match &rel {
            None => root.to_path_buf(),
            Some(p) => root.join(p.as_str()),
        };
        for entry in std::fs::read_dir(&host)? {
            let entry = entry?;
            let name = entry.file_name();
            let name = name.to_str().ok_or_else(|| BusError::Corrupt {
                root: root.to_path_buf(),
                detail: format!("non-UTF-8 file name under {}", host.display()),
            })?;
            let child = match &rel {
                None => BusPath::parse(name)?,
                Some(p) => p.child(name),
            };
            if is_internal(&child) {
                continue;
            }
            let file_type = entry.file_type()?;
            if file_type.is_symlink() {
                continue;
            }
            if file_type.is_dir() {
                dirs.insert(child.clone());
                stack.push(Some(child));
            } else if file_type.is_file() {
                files.insert(child);
            }
        }
    }
    Ok((files, dirs))
}
