//! Runtime for long-horizon multi-agent orchestration over a shared
//! filesystem workspace.
//!
//! Agents coordinate by reading and writing durable files in a
//! permission-scoped workspace (the "file bus") instead of passing
//! conversational state between each other. A thin Tier-0 orchestrator
//! delegates stage-level work to Tier-1 specialists, which may fan out to
//! Tier-2 leaf subagents; every delegation travels through the same callable
//! tool interface as ordinary native tools.
//!
//! The crate is organized around that split:
//!
//! - [`bus`] — the workspace kernel: transactional delta application,
//!   permission enforcement, append-only logs, and a replayable audit trail.
//! - [`map`] — the compact deterministic workspace index agents navigate by.
//! - [`roles`] — the shipped role catalog with per-role permission scopes.
//! - [`backend`] — the decision source behind every agent: a deterministic
//!   scripted backend for tests/replay and an HTTP client for live models.
//! - [`agent`] — profiles, the tool registry, and the specialist invocation
//!   loop with private per-invocation context.
//! - [`tools`] — native tools: sandboxed shell, scope-checked file access,
//!   and a pluggable search stub.
//! - [`engine`] — the Tier-0 loop: delegation, budget enforcement,
//!   checkpoint/resume, tracing, and ablation modes.
//!
//! All timestamps flow through an injectable [`clock::Clock`], so a fixed
//! clock makes entire runs byte-reproducible.

pub mod agent;
pub mod backend;
pub mod bus;
pub mod clock;
pub mod engine;
pub mod map;
pub mod path;
pub mod roles;
pub mod tools;
pub mod wire;
