//! The shipped role catalog: five Tier-1 specialists, the Tier-2 leaf
//! worker template, and the iteration-log entry format.
//!
//! Roles are declarative data. The default catalog is embedded from
//! `assets/roles.toml`; an alternative catalog can be loaded from disk, with
//! prompt files resolved relative to it. Write scopes across Tier-1 roles
//! are validated to be pairwise disjoint, so two specialists can never
//! contend for the same file.

use crate::agent::AgentProfile;
use crate::bus::perm::PermissionScope;
use crate::bus::regions::RegionConfig;
use crate::path::{BusPath, PathPattern};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

pub const CANONICAL_TIER1_ROLES: [&str; 5] = [
    "comprehension",
    "prioritization",
    "implementation",
    "experimentation",
    "helper",
];

/// Tier-2 leaf worker template role id.
pub const SUBAGENT_ROLE: &str = "subagent";

/// Role id the orchestrator runs under.
pub const TIER0_ROLE: &str = "tier0";

/// Native tool ids roles may be granted.
pub const NATIVE_TOOL_IDS: [&str; 6] = [
    "read_file",
    "write_file",
    "append_file",
    "shell",
    "search",
    "spawn",
];

const BUILTIN_ROLES_TOML: &str = include_str!("../assets/roles.toml");

#[derive(Debug, Error)]
pub enum RoleError {
    #[error("unknown role: {0}")]
    UnknownRole(String),
    #[error("unknown tool: {0}")]
    UnknownTool(String),
    #[error("invalid role catalog: {0}")]
    Invalid(String),
    #[error("role catalog parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("io error loading role catalog: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize)]
struct RawRole {
    name: String,
    tier: u8,
    #[allow(dead_code)]
    purpose: String,
    prompt: String,
    readable: Vec<String>,
    writable: Vec<String>,
    appendable: Vec<String>,
    tools: Vec<String>,
    subagents: Vec<String>,
    log: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawCatalog {
    #[serde(rename = "role")]
    roles: Vec<RawRole>,
}

/// Immutable catalog of agent profiles, keyed by role id.
#[derive(Debug, Clone)]
pub struct RoleCatalog {
    profiles: BTreeMap<String, AgentProfile>,
    logs: BTreeMap<String, BusPath>,
}

impl RoleCatalog {
    /// The embedded default catalog.
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_ROLES_TOML, builtin_prompt)
            .expect("embedded role catalog is valid")
    }

    /// Load a catalog from disk; prompt paths resolve relative to the
    /// catalog file's directory.
    pub fn load(path: &Path) -> Result<Self, RoleError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, move |rel| {
            std::fs::read_to_string(base.join(rel)).ok()
        })
    }

    fn from_toml(
        text: &str,
        mut prompt_source: impl FnMut(&str) -> Option<String>,
    ) -> Result<Self, RoleError> {
        let raw: RawCatalog = toml::from_str(text)?;
        let mut profiles = BTreeMap::new();
        let mut logs = BTreeMap::new();
        for role in &raw.roles {
            if profiles.contains_key(&role.name) {
                return Err(RoleError::Invalid(format!(
                    "duplicate role id {:?}",
                    role.name
                )));
            }
            if !matches!(role.tier, 1 | 2) {
                return Err(RoleError::Invalid(format!(
                    "role {:?} has tier {}, catalog roles must be tier 1 or 2",
                    role.name, role.tier
                )));
            }
            if role.tier == 2 && !role.subagents.is_empty() {
                return Err(RoleError::Invalid(format!(
                    "tier-2 role {:?} must not declare subagents",
                    role.name
                )));
            }
            for tool in &role.tools {
                if !NATIVE_TOOL_IDS.contains(&tool.as_str()) {
                    return Err(RoleError::UnknownTool(tool.clone()));
                }
            }
            for pattern in role
                .readable
                .iter()
                .chain(&role.writable)
                .chain(&role.appendable)
            {
                PathPattern::parse(pattern).map_err(|e| {
                    RoleError::Invalid(format!(
                        "role {:?} scope pattern {pattern:?}: {e}",
                        role.name
                    ))
                })?;
            }
            let system_directive = prompt_source(&role.prompt).ok_or_else(|| {
                RoleError::Invalid(format!(
                    "role {:?}: prompt asset {:?} not found",
                    role.name, role.prompt
                ))
            })?;
            if let Some(log) = &role.log {
                let log_path = BusPath::parse(log)
                    .map_err(|e| RoleError::Invalid(format!("log path {log:?}: {e}")))?;
                if !role.appendable.iter().any(|a| a == log) {
                    return Err(RoleError::Invalid(format!(
                        "role {:?}: log {log:?} must be in its appendable set",
                        role.name
                    )));
                }
                logs.insert(role.name.clone(), log_path);
            }
            profiles.insert(
                role.name.clone(),
                AgentProfile {
                    role_id: role.name.clone(),
                    tier: role.tier,
                    scope: PermissionScope {
                        readable: role.readable.clone(),
                        writable: role.writable.clone(),
                        appendable: role.appendable.clone(),
                    },
                    tool_ids: role.tools.clone(),
                    subagent_role_ids: role.subagents.clone(),
                    backend_binding: "default".into(),
                    system_directive,
                },
            );
        }
        let catalog = RoleCatalog { profiles, logs };
        catalog.validate()?;
        Ok(catalog)
    }

    fn validate(&self) -> Result<(), RoleError> {
        for canonical in CANONICAL_TIER1_ROLES {
            match self.profiles.get(canonical) {
                Some(p) if p.tier == 1 => {}
                Some(_) => {
                    return Err(RoleError::Invalid(format!(
                        "canonical role {canonical:?} must be tier 1"
                    )))
                }
                None => {
                    return Err(RoleError::Invalid(format!(
                        "canonical role {canonical:?} missing"
                    )))
                }
            }
        }
        match self.profiles.get(SUBAGENT_ROLE) {
            Some(p) if p.tier == 2 => {
                if !p.scope.writable.is_empty() || !p.scope.appendable.is_empty() {
                    return Err(RoleError::Invalid(
                        "subagent template must be read-only".into(),
                    ));
                }
            }
            _ => {
                return Err(RoleError::Invalid(format!(
                    "tier-2 template {SUBAGENT_ROLE:?} missing"
                )))
            }
        }
        for profile in self.profiles.values() {
            for sub in &profile.subagent_role_ids {
                match self.profiles.get(sub) {
                    Some(p) if p.tier == 2 => {}
                    _ => {
                        return Err(RoleError::Invalid(format!(
                            "role {:?} lists non-tier-2 subagent {sub:?}",
                            profile.role_id
                        )))
                    }
                }
            }
        }

        let tier1: Vec<&AgentProfile> = self
            .profiles
            .values()
            .filter(|p| p.tier == 1)
            .collect();
        for (i, a) in tier1.iter().enumerate() {
            for b in tier1.iter().skip(i + 1) {
                if let Some((pa, pb)) = write_scope_overlap(&a.scope, &b.scope) {
                    return Err(RoleError::Invalid(format!(
                        "write scopes of {:?} and {:?} overlap: {pa} vs {pb}",
                        a.role_id, b.role_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, role_id: &str) -> Result<&AgentProfile, RoleError> {
        self.profiles
            .get(role_id)
            .ok_or_else(|| RoleError::UnknownRole(role_id.to_string()))
    }

    pub fn scope_for_role(&self, role_id: &str) -> Result<PermissionScope, RoleError> {
        Ok(self.get(role_id)?.scope.clone())
    }

    pub fn tier1_roles(&self) -> impl Iterator<Item = &AgentProfile> {
        self.profiles.values().filter(|p| p.tier == 1)
    }

    pub fn role_ids(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    /// Iteration log path for roles that keep one.
    pub fn log_path(&self, role_id: &str) -> Option<&BusPath> {
        self.logs.get(role_id)
    }

    /// Instantiate a Generic Helper from the helper template: a fresh
    /// tier-1 profile with a unique role id, read-only scope, and the
    /// requested extra tools on top of the template's defaults.
    pub fn make_helper(
        &self,
        purpose: &str,
        extra_tools: &[&str],
    ) -> Result<AgentProfile, RoleError> {
        if purpose.trim().is_empty() {
            return Err(RoleError::Invalid("helper purpose must be non-empty".into()));
        }
        static HELPER_COUNTER: AtomicU64 = AtomicU64::new(1);
        let template = self.get("helper")?;
        let mut tool_ids = template.tool_ids.clone();
        for tool in extra_tools {
            if !NATIVE_TOOL_IDS.contains(tool) {
                return Err(RoleError::UnknownTool(tool.to_string()));
            }
            if !tool_ids.iter().any(|t| t == tool) {
                tool_ids.push(tool.to_string());
            }
        }
        let n = HELPER_COUNTER.fetch_add(1, Ordering::SeqCst);
        let mut profile = template.clone();
        profile.role_id = format!("helper-{n}");
        profile.tool_ids = tool_ids;
        profile.system_directive = format!(
            "{}\n\nPurpose of this helper: {purpose}\n",
            template.system_directive.trim_end()
        );
        Ok(profile)
    }
}

/// The orchestrator's scope: the full user surface is writable, so region
/// append-only rules are the only brake on it.
pub fn tier0_scope(regions: &RegionConfig) -> PermissionScope {
    PermissionScope {
        readable: vec!["*".into()],
        writable: regions
            .prefixes()
            .iter()
            .map(|p| format!("{p}/"))
            .collect(),
        appendable: Vec::new(),
    }
}

/// Build the orchestrator profile. Tool ids cover the native tools plus
/// each registered specialist; `spawn` stays a tier-1 right, the
/// orchestrator delegates through specialists instead.
/// Register every tier-1 specialist from the catalog as an agent-kind
/// tool. Returns the minted descriptors in catalog order.
pub fn register_specialists_into(
    registry: &mut crate::agent::ToolRegistry,
    catalog: &RoleCatalog,
) -> Result<Vec<crate::agent::ToolDescriptor>, crate::agent::AgentError> {
    catalog
        .tier1_roles()
        .map(|profile| crate::agent::register_agent_as_tool(registry, profile))
        .collect()
}

pub fn tier0_profile(
    regions: &RegionConfig,
    specialist_ids: &[String],
    system_directive: String,
) -> AgentProfile {
    let mut tool_ids: Vec<String> = NATIVE_TOOL_IDS
        .iter()
        .filter(|t| **t != "spawn")
        .map(|s| s.to_string())
        .collect();
    tool_ids.extend(specialist_ids.iter().cloned());
    AgentProfile {
        role_id: TIER0_ROLE.into(),
        tier: 0,
        scope: tier0_scope(regions),
        tool_ids,
        subagent_role_ids: Vec::new(),
        backend_binding: "default".into(),
        system_directive,
    }
}

fn write_scope_overlap(
    a: &PermissionScope,
    b: &PermissionScope,
) -> Option<(PathPattern, PathPattern)> {
    let collect = |s: &PermissionScope| -> Vec<PathPattern> {
        s.writable
            .iter()
            .chain(&s.appendable)
            .filter_map(|p| PathPattern::parse(p).ok())
            .collect()
    };
    for pa in collect(a) {
        for pb in collect(b) {
            if patterns_overlap(&pa, &pb) {
                return Some((pa, pb));
            }
        }
    }
    None
}

/// Two patterns overlap when some path matches both.
pub fn patterns_overlap(a: &PathPattern, b: &PathPattern) -> bool {
    match (a, b) {
        (PathPattern::Exact(x), PathPattern::Exact(y)) => x == y,
        (PathPattern::Prefix(d), PathPattern::Exact(e))
        | (PathPattern::Exact(e), PathPattern::Prefix(d)) => {
            if d.is_empty() {
                return true;
            }
            match (BusPath::parse(e), BusPath::parse(d)) {
                (Ok(e), Ok(d)) => e.starts_with_dir(&d),
                _ => false,
            }
        }
        (PathPattern::Prefix(x), PathPattern::Prefix(y)) => {
            if x.is_empty() || y.is_empty() {
                return true;
            }
            match (BusPath::parse(x), BusPath::parse(y)) {
                (Ok(x), Ok(y)) => x.starts_with_dir(&y) || y.starts_with_dir(&x),
                _ => false,
            }
        }
    }
}

fn builtin_prompt(rel: &str) -> Option<String> {
    let text = match rel {
        "prompts/comprehension.md" => include_str!("../assets/prompts/comprehension.md"),
        "prompts/prioritization.md" => include_str!("../assets/prompts/prioritization.md"),
        "prompts/implementation.md" => include_str!("../assets/prompts/implementation.md"),
        "prompts/experimentation.md" => include_str!("../assets/prompts/experimentation.md"),
        "prompts/helper.md" => include_str!("../assets/prompts/helper.md"),
        "prompts/subagent.md" => include_str!("../assets/prompts/subagent.md"),
        _ => return None,
    };
    Some(text.to_string())
}

/// How the implementation specialist is being asked to work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImplementationMode {
    /// Build the codebase from scratch.
    #[default]
    Full,
    /// Patch the existing codebase.
    Fix,
}

impl ImplementationMode {
    pub fn parse(s: &str) -> Result<Self, RoleError> {
        match s {
            "full" => Ok(ImplementationMode::Full),
            "fix" => Ok(ImplementationMode::Fix),
            other => Err(RoleError::Invalid(format!(
                "mode must be \"full\" or \"fix\", got {other:?}"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ImplementationMode::Full => "full",
            ImplementationMode::Fix => "fix",
        }
    }
}

/// One entry of an iteration log (`agent/impl_log.md`, `agent/exp_log.md`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationLogEntry {
    pub iteration: u64,
    pub role: String,
    pub timestamp: String,
    pub body: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogFormatError {
    #[error("log entry body must be non-empty")]
    EmptyBody,
    #[error("line {line}: malformed entry header: {text:?}")]
    BadHeader { line: usize, text: String },
    #[error("iteration numbers must strictly increase: {prev} then {next}")]
    NonIncreasing { prev: u64, next: u64 },
    #[error("content before the first entry header")]
    LeadingGarbage,
}

/// Render one log entry: a header line, the body, and a blank line.
pub fn format_log_entry(entry: &IterationLogEntry) -> Result<String, LogFormatError> {
    if entry.body.trim().is_empty() {
        return Err(LogFormatError::EmptyBody);
    }
    let body = entry.body.trim_end_matches('\n');
    Ok(format!(
        "## iteration {} — {} — {}\n{body}\n\n",
        entry.iteration, entry.role, entry.timestamp
    ))
}

/// Parse a whole log file back into entries. The inverse of
/// [`format_log_entry`] over concatenations of well-formed entries.
pub fn parse_log(text: &str) -> Result<Vec<IterationLogEntry>, LogFormatError> {
    let mut entries: Vec<IterationLogEntry> = Vec::new();
    let mut body_lines: Vec<&str> = Vec::new();
    let mut current: Option<(u64, String, String)> = None;

    let finalize = |header: Option<(u64, String, String)>,
                        body_lines: &mut Vec<&str>,
                        entries: &mut Vec<IterationLogEntry>|
     -> Result<(), LogFormatError> {
        if let Some((iteration, role, timestamp)) = header {
            if let Some(prev) = entries.last() {
                if iteration <= prev.iteration {
                    return Err(LogFormatError::NonIncreasing {
                        prev: prev.iteration,
                        next: iteration,
                    });
                }
            }
            let body = body_lines.join("\n");
            let body = body.trim_end_matches('\n').to_string();
            if body.trim().is_empty() {
                return Err(LogFormatError::EmptyBody);
            }
            entries.push(IterationLogEntry {
                iteration,
                role,
                timestamp,
                body,
            });
        }
        body_lines.clear();
        Ok(())
    };

    for (idx, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix("## iteration ") {
            let parts: Vec<&str> = rest.split(" — ").collect();
            if parts.len() != 3 {
                return Err(LogFormatError::BadHeader {
                    line: idx + 1,
                    text: line.to_string(),
                });
            }
            let iteration = parts[0].parse::<u64>().map_err(|_| LogFormatError::BadHeader {
                line: idx + 1,
                text: line.to_string(),
            })?;
            finalize(current.take(), &mut body_lines, &mut entries)?;
            current = Some((iteration, parts[1].to_string(), parts[2].to_string()));
        } else if current.is_some() {
            body_lines.push(line);
        } else if !line.trim().is_empty() {
            return Err(LogFormatError::LeadingGarbage);
        }
    }
    finalize(current.take(), &mut body_lines, &mut entries)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::perm::{check_permission, AccessKind, Decision};
    use proptest::prelude::*;

    #[test]
    fn builtin_catalog_has_canonical_roles_and_template() {
        let catalog = RoleCatalog::builtin();
        for role in CANONICAL_TIER1_ROLES {
            assert_eq!(catalog.get(role).unwrap().tier, 1, "{role}");
        }
        let sub = catalog.get(SUBAGENT_ROLE).unwrap();
        assert_eq!(sub.tier, 2);
        assert!(sub.subagent_role_ids.is_empty());
        assert!(sub.scope.writable.is_empty());
    }

    #[test]
    fn scope_table_matches_roles() {
        let catalog = RoleCatalog::builtin();
        let regions = RegionConfig::default_config();
        let p = |s: &str| BusPath::parse(s).unwrap();

        let comp = catalog.scope_for_role("comprehension").unwrap();
        assert!(check_permission(&comp, &regions, AccessKind::Overwrite, &p("paper_analysis/x.md")).is_allow());
        assert!(!check_permission(&comp, &regions, AccessKind::Overwrite, &p("submission/x.py")).is_allow());

        let pri = catalog.scope_for_role("prioritization").unwrap();
        assert!(check_permission(&pri, &regions, AccessKind::Overwrite, &p("agent/plan.md")).is_allow());
        assert!(check_permission(&pri, &regions, AccessKind::Overwrite, &p("agent/prioritized_tasks.md")).is_allow());
        assert!(!check_permission(&pri, &regions, AccessKind::Overwrite, &p("agent/other.md")).is_allow());

        let imp = catalog.scope_for_role("implementation").unwrap();
        assert!(check_permission(&imp, &regions, AccessKind::CreateFile, &p("submission/main.py")).is_allow());
        assert!(check_permission(&imp, &regions, AccessKind::Append, &p("agent/impl_log.md")).is_allow());
        assert_eq!(
            check_permission(&imp, &regions, AccessKind::Overwrite, &p("agent/impl_log.md")),
            Decision::Deny(crate::bus::perm::DenyReason::AppendOnlyViolation)
        );

        let exp = catalog.scope_for_role("experimentation").unwrap();
        assert!(check_permission(&exp, &regions, AccessKind::CreateFile, &p("agent/experiments/r1/out.json")).is_allow());
        assert!(check_permission(&exp, &regions, AccessKind::Append, &p("agent/exp_log.md")).is_allow());
        assert!(!check_permission(&exp, &regions, AccessKind::Overwrite, &p("submission/main.py")).is_allow());

        let helper = catalog.scope_for_role("helper").unwrap();
        assert!(helper.writable.is_empty() && helper.appendable.is_empty());
    }

    #[test]
    fn tier1_write_scopes_are_pairwise_disjoint() {
        let catalog = RoleCatalog::builtin();
        let tier1: Vec<_> = catalog.tier1_roles().collect();
        assert_eq!(tier1.len(), 5);
        for (i, a) in tier1.iter().enumerate() {
            for b in tier1.iter().skip(i + 1) {
                assert!(
                    write_scope_overlap(&a.scope, &b.scope).is_none(),
                    "{} and {} overlap",
                    a.role_id,
                    b.role_id
                );
            }
        }
    }

    #[test]
    fn overlapping_catalog_is_rejected() {
        let bad = BUILTIN_ROLES_TOML.replace(
            r#"writable = ["agent/experiments/"]"#,
            r#"writable = ["agent/experiments/", "submission/"]"#,
        );
        let err = RoleCatalog::from_toml(&bad, builtin_prompt).unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");
    }

    #[test]
    fn log_paths_are_appendable_and_region_append_only() {
        let catalog = RoleCatalog::builtin();
        let regions = RegionConfig::default_config();
        for role in ["implementation", "experimentation"] {
            let log = catalog.log_path(role).unwrap();
            assert!(regions.is_append_only(log), "{role} log not append-only");
        }
        assert!(catalog.log_path("comprehension").is_none());
    }

    #[test]
    fn make_helper_yields_unique_read_only_tier1_profiles() {
        let catalog = RoleCatalog::builtin();
        let h1 = catalog.make_helper("check dataset layout", &[]).unwrap();
        let h2 = catalog.make_helper("verify citation", &["shell"]).unwrap();
        assert_ne!(h1.role_id, h2.role_id);
        assert_eq!(h1.tier, 1);
        assert!(h1.scope.writable.is_empty());
        assert!(h2.tool_ids.iter().any(|t| t == "shell"));
        assert!(!h1.tool_ids.iter().any(|t| t == "shell"));
        assert!(h2.system_directive.contains("verify citation"));
        assert!(catalog.make_helper("", &[]).is_err());
        assert!(matches!(
            catalog.make_helper("x", &["teleport"]),
            Err(RoleError::UnknownTool(_))
        ));
    }

    #[test]
    fn implementation_mode_parses() {
        assert_eq!(ImplementationMode::parse("full").unwrap(), ImplementationMode::Full);
        assert_eq!(ImplementationMode::parse("fix").unwrap(), ImplementationMode::Fix);
        assert!(ImplementationMode::parse("partial").is_err());
    }

    #[test]
    fn log_entry_formats_and_parses_back() {
        let entry = IterationLogEntry {
            iteration: 3,
            role: "experimentation".into(),
            timestamp: "2026-01-01T00:00:12Z".into(),
            body: "ran reproduce.sh\nmetric=0.5000000000".into(),
        };
        let text = format_log_entry(&entry).unwrap();
        assert!(text.starts_with("## iteration 3 — experimentation — 2026-01-01T00:00:12Z\n"));
        assert!(text.ends_with("\n\n"));
        let parsed = parse_log(&text).unwrap();
        assert_eq!(parsed, vec![entry]);
    }

    #[test]
    fn log_parser_rejects_disorder_and_garbage() {
        let a = format_log_entry(&IterationLogEntry {
            iteration: 2,
            role: "implementation".into(),
            timestamp: "t1".into(),
            body: "first".into(),
        })
        .unwrap();
        let b = format_log_entry(&IterationLogEntry {
            iteration: 2,
            role: "implementation".into(),
            timestamp: "t2".into(),
            body: "second".into(),
        })
        .unwrap();
        assert_eq!(
            parse_log(&format!("{a}{b}")),
            Err(LogFormatError::NonIncreasing { prev: 2, next: 2 })
        );
        assert_eq!(parse_log("stray text\n"), Err(LogFormatError::LeadingGarbage));
        assert!(format_log_entry(&IterationLogEntry {
            iteration: 1,
            role: "x".into(),
            timestamp: "t".into(),
            body: "  ".into(),
        })
        .is_err());
    }

    proptest! {
        #[test]
        fn log_round_trip_identity(
            entries in proptest::collection::vec(
                ("[a-z]{1,12}", "[ -~]{1,40}", proptest::collection::vec("[a-zA-Z0-9 .,=_-]{1,60}", 1..4)),
                1..8,
            )
        ) {
            let entries: Vec<IterationLogEntry> = entries
                .into_iter()
                .enumerate()
                .map(|(i, (role, ts, body))| IterationLogEntry {
                    iteration: (i as u64 + 1) * 2,
                    role,
                    timestamp: ts.replace(" — ", "-"),
                    body: body.join("\n"),
                })
                .filter(|e| !e.body.trim().is_empty())
                .collect();
            prop_assume!(!entries.is_empty());
            let mut text = String::new();
            for entry in &entries {
                text.push_str(&format_log_entry(entry).unwrap());
            }
            let parsed = parse_log(&text).unwrap();
            prop_assert_eq!(parsed, entries);
        }
    }

    #[test]
    fn tier0_profile_covers_all_tools_and_surface() {
        let regions = RegionConfig::default_config();
        let profile = tier0_profile(
            &regions,
            &["implementation".to_string()],
            "orchestrate".into(),
        );
        assert_eq!(profile.tier, 0);
        assert!(profile.tool_ids.iter().any(|t| t == "shell"));
        assert!(profile.tool_ids.iter().any(|t| t == "implementation"));
        let scope = &profile.scope;
        let p = |s: &str| BusPath::parse(s).unwrap();
        assert!(check_permission(scope, &regions, AccessKind::Overwrite, &p("agent/plan.md")).is_allow());
        assert_eq!(
            check_permission(scope, &regions, AccessKind::Overwrite, &p("agent/exp_log.md")),
            Decision::Deny(crate::bus::perm::DenyReason::AppendOnlyViolation)
        );
        assert!(check_permission(scope, &regions, AccessKind::Append, &p("agent/exp_log.md")).is_allow());
    }
}
