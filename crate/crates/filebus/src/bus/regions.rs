//! Region configuration: the role-aligned areas of the workspace and the
//! paths that are append-only for everyone.

use crate::path::{BusPath, PathPattern};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The three canonical regions every workspace carries.
pub const CANONICAL_REGIONS: [&str; 3] = ["paper_analysis", "submission", "agent"];

/// Directory preserved for detailed experiment outputs, created at init.
pub const EXPERIMENTS_DIR: &str = "agent/experiments";

/// Internal bookkeeping areas. These hold the audit trail, its payload
/// blobs, and engine state; they are not part of the audited artifact tree
/// and never appear in workspace maps or tree digests.
pub const INTERNAL_AREAS: [&str; 3] = ["agent/.audit", "agent/.audit_blobs", "agent/.engine"];

pub const AUDIT_LOG_PATH: &str = "agent/.audit/audit.log";
pub const REVISIONS_LOG_PATH: &str = "agent/.audit/revisions.log";
pub const BLOB_DIR: &str = "agent/.audit_blobs";
pub const TRACE_LOG_PATH: &str = "agent/.engine/trace.log";

#[derive(Debug, Error)]
pub enum RegionConfigError {
    #[error("invalid region config: {0}")]
    Invalid(String),
    #[error("region config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("io error reading region config: {0}")]
    Io(#[from] std::io::Error),
}

/// One role-aligned artifact region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionDescriptor {
    /// Directory prefix, stored without trailing slash.
    pub prefix: String,
    /// Free-text role label shown in workspace maps.
    pub purpose: String,
    /// Paths under this region that may only grow.
    #[serde(default)]
    pub append_only: Vec<String>,
}

/// Declarative region configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionConfig {
    #[serde(rename = "region")]
    pub regions: Vec<RegionDescriptor>,
}

impl RegionConfig {
    /// Built-in default: the three canonical regions with the shared logs
    /// and the run trace marked append-only.
    pub fn default_config() -> Self {
        let cfg: RegionConfig =
            toml::from_str(DEFAULT_REGIONS_TOML).expect("built-in region config parses");
        cfg.validate().expect("built-in region config is valid");
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self, RegionConfigError> {
        let cfg: RegionConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RegionConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Region prefixes must be valid paths and non-overlapping: no prefix
    /// may sit beneath another.
    pub fn validate(&self) -> Result<(), RegionConfigError> {
        if self.regions.is_empty() {
            return Err(RegionConfigError::Invalid("no regions declared".into()));
        }
        let mut prefixes = Vec::new();
        for r in &self.regions {
            let p = BusPath::parse(r.prefix.trim_end_matches('/'))
                .map_err(|e| RegionConfigError::Invalid(format!("prefix {:?}: {e}", r.prefix)))?;
            prefixes.push(p);
            for ap in &r.append_only {
                BusPath::parse(ap).map_err(|e| {
                    RegionConfigError::Invalid(format!("append-only path {ap:?}: {e}"))
                })?;
            }
        }
        for (i, a) in prefixes.iter().enumerate() {
            for (j, b) in prefixes.iter().enumerate() {
                if i != j && a.starts_with_dir(b) {
                    return Err(RegionConfigError::Invalid(format!(
                        "region prefixes overlap: {a} is under {b}"
                    )));
                }
            }
        }
        for canonical in CANONICAL_REGIONS {
            if !prefixes.iter().any(|p| p.as_str() == canonical) {
                return Err(RegionConfigError::Invalid(format!(
                    "canonical region missing: {canonical}/"
                )));
            }
        }
        Ok(())
    }

    /// True when `path` is covered by any region's append-only set.
    pub fn is_append_only(&self, path: &BusPath) -> bool {
        self.regions.iter().any(|r| {
            r.append_only.iter().any(|ap| {
                PathPattern::parse(ap).map(|p| p.matches(path)).unwrap_or(false)
            })
        })
    }

    /// Region prefixes in declaration order, without trailing slash.
    pub fn prefixes(&self) -> Vec<BusPath> {
        self.regions
            .iter()
            .filter_map(|r| BusPath::parse(r.prefix.trim_end_matches('/')).ok())
            .collect()
    }

    pub fn purpose_of(&self, prefix: &BusPath) -> Option<&str> {
        self.regions
            .iter()
            .find(|r| r.prefix.trim_end_matches('/') == prefix.as_str())
            .map(|r| r.purpose.as_str())
    }
}

/// True for paths inside the internal bookkeeping areas.
pub fn is_internal(path: &BusPath) -> bool {
    INTERNAL_AREAS.iter().any(|area| {
        let a = BusPath::parse(area).expect("internal area paths are valid");
        path.starts_with_dir(&a)
    })
}

const DEFAULT_REGIONS_TOML: &str = r#"
[[region]]
prefix = "paper_analysis/"
purpose = "structured paper understanding, target metrics, ambiguities"

[[region]]
prefix = "submission/"
purpose = "runnable reproduction repository and reproduce.sh entry point"

[[region]]
prefix = "agent/"
purpose = "plans, iteration logs, and experiment outputs"
append_only = [
    "agent/impl_log.md",
    "agent/exp_log.md",
    "agent/.engine/trace.log",
]
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_covers_logs() {
        let cfg = RegionConfig::default_config();
        assert_eq!(cfg.regions.len(), 3);
        for p in [
            "agent/impl_log.md",
            "agent/exp_log.md",
            "agent/.engine/trace.log",
        ] {
            assert!(cfg.is_append_only(&BusPath::parse(p).unwrap()), "{p}");
        }
        assert!(!cfg.is_append_only(&BusPath::parse("agent/plan.md").unwrap()));
    }

    #[test]
    fn overlapping_prefixes_rejected() {
        let bad = r#"
[[region]]
prefix = "paper_analysis/"
purpose = "a"
[[region]]
prefix = "submission/"
purpose = "b"
[[region]]
prefix = "agent/"
purpose = "c"
[[region]]
prefix = "agent/experiments/"
purpose = "d"
"#;
        assert!(RegionConfig::from_toml(bad).is_err());
    }

    #[test]
    fn missing_canonical_region_rejected() {
        let bad = r#"
[[region]]
prefix = "paper_analysis/"
purpose = "a"
"#;
        assert!(RegionConfig::from_toml(bad).is_err());
    }

    #[test]
    fn internal_areas_detected() {
        assert!(is_internal(&BusPath::parse("agent/.audit/audit.log").unwrap()));
        assert!(is_internal(&BusPath::parse("agent/.audit_blobs/ab12").unwrap()));
        assert!(is_internal(&BusPath::parse("agent/.engine/trace.log").unwrap()));
        assert!(!is_internal(&BusPath::parse("agent/exp_log.md").unwrap()));
        assert!(!is_internal(&BusPath::parse("agent/experiments/x").unwrap()));
    }
}
