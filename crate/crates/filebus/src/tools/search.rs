//! Search tool provider.
//!
//! The default provider is a local fixture: a TOML table mapping query
//! strings to canned result text, so tests and scripted runs never touch
//! the network. Selecting no provider yields `ProviderUnavailable` on
//! every query.

use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("no search provider configured")]
    ProviderUnavailable,
    #[error("search fixture parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("search fixture io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize)]
struct FixtureFile {
    queries: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub enum SearchProvider {
    /// Query → canned result text.
    Fixture(BTreeMap<String, String>),
    Unset,
}

impl SearchProvider {
    pub fn from_fixture_toml(text: &str) -> Result<Self, SearchError> {
        let file: FixtureFile = toml::from_str(text)?;
        Ok(SearchProvider::Fixture(file.queries))
    }

    pub fn load_fixture(path: &Path) -> Result<Self, SearchError> {
        Self::from_fixture_toml(&std::fs::read_to_string(path)?)
    }

    /// Run a query. A fixture miss is an empty result, not an error.
    pub fn search(&self, query: &str) -> Result<Option<String>, SearchError> {
        match self {
            SearchProvider::Fixture(map) => Ok(map.get(query).cloned()),
            SearchProvider::Unset => Err(SearchError::ProviderUnavailable),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"
[queries]
"column mean" = "The mean of a column is the sum divided by the count."
"csv parsing" = "Use the csv module."
"#;

    #[test]
    fn known_query_returns_canned_text() {
        let provider = SearchProvider::from_fixture_toml(FIXTURE).unwrap();
        let hit = provider.search("column mean").unwrap();
        assert_eq!(
            hit.as_deref(),
            Some("The mean of a column is the sum divided by the count.")
        );
    }

    #[test]
    fn unknown_query_is_an_empty_success() {
        let provider = SearchProvider::from_fixture_toml(FIXTURE).unwrap();
        assert_eq!(provider.search("nonsense").unwrap(), None);
    }

    #[test]
    fn unset_provider_is_unavailable() {
        assert!(matches!(
            SearchProvider::Unset.search("anything"),
            Err(SearchError::ProviderUnavailable)
        ));
    }
}
