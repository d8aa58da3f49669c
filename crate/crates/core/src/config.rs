//! Plain-text `key = value` configuration files.
//!
//! Every CLI command reads an optional config file in this format, applies
//! `--set key=value` overrides on top, and rejects keys it does not know.
//! The fully resolved map is echoed into each run's JSON report so results
//! stay reproducible from the report alone.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// An ordered `key -> value` map parsed from a config file and overrides.
#[derive(Debug, Clone, Default)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
}

impl KeyValueConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parameter(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parameter(format!("line {}: empty key", lineno + 1)));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Applies `key=value` override strings on top of the file contents.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for ov in overrides {
            let (key, value) = ov.split_once('=').ok_or_else(|| {
                Error::Parameter(format!("override `{ov}` is not of the form key=value"))
            })?;
            self.entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    /// Errors on the first key not present in `known`, naming it.
    pub fn reject_unknown_keys(&self, known: &[&str]) -> Result<()> {
        for key in self.entries.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::Parameter(format!(
                    "unknown config key `{key}` (known keys: {})",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Parameter(format!("config key `{key}`: cannot parse `{v}`"))),
        }
    }

    /// Parsed value or a default when the key is absent.
    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get_parsed(key)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let cfg = KeyValueConfig::parse("# header\n subjects = 20 \n\nseed=7\n").unwrap();
        assert_eq!(cfg.get("subjects"), Some("20"));
        assert_eq!(cfg.get("seed"), Some("7"));
    }

    #[test]
    fn rejects_unknown_key_by_name() {
        let cfg = KeyValueConfig::parse("subjcts = 20\n").unwrap();
        let err = cfg.reject_unknown_keys(&["subjects", "seed"]).unwrap_err();
        assert!(err.to_string().contains("subjcts"), "{err}");
    }

    #[test]
    fn overrides_win_over_file() {
        let mut cfg = KeyValueConfig::parse("seed = 1\n").unwrap();
        cfg.apply_overrides(&["seed=42".to_string()]).unwrap();
        assert_eq!(cfg.get_or::<u64>("seed", 0).unwrap(), 42);
    }

    #[test]
    fn malformed_line_is_an_error() {
        assert!(KeyValueConfig::parse("just a line\n").is_err());
    }
}
