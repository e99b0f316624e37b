//! Flat `key = value` text format used by configs and manifests.
//!
//! One assignment per line, `#` starts a comment, keys are bare identifiers.
//! Values are stored verbatim; typed accessors parse on demand. Flat keys keep
//! manifests diffable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// An ordered flat key-value document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: BTreeMap<String, String>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    row: lineno + 1,
                    msg: format!("expected `key = value`, got {line:?}"),
                });
            };
            let key = key.trim().to_string();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    row: lineno + 1,
                    msg: format!("invalid key {key:?}"),
                });
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    /// Parse a typed value; records an entry in `problems` instead of failing.
    pub fn take_parsed<T: std::str::FromStr>(
        &self,
        key: &str,
        default: Option<T>,
        problems: &mut Vec<String>,
    ) -> Option<T> {
        match self.get(key) {
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => Some(v),
                Err(_) => {
                    problems.push(format!("{key}: cannot parse {raw:?}"));
                    None
                }
            },
            None => {
                if default.is_none() {
                    problems.push(format!("{key}: missing"));
                }
                default
            }
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}
