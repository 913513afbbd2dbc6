//! A small `key = value` text format used for model files, truth sidecars
//! and run manifests.
//!
//! One entry per line, keys are kept in insertion order, `#` starts a
//! comment line. Lists are comma separated. Floats are written with Rust's
//! shortest round-trip representation, so writing and reading back is
//! lossless.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDocument {
    entries: Vec<(String, String)>,
}

impl KvDocument {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_list(&mut self, key: &str, values: &[f64]) {
        let joined = values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.set(key, joined);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::InvalidInput(format!("missing key `{key}`")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|e| Error::InvalidInput(format!("key `{key}`: cannot parse `{raw}`: {e}")))
    }

    pub fn parse_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.require(key)?;
        if raw.trim().is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidInput(format!("key `{key}`: cannot parse `{s}`: {e}"))
                })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut doc = KvDocument::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (k, v) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            doc.set(k.trim(), v.trim());
        }
        Ok(doc)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text, path)
    }
}
