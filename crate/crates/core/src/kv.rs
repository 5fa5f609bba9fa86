//! Flat `key = value` text format used for configuration and artifact
//! sidecars.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment
//! section.key = value
//! ```
//!
//! Keys are dotted identifiers; values run to the end of the line with
//! surrounding whitespace trimmed. Blank lines and lines starting with `#`
//! are ignored. Later entries override earlier ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut kv = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i as u64 + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-')
            {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i as u64 + 1,
                    message: format!("invalid key `{key}`"),
                });
            }
            kv.set(key, value.trim());
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Overlay `other` on top of `self`.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::invalid(format!("`{key}` = `{v}`: {e}"))),
        }
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Comma-separated list value.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>()
                        .map_err(|e| Error::invalid(format!("`{key}` item `{s}`: {e}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

impl std::fmt::Display for KeyValues {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        f.write_str(&out)
    }
}

/// Decimal text with 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}
