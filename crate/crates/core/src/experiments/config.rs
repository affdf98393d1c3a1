//! Flat key=value parameters. Later sources override earlier ones:
//! defaults, then the config file, then command-line flags.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params(pub BTreeMap<String, String>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value, got '{raw}'", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse(format!("config line {}: empty key", n + 1)));
            }
            out.insert(normalise_key(k), v.trim().to_string());
        }
        Ok(Params(out))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(normalise_key(key), value.into());
    }

    /// Entries of `other` override ours.
    pub fn overlay(&mut self, other: &Params) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.0.get(key).map(String::as_str).ok_or_else(|| Error::InvalidConfig(format!("missing parameter '{key}'")))
    }

    pub fn opt(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|s| !s.is_empty())
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.str(key)?)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.str(key)?;
        v.parse().map_err(|_| Error::Parse(format!("parameter '{key}': expected a non-negative integer, got '{v}'")))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        let v = self.str(key)?;
        v.parse().map_err(|_| Error::Parse(format!("parameter '{key}': expected a non-negative integer, got '{v}'")))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.str(key)? {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(Error::Parse(format!("parameter '{key}': expected true or false, got '{v}'"))),
        }
    }

    /// Comma-separated list of numbers.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.str(key)?.split(',').map(|t| parse_f64(key, t.trim())).collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.str(key)?
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| Error::Parse(format!("parameter '{key}': bad integer '{t}'"))))
            .collect()
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    match v {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => v.parse().map_err(|_| Error::Parse(format!("parameter '{key}': expected a number, got '{v}'"))),
    }
}

/// Config files may spell keys with underscores; flags use dashes.
fn normalise_key(k: &str) -> String {
    k.trim().replace('_', "-")
}
