//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, keys are
//! `snake_case`. This format is shared by the CLI, the augmentation
//! config, and the schedule presets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("missing required config key `{key}`")]
    MissingKey { key: String },
    #[error("config key `{key}`: invalid value `{value}`")]
    InvalidValue { key: String, value: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Parsed key=value configuration. Keys are kept sorted so the canonical
/// text rendering (and therefore the config hash) is stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    pairs: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{raw}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Parse {
                    line: idx + 1,
                    msg: "empty key".into(),
                });
            }
            pairs.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { pairs })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.pairs.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Typed lookup; `None` when the key is absent.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.get_parsed(key)?
            .ok_or_else(|| ConfigError::MissingKey { key: key.to_string() })
    }

    /// Reject any key outside `allowed`.
    pub fn validate_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for key in self.pairs.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey { key: key.clone() });
            }
        }
        Ok(())
    }

    /// Canonical text form: sorted keys, one `key = value` per line.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hash of the canonical form, used to stamp artifacts with the exact
    /// configuration that produced them.
    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_text().as_bytes()))
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
