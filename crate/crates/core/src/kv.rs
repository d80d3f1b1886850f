//! Flat `key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Every key must be consumed by the reader, so unknown keys are reported.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("key {key:?}: cannot parse {value:?}: {message}")]
    Value {
        key: String,
        value: String,
        message: String,
    },
    #[error("missing required key {0:?}")]
    Missing(String),
    #[error("unknown key(s): {}", .0.join(", "))]
    Unknown(Vec<String>),
}

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    entries: BTreeMap<String, String>,
    taken: std::collections::BTreeSet<String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| KvError::Syntax {
                line: i + 1,
                text: raw.to_owned(),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(KvError::Syntax {
                    line: i + 1,
                    text: raw.to_owned(),
                });
            }
            if entries.insert(key.to_owned(), v.trim().to_owned()).is_some() {
                return Err(KvError::Duplicate {
                    line: i + 1,
                    key: key.to_owned(),
                });
            }
        }
        Ok(KvFile {
            entries,
            taken: Default::default(),
        })
    }

    pub fn raw(&mut self, key: &str) -> Option<String> {
        self.taken.insert(key.to_owned());
        self.entries.get(key).cloned()
    }

    pub fn get<T>(&mut self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| KvError::Value {
                key: key.to_owned(),
                value: v.clone(),
                message: e.to_string(),
            }),
        }
    }

    pub fn get_or<T>(&mut self, key: &str, default: T) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T>(&mut self, key: &str) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| KvError::Missing(key.to_owned()))
    }

    /// Comma-separated list.
    pub fn get_list<T>(&mut self, key: &str) -> Result<Option<Vec<T>>, KvError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e: T::Err| KvError::Value {
                    key: key.to_owned(),
                    value: s.to_owned(),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Fails if any key was never read.
    pub fn finish(self) -> Result<(), KvError> {
        let unknown: Vec<String> = self
            .entries
            .keys()
            .filter(|k| !self.taken.contains(*k))
            .cloned()
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(KvError::Unknown(unknown))
        }
    }
}
