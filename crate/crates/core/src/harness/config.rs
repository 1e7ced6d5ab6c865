//! Flat TOML documents used for run configuration.
//!
//! Every key sits at the top level; nested tables are rejected. A list key
//! also accepts a single scalar.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};

/// Conversion from a scalar TOML value.
pub trait FromValue: Sized {
    fn from_value(v: &Value) -> Option<Self>;
}

impl FromValue for usize {
    fn from_value(v: &Value) -> Option<Self> {
        v.as_integer().and_then(|i| usize::try_from(i).ok())
    }
}

impl FromValue for u64 {
    fn from_value(v: &Value) -> Option<Self> {
        v.as_integer().and_then(|i| u64::try_from(i).ok())
    }
}

impl FromValue for f64 {
    fn from_value(v: &Value) -> Option<Self> {
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl FromValue for String {
    fn from_value(v: &Value) -> Option<Self> {
        v.as_str().map(str::to_string)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KvDocument {
    path: PathBuf,
    entries: Table,
}

impl KvDocument {
    pub fn parse(text: &str, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
            path: path.clone(),
            message: e.message().to_string(),
        })?;
        let mut entries = Table::new();
        for (key, value) in table {
            if value.is_table() {
                return Err(Error::Config {
                    path,
                    message: format!("'{key}': nested tables are not supported"),
                });
            }
            let key = key.replace('-', "_");
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config {
                    path,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(Self { path, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn error(&self, message: String) -> Error {
        Error::Config {
            path: self.path.clone(),
            message,
        }
    }

    pub fn value<T: FromValue>(&self, key: &str) -> Result<Option<T>> {
        self.entries
            .get(key)
            .map(|v| {
                T::from_value(v).ok_or_else(|| self.error(format!("{key}: unexpected value {v}")))
            })
            .transpose()
    }

    pub fn string(&self, key: &str) -> Result<Option<String>> {
        self.value(key)
    }

    pub fn list<T: FromValue>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(raw) = self.entries.get(key) else {
            return Ok(None);
        };
        let items = match raw {
            Value::Array(items) => items.as_slice(),
            scalar => std::slice::from_ref(scalar),
        };
        items
            .iter()
            .map(|v| {
                T::from_value(v).ok_or_else(|| self.error(format!("{key}: unexpected item {v}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn flag(&self, key: &str) -> Result<Option<bool>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(self.error(format!("{key}: {v} is not a boolean"))),
        }
    }

    /// Fails on the first key outside `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(self.error(format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}
