//! Flat `key = value` configuration text.
//!
//! Blank lines and `#` comments are ignored; values are kept as trimmed
//! strings and converted on read. Arrays are comma separated.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("key `{key}`: cannot parse `{value}`")]
    Value { key: String, value: String },
    #[error("key `{key}`: expected {expected} values, found {found}")]
    Arity { key: String, expected: usize, found: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(KvError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(KvError::Syntax { line: i + 1 });
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(KvError::Duplicate { line: i + 1, key: key.to_string() });
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on the first key not contained in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<(), KvError> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(KvError::UnknownKey(k.to_string())),
            None => Ok(()),
        }
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| KvError::Value { key: key.to_string(), value: v.to_string() }),
        }
    }

    pub fn read_f64(&self, key: &str, slot: &mut f64) -> Result<(), KvError> {
        if let Some(v) = self.parse_value(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn read_array<const N: usize>(&self, key: &str, slot: &mut [f64; N]) -> Result<(), KvError> {
        let Some(v) = self.get(key) else {
            return Ok(());
        };
        let values = self.list(key, v)?;
        if values.len() != N {
            return Err(KvError::Arity { key: key.to_string(), expected: N, found: values.len() });
        }
        slot.copy_from_slice(&values);
        Ok(())
    }

    pub fn read_list(&self, key: &str) -> Result<Option<Vec<f64>>, KvError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => self.list(key, v).map(Some),
        }
    }

    fn list(&self, key: &str, v: &str) -> Result<Vec<f64>, KvError> {
        v.split(',')
            .map(|part| {
                part.trim().parse::<f64>().map_err(|_| KvError::Value { key: key.to_string(), value: v.to_string() })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_arrays() {
        let m = KvMap::parse("# header\nseed = 7 # inline\nrange = 1, 2.5\n\n").unwrap();
        assert_eq!(m.parse_value::<u64>("seed").unwrap(), Some(7));
        let mut r = [0.0; 2];
        m.read_array("range", &mut r).unwrap();
        assert_eq!(r, [1.0, 2.5]);
    }

    #[test]
    fn reports_syntax_and_duplicates() {
        assert_eq!(KvMap::parse("a = 1\nnonsense\n"), Err(KvError::Syntax { line: 2 }));
        assert!(matches!(KvMap::parse("a=1\na=2"), Err(KvError::Duplicate { line: 2, .. })));
        let m = KvMap::parse("r = 1,2,3").unwrap();
        let mut r = [0.0; 2];
        assert!(matches!(m.read_array("r", &mut r), Err(KvError::Arity { found: 3, .. })));
        assert_eq!(m.reject_unknown(&["x"]), Err(KvError::UnknownKey("r".into())));
    }
}
