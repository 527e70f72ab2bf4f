//! Plain-text `key = value` blocks.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment            (also after a value: `window = 500  # days`)
//! [section]            (optional section header)
//! key = value          (keys: [A-Za-z0-9_.-]+, values: rest of line, trimmed)
//! ```
//!
//! Keys are unique within a section. Blank lines are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered key/value pairs of one section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvBlock {
    entries: Vec<(String, String)>,
}

impl KvBlock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends or overwrites `key`.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
    }

    /// Parses `key` when present.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Parse(format!("bad value for `{key}`: {v}")))
            })
            .transpose()
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse_opt(key)?
            .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
    }

    /// Rejects any key outside `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// A parsed document: keys before any header live in section `""`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDocument {
    pub sections: BTreeMap<String, KvBlock>,
}

impl KvDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDocument::default();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = name.trim().to_string();
                doc.sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "_.-".contains(c))
            {
                return Err(Error::Parse(format!(
                    "line {}: invalid key `{key}`",
                    lineno + 1
                )));
            }
            let block = doc.sections.entry(current.clone()).or_default();
            if block.get(key).is_some() {
                return Err(Error::Parse(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
            block.set(key, value.trim());
        }
        Ok(doc)
    }

    pub fn section(&self, name: &str) -> Option<&KvBlock> {
        self.sections.get(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let doc = KvDocument::parse(
            "a = 1\n# c\n[backtest]\nwindow = 500 # days\n\nmodels = HAR-DRD,M-HAR\n",
        )
        .unwrap();
        assert_eq!(doc.section("").unwrap().get("a"), Some("1"));
        let bt = doc.section("backtest").unwrap();
        assert_eq!(bt.parse::<usize>("window").unwrap(), 500);
        assert_eq!(bt.get("models"), Some("HAR-DRD,M-HAR"));
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(KvDocument::parse("a = 1\na = 2").is_err());
        assert!(KvDocument::parse("just words").is_err());
        let mut b = KvBlock::new();
        b.set("x", 1);
        assert!(b.reject_unknown(&["y"]).is_err());
        assert!(b.reject_unknown(&["x"]).is_ok());
    }

    #[test]
    fn render_parse_roundtrip() {
        let mut b = KvBlock::new();
        b.set("beta0", 0.1f64);
        b.set("model", "HARQL");
        let doc = KvDocument::parse(&b.render()).unwrap();
        assert_eq!(doc.section("").unwrap(), &b);
    }
}
