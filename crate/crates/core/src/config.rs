//! Flat `key = value` configuration files with optional `[section]` headers.
//!
//! ```text
//! # Iris under heavy label skew
//! dataset = iris
//! m = 3
//! partition = skew:0.75
//!
//! [sc]
//! sigma = knn:5
//! ```
//!
//! Keys before the first header, or under `[run]`, configure the experiment.
//! A backend name as the section header scopes the keys to that backend.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    /// `None` for top-level keys.
    pub section: Option<String>,
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigFile {
    pub entries: Vec<Entry>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = None;
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| Error::Config(format!("line {}: malformed section header '{line}'", i + 1)))?;
                section = (name != "run").then(|| name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", i + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            entries.push(Entry { section: section.clone(), key: key.to_string(), value: value.trim().to_string(), line: i + 1 });
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn top_level(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(|e| e.section.is_none())
    }

    pub fn section<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.section.as_deref() == Some(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let f = ConfigFile::parse("a = 1 # trailing\n\n[run]\nb=two words\n[sc]\nsigma = knn:5\n").unwrap();
        let top: Vec<_> = f.top_level().map(|e| (e.key.as_str(), e.value.as_str())).collect();
        assert_eq!(top, vec![("a", "1"), ("b", "two words")]);
        let sc: Vec<_> = f.section("sc").map(|e| (e.key.as_str(), e.value.as_str(), e.line)).collect();
        assert_eq!(sc, vec![("sigma", "knn:5", 6)]);
    }

    #[test]
    fn malformed_lines() {
        assert!(ConfigFile::parse("just words").is_err());
        assert!(ConfigFile::parse("[oops").is_err());
        assert!(ConfigFile::parse("= 3").is_err());
        assert!(ConfigFile::parse("[]").is_err());
    }
}
