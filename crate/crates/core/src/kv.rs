//! Plain `key = value` text files used for configs and scalar reports.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique;
//! insertion order is preserved when writing.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: Vec<(String, String)>,
}

impl KvFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = KvFile::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if out.get(k).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
            out.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Parses `key` if present.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("cannot parse `{key}` = `{v}`"))),
        }
    }

    /// Parses a real-valued entry, accepting simple fractions such as `1/6`.
    pub fn get_real(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => parse_real(v)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("cannot parse `{key}` = `{v}`"))),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }
}

impl std::fmt::Display for KvFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Parses a real number or a fraction `a/b`.
pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a: f64 = a.trim().parse().ok()?;
        let b: f64 = b.trim().parse().ok()?;
        return Some(a / b);
    }
    s.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_fractions() {
        let kv = KvFile::parse("# priors\nr_nu = 1/6\n\nshift_ms=200\n").unwrap();
        assert!((kv.get_real("r_nu").unwrap().unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(kv.get_parsed::<f64>("shift_ms").unwrap(), Some(200.0));
        assert_eq!(kv.get("missing"), None);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(KvFile::parse("a = 1\na = 2").is_err());
        assert!(KvFile::parse("no equals sign").is_err());
    }

    #[test]
    fn display_round_trips() {
        let mut kv = KvFile::new();
        kv.set("x", 0.1 + 0.2);
        kv.set("name", "M_u");
        let back = KvFile::parse(&kv.to_string()).unwrap();
        assert_eq!(back.get_parsed::<f64>("x").unwrap(), Some(0.1 + 0.2));
        assert_eq!(back, kv);
    }
}
