//! Sectioned `key = value` configuration text.
//!
//! ```text
//! # comment
//! seed = 7
//! [train]
//! lr = 0.001
//! ```
//!
//! Keys before the first header live in the unnamed section `""`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: format!("unterminated section header {line:?}"),
                })?;
                section = name.trim().to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            cfg.sections
                .entry(section.clone())
                .or_default()
                .insert(key.to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text).map_err(|e| match e {
            Error::Parse { line, message } => Error::Config(format!("{}:{line}: {message}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, keys) in &self.sections {
            if !name.is_empty() {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{name}]\n"));
            }
            for (k, v) in keys {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Display) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    /// Applies `section.key=value`; a key without a dot targets the unnamed section.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
        let (section, key) = path.trim().rsplit_once('.').unwrap_or(("", path.trim()));
        if key.is_empty() {
            return Err(Error::Config(format!("override {spec:?} has an empty key")));
        }
        self.set(section, key, value.trim());
        Ok(())
    }

    pub fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(name)
    }

    /// Typed lookup; absent keys yield `default`, malformed values an error.
    pub fn value<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| {
                Error::Config(format!("{}: cannot parse {v:?}: {e}", qualified(section, key)))
            }),
        }
    }

    pub fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self
            .get(section, key)
            .ok_or_else(|| Error::Config(format!("missing required key {}", qualified(section, key))))?;
        v.parse()
            .map_err(|e| Error::Config(format!("{}: cannot parse {v:?}: {e}", qualified(section, key))))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, section: &str, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|e| {
                        Error::Config(format!("{}: cannot parse {s:?}: {e}", qualified(section, key)))
                    })
                })
                .collect(),
        }
    }
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sections_and_overrides() {
        let text = "# top\nseed = 3\n\n[train]\nlr = 0.01\nbatch_size=8\n[forecast]\nhorizons = 1, 2,3\n";
        let mut c = Config::parse(text).unwrap();
        assert_eq!(c.value("", "seed", 0u64).unwrap(), 3);
        assert_eq!(c.value("train", "lr", 1.0).unwrap(), 0.01);
        assert_eq!(c.value("train", "epochs", 5usize).unwrap(), 5);
        assert_eq!(c.list("forecast", "horizons", vec![9usize]).unwrap(), vec![1, 2, 3]);
        c.apply_override("train.lr=0.5").unwrap();
        c.apply_override("seed = 11").unwrap();
        assert_eq!(c.get("train", "lr"), Some("0.5"));
        assert_eq!(c.get("", "seed"), Some("11"));
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn errors_carry_context() {
        assert!(matches!(Config::parse("[x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(Config::parse("a = 1\nnovalue\n"), Err(Error::Parse { line: 2, .. })));
        let c = Config::parse("[t]\nlr = fast\n").unwrap();
        assert!(matches!(c.value("t", "lr", 1.0), Err(Error::Config(_))));
        assert!(matches!(c.required::<f64>("t", "missing"), Err(Error::Config(_))));
        assert!(Config::default().apply_override("nokey").is_err());
    }
}
