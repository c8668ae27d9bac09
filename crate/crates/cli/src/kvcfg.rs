//! Flat `key = value` run-configuration files: `#` starts a comment, blank
//! lines are ignored, keys are dotted paths. Unrecognized keys are an error
//! so typos cannot silently fall back to defaults.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

pub struct KvConfig {
    values: BTreeMap<String, String>,
    consumed: RefCell<BTreeSet<String>>,
    source: String,
}

impl KvConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn empty() -> Self {
        KvConfig {
            values: BTreeMap::new(),
            consumed: RefCell::new(BTreeSet::new()),
            source: "<defaults>".into(),
        }
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{source}:{}: expected `key = value`, got {raw:?}", no + 1);
            };
            let key = key.trim().to_string();
            if values
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                bail!("{source}:{}: duplicate key {key}", no + 1);
            }
        }
        Ok(KvConfig {
            values,
            consumed: RefCell::new(BTreeSet::new()),
            source: source.to_string(),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.consumed.borrow_mut().insert(key.to_string());
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("{}: key {key}: cannot parse {raw:?}: {e}", self.source),
            },
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.consumed.borrow_mut().insert(key.to_string());
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => {
                let mut out = Vec::new();
                for part in raw.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    match part.parse::<T>() {
                        Ok(v) => out.push(v),
                        Err(e) => {
                            bail!("{}: key {key}: cannot parse {part:?}: {e}", self.source)
                        }
                    }
                }
                Ok(Some(out))
            }
        }
    }

    /// Every key must have been consumed by now.
    pub fn finish(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        let unknown: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !consumed.contains(*k))
            .collect();
        if !unknown.is_empty() {
            bail!(
                "{}: unrecognized keys: {}",
                self.source,
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
        Ok(())
    }
}
