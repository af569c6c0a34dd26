//! Flat `key = value` run configs: one pair per line, `#` comments, lists
//! comma-separated. No quoting, no nesting.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.map
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        let v = self
            .map
            .get(key)
            .ok_or_else(|| anyhow!("missing required key '{key}'"))?;
        v.parse().with_context(|| format!("key '{key}' = '{v}'"))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse().with_context(|| format!("key '{key}' = '{v}'")),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse().with_context(|| format!("key '{key}' = '{v}'")),
        }
    }

    pub fn list_f64(&self, key: &str) -> Result<Vec<f64>> {
        let v = self
            .map
            .get(key)
            .ok_or_else(|| anyhow!("missing required key '{key}'"))?;
        if v.trim().is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .with_context(|| format!("key '{key}' entry '{s}'"))
            })
            .collect()
    }

    pub fn pair_f64(&self, key: &str) -> Result<Option<(f64, f64)>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(_) => {
                let xs = self.list_f64(key)?;
                if xs.len() != 2 {
                    bail!("key '{key}' must be two comma-separated numbers");
                }
                Ok(Some((xs[0], xs[1])))
            }
        }
    }
}
