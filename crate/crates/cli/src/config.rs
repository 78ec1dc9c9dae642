//! Flat `key = value` run configuration.
//!
//! Commands ask for every key they understand, with a default. The answers
//! form the effective configuration that is echoed into each output file;
//! keys in the file that no command asked for are an input error.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{input, CliError, Result};

#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return input(format!("config line {}: expected key = value", idx + 1));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return input(format!("config line {}: empty key", idx + 1));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return input(format!("config line {}: duplicate key {k}", idx + 1));
            }
        }
        Ok(Config { values, resolved: RefCell::default() })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Set `key` as if the file contained it; command-line flags use this.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Typed value of `key`, or `default` when the key is absent.
    pub fn get<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match self.raw(key) {
            Some(s) => s.parse::<T>().map_err(|e| CliError::Input(format!("config key {key}: {e}")))?,
            None => default,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Finite number.
    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default)?;
        if !v.is_finite() {
            return input(format!("config key {key}: must be finite"));
        }
        Ok(v)
    }

    /// Comma- or whitespace-separated numbers.
    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let v = match self.raw(key) {
            Some(s) => parse_numbers(s).map_err(|e| CliError::Input(format!("config key {key}: {e}")))?,
            None => default.to_vec(),
        };
        self.record(key, join(&v, ","));
        Ok(v)
    }

    /// Groups of exactly `arity` numbers separated by `;`, or `default` when
    /// the key is absent. An empty value means no groups.
    pub fn groups(&self, key: &str, arity: usize, default: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let Some(text) = self.raw(key) else {
            self.record(key, show_groups(default));
            return Ok(default.to_vec());
        };
        let mut out = Vec::new();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let nums = parse_numbers(part).map_err(|e| CliError::Input(format!("config key {key}: {e}")))?;
            if nums.len() != arity {
                return input(format!("config key {key}: expected groups of {arity} numbers, got {part:?}"));
            }
            out.push(nums);
        }
        self.record(key, show_groups(&out));
        Ok(out)
    }

    /// Error for keys in the file that are neither in `known` nor asked for.
    /// Known keys of other commands are ignored, so one file can serve
    /// several commands.
    pub fn check_unknown(&self, known: &BTreeSet<String>) -> Result<()> {
        let resolved = self.resolved.borrow();
        let unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !resolved.contains_key(*k) && !known.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            input(format!("unknown config key(s): {}", unknown.join(", ")))
        }
    }

    /// Every key asked for so far with its effective value, sorted by key.
    pub fn effective(&self) -> Vec<(String, String)> {
        self.resolved.borrow().iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

fn parse_numbers(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v = t.parse::<f64>().map_err(|e| format!("{t:?}: {e}"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("{t:?} is not finite"))
            }
        })
        .collect()
}

fn show_groups(groups: &[Vec<f64>]) -> String {
    groups.iter().map(|g| join(g, " ")).collect::<Vec<_>>().join("; ")
}

fn join(v: &[f64], sep: &str) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(sep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_records_defaults() {
        let c = Config::parse("# comment\n a = 2.5 \nflag=true\n\nlanes = -0.7, 0 0.7\n").unwrap();
        assert_eq!(c.f64("a", 1.0).unwrap(), 2.5);
        assert_eq!(c.f64("missing", 1.0).unwrap(), 1.0);
        assert!(c.get::<bool>("flag", false).unwrap());
        assert_eq!(c.f64_list("lanes", &[]).unwrap(), vec![-0.7, 0.0, 0.7]);
        c.check_unknown(&BTreeSet::new()).unwrap();
        let eff = c.effective();
        assert_eq!(eff[0], ("a".to_string(), "2.5".to_string()));
        assert!(eff.contains(&("missing".to_string(), "1".to_string())));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Config::parse("novalue\n").is_err());
        assert!(Config::parse("a = 1\na = 2\n").is_err());
        let c = Config::parse("a = x\n").unwrap();
        assert!(c.f64("a", 0.0).is_err());
        let c = Config::parse("a = 1\ntypo = 2\n").unwrap();
        c.f64("a", 0.0).unwrap();
        assert!(matches!(c.check_unknown(&BTreeSet::new()), Err(CliError::Input(m)) if m.contains("typo")));
        let known: BTreeSet<String> = ["typo".to_string()].into();
        c.check_unknown(&known).unwrap();
    }

    #[test]
    fn groups_need_the_right_arity() {
        let c = Config::parse("walls = 0 -3 14 -3; 0 3 14 3\nbad = 1 2 3\n").unwrap();
        assert_eq!(c.groups("walls", 4, &[]).unwrap().len(), 2);
        assert!(c.groups("bad", 4, &[]).is_err());
        assert_eq!(c.groups("absent", 2, &[vec![0.0, 0.0]]).unwrap(), vec![vec![0.0, 0.0]]);
        assert!(c.effective().contains(&("walls".to_string(), "0 -3 14 -3; 0 3 14 3".to_string())));
    }
}
