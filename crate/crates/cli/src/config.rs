//! Parameter resolution: command-line flag, then config file, then default.
//!
//! The config file is TOML. Global keys (`seed`, `jobs`) sit at the top
//! level; per-command keys live in a table named after the subcommand and
//! use the flag spelling, e.g.
//!
//! ```toml
//! seed = 7
//! [pack]
//! seq-len = 2048
//! ```

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliResult, Failure};

#[derive(Debug, Default)]
pub struct Config {
    root: toml::Table,
}

fn decode<T: DeserializeOwned>(value: &toml::Value, what: &str) -> CliResult<T> {
    value
        .clone()
        .try_into()
        .map_err(|e| Failure::bad_args(format!("config key {what}: {e}")))
}

impl Config {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::bad_args(format!("cannot read config {}: {e}", path.display())))?;
        let root: toml::Table =
            toml::from_str(&text).map_err(|e| Failure::parse(format!("config {}: {e}", path.display())))?;
        Ok(Self { root })
    }

    pub fn global<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> CliResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.root.get(key) {
            Some(v) if !v.is_table() => decode(v, key).map(Some),
            _ => Ok(None),
        }
    }

    pub fn section(&self, command: &str) -> CliResult<Section<'_>> {
        let table = match self.root.get(command) {
            None => None,
            Some(toml::Value::Table(t)) => Some(t),
            Some(_) => return Err(Failure::bad_args(format!("config key {command} must be a table"))),
        };
        Ok(Section {
            command: command.to_string(),
            table,
            params: Map::new(),
        })
    }
}

/// Resolved parameters of one command. Every value picked through here is
/// recorded for the run manifest, except paths.
pub struct Section<'a> {
    command: String,
    table: Option<&'a toml::Table>,
    params: Map<String, Value>,
}

impl Section<'_> {
    fn lookup<T: DeserializeOwned>(&self, key: &str) -> CliResult<Option<T>> {
        match self.table.and_then(|t| t.get(key)) {
            Some(v) => decode(v, &format!("{}.{key}", self.command)).map(Some),
            None => Ok(None),
        }
    }

    pub fn opt<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>> {
        let value = match flag {
            Some(v) => Some(v),
            None => self.lookup(key)?,
        };
        if let Some(v) = &value {
            self.params.insert(key.to_string(), serde_json::to_value(v).expect("parameter serializes"));
        }
        Ok(value)
    }

    pub fn get<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T> {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.params.insert(key.to_string(), serde_json::to_value(&default).expect("parameter serializes"));
                Ok(default)
            }
        }
    }

    pub fn flag(&mut self, key: &str, flag: bool) -> CliResult<bool> {
        let on = flag || self.lookup::<bool>(key)?.unwrap_or(false);
        self.params.insert(key.to_string(), Value::Bool(on));
        Ok(on)
    }

    pub fn path(&self, key: &str, flag: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
        match flag {
            Some(p) => Ok(Some(p)),
            None => self.lookup(key),
        }
    }

    pub fn require_path(&self, key: &str, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        self.path(key, flag)?
            .ok_or_else(|| Failure::bad_args(format!("--{key} is required (flag or [{}] config)", self.command)))
    }

    pub fn into_params(self) -> Map<String, Value> {
        self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Config {
        Config {
            root: toml::from_str(text).unwrap(),
        }
    }

    #[test]
    fn precedence() {
        let cfg = config("seed = 7\n[pack]\nseq-len = 2048\nmax-images = 4\n");
        let mut s = cfg.section("pack").unwrap();
        assert_eq!(s.get("seq-len", Some(512usize), 4096).unwrap(), 512);
        assert_eq!(s.get("max-images", None, 16usize).unwrap(), 4);
        assert_eq!(s.get("tokens-per-image", None, 144usize).unwrap(), 144);
        let params = s.into_params();
        assert_eq!(params["seq-len"], 512);
        assert_eq!(params["tokens-per-image"], 144);
        assert_eq!(cfg.global::<u64>("seed", None).unwrap(), Some(7));
        assert_eq!(cfg.global::<u64>("seed", Some(1)).unwrap(), Some(1));
        assert_eq!(cfg.global::<u64>("pack", None).unwrap(), None);
    }

    #[test]
    fn type_errors_are_bad_args() {
        let cfg = config("[pack]\nseq-len = \"long\"\n");
        let mut s = cfg.section("pack").unwrap();
        let err = s.get("seq-len", None, 1usize).unwrap_err();
        assert_eq!(err.kind.code(), 2);
        assert!(config("pack = 3").section("pack").is_err());
    }
}
