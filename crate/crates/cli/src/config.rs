//! `key = value` config files. Keys are the long flag names without the
//! leading dashes; `#` starts a comment. Explicit command-line flags win.

use std::collections::HashMap;

use crate::CliError;

pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn empty() -> Self {
        ConfigFile {
            values: HashMap::new(),
        }
    }

    pub fn load(path: &str, allowed_keys: &[&str]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError(format!("cannot read config file {path}: {e}")))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError(format!(
                    "{path}:{}: expected 'key = value', got '{raw}'",
                    lineno + 1
                ))
            })?;
            let key = key.trim().to_string();
            if !allowed_keys.contains(&key.as_str()) {
                return Err(CliError(format!(
                    "{path}:{}: unknown option '{key}'",
                    lineno + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                CliError(format!("config option '{key}': invalid value '{raw}': {e}"))
            }),
        }
    }

    pub fn get_string(&self, key: &str) -> Option<String> {
        self.values.get(key).cloned()
    }

    pub fn get_flag(&self, key: &str) -> Result<bool, CliError> {
        match self.values.get(key).map(|s| s.as_str()) {
            None => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(other) => Err(CliError(format!(
                "config option '{key}': expected a boolean, got '{other}'"
            ))),
        }
    }
}
