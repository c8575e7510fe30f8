//! Flat `key = value` configuration files. Keys are flag names without the
//! leading dashes; `_` and `-` are interchangeable.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct ConfigFile {
    source: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    /// An empty file when `path` is `None`.
    pub fn load(path: Option<&Path>, allowed: &[&str]) -> Result<ConfigFile, CliError> {
        match path {
            None => Ok(ConfigFile::default()),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
                ConfigFile::parse(&text, &path.display().to_string(), allowed)
            }
        }
    }

    pub fn parse(text: &str, source: &str, allowed: &[&str]) -> Result<ConfigFile, CliError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                CliError::config(format!("{source}:{line}: expected `key = value`"))
            })?;
            let key = key.trim().replace('_', "-");
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::config(format!(
                    "{source}:{line}: unknown key `{key}` (allowed: {})",
                    allowed.join(", ")
                )));
            }
            if entries.insert(key.clone(), (value.trim().to_string(), line)).is_some() {
                return Err(CliError::config(format!("{source}:{line}: duplicate key `{key}`")));
            }
        }
        Ok(ConfigFile {
            source: source.to_string(),
            entries,
        })
    }

    /// The flag value if given, else the parsed file value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(key) {
            None => Ok(None),
            Some((value, line)) => value.parse().map(Some).map_err(|_| {
                CliError::config(format!("{}:{line}: invalid value `{value}` for `{key}`", self.source))
            }),
        }
    }

    pub fn pick_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// A boolean switch: set on the command line, or `true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

/// Comma-separated values; empty entries are an error.
pub fn parse_list<T: FromStr>(text: &str, key: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(|item| {
            item.trim()
                .parse()
                .map_err(|_| CliError::config(format!("invalid entry `{}` in `{key}`", item.trim())))
        })
        .collect()
}
