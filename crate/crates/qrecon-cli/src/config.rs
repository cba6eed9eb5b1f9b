//! Flat key-value configuration files (a TOML-compatible subset) that
//! back-fill command-line flags. Flags always win.

use std::path::{Path, PathBuf};

/// A loaded config table restricted to scalar values.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    table: toml::Table,
}

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error in '{}': {}", self.field, self.message)
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            field: "config".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        let table: toml::Table = text.parse().map_err(|e| ConfigError {
            field: "config".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        for (key, value) in &table {
            if value.is_table() || value.is_array() {
                return Err(ConfigError {
                    field: key.clone(),
                    message: "only flat scalar keys are supported; lists go in comma-separated strings".into(),
                });
            }
        }
        Ok(ConfigFile { table })
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.table.get(key).map(|v| match v {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse_with(key, |s| s.parse::<usize>().map_err(|e| e.to_string()))
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parse_with(key, |s| s.parse::<u64>().map_err(|e| e.to_string()))
    }

    pub fn u32(&self, key: &str) -> Result<Option<u32>, ConfigError> {
        self.parse_with(key, |s| s.parse::<u32>().map_err(|e| e.to_string()))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse_with(key, |s| s.parse::<f64>().map_err(|e| e.to_string()))
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.parse_with(key, |s| s.parse::<bool>().map_err(|e| e.to_string()))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.string(key).map(PathBuf::from)
    }

    fn parse_with<T>(
        &self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ConfigError> {
        match self.string(key) {
            None => Ok(None),
            Some(s) => parse(s.trim()).map(Some).map_err(|message| ConfigError {
                field: key.to_string(),
                message,
            }),
        }
    }
}

/// Parses a comma-separated list of mesh resolutions.
pub fn parse_n_subs(text: &str) -> Result<Vec<usize>, ConfigError> {
    let values: Result<Vec<usize>, _> = text
        .split(',')
        .map(|part| part.trim().parse::<usize>())
        .collect();
    let values = values.map_err(|e| ConfigError {
        field: "n_subs".into(),
        message: e.to_string(),
    })?;
    if values.is_empty() {
        return Err(ConfigError {
            field: "n_subs".into(),
            message: "expected at least one resolution".into(),
        });
    }
    if !values.windows(2).all(|w| w[0] < w[1]) {
        return Err(ConfigError {
            field: "n_subs".into(),
            message: "resolutions must be strictly increasing".into(),
        });
    }
    Ok(values)
}
