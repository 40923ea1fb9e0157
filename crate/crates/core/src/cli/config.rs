//! Experiment configuration files.
//!
//! A config file is a flat JSON object whose dotted keys mirror CLI flags,
//! e.g. `{"seed": 42, "corpus.per_class": 250, "attack.sizes": [4, 8]}`.
//! Command-line flags override file values, which override built-in
//! defaults, so one file is a complete reproducible record of an experiment.

use std::path::{Path, PathBuf};

use serde_json::Value;

use super::CliError;

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    path: Option<PathBuf>,
    values: serde_json::Map<String, Value>,
}

impl ConfigFile {
    pub fn empty() -> ConfigFile {
        ConfigFile::default()
    }

    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ConfigFile::from_json_slice(&bytes).map_err(|e| match e {
            CliError::Config { reason, .. } => CliError::Config {
                path: Some(path.to_path_buf()),
                reason,
            },
            other => other,
        })
    }

    /// Parses a config from JSON bytes; the top level must be an object of
    /// scalar or list values.
    pub fn from_json_slice(bytes: &[u8]) -> Result<ConfigFile, CliError> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| CliError::Config {
            path: None,
            reason: format!("invalid JSON: {e}"),
        })?;
        match value {
            Value::Object(values) => {
                for (key, v) in &values {
                    if v.is_object() {
                        return Err(CliError::Config {
                            path: None,
                            reason: format!(
                                "key {key:?} holds a nested object; use flat dotted keys"
                            ),
                        });
                    }
                }
                Ok(ConfigFile {
                    path: None,
                    values,
                })
            }
            _ => Err(CliError::Config {
                path: None,
                reason: "top level must be a JSON object".into(),
            }),
        }
    }

    fn bad_key(&self, key: &str, expected: &str) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            reason: format!("key {key:?} is not {expected}"),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| self.bad_key(key, "an unsigned integer")),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| self.bad_key(key, "a number")),
        }
    }

    pub fn string(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(|s| Some(s.to_string()))
                .ok_or_else(|| self.bad_key(key, "a string")),
        }
    }

    pub fn boolean(&self, key: &str) -> Result<Option<bool>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| self.bad_key(key, "a boolean")),
        }
    }

    /// Accepts a JSON array of integers or a comma-separated string.
    pub fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_u64()
                        .map(|n| n as usize)
                        .ok_or_else(|| self.bad_key(key, "a list of unsigned integers"))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(Value::String(s)) => parse_list(s)
                .map(Some)
                .map_err(|_| self.bad_key(key, "a comma-separated integer list")),
            Some(_) => Err(self.bad_key(key, "a list")),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<usize>, std::num::ParseIntError> {
    s.split(',').map(|part| part.trim().parse()).collect()
}

/// `flag.or(file value).unwrap_or(default)` for copy types.
pub fn resolve<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_keys_parse() {
        let cfg = ConfigFile::from_json_slice(
            br#"{"seed": 7, "corpus.per_class": 10, "attack.sizes": [4, 8], "eval.pi": 0.5,
                 "train.note": "x", "grid.w": "2,4"}"#,
        )
        .unwrap();
        assert_eq!(cfg.u64("seed").unwrap(), Some(7));
        assert_eq!(cfg.usize("corpus.per_class").unwrap(), Some(10));
        assert_eq!(cfg.usize_list("attack.sizes").unwrap(), Some(vec![4, 8]));
        assert_eq!(cfg.usize_list("grid.w").unwrap(), Some(vec![2, 4]));
        assert_eq!(cfg.f64("eval.pi").unwrap(), Some(0.5));
        assert_eq!(cfg.u64("absent").unwrap(), None);
    }

    #[test]
    fn nested_objects_rejected() {
        assert!(ConfigFile::from_json_slice(br#"{"corpus": {"per_class": 10}}"#).is_err());
        assert!(ConfigFile::from_json_slice(b"[1, 2]").is_err());
        assert!(ConfigFile::from_json_slice(b"{bad").is_err());
    }

    #[test]
    fn wrong_types_are_errors() {
        let cfg = ConfigFile::from_json_slice(br#"{"seed": "forty-two"}"#).unwrap();
        assert!(cfg.u64("seed").is_err());
    }

    #[test]
    fn precedence_flag_over_file_over_default() {
        assert_eq!(resolve(Some(1u64), Some(2), 3), 1);
        assert_eq!(resolve(None, Some(2u64), 3), 2);
        assert_eq!(resolve::<u64>(None, None, 3), 3);
    }
}
