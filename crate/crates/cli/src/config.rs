//! INI-style `key=value` config file. Keys mirror the long flag names
//! (without the leading `--`, dashes allowed); command-line flags win
//! over config entries, which win over built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::{usage, CliResult};

#[derive(Debug, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

fn canonical(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ConfigMap {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(ConfigMap::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage(format!(
                    "{}: line {}: expected key=value",
                    path.display(),
                    lineno + 1
                )));
            };
            entries.insert(canonical(key), value.trim().to_string());
        }
        Ok(ConfigMap { entries })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&canonical(key)).map(|s| s.as_str())
    }

    /// `flag` if set on the command line, else the parsed config entry,
    /// else `default`.
    pub fn resolve<T: FromStr + Clone>(
        &self,
        flag: &Option<T>,
        key: &str,
        default: T,
    ) -> CliResult<T> {
        self.resolve_opt(flag, key)
            .map(|v| v.unwrap_or(default))
    }

    /// Same, but with no default: absent everywhere stays `None`.
    pub fn resolve_opt<T: FromStr + Clone>(
        &self,
        flag: &Option<T>,
        key: &str,
    ) -> CliResult<Option<T>> {
        if let Some(v) = flag {
            return Ok(Some(v.clone()));
        }
        match self.raw(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| usage(format!("config key `{key}`: cannot parse `{raw}`"))),
        }
    }

    /// Required value: command line or config must supply it.
    pub fn require<T: FromStr + Clone>(&self, flag: &Option<T>, key: &str) -> CliResult<T> {
        self.resolve_opt(flag, key)?
            .ok_or_else(|| usage(format!("missing required flag --{}", key.replace('_', "-"))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg");
        std::fs::write(&path, "# comment\nthreshold = 0.7\nworkers=2\n").unwrap();
        let cfg = ConfigMap::load(Some(&path)).unwrap();
        let flag: Option<f64> = Some(0.9);
        assert_eq!(cfg.resolve(&flag, "threshold", 0.5).unwrap(), 0.9);
        let unset: Option<f64> = None;
        assert_eq!(cfg.resolve(&unset, "threshold", 0.5).unwrap(), 0.7);
        let unset_u: Option<usize> = None;
        assert_eq!(cfg.resolve(&unset_u, "seed", 4).unwrap(), 4);
    }

    #[test]
    fn dashed_keys_match_underscored_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg");
        std::fs::write(&path, "chunk-threshold=90\n").unwrap();
        let cfg = ConfigMap::load(Some(&path)).unwrap();
        let unset: Option<f64> = None;
        assert_eq!(cfg.resolve(&unset, "chunk_threshold", 180.0).unwrap(), 90.0);
    }

    #[test]
    fn bad_lines_and_bad_values_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg");
        std::fs::write(&path, "no equals sign\n").unwrap();
        assert!(matches!(
            ConfigMap::load(Some(&path)),
            Err(crate::CliError::Usage(_))
        ));
        std::fs::write(&path, "workers=lots\n").unwrap();
        let cfg = ConfigMap::load(Some(&path)).unwrap();
        let unset: Option<usize> = None;
        assert!(matches!(
            cfg.resolve(&unset, "workers", 4),
            Err(crate::CliError::Usage(_))
        ));
    }
}
