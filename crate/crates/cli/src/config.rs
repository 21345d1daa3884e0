//! Key-value run configuration with defaults, file loading and overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every recognised key with its default; an empty default means unset.
const DEFAULTS: &[(&str, &str)] = &[
    ("bins", "10"),
    ("bootstrap", "true"),
    ("contamination", "0.1"),
    ("cooling", "0.95"),
    ("data", ""),
    ("depth", "10"),
    ("exclude", ""),
    ("fallback", "false"),
    ("iforest_trees", "100"),
    ("instances", "test"),
    ("k", "10"),
    ("limit", "0"),
    ("max_iter", "1000"),
    ("min_leaf", ""),
    ("models", ""),
    ("mtry", ""),
    ("out", "out"),
    ("path_m", "2000"),
    ("pi", "0.9"),
    ("pi_c", "0.9"),
    ("prediction_column", ""),
    ("query_depth", "12"),
    ("query_mode", "labels"),
    ("query_trees", "50"),
    ("recourses", ""),
    ("region", ""),
    ("rules", ""),
    ("schema", ""),
    ("seed", "0"),
    ("sigmas", "0.01,0.025,0.05"),
    ("split_seed", "0"),
    ("strategy", "exhaustive"),
    ("t0", "1.0"),
    ("target", ""),
    ("train_fraction", "0.75"),
    ("trees", "20"),
    ("trials", "10"),
];

const LOCATION_KEYS: &[&str] = &["models", "out", "recourses", "rules"];

/// Fully resolved configuration, kept as sorted text values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> Result<(), CliError> {
    if DEFAULTS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(CliError::Config(format!("unknown configuration key `{key}`")))
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults, then the file, then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            DEFAULTS.iter().map(|(k, v)| ((*k).to_owned(), (*v).to_owned())).collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            for (k, v) in parse_pairs(&text)? {
                known(&k)?;
                values.insert(k, v);
            }
        }
        for (k, v) in overrides {
            known(k)?;
            values.insert(k.clone(), v.clone());
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.raw(key).is_empty()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{raw}`")))
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        if self.is_set(key) {
            self.get(key).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(CliError::Config(format!("`{key}`: expected a boolean, got `{other}`"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{s}`"))))
            .collect()
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        if self.is_set(key) {
            Ok(PathBuf::from(self.raw(key)))
        } else {
            Err(CliError::Config(format!("`{key}` is required")))
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out"))
    }

    /// Directory holding trained models; defaults to `out`.
    pub fn model_dir(&self) -> PathBuf {
        if self.is_set("models") {
            PathBuf::from(self.raw("models"))
        } else {
            self.out_dir()
        }
    }

    /// Output path for `key`, defaulting to `file_name` inside `out`.
    pub fn output(&self, key: &str, file_name: &str) -> PathBuf {
        if self.is_set(key) {
            PathBuf::from(self.raw(key))
        } else {
            self.out_dir().join(file_name)
        }
    }

    /// One `key = value` line per key, sorted.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the resolved values, hex encoded. Output locations are left
    /// out so the same computation written elsewhere keeps its fingerprint.
    pub fn fingerprint(&self) -> String {
        let text: String = self
            .values
            .iter()
            .filter(|(k, _)| !LOCATION_KEYS.contains(&k.as_str()))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| ((*k).to_owned(), (*v).to_owned())).collect()
    }

    #[test]
    fn overrides_win_over_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\npi = 0.7\ntrees=5 # inline\n").unwrap();
        let cfg = RunConfig::resolve(Some(&path), &pairs(&[("pi", "0.8")])).unwrap();
        assert_eq!(cfg.get::<f64>("pi").unwrap(), 0.8);
        assert_eq!(cfg.get::<usize>("trees").unwrap(), 5);
        assert_eq!(cfg.get::<usize>("depth").unwrap(), 10);
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_config_errors() {
        assert!(matches!(RunConfig::resolve(None, &pairs(&[("nope", "1")])), Err(CliError::Config(_))));
        assert!(parse_pairs("just words").is_err());
        let cfg = RunConfig::resolve(None, &pairs(&[("pi", "high")])).unwrap();
        assert!(matches!(cfg.get::<f64>("pi"), Err(CliError::Config(_))));
    }

    #[test]
    fn fingerprint_tracks_resolved_values() {
        let a = RunConfig::resolve(None, &[]).unwrap();
        let b = RunConfig::resolve(None, &pairs(&[("seed", "0")])).unwrap();
        let c = RunConfig::resolve(None, &pairs(&[("seed", "1")])).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
        let elsewhere = RunConfig::resolve(None, &pairs(&[("out", "elsewhere")])).unwrap();
        assert_eq!(a.fingerprint(), elsewhere.fingerprint());
    }

    #[test]
    fn lists_skip_blanks() {
        let cfg = RunConfig::resolve(None, &pairs(&[("sigmas", "0.1, 0.2,")])).unwrap();
        assert_eq!(cfg.list::<f64>("sigmas").unwrap(), vec![0.1, 0.2]);
        assert!(cfg.list::<usize>("exclude").unwrap().is_empty());
    }
}
