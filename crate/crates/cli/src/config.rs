use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stratsynth_core::eval::{SimRule, DEFAULT_TEMPLATE};
use stratsynth_core::staged::SelectionSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, std::io::Error),
}

impl ConfigError {
    fn at(path: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { path: path.into(), reason: reason.into() }
    }

    /// The offending key path, if the error concerns one.
    pub fn key_path(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { path, .. } => Some(path),
            ConfigError::Io(..) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    External,
    Simulated,
}

/// Settings of the synthetic cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulatedConfig {
    /// JSON list of instances with features and difficulty. When absent,
    /// instances come from the benchmark directories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_timeout_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<SimRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub catalog_path: PathBuf,
    #[serde(default)]
    pub benchmark_dirs: Vec<PathBuf>,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default = "default_solver")]
    pub solver_path: PathBuf,
    #[serde(default = "default_template")]
    pub solver_command_template: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_timeout_ms: Option<u64>,
    #[serde(default = "default_n_linear")]
    pub n_linear: usize,
    #[serde(default = "default_stage1")]
    pub stage1_budget: usize,
    #[serde(default = "default_stage2")]
    pub stage2_budget: usize,
    #[serde(default = "default_c")]
    pub c_uct: f64,
    #[serde(default = "default_c")]
    pub c_bandit: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Ids of the stage-1 training subset; a seeded sample when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_subset: Option<Vec<String>>,
    #[serde(default)]
    pub selection_set: SelectionSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated: Option<SimulatedConfig>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_solver() -> PathBuf {
    "z3".into()
}
fn default_template() -> String {
    DEFAULT_TEMPLATE.into()
}
fn default_timeout() -> u64 {
    10_000
}
fn default_n_linear() -> usize {
    20
}
fn default_stage1() -> usize {
    800
}
fn default_stage2() -> usize {
    300_000
}
fn default_c() -> f64 {
    std::f64::consts::SQRT_2
}
fn default_workers() -> usize {
    4
}
fn default_output() -> PathBuf {
    "out".into()
}

impl Config {
    /// Parses and validates config text; relative paths resolve against
    /// `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Config, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::at(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("timeout_ms", self.timeout_ms as usize),
            ("n_linear", self.n_linear),
            ("stage1_budget", self.stage1_budget),
            ("stage2_budget", self.stage2_budget),
            ("workers", self.workers),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(ConfigError::at(k, "must be positive"));
            }
        }
        if self.long_timeout_ms == Some(0) {
            return Err(ConfigError::at("long_timeout_ms", "must be positive"));
        }
        for (k, c) in [("c_uct", self.c_uct), ("c_bandit", self.c_bandit)] {
            if !(c.is_finite() && c > 0.0) {
                return Err(ConfigError::at(k, "must be a positive number"));
            }
        }
        if !self.resolve(&self.catalog_path).is_file() {
            return Err(ConfigError::at("catalog_path", format!("{} does not exist", self.catalog_path.display())));
        }
        for (i, d) in self.benchmark_dirs.iter().enumerate() {
            if !self.resolve(d).is_dir() {
                return Err(ConfigError::at(format!("benchmark_dirs[{i}]"), format!("{} is not a directory", d.display())));
            }
        }
        let fixture = self.simulated.as_ref().and_then(|s| s.instances.as_ref());
        if let Some(f) = fixture {
            if !self.resolve(f).is_file() {
                return Err(ConfigError::at("simulated.instances", format!("{} does not exist", f.display())));
            }
        }
        if self.benchmark_dirs.is_empty() && fixture.is_none() {
            return Err(ConfigError::at("benchmark_dirs", "at least one benchmark directory is required"));
        }
        if self.simulated.is_some() && self.backend != BackendKind::Simulated {
            return Err(ConfigError::at("simulated", "only allowed with \"backend\": \"simulated\""));
        }
        Ok(())
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Config::from_json(&text, &base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("cat.json"), "{}").unwrap();
        fs::create_dir(dir.path().join("bench")).unwrap();
        dir
    }

    #[test]
    fn defaults_applied() {
        let dir = setup();
        let text = r#"{"catalog_path": "cat.json", "benchmark_dirs": ["bench"], "solver_path": "z3"}"#;
        let c = Config::from_json(text, dir.path()).unwrap();
        assert_eq!((c.n_linear, c.stage1_budget, c.stage2_budget, c.timeout_ms), (20, 800, 300_000, 10_000));
        assert_eq!(c.backend, BackendKind::External);
    }

    #[test]
    fn zero_timeout_rejected() {
        let dir = setup();
        let text = r#"{"catalog_path": "cat.json", "benchmark_dirs": ["bench"], "timeout_ms": 0}"#;
        let e = Config::from_json(text, dir.path()).unwrap_err();
        assert_eq!(e.key_path(), Some("timeout_ms"));
    }

    #[test]
    fn unknown_key_named() {
        let dir = setup();
        let text = r#"{"catalog_path": "cat.json", "benchmark_dirs": ["bench"], "foo": 1}"#;
        let e = Config::from_json(text, dir.path()).unwrap_err();
        assert!(e.to_string().contains("foo"), "{e}");
    }

    #[test]
    fn nested_key_path() {
        let dir = setup();
        let text = r#"{"catalog_path": "cat.json", "benchmark_dirs": ["bench"], "backend": "simulated",
                       "simulated": {"rules": [{"tactic": "sat", "factor": "x"}]}}"#;
        let e = Config::from_json(text, dir.path()).unwrap_err();
        assert_eq!(e.key_path(), Some("simulated.rules[0].factor"));
    }

    #[test]
    fn missing_paths_rejected() {
        let dir = setup();
        let e = Config::from_json(r#"{"catalog_path": "nope.json", "benchmark_dirs": ["bench"]}"#, dir.path()).unwrap_err();
        assert_eq!(e.key_path(), Some("catalog_path"));
        let e = Config::from_json(r#"{"catalog_path": "cat.json", "benchmark_dirs": ["x"]}"#, dir.path()).unwrap_err();
        assert_eq!(e.key_path(), Some("benchmark_dirs[0]"));
    }

    #[test]
    fn emitted_defaults_are_a_fixed_point() {
        let dir = setup();
        let c = Config::from_json(r#"{"catalog_path": "cat.json", "benchmark_dirs": ["bench"]}"#, dir.path()).unwrap();
        let again = Config::from_json(&c.to_json(), dir.path()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_json(), c.to_json());
    }
}
