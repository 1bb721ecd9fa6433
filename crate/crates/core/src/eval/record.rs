use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::smtlib::FeatureMap;

/// Expected satisfiability of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Sat,
    Unsat,
    #[default]
    Unknown,
}

/// Outcome of one strategy execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalResult {
    Sat,
    Unsat,
    Unknown,
    Timeout,
    Error,
}

impl EvalResult {
    pub fn is_solved(self) -> bool {
        matches!(self, EvalResult::Sat | EvalResult::Unsat)
    }

    pub fn from_status(s: Status) -> Self {
        match s {
            Status::Sat => EvalResult::Sat,
            Status::Unsat => EvalResult::Unsat,
            Status::Unknown => EvalResult::Unknown,
        }
    }
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EvalResult::Sat => "sat",
            EvalResult::Unsat => "unsat",
            EvalResult::Unknown => "unknown",
            EvalResult::Timeout => "timeout",
            EvalResult::Error => "error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Stable identifier, normally the path relative to the benchmark root.
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub expected: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureMap>,
    /// Cost multiplier used by the simulated backend.
    #[serde(default = "one")]
    pub difficulty: f64,
}

fn one() -> f64 {
    1.0
}

impl Instance {
    pub fn simulated(id: impl Into<String>, expected: Status, features: FeatureMap) -> Self {
        Instance { id: id.into(), path: None, expected, features: Some(features), difficulty: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub strategy_key: String,
    pub instance_id: String,
    pub timeout_ms: u64,
    pub result: EvalResult,
    pub wall_ms: u64,
    pub backend_tag: String,
    pub seed: u64,
}

impl EvalRecord {
    /// Whether the record respects the timeout bounds.
    pub fn is_consistent(&self) -> bool {
        match self.result {
            EvalResult::Timeout => self.wall_ms == self.timeout_ms,
            _ => self.wall_ms <= self.timeout_ms,
        }
    }
}
