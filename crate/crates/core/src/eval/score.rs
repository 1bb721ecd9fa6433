use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::cache::EvalCache;
use super::record::{EvalRecord, EvalResult, Instance, Status};
use super::smtlib::{FeatureMap, FeatureValue};
use super::EvalError;
use crate::lang::Predicate;

/// Penalized average runtime in seconds over `(result, wall_ms)` outcomes.
pub fn par_of<I>(outcomes: I, timeout_ms: u64, k: u32) -> Result<f64, EvalError>
where
    I: IntoIterator<Item = (EvalResult, u64)>,
{
    let penalty = f64::from(k) * timeout_ms as f64 / 1000.0;
    let mut n = 0usize;
    let mut sum = 0.0;
    for (result, wall_ms) in outcomes {
        n += 1;
        sum += if result.is_solved() { wall_ms as f64 / 1000.0 } else { penalty };
    }
    if n == 0 {
        return Err(EvalError::EmptySet);
    }
    Ok(sum / n as f64)
}

/// PAR-k of a record set. Unknown, timeout and error all count as unsolved.
pub fn par_score(records: &[EvalRecord], timeout_ms: u64, k: u32) -> Result<f64, EvalError> {
    par_of(records.iter().map(|r| (r.result, r.wall_ms)), timeout_ms, k)
}

/// Maps PAR-10 seconds into `[0, 1]`, 1 being best.
pub fn reward_from_par10(par10_s: f64, timeout_ms: u64) -> f64 {
    let worst = 10.0 * timeout_ms as f64 / 1000.0;
    (1.0 - par10_s / worst).clamp(0.0, 1.0)
}

pub fn eval_predicate(pred: &Predicate, features: &FeatureMap) -> Result<bool, EvalError> {
    let name = pred.probe_name();
    let value = features.get(name).ok_or_else(|| EvalError::MissingFeature(name.to_string()))?;
    match (pred, value) {
        (Predicate::Probe(_), FeatureValue::Bool(b)) => Ok(*b),
        (Predicate::Probe(_), FeatureValue::Int(i)) => Ok(*i != 0),
        (Predicate::Cmp { op, constant, .. }, FeatureValue::Int(i)) => Ok(op.holds(*i, *constant)),
        (Predicate::Cmp { op, constant, .. }, FeatureValue::Bool(b)) => Ok(op.holds(i64::from(*b), *constant)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Correct,
    Wrong,
    Unsolved,
}

pub fn classify(result: EvalResult, expected: Status) -> Classification {
    match (result, expected) {
        (EvalResult::Sat, Status::Unsat) | (EvalResult::Unsat, Status::Sat) => Classification::Wrong,
        (r, _) if r.is_solved() => Classification::Correct,
        _ => Classification::Unsolved,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance_id: String,
    pub expected: Status,
    pub result: EvalResult,
    pub wall_ms: u64,
    pub classification: Classification,
}

/// Aggregate scores of one strategy on one instance set. The percentage is
/// derived from the counts when serialized and ignored when read back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ScoreReportRepr", from = "ScoreReportRepr")]
pub struct ScoreReport {
    pub strategy: String,
    pub timeout_ms: u64,
    pub total: usize,
    pub solved_count: usize,
    pub correct_count: usize,
    pub wrong_count: usize,
    pub par2: f64,
    pub par10: f64,
    pub rows: Vec<InstanceRow>,
}

#[derive(Serialize, Deserialize)]
struct ScoreReportRepr {
    strategy: String,
    timeout_ms: u64,
    total: usize,
    solved_count: usize,
    correct_count: usize,
    wrong_count: usize,
    #[serde(default)]
    percent_solved: f64,
    par2: f64,
    par10: f64,
    rows: Vec<InstanceRow>,
}

impl From<ScoreReport> for ScoreReportRepr {
    fn from(r: ScoreReport) -> Self {
        ScoreReportRepr {
            percent_solved: r.percent_solved(),
            strategy: r.strategy,
            timeout_ms: r.timeout_ms,
            total: r.total,
            solved_count: r.solved_count,
            correct_count: r.correct_count,
            wrong_count: r.wrong_count,
            par2: r.par2,
            par10: r.par10,
            rows: r.rows,
        }
    }
}

impl From<ScoreReportRepr> for ScoreReport {
    fn from(r: ScoreReportRepr) -> Self {
        ScoreReport {
            strategy: r.strategy,
            timeout_ms: r.timeout_ms,
            total: r.total,
            solved_count: r.solved_count,
            correct_count: r.correct_count,
            wrong_count: r.wrong_count,
            par2: r.par2,
            par10: r.par10,
            rows: r.rows,
        }
    }
}

impl ScoreReport {
    /// Scores `records`, which must be aligned with `instances`.
    pub fn from_records(
        strategy: &str,
        instances: &[Instance],
        records: &[EvalRecord],
        timeout_ms: u64,
    ) -> Result<Self, EvalError> {
        let par2 = par_score(records, timeout_ms, 2)?;
        let par10 = par_score(records, timeout_ms, 10)?;
        let rows: Vec<InstanceRow> = instances
            .iter()
            .zip(records)
            .map(|(i, r)| InstanceRow {
                instance_id: r.instance_id.clone(),
                expected: i.expected,
                result: r.result,
                wall_ms: r.wall_ms,
                classification: classify(r.result, i.expected),
            })
            .collect();
        let count = |c| rows.iter().filter(|r| r.classification == c).count();
        Ok(ScoreReport {
            strategy: strategy.to_string(),
            timeout_ms,
            total: rows.len(),
            solved_count: rows.iter().filter(|r| r.result.is_solved()).count(),
            correct_count: count(Classification::Correct),
            wrong_count: count(Classification::Wrong),
            par2,
            par10,
            rows,
        })
    }

    /// Correctly solved instances as a percentage of the total.
    pub fn percent_solved(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct_count as f64 * 100.0 / self.total as f64
        }
    }
}

/// Per-instance best solved time over a strategy set, `None` if unsolved.
pub fn vbs_times(
    strategy_keys: &[String],
    instances: &[Instance],
    cache: &EvalCache,
    timeout_ms: u64,
) -> Result<Vec<Option<u64>>, EvalError> {
    instances
        .iter()
        .map(|inst| {
            let mut best: Option<u64> = None;
            for key in strategy_keys {
                let r = cache.get(key, &inst.id, timeout_ms).ok_or_else(|| EvalError::MissingRecord {
                    strategy: key.clone(),
                    instance: inst.id.clone(),
                })?;
                if r.result.is_solved() {
                    best = Some(best.map_or(r.wall_ms, |b| b.min(r.wall_ms)));
                }
            }
            Ok(best)
        })
        .collect()
}

/// PAR-10 of the virtual best strategy of `strategy_keys`.
pub fn vbs_par10(
    strategy_keys: &[String],
    instances: &[Instance],
    cache: &EvalCache,
    timeout_ms: u64,
) -> Result<f64, EvalError> {
    par10_of_times(&vbs_times(strategy_keys, instances, cache, timeout_ms)?, timeout_ms)
}

/// PAR-10 of per-instance solve times, `None` meaning unsolved.
pub fn par10_of_times(times: &[Option<u64>], timeout_ms: u64) -> Result<f64, EvalError> {
    let outcomes = times.iter().map(|t| match t {
        Some(ms) => (EvalResult::Sat, *ms),
        None => (EvalResult::Timeout, timeout_ms),
    });
    par_of(outcomes, timeout_ms, 10)
}

/// Lookup of records per strategy key, used by reporting.
pub fn group_by_strategy(records: &[EvalRecord]) -> HashMap<&str, Vec<&EvalRecord>> {
    let mut m: HashMap<&str, Vec<&EvalRecord>> = HashMap::new();
    for r in records {
        m.entry(r.strategy_key.as_str()).or_default().push(r);
    }
    m
}
