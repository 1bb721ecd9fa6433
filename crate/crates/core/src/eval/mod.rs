//! Strategy execution, features, scoring and the persistent result cache.

mod backend;
mod cache;
mod record;
mod score;
pub mod smtlib;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::lang::Strategy;

pub use backend::{execute, Backend, ExternalBackend, SimRule, SimulatedBackend, DEFAULT_TEMPLATE, KILL_GRACE_MS};
pub use cache::EvalCache;
pub use record::{EvalRecord, EvalResult, Instance, Status};
pub use score::{
    classify, eval_predicate, group_by_strategy, par10_of_times, par_of, par_score, reward_from_par10, vbs_par10, vbs_times,
    Classification, InstanceRow, ScoreReport,
};
pub use smtlib::{extract_features, FeatureMap, FeatureValue, SmtParseError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("solver backend unavailable: `{0}` not found")]
    BackendUnavailable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{instance}: {source}")]
    Parse { instance: String, source: SmtParseError },
    #[error("instance `{0}` has no source file")]
    NoSource(String),
    #[error("missing feature `{0}`")]
    MissingFeature(String),
    #[error("no cached record for strategy `{strategy}` on `{instance}`")]
    MissingRecord { strategy: String, instance: String },
    #[error("cache conflict: {existing:?} vs {new:?}")]
    CacheConflict { existing: Box<EvalRecord>, new: Box<EvalRecord> },
    #[error("{}:{line}: corrupt cache record: {message}", path.display())]
    CorruptCache { path: PathBuf, line: usize, message: String },
    #[error("empty record set")]
    EmptySet,
    #[error("timeout must be positive")]
    InvalidTimeout,
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Reads an SMT-LIB file into an instance with status and features.
pub fn load_instance(path: &Path, id: impl Into<String>) -> Result<Instance, EvalError> {
    let id = id.into();
    let text = fs::read_to_string(path)?;
    let parse_err = |source| EvalError::Parse { instance: id.clone(), source };
    let commands = smtlib::read_script(&text).map_err(parse_err)?;
    let expected = smtlib::read_status(&commands);
    let features = extract_features(&text).map_err(parse_err)?;
    Ok(Instance { id, path: Some(path.to_path_buf()), expected, features: Some(features), difficulty: 1.0 })
}

/// All `.smt2` files below `dir`, ordered by id (the relative path).
pub fn load_benchmarks(dir: &Path) -> Result<Vec<Instance>, EvalError> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).follow_links(true) {
        let entry = entry.map_err(|e| EvalError::Io(e.into()))?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "smt2") {
            files.push(entry.into_path());
        }
    }
    let mut out = files
        .par_iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).unwrap_or(p);
            let id = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            load_instance(p, id)
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// A backend plus the result cache and worker pool in front of it.
pub struct Evaluator {
    backend: Arc<dyn Backend>,
    cache: EvalCache,
    pool: rayon::ThreadPool,
    executions: AtomicU64,
}

impl Evaluator {
    pub fn new(backend: Arc<dyn Backend>, cache: EvalCache, workers: usize) -> Result<Self, EvalError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?;
        Ok(Evaluator { backend, cache, pool, executions: AtomicU64::new(0) })
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    pub fn cache(&self) -> &EvalCache {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut EvalCache {
        &mut self.cache
    }

    /// Number of backend executions so far (cache hits excluded).
    pub fn executions(&self) -> u64 {
        self.executions.load(Ordering::Relaxed)
    }

    /// Records of `strategy` on every instance, in instance order. Missing
    /// records are computed on the worker pool and appended to the cache.
    pub fn evaluate_set(
        &mut self,
        strategy: &Strategy,
        instances: &[Instance],
        timeout_ms: u64,
    ) -> Result<Vec<EvalRecord>, EvalError> {
        if timeout_ms == 0 {
            return Err(EvalError::InvalidTimeout);
        }
        let key = strategy.canonical_key();
        let missing: Vec<&Instance> =
            instances.iter().filter(|i| self.cache.get(&key, &i.id, timeout_ms).is_none()).collect();
        if !missing.is_empty() {
            let backend = self.backend.as_ref();
            let executions = &self.executions;
            let fresh: Vec<Result<EvalRecord, EvalError>> = self.pool.install(|| {
                missing
                    .par_iter()
                    .map(|inst| {
                        executions.fetch_add(1, Ordering::Relaxed);
                        execute(backend, strategy, inst, timeout_ms)
                    })
                    .collect()
            });
            for rec in fresh {
                self.cache.insert(rec?)?;
            }
            self.cache.flush()?;
        }
        instances
            .iter()
            .map(|i| {
                self.cache.get(&key, &i.id, timeout_ms).cloned().ok_or_else(|| EvalError::MissingRecord {
                    strategy: key.clone(),
                    instance: i.id.clone(),
                })
            })
            .collect()
    }

    /// Reward of `strategy` on `instances`: normalized PAR-10.
    pub fn reward(&mut self, strategy: &Strategy, instances: &[Instance], timeout_ms: u64) -> Result<f64, EvalError> {
        let records = self.evaluate_set(strategy, instances, timeout_ms)?;
        Ok(reward_from_par10(par_score(&records, timeout_ms, 10)?, timeout_ms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_syntax;

    fn instances(n: usize) -> Vec<Instance> {
        (0..n).map(|k| Instance::simulated(format!("i{k}"), Status::Unsat, FeatureMap::new())).collect()
    }

    fn evaluator(workers: usize) -> Evaluator {
        Evaluator::new(Arc::new(SimulatedBackend::new(5)), EvalCache::in_memory(), workers).unwrap()
    }

    #[test]
    fn cache_hit_skips_backend() {
        let mut e = evaluator(2);
        let s = parse_syntax("(then simplify smt)").unwrap();
        let insts = instances(10);
        let a = e.evaluate_set(&s, &insts, 1000).unwrap();
        assert_eq!(e.executions(), 10);
        let b = e.evaluate_set(&s, &insts, 1000).unwrap();
        assert_eq!(e.executions(), 10);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_instance_list() {
        let mut e = evaluator(1);
        assert!(e.evaluate_set(&parse_syntax("smt").unwrap(), &[], 1000).unwrap().is_empty());
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let s = parse_syntax("(then simplify smt)").unwrap();
        let insts = instances(10);
        let one = evaluator(1).evaluate_set(&s, &insts, 1000).unwrap();
        let four = evaluator(4).evaluate_set(&s, &insts, 1000).unwrap();
        assert_eq!(one, four);
        assert!(one.iter().zip(&insts).all(|(r, i)| r.instance_id == i.id));
    }

    #[test]
    fn loads_benchmark_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("sub/b.smt2"), "(set-info :status sat)(declare-const a Bool)(assert a)").unwrap();
        fs::write(dir.path().join("a.smt2"), "(assert false)").unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let insts = load_benchmarks(dir.path()).unwrap();
        let ids: Vec<&str> = insts.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["a.smt2", "sub/b.smt2"]);
        assert_eq!(insts[1].expected, Status::Sat);
        assert_eq!(insts[1].features.as_ref().unwrap()["num-consts"], FeatureValue::Int(1));
    }
}
