//! Two-stage synthesis: linear strategies first, then combinations of the
//! best of them evaluated purely from cached results.

mod cached;
mod portfolio;
mod report;

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::eval::{
    par_of, reward_from_par10, EvalCache, EvalError, EvalRecord, Evaluator, FeatureMap, Instance, ScoreReport,
};
use crate::lang::{Strategy, TacticCatalog};
use crate::mcts::{run_search, MctsConfig, SearchError, SearchResult};
use crate::mdp::{Mdp, MdpError, StageConfig};

pub use cached::{cached_eval, linearize, member_outcomes, walk_steps, ExecutionStep, PortfolioIndex};
pub use portfolio::{select_portfolio, Selection};
pub use report::{Report, ReportMeta, ReportRow};

/// Default size cap of the stage-1 training subset.
pub const STAGE1_SUBSET_MAX: usize = 250;

#[derive(Debug, Error)]
pub enum StagedError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Search(#[from] SearchError<EvalError>),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("`{0}` is not a portfolio member")]
    NotInPortfolio(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<SearchError<StagedError>> for StagedError {
    fn from(e: SearchError<StagedError>) -> Self {
        match e {
            SearchError::Eval { source, .. } => source,
            SearchError::Config(m) => StagedError::Config(m),
            SearchError::Mdp(m) => StagedError::Mdp(m),
            SearchError::RolloutOverflow(n) => StagedError::Config(format!("rollout exceeded {n} steps")),
        }
    }
}

/// Which instances portfolio selection scores pool members on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionSet {
    /// Every pool member is first evaluated on the full training set.
    #[default]
    Full,
    /// Selection uses the stage-1 subset records only.
    Subset,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub training_set: Vec<Instance>,
    /// Stage-1 training subset; a seeded random subset when `None`.
    pub stage1_subset: Option<Vec<Instance>>,
    pub n_linear: usize,
    pub stage1_budget: usize,
    pub stage2_budget: usize,
    pub timeout_ms: u64,
    pub long_timeout_ms: Option<u64>,
    pub catalog: Arc<TacticCatalog>,
    pub seed: u64,
    pub c_uct: f64,
    pub c_bandit: f64,
    pub selection_set: SelectionSet,
    /// Written verbatim into the manifest.
    pub config_echo: serde_json::Value,
}

impl PipelineConfig {
    pub fn new(training_set: Vec<Instance>, catalog: Arc<TacticCatalog>) -> Self {
        PipelineConfig {
            training_set,
            stage1_subset: None,
            n_linear: 20,
            stage1_budget: 800,
            stage2_budget: 300_000,
            timeout_ms: 10_000,
            long_timeout_ms: None,
            catalog,
            seed: 0,
            c_uct: std::f64::consts::SQRT_2,
            c_bandit: std::f64::consts::SQRT_2,
            selection_set: SelectionSet::Full,
            config_echo: serde_json::Value::Null,
        }
    }

    pub fn check(&self) -> Result<(), StagedError> {
        let bad = |m: &str| Err(StagedError::Config(m.to_string()));
        if self.training_set.is_empty() {
            return bad("training set is empty");
        }
        if self.n_linear == 0 {
            return bad("n_linear must be at least 1");
        }
        if self.stage1_budget == 0 || self.stage2_budget == 0 {
            return bad("stage budgets must be at least 1");
        }
        if self.timeout_ms == 0 || self.long_timeout_ms == Some(0) {
            return bad("timeouts must be positive");
        }
        let mut ids = HashSet::new();
        if !self.training_set.iter().all(|i| ids.insert(i.id.as_str())) {
            return bad("instance ids must be unique");
        }
        if let Some(sub) = &self.stage1_subset {
            if sub.is_empty() {
                return bad("stage-1 subset is empty");
            }
            if let Some(i) = sub.iter().find(|i| !ids.contains(i.id.as_str())) {
                return Err(StagedError::Config(format!("stage-1 instance `{}` is not in the training set", i.id)));
            }
        }
        Ok(())
    }

    /// Timeout at which stage 2 and the final reports operate.
    pub fn target_timeout_ms(&self) -> u64 {
        self.long_timeout_ms.unwrap_or(self.timeout_ms)
    }

    pub fn stage1_seed(&self) -> u64 {
        self.seed
    }

    pub fn stage2_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn subset_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    /// The configured subset, or a seeded uniform sample of at most
    /// [`STAGE1_SUBSET_MAX`] instances kept in training-set order.
    pub fn stage1_instances(&self) -> Vec<Instance> {
        if let Some(s) = &self.stage1_subset {
            return s.clone();
        }
        let n = self.training_set.len();
        let k = n.min(STAGE1_SUBSET_MAX);
        let mut rng = ChaCha8Rng::seed_from_u64(self.subset_seed());
        let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| self.training_set[i].clone()).collect()
    }

    /// Catalog with try-for candidates for the given timeout.
    pub fn combine_catalog(&self) -> Arc<TacticCatalog> {
        Arc::new(self.catalog.as_ref().clone().with_default_try_for(self.target_timeout_ms()))
    }
}

#[derive(Debug, Clone)]
pub struct Stage1Result {
    /// Every distinct strategy evaluated, in first-seen order.
    pub pool: Vec<Strategy>,
    pub search: SearchResult,
}

/// Linear-strategy search on the stage-1 subset.
pub fn run_stage1(cfg: &PipelineConfig, evaluator: &mut Evaluator) -> Result<Stage1Result, StagedError> {
    cfg.check()?;
    let subset = cfg.stage1_instances();
    let mdp = Mdp::new(StageConfig::linear(), cfg.catalog.clone())?;
    let mcts = MctsConfig {
        budget: cfg.stage1_budget,
        c_uct: cfg.c_uct,
        c_bandit: cfg.c_bandit,
        seed: cfg.stage1_seed(),
        ..MctsConfig::default()
    };
    let mut pool = Vec::new();
    let search = run_search(
        &mdp,
        |s: &Strategy| {
            pool.push(s.clone());
            evaluator.reward(s, &subset, cfg.timeout_ms)
        },
        &mcts,
    )?;
    Ok(Stage1Result { pool, search })
}

/// Evaluates each strategy on every instance, filling the cache.
pub fn fill_cache(
    evaluator: &mut Evaluator,
    strategies: &[Strategy],
    instances: &[Instance],
    timeout_ms: u64,
) -> Result<(), EvalError> {
    for s in strategies {
        evaluator.evaluate_set(s, instances, timeout_ms)?;
    }
    Ok(())
}

/// Cached per-instance data for fast combined-strategy scoring.
pub struct CachedTable<'a> {
    pub portfolio: PortfolioIndex,
    features: Vec<&'a FeatureMap>,
    outcomes: Vec<Vec<(crate::eval::EvalResult, u64)>>,
    pub timeout_ms: u64,
}

impl<'a> CachedTable<'a> {
    pub fn new(
        portfolio: &[Strategy],
        instances: &'a [Instance],
        cache: &EvalCache,
        timeout_ms: u64,
    ) -> Result<Self, StagedError> {
        let index = PortfolioIndex::new(portfolio);
        let mut features = Vec::with_capacity(instances.len());
        let mut outcomes = Vec::with_capacity(instances.len());
        for inst in instances {
            features.push(
                inst.features
                    .as_ref()
                    .ok_or_else(|| EvalError::MissingFeature(format!("{} (no features)", inst.id)))?,
            );
            outcomes.push(member_outcomes(&index, inst, cache, timeout_ms)?);
        }
        Ok(CachedTable { portfolio: index, features, outcomes, timeout_ms })
    }

    /// `(result, wall_ms)` per instance.
    pub fn run(&self, s: &Strategy) -> Result<Vec<(crate::eval::EvalResult, u64)>, StagedError> {
        self.features
            .iter()
            .zip(&self.outcomes)
            .map(|(f, o)| Ok(walk_steps(&linearize(s, &self.portfolio, f, self.timeout_ms)?, o, self.timeout_ms)))
            .collect()
    }

    pub fn par10(&self, s: &Strategy) -> Result<f64, StagedError> {
        Ok(par_of(self.run(s)?, self.timeout_ms, 10)?)
    }
}

#[derive(Debug, Clone)]
pub struct Stage2Result {
    pub best: Strategy,
    pub best_par10: f64,
    pub search: SearchResult,
}

/// Combined-strategy search scored from the cache alone. The returned
/// strategy is the best of the search result and each bare portfolio
/// member, preferring members on ties.
pub fn run_stage2(
    cfg: &PipelineConfig,
    portfolio: &[Strategy],
    instances: &[Instance],
    cache: &EvalCache,
) -> Result<Stage2Result, StagedError> {
    if portfolio.is_empty() {
        return Err(StagedError::Config("portfolio is empty".into()));
    }
    let timeout = cfg.target_timeout_ms();
    let table = CachedTable::new(portfolio, instances, cache, timeout)?;
    let mdp = Mdp::new(StageConfig::combine(portfolio.to_vec()), cfg.combine_catalog())?;
    let mcts = MctsConfig {
        budget: cfg.stage2_budget,
        c_uct: cfg.c_uct,
        c_bandit: cfg.c_bandit,
        seed: cfg.stage2_seed(),
        ..MctsConfig::default()
    };
    let search = run_search(&mdp, |s: &Strategy| Ok::<_, StagedError>(reward_from_par10(table.par10(s)?, timeout)), &mcts)?;

    let mut best: Option<(Strategy, f64)> = None;
    for candidate in portfolio.iter().chain(std::iter::once(&search.best)) {
        let p = table.par10(candidate)?;
        if best.as_ref().is_none_or(|(_, b)| p < *b) {
            best = Some((candidate.clone(), p));
        }
    }
    let (best, best_par10) = best.expect("portfolio is nonempty");
    Ok(Stage2Result { best, best_par10, search })
}

/// Wall-clock milliseconds spent per pipeline phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub stage1_ms: u64,
    pub fill_ms: u64,
    pub selection_ms: u64,
    pub reevaluation_ms: u64,
    pub stage2_ms: u64,
    pub report_ms: u64,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub stage1_pool: Vec<Strategy>,
    pub portfolio: Vec<Strategy>,
    pub vbs_trace: Vec<f64>,
    pub final_strategy: Strategy,
    pub final_par10: f64,
    pub report: Report,
    pub timings: StageTimings,
    /// Backend executions observed while stage 2 ran.
    pub stage2_backend_calls: u64,
}

/// Score reports of the final strategy (first) and each portfolio member,
/// on `instances` at `timeout_ms`, from the cache.
pub fn training_report(
    final_strategy: &Strategy,
    portfolio: &[Strategy],
    instances: &[Instance],
    cache: &EvalCache,
    timeout_ms: u64,
    backend_tag: &str,
    seed: u64,
) -> Result<Vec<ScoreReport>, StagedError> {
    let table = CachedTable::new(portfolio, instances, cache, timeout_ms)?;
    let mut out = Vec::with_capacity(portfolio.len() + 1);
    for s in std::iter::once(final_strategy).chain(portfolio) {
        let key = s.canonical_key();
        let records: Vec<EvalRecord> = table
            .run(s)?
            .into_iter()
            .zip(instances)
            .map(|((result, wall_ms), inst)| EvalRecord {
                strategy_key: key.clone(),
                instance_id: inst.id.clone(),
                timeout_ms,
                result,
                wall_ms,
                backend_tag: backend_tag.to_string(),
                seed,
            })
            .collect();
        out.push(ScoreReport::from_records(&s.render(), instances, &records, timeout_ms)?);
    }
    Ok(out)
}

fn ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// Runs both stages and, with an output directory, writes `portfolio.txt`,
/// `final_strategy.txt`, `report.json`, `cache.jsonl` and `manifest.json`.
/// A failing run still writes a manifest describing the error.
pub fn synthesize(
    cfg: &PipelineConfig,
    evaluator: &mut Evaluator,
    out_dir: Option<&Path>,
) -> Result<PipelineResult, StagedError> {
    let mut timings = StageTimings::default();
    let mut artifacts: Vec<&'static str> = Vec::new();
    let result = pipeline(cfg, evaluator, out_dir, &mut timings, &mut artifacts);
    if let Some(dir) = out_dir {
        let error = result.as_ref().err().map(|e| e.to_string());
        if dir.is_dir() {
            if let Ok(()) = evaluator.cache_mut().flush() {
                if copy_cache(evaluator.cache(), dir).is_ok() && !artifacts.contains(&"cache.jsonl") {
                    artifacts.push("cache.jsonl");
                }
            }
            write_manifest(cfg, evaluator, dir, &timings, &artifacts, error.as_deref())?;
        }
    }
    result
}

fn pipeline(
    cfg: &PipelineConfig,
    evaluator: &mut Evaluator,
    out_dir: Option<&Path>,
    timings: &mut StageTimings,
    artifacts: &mut Vec<&'static str>,
) -> Result<PipelineResult, StagedError> {
    cfg.check()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let p = &cfg.training_set;

    let t = Instant::now();
    let stage1 = run_stage1(cfg, evaluator)?;
    timings.stage1_ms = ms(t);

    let t = Instant::now();
    let selection_instances = match cfg.selection_set {
        SelectionSet::Full => {
            fill_cache(evaluator, &stage1.pool, p, cfg.timeout_ms)?;
            p.clone()
        }
        SelectionSet::Subset => cfg.stage1_instances(),
    };
    timings.fill_ms = ms(t);

    let t = Instant::now();
    let selection = select_portfolio(&stage1.pool, &selection_instances, evaluator.cache(), cfg.n_linear, cfg.timeout_ms)?;
    timings.selection_ms = ms(t);
    if let Some(dir) = out_dir {
        let text: String = selection.portfolio.iter().map(|s| s.render() + "\n").collect();
        fs::write(dir.join("portfolio.txt"), text)?;
        artifacts.push("portfolio.txt");
    }

    let t = Instant::now();
    let target = cfg.target_timeout_ms();
    fill_cache(evaluator, &selection.portfolio, p, target)?;
    timings.reevaluation_ms = ms(t);

    let t = Instant::now();
    let calls_before = evaluator.executions();
    let stage2 = run_stage2(cfg, &selection.portfolio, p, evaluator.cache())?;
    let stage2_backend_calls = evaluator.executions() - calls_before;
    timings.stage2_ms = ms(t);
    if let Some(dir) = out_dir {
        fs::write(dir.join("final_strategy.txt"), stage2.best.render() + "\n")?;
        artifacts.push("final_strategy.txt");
    }

    let t = Instant::now();
    let backend_tag = evaluator.backend().tag();
    let scores = training_report(
        &stage2.best,
        &selection.portfolio,
        p,
        evaluator.cache(),
        target,
        &backend_tag,
        evaluator.backend().seed(),
    )?;
    let report = Report {
        meta: Some(ReportMeta {
            backend: backend_tag,
            timeout_ms: target,
            instances: p.len(),
            stage1_instances: cfg.stage1_instances().len(),
            stage1_pool_size: stage1.pool.len(),
            vbs_trace: selection.vbs_trace.clone(),
            final_strategy: stage2.best.render(),
        }),
        rows: scores.into_iter().map(ReportRow::Score).collect(),
    };
    if let Some(dir) = out_dir {
        fs::write(dir.join("report.json"), report.to_json() + "\n")?;
        artifacts.push("report.json");
    }
    timings.report_ms = ms(t);

    Ok(PipelineResult {
        stage1_pool: stage1.pool,
        portfolio: selection.portfolio,
        vbs_trace: selection.vbs_trace,
        final_strategy: stage2.best,
        final_par10: stage2.best_par10,
        report,
        timings: timings.clone(),
        stage2_backend_calls,
    })
}

fn copy_cache(cache: &EvalCache, dir: &Path) -> Result<(), EvalError> {
    let target = dir.join("cache.jsonl");
    let same = match (cache.path().map(fs::canonicalize), fs::canonicalize(&target)) {
        (Some(Ok(a)), Ok(b)) => a == b,
        _ => false,
    };
    if !same {
        cache.export(&target)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    config: &'a serde_json::Value,
    seeds: Seeds,
    backend: String,
    instances: usize,
    timings_ms: &'a StageTimings,
    artifacts: &'a [&'static str],
}

#[derive(Serialize)]
struct Seeds {
    base: u64,
    stage1_search: u64,
    stage2_search: u64,
    stage1_subset: u64,
    backend: u64,
}

fn write_manifest(
    cfg: &PipelineConfig,
    evaluator: &Evaluator,
    dir: &Path,
    timings: &StageTimings,
    artifacts: &[&'static str],
    error: Option<&str>,
) -> Result<(), StagedError> {
    let m = Manifest {
        status: if error.is_some() { "failed" } else { "complete" },
        error,
        config: &cfg.config_echo,
        seeds: Seeds {
            base: cfg.seed,
            stage1_search: cfg.stage1_seed(),
            stage2_search: cfg.stage2_seed(),
            stage1_subset: cfg.subset_seed(),
            backend: evaluator.backend().seed(),
        },
        backend: evaluator.backend().tag(),
        instances: cfg.training_set.len(),
        timings_ms: timings,
        artifacts,
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}
