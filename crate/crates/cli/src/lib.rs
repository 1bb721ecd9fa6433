//! Command implementations behind the `stratsynth` binary.

pub mod config;

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use stratsynth_core::eval::{
    extract_features, load_benchmarks, EvalCache, EvalError, EvalRecord, Evaluator, ExternalBackend, Instance,
    ScoreReport, SimulatedBackend, Status,
};
use stratsynth_core::mcts::SearchError;
use stratsynth_core::lang::{parse, validate, LangError, Strategy, TacticCatalog};
use stratsynth_core::staged::{
    fill_cache, run_stage1, run_stage2, select_portfolio, synthesize, training_report, PipelineConfig, Report,
    ReportMeta, ReportRow, SelectionSet, StagedError,
};
use thiserror::Error;

pub use config::{load_config, BackendKind, Config, ConfigError, SimulatedConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("catalog: {0}")]
    Catalog(LangError),
    #[error("{0}")]
    Input(String),
    #[error("solver backend unavailable: `{0}` not found")]
    BackendUnavailable(String),
    #[error("soundness alarm: {0} wrong answer(s)")]
    Soundness(usize),
    #[error(transparent)]
    Eval(EvalError),
    #[error(transparent)]
    Staged(StagedError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BackendUnavailable(s) => CliError::BackendUnavailable(s),
            e => CliError::Eval(e),
        }
    }
}

impl From<StagedError> for CliError {
    fn from(e: StagedError) -> Self {
        match e {
            StagedError::Eval(e) => e.into(),
            StagedError::Search(SearchError::Eval { source: EvalError::BackendUnavailable(s), .. }) => {
                CliError::BackendUnavailable(s)
            }
            e => CliError::Staged(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Catalog(_) => 2,
            CliError::BackendUnavailable(_) => 3,
            CliError::Soundness(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Renders a report, optionally also writing it to `path`.
pub fn emit_report(report: &Report, format: Format, path: Option<&Path>) -> io::Result<String> {
    let text = match format {
        Format::Text => report.to_text(),
        Format::Json => report.to_json() + "\n",
    };
    if let Some(p) = path {
        fs::write(p, &text)?;
    }
    Ok(text)
}

/// A loaded config with its catalog and instances.
pub struct Session {
    pub cfg: Config,
    pub catalog: Arc<TacticCatalog>,
    pub instances: Vec<Instance>,
    pub out: PathBuf,
}

impl Session {
    pub fn open(config_path: &Path, overrides: &Overrides) -> Result<Session, CliError> {
        let mut cfg = load_config(config_path)?;
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(w) = overrides.workers {
            if w == 0 {
                return Err(ConfigError::Invalid { path: "workers".into(), reason: "must be positive".into() }.into());
            }
            cfg.workers = w;
        }
        let out = match &overrides.out {
            Some(o) => o.clone(),
            None => cfg.output_path(),
        };
        let catalog = TacticCatalog::load(&cfg.resolve(&cfg.catalog_path)).map_err(CliError::Catalog)?;
        let instances = load_instances(&cfg)?;
        if instances.is_empty() {
            return Err(CliError::Input("no benchmark instances found".into()));
        }
        Ok(Session { cfg, catalog: Arc::new(catalog), instances, out })
    }

    fn ensure_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out)?;
        Ok(())
    }

    /// Evaluator over the configured backend, caching to `<out>/cache.jsonl`.
    pub fn evaluator(&self) -> Result<Evaluator, CliError> {
        self.ensure_out()?;
        let backend: Arc<dyn stratsynth_core::eval::Backend> = match self.cfg.backend {
            BackendKind::External => Arc::new(ExternalBackend::new(
                solver_arg(&self.cfg),
                Some(&self.cfg.solver_command_template),
                self.cfg.seed,
            )?),
            BackendKind::Simulated => {
                let sim = self.cfg.simulated.clone().unwrap_or_default();
                Arc::new(SimulatedBackend {
                    seed: self.cfg.seed,
                    reference_timeout_ms: sim.reference_timeout_ms,
                    rules: sim.rules,
                })
            }
        };
        let cache = EvalCache::open(&self.out.join("cache.jsonl"))?;
        Ok(Evaluator::new(backend, cache, self.cfg.workers)?)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, CliError> {
        let mut p = PipelineConfig::new(self.instances.clone(), self.catalog.clone());
        p.n_linear = self.cfg.n_linear;
        p.stage1_budget = self.cfg.stage1_budget;
        p.stage2_budget = self.cfg.stage2_budget;
        p.timeout_ms = self.cfg.timeout_ms;
        p.long_timeout_ms = self.cfg.long_timeout_ms;
        p.seed = self.cfg.seed;
        p.c_uct = self.cfg.c_uct;
        p.c_bandit = self.cfg.c_bandit;
        p.selection_set = self.cfg.selection_set;
        p.config_echo = serde_json::from_str(&self.cfg.to_json()).expect("config is JSON");
        if let Some(ids) = &self.cfg.stage1_subset {
            let by_id: HashMap<&str, &Instance> = self.instances.iter().map(|i| (i.id.as_str(), i)).collect();
            let subset = ids
                .iter()
                .map(|id| {
                    by_id.get(id.as_str()).map(|i| (*i).clone()).ok_or_else(|| {
                        CliError::Config(ConfigError::Invalid {
                            path: "stage1_subset".into(),
                            reason: format!("unknown instance `{id}`"),
                        })
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            p.stage1_subset = Some(subset);
        }
        Ok(p)
    }

    /// Parses one strategy per nonblank line.
    pub fn read_strategies(&self, path: &Path) -> Result<Vec<Strategy>, CliError> {
        let text = fs::read_to_string(path)?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                let s = parse(l, &self.catalog)
                    .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), n + 1)))?;
                let violations = validate(&s, &self.catalog);
                if let Some(v) = violations.first() {
                    return Err(CliError::Input(format!(
                        "{}:{}: violates rule {} at `{}`",
                        path.display(),
                        n + 1,
                        v.rule,
                        v.at
                    )));
                }
                Ok(s)
            })
            .collect()
    }
}

fn solver_arg(cfg: &Config) -> PathBuf {
    // bare program names are looked up on PATH, anything else is a path
    if cfg.solver_path.components().count() > 1 {
        cfg.resolve(&cfg.solver_path)
    } else {
        cfg.solver_path.clone()
    }
}

fn load_instances(cfg: &Config) -> Result<Vec<Instance>, CliError> {
    if let Some(f) = cfg.simulated.as_ref().and_then(|s| s.instances.as_ref()) {
        let path = cfg.resolve(f);
        let text = fs::read_to_string(&path)?;
        let instances: Vec<Instance> =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if let Some(i) = instances.iter().find(|i| i.features.is_none()) {
            return Err(CliError::Input(format!("{}: instance `{}` has no features", path.display(), i.id)));
        }
        return Ok(instances);
    }
    let mut out = Vec::new();
    let multiple = cfg.benchmark_dirs.len() > 1;
    for (k, d) in cfg.benchmark_dirs.iter().enumerate() {
        for mut inst in load_benchmarks(&cfg.resolve(d))? {
            if multiple {
                inst.id = format!("{k}:{}", inst.id);
            }
            out.push(inst);
        }
    }
    Ok(out)
}

fn soundness(report: &Report) -> Result<(), CliError> {
    match report.wrong_answers() {
        0 => Ok(()),
        n => Err(CliError::Soundness(n)),
    }
}

fn write_lines(path: &Path, strategies: &[Strategy]) -> io::Result<()> {
    fs::write(path, strategies.iter().map(|s| s.render() + "\n").collect::<String>())
}

/// Full pipeline. Returns the rendered report.
pub fn cmd_synth(session: &Session, format: Format) -> Result<String, CliError> {
    let cfg = session.pipeline_config()?;
    let mut ev = session.evaluator()?;
    let result = synthesize(&cfg, &mut ev, Some(&session.out))?;
    let text = emit_report(&result.report, format, None)?;
    soundness(&result.report)?;
    Ok(text)
}

/// Stage 1 only; writes `pool.txt`.
pub fn cmd_stage1(session: &Session) -> Result<String, CliError> {
    let cfg = session.pipeline_config()?;
    let mut ev = session.evaluator()?;
    let r = run_stage1(&cfg, &mut ev)?;
    write_lines(&session.out.join("pool.txt"), &r.pool)?;
    Ok(format!(
        "explored {} linear strategies\nbest (reward {:.6}): {}\n",
        r.pool.len(),
        r.search.best_reward,
        r.search.best.render()
    ))
}

/// Portfolio selection from a pool file; writes `portfolio.txt`.
pub fn cmd_select(session: &Session, pool_path: &Path) -> Result<String, CliError> {
    let cfg = session.pipeline_config()?;
    let pool = session.read_strategies(pool_path)?;
    let mut ev = session.evaluator()?;
    let instances = match cfg.selection_set {
        SelectionSet::Full => cfg.training_set.clone(),
        SelectionSet::Subset => cfg.stage1_instances(),
    };
    fill_cache(&mut ev, &pool, &instances, cfg.timeout_ms)?;
    let sel = select_portfolio(&pool, &instances, ev.cache(), cfg.n_linear, cfg.timeout_ms)?;
    write_lines(&session.out.join("portfolio.txt"), &sel.portfolio)?;
    let mut out = String::new();
    for (s, v) in sel.portfolio.iter().zip(&sel.vbs_trace) {
        out += &format!("{v:.3}\t{}\n", s.render());
    }
    Ok(out)
}

/// Stage 2 from a portfolio file; writes `final_strategy.txt` and
/// `report.json`.
pub fn cmd_stage2(session: &Session, portfolio_path: &Path, format: Format) -> Result<String, CliError> {
    let cfg = session.pipeline_config()?;
    let portfolio = session.read_strategies(portfolio_path)?;
    if portfolio.is_empty() {
        return Err(CliError::Input(format!("{}: empty portfolio", portfolio_path.display())));
    }
    if let Some(s) = portfolio.iter().find(|s| !s.is_linear()) {
        return Err(CliError::Input(format!("portfolio member `{}` is not linear", s.render())));
    }
    let mut ev = session.evaluator()?;
    let target = cfg.target_timeout_ms();
    fill_cache(&mut ev, &portfolio, &cfg.training_set, target)?;
    let r = run_stage2(&cfg, &portfolio, &cfg.training_set, ev.cache())?;
    fs::write(session.out.join("final_strategy.txt"), r.best.render() + "\n")?;
    let tag = ev.backend().tag();
    let scores = training_report(&r.best, &portfolio, &cfg.training_set, ev.cache(), target, &tag, ev.backend().seed())?;
    let report = Report {
        meta: Some(ReportMeta {
            backend: tag,
            timeout_ms: target,
            instances: cfg.training_set.len(),
            stage1_instances: 0,
            stage1_pool_size: 0,
            vbs_trace: Vec::new(),
            final_strategy: r.best.render(),
        }),
        rows: scores.into_iter().map(ReportRow::Score).collect(),
    };
    fs::write(session.out.join("report.json"), report.to_json() + "\n")?;
    let text = emit_report(&report, format, None)?;
    soundness(&report)?;
    Ok(text)
}

/// Runs one strategy (read from a file) on every instance through the
/// backend; writes `eval_report.json`.
pub fn cmd_eval(
    session: &Session,
    strategy_path: &Path,
    timeout_ms: Option<u64>,
    format: Format,
) -> Result<String, CliError> {
    let text = fs::read_to_string(strategy_path)?;
    let strategy = parse(text.trim(), &session.catalog)
        .map_err(|e| CliError::Input(format!("{}: {e}", strategy_path.display())))?;
    for v in validate(&strategy, &session.catalog) {
        log::warn!("strategy violates rule {} at `{}`", v.rule, v.at);
    }
    let timeout = timeout_ms.unwrap_or(session.cfg.timeout_ms);
    if timeout == 0 {
        return Err(CliError::Input("--timeout-ms must be positive".into()));
    }
    let mut ev = session.evaluator()?;
    let records = ev.evaluate_set(&strategy, &session.instances, timeout)?;
    let row = match ScoreReport::from_records(&strategy.render(), &session.instances, &records, timeout) {
        Ok(r) => ReportRow::Score(r),
        Err(e) => ReportRow::Error { strategy: strategy.render(), error: e.to_string() },
    };
    let report = Report { meta: None, rows: vec![row] };
    fs::write(session.out.join("eval_report.json"), report.to_json() + "\n")?;
    let out = emit_report(&report, format, None)?;
    soundness(&report)?;
    Ok(out)
}

/// Feature map of one SMT-LIB file as JSON.
pub fn cmd_features(instance: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(instance)?;
    let f = extract_features(&text).map_err(|e| CliError::Input(format!("{}: {e}", instance.display())))?;
    Ok(serde_json::to_string_pretty(&f).expect("features serialize") + "\n")
}

/// Scores every (strategy, timeout) group of a cache file. Expected
/// statuses come from the session's instances when given.
pub fn report_from_cache(cache_path: &Path, session: Option<&Session>) -> Result<Report, CliError> {
    let cache = EvalCache::read(cache_path)?;
    let expected: HashMap<&str, Status> = session
        .map(|s| s.instances.iter().map(|i| (i.id.as_str(), i.expected)).collect())
        .unwrap_or_default();
    let mut groups: Vec<((String, u64), Vec<EvalRecord>)> = Vec::new();
    for r in cache.records() {
        let k = (r.strategy_key.clone(), r.timeout_ms);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r.clone()),
            None => groups.push((k, vec![r.clone()])),
        }
    }
    if groups.is_empty() {
        return Ok(Report {
            meta: None,
            rows: vec![ReportRow::Error { strategy: "*".into(), error: EvalError::EmptySet.to_string() }],
        });
    }
    let rows = groups
        .into_iter()
        .map(|((key, timeout), records)| {
            let instances: Vec<Instance> = records
                .iter()
                .map(|r| Instance {
                    id: r.instance_id.clone(),
                    path: None,
                    expected: expected.get(r.instance_id.as_str()).copied().unwrap_or_default(),
                    features: None,
                    difficulty: 1.0,
                })
                .collect();
            match ScoreReport::from_records(&key, &instances, &records, timeout) {
                Ok(r) => ReportRow::Score(r),
                Err(e) => ReportRow::Error { strategy: key, error: e.to_string() },
            }
        })
        .collect();
    Ok(Report { meta: None, rows })
}

pub fn cmd_report(cache_path: &Path, session: Option<&Session>, format: Format) -> Result<String, CliError> {
    let report = report_from_cache(cache_path, session)?;
    let out = emit_report(&report, format, None)?;
    soundness(&report)?;
    Ok(out)
}
