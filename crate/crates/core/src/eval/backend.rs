use std::env;
use std::fs;
use std::io::{Read, Seek, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wait_timeout::ChildExt;

use super::record::{EvalRecord, EvalResult, Instance};
use super::score::eval_predicate;
use super::smtlib::apply_strategy;
use super::EvalError;
use crate::lang::{Predicate, Strategy};

/// Grace period past the timeout before the solver process is killed.
pub const KILL_GRACE_MS: u64 = 250;

pub trait Backend: Send + Sync {
    /// Short identifier stored in cache records.
    fn tag(&self) -> String;
    fn seed(&self) -> u64;
    /// Runs `strategy` on `instance`, returning the result and wall time.
    fn run(&self, strategy: &Strategy, instance: &Instance, timeout_ms: u64) -> Result<(EvalResult, u64), EvalError>;
}

/// Executes one strategy and packages the outcome as a record, with the
/// wall time clamped to the timeout.
pub fn execute(
    backend: &dyn Backend,
    strategy: &Strategy,
    instance: &Instance,
    timeout_ms: u64,
) -> Result<EvalRecord, EvalError> {
    if timeout_ms == 0 {
        return Err(EvalError::InvalidTimeout);
    }
    let (mut result, mut wall_ms) = backend.run(strategy, instance, timeout_ms)?;
    if result == EvalResult::Timeout || wall_ms > timeout_ms {
        result = EvalResult::Timeout;
        wall_ms = timeout_ms;
    }
    Ok(EvalRecord {
        strategy_key: strategy.canonical_key(),
        instance_id: instance.id.clone(),
        timeout_ms,
        result,
        wall_ms,
        backend_tag: backend.tag(),
        seed: backend.seed(),
    })
}

/// Multiplies simulated run time by `factor` for linear strategies that
/// apply `tactic` on instances satisfying `when`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimRule {
    pub tactic: String,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_predicate")]
    pub when: Option<Predicate>,
    pub factor: f64,
}

mod opt_predicate {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::lang::{parse_syntax, Predicate, Strategy};

    pub fn serialize<S: Serializer>(p: &Option<Predicate>, s: S) -> Result<S::Ok, S::Error> {
        match p {
            Some(p) => s.serialize_str(&p.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Predicate>, D::Error> {
        let Some(text) = Option::<String>::deserialize(d)? else { return Ok(None) };
        // reuse the strategy parser by wrapping the predicate in an `if`
        match parse_syntax(&format!("(if {text} x x)")) {
            Ok(Strategy::If(p, _, _)) => Ok(Some(p)),
            _ => Err(serde::de::Error::custom(format!("invalid predicate `{text}`"))),
        }
    }
}

/// Deterministic synthetic cost model.
///
/// A linear strategy `L` on instance `f` gets `u ∈ (0, 1]` and a bit from
/// `sha256(key(L), f.id, seed)`. Its run time is
/// `t = ⌈u · 2·ref · difficulty(f) · Π factors⌉` where `ref` is the
/// reference timeout (the evaluation timeout unless fixed). With `t ≤ τ` the
/// result is the expected status if the bit is set and unknown otherwise;
/// beyond `τ` it is a timeout.
///
/// Branched strategies are interpreted directly over these linear outcomes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulatedBackend {
    pub seed: u64,
    pub reference_timeout_ms: Option<u64>,
    pub rules: Vec<SimRule>,
}

impl SimulatedBackend {
    pub fn new(seed: u64) -> Self {
        SimulatedBackend { seed, ..Default::default() }
    }

    fn hash(&self, key: &str, instance_id: &str) -> (f64, bool) {
        let mut h = Sha256::new();
        h.update(key.as_bytes());
        h.update([0]);
        h.update(instance_id.as_bytes());
        h.update([0]);
        h.update(self.seed.to_le_bytes());
        let d = h.finalize();
        let x = u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"));
        let u = ((x >> 11) + 1) as f64 / (1u64 << 53) as f64;
        (u, d[8] & 1 == 1)
    }

    /// Outcome of a linear strategy under a full timeout.
    pub fn linear_outcome(&self, linear: &Strategy, instance: &Instance, timeout_ms: u64) -> (EvalResult, u64) {
        let reference = self.reference_timeout_ms.unwrap_or(timeout_ms) as f64;
        let (u, bit) = self.hash(&linear.canonical_key(), &instance.id);
        let tactics = linear.linear_tactics().unwrap_or_default();
        let mut scale = instance.difficulty;
        for rule in &self.rules {
            let applies = tactics.iter().any(|t| t.name == rule.tactic)
                && match (&rule.when, &instance.features) {
                    (None, _) => true,
                    (Some(p), Some(f)) => eval_predicate(p, f).unwrap_or(false),
                    (Some(_), None) => false,
                };
            if applies {
                scale *= rule.factor;
            }
        }
        let t = (u * 2.0 * reference * scale).ceil();
        if !t.is_finite() || t > timeout_ms as f64 {
            return (EvalResult::Timeout, timeout_ms);
        }
        let t = (t as u64).max(1);
        if bit {
            (EvalResult::from_status(instance.expected), t)
        } else {
            (EvalResult::Unknown, t)
        }
    }

    /// Direct execution of a combined strategy. Unlike [`Backend::run`],
    /// a bare linear strategy that does not solve reports a timeout here,
    /// as it would inside a combination.
    pub fn run_combined(&self, s: &Strategy, instance: &Instance, timeout_ms: u64) -> Result<(EvalResult, u64), EvalError> {
        match self.interpret(s, instance, timeout_ms, timeout_ms)? {
            (Some(r), t) => Ok((r, t)),
            (None, _) => Ok((EvalResult::Timeout, timeout_ms)),
        }
    }

    /// Direct execution under a static budget. Returns the solving result
    /// (if any) and the time consumed, which never exceeds `budget`.
    fn interpret(
        &self,
        s: &Strategy,
        instance: &Instance,
        budget: u64,
        timeout_ms: u64,
    ) -> Result<(Option<EvalResult>, u64), EvalError> {
        match s {
            Strategy::Apply(_) | Strategy::Then(..) => {
                let (r, t) = self.linear_outcome(s, instance, timeout_ms);
                if t > budget {
                    Ok((None, budget))
                } else if r.is_solved() {
                    Ok((Some(r), t))
                } else {
                    Ok((None, t))
                }
            }
            Strategy::TryFor(child, c) => self.interpret(child, instance, budget.min(*c), timeout_ms),
            Strategy::OrElse(a, b) => {
                let nominal = match a.as_ref() {
                    Strategy::TryFor(_, c) => budget.min(*c),
                    _ => budget,
                };
                let (ra, ta) = self.interpret(a, instance, nominal, timeout_ms)?;
                if ra.is_some() {
                    return Ok((ra, ta));
                }
                let (rb, tb) = self.interpret(b, instance, budget - nominal, timeout_ms)?;
                Ok((rb, ta + tb))
            }
            Strategy::If(p, a, b) => {
                let features = instance
                    .features
                    .as_ref()
                    .ok_or_else(|| EvalError::MissingFeature(p.probe_name().to_string()))?;
                let branch = if eval_predicate(p, features)? { a } else { b };
                self.interpret(branch, instance, budget, timeout_ms)
            }
        }
    }
}

impl Backend for SimulatedBackend {
    fn tag(&self) -> String {
        "simulated".into()
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn run(&self, strategy: &Strategy, instance: &Instance, timeout_ms: u64) -> Result<(EvalResult, u64), EvalError> {
        if strategy.is_linear() {
            return Ok(self.linear_outcome(strategy, instance, timeout_ms));
        }
        self.run_combined(strategy, instance, timeout_ms)
    }
}

/// Runs a real solver process per instance.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    solver: PathBuf,
    template: String,
    seed: u64,
}

/// Default invocation, for solvers that read SMT-LIB v2 from a file.
pub const DEFAULT_TEMPLATE: &str = "{solver_path} -smt2 {file}";

fn locate(program: &Path) -> Option<PathBuf> {
    if program.components().count() > 1 {
        return program.is_file().then(|| program.to_path_buf());
    }
    env::split_paths(&env::var_os("PATH")?).map(|d| d.join(program)).find(|p| p.is_file())
}

impl ExternalBackend {
    /// Fails with `BackendUnavailable` if the solver binary cannot be found.
    pub fn new(solver: impl AsRef<Path>, template: Option<&str>, seed: u64) -> Result<Self, EvalError> {
        let solver = solver.as_ref();
        let found = locate(solver).ok_or_else(|| EvalError::BackendUnavailable(solver.display().to_string()))?;
        Ok(ExternalBackend { solver: found, template: template.unwrap_or(DEFAULT_TEMPLATE).to_string(), seed })
    }

    pub fn solver(&self) -> &Path {
        &self.solver
    }

    fn argv(&self, file: &Path, timeout_ms: u64) -> Vec<String> {
        self.template
            .split_whitespace()
            .map(|tok| {
                tok.replace("{solver_path}", &self.solver.to_string_lossy())
                    .replace("{file}", &file.to_string_lossy())
                    .replace("{timeout_ms}", &timeout_ms.to_string())
                    .replace("{timeout_s}", &timeout_ms.div_ceil(1000).to_string())
                    .replace("{seed}", &self.seed.to_string())
            })
            .collect()
    }
}

impl Backend for ExternalBackend {
    fn tag(&self) -> String {
        let name = self.solver.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        format!("external:{name}")
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn run(&self, strategy: &Strategy, instance: &Instance, timeout_ms: u64) -> Result<(EvalResult, u64), EvalError> {
        let path = instance.path.as_ref().ok_or_else(|| EvalError::NoSource(instance.id.clone()))?;
        let text = fs::read_to_string(path)?;
        let script = apply_strategy(&text, strategy).map_err(|e| EvalError::Parse { instance: instance.id.clone(), source: e })?;
        let mut input = tempfile::Builder::new().suffix(".smt2").tempfile()?;
        input.write_all(script.as_bytes())?;
        input.flush()?;
        let mut output = tempfile::tempfile()?;

        let argv = self.argv(input.path(), timeout_ms);
        let start = Instant::now();
        let mut child = match Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::from(output.try_clone()?))
            .stderr(Stdio::null())
            .spawn()
        {
            Ok(c) => c,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(EvalError::BackendUnavailable(argv[0].clone()))
            }
            Err(e) => return Err(e.into()),
        };
        let status = child.wait_timeout(Duration::from_millis(timeout_ms + KILL_GRACE_MS))?;
        let wall_ms = start.elapsed().as_millis() as u64;
        let Some(status) = status else {
            let _ = child.kill();
            let _ = child.wait();
            return Ok((EvalResult::Timeout, timeout_ms));
        };
        if wall_ms > timeout_ms {
            return Ok((EvalResult::Timeout, timeout_ms));
        }
        let mut out = String::new();
        output.rewind()?;
        output.read_to_string(&mut out)?;
        let result = match (status.success(), out.split_whitespace().next()) {
            (true, Some("sat")) => EvalResult::Sat,
            (true, Some("unsat")) => EvalResult::Unsat,
            (true, Some("unknown")) => EvalResult::Unknown,
            _ => EvalResult::Error,
        };
        Ok((result, wall_ms))
    }
}
