//! Evaluation of combined strategies from cached linear-strategy records.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::StagedError;
use crate::eval::{eval_predicate, EvalCache, EvalError, EvalResult, FeatureMap, Instance};
use crate::lang::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionStep {
    pub linear_index: usize,
    pub budget_ms: u64,
}

/// Maps portfolio members (by canonical key) to their index.
#[derive(Debug, Clone, Default)]
pub struct PortfolioIndex {
    keys: Vec<String>,
    index: HashMap<String, usize>,
}

impl PortfolioIndex {
    pub fn new(portfolio: &[Strategy]) -> Self {
        let keys: Vec<String> = portfolio.iter().map(Strategy::canonical_key).collect();
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        PortfolioIndex { keys, index }
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn lookup(&self, leaf: &Strategy) -> Result<usize, StagedError> {
        self.index.get(&leaf.canonical_key()).copied().ok_or_else(|| StagedError::NotInPortfolio(leaf.render()))
    }
}

/// Flattens a combined strategy into the portfolio runs it performs on an
/// instance with the given features. Budgets are nominal: a try-for gets
/// `min(c, remaining)` and the or-else fallback the rest, so for combined
/// strategies the budgets sum to `timeout_ms`. Zero-budget steps are
/// dropped.
pub fn linearize(
    branched: &Strategy,
    portfolio: &PortfolioIndex,
    features: &FeatureMap,
    timeout_ms: u64,
) -> Result<Vec<ExecutionStep>, StagedError> {
    let mut steps = Vec::new();
    let mut node = branched;
    let mut budget = timeout_ms;
    loop {
        match node {
            Strategy::If(p, a, b) => {
                node = if eval_predicate(p, features)? { a } else { b };
            }
            Strategy::OrElse(first, rest) => {
                let (leaf, c) = match first.as_ref() {
                    Strategy::TryFor(leaf, c) => (leaf.as_ref(), (*c).min(budget)),
                    other => (other, budget),
                };
                push(&mut steps, portfolio, leaf, c, features)?;
                budget -= c;
                node = rest;
            }
            Strategy::TryFor(child, c) => {
                push(&mut steps, portfolio, child, (*c).min(budget), features)?;
                return Ok(steps);
            }
            leaf => {
                push(&mut steps, portfolio, leaf, budget, features)?;
                return Ok(steps);
            }
        }
    }
}

fn push(
    steps: &mut Vec<ExecutionStep>,
    portfolio: &PortfolioIndex,
    s: &Strategy,
    budget: u64,
    features: &FeatureMap,
) -> Result<(), StagedError> {
    if s.is_linear() {
        if budget > 0 {
            steps.push(ExecutionStep { linear_index: portfolio.lookup(s)?, budget_ms: budget });
        }
        return Ok(());
    }
    // general nesting inside try-for or the first or-else branch
    let inner = linearize(s, portfolio, features, budget)?;
    steps.extend(inner);
    Ok(())
}

/// Walks the steps over per-member `(result, wall_ms)` outcomes recorded
/// at the full timeout.
pub fn walk_steps(steps: &[ExecutionStep], outcomes: &[(EvalResult, u64)], timeout_ms: u64) -> (EvalResult, u64) {
    let mut elapsed = 0;
    for step in steps {
        let (r, t) = outcomes[step.linear_index];
        if t <= step.budget_ms && r != EvalResult::Timeout {
            if r.is_solved() {
                return (r, elapsed + t);
            }
            elapsed += t;
        } else {
            elapsed += step.budget_ms;
        }
    }
    (EvalResult::Timeout, timeout_ms)
}

/// Per-member outcomes of one instance at `timeout_ms`, from the cache.
pub fn member_outcomes(
    portfolio: &PortfolioIndex,
    instance: &Instance,
    cache: &EvalCache,
    timeout_ms: u64,
) -> Result<Vec<(EvalResult, u64)>, EvalError> {
    portfolio
        .keys()
        .iter()
        .map(|k| {
            cache
                .get(k, &instance.id, timeout_ms)
                .map(|r| (r.result, r.wall_ms))
                .ok_or_else(|| EvalError::MissingRecord { strategy: k.clone(), instance: instance.id.clone() })
        })
        .collect()
}

/// Result and wall time of a combined strategy, computed from cached
/// records of the portfolio members only.
pub fn cached_eval(
    branched: &Strategy,
    portfolio: &PortfolioIndex,
    instance: &Instance,
    cache: &EvalCache,
    timeout_ms: u64,
) -> Result<(EvalResult, u64), StagedError> {
    let features = instance.features.as_ref().ok_or_else(|| EvalError::MissingFeature(format!("{} (no features)", instance.id)))?;
    let steps = linearize(branched, portfolio, features, timeout_ms)?;
    let outcomes = member_outcomes(portfolio, instance, cache, timeout_ms)?;
    Ok(walk_steps(&steps, &outcomes, timeout_ms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{EvalRecord, FeatureValue, Status};
    use crate::lang::parse_syntax;

    fn setup() -> (Vec<Strategy>, PortfolioIndex) {
        let pool = vec![parse_syntax("(then simplify sat)").unwrap(), parse_syntax("smt").unwrap()];
        let idx = PortfolioIndex::new(&pool);
        (pool, idx)
    }

    fn features(pb: bool) -> FeatureMap {
        let mut f = FeatureMap::new();
        f.insert("is-pb".into(), FeatureValue::Bool(pb));
        f
    }

    const EXAMPLE: &str = "(if is-pb (or-else (try-for (then simplify sat) 4000) smt) smt)";

    #[test]
    fn linearize_examples() {
        let (_, idx) = setup();
        let s = parse_syntax(EXAMPLE).unwrap();
        let step = |i, b| ExecutionStep { linear_index: i, budget_ms: b };
        assert_eq!(linearize(&s, &idx, &features(true), 10_000).unwrap(), [step(0, 4000), step(1, 6000)]);
        assert_eq!(linearize(&s, &idx, &features(false), 10_000).unwrap(), [step(1, 10_000)]);
        let leaf = parse_syntax("(then simplify sat)").unwrap();
        assert_eq!(linearize(&leaf, &idx, &features(false), 10_000).unwrap(), [step(0, 10_000)]);
    }

    #[test]
    fn linearize_clips_large_try_for() {
        let (_, idx) = setup();
        let s = parse_syntax("(or-else (try-for smt 20000) (then simplify sat))").unwrap();
        let steps = linearize(&s, &idx, &features(true), 10_000).unwrap();
        assert_eq!(steps, [ExecutionStep { linear_index: 1, budget_ms: 10_000 }]);
    }

    #[test]
    fn unknown_leaf_is_error() {
        let (_, idx) = setup();
        let s = parse_syntax("sat").unwrap();
        assert!(matches!(linearize(&s, &idx, &features(true), 10), Err(StagedError::NotInPortfolio(_))));
    }

    fn cache_with(l1: (EvalResult, u64), l2: (EvalResult, u64)) -> EvalCache {
        let (pool, _) = setup();
        let mut c = EvalCache::in_memory();
        for (s, (result, wall_ms)) in pool.iter().zip([l1, l2]) {
            c.insert(EvalRecord {
                strategy_key: s.canonical_key(),
                instance_id: "f".into(),
                timeout_ms: 10_000,
                result,
                wall_ms,
                backend_tag: "t".into(),
                seed: 0,
            })
            .unwrap();
        }
        c
    }

    #[test]
    fn cached_eval_examples() {
        let (_, idx) = setup();
        let s = parse_syntax(EXAMPLE).unwrap();
        let inst = Instance::simulated("f", Status::Sat, features(true));
        let run = |c: EvalCache| cached_eval(&s, &idx, &inst, &c, 10_000).unwrap();
        assert_eq!(run(cache_with((EvalResult::Sat, 1500), (EvalResult::Sat, 9000))), (EvalResult::Sat, 1500));
        assert_eq!(run(cache_with((EvalResult::Unknown, 500), (EvalResult::Sat, 3000))), (EvalResult::Sat, 3500));
        assert_eq!(
            run(cache_with((EvalResult::Timeout, 10_000), (EvalResult::Sat, 7000))),
            (EvalResult::Timeout, 10_000)
        );
    }

    #[test]
    fn missing_record() {
        let (_, idx) = setup();
        let s = parse_syntax("smt").unwrap();
        let inst = Instance::simulated("g", Status::Sat, features(true));
        let c = cache_with((EvalResult::Sat, 1), (EvalResult::Sat, 1));
        assert!(matches!(
            cached_eval(&s, &idx, &inst, &c, 10_000),
            Err(StagedError::Eval(EvalError::MissingRecord { .. }))
        ));
    }
}
