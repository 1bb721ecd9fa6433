use std::cmp::Ordering;

use crate::eval::{par10_of_times, vbs_times, EvalCache, EvalError, Instance};
use crate::lang::Strategy;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub portfolio: Vec<Strategy>,
    /// Virtual-best PAR-10 after each pick.
    pub vbs_trace: Vec<f64>,
}

fn vbs_of(times: &[Option<u64>], timeout_ms: u64) -> f64 {
    // an empty instance set scores 0 for every candidate
    par10_of_times(times, timeout_ms).unwrap_or(0.0)
}

/// Greedily picks up to `n` pool members, each time the one whose addition
/// gives the lowest virtual-best PAR-10. Ties go to the lower individual
/// PAR-10, then to the smaller canonical key. Picking continues even when
/// no candidate improves the virtual best.
pub fn select_portfolio(
    pool: &[Strategy],
    instances: &[Instance],
    cache: &EvalCache,
    n: usize,
    timeout_ms: u64,
) -> Result<Selection, EvalError> {
    let mut members: Vec<(String, &Strategy, Vec<Option<u64>>, f64)> = Vec::new();
    for s in pool {
        let key = s.canonical_key();
        if members.iter().any(|m| m.0 == key) {
            continue;
        }
        let times = vbs_times(std::slice::from_ref(&key), instances, cache, timeout_ms)?;
        let own = vbs_of(&times, timeout_ms);
        members.push((key, s, times, own));
    }

    let mut current: Vec<Option<u64>> = vec![None; instances.len()];
    let mut chosen = vec![false; members.len()];
    let mut out = Selection { portfolio: Vec::new(), vbs_trace: Vec::new() };
    while out.portfolio.len() < n {
        let mut best: Option<(usize, f64)> = None;
        for (i, m) in members.iter().enumerate() {
            if chosen[i] {
                continue;
            }
            let merged: Vec<Option<u64>> = current.iter().zip(&m.2).map(|(a, b)| min_time(*a, *b)).collect();
            let score = vbs_of(&merged, timeout_ms);
            let better = match best {
                None => true,
                Some((j, s)) => score
                    .total_cmp(&s)
                    .then(m.3.total_cmp(&members[j].3))
                    .then(m.0.cmp(&members[j].0))
                    == Ordering::Less,
            };
            if better {
                best = Some((i, score));
            }
        }
        let Some((i, score)) = best else { break };
        chosen[i] = true;
        current = current.iter().zip(&members[i].2).map(|(a, b)| min_time(*a, *b)).collect();
        out.portfolio.push(members[i].1.clone());
        out.vbs_trace.push(score);
    }
    Ok(out)
}

fn min_time(a: Option<u64>, b: Option<u64>) -> Option<u64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{vbs_par10, EvalRecord, EvalResult, FeatureMap, Status};
    use crate::lang::parse_syntax;

    fn fixture() -> (Vec<Strategy>, Vec<Instance>, EvalCache) {
        let pool: Vec<Strategy> = ["(then simplify smt)", "sat", "smt"].iter().map(|t| parse_syntax(t).unwrap()).collect();
        let insts: Vec<Instance> =
            (1..=3).map(|k| Instance::simulated(format!("i{k}"), Status::Sat, FeatureMap::new())).collect();
        // A solves i1; B solves i2, i3 slowly; C solves i2 fast
        let table = [
            [Some(1000), None, None],
            [None, Some(8000), Some(8000)],
            [None, Some(500), None],
        ];
        let mut cache = EvalCache::in_memory();
        for (s, row) in pool.iter().zip(table) {
            for (inst, t) in insts.iter().zip(row) {
                let (result, wall_ms) = match t {
                    Some(ms) => (EvalResult::Sat, ms),
                    None => (EvalResult::Timeout, 10_000),
                };
                cache
                    .insert(EvalRecord {
                        strategy_key: s.canonical_key(),
                        instance_id: inst.id.clone(),
                        timeout_ms: 10_000,
                        result,
                        wall_ms,
                        backend_tag: "t".into(),
                        seed: 0,
                    })
                    .unwrap();
            }
        }
        (pool, insts, cache)
    }

    #[test]
    fn greedy_order_on_fixture() {
        let (pool, insts, cache) = fixture();
        let sel = select_portfolio(&pool, &insts, &cache, 3, 10_000).unwrap();
        let expected = vec![pool[1].clone(), pool[0].clone(), pool[2].clone()];
        assert_eq!(sel.portfolio, expected);
        for (k, v) in sel.vbs_trace.iter().enumerate() {
            let keys: Vec<String> = sel.portfolio[..=k].iter().map(Strategy::canonical_key).collect();
            assert_eq!(*v, vbs_par10(&keys, &insts, &cache, 10_000).unwrap());
        }
        assert!(sel.vbs_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn n_one_is_best_individual() {
        let (pool, insts, cache) = fixture();
        let sel = select_portfolio(&pool, &insts, &cache, 1, 10_000).unwrap();
        assert_eq!(sel.portfolio, [pool[1].clone()]);
    }

    #[test]
    fn small_pool_returned_whole() {
        let (pool, insts, cache) = fixture();
        assert_eq!(select_portfolio(&pool, &insts, &cache, 10, 10_000).unwrap().portfolio.len(), 3);
    }

    #[test]
    fn missing_record() {
        let (mut pool, insts, cache) = fixture();
        pool.push(parse_syntax("qfbv").unwrap());
        assert!(matches!(select_portfolio(&pool, &insts, &cache, 4, 10_000), Err(EvalError::MissingRecord { .. })));
    }
}
