mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stratsynth_core::eval::{
    par_of, par10_of_times, reward_from_par10, vbs_par10, Backend, EvalCache, EvalRecord, EvalResult, Evaluator,
    Instance, SimulatedBackend, Status,
};
use stratsynth_core::lang::{parse, validate, Strategy};
use stratsynth_core::mdp::{Mdp, StageConfig};
use stratsynth_core::staged::{linearize, PortfolioIndex};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn render_parse_round_trip(seed in any::<u64>(), logic in 0usize..6) {
        let cat = common::catalog(common::LOGICS[logic], 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_ast(&cat, &mut rng);
        let back = parse(&a.render(), &cat).unwrap();
        prop_assert_eq!(&back, &a);
        let canon = parse(&a.canonical_key(), &cat).unwrap();
        prop_assert_eq!(canon.canonical_key(), a.canonical_key());
    }

    #[test]
    fn rollouts_satisfy_rules(seed in any::<u64>(), logic in 0usize..6) {
        let cat = common::catalog(common::LOGICS[logic], 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = common::linear_pool(&cat, 3, &mut rng);
        for s in &pool {
            prop_assert!(s.is_linear());
            prop_assert!(validate(s, &cat).is_empty(), "{}", s.render());
        }
        let mdp = Mdp::new(StageConfig::combine(pool), cat.clone()).unwrap();
        let s = common::rollout(&mdp, &mut rng);
        prop_assert!(validate(&s, &cat).is_empty(), "{}", s.render());
    }

    #[test]
    fn linearized_budgets_sum_to_timeout(seed in any::<u64>(), timeout in 1u64..100_000) {
        let cat = common::catalog("qf_bv", timeout);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = common::linear_pool(&cat, 3, &mut rng);
        let idx = PortfolioIndex::new(&pool);
        let mdp = Mdp::new(StageConfig::combine(pool), cat.clone()).unwrap();
        let s = common::rollout(&mdp, &mut rng);
        let inst = &common::simulated_instances(&cat, 1, &mut rng)[0];
        let steps = linearize(&s, &idx, inst.features.as_ref().unwrap(), timeout).unwrap();
        prop_assert_eq!(steps.iter().map(|s| s.budget_ms).sum::<u64>(), timeout);
        prop_assert!(steps.iter().all(|s| s.budget_ms > 0));
    }

    #[test]
    fn reward_strictly_decreasing(timeout in 1u64..1_000_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let top = 10.0 * timeout as f64 / 1000.0;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(reward_from_par10(lo * top, timeout) > reward_from_par10(hi * top, timeout));
        prop_assert_eq!(reward_from_par10(0.0, timeout), 1.0);
        prop_assert_eq!(reward_from_par10(top, timeout), 0.0);
    }

    #[test]
    fn all_solved_par_ignores_k(times in prop::collection::vec(1u64..10_000, 1..30)) {
        let outcomes = || times.iter().map(|&t| (EvalResult::Sat, t));
        let p2 = par_of(outcomes(), 10_000, 2).unwrap();
        let p10 = par_of(outcomes(), 10_000, 10).unwrap();
        let mean = times.iter().sum::<u64>() as f64 / times.len() as f64 / 1000.0;
        prop_assert_eq!(p2, p10);
        prop_assert!((p10 - mean).abs() < 1e-12);
    }

    #[test]
    fn vbs_superset_never_worse(
        table in prop::collection::vec(prop::collection::vec(prop::option::of(1u64..1000), 6), 2..6),
        extra in 0usize..6,
    ) {
        // table[s][i]: solve time of strategy s on instance i
        let timeout = 1000;
        let instances: Vec<Instance> =
            (0..6).map(|i| Instance { id: format!("i{i}"), path: None, expected: Status::Sat, features: None, difficulty: 1.0 }).collect();
        let mut cache = EvalCache::in_memory();
        for (s, row) in table.iter().enumerate() {
            for (i, t) in row.iter().enumerate() {
                cache.insert(EvalRecord {
                    strategy_key: format!("s{s}"),
                    instance_id: format!("i{i}"),
                    timeout_ms: timeout,
                    result: if t.is_some() { EvalResult::Sat } else { EvalResult::Timeout },
                    wall_ms: t.unwrap_or(timeout),
                    backend_tag: "fixture".into(),
                    seed: 0,
                }).unwrap();
            }
        }
        let x = extra % table.len();
        let base: Vec<String> = (0..table.len()).filter(|&s| s != x).map(|s| format!("s{s}")).collect();
        let mut sup = base.clone();
        sup.push(format!("s{x}"));
        let before = vbs_par10(&base, &instances, &cache, timeout).unwrap();
        let after = vbs_par10(&sup, &instances, &cache, timeout).unwrap();
        prop_assert!(after <= before);
        // independent recomputation of the superset value
        let times: Vec<Option<u64>> = (0..6).map(|i| table.iter().filter_map(|row| row[i]).min()).collect();
        prop_assert_eq!(after, par10_of_times(&times, timeout).unwrap());
    }

    #[test]
    fn cache_insert_idempotent(n in 1usize..20, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let backend = SimulatedBackend::new(seed);
        let s = Strategy::tactic("smt");
        let recs: Vec<EvalRecord> = (0..n)
            .map(|i| {
                let inst = Instance { id: format!("i{i}"), path: None, expected: Status::Sat, features: None, difficulty: 1.0 };
                let (result, wall_ms) = backend.run(&s, &inst, 100).unwrap();
                EvalRecord { strategy_key: s.canonical_key(), instance_id: inst.id, timeout_ms: 100, result, wall_ms, backend_tag: backend.tag(), seed }
            })
            .collect();
        {
            let mut c = EvalCache::open(&path).unwrap();
            for r in &recs {
                prop_assert!(c.insert(r.clone()).unwrap());
            }
            for r in &recs {
                prop_assert!(!c.insert(r.clone()).unwrap());
            }
        }
        let text = std::fs::read_to_string(&path).unwrap();
        prop_assert_eq!(text.lines().count(), n);
        let c = EvalCache::open(&path).unwrap();
        prop_assert_eq!(c.records().cloned().collect::<Vec<_>>(), recs);
    }
}

#[test]
fn catalogs_load() {
    for logic in common::LOGICS {
        let cat = common::catalog(logic, 10_000);
        assert!(cat.solver_wrappers().count() >= 2, "{logic}");
        assert!(!cat.predicate_pool().is_empty(), "{logic}");
        assert_eq!(cat.try_for_candidates, vec![625, 1250, 2500, 5000]);
    }
}

#[test]
fn evaluate_set_independent_of_workers() {
    let cat = common::catalog("qf_bv", 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let instances = common::simulated_instances(&cat, 10, &mut rng);
    let s = common::linear_pool(&cat, 1, &mut rng).remove(0);
    let run = |workers| {
        let mut ev = Evaluator::new(Arc::new(SimulatedBackend::new(9)), EvalCache::in_memory(), workers).unwrap();
        let first = ev.evaluate_set(&s, &instances, 1000).unwrap();
        let calls = ev.executions();
        let second = ev.evaluate_set(&s, &instances, 1000).unwrap();
        assert_eq!(ev.executions(), calls, "second call must be served from the cache");
        assert_eq!(first, second);
        first
    };
    assert_eq!(run(1), run(4));
    assert!(Evaluator::new(Arc::new(SimulatedBackend::new(9)), EvalCache::in_memory(), 2)
        .unwrap()
        .evaluate_set(&s, &[], 1000)
        .unwrap()
        .is_empty());
}

#[test]
fn bundled_instances_have_known_status() {
    let instances = stratsynth_core::eval::load_benchmarks(&common::data_dir()).unwrap();
    assert!(instances.len() >= 20);
    assert!(instances.iter().all(|i| i.expected != Status::Unknown));
    assert!(instances.iter().all(|i| i.features.is_some()));
}
