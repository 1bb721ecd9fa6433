#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use stratsynth_core::eval::{FeatureMap, FeatureValue, Instance, Status};
use stratsynth_core::lang::{CmpOp, ParamValue, Predicate, Strategy, TacticCatalog};
use stratsynth_core::mdp::{Mdp, StageConfig};

pub const LOGICS: [&str; 6] = ["qf_bv", "qf_nia", "qf_nra", "qf_lia", "qf_lra", "qf_s"];

pub fn catalog_path(logic: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("catalogs").join(format!("{logic}.json"))
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/qf_bv")
}

pub fn catalog(logic: &str, timeout_ms: u64) -> Arc<TacticCatalog> {
    Arc::new(TacticCatalog::load(&catalog_path(logic)).unwrap().with_default_try_for(timeout_ms))
}

/// Uniform random derivation with every tactic parameter set to a random
/// candidate, as the search engine would.
pub fn rollout(mdp: &Mdp, rng: &mut impl Rng) -> Strategy {
    let mut state = mdp.initial_state();
    let mut settings = Vec::new();
    while !state.is_terminal() {
        let actions = mdp.legal_actions(&state).unwrap();
        let a = actions.choose(rng).unwrap().clone();
        if a.tactic().is_some() {
            let chosen: Vec<(String, ParamValue)> = mdp
                .action_params(&a)
                .iter()
                .map(|p| (p.name.clone(), *p.candidates.choose(rng).unwrap()))
                .collect();
            settings.push(chosen);
        }
        state = mdp.apply_action(&state, &a).unwrap();
    }
    let mut it = settings.into_iter();
    mdp.finish_with_params(&state, |_, _| it.next().unwrap()).unwrap()
}

/// `n` distinct linear strategies from random rollouts.
pub fn linear_pool(catalog: &Arc<TacticCatalog>, n: usize, rng: &mut impl Rng) -> Vec<Strategy> {
    let mdp = Mdp::new(StageConfig::linear(), catalog.clone()).unwrap();
    let mut pool: Vec<Strategy> = Vec::new();
    let mut tries = 0;
    while pool.len() < n && tries < 100 * n {
        tries += 1;
        let s = rollout(&mdp, rng);
        if !pool.contains(&s) {
            pool.push(s);
        }
    }
    pool
}

/// Random valid AST: a combination over a fresh random pool, with the
/// parameter order shuffled and predicate operators drawn from all six.
pub fn random_ast(catalog: &Arc<TacticCatalog>, rng: &mut impl Rng) -> Strategy {
    let size = rng.gen_range(1..=4);
    let pool = linear_pool(catalog, size, rng);
    let mdp = Mdp::new(StageConfig::combine(pool), catalog.clone()).unwrap();
    let mut s = rollout(&mdp, rng);
    scramble(&mut s, rng);
    s
}

fn scramble(s: &mut Strategy, rng: &mut impl Rng) {
    match s {
        Strategy::Apply(t) => t.params.shuffle(rng),
        Strategy::Then(t, tail) => {
            t.params.shuffle(rng);
            scramble(tail, rng);
        }
        Strategy::OrElse(a, b) => {
            scramble(a, rng);
            scramble(b, rng);
        }
        Strategy::TryFor(c, _) => scramble(c, rng),
        Strategy::If(p, a, b) => {
            if let Predicate::Cmp { op, .. } = p {
                *op = *CmpOp::ALL.choose(rng).unwrap();
            }
            scramble(a, rng);
            scramble(b, rng);
        }
    }
}

/// Simulated instances carrying every probe of `catalog`.
pub fn simulated_instances(catalog: &TacticCatalog, n: usize, rng: &mut impl Rng) -> Vec<Instance> {
    (0..n)
        .map(|k| {
            let mut f = FeatureMap::new();
            for p in &catalog.probes {
                let v = if p.thresholds.is_empty() {
                    FeatureValue::Bool(rng.gen_bool(0.5))
                } else {
                    let top = *p.thresholds.iter().max().unwrap();
                    FeatureValue::Int(rng.gen_range(0..=top * 2))
                };
                f.insert(p.name.clone(), v);
            }
            let status = if rng.gen_bool(0.5) { Status::Sat } else { Status::Unsat };
            let mut inst = Instance::simulated(format!("f{k:03}"), status, f);
            inst.difficulty = rng.gen_range(0.2..2.0);
            inst
        })
        .collect()
}
