//! Monte Carlo tree search over the synthesis MDP.
//!
//! Selection uses UCT, expansion adds one child per simulation, rollouts
//! pick legal actions uniformly at random, and backup keeps the maximum
//! observed reward. Tactic parameters are tuned by bandits attached to the
//! edge (action path) that introduced the tactic application; they never
//! add nodes to the tree.

mod bandit;

use std::collections::HashMap;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lang::{ParamValue, Strategy};
use crate::mdp::{Action, DerivationState, Mdp, MdpError};

pub use bandit::{bandit_select, uct_score, Arm, ParamBandit};

#[derive(Debug, Clone, PartialEq)]
pub struct MctsConfig {
    /// Number of simulations.
    pub budget: usize,
    pub c_uct: f64,
    pub c_bandit: f64,
    pub seed: u64,
    /// Maximum rollout length before the MDP is declared non-terminating.
    pub rollout_cap: usize,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            budget: 800,
            c_uct: std::f64::consts::SQRT_2,
            c_bandit: std::f64::consts::SQRT_2,
            seed: 0,
            rollout_cap: 1000,
        }
    }
}

#[derive(Debug, Error)]
pub enum SearchError<E: std::error::Error + 'static> {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("rollout did not reach a terminal state within {0} steps")]
    RolloutOverflow(usize),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("evaluating `{strategy}` failed: {source}")]
    Eval { strategy: String, source: E },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub simulation: usize,
    pub key: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Strategy,
    pub best_reward: f64,
    pub trace: Vec<TraceEntry>,
    /// Number of calls made to the evaluation function.
    pub evaluations: usize,
}

impl SearchResult {
    /// One line per simulation: index, reward, canonical key.
    pub fn write_trace(&self, mut w: impl Write) -> io::Result<()> {
        for t in &self.trace {
            writeln!(w, "{}\t{:.6}\t{}", t.simulation, t.reward, t.key)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Child {
    action: Action,
    /// Position of the action in the canonical legal-action order.
    order: usize,
    node: usize,
}

#[derive(Debug, Clone)]
struct Node {
    state: DerivationState,
    visits: u64,
    q_max: f64,
    children: Vec<Child>,
    unexpanded: Vec<(usize, Action)>,
    rollouts: u64,
}

/// Read-only view of a tree node's statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStats {
    pub visits: u64,
    pub q_max: f64,
    pub child_visits: u64,
    pub rollouts: u64,
    pub children: usize,
}

/// Search tree, edge bandits and evaluation memo of one MCTS run.
pub struct Search<'m> {
    mdp: &'m Mdp,
    cfg: MctsConfig,
    nodes: Vec<Node>,
    bandits: HashMap<Vec<Action>, Vec<ParamBandit>>,
    rng: ChaCha8Rng,
    rewards: HashMap<String, f64>,
    evaluations: usize,
    simulations: usize,
    trace: Vec<TraceEntry>,
    best: Option<(Strategy, f64)>,
}

impl<'m> Search<'m> {
    pub fn new(mdp: &'m Mdp, cfg: MctsConfig) -> Result<Self, MdpError> {
        let root = Self::make_node(mdp, mdp.initial_state())?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Search {
            mdp,
            cfg,
            nodes: vec![root],
            bandits: HashMap::new(),
            rng,
            rewards: HashMap::new(),
            evaluations: 0,
            simulations: 0,
            trace: Vec::new(),
            best: None,
        })
    }

    fn make_node(mdp: &Mdp, state: DerivationState) -> Result<Node, MdpError> {
        let unexpanded = if state.is_terminal() {
            Vec::new()
        } else {
            mdp.legal_actions(&state)?.into_iter().enumerate().collect()
        };
        Ok(Node { state, visits: 0, q_max: 0.0, children: Vec::new(), unexpanded, rollouts: 0 })
    }

    pub fn node_stats(&self) -> Vec<NodeStats> {
        self.nodes
            .iter()
            .map(|n| NodeStats {
                visits: n.visits,
                q_max: n.q_max,
                child_visits: n.children.iter().map(|c| self.nodes[c.node].visits).sum(),
                rollouts: n.rollouts,
                children: n.children.len(),
            })
            .collect()
    }

    /// Actions labelling the tree's edges.
    pub fn edge_actions(&self) -> impl Iterator<Item = &Action> {
        self.nodes.iter().flat_map(|n| n.children.iter().map(|c| &c.action))
    }

    pub fn bandits(&self) -> impl Iterator<Item = (&[Action], &ParamBandit)> {
        self.bandits.iter().flat_map(|(k, v)| v.iter().map(move |b| (k.as_slice(), b)))
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    fn select_child(&self, node: usize) -> usize {
        let n = &self.nodes[node];
        let mut best: Option<(f64, usize, usize)> = None;
        for c in &n.children {
            let child = &self.nodes[c.node];
            let score = uct_score(child.visits, child.q_max, n.visits, self.cfg.c_uct);
            let better = match best {
                None => true,
                Some((s, order, _)) => score > s || (score == s && c.order < order),
            };
            if better {
                best = Some((score, c.order, c.node));
            }
        }
        best.expect("fully expanded non-terminal node has children").2
    }

    /// One selection / expansion / rollout / evaluation / backup cycle.
    pub fn run_simulation<E, F>(&mut self, eval_fn: &mut F) -> Result<(Strategy, f64), SearchError<E>>
    where
        E: std::error::Error + 'static,
        F: FnMut(&Strategy) -> Result<f64, E>,
    {
        let mut path_nodes = vec![0usize];
        let mut actions: Vec<Action> = Vec::new();
        let mut cur = 0usize;

        // selection
        while !self.nodes[cur].state.is_terminal() && self.nodes[cur].unexpanded.is_empty() {
            let next = self.select_child(cur);
            let action = self.nodes[cur]
                .children
                .iter()
                .find(|c| c.node == next)
                .map(|c| c.action.clone())
                .expect("child belongs to parent");
            actions.push(action);
            cur = next;
            path_nodes.push(cur);
        }

        // expansion
        if !self.nodes[cur].state.is_terminal() {
            let pick = self.rng.gen_range(0..self.nodes[cur].unexpanded.len());
            let (order, action) = self.nodes[cur].unexpanded.swap_remove(pick);
            let state = self.mdp.apply_action(&self.nodes[cur].state, &action)?;
            let child = Self::make_node(self.mdp, state)?;
            let id = self.nodes.len();
            self.nodes.push(child);
            self.nodes[cur].children.push(Child { action: action.clone(), order, node: id });
            actions.push(action);
            cur = id;
            path_nodes.push(cur);
        }
        self.nodes[cur].rollouts += 1;

        // rollout
        let mut state = self.nodes[cur].state.clone();
        let mut steps = 0;
        while !state.is_terminal() {
            if steps >= self.cfg.rollout_cap {
                return Err(SearchError::RolloutOverflow(self.cfg.rollout_cap));
            }
            let legal = self.mdp.legal_actions(&state)?;
            let action = legal.choose(&mut self.rng).expect("legal actions are never empty").clone();
            state = self.mdp.apply_action(&state, &action)?;
            actions.push(action);
            steps += 1;
        }

        // layered parameter choice
        let mut engaged: Vec<(Vec<Action>, usize, usize)> = Vec::new();
        let mut settings: Vec<Vec<(String, ParamValue)>> = Vec::new();
        for i in 0..actions.len() {
            if actions[i].tactic().is_none() {
                continue;
            }
            let specs = self.mdp.action_params(&actions[i]);
            let key = actions[..=i].to_vec();
            let bandits = self
                .bandits
                .entry(key.clone())
                .or_insert_with(|| specs.iter().map(ParamBandit::new).collect());
            let mut chosen = Vec::with_capacity(bandits.len());
            for (b_idx, bandit) in bandits.iter().enumerate() {
                let arm = bandit.select(self.cfg.c_bandit);
                chosen.push((bandit.param.clone(), bandit.arms[arm].value));
                engaged.push((key.clone(), b_idx, arm));
            }
            settings.push(chosen);
        }
        let mut settings = settings.into_iter();
        let strategy = self
            .mdp
            .finish_with_params(&state, |_, _| settings.next().unwrap_or_default())?;

        // evaluation, memoized by canonical key
        let key = strategy.canonical_key();
        let reward = match self.rewards.get(&key) {
            Some(&r) => r,
            None => {
                self.evaluations += 1;
                let r = eval_fn(&strategy)
                    .map_err(|source| SearchError::Eval { strategy: strategy.render(), source })?;
                self.rewards.insert(key.clone(), r);
                r
            }
        };

        // backup
        for &n in &path_nodes {
            let node = &mut self.nodes[n];
            node.visits += 1;
            node.q_max = node.q_max.max(reward);
        }
        for (k, b, arm) in engaged {
            if let Some(bandits) = self.bandits.get_mut(&k) {
                bandits[b].update(arm, reward);
            }
        }

        self.trace.push(TraceEntry { simulation: self.simulations, key, reward });
        self.simulations += 1;
        if self.best.as_ref().is_none_or(|(_, r)| reward > *r) {
            self.best = Some((strategy.clone(), reward));
        }
        Ok((strategy, reward))
    }

    pub fn into_result(self) -> Option<SearchResult> {
        let (best, best_reward) = self.best?;
        Some(SearchResult { best, best_reward, trace: self.trace, evaluations: self.evaluations })
    }
}

/// Runs `cfg.budget` simulations and returns the highest-reward strategy.
pub fn run_search<E, F>(mdp: &Mdp, mut eval_fn: F, cfg: &MctsConfig) -> Result<SearchResult, SearchError<E>>
where
    E: std::error::Error + 'static,
    F: FnMut(&Strategy) -> Result<f64, E>,
{
    if cfg.budget == 0 {
        return Err(SearchError::Config("budget must be at least 1".into()));
    }
    if !(cfg.c_uct > 0.0 && cfg.c_bandit > 0.0) {
        return Err(SearchError::Config("exploration constants must be positive".into()));
    }
    let mut search = Search::new(mdp, cfg.clone())?;
    for _ in 0..cfg.budget {
        search.run_simulation(&mut eval_fn)?;
    }
    Ok(search.into_result().expect("budget >= 1 produced a result"))
}
