//! Strategy construction as a deterministic MDP over leftmost grammar
//! derivations.
//!
//! A state is a partial strategy whose unexpanded positions are holes of
//! the `⟨Strategy⟩` nonterminal. Actions are production applications
//! instantiated with concrete symbols, always at the leftmost hole. Two
//! stages are supported:
//!
//! * **linear**: `S → t` for a solver wrapper `t`, or `S → (then t S)` for a
//!   preprocessing tactic `t`.
//! * **combine**: `S → Lᵢ` (a member of the linear pool),
//!   `S → (if P S S)`, or `S → (or-else (try-for Lᵢ c) S)`.
//!
//! Tactic parameters are never part of the action space; the search engine
//! decides them separately.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lang::{ParamSpec, ParamValue, Predicate, Strategy, TacticApp, TacticCatalog};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MdpError {
    #[error("invalid stage configuration: {0}")]
    InvalidStage(String),
    #[error("state is terminal")]
    TerminalState,
    #[error("state is not terminal")]
    NotTerminal,
    #[error("illegal action {0:?}")]
    IllegalAction(Action),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Linear,
    Combine { pool: Vec<Strategy> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub stage: Stage,
    /// Maximum number of tactic applications in a linear strategy.
    pub max_linear_len: usize,
    pub max_if_depth: usize,
    /// Maximum number of pool-member occurrences in a combined strategy.
    pub max_leaves: usize,
}

impl StageConfig {
    pub fn linear() -> Self {
        StageConfig { stage: Stage::Linear, max_linear_len: 8, max_if_depth: 3, max_leaves: 8 }
    }

    pub fn combine(pool: Vec<Strategy>) -> Self {
        StageConfig { stage: Stage::Combine { pool }, ..Self::linear() }
    }

    fn check(&self) -> Result<(), MdpError> {
        match &self.stage {
            Stage::Linear if self.max_linear_len == 0 => {
                Err(MdpError::InvalidStage("max_linear_len must be at least 1".into()))
            }
            Stage::Combine { pool } if pool.is_empty() => {
                Err(MdpError::InvalidStage("combine stage needs a nonempty linear pool".into()))
            }
            Stage::Combine { pool } if pool.iter().any(|s| !s.is_linear()) => {
                Err(MdpError::InvalidStage("linear pool members must be branch-free".into()))
            }
            Stage::Combine { .. } if self.max_leaves == 0 => {
                Err(MdpError::InvalidStage("max_leaves must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One production application at the leftmost hole.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    /// `S → t` with `t` a solver wrapper.
    Solve(String),
    /// `S → (then t S)` with `t` a preprocessing tactic.
    Then(String),
    /// `S → Lᵢ`
    Leaf(usize),
    /// `S → (if P S S)`
    If(Predicate),
    /// `S → (or-else (try-for Lᵢ c) S)`
    TryForElse { member: usize, millis: u64 },
}

impl Action {
    /// Name of the tactic application this action introduces, if any.
    pub fn tactic(&self) -> Option<&str> {
        match self {
            Action::Solve(t) | Action::Then(t) => Some(t),
            _ => None,
        }
    }
}

/// Strategy with holes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Partial {
    Hole,
    Pool(usize),
    Apply(TacticApp),
    Then(TacticApp, Box<Partial>),
    OrElse(Box<Partial>, Box<Partial>),
    TryFor(Box<Partial>, u64),
    If(Predicate, Box<Partial>, Box<Partial>),
}

impl Partial {
    fn holes(&self) -> usize {
        match self {
            Partial::Hole => 1,
            Partial::Pool(_) | Partial::Apply(_) => 0,
            Partial::Then(_, t) | Partial::TryFor(t, _) => t.holes(),
            Partial::OrElse(a, b) | Partial::If(_, a, b) => a.holes() + b.holes(),
        }
    }

    fn pool_leaves(&self) -> usize {
        match self {
            Partial::Pool(_) => 1,
            Partial::Hole | Partial::Apply(_) => 0,
            Partial::Then(_, t) | Partial::TryFor(t, _) => t.pool_leaves(),
            Partial::OrElse(a, b) | Partial::If(_, a, b) => a.pool_leaves() + b.pool_leaves(),
        }
    }

    fn leftmost_hole(&self, ctx: HoleCtx) -> Option<HoleCtx> {
        match self {
            Partial::Hole => Some(ctx),
            Partial::Pool(_) | Partial::Apply(_) => None,
            Partial::Then(head, tail) => tail.leftmost_hole(HoleCtx {
                depth: ctx.depth + 1,
                tactic_applied: true,
                nla2bv: ctx.nla2bv + usize::from(head.name == "nla2bv"),
                simplify_last: head.name == "simplify",
                linear_len: ctx.linear_len + 1,
                ..ctx
            }),
            Partial::TryFor(child, _) => {
                child.leftmost_hole(HoleCtx { depth: ctx.depth + 1, under_try_for: true, ..ctx })
            }
            Partial::OrElse(a, b) | Partial::If(_, a, b) => {
                let next = HoleCtx { depth: ctx.depth + 1, ..ctx };
                a.leftmost_hole(next).or_else(|| b.leftmost_hole(next))
            }
        }
    }

    /// Replaces the leftmost hole; returns the replacement back if none exists.
    fn fill_leftmost(&mut self, with: Partial) -> Result<(), Partial> {
        match self {
            Partial::Hole => {
                *self = with;
                Ok(())
            }
            Partial::Pool(_) | Partial::Apply(_) => Err(with),
            Partial::Then(_, t) | Partial::TryFor(t, _) => t.fill_leftmost(with),
            Partial::OrElse(a, b) | Partial::If(_, a, b) => match a.fill_leftmost(with) {
                Ok(()) => Ok(()),
                Err(with) => b.fill_leftmost(with),
            },
        }
    }

    fn to_strategy(
        &self,
        pool: &[Strategy],
        params: &mut dyn FnMut(&str) -> Vec<(String, ParamValue)>,
    ) -> Option<Strategy> {
        fn app(t: &TacticApp, params: &mut dyn FnMut(&str) -> Vec<(String, ParamValue)>) -> TacticApp {
            TacticApp { name: t.name.clone(), params: params(&t.name) }
        }
        Some(match self {
            Partial::Hole => return None,
            Partial::Pool(i) => pool.get(*i)?.clone(),
            Partial::Apply(t) => Strategy::Apply(app(t, params)),
            Partial::Then(h, tail) => {
                let h = app(h, params);
                Strategy::then(h, tail.to_strategy(pool, params)?)
            }
            Partial::OrElse(a, b) => Strategy::or_else(a.to_strategy(pool, params)?, b.to_strategy(pool, params)?),
            Partial::TryFor(c, ms) => Strategy::try_for(c.to_strategy(pool, params)?, *ms),
            Partial::If(p, a, b) => {
                Strategy::if_then_else(p.clone(), a.to_strategy(pool, params)?, b.to_strategy(pool, params)?)
            }
        })
    }

    fn write(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Partial::Hole => f.write_str("⟨Strategy⟩"),
            Partial::Pool(i) => write!(f, "L{i}"),
            Partial::Apply(t) => f.write_str(&Strategy::Apply(t.clone()).render()),
            Partial::Then(h, tail) => {
                write!(f, "(then {} ", Strategy::Apply(h.clone()).render())?;
                tail.write(f)?;
                f.write_str(")")
            }
            Partial::OrElse(a, b) => {
                f.write_str("(or-else ")?;
                a.write(f)?;
                f.write_str(" ")?;
                b.write(f)?;
                f.write_str(")")
            }
            Partial::TryFor(c, ms) => {
                f.write_str("(try-for ")?;
                c.write(f)?;
                write!(f, " {ms})")
            }
            Partial::If(p, a, b) => {
                write!(f, "(if {p} ")?;
                a.write(f)?;
                f.write_str(" ")?;
                b.write(f)?;
                f.write_str(")")
            }
        }
    }
}

/// Per-path context of the leftmost hole.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HoleCtx {
    pub depth: usize,
    pub under_try_for: bool,
    pub tactic_applied: bool,
    pub nla2bv: usize,
    pub simplify_last: bool,
    /// Tactic applications preceding the hole on its path.
    pub linear_len: usize,
}

/// A partial derivation; immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DerivationState {
    partial: Partial,
}

impl DerivationState {
    /// Wraps an arbitrary partial strategy.
    pub fn from_partial(partial: Partial) -> Self {
        DerivationState { partial }
    }

    pub fn partial(&self) -> &Partial {
        &self.partial
    }

    pub fn is_terminal(&self) -> bool {
        self.partial.holes() == 0
    }

    /// Context of the leftmost hole, or `None` for terminal states.
    pub fn hole(&self) -> Option<HoleCtx> {
        self.partial.leftmost_hole(HoleCtx::default())
    }
}

impl fmt::Display for DerivationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.partial.write(f)
    }
}

/// The synthesis MDP for one stage and catalog.
#[derive(Debug, Clone)]
pub struct Mdp {
    stage: StageConfig,
    catalog: Arc<TacticCatalog>,
    predicates: Vec<Predicate>,
}

impl Mdp {
    pub fn new(stage: StageConfig, catalog: Arc<TacticCatalog>) -> Result<Self, MdpError> {
        stage.check()?;
        let predicates = catalog.predicate_pool();
        Ok(Mdp { stage, catalog, predicates })
    }

    pub fn stage(&self) -> &StageConfig {
        &self.stage
    }

    pub fn catalog(&self) -> &TacticCatalog {
        &self.catalog
    }

    pub fn pool(&self) -> &[Strategy] {
        match &self.stage.stage {
            Stage::Linear => &[],
            Stage::Combine { pool } => pool,
        }
    }

    pub fn initial_state(&self) -> DerivationState {
        DerivationState { partial: Partial::Hole }
    }

    fn tactic_allowed(&self, name: &str, ctx: &HoleCtx) -> bool {
        !(name == "nla2bv" && ctx.nla2bv >= 1) && !(name == "bit-blast" && !ctx.simplify_last)
    }

    fn if_allowed(&self, state: &DerivationState, ctx: &HoleCtx) -> bool {
        ctx.depth < self.stage.max_if_depth
            && !ctx.tactic_applied
            && self.min_leaves(state) < self.stage.max_leaves
    }

    fn try_for_allowed(&self, state: &DerivationState, ctx: &HoleCtx) -> bool {
        !ctx.under_try_for && self.min_leaves(state) < self.stage.max_leaves
    }

    /// Fewest pool leaves any completion of `state` can have.
    fn min_leaves(&self, state: &DerivationState) -> usize {
        state.partial.pool_leaves() + state.partial.holes()
    }

    /// Legal actions at the leftmost hole in canonical order: catalog order,
    /// then pool order, then predicate order, then constant order.
    pub fn legal_actions(&self, state: &DerivationState) -> Result<Vec<Action>, MdpError> {
        let ctx = state.hole().ok_or(MdpError::TerminalState)?;
        let mut out = Vec::new();
        match &self.stage.stage {
            Stage::Linear => {
                for t in self.catalog.solver_wrappers() {
                    if self.tactic_allowed(&t.name, &ctx) {
                        out.push(Action::Solve(t.name.clone()));
                    }
                }
                if ctx.linear_len + 2 <= self.stage.max_linear_len {
                    for t in self.catalog.preprocessing() {
                        if self.tactic_allowed(&t.name, &ctx) {
                            out.push(Action::Then(t.name.clone()));
                        }
                    }
                }
            }
            Stage::Combine { pool } => {
                out.extend((0..pool.len()).map(Action::Leaf));
                if self.if_allowed(state, &ctx) {
                    out.extend(self.predicates.iter().cloned().map(Action::If));
                }
                if self.try_for_allowed(state, &ctx) {
                    for member in 0..pool.len() {
                        for &millis in &self.catalog.try_for_candidates {
                            out.push(Action::TryForElse { member, millis });
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn is_legal(&self, state: &DerivationState, ctx: &HoleCtx, action: &Action) -> bool {
        match (&self.stage.stage, action) {
            (Stage::Linear, Action::Solve(t)) => {
                self.catalog.is_solver_wrapper(t) && self.tactic_allowed(t, ctx)
            }
            (Stage::Linear, Action::Then(t)) => {
                self.catalog.tactic(t).is_some_and(|s| !s.is_solver_wrapper())
                    && self.tactic_allowed(t, ctx)
                    && ctx.linear_len + 2 <= self.stage.max_linear_len
            }
            (Stage::Combine { pool }, Action::Leaf(i)) => *i < pool.len(),
            (Stage::Combine { .. }, Action::If(p)) => {
                self.predicates.contains(p) && self.if_allowed(state, ctx)
            }
            (Stage::Combine { pool }, Action::TryForElse { member, millis }) => {
                *member < pool.len()
                    && self.catalog.try_for_candidates.contains(millis)
                    && self.try_for_allowed(state, ctx)
            }
            _ => false,
        }
    }

    /// Expands the leftmost hole.
    pub fn apply_action(&self, state: &DerivationState, action: &Action) -> Result<DerivationState, MdpError> {
        let ctx = state.hole().ok_or(MdpError::TerminalState)?;
        if !self.is_legal(state, &ctx, action) {
            return Err(MdpError::IllegalAction(action.clone()));
        }
        let replacement = match action {
            Action::Solve(t) => Partial::Apply(TacticApp::new(t.as_str())),
            Action::Then(t) => Partial::Then(TacticApp::new(t.as_str()), Box::new(Partial::Hole)),
            Action::Leaf(i) => Partial::Pool(*i),
            Action::If(p) => Partial::If(p.clone(), Box::new(Partial::Hole), Box::new(Partial::Hole)),
            Action::TryForElse { member, millis } => Partial::OrElse(
                Box::new(Partial::TryFor(Box::new(Partial::Pool(*member)), *millis)),
                Box::new(Partial::Hole),
            ),
        };
        let mut next = state.clone();
        next.partial
            .fill_leftmost(replacement)
            .expect("a hole exists when leftmost_hole returned a context");
        Ok(next)
    }

    /// Completed strategy with default (absent) parameter settings.
    pub fn finish(&self, state: &DerivationState) -> Result<Strategy, MdpError> {
        self.finish_with_params(state, |_, _| Vec::new())
    }

    /// Completed strategy; `params(k, tactic)` supplies the settings of the
    /// k-th tactic application in derivation order.
    pub fn finish_with_params(
        &self,
        state: &DerivationState,
        mut params: impl FnMut(usize, &str) -> Vec<(String, ParamValue)>,
    ) -> Result<Strategy, MdpError> {
        let mut k = 0;
        let mut next = |name: &str| {
            let v = params(k, name);
            k += 1;
            v
        };
        state.partial.to_strategy(self.pool(), &mut next).ok_or(MdpError::NotTerminal)
    }

    /// Parameters tuned by bandits for the tactic an action introduces.
    pub fn action_params(&self, action: &Action) -> &[ParamSpec] {
        action
            .tactic()
            .and_then(|t| self.catalog.tactic(t))
            .map(|t| t.params.as_slice())
            .unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{validate, ProbeKind, ProbeSpec, TacticKind, TacticSpec};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> Arc<TacticCatalog> {
        let t = |n: &str, k| TacticSpec { name: n.into(), kind: k, params: vec![] };
        Arc::new(
            TacticCatalog::new(
                "QF_NIA",
                vec![
                    t("simplify", TacticKind::Preprocessing),
                    t("solve-eqs", TacticKind::Preprocessing),
                    t("nla2bv", TacticKind::Preprocessing),
                    t("bit-blast", TacticKind::Preprocessing),
                    t("smt", TacticKind::SolverWrapper),
                    t("qfnia", TacticKind::SolverWrapper),
                ],
                vec![ProbeSpec { name: "is-pb".into(), kind: ProbeKind::Boolean, thresholds: vec![] }],
                vec![1000, 4000],
            )
            .unwrap(),
        )
    }

    fn linear() -> Mdp {
        Mdp::new(StageConfig::linear(), catalog()).unwrap()
    }

    fn combine() -> Mdp {
        let pool = vec![Strategy::tactic("smt"), Strategy::then(TacticApp::new("simplify"), Strategy::tactic("qfnia"))];
        Mdp::new(StageConfig::combine(pool), catalog()).unwrap()
    }

    #[test]
    fn initial_state_is_single_hole() {
        assert_eq!(linear().initial_state().to_string(), "⟨Strategy⟩");
        assert_eq!(combine().initial_state().to_string(), "⟨Strategy⟩");
        assert!(matches!(
            Mdp::new(StageConfig::combine(vec![]), catalog()),
            Err(MdpError::InvalidStage(_))
        ));
    }

    #[test]
    fn then_then_solve() {
        let m = linear();
        let s = m.apply_action(&m.initial_state(), &Action::Then("simplify".into())).unwrap();
        assert_eq!(s.to_string(), "(then simplify ⟨Strategy⟩)");
        let s = m.apply_action(&s, &Action::Solve("smt".into())).unwrap();
        assert!(s.is_terminal());
        assert_eq!(s.to_string(), "(then simplify smt)");
        assert_eq!(m.finish(&s).unwrap(), Strategy::then(TacticApp::new("simplify"), Strategy::tactic("smt")));
        assert_eq!(m.legal_actions(&s), Err(MdpError::TerminalState));
    }

    #[test]
    fn bit_blast_only_after_simplify() {
        let m = linear();
        let after_simplify = m.apply_action(&m.initial_state(), &Action::Then("simplify".into())).unwrap();
        assert!(m.legal_actions(&after_simplify).unwrap().contains(&Action::Then("bit-blast".into())));
        let after_solve_eqs = m.apply_action(&m.initial_state(), &Action::Then("solve-eqs".into())).unwrap();
        assert!(!m.legal_actions(&after_solve_eqs).unwrap().contains(&Action::Then("bit-blast".into())));
    }

    #[test]
    fn linear_stage_never_offers_branching() {
        let m = linear();
        let actions = m.legal_actions(&m.initial_state()).unwrap();
        assert!(actions.iter().all(|a| matches!(a, Action::Solve(_) | Action::Then(_))));
        assert_eq!(&actions[..2], &[Action::Solve("smt".into()), Action::Solve("qfnia".into())]);
    }

    #[test]
    fn max_linear_len_forces_solver() {
        let mut stage = StageConfig::linear();
        stage.max_linear_len = 2;
        let m = Mdp::new(stage, catalog()).unwrap();
        let s = m.apply_action(&m.initial_state(), &Action::Then("simplify".into())).unwrap();
        assert!(m.legal_actions(&s).unwrap().iter().all(|a| matches!(a, Action::Solve(_))));
    }

    #[test]
    fn no_if_at_depth_three() {
        let m = combine();
        let p = Action::If(Predicate::Probe("is-pb".into()));
        let mut s = m.initial_state();
        for _ in 0..3 {
            assert!(m.legal_actions(&s).unwrap().contains(&p));
            s = m.apply_action(&s, &p).unwrap();
        }
        assert_eq!(s.hole().unwrap().depth, 3);
        assert!(!m.legal_actions(&s).unwrap().iter().any(|a| matches!(a, Action::If(_))));
        assert_eq!(m.apply_action(&s, &p), Err(MdpError::IllegalAction(p)));
    }

    #[test]
    fn no_try_for_under_try_for() {
        let m = combine();
        let s = DerivationState::from_partial(Partial::TryFor(Box::new(Partial::Hole), 4000));
        assert!(s.hole().unwrap().under_try_for);
        let actions = m.legal_actions(&s).unwrap();
        assert!(!actions.iter().any(|a| matches!(a, Action::TryForElse { .. })));
        assert!(actions.contains(&Action::Leaf(0)));
    }

    #[test]
    fn combine_builds_fallback_chain() {
        let m = combine();
        let s = m.apply_action(&m.initial_state(), &Action::TryForElse { member: 1, millis: 4000 }).unwrap();
        let s = m.apply_action(&s, &Action::Leaf(0)).unwrap();
        assert_eq!(m.finish(&s).unwrap().render(), "(or-else (try-for (then simplify qfnia) 4000) smt)");
        assert_eq!(m.finish(&m.initial_state()), Err(MdpError::NotTerminal));
    }

    #[test]
    fn leaf_budget_limits_growth() {
        let mut stage = StageConfig::combine(vec![Strategy::tactic("smt")]);
        stage.max_leaves = 2;
        let m = Mdp::new(stage, catalog()).unwrap();
        let s = m.apply_action(&m.initial_state(), &Action::If(Predicate::Probe("is-pb".into()))).unwrap();
        assert!(m.legal_actions(&s).unwrap().iter().all(|a| matches!(a, Action::Leaf(_))));
    }

    #[test]
    fn random_walks_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [linear(), combine()] {
            for _ in 0..2000 {
                let mut s = m.initial_state();
                let mut steps = 0;
                while !s.is_terminal() {
                    let actions = m.legal_actions(&s).unwrap();
                    assert!(!actions.is_empty());
                    s = m.apply_action(&s, actions.choose(&mut rng).unwrap()).unwrap();
                    steps += 1;
                    assert!(steps <= m.stage().max_linear_len + m.stage().max_leaves);
                }
                let ast = m.finish(&s).unwrap();
                assert!(validate(&ast, m.catalog()).is_empty(), "{ast}");
            }
        }
    }

    #[test]
    fn params_assigned_in_derivation_order() {
        let m = linear();
        let s = m.apply_action(&m.initial_state(), &Action::Then("simplify".into())).unwrap();
        let s = m.apply_action(&s, &Action::Solve("smt".into())).unwrap();
        let ast = m
            .finish_with_params(&s, |k, name| vec![(format!("p{k}_{name}"), ParamValue::Int(k as i64))])
            .unwrap();
        assert_eq!(ast.render(), "(then (using-params simplify :p0_simplify 0) (using-params smt :p1_smt 1))");
    }
}
