//! Synthesis of SMT solver tactic strategies with layered and staged Monte
//! Carlo tree search.

pub mod eval;
pub mod lang;
pub mod mcts;
pub mod mdp;
pub mod staged;
