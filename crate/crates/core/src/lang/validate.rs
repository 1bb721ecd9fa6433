//! Domain-knowledge rules that prune the strategy space.

use std::fmt;

use super::ast::{Strategy, TacticApp};
use super::catalog::TacticCatalog;

/// `if` nodes may only appear at syntax-tree depths below this bound.
pub const MAX_IF_DEPTH: usize = 3;

/// Rule identifiers; R4 (preselected candidate values) is enforced by the
/// catalog, not by validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    /// Terminal tactics are solver wrappers; nothing follows a solver wrapper.
    R1,
    /// No try-for inside another try-for.
    R2,
    /// `if` only in the first three depths and never after a tactic application.
    R3,
    /// nla2bv at most once per tactic sequence.
    R5,
    /// bit-blast only immediately after simplify.
    R6,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    /// Rendering of the first offending subterm.
    pub at: String,
}

#[derive(Clone, Default)]
struct PathCtx<'a> {
    depth: usize,
    under_try_for: bool,
    tactic_applied: bool,
    nla2bv: usize,
    last: Option<&'a str>,
}

struct Checker<'c> {
    catalog: &'c TacticCatalog,
    found: Vec<Violation>,
}

impl Checker<'_> {
    fn flag(&mut self, rule: Rule, at: impl FnOnce() -> String) {
        if !self.found.iter().any(|v| v.rule == rule) {
            self.found.push(Violation { rule, at: at() });
        }
    }

    fn tactic<'a>(&mut self, t: &'a TacticApp, terminal: bool, ctx: &PathCtx<'a>) {
        let wrapper = self.catalog.is_solver_wrapper(&t.name);
        if wrapper != terminal {
            self.flag(Rule::R1, || t.name.clone());
        }
        if t.name == "nla2bv" && ctx.nla2bv >= 1 {
            self.flag(Rule::R5, || t.name.clone());
        }
        if t.name == "bit-blast" && ctx.last != Some("simplify") {
            self.flag(Rule::R6, || t.name.clone());
        }
    }

    fn walk<'a>(&mut self, s: &'a Strategy, ctx: PathCtx<'a>) {
        match s {
            Strategy::Apply(t) => self.tactic(t, true, &ctx),
            Strategy::Then(head, tail) => {
                self.tactic(head, false, &ctx);
                let next = PathCtx {
                    depth: ctx.depth + 1,
                    tactic_applied: true,
                    nla2bv: ctx.nla2bv + usize::from(head.name == "nla2bv"),
                    last: Some(head.name.as_str()),
                    ..ctx
                };
                self.walk(tail, next);
            }
            Strategy::OrElse(a, b) => {
                let next = PathCtx { depth: ctx.depth + 1, ..ctx };
                self.walk(a, next.clone());
                self.walk(b, next);
            }
            Strategy::TryFor(child, _) => {
                if ctx.under_try_for {
                    self.flag(Rule::R2, || s.render());
                }
                self.walk(child, PathCtx { depth: ctx.depth + 1, under_try_for: true, ..ctx });
            }
            Strategy::If(_, a, b) => {
                if ctx.depth >= MAX_IF_DEPTH || ctx.tactic_applied {
                    self.flag(Rule::R3, || s.render());
                }
                let next = PathCtx { depth: ctx.depth + 1, ..ctx };
                self.walk(a, next.clone());
                self.walk(b, next);
            }
        }
    }
}

/// Returns the violated rules, at most one entry per rule, ordered by rule.
pub fn validate(s: &Strategy, catalog: &TacticCatalog) -> Vec<Violation> {
    let mut c = Checker { catalog, found: Vec::new() };
    c.walk(s, PathCtx::default());
    c.found.sort_by_key(|v| v.rule);
    c.found
}
