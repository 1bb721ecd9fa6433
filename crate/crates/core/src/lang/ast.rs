//! Abstract syntax of tactic strategies and their s-expression rendering.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Literal value of a tactic parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
        }
    }
}

/// Relational operator of a numeric probe predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Gt,
    Lt,
    Ge,
    Le,
    Eq,
    Ne,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Gt, CmpOp::Lt, CmpOp::Ge, CmpOp::Le, CmpOp::Eq, CmpOp::Ne];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }

    /// Accepts the ASCII spellings plus the unicode forms.
    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        Some(match s {
            ">" => CmpOp::Gt,
            "<" => CmpOp::Lt,
            ">=" | "≥" => CmpOp::Ge,
            "<=" | "≤" => CmpOp::Le,
            "=" => CmpOp::Eq,
            "!=" | "≠" => CmpOp::Ne,
            _ => return None,
        })
    }

    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Gt => lhs > rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }
}

/// Branching condition of an `if` combinator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    Probe(String),
    Cmp { probe: String, op: CmpOp, constant: i64 },
}

impl Predicate {
    pub fn probe_name(&self) -> &str {
        match self {
            Predicate::Probe(p) => p,
            Predicate::Cmp { probe, .. } => probe,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Probe(p) => f.write_str(p),
            Predicate::Cmp { probe, op, constant } => {
                write!(f, "({} {} {})", op.symbol(), probe, constant)
            }
        }
    }
}

/// A single tactic, optionally wrapped in `using-params`.
///
/// Settings keep the order they were written in; [`Strategy::canonical_key`]
/// sorts them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TacticApp {
    pub name: String,
    pub params: Vec<(String, ParamValue)>,
}

impl TacticApp {
    pub fn new(name: impl Into<String>) -> Self {
        TacticApp { name: name.into(), params: Vec::new() }
    }

    pub fn with_param(mut self, name: impl Into<String>, value: ParamValue) -> Self {
        self.params.push((name.into(), value));
        self
    }

    fn write(&self, out: &mut String, sorted: bool) {
        if self.params.is_empty() {
            out.push_str(&self.name);
            return;
        }
        out.push_str("(using-params ");
        out.push_str(&self.name);
        let mut params: Vec<&(String, ParamValue)> = self.params.iter().collect();
        if sorted {
            params.sort();
        }
        for (name, value) in params {
            out.push_str(" :");
            out.push_str(name);
            out.push(' ');
            out.push_str(&value.to_string());
        }
        out.push(')');
    }
}

/// Expression tree of tactics and combinators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// A bare tactic or a `using-params` application.
    Apply(TacticApp),
    /// `(then head tail)`
    Then(TacticApp, Box<Strategy>),
    /// `(or-else first second)`
    OrElse(Box<Strategy>, Box<Strategy>),
    /// `(try-for child millis)`
    TryFor(Box<Strategy>, u64),
    /// `(if pred then else)`
    If(Predicate, Box<Strategy>, Box<Strategy>),
}

impl Strategy {
    pub fn tactic(name: impl Into<String>) -> Self {
        Strategy::Apply(TacticApp::new(name))
    }

    pub fn then(head: TacticApp, tail: Strategy) -> Self {
        Strategy::Then(head, Box::new(tail))
    }

    pub fn or_else(first: Strategy, second: Strategy) -> Self {
        Strategy::OrElse(Box::new(first), Box::new(second))
    }

    pub fn try_for(child: Strategy, millis: u64) -> Self {
        Strategy::TryFor(Box::new(child), millis)
    }

    pub fn if_then_else(pred: Predicate, then_branch: Strategy, else_branch: Strategy) -> Self {
        Strategy::If(pred, Box::new(then_branch), Box::new(else_branch))
    }

    /// Builds `(then t1 (then t2 ... last))` from a nonempty tactic sequence.
    pub fn sequence(mut tactics: Vec<TacticApp>) -> Option<Self> {
        let last = tactics.pop()?;
        let mut s = Strategy::Apply(last);
        while let Some(t) = tactics.pop() {
            s = Strategy::then(t, s);
        }
        Some(s)
    }

    /// Single-line s-expression in the solver's surface syntax.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, false);
        out
    }

    /// Rendering with parameter settings sorted by name; the deduplication
    /// and cache key.
    pub fn canonical_key(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, true);
        out
    }

    fn write(&self, out: &mut String, sorted: bool) {
        match self {
            Strategy::Apply(t) => t.write(out, sorted),
            Strategy::Then(head, tail) => {
                out.push_str("(then ");
                head.write(out, sorted);
                out.push(' ');
                tail.write(out, sorted);
                out.push(')');
            }
            Strategy::OrElse(a, b) => {
                out.push_str("(or-else ");
                a.write(out, sorted);
                out.push(' ');
                b.write(out, sorted);
                out.push(')');
            }
            Strategy::TryFor(child, ms) => {
                out.push_str("(try-for ");
                child.write(out, sorted);
                out.push(' ');
                out.push_str(&ms.to_string());
                out.push(')');
            }
            Strategy::If(p, a, b) => {
                out.push_str("(if ");
                out.push_str(&p.to_string());
                out.push(' ');
                a.write(out, sorted);
                out.push(' ');
                b.write(out, sorted);
                out.push(')');
            }
        }
    }

    /// True when the strategy is a plain `then` chain (no or-else, try-for or if).
    pub fn is_linear(&self) -> bool {
        match self {
            Strategy::Apply(_) => true,
            Strategy::Then(_, tail) => tail.is_linear(),
            _ => false,
        }
    }

    /// Tactic applications of a linear strategy in execution order.
    pub fn linear_tactics(&self) -> Option<Vec<&TacticApp>> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Strategy::Apply(t) => {
                    out.push(t);
                    return Some(out);
                }
                Strategy::Then(h, tail) => {
                    out.push(h);
                    cur = tail;
                }
                _ => return None,
            }
        }
    }

    /// Number of `if` nodes.
    pub fn branch_count(&self) -> usize {
        match self {
            Strategy::Apply(_) => 0,
            Strategy::Then(_, t) => t.branch_count(),
            Strategy::OrElse(a, b) => a.branch_count() + b.branch_count(),
            Strategy::TryFor(c, _) => c.branch_count(),
            Strategy::If(_, a, b) => 1 + a.branch_count() + b.branch_count(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
