//! Minimal SMT-LIB v2 script reader: s-expressions with source spans,
//! the status annotation, probe features, and check-sat rewriting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;

use thiserror::Error;

use super::record::Status;
use crate::lang::Strategy;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("SMT-LIB parse error at byte {position}: {message}")]
pub struct SmtParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            Sexp::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(l) => Some(l),
            Sexp::Atom(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Sexp::Atom(a) => a.clone(),
            Sexp::List(items) => {
                let inner: Vec<String> = items.iter().map(Sexp::render).collect();
                format!("({})", inner.join(" "))
            }
        }
    }
}

struct Reader<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl Reader<'_> {
    fn err(&self, position: usize, message: impl Into<String>) -> SmtParseError {
        SmtParseError { position, message: message.into() }
    }

    fn skip_trivia(&mut self) {
        while self.pos < self.src.len() {
            match self.src[self.pos] {
                b';' => {
                    while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn sexp(&mut self) -> Result<Sexp, SmtParseError> {
        self.skip_trivia();
        let start = self.pos;
        match self.src.get(self.pos) {
            None => Err(self.err(start, "unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.src.get(self.pos) {
                        None => return Err(self.err(start, "unbalanced `(`")),
                        Some(b')') => {
                            self.pos += 1;
                            return Ok(Sexp::List(items));
                        }
                        _ => items.push(self.sexp()?),
                    }
                }
            }
            Some(b')') => Err(self.err(start, "unexpected `)`")),
            Some(b'"') => {
                self.pos += 1;
                loop {
                    match self.src.get(self.pos) {
                        None => return Err(self.err(start, "unterminated string literal")),
                        Some(b'"') if self.src.get(self.pos + 1) == Some(&b'"') => self.pos += 2,
                        Some(b'"') => {
                            self.pos += 1;
                            return Ok(Sexp::Atom(self.text[start..self.pos].to_string()));
                        }
                        _ => self.pos += 1,
                    }
                }
            }
            Some(b'|') => {
                self.pos += 1;
                while self.src.get(self.pos).is_some_and(|&c| c != b'|') {
                    self.pos += 1;
                }
                if self.pos >= self.src.len() {
                    return Err(self.err(start, "unterminated quoted symbol"));
                }
                self.pos += 1;
                Ok(Sexp::Atom(self.text[start..self.pos].to_string()))
            }
            Some(_) => {
                while self
                    .src
                    .get(self.pos)
                    .is_some_and(|&c| !c.is_ascii_whitespace() && !matches!(c, b'(' | b')' | b';' | b'"' | b'|'))
                {
                    self.pos += 1;
                }
                Ok(Sexp::Atom(self.text[start..self.pos].to_string()))
            }
        }
    }
}

/// Top-level commands with their byte spans.
pub fn read_script(text: &str) -> Result<Vec<(Sexp, Range<usize>)>, SmtParseError> {
    let mut r = Reader { src: text.as_bytes(), text, pos: 0 };
    let mut out = Vec::new();
    loop {
        r.skip_trivia();
        if r.pos >= r.src.len() {
            return Ok(out);
        }
        let start = r.pos;
        let s = r.sexp()?;
        if s.list().is_none() {
            return Err(r.err(start, "expected a command"));
        }
        out.push((s, start..r.pos));
    }
}

fn command(s: &Sexp) -> Option<(&str, &[Sexp])> {
    let l = s.list()?;
    Some((l.first()?.atom()?, &l[1..]))
}

/// Expected status from `(set-info :status ...)`, unknown when absent.
pub fn read_status(commands: &[(Sexp, Range<usize>)]) -> Status {
    for (c, _) in commands {
        if let Some(("set-info", [k, v])) = command(c) {
            if k.atom() == Some(":status") {
                return match v.atom() {
                    Some("sat") => Status::Sat,
                    Some("unsat") => Status::Unsat,
                    _ => Status::Unknown,
                };
            }
        }
    }
    Status::Unknown
}

/// Replaces every `(check-sat)` with `(check-sat-using <strategy>)`,
/// appending one if the script has none.
pub fn apply_strategy(text: &str, strategy: &Strategy) -> Result<String, SmtParseError> {
    let commands = read_script(text)?;
    let replacement = format!("(check-sat-using {})", strategy.render());
    let mut out = String::with_capacity(text.len() + replacement.len());
    let mut last = 0;
    let mut found = false;
    for (c, span) in &commands {
        if matches!(command(c), Some(("check-sat", []))) {
            out.push_str(&text[last..span.start]);
            out.push_str(&replacement);
            last = span.end;
            found = true;
        }
    }
    out.push_str(&text[last..]);
    if !found {
        out.push('\n');
        out.push_str(&replacement);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SortClass {
    Bool,
    Arith,
    BitVec,
    Other,
}

fn classify_sort(s: &Sexp) -> SortClass {
    match s {
        Sexp::Atom(a) if a == "Bool" => SortClass::Bool,
        Sexp::Atom(a) if a == "Int" || a == "Real" => SortClass::Arith,
        Sexp::List(l) if l.len() == 3 && l[0].atom() == Some("_") && l[1].atom() == Some("BitVec") => {
            SortClass::BitVec
        }
        _ => SortClass::Other,
    }
}

fn is_numeral(s: &str) -> bool {
    let s = s.strip_prefix('-').unwrap_or(s);
    !s.is_empty() && s.chars().all(|c| c.is_ascii_digit() || c == '.') && s.chars().next().unwrap().is_ascii_digit()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct DagNode {
    head: String,
    args: Vec<u32>,
}

/// Hash-consed term graph of a script's assertions.
#[derive(Default)]
struct Dag {
    nodes: Vec<DagNode>,
    index: HashMap<DagNode, u32>,
    consts: HashMap<String, SortClass>,
    defined: HashMap<String, u32>,
    declared_functions: usize,
    fresh: usize,
}

impl Dag {
    fn intern(&mut self, node: DagNode) -> u32 {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(node.clone());
        self.index.insert(node, id);
        id
    }

    fn leaf(&mut self, head: &str) -> u32 {
        self.intern(DagNode { head: head.to_string(), args: Vec::new() })
    }

    fn term(&mut self, t: &Sexp, env: &mut Vec<HashMap<String, u32>>) -> Result<u32, String> {
        match t {
            Sexp::Atom(a) => {
                for scope in env.iter().rev() {
                    if let Some(&id) = scope.get(a) {
                        return Ok(id);
                    }
                }
                if let Some(&id) = self.defined.get(a) {
                    return Ok(id);
                }
                Ok(self.leaf(a))
            }
            Sexp::List(items) => {
                let (head, rest) = items.split_first().ok_or("empty term")?;
                match head.atom() {
                    Some("let") => {
                        let [bindings, body] = rest else { return Err("malformed let".into()) };
                        let mut scope = HashMap::new();
                        for b in bindings.list().ok_or("malformed let bindings")? {
                            let [name, value] = b.list().ok_or("malformed let binding")? else {
                                return Err("malformed let binding".into());
                            };
                            let id = self.term(value, env)?;
                            scope.insert(name.atom().ok_or("malformed let binding")?.to_string(), id);
                        }
                        env.push(scope);
                        let r = self.term(body, env);
                        env.pop();
                        r
                    }
                    Some("!") => self.term(rest.first().ok_or("malformed annotation")?, env),
                    Some("_") => Ok(self.leaf(&t.render())),
                    Some(q @ ("forall" | "exists")) => {
                        let [vars, body] = rest else { return Err(format!("malformed {q}")) };
                        let mut scope = HashMap::new();
                        for v in vars.list().ok_or("malformed binder")? {
                            let name = v.list().and_then(|l| l.first()).and_then(Sexp::atom).ok_or("malformed binder")?;
                            self.fresh += 1;
                            let id = self.leaf(&format!("{name}!bound{}", self.fresh));
                            scope.insert(name.to_string(), id);
                        }
                        env.push(scope);
                        let b = self.term(body, env);
                        env.pop();
                        let b = b?;
                        Ok(self.intern(DagNode { head: q.to_string(), args: vec![b] }))
                    }
                    _ => {
                        let head = match head {
                            Sexp::Atom(a) => a.clone(),
                            other => other.render(),
                        };
                        let args = rest.iter().map(|a| self.term(a, env)).collect::<Result<Vec<_>, _>>()?;
                        Ok(self.intern(DagNode { head, args }))
                    }
                }
            }
        }
    }
}

pub type FeatureMap = BTreeMap<String, FeatureValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Bool(bool),
    Int(i64),
}

/// Probes computed from the script text.
pub const FEATURE_PROBES: [&str; 10] = [
    "num-consts",
    "num-exprs",
    "size",
    "depth",
    "num-bool-consts",
    "num-arith-consts",
    "num-bv-consts",
    "is-pb",
    "is-unbounded",
    "is-propositional",
];

/// Computes probe values of an SMT-LIB script.
///
/// * `num-consts`: declared 0-arity symbols.
/// * `num-exprs`: distinct subterms of the assertions (shared subterms once).
/// * `size`: assertion AST nodes counted without sharing.
/// * `depth`: maximum assertion term depth.
/// * `num-{bool,arith,bv}-consts`: declared constants by sort.
/// * `is-pb`: at least one assertion, and every assertion is a boolean
///   formula over boolean constants or a linear comparison of sums of
///   `(ite b k₁ k₂)` indicators and numerals, with at least one comparison.
/// * `is-unbounded`: some Int/Real constant lacks a top-level numeric lower
///   or upper bound.
/// * `is-propositional`: all constants are Bool and only boolean
///   connectives occur.
pub fn extract_features(text: &str) -> Result<FeatureMap, SmtParseError> {
    let commands = read_script(text)?;
    let mut dag = Dag::default();
    let mut roots = Vec::new();
    for (c, span) in &commands {
        let Some((name, args)) = command(c) else { continue };
        let fail = |m: String| SmtParseError { position: span.start, message: m };
        match (name, args) {
            ("declare-const", [n, sort]) => {
                dag.consts.insert(n.atom().ok_or_else(|| fail("bad symbol".into()))?.to_string(), classify_sort(sort));
            }
            ("declare-fun", [n, params, sort]) => {
                let n = n.atom().ok_or_else(|| fail("bad symbol".into()))?.to_string();
                if params.list().is_some_and(|p| p.is_empty()) {
                    dag.consts.insert(n, classify_sort(sort));
                } else {
                    dag.declared_functions += 1;
                }
            }
            ("define-fun", [n, params, _sort, body]) if params.list().is_some_and(|p| p.is_empty()) => {
                let id = dag.term(body, &mut Vec::new()).map_err(fail)?;
                dag.defined.insert(n.atom().ok_or_else(|| fail("bad symbol".into()))?.to_string(), id);
            }
            ("assert", [t]) => roots.push(dag.term(t, &mut Vec::new()).map_err(fail)?),
            ("assert", _) => return Err(fail("assert takes one term".into())),
            _ => {}
        }
    }

    // reachable nodes, tree sizes and depths (children always precede parents)
    let n = dag.nodes.len();
    let mut size = vec![0u64; n];
    let mut depth = vec![0u64; n];
    for i in 0..n {
        let node = &dag.nodes[i];
        size[i] = 1 + node.args.iter().map(|&a| size[a as usize]).fold(0u64, u64::saturating_add);
        depth[i] = 1 + node.args.iter().map(|&a| depth[a as usize]).max().unwrap_or(0);
    }
    let mut reachable = HashSet::new();
    let mut stack: Vec<u32> = roots.clone();
    while let Some(id) = stack.pop() {
        if reachable.insert(id) {
            stack.extend(dag.nodes[id as usize].args.iter().copied());
        }
    }
    let total_size = roots.iter().map(|&r| size[r as usize]).fold(0u64, u64::saturating_add);
    let max_depth = roots.iter().map(|&r| depth[r as usize]).max().unwrap_or(0);

    let count = |class| dag.consts.values().filter(|&&c| c == class).count() as i64;
    let pb = PbCheck { dag: &dag };
    let is_pb = !roots.is_empty()
        && roots.iter().all(|&r| pb.assertion(r))
        && roots.iter().any(|&r| pb.has_inequality(r));

    let propositional = dag.consts.values().all(|&c| c == SortClass::Bool)
        && dag.declared_functions == 0
        && reachable.iter().all(|&id| {
            let node = &dag.nodes[id as usize];
            if node.args.is_empty() {
                matches!(node.head.as_str(), "true" | "false") || dag.consts.get(&node.head) == Some(&SortClass::Bool)
            } else {
                matches!(node.head.as_str(), "and" | "or" | "not" | "=>" | "xor" | "=" | "ite" | "distinct")
            }
        });

    let mut f = FeatureMap::new();
    f.insert("num-consts".into(), FeatureValue::Int(dag.consts.len() as i64));
    f.insert("num-exprs".into(), FeatureValue::Int(reachable.len() as i64));
    f.insert("size".into(), FeatureValue::Int(total_size.min(i64::MAX as u64) as i64));
    f.insert("depth".into(), FeatureValue::Int(max_depth as i64));
    f.insert("num-bool-consts".into(), FeatureValue::Int(count(SortClass::Bool)));
    f.insert("num-arith-consts".into(), FeatureValue::Int(count(SortClass::Arith)));
    f.insert("num-bv-consts".into(), FeatureValue::Int(count(SortClass::BitVec)));
    f.insert("is-pb".into(), FeatureValue::Bool(is_pb));
    f.insert("is-unbounded".into(), FeatureValue::Bool(is_unbounded(&dag, &roots)));
    f.insert("is-propositional".into(), FeatureValue::Bool(propositional));
    Ok(f)
}

struct PbCheck<'d> {
    dag: &'d Dag,
}

impl PbCheck<'_> {
    fn node(&self, id: u32) -> &DagNode {
        &self.dag.nodes[id as usize]
    }

    fn boolean(&self, id: u32) -> bool {
        let n = self.node(id);
        if n.args.is_empty() {
            return matches!(n.head.as_str(), "true" | "false") || self.dag.consts.get(&n.head) == Some(&SortClass::Bool);
        }
        matches!(n.head.as_str(), "not" | "and" | "or" | "xor" | "=>") && n.args.iter().all(|&a| self.boolean(a))
    }

    fn numeral(&self, id: u32) -> bool {
        let n = self.node(id);
        (n.args.is_empty() && is_numeral(&n.head)) || (n.head == "-" && n.args.len() == 1 && self.numeral(n.args[0]))
    }

    fn sum(&self, id: u32) -> bool {
        let n = self.node(id);
        match (n.head.as_str(), n.args.as_slice()) {
            _ if self.numeral(id) => true,
            ("+" | "-", args) if !args.is_empty() => args.iter().all(|&a| self.sum(a)),
            ("*", [a, b]) => (self.numeral(*a) && self.sum(*b)) || (self.sum(*a) && self.numeral(*b)),
            ("ite", [c, a, b]) => self.boolean(*c) && self.numeral(*a) && self.numeral(*b),
            _ => false,
        }
    }

    fn inequality(&self, id: u32) -> bool {
        let n = self.node(id);
        matches!(n.head.as_str(), "<=" | ">=" | "<" | ">" | "=") && n.args.len() == 2 && n.args.iter().all(|&a| self.sum(a))
    }

    fn assertion(&self, id: u32) -> bool {
        let n = self.node(id);
        if n.head == "and" {
            return n.args.iter().all(|&a| self.assertion(a));
        }
        self.boolean(id) || self.inequality(id)
    }

    fn has_inequality(&self, id: u32) -> bool {
        let n = self.node(id);
        if n.head == "and" {
            return n.args.iter().any(|&a| self.has_inequality(a));
        }
        self.inequality(id)
    }
}

fn is_unbounded(dag: &Dag, roots: &[u32]) -> bool {
    let arith: Vec<&String> = dag.consts.iter().filter(|(_, &c)| c == SortClass::Arith).map(|(n, _)| n).collect();
    if arith.is_empty() {
        return false;
    }
    let mut lower: HashSet<&str> = HashSet::new();
    let mut upper: HashSet<&str> = HashSet::new();
    let mut stack: Vec<u32> = roots.to_vec();
    while let Some(id) = stack.pop() {
        let n = &dag.nodes[id as usize];
        if n.head == "and" {
            stack.extend(n.args.iter().copied());
            continue;
        }
        let [a, b] = n.args.as_slice() else { continue };
        let (a, b) = (&dag.nodes[*a as usize], &dag.nodes[*b as usize]);
        fn var_of<'d>(dag: &Dag, x: &'d DagNode) -> Option<&'d str> {
            (x.args.is_empty() && dag.consts.get(&x.head) == Some(&SortClass::Arith)).then_some(x.head.as_str())
        }
        let var = |x| var_of(dag, x);
        let num = |x: &DagNode| x.args.is_empty() && is_numeral(&x.head);
        match n.head.as_str() {
            "<=" | "<" => {
                if let (Some(v), true) = (var(a), num(b)) {
                    upper.insert(v);
                } else if let (true, Some(v)) = (num(a), var(b)) {
                    lower.insert(v);
                }
            }
            ">=" | ">" => {
                if let (Some(v), true) = (var(a), num(b)) {
                    lower.insert(v);
                } else if let (true, Some(v)) = (num(a), var(b)) {
                    upper.insert(v);
                }
            }
            "=" => {
                if let Some(v) = var(a).filter(|_| num(b)).or_else(|| var(b).filter(|_| num(a))) {
                    lower.insert(v);
                    upper.insert(v);
                }
            }
            _ => {}
        }
    }
    arith.iter().any(|v| !lower.contains(v.as_str()) || !upper.contains(v.as_str()))
}
