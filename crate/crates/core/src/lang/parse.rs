//! Recursive-descent parser for the strategy surface syntax.

use super::ast::{CmpOp, ParamValue, Predicate, Strategy, TacticApp};
use super::catalog::TacticCatalog;
use super::LangError;

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<(usize, Tok<'a>)> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let c = rest.chars().next()?;
        Some(match c {
            '(' => (self.pos, Tok::Open),
            ')' => (self.pos, Tok::Close),
            _ => {
                let end = rest.find(|c: char| c.is_whitespace() || c == '(' || c == ')').unwrap_or(rest.len());
                (self.pos, Tok::Atom(&rest[..end]))
            }
        })
    }

    fn next(&mut self) -> Option<(usize, Tok<'a>)> {
        let t = self.peek()?;
        self.pos += match t.1 {
            Tok::Open | Tok::Close => 1,
            Tok::Atom(a) => a.len(),
        };
        Some(t)
    }

    fn err(&self, position: usize, expected: &str) -> LangError {
        LangError::Syntax { position, expected: expected.to_string() }
    }

    fn expect_open(&mut self, expected: &str) -> Result<(), LangError> {
        match self.next() {
            Some((_, Tok::Open)) => Ok(()),
            Some((p, _)) => Err(self.err(p, expected)),
            None => Err(self.err(self.src.len(), expected)),
        }
    }

    fn expect_close(&mut self) -> Result<(), LangError> {
        match self.next() {
            Some((_, Tok::Close)) => Ok(()),
            Some((p, _)) => Err(self.err(p, "`)`")),
            None => Err(self.err(self.src.len(), "`)`")),
        }
    }

    fn atom(&mut self, expected: &str) -> Result<(usize, &'a str), LangError> {
        match self.next() {
            Some((p, Tok::Atom(a))) => Ok((p, a)),
            Some((p, _)) => Err(self.err(p, expected)),
            None => Err(self.err(self.src.len(), expected)),
        }
    }

    fn int(&mut self, expected: &str) -> Result<i64, LangError> {
        let (p, a) = self.atom(expected)?;
        a.parse().map_err(|_| self.err(p, expected))
    }
}

fn is_symbol(s: &str) -> bool {
    !s.is_empty() && !s.starts_with(':') && s.parse::<i64>().is_err()
}

struct Parser<'a> {
    lex: Lexer<'a>,
}

impl<'a> Parser<'a> {
    fn strategy(&mut self) -> Result<Strategy, LangError> {
        match self.lex.peek() {
            Some((_, Tok::Atom(_))) => Ok(Strategy::Apply(self.tactic_app()?)),
            Some((_, Tok::Open)) => {
                let save = self.lex.pos;
                self.lex.next();
                let (p, head) = self.lex.atom("combinator")?;
                match head {
                    "using-params" => {
                        self.lex.pos = save;
                        Ok(Strategy::Apply(self.tactic_app()?))
                    }
                    "then" | "and-then" => {
                        let mut items = vec![self.strategy()?];
                        while !matches!(self.lex.peek(), Some((_, Tok::Close)) | None) {
                            items.push(self.strategy()?);
                        }
                        self.lex.expect_close()?;
                        if items.len() < 2 {
                            return Err(self.lex.err(p, "at least two strategies in `then`"));
                        }
                        let mut acc = items.pop().unwrap();
                        while let Some(s) = items.pop() {
                            match s {
                                Strategy::Apply(t) => acc = Strategy::then(t, acc),
                                _ => return Err(self.lex.err(p, "tactic application as `then` head")),
                            }
                        }
                        Ok(acc)
                    }
                    "or-else" => {
                        let mut items = vec![self.strategy()?];
                        while !matches!(self.lex.peek(), Some((_, Tok::Close)) | None) {
                            items.push(self.strategy()?);
                        }
                        self.lex.expect_close()?;
                        if items.len() < 2 {
                            return Err(self.lex.err(p, "at least two strategies in `or-else`"));
                        }
                        let mut acc = items.pop().unwrap();
                        while let Some(s) = items.pop() {
                            acc = Strategy::or_else(s, acc);
                        }
                        Ok(acc)
                    }
                    "try-for" => {
                        let child = self.strategy()?;
                        let ms = self.lex.int("timeout constant")?;
                        if ms <= 0 {
                            return Err(self.lex.err(p, "positive try-for timeout"));
                        }
                        self.lex.expect_close()?;
                        Ok(Strategy::try_for(child, ms as u64))
                    }
                    "if" | "cond" => {
                        let pred = self.predicate()?;
                        let a = self.strategy()?;
                        let b = self.strategy()?;
                        self.lex.expect_close()?;
                        Ok(Strategy::if_then_else(pred, a, b))
                    }
                    _ => Err(self.lex.err(p, "one of then, or-else, try-for, if, using-params")),
                }
            }
            Some((p, Tok::Close)) => Err(self.lex.err(p, "strategy")),
            None => Err(self.lex.err(self.lex.src.len(), "strategy")),
        }
    }

    fn tactic_app(&mut self) -> Result<TacticApp, LangError> {
        match self.lex.peek() {
            Some((_, Tok::Atom(_))) => {
                let (p, name) = self.lex.atom("tactic")?;
                if !is_symbol(name) {
                    return Err(self.lex.err(p, "tactic name"));
                }
                Ok(TacticApp::new(name))
            }
            Some((_, Tok::Open)) => {
                self.lex.next();
                let (p, head) = self.lex.atom("using-params")?;
                if head != "using-params" {
                    return Err(self.lex.err(p, "tactic application"));
                }
                let (p, name) = self.lex.atom("tactic name")?;
                if !is_symbol(name) {
                    return Err(self.lex.err(p, "tactic name"));
                }
                let mut app = TacticApp::new(name);
                while let Some((p, tok)) = self.lex.peek() {
                    match tok {
                        Tok::Close => break,
                        Tok::Atom(key) if key.len() > 1 && key.starts_with(':') => {
                            self.lex.next();
                            let (vp, v) = self.lex.atom("parameter value")?;
                            let value = match v {
                                "true" => ParamValue::Bool(true),
                                "false" => ParamValue::Bool(false),
                                _ => ParamValue::Int(v.parse().map_err(|_| self.lex.err(vp, "parameter value"))?),
                            };
                            app.params.push((key[1..].to_string(), value));
                        }
                        _ => return Err(self.lex.err(p, "`:parameter value` or `)`")),
                    }
                }
                self.lex.expect_close()?;
                Ok(app)
            }
            Some((p, _)) => Err(self.lex.err(p, "tactic application")),
            None => Err(self.lex.err(self.lex.src.len(), "tactic application")),
        }
    }

    fn predicate(&mut self) -> Result<Predicate, LangError> {
        match self.lex.peek() {
            Some((p, Tok::Atom(a))) => {
                self.lex.next();
                if !is_symbol(a) {
                    return Err(self.lex.err(p, "probe"));
                }
                Ok(Predicate::Probe(a.to_string()))
            }
            Some((_, Tok::Open)) => {
                self.lex.expect_open("predicate")?;
                let (p, op) = self.lex.atom("relational operator")?;
                let op = CmpOp::from_symbol(op).ok_or_else(|| self.lex.err(p, "relational operator"))?;
                let (p, probe) = self.lex.atom("numeric probe")?;
                if !is_symbol(probe) {
                    return Err(self.lex.err(p, "numeric probe"));
                }
                let constant = self.lex.int("integer constant")?;
                self.lex.expect_close()?;
                Ok(Predicate::Cmp { probe: probe.to_string(), op, constant })
            }
            Some((p, Tok::Close)) => Err(self.lex.err(p, "predicate")),
            None => Err(self.lex.err(self.lex.src.len(), "predicate")),
        }
    }
}

/// Parses strategy text without resolving names.
pub fn parse_syntax(text: &str) -> Result<Strategy, LangError> {
    let mut parser = Parser { lex: Lexer { src: text, pos: 0 } };
    let s = parser.strategy()?;
    if let Some((p, _)) = parser.lex.peek() {
        return Err(parser.lex.err(p, "end of input"));
    }
    Ok(s)
}

/// Parses strategy text and resolves every tactic, parameter and probe
/// against the catalog.
pub fn parse(text: &str, catalog: &TacticCatalog) -> Result<Strategy, LangError> {
    let s = parse_syntax(text)?;
    resolve(&s, catalog)?;
    Ok(s)
}

/// Checks that all names used in the strategy exist in the catalog.
pub fn resolve(s: &Strategy, catalog: &TacticCatalog) -> Result<(), LangError> {
    fn app(t: &TacticApp, catalog: &TacticCatalog) -> Result<(), LangError> {
        let spec = catalog.tactic(&t.name).ok_or_else(|| LangError::UnknownSymbol(t.name.clone()))?;
        for (name, _) in &t.params {
            if !spec.params.iter().any(|p| &p.name == name) {
                return Err(LangError::UnknownSymbol(name.clone()));
            }
        }
        Ok(())
    }
    match s {
        Strategy::Apply(t) => app(t, catalog),
        Strategy::Then(h, tail) => {
            app(h, catalog)?;
            resolve(tail, catalog)
        }
        Strategy::OrElse(a, b) => {
            resolve(a, catalog)?;
            resolve(b, catalog)
        }
        Strategy::TryFor(c, _) => resolve(c, catalog),
        Strategy::If(p, a, b) => {
            catalog.check_predicate(p)?;
            resolve(a, catalog)?;
            resolve(b, catalog)
        }
    }
}
