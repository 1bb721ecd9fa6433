//! The strategy language: syntax, parsing, validation and tactic catalogs.

pub mod ast;
pub mod catalog;
pub mod parse;
pub mod validate;

use thiserror::Error;

pub use ast::{CmpOp, ParamValue, Predicate, Strategy, TacticApp};
pub use catalog::{ParamSpec, ProbeKind, ProbeSpec, TacticCatalog, TacticKind, TacticSpec};
pub use parse::{parse, parse_syntax, resolve};
pub use validate::{validate, Rule, Violation, MAX_IF_DEPTH};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LangError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("invalid catalog: {0}")]
    Catalog(String),
}
