//! Formula and rule ASTs, parsers and syntactic transformations.

mod formula;
mod lexer;
mod parse;
pub mod rules;
mod transform;

pub use formula::*;
pub use lexer::Pos;
pub use parse::{check_known, parse_fixpoint, parse_formula, parse_formula_in};
pub use transform::{alpha_normalize, build_prenex, prenex, relativize, simplify, split_prenex, substitute, PrefixEntry};
pub(crate) use transform::relativize_with_vars;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("arity mismatch for {pred}: expected {expected}, found {found}")]
    Arity { pred: String, expected: usize, found: usize },
    #[error("center {0} is not a free variable")]
    CenterNotFree(String),
    #[error("radius must be at least 1")]
    BadRadius,
    #[error("{0}")]
    Invalid(String),
}
