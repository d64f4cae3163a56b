//! Surface syntax, desugaring to the core language, and pretty printing.

pub mod ast;
mod desugar;
mod lexer;
mod parser;
mod pretty;

use thiserror::Error;

pub use ast::{Branch, CmpOp, CompoundOp, Cond, Expr, Input, LValue, PathId, Program, Stmt};
pub use desugar::desugar;
pub use parser::parse;
pub use pretty::{cond_to_string, expr_to_string, pretty_print};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntaxError {
    #[error("{line}:{col}: lexical error: {msg}")]
    Lex { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: syntax error: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("duplicate input `{name}`")]
    DuplicateInput { name: String },
    #[error("{line}:{col}: use of undeclared variable `{name}`")]
    Undeclared { name: String, line: usize, col: usize },
    #[error("division by zero constant")]
    DivisionByZero,
    #[error("division is only supported by compile-time constants")]
    NonConstantDivisor,
}

/// Parses and desugars in one step.
pub fn parse_core(src: &str) -> Result<Program, SyntaxError> {
    desugar(&parse(src)?)
}
