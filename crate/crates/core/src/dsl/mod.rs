//! The policy language: a small, sandboxed, brace-delimited language in which
//! agent code is written and rewritten.
//!
//! ```text
//! entry fn policy(obs) {
//!     y = predict(obs)
//!     return act(y, obs)
//! }
//!
//! trainable fn predict(obs) {
//!     """Where the ball will cross the paddle plane."""
//!     if "Ball" not in obs {
//!         return none
//!     }
//!     return obs.Ball.y
//! }
//! ```

pub mod ast;
pub mod format;
pub mod interface;
pub mod interp;
mod lexer;
pub mod metrics;
mod parser;
pub mod value;

pub use ast::{BinaryOp, Expr, FunctionDef, Program, Stmt, StmtKind, UnaryOp};
pub use format::{format_body, format_function, format_program};
pub use interface::{validate_interface, FunctionSpec, Violation};
pub use interp::{evaluate, evaluate_counted, EvalError, DEFAULT_STEP_BUDGET};
pub use metrics::{code_metrics, metrics_table, CodeMetrics};
pub use parser::{parse, parse_body};
pub use value::Value;

pub(crate) use parser::check_program;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("line {line}: undeclared identifier `{name}`")]
    Undeclared { line: u32, name: String },
    #[error("{0}")]
    Invalid(String),
}

/// Re-run the static checks on a program assembled outside the parser.
pub fn check(program: &Program) -> Result<(), ParseError> {
    check_program(program)
}
