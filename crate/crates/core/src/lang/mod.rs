//! The restricted program language: a single `def` whose body is built from
//! assignments, returns and `if` statements over a whitelisted method API.

pub mod ast;
mod lexer;
mod parser;
mod render;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::{Program, TaskKind};
pub use parser::{parse, MAX_NESTING};
pub use render::{render, render_expr};
pub use validate::{validate, ValidationReport};

/// A positioned message; lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct Diagnostic {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn new(span: ast::Span, message: impl Into<String>) -> Self {
        Diagnostic { line: span.line, col: span.col, message: message.into() }
    }
}

/// Why a program text was rejected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("syntax error at {0}")]
    Syntax(Diagnostic),
    #[error("invalid program: {}", DiagList(.0))]
    Invalid(Vec<Diagnostic>),
}

impl ProgramError {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            ProgramError::Syntax(d) => vec![d.clone()],
            ProgramError::Invalid(ds) => ds.clone(),
        }
    }
}

struct DiagList<'a>(&'a [Diagnostic]);

impl fmt::Display for DiagList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Parse then validate.
pub fn compile(source: &str, task: TaskKind) -> Result<Program, ProgramError> {
    let program = parse(source).map_err(ProgramError::Syntax)?;
    let report = validate(&program, task);
    if report.is_ok() {
        Ok(program)
    } else {
        Err(ProgramError::Invalid(report.violations))
    }
}
