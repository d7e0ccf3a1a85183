use std::fmt;

use serde::{Deserialize, Serialize};

/// 1-based source position.
///
/// Spans never take part in equality, so two ASTs compare structurally
/// regardless of where they were parsed from.
#[derive(Debug, Clone, Copy, Default, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub entry_name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Assign { target: String, value: Expr },
    Return(Expr),
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Vec<Stmt> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Str(String),
    Int(i64),
    Bool(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    FloorDiv,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::FloorDiv => "//",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoolOp {
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Literal(Literal),
    Name(String),
    MethodCall { receiver: Box<Expr>, method: String, args: Vec<Expr> },
    /// A bare `name(args)` call. Only builtins pass validation.
    BuiltinCall { name: String, args: Vec<Expr> },
    Attribute { receiver: Box<Expr>, name: String },
    Arith { op: ArithOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Compare { op: CompareOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Logical { op: BoolOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Not(Box<Expr>),
    List(Vec<Expr>),
    /// Pairs keep their source order.
    Map(Vec<(Expr, Expr)>),
    Index { receiver: Box<Expr>, key: Box<Expr> },
}

/// Methods callable on clip values.
pub const METHOD_WHITELIST: &[&str] = &[
    "filter_property",
    "filter_object",
    "find",
    "video_query",
    "get_caption",
    "get_script",
    "get_summary",
    "track_objects",
    "choose_option",
    "trim",
];

pub const BUILTIN_WHITELIST: &[&str] = &["get_max_key", "len"];

pub const ATTRIBUTE_WHITELIST: &[&str] = &["num_frames"];

/// What a program is generated for; fixes the expected entry signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Qa,
    MultipleChoice,
    Edit,
    Track,
}

impl TaskKind {
    pub fn entry_signature(self) -> (&'static str, &'static [&'static str]) {
        match self {
            TaskKind::Qa | TaskKind::MultipleChoice => ("answer_question", &["video", "possible_answers"]),
            TaskKind::Edit | TaskKind::Track => ("run", &["video"]),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Qa => "qa",
            TaskKind::MultipleChoice => "multiple_choice",
            TaskKind::Edit => "edit",
            TaskKind::Track => "track",
        })
    }
}
