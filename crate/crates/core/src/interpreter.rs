//! Tree-walking evaluator for validated programs.
//!
//! Execution is single-threaded and fail-fast: the first module, type or
//! budget error ends the run. Every executed statement leaves one
//! [`TraceEntry`] carrying the backend calls it made.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clip::VideoClip;
use crate::gateway::{CallRecord, Capability, Gateway};
use crate::lang::ast::{ArithOp, BoolOp, CompareOp, Expr, ExprKind, Literal, Program, Stmt, StmtKind};
use crate::lang::render_expr;
use crate::primitives::{self as prim, CounterMap, CropClip, Frames, ModuleError, OptionChoice, PrimitiveParams, Session};
use crate::summarizer::{self, SummaryParams};
use crate::tracker::{self, Track, TrackerParams};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Clip(VideoClip),
    Crops(CropClip),
    Str(String),
    Int(i64),
    Bool(bool),
    List(Vec<Value>),
    /// String keys in insertion order.
    Map(Vec<(String, Value)>),
    Counter(CounterMap),
    Tracks(Vec<Track>),
    Choice(OptionChoice),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Clip(_) => "clip",
            Value::Crops(_) => "crops",
            Value::Str(_) => "str",
            Value::Int(_) => "int",
            Value::Bool(_) => "bool",
            Value::List(_) => "list",
            Value::Map(_) => "dict",
            Value::Counter(_) => "counts",
            Value::Tracks(_) => "tracks",
            Value::Choice(_) => "choice",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::Clip(c) => !c.is_empty(),
            Value::Crops(c) => !c.is_empty(),
            Value::Str(s) => !s.is_empty(),
            Value::Int(i) => *i != 0,
            Value::Bool(b) => *b,
            Value::List(v) => !v.is_empty(),
            Value::Map(m) => !m.is_empty(),
            Value::Counter(c) => !c.is_empty(),
            Value::Tracks(t) => !t.is_empty(),
            Value::Choice(_) => true,
        }
    }

    /// Text handed to the option chooser as context.
    pub fn context_text(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            Value::Counter(c) => c.to_string(),
            Value::Choice(c) => c.rationale.clone(),
            Value::List(items) => items.iter().map(Value::context_text).collect::<Vec<_>>().join(", "),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Clip(c) => write!(f, "<clip {} frames [{}, {})>", c.num_frames(), c.start(), c.end()),
            Value::Crops(c) => write!(f, "<crops {} in {} frames>", c.len(), c.frame_indices().len()),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => f.write_str(if *b { "True" } else { "False" }),
            Value::List(v) => {
                f.write_str("[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
            Value::Map(m) => {
                f.write_str("{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k:?}: {v}")?;
                }
                f.write_str("}")
            }
            Value::Counter(c) => write!(f, "{{{c}}}"),
            Value::Tracks(t) => write!(f, "<{} tracks>", t.len()),
            Value::Choice(c) => write!(f, "<option {}>", c.index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecBudget {
    pub max_statements: u64,
    pub max_backend_calls: u64,
    pub wall_clock_limit_s: f64,
}

impl Default for ExecBudget {
    fn default() -> Self {
        ExecBudget { max_statements: 1000, max_backend_calls: 5000, wall_clock_limit_s: 600.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    Statements,
    BackendCalls,
    WallClock,
}

impl fmt::Display for BudgetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BudgetKind::Statements => "statements",
            BudgetKind::BackendCalls => "backend_calls",
            BudgetKind::WallClock => "wall_clock",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecError {
    #[error("statement {stmt} (line {line}): {budget} budget exceeded")]
    BudgetExceeded { stmt: usize, line: u32, budget: BudgetKind },
    #[error("statement {stmt} (line {line}): {error}")]
    Module { stmt: usize, line: u32, error: ModuleError },
    #[error("statement {stmt} (line {line}): {op} expected {expected}, got {got}")]
    Type { stmt: usize, line: u32, op: String, expected: String, got: String },
    #[error("statement {stmt} (line {line}): {message}")]
    Runtime { stmt: usize, line: u32, message: String },
}

impl ExecError {
    pub fn stmt(&self) -> usize {
        match self {
            ExecError::BudgetExceeded { stmt, .. }
            | ExecError::Module { stmt, .. }
            | ExecError::Type { stmt, .. }
            | ExecError::Runtime { stmt, .. } => *stmt,
        }
    }

    pub fn module_error(&self) -> Option<&ModuleError> {
        match self {
            ExecError::Module { error, .. } => Some(error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Position in execution order, from 0.
    pub stmt: usize,
    pub line: u32,
    pub op: String,
    pub args: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<f64>,
    pub calls: Vec<CallRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TraceOutcome {
    Ok { value: String },
    Error { error: ExecError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecTrace {
    pub entries: Vec<TraceEntry>,
    pub outcome: TraceOutcome,
}

impl ExecTrace {
    /// One JSON object per statement, then one for the outcome.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("trace serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.outcome).expect("trace serializes"));
        out.push('\n');
        out
    }

    /// Drops durations so traces of identical runs compare byte for byte.
    pub fn without_timing(mut self) -> Self {
        for e in &mut self.entries {
            e.duration_ms = None;
        }
        self
    }

    pub fn calls(&self) -> impl Iterator<Item = &CallRecord> {
        self.entries.iter().flat_map(|e| e.calls.iter())
    }

    pub fn call_count(&self) -> usize {
        self.calls().count()
    }

    pub fn uses(&self, capability: Capability) -> bool {
        self.calls().any(|c| c.capability == capability)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    pub budget: ExecBudget,
    pub primitives: PrimitiveParams,
    pub tracker: TrackerParams,
    pub summary: SummaryParams,
}

/// Runs `program` on `clip`. `options` binds the second entry parameter
/// (an empty list when absent).
pub fn execute(
    program: &Program,
    clip: &VideoClip,
    options: Option<&[String]>,
    config: &ExecConfig,
    gateway: &Gateway,
) -> (Result<Value, ExecError>, ExecTrace) {
    let start = Instant::now();
    let session = Session::new(gateway, config.primitives)
        .with_call_limit(config.budget.max_backend_calls)
        .with_deadline(start, config.budget.wall_clock_limit_s);
    let mut it = Interp {
        session: &session,
        config,
        start,
        env: Vec::new(),
        entries: Vec::new(),
        ops: Vec::new(),
        current: (0, program.span.line),
    };
    let mut args = vec![Value::Clip(clip.clone())];
    if program.params.len() > 1 {
        args.push(Value::List(options.unwrap_or_default().iter().cloned().map(Value::Str).collect()));
    }
    let result = if args.len() != program.params.len() {
        Err(ExecError::Runtime {
            stmt: 0,
            line: program.span.line,
            message: format!("entry takes {} parameters, {} supplied", program.params.len(), args.len()),
        })
    } else {
        it.env = program.params.iter().cloned().zip(args).collect();
        match it.block(&program.body) {
            Ok(Some(v)) => Ok(v),
            Ok(None) => Err(ExecError::Runtime {
                stmt: it.entries.len().saturating_sub(1),
                line: program.span.line,
                message: "entry function finished without returning".into(),
            }),
            Err(e) => Err(e),
        }
    };
    let outcome = match &result {
        Ok(v) => TraceOutcome::Ok { value: v.to_string() },
        Err(e) => TraceOutcome::Error { error: e.clone() },
    };
    (result, ExecTrace { entries: it.entries, outcome })
}

const ARGS_SUMMARY_LIMIT: usize = 200;

struct Interp<'a, 'g> {
    session: &'a Session<'g>,
    config: &'a ExecConfig,
    start: Instant,
    env: Vec<(String, Value)>,
    entries: Vec<TraceEntry>,
    ops: Vec<String>,
    current: (usize, u32),
}

type Eval<T> = Result<T, ExecError>;

enum Flow {
    Next,
    Return(Value),
    Branch(bool),
}

impl Interp<'_, '_> {
    fn block(&mut self, stmts: &[Stmt]) -> Eval<Option<Value>> {
        for s in stmts {
            if let Some(v) = self.stmt(s)? {
                return Ok(Some(v));
            }
        }
        Ok(None)
    }

    fn stmt(&mut self, s: &Stmt) -> Eval<Option<Value>> {
        let index = self.entries.len();
        self.current = (index, s.span.line);
        if index as u64 >= self.config.budget.max_statements {
            return Err(self.budget(BudgetKind::Statements));
        }
        if self.start.elapsed().as_secs_f64() > self.config.budget.wall_clock_limit_s {
            return Err(self.budget(BudgetKind::WallClock));
        }
        let args = match &s.kind {
            StmtKind::Assign { target, value } => format!("{target} = {}", render_expr(value)),
            StmtKind::Return(e) => format!("return {}", render_expr(e)),
            StmtKind::If { cond, .. } => format!("if {}", render_expr(cond)),
        };
        let args = if args.chars().count() > ARGS_SUMMARY_LIMIT {
            format!("{}...", args.chars().take(ARGS_SUMMARY_LIMIT).collect::<String>())
        } else {
            args
        };
        self.entries.push(TraceEntry { stmt: index, line: s.span.line, op: String::new(), args, duration_ms: None, calls: vec![] });
        self.ops.clear();
        let began = Instant::now();
        let result = match &s.kind {
            StmtKind::Assign { target, value } => self.expr(value).map(|v| {
                self.bind(target, v);
                Flow::Next
            }),
            StmtKind::Return(e) => self.expr(e).map(Flow::Return),
            StmtKind::If { cond, .. } => self.expr(cond).map(|v| Flow::Branch(v.truthy())),
        };
        let kind = match &s.kind {
            StmtKind::Assign { .. } => "assign",
            StmtKind::Return(_) => "return",
            StmtKind::If { .. } => "if",
        };
        let entry = &mut self.entries[index];
        entry.op = if self.ops.is_empty() { kind.to_owned() } else { self.ops.join(",") };
        entry.duration_ms = Some(began.elapsed().as_secs_f64() * 1000.0);
        entry.calls = self.session.take_calls();
        match result? {
            Flow::Next => Ok(None),
            Flow::Return(v) => Ok(Some(v)),
            Flow::Branch(taken) => match &s.kind {
                StmtKind::If { then_body, else_body, .. } => self.block(if taken { then_body } else { else_body }),
                _ => unreachable!("only if statements branch"),
            },
        }
    }

    fn bind(&mut self, name: &str, v: Value) {
        match self.env.iter_mut().find(|(k, _)| k == name) {
            Some(slot) => slot.1 = v,
            None => self.env.push((name.to_owned(), v)),
        }
    }

    fn budget(&self, budget: BudgetKind) -> ExecError {
        ExecError::BudgetExceeded { stmt: self.current.0, line: self.current.1, budget }
    }

    fn type_err(&self, op: &str, expected: impl Into<String>, got: &Value) -> ExecError {
        ExecError::Type {
            stmt: self.current.0,
            line: self.current.1,
            op: op.to_owned(),
            expected: expected.into(),
            got: got.type_name().to_owned(),
        }
    }

    fn runtime(&self, message: impl Into<String>) -> ExecError {
        ExecError::Runtime { stmt: self.current.0, line: self.current.1, message: message.into() }
    }

    fn module(&self, error: ModuleError) -> ExecError {
        match error {
            ModuleError::CallBudget { .. } => self.budget(BudgetKind::BackendCalls),
            ModuleError::Deadline { .. } => self.budget(BudgetKind::WallClock),
            error => ExecError::Module { stmt: self.current.0, line: self.current.1, error },
        }
    }
}

impl Interp<'_, '_> {
    fn expr(&mut self, e: &Expr) -> Eval<Value> {
        match &e.kind {
            ExprKind::Literal(Literal::Str(s)) => Ok(Value::Str(s.clone())),
            ExprKind::Literal(Literal::Int(i)) => Ok(Value::Int(*i)),
            ExprKind::Literal(Literal::Bool(b)) => Ok(Value::Bool(*b)),
            ExprKind::Name(n) => self
                .env
                .iter()
                .find(|(k, _)| k == n)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| self.runtime(format!("name `{n}` is not defined"))),
            ExprKind::List(items) => Ok(Value::List(items.iter().map(|x| self.expr(x)).collect::<Eval<_>>()?)),
            ExprKind::Map(pairs) => {
                let mut out: Vec<(String, Value)> = Vec::new();
                for (k, v) in pairs {
                    let key = match self.expr(k)? {
                        Value::Str(s) => s,
                        other => return Err(self.type_err("dict key", "str", &other)),
                    };
                    let value = self.expr(v)?;
                    match out.iter_mut().find(|(k2, _)| *k2 == key) {
                        Some(slot) => slot.1 = value,
                        None => out.push((key, value)),
                    }
                }
                Ok(Value::Map(out))
            }
            ExprKind::Not(x) => Ok(Value::Bool(!self.expr(x)?.truthy())),
            ExprKind::Logical { op, lhs, rhs } => {
                let l = self.expr(lhs)?;
                match (op, l.truthy()) {
                    (BoolOp::And, false) | (BoolOp::Or, true) => Ok(l),
                    _ => self.expr(rhs),
                }
            }
            ExprKind::Arith { op, lhs, rhs } => {
                let (l, r) = (self.expr(lhs)?, self.expr(rhs)?);
                self.arith(*op, l, r)
            }
            ExprKind::Compare { op, lhs, rhs } => {
                let (l, r) = (self.expr(lhs)?, self.expr(rhs)?);
                self.compare(*op, &l, &r)
            }
            ExprKind::Index { receiver, key } => {
                let (recv, key) = (self.expr(receiver)?, self.expr(key)?);
                self.index(recv, key)
            }
            ExprKind::Attribute { receiver, name } => {
                let recv = self.expr(receiver)?;
                match (name.as_str(), &recv) {
                    ("num_frames", Value::Clip(c)) => Ok(Value::Int(c.num_frames() as i64)),
                    ("num_frames", Value::Crops(c)) => Ok(Value::Int(c.len() as i64)),
                    ("num_frames", other) => Err(self.type_err("num_frames", "clip", other)),
                    _ => Err(self.runtime(format!("unknown attribute `{name}`"))),
                }
            }
            ExprKind::BuiltinCall { name, args } => {
                let args: Vec<Value> = args.iter().map(|a| self.expr(a)).collect::<Eval<_>>()?;
                self.ops.push(name.clone());
                self.builtin(name, args)
            }
            ExprKind::MethodCall { receiver, method, args } => {
                let recv = self.expr(receiver)?;
                let args: Vec<Value> = args.iter().map(|a| self.expr(a)).collect::<Eval<_>>()?;
                self.ops.push(method.clone());
                self.method(&recv, method, args)
            }
        }
    }

    fn arith(&self, op: ArithOp, l: Value, r: Value) -> Eval<Value> {
        let sym = op.symbol();
        match (op, l, r) {
            (ArithOp::Add, Value::Str(a), Value::Str(b)) => Ok(Value::Str(a + &b)),
            (ArithOp::Add, Value::List(mut a), Value::List(b)) => {
                a.extend(b);
                Ok(Value::List(a))
            }
            (_, Value::Int(a), Value::Int(b)) => {
                let out = match op {
                    ArithOp::Add => a.checked_add(b),
                    ArithOp::Sub => a.checked_sub(b),
                    ArithOp::Mul => a.checked_mul(b),
                    ArithOp::FloorDiv => {
                        if b == 0 {
                            return Err(self.runtime("integer division by zero"));
                        }
                        floor_div(a, b)
                    }
                };
                out.map(Value::Int).ok_or_else(|| self.runtime(format!("integer overflow in `{sym}`")))
            }
            (_, Value::Int(_), other) | (_, other, _) => Err(self.type_err(sym, "int operands", &other)),
        }
    }

    fn compare(&self, op: CompareOp, l: &Value, r: &Value) -> Eval<Value> {
        use std::cmp::Ordering;
        let ord: Option<Ordering> = match (l, r) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            _ => None,
        };
        let b = match (op, ord) {
            (CompareOp::Eq, _) => l == r,
            (CompareOp::Ne, _) => l != r,
            (CompareOp::Lt, Some(o)) => o == Ordering::Less,
            (CompareOp::Le, Some(o)) => o != Ordering::Greater,
            (CompareOp::Gt, Some(o)) => o == Ordering::Greater,
            (CompareOp::Ge, Some(o)) => o != Ordering::Less,
            (_, None) => {
                let bad = if matches!(l, Value::Int(_) | Value::Str(_)) { r } else { l };
                return Err(self.type_err(op.symbol(), "two ints or two strs", bad));
            }
        };
        Ok(Value::Bool(b))
    }

    fn index(&self, recv: Value, key: Value) -> Eval<Value> {
        match (&recv, &key) {
            (Value::List(items), Value::Int(i)) => {
                let n = items.len() as i64;
                let pos = if *i < 0 { i + n } else { *i };
                if !(0..n).contains(&pos) {
                    return Err(self.runtime(format!("list index {i} out of range for length {n}")));
                }
                Ok(items[pos as usize].clone())
            }
            (Value::Map(m), Value::Str(k)) => m
                .iter()
                .find(|(k2, _)| k2 == k)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| self.runtime(format!("key {k:?} not found"))),
            (Value::Counter(c), Value::Str(k)) => {
                c.get(k).map(|n| Value::Int(n as i64)).ok_or_else(|| self.runtime(format!("key {k:?} not found")))
            }
            (Value::List(_), other) => Err(self.type_err("index", "int", other)),
            (Value::Map(_) | Value::Counter(_), other) => Err(self.type_err("index", "str", other)),
            (other, _) => Err(self.type_err("index", "list or dict", other)),
        }
    }

    fn arity(&self, op: &str, args: &[Value], min: usize, max: usize) -> Eval<()> {
        if args.len() < min || args.len() > max {
            let expected = if min == max { format!("{min} arguments") } else { format!("{min} to {max} arguments") };
            return Err(ExecError::Type {
                stmt: self.current.0,
                line: self.current.1,
                op: op.to_owned(),
                expected,
                got: args.len().to_string(),
            });
        }
        Ok(())
    }

    fn str_arg<'v>(&self, op: &str, v: &'v Value) -> Eval<&'v str> {
        match v {
            Value::Str(s) => Ok(s),
            other => Err(self.type_err(op, "str", other)),
        }
    }

    fn int_arg(&self, op: &str, v: &Value) -> Eval<i64> {
        match v {
            Value::Int(i) => Ok(*i),
            Value::Bool(b) => Ok(*b as i64),
            other => Err(self.type_err(op, "int", other)),
        }
    }

    fn builtin(&self, name: &str, args: Vec<Value>) -> Eval<Value> {
        self.arity(name, &args, 1, 1)?;
        let arg = &args[0];
        match name {
            "len" => {
                let n = match arg {
                    Value::Clip(c) => c.num_frames(),
                    Value::Crops(c) => c.len(),
                    Value::Str(s) => s.chars().count(),
                    Value::List(v) => v.len(),
                    Value::Map(m) => m.len(),
                    Value::Counter(c) => c.len(),
                    Value::Tracks(t) => t.len(),
                    other => return Err(self.type_err("len", "a sized value", other)),
                };
                Ok(Value::Int(n as i64))
            }
            "get_max_key" => match arg {
                Value::Counter(c) => c.get_max_key().map(|k| Value::Str(k.to_owned())).map_err(|e| self.module(e)),
                Value::Map(m) => {
                    let mut best: Option<(&str, i64)> = None;
                    for (k, v) in m {
                        let n = self.int_arg("get_max_key", v)?;
                        if best.is_none_or(|(_, b)| n > b) {
                            best = Some((k, n));
                        }
                    }
                    best.map(|(k, _)| Value::Str(k.to_owned())).ok_or_else(|| self.module(ModuleError::EmptyCounter))
                }
                other => Err(self.type_err("get_max_key", "counts", other)),
            },
            other => Err(self.runtime(format!("unknown function `{other}`"))),
        }
    }

    fn method(&self, recv: &Value, method: &str, args: Vec<Value>) -> Eval<Value> {
        match recv {
            Value::Clip(c) => self.visual_method(c, c, method, args, Value::Clip),
            Value::Crops(c) => self.visual_method(c, c.parent(), method, args, Value::Crops),
            other => Err(self.type_err(method, "clip receiver", other)),
        }
    }

    fn visual_method<V: Frames>(
        &self,
        v: &V,
        parent: &VideoClip,
        method: &str,
        args: Vec<Value>,
        wrap: fn(V) -> Value,
    ) -> Eval<Value> {
        let s = self.session;
        let m = |e: ModuleError| self.module(e);
        match method {
            "filter_property" => {
                self.arity(method, &args, 1, 1)?;
                prim::filter_property(s, v, self.str_arg(method, &args[0])?).map(wrap).map_err(m)
            }
            "filter_object" => {
                self.arity(method, &args, 1, 1)?;
                prim::filter_object(s, v, self.str_arg(method, &args[0])?).map(wrap).map_err(m)
            }
            "find" => {
                self.arity(method, &args, 1, 1)?;
                prim::find(s, v, self.str_arg(method, &args[0])?).map(Value::Crops).map_err(m)
            }
            "video_query" => {
                self.arity(method, &args, 1, 2)?;
                if let Some(extra) = args.get(1) {
                    if !matches!(extra, Value::List(_)) {
                        return Err(self.type_err(method, "list of possible answers", extra));
                    }
                }
                prim::video_query(s, v, self.str_arg(method, &args[0])?).map(Value::Counter).map_err(m)
            }
            "get_caption" => {
                self.arity(method, &args, 1, 1)?;
                prim::get_caption(s, v, self.int_arg(method, &args[0])?).map(Value::Str).map_err(m)
            }
            "get_script" => {
                self.arity(method, &args, 0, 0)?;
                prim::get_script(s, parent).map(Value::Str).map_err(m)
            }
            "get_summary" => {
                self.arity(method, &args, 0, 0)?;
                summarizer::get_summary(s, parent.source(), &self.config.summary)
                    .map(|(summary, _)| Value::Str(summary.paragraph))
                    .map_err(m)
            }
            "trim" => {
                self.arity(method, &args, 1, 2)?;
                let a = self.int_arg(method, &args[0])?;
                let b = match args.get(1) {
                    Some(x) => self.int_arg(method, x)?,
                    None => v.count() as i64,
                };
                v.trim_items(a, b).map(wrap).map_err(m)
            }
            "track_objects" => {
                self.arity(method, &args, 0, 1)?;
                let frames = match (args.first(), v.as_crops()) {
                    (Some(obj), _) => {
                        let obj = self.str_arg(method, obj)?;
                        prim::detect_frames(s, v, obj, self.config.tracker.low_threshold).map_err(m)?
                    }
                    (None, Some(crops)) => prim::crops_as_detections(crops),
                    (None, None) => {
                        return Err(ExecError::Type {
                            stmt: self.current.0,
                            line: self.current.1,
                            op: method.into(),
                            expected: "an object name or a crops receiver".into(),
                            got: "no arguments".into(),
                        })
                    }
                };
                tracker::track_objects(&frames, &self.config.tracker)
                    .map(Value::Tracks)
                    .map_err(|e| self.runtime(e.to_string()))
            }
            "choose_option" => {
                self.arity(method, &args, 3, 3)?;
                let question = self.str_arg(method, &args[0])?;
                let context: Vec<(String, String)> = match &args[1] {
                    Value::Map(entries) => entries.iter().map(|(k, v)| (k.clone(), v.context_text())).collect(),
                    other => vec![("context".to_owned(), other.context_text())],
                };
                let options: Vec<String> = match &args[2] {
                    Value::List(items) => items.iter().map(|x| self.str_arg(method, x).map(str::to_owned)).collect::<Eval<_>>()?,
                    other => return Err(self.type_err(method, "list of options", other)),
                };
                prim::choose_option(s, Some(v.video_id()), question, &context, &options).map(Value::Choice).map_err(m)
            }
            other => Err(self.runtime(format!("unknown method `{other}`"))),
        }
    }
}

/// Floor division rounding toward negative infinity.
fn floor_div(a: i64, b: i64) -> Option<i64> {
    let q = a.checked_div(b)?;
    if a % b != 0 && ((a < 0) != (b < 0)) {
        q.checked_sub(1)
    } else {
        Some(q)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::clip::trim;
    use crate::gateway::mock::tests::ten_frame_world;
    use crate::gateway::mock::{LlmRule, MockBackend, MockWorld};
    use crate::lang::{compile, TaskKind};

    fn run_on(world: MockWorld, src: &str, task: TaskKind, config: ExecConfig) -> (Result<Value, ExecError>, ExecTrace, Gateway) {
        let program = compile(src, task).unwrap_or_else(|e| panic!("{e}"));
        let source = Arc::new(world.source_video());
        let gw = Gateway::new(4).with_backend(Arc::new(MockBackend::new([world]))).with_call_log();
        let (r, t) = execute(&program, &source.full_clip(), Some(&["a".to_owned(), "b".to_owned()]), &config, &gw);
        (r, t, gw)
    }

    fn run(src: &str) -> (Result<Value, ExecError>, ExecTrace) {
        let (r, t, _) = run_on(ten_frame_world(), src, TaskKind::Qa, ExecConfig::default());
        (r, t)
    }

    #[test]
    fn minimal_program() {
        let (r, t) = run("def answer_question(video, possible_answers):\n    return 1\n");
        assert_eq!(r.unwrap(), Value::Int(1));
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.entries[0].op, "return");
    }

    #[test]
    fn nesting_at_the_parser_limit_runs() {
        let n = crate::lang::MAX_NESTING - 2;
        let src = format!("def answer_question(video, possible_answers):\n    return {}1{}\n", "(".repeat(n), ")".repeat(n));
        assert_eq!(run(&src).0.unwrap(), Value::Int(1));
        let sum = vec!["1"; n].join(" + ");
        assert_eq!(run(&format!("def answer_question(video, possible_answers):\n    return {sum}\n")).0.unwrap(), Value::Int(n as i64));
    }

    fn party_world() -> MockWorld {
        let mut w = ten_frame_world();
        let answers = ["birthday", "wedding", "birthday", "birthday", "birthday"];
        for (i, f) in w.frames.iter_mut().enumerate() {
            f.predicates.insert("is a party happening?".into(), (2..7).contains(&i));
            let a = if (2..7).contains(&i) { answers[i - 2] } else { "nothing" };
            f.qa.insert("what is the party for?".into(), a.into());
        }
        w
    }

    const PARTY: &str = "def answer_question(video, possible_answers):
    party_segment = video.filter_property(\"Is a party happening?\")
    responses = party_segment.video_query(\"What is the party for?\", possible_answers)
    return get_max_key(responses)
";

    #[test]
    fn party_program_votes() {
        let (r, t, gw) = run_on(party_world(), PARTY, TaskKind::Qa, ExecConfig::default());
        assert_eq!(r.unwrap(), Value::Str("birthday".into()));
        assert_eq!(t.entries.iter().map(|e| e.op.as_str()).collect::<Vec<_>>(), vec!["filter_property", "video_query", "get_max_key"]);
        assert_eq!(t.entries[0].calls.len(), 10);
        assert_eq!(t.entries[1].calls.len(), 5);
        let traced: Vec<_> = t.calls().cloned().collect();
        assert_eq!(traced, gw.call_log());
        assert!(t.uses(Capability::ImageQa) && !t.uses(Capability::Detect));
    }

    #[test]
    fn call_budget() {
        let config = ExecConfig { budget: ExecBudget { max_backend_calls: 14, ..Default::default() }, ..Default::default() };
        let (r, t, gw) = run_on(party_world(), PARTY, TaskKind::Qa, config);
        assert!(matches!(r, Err(ExecError::BudgetExceeded { budget: BudgetKind::BackendCalls, stmt: 1, .. })), "{r:?}");
        assert!(matches!(t.outcome, TraceOutcome::Error { .. }));
        assert_eq!(gw.call_log().len(), 10);
        let config = ExecConfig { budget: ExecBudget { max_backend_calls: 15, ..Default::default() }, ..Default::default() };
        assert!(run_on(party_world(), PARTY, TaskKind::Qa, config).0.is_ok());
    }

    #[test]
    fn statement_budget() {
        let config = ExecConfig { budget: ExecBudget { max_statements: 2, ..Default::default() }, ..Default::default() };
        let (r, t, _) = run_on(party_world(), PARTY, TaskKind::Qa, config);
        assert!(matches!(r, Err(ExecError::BudgetExceeded { budget: BudgetKind::Statements, stmt: 2, .. })));
        assert_eq!(t.entries.len(), 2);
    }

    #[test]
    fn branches_and_operators() {
        let src = "def answer_question(video, possible_answers):
    n = len(video) // 4
    m = -7 // 2
    if n > 2 and not m == 0:
        x = \"big\"
    elif n == 2:
        x = \"two\"
    else:
        x = \"small\"
    d = {\"n\": n, \"m\": m, \"x\": x}
    return [d[\"x\"], d[\"m\"], possible_answers[-1], video.num_frames, \"\" or \"fallback\"]
";
        let (r, t) = run(src);
        let want = Value::List(vec![
            Value::Str("two".into()),
            Value::Int(-4),
            Value::Str("b".into()),
            Value::Int(10),
            Value::Str("fallback".into()),
        ]);
        assert_eq!(r.unwrap(), want);
        assert_eq!(t.entries.len(), 7);
    }

    #[test]
    fn runtime_and_type_errors_are_positioned() {
        let (r, _) = run("def answer_question(video, possible_answers):\n    x = 1 // 0\n    return x\n");
        assert!(matches!(r, Err(ExecError::Runtime { stmt: 0, line: 2, .. })));
        let (r, _) = run("def answer_question(video, possible_answers):\n    x = video.get_caption(\"one\")\n    return x\n");
        assert!(matches!(r, Err(ExecError::Type { ref op, .. }) if op == "get_caption"), "{r:?}");
        let (r, _) = run("def answer_question(video, possible_answers):\n    x = video.trim(0, 0)\n    return x.video_query(\"what?\")\n");
        assert!(matches!(r, Err(ExecError::Module { error: ModuleError::EmptyClip { .. }, stmt: 1, .. })), "{r:?}");
    }

    #[test]
    fn skier_program_on_crops() {
        let mut w = ten_frame_world();
        w.frames[4].objects.insert(
            "jacket".into(),
            vec![crate::gateway::ScoredBox { x1: 0.2, y1: 0.3, x2: 0.4, y2: 0.5, score: 0.7 }],
        );
        w.frames[4].region_qa.push(crate::gateway::mock::RegionQa {
            region: crate::gateway::BBox::new(0.2, 0.3, 0.4, 0.5),
            predicates: Default::default(),
            qa: [("what color is this jacket?".to_owned(), "Black.".to_owned())].into(),
        });
        let src = "def answer_question(video, possible_answers):
    skier_clip = video.filter_object(\"skier\")
    skier_boxes = video.find(\"skier\")
    jacket_boxes = skier_clip.find(\"jacket\")
    responses = jacket_boxes.video_query(\"What color is this jacket?\", possible_answers)
    return get_max_key(responses)
";
        let (r, t, _) = run_on(w.normalized().unwrap(), src, TaskKind::Qa, ExecConfig::default());
        assert_eq!(r.unwrap(), Value::Str("black".into()));
        assert_eq!(t.entries[3].calls.len(), 1);
    }

    #[test]
    fn chooser_program() {
        let mut w = ten_frame_world();
        for f in &mut w.frames {
            f.qa.insert("what is this?".into(), "a toy".into());
            if f.index < 3 {
                f.objects.insert("bear".into(), vec![crate::gateway::ScoredBox { x1: 0.1, y1: 0.1, x2: 0.3, y2: 0.3, score: 0.9 }]);
            }
        }
        w.llm = vec![LlmRule {
            contains: vec!["[activity]\na toy: 2".into(), "how was the toy bear moved".into()],
            prompt_sha256: None,
            response: "2: pushed".into(),
        }];
        let src = "def answer_question(video, possible_answers):
    vid_seg = video.trim(0, len(video) // 4) # consider the start
    bear_seg = vid_seg.filter_object(\"bear\")
    image_context = bear_seg.get_caption(bear_seg.num_frames // 2)
    activity_context = bear_seg.video_query(\"What is this?\")
    context = {\"caption\": image_context, \"activity\": activity_context}
    answer = bear_seg.choose_option(\"how was the toy bear moved to the front?\", context, possible_answers)
    return answer
";
        let (r, t, _) = run_on(w.normalized().unwrap(), src, TaskKind::MultipleChoice, ExecConfig::default());
        assert_eq!(r.unwrap(), Value::Choice(OptionChoice { index: 2, rationale: "2: pushed".into() }));
        assert_eq!(t.entries[2].calls[0].summary, "caption_image frame=1");
    }

    #[test]
    fn determinism_and_no_mutation() {
        let w = party_world();
        let source = Arc::new(w.source_video());
        let clip = trim(&source.full_clip(), 1, 9).unwrap();
        let before = clip.clone();
        let program = compile(PARTY, TaskKind::Qa).unwrap();
        let gw = Gateway::new(4).with_backend(Arc::new(MockBackend::new([w])));
        let a = execute(&program, &clip, None, &ExecConfig::default(), &gw);
        let b = execute(&program, &clip, None, &ExecConfig::default(), &gw);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.clone().without_timing().to_jsonl(), b.1.clone().without_timing().to_jsonl());
        assert_eq!(clip, before);
    }

    #[test]
    fn track_objects_from_program() {
        let mut w = ten_frame_world();
        for f in &mut w.frames {
            let t = f.index as f64 * 0.02;
            f.objects.insert(
                "dancer".into(),
                vec![
                    crate::gateway::ScoredBox { x1: 0.1 + t, y1: 0.1, x2: 0.2 + t, y2: 0.3, score: 0.9 },
                    crate::gateway::ScoredBox { x1: 0.6, y1: 0.5, x2: 0.7, y2: 0.7, score: 0.8 },
                ],
            );
        }
        let src = "def run(video):\n    tracks = video.track_objects(\"dancer\")\n    return len(tracks)\n";
        let (r, _, _) = run_on(w.clone(), src, TaskKind::Track, ExecConfig::default());
        assert_eq!(r.unwrap(), Value::Int(2));
        let src = "def run(video):\n    dancers = video.find(\"dancer\")\n    return dancers.track_objects()\n";
        let (r, _, _) = run_on(w, src, TaskKind::Track, ExecConfig::default());
        match r.unwrap() {
            Value::Tracks(t) => assert_eq!(t.iter().map(|t| t.len()).collect::<Vec<_>>(), vec![10, 10]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn floor_division() {
        assert_eq!(floor_div(7, 2), Some(3));
        assert_eq!(floor_div(-7, 2), Some(-4));
        assert_eq!(floor_div(7, -2), Some(-4));
        assert_eq!(floor_div(-8, 2), Some(-4));
        assert_eq!(floor_div(i64::MIN, -1), None);
    }
}
