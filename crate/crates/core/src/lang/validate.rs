use std::collections::HashSet;

use serde::Serialize;

use super::ast::*;
use super::Diagnostic;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Static checks a program must pass before it may run: whitelisted calls,
/// entry signature, definite assignment and a return on every path.
pub fn validate(program: &Program, task: TaskKind) -> ValidationReport {
    let mut v = Validator { violations: Vec::new() };
    let (entry, params) = task.entry_signature();
    if program.entry_name != entry || program.params != params {
        v.push(
            program.span,
            format!(
                "wrong entry signature for {task} task: expected `{entry}({})`, found `{}({})`",
                params.join(", "),
                program.entry_name,
                program.params.join(", ")
            ),
        );
    }
    let mut defined: HashSet<String> = program.params.iter().cloned().collect();
    let returns = v.block(&program.body, &mut defined);
    if !returns {
        let span = program.body.last().map_or(program.span, |s| s.span);
        v.push(span, "missing return path");
    }
    v.violations.sort_by_key(|d| (d.line, d.col));
    ValidationReport { violations: v.violations }
}

struct Validator {
    violations: Vec<Diagnostic>,
}

impl Validator {
    fn push(&mut self, span: Span, msg: impl Into<String>) {
        self.violations.push(Diagnostic::new(span, msg));
    }

    /// Returns whether every path through the block returns.
    fn block(&mut self, stmts: &[Stmt], defined: &mut HashSet<String>) -> bool {
        let mut returned = false;
        for stmt in stmts {
            if returned {
                self.push(stmt.span, "unreachable statement after return");
                break;
            }
            match &stmt.kind {
                StmtKind::Assign { target, value } => {
                    self.expr(value, defined);
                    if BUILTIN_WHITELIST.contains(&target.as_str()) {
                        self.push(stmt.span, format!("cannot assign to builtin `{target}`"));
                    }
                    defined.insert(target.clone());
                }
                StmtKind::Return(value) => {
                    self.expr(value, defined);
                    returned = true;
                }
                StmtKind::If { cond, then_body, else_body } => {
                    self.expr(cond, defined);
                    let mut then_defs = defined.clone();
                    let mut else_defs = defined.clone();
                    let then_ret = self.block(then_body, &mut then_defs);
                    let else_ret = self.block(else_body, &mut else_defs);
                    // A name is definitely assigned after the `if` when every
                    // branch that falls through assigns it.
                    match (then_ret, else_ret) {
                        (true, true) => returned = true,
                        (true, false) => *defined = else_defs,
                        (false, true) => *defined = then_defs,
                        (false, false) => {
                            *defined = then_defs.intersection(&else_defs).cloned().collect();
                        }
                    }
                }
            }
        }
        returned
    }

    fn expr(&mut self, e: &Expr, defined: &HashSet<String>) {
        match &e.kind {
            ExprKind::Literal(_) => {}
            ExprKind::Name(n) => {
                if !defined.contains(n) {
                    if BUILTIN_WHITELIST.contains(&n.as_str()) {
                        self.push(e.span, format!("builtin `{n}` must be called"));
                    } else {
                        self.push(e.span, format!("use of undefined name `{n}`"));
                    }
                }
            }
            ExprKind::MethodCall { receiver, method, args } => {
                if !METHOD_WHITELIST.contains(&method.as_str()) {
                    self.push(e.span, format!("unknown method: {method}"));
                }
                self.expr(receiver, defined);
                args.iter().for_each(|a| self.expr(a, defined));
            }
            ExprKind::BuiltinCall { name, args } => {
                if !BUILTIN_WHITELIST.contains(&name.as_str()) {
                    self.push(e.span, format!("unknown function: {name}"));
                } else if args.len() != 1 {
                    self.push(e.span, format!("`{name}` takes exactly 1 argument, got {}", args.len()));
                }
                args.iter().for_each(|a| self.expr(a, defined));
            }
            ExprKind::Attribute { receiver, name } => {
                if !ATTRIBUTE_WHITELIST.contains(&name.as_str()) {
                    self.push(e.span, format!("unknown attribute: {name}"));
                }
                self.expr(receiver, defined);
            }
            ExprKind::Arith { lhs, rhs, .. }
            | ExprKind::Compare { lhs, rhs, .. }
            | ExprKind::Logical { lhs, rhs, .. } => {
                self.expr(lhs, defined);
                self.expr(rhs, defined);
            }
            ExprKind::Not(inner) => self.expr(inner, defined),
            ExprKind::List(items) => items.iter().for_each(|i| self.expr(i, defined)),
            ExprKind::Map(pairs) => {
                for (k, v) in pairs {
                    self.expr(k, defined);
                    self.expr(v, defined);
                }
            }
            ExprKind::Index { receiver, key } => {
                self.expr(receiver, defined);
                self.expr(key, defined);
            }
        }
    }
}
