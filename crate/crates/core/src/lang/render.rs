use std::fmt::Write;

use super::ast::*;

const INDENT: &str = "    ";

/// Canonical text for a program. Parsing the output yields a structurally
/// equal AST.
pub fn render(program: &Program) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "def {}({}):", program.entry_name, program.params.join(", "));
    render_block(&mut out, &program.body, 1);
    out
}

fn render_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for stmt in stmts {
        render_stmt(out, stmt, depth, false);
    }
}

fn render_stmt(out: &mut String, stmt: &Stmt, depth: usize, as_elif: bool) {
    let pad = INDENT.repeat(depth);
    match &stmt.kind {
        StmtKind::Assign { target, value } => {
            let _ = writeln!(out, "{pad}{target} = {}", render_expr(value));
        }
        StmtKind::Return(value) => {
            let _ = writeln!(out, "{pad}return {}", render_expr(value));
        }
        StmtKind::If { cond, then_body, else_body } => {
            let kw = if as_elif { "elif" } else { "if" };
            let _ = writeln!(out, "{pad}{kw} {}:", render_expr(cond));
            render_block(out, then_body, depth + 1);
            match else_body.as_slice() {
                [] => {}
                [nested @ Stmt { kind: StmtKind::If { .. }, .. }] => render_stmt(out, nested, depth, true),
                body => {
                    let _ = writeln!(out, "{pad}else:");
                    render_block(out, body, depth + 1);
                }
            }
        }
    }
}

pub fn render_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e, 0);
    s
}

const P_OR: u8 = 1;
const P_AND: u8 = 2;
const P_NOT: u8 = 3;
const P_CMP: u8 = 4;
const P_ADD: u8 = 5;
const P_MUL: u8 = 6;
const P_UNARY: u8 = 7;
const P_POSTFIX: u8 = 8;

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Logical { op: BoolOp::Or, .. } => P_OR,
        ExprKind::Logical { op: BoolOp::And, .. } => P_AND,
        ExprKind::Not(_) => P_NOT,
        ExprKind::Compare { .. } => P_CMP,
        ExprKind::Arith { op: ArithOp::Add | ArithOp::Sub, .. } => P_ADD,
        ExprKind::Arith { .. } => P_MUL,
        ExprKind::Literal(Literal::Int(v)) if *v < 0 => P_UNARY,
        _ => P_POSTFIX,
    }
}

fn expr(out: &mut String, e: &Expr, min: u8) {
    let p = precedence(e);
    let paren = p < min;
    if paren {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Literal(lit) => literal(out, lit),
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::MethodCall { receiver, method, args } => {
            self::receiver(out, receiver);
            let _ = write!(out, ".{method}(");
            list(out, args);
            out.push(')');
        }
        ExprKind::BuiltinCall { name, args } => {
            let _ = write!(out, "{name}(");
            list(out, args);
            out.push(')');
        }
        ExprKind::Attribute { receiver, name } => {
            self::receiver(out, receiver);
            let _ = write!(out, ".{name}");
        }
        ExprKind::Index { receiver, key } => {
            self::receiver(out, receiver);
            out.push('[');
            expr(out, key, 0);
            out.push(']');
        }
        ExprKind::Arith { op, lhs, rhs } => {
            expr(out, lhs, p);
            let _ = write!(out, " {} ", op.symbol());
            expr(out, rhs, p + 1);
        }
        ExprKind::Compare { op, lhs, rhs } => {
            expr(out, lhs, P_ADD);
            let _ = write!(out, " {} ", op.symbol());
            expr(out, rhs, P_ADD);
        }
        ExprKind::Logical { op, lhs, rhs } => {
            expr(out, lhs, p);
            out.push_str(if *op == BoolOp::And { " and " } else { " or " });
            expr(out, rhs, p + 1);
        }
        ExprKind::Not(inner) => {
            out.push_str("not ");
            expr(out, inner, P_NOT);
        }
        ExprKind::List(items) => {
            out.push('[');
            list(out, items);
            out.push(']');
        }
        ExprKind::Map(pairs) => {
            out.push('{');
            for (i, (k, v)) in pairs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(out, k, 0);
                out.push_str(": ");
                expr(out, v, 0);
            }
            out.push('}');
        }
    }
    if paren {
        out.push(')');
    }
}

fn receiver(out: &mut String, r: &Expr) {
    // `5.trim()` would lex as a malformed number
    if matches!(r.kind, ExprKind::Literal(Literal::Int(_))) {
        out.push('(');
        expr(out, r, 0);
        out.push(')');
    } else {
        expr(out, r, P_POSTFIX);
    }
}

fn list(out: &mut String, items: &[Expr]) {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        expr(out, item, 0);
    }
}

fn literal(out: &mut String, lit: &Literal) {
    match lit {
        Literal::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Literal::Bool(true) => out.push_str("True"),
        Literal::Bool(false) => out.push_str("False"),
        Literal::Str(s) => {
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    '\r' => out.push_str("\\r"),
                    '\0' => out.push_str("\\0"),
                    c => out.push(c),
                }
            }
            out.push('"');
        }
    }
}
