use super::ast::*;
use super::lexer::{tokenize, Tok};
use super::Diagnostic;

/// Parses a complete program: one `def` with an indented body.
pub fn parse(source: &str) -> Result<Program, Diagnostic> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0, depth: 0 };
    p.program()
}

/// Bound on expression and block nesting. Operator chains count one level
/// per operator since they build left-deep trees.
pub const MAX_NESTING: usize = 64;

struct Parser {
    tokens: Vec<(Tok, Span)>,
    pos: usize,
    depth: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].1
    }

    fn advance(&mut self) -> (Tok, Span) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.advance().1)
        } else {
            Err(self.unexpected(what))
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(Diagnostic::new(self.span(), format!("nesting deeper than {MAX_NESTING} levels")));
        }
        Ok(())
    }

    fn nested<T>(&mut self, f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        let saved = self.depth;
        self.enter()?;
        let out = f(self);
        self.depth = saved;
        out
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        Diagnostic::new(self.span(), format!("expected {expected}, found {}", self.peek().describe()))
    }

    fn name(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Name(n) => {
                let span = self.advance().1;
                Ok((n, span))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        while self.eat(&Tok::Newline) {}
        let span = self.expect(Tok::Def, "`def`")?;
        let (entry_name, _) = self.name("function name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let (param, pspan) = self.name("parameter name")?;
                if params.contains(&param) {
                    return Err(Diagnostic::new(pspan, format!("duplicate parameter `{param}`")));
                }
                params.push(param);
                if !self.eat(&Tok::Comma) || *self.peek() == Tok::RParen {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        if *self.peek() == Tok::Minus {
            return Err(Diagnostic::new(self.span(), "return annotations are not supported"));
        }
        self.expect(Tok::Colon, "`:`")?;
        let body = self.block()?;
        while self.eat(&Tok::Newline) {}
        match self.peek() {
            Tok::Eof => Ok(Program { entry_name, params, body, span }),
            Tok::Def => Err(Diagnostic::new(self.span(), "only one function definition is allowed")),
            _ => Err(Diagnostic::new(self.span(), "statements outside the function body are not allowed")),
        }
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.nested(Self::block_body)
    }

    fn block_body(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(Tok::Newline, "end of line")?;
        self.expect(Tok::Indent, "an indented block")?;
        let mut stmts = Vec::new();
        while !matches!(self.peek(), Tok::Dedent | Tok::Eof) {
            stmts.push(self.statement()?);
        }
        self.expect(Tok::Dedent, "end of block")?;
        Ok(stmts)
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Return => {
                self.advance();
                let value = self.expr()?;
                self.end_of_statement()?;
                Ok(Stmt { kind: StmtKind::Return(value), span })
            }
            Tok::If => {
                self.advance();
                self.if_rest(span)
            }
            Tok::Def => Err(Diagnostic::new(span, "nested function definitions are not allowed")),
            Tok::Name(target) => {
                let next = self.tokens.get(self.pos + 1).map(|t| &t.0);
                if next != Some(&Tok::Assign) {
                    return Err(Diagnostic::new(span, "expected an assignment, `return` or `if` statement"));
                }
                self.advance();
                self.advance();
                let value = self.expr()?;
                self.end_of_statement()?;
                Ok(Stmt { kind: StmtKind::Assign { target, value }, span })
            }
            Tok::Indent => Err(Diagnostic::new(span, "unexpected indent")),
            _ => Err(self.unexpected("a statement")),
        }
    }

    fn if_rest(&mut self, span: Span) -> PResult<Stmt> {
        let cond = self.expr()?;
        self.expect(Tok::Colon, "`:`")?;
        let then_body = self.block()?;
        let else_body = match self.peek() {
            Tok::Elif => {
                let elif_span = self.advance().1;
                vec![self.if_rest(elif_span)?]
            }
            Tok::Else => {
                self.advance();
                self.expect(Tok::Colon, "`:`")?;
                self.block()?
            }
            _ => Vec::new(),
        };
        Ok(Stmt { kind: StmtKind::If { cond, then_body, else_body }, span })
    }

    fn end_of_statement(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.advance();
                Ok(())
            }
            Tok::Dedent | Tok::Eof => Ok(()),
            _ => Err(self.unexpected("end of line")),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.nested(Self::or_expr)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let saved = self.depth;
        let out = self.or_expr_chain();
        self.depth = saved;
        out
    }

    fn or_expr_chain(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.enter()?;
            let span = self.advance().1;
            let rhs = self.and_expr()?;
            lhs = Expr::new(ExprKind::Logical { op: BoolOp::Or, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let saved = self.depth;
        let out = self.and_expr_chain();
        self.depth = saved;
        out
    }

    fn and_expr_chain(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while *self.peek() == Tok::And {
            self.enter()?;
            let span = self.advance().1;
            let rhs = self.not_expr()?;
            lhs = Expr::new(ExprKind::Logical { op: BoolOp::And, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Not {
            let span = self.advance().1;
            let inner = self.nested(Self::not_expr)?;
            return Ok(Expr::new(ExprKind::Not(Box::new(inner)), span));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.additive()?;
        let Some(op) = compare_op(self.peek()) else { return Ok(lhs) };
        let span = self.advance().1;
        let rhs = self.additive()?;
        if compare_op(self.peek()).is_some() {
            return Err(Diagnostic::new(self.span(), "chained comparisons are not supported"));
        }
        Ok(Expr::new(ExprKind::Compare { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span))
    }

    fn additive(&mut self) -> PResult<Expr> {
        let saved = self.depth;
        let out = self.additive_chain();
        self.depth = saved;
        out
    }

    fn additive_chain(&mut self) -> PResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.enter()?;
            let span = self.advance().1;
            let rhs = self.multiplicative()?;
            lhs = Expr::new(ExprKind::Arith { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let saved = self.depth;
        let out = self.multiplicative_chain();
        self.depth = saved;
        out
    }

    fn multiplicative_chain(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::SlashSlash => ArithOp::FloorDiv,
                _ => return Ok(lhs),
            };
            self.enter()?;
            let span = self.advance().1;
            let rhs = self.unary()?;
            lhs = Expr::new(ExprKind::Arith { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
    }

    /// Unary minus folds into integer literals; on anything else it becomes
    /// `0 - operand`.
    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() != Tok::Minus {
            return self.postfix();
        }
        let span = self.advance().1;
        if let Tok::Int(v) = *self.peek() {
            let lit_is_operand = !matches!(
                self.tokens.get(self.pos + 1).map(|t| &t.0),
                Some(Tok::Dot | Tok::LBracket | Tok::LParen)
            );
            if lit_is_operand {
                self.advance();
                let n = if v == i64::MAX as u64 + 1 {
                    i64::MIN
                } else {
                    -(i64::try_from(v).map_err(|_| Diagnostic::new(span, "integer literal out of range"))?)
                };
                return Ok(Expr::new(ExprKind::Literal(Literal::Int(n)), span));
            }
        }
        let operand = self.nested(Self::unary)?;
        let zero = Expr::new(ExprKind::Literal(Literal::Int(0)), span);
        Ok(Expr::new(ExprKind::Arith { op: ArithOp::Sub, lhs: Box::new(zero), rhs: Box::new(operand) }, span))
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let saved = self.depth;
        let out = self.postfix_chain();
        self.depth = saved;
        out
    }

    fn postfix_chain(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        loop {
            if matches!(self.peek(), Tok::Dot | Tok::LBracket) {
                self.enter()?;
            }
            match self.peek() {
                Tok::Dot => {
                    self.advance();
                    let (name, span) = self.name("attribute or method name")?;
                    if *self.peek() == Tok::LParen {
                        self.advance();
                        let args = self.call_args()?;
                        e = Expr::new(ExprKind::MethodCall { receiver: Box::new(e), method: name, args }, span);
                    } else {
                        e = Expr::new(ExprKind::Attribute { receiver: Box::new(e), name }, span);
                    }
                }
                Tok::LBracket => {
                    let span = self.advance().1;
                    let key = self.expr()?;
                    if *self.peek() == Tok::Colon {
                        return Err(Diagnostic::new(self.span(), "slices are not supported"));
                    }
                    self.expect(Tok::RBracket, "`]`")?;
                    e = Expr::new(ExprKind::Index { receiver: Box::new(e), key: Box::new(key) }, span);
                }
                Tok::LParen => {
                    return Err(Diagnostic::new(self.span(), "only named functions and methods can be called"));
                }
                _ => return Ok(e),
            }
        }
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        while *self.peek() != Tok::RParen {
            if let (Tok::Name(_), Some(Tok::Assign)) = (self.peek(), self.tokens.get(self.pos + 1).map(|t| &t.0)) {
                return Err(Diagnostic::new(self.span(), "keyword arguments are not supported"));
            }
            args.push(self.expr()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(args)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                let v = i64::try_from(v).map_err(|_| Diagnostic::new(span, "integer literal out of range"))?;
                ExprKind::Literal(Literal::Int(v))
            }
            Tok::Str(s) => {
                self.advance();
                let mut s = s;
                // adjacent literals concatenate
                while let Tok::Str(more) = self.peek().clone() {
                    self.advance();
                    s.push_str(&more);
                }
                ExprKind::Literal(Literal::Str(s))
            }
            Tok::True => {
                self.advance();
                ExprKind::Literal(Literal::Bool(true))
            }
            Tok::False => {
                self.advance();
                ExprKind::Literal(Literal::Bool(false))
            }
            Tok::Name(name) => {
                self.advance();
                if *self.peek() == Tok::LParen {
                    self.advance();
                    let args = self.call_args()?;
                    ExprKind::BuiltinCall { name, args }
                } else {
                    ExprKind::Name(name)
                }
            }
            Tok::LParen => {
                self.advance();
                if *self.peek() == Tok::RParen {
                    return Err(Diagnostic::new(span, "tuples are not supported"));
                }
                let inner = self.expr()?;
                if *self.peek() == Tok::Comma {
                    return Err(Diagnostic::new(self.span(), "tuples are not supported"));
                }
                self.expect(Tok::RParen, "`)`")?;
                return Ok(inner);
            }
            Tok::LBracket => {
                self.advance();
                let mut items = Vec::new();
                while *self.peek() != Tok::RBracket {
                    items.push(self.expr()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RBracket, "`]`")?;
                ExprKind::List(items)
            }
            Tok::LBrace => {
                self.advance();
                let mut pairs = Vec::new();
                while *self.peek() != Tok::RBrace {
                    let k = self.expr()?;
                    self.expect(Tok::Colon, "`:` in map literal")?;
                    let v = self.expr()?;
                    pairs.push((k, v));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RBrace, "`}`")?;
                ExprKind::Map(pairs)
            }
            _ => return Err(self.unexpected("an expression")),
        };
        Ok(Expr::new(kind, span))
    }
}

fn compare_op(t: &Tok) -> Option<CompareOp> {
    Some(match t {
        Tok::EqEq => CompareOp::Eq,
        Tok::NotEq => CompareOp::Ne,
        Tok::Lt => CompareOp::Lt,
        Tok::Le => CompareOp::Le,
        Tok::Gt => CompareOp::Gt,
        Tok::Ge => CompareOp::Ge,
        _ => return None,
    })
}
