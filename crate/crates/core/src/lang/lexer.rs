use super::ast::Span;
use super::Diagnostic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Name(String),
    Int(u64),
    Str(String),
    Def,
    Return,
    If,
    Elif,
    Else,
    And,
    Or,
    Not,
    True,
    False,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Dot,
    Assign,
    Plus,
    Minus,
    Star,
    SlashSlash,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("name `{n}`"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Str(_) => "string literal".into(),
            Tok::Newline => "end of line".into(),
            Tok::Indent => "indent".into(),
            Tok::Dedent => "dedent".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Def => "def",
            Tok::Return => "return",
            Tok::If => "if",
            Tok::Elif => "elif",
            Tok::Else => "else",
            Tok::And => "and",
            Tok::Or => "or",
            Tok::Not => "not",
            Tok::True => "True",
            Tok::False => "False",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Dot => ".",
            Tok::Assign => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::SlashSlash => "//",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            _ => "",
        }
    }
}

/// Python keywords and constructs outside the language. Hitting one is a
/// hard syntax error rather than an unknown name.
const FORBIDDEN: &[&str] = &[
    "import", "from", "for", "while", "lambda", "class", "with", "try", "except", "finally", "raise",
    "global", "nonlocal", "del", "yield", "async", "await", "assert", "pass", "break", "continue",
    "is", "in", "as",
];

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    indents: Vec<u32>,
    depth: usize,
    at_line_start: bool,
    out: Vec<(Tok, Span)>,
}

pub fn tokenize(src: &str) -> Result<Vec<(Tok, Span)>, Diagnostic> {
    Lexer {
        chars: src.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        indents: vec![0],
        depth: 0,
        at_line_start: true,
        out: Vec::new(),
    }
    .run()
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.pos + 1).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }

    fn err(&self, span: Span, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::new(span, msg)
    }

    fn run(mut self) -> Result<Vec<(Tok, Span)>, Diagnostic> {
        while self.pos < self.chars.len() {
            if self.at_line_start && self.depth == 0 {
                if self.handle_indent()? {
                    continue;
                }
            }
            let Some(c) = self.peek() else { break };
            let span = self.span();
            match c {
                ' ' | '\t' | '\r' => {
                    self.bump();
                }
                '\\' if self.peek2() == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                '#' => self.skip_comment(),
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        self.push_newline(span);
                        self.at_line_start = true;
                    }
                }
                '"' | '\'' => {
                    let s = self.string(c)?;
                    self.out.push((Tok::Str(s), span));
                }
                '0'..='9' => {
                    let mut digits = String::new();
                    while let Some(d) = self.peek().filter(|d| d.is_ascii_digit() || *d == '_') {
                        self.bump();
                        if d != '_' {
                            digits.push(d);
                        }
                    }
                    if self.peek().is_some_and(|d| d == '.' || d.is_alphabetic()) {
                        return Err(self.err(span, "only integer literals are supported"));
                    }
                    let v = digits.parse::<u64>().map_err(|_| self.err(span, "integer literal out of range"))?;
                    self.out.push((Tok::Int(v), span));
                }
                c if c.is_alphabetic() || c == '_' => {
                    let mut word = String::new();
                    while let Some(d) = self.peek().filter(|d| d.is_alphanumeric() || *d == '_') {
                        self.bump();
                        word.push(d);
                    }
                    if matches!(self.peek(), Some('"' | '\'')) {
                        return Err(self.err(span, format!("string prefix `{word}` is not supported")));
                    }
                    let tok = match word.as_str() {
                        "def" => Tok::Def,
                        "return" => Tok::Return,
                        "if" => Tok::If,
                        "elif" => Tok::Elif,
                        "else" => Tok::Else,
                        "and" => Tok::And,
                        "or" => Tok::Or,
                        "not" => Tok::Not,
                        "True" => Tok::True,
                        "False" => Tok::False,
                        w if FORBIDDEN.contains(&w) => {
                            return Err(self.err(span, format!("forbidden construct: {w}")));
                        }
                        _ => Tok::Name(word),
                    };
                    self.out.push((tok, span));
                }
                _ => {
                    let tok = self.punct(c, span)?;
                    match tok {
                        Tok::LParen | Tok::LBracket | Tok::LBrace => self.depth += 1,
                        Tok::RParen | Tok::RBracket | Tok::RBrace => {
                            if self.depth == 0 {
                                return Err(self.err(span, format!("unmatched `{c}`")));
                            }
                            self.depth -= 1;
                        }
                        _ => {}
                    }
                    self.out.push((tok, span));
                }
            }
        }
        let span = self.span();
        if self.depth != 0 {
            return Err(self.err(span, "unclosed bracket at end of input"));
        }
        self.push_newline(span);
        while self.indents.len() > 1 {
            self.indents.pop();
            self.out.push((Tok::Dedent, span));
        }
        self.out.push((Tok::Eof, span));
        Ok(self.out)
    }

    fn push_newline(&mut self, span: Span) {
        if !matches!(self.out.last(), None | Some((Tok::Newline, _)) | Some((Tok::Dedent, _)) | Some((Tok::Indent, _))) {
            self.out.push((Tok::Newline, span));
        }
    }

    fn skip_comment(&mut self) {
        while self.peek().is_some_and(|c| c != '\n') {
            self.bump();
        }
    }

    /// Measures indentation at the start of a logical line. Returns true when
    /// the line was blank or comment-only and has been consumed.
    fn handle_indent(&mut self) -> Result<bool, Diagnostic> {
        let mut width = 0u32;
        while let Some(c) = self.peek() {
            match c {
                ' ' => width += 1,
                '\t' => width = (width / 8 + 1) * 8,
                '\r' | '\x0c' => {}
                _ => break,
            }
            self.bump();
        }
        match self.peek() {
            None => return Ok(true),
            Some('\n') => {
                self.bump();
                return Ok(true);
            }
            Some('#') => {
                self.skip_comment();
                if self.peek() == Some('\n') {
                    self.bump();
                }
                return Ok(true);
            }
            _ => {}
        }
        self.at_line_start = false;
        let span = self.span();
        let current = *self.indents.last().unwrap_or(&0);
        if width > current {
            self.indents.push(width);
            self.out.push((Tok::Indent, span));
        } else if width < current {
            while self.indents.last().is_some_and(|&w| w > width) {
                self.indents.pop();
                self.out.push((Tok::Dedent, span));
            }
            if self.indents.last() != Some(&width) {
                return Err(self.err(span, "unindent does not match any outer indentation level"));
            }
        }
        Ok(false)
    }

    fn string(&mut self, quote: char) -> Result<String, Diagnostic> {
        let start = self.span();
        self.bump();
        if self.peek() == Some(quote) && self.peek2() == Some(quote) {
            return Err(self.err(start, "triple-quoted strings are not supported"));
        }
        let mut s = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(self.err(start, "unterminated string literal")),
                Some(c) if c == quote => return Ok(s),
                Some('\\') => {
                    let esc_span = self.span();
                    match self.bump() {
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        Some('r') => s.push('\r'),
                        Some('0') => s.push('\0'),
                        Some('\\') => s.push('\\'),
                        Some('\'') => s.push('\''),
                        Some('"') => s.push('"'),
                        Some('\n') => {}
                        _ => return Err(self.err(esc_span, "unsupported escape sequence")),
                    }
                }
                Some(c) => s.push(c),
            }
        }
    }

    fn punct(&mut self, c: char, span: Span) -> Result<Tok, Diagnostic> {
        let next = self.peek2();
        let (tok, width) = match (c, next) {
            ('/', Some('/')) => (Tok::SlashSlash, 2),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('!', Some('=')) => (Tok::NotEq, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('*', Some('*')) => return Err(self.err(span, "unsupported operator `**`")),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('[', _) => (Tok::LBracket, 1),
            (']', _) => (Tok::RBracket, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            (',', _) => (Tok::Comma, 1),
            (':', _) => (Tok::Colon, 1),
            ('.', _) => (Tok::Dot, 1),
            ('=', _) => (Tok::Assign, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            _ => return Err(self.err(span, format!("unexpected character {c:?}"))),
        };
        for _ in 0..width {
            self.bump();
        }
        Ok(tok)
    }
}
