//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' integer)?
//! base   := number | var | func '(' expr (',' expr)? ')' | '(' expr ')' | '-' base
//! var    := 'x' digits            (x1, x2, ...)
//! func   := exp | sqrt | abs | min | max | smoothplus
//! ```
//!
//! `integer` may carry a leading `-`. Numbers accept a fraction and an
//! exponent (`1.5e-3`).

use std::fmt;

use thiserror::Error;

use super::{Expr, Func};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    NonIntegerExponent(String),
    Arity { func: &'static str, expected: usize, found: usize },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::UnknownIdentifier(id) => write!(f, "unknown identifier `{id}`"),
            ParseErrorKind::NonIntegerExponent(t) => write!(f, "non-integer exponent `{t}`"),
            ParseErrorKind::Arity { func, expected, found } => {
                write!(f, "{func} takes {expected} argument(s), found {found}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Sym(char),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1, 1);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::Syntax(format!("malformed number `{s}`")),
                line: tl,
                col: tc,
            })?;
            col += i - start;
            out.push(Token { tok: Tok::Num(v, s), line: tl, col: tc });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, col: tc });
            continue;
        }
        if "+-*/^(),".contains(c) {
            out.push(Token { tok: Tok::Sym(c), line: tl, col: tc });
            i += 1;
            col += 1;
            continue;
        }
        return Err(ParseError {
            kind: ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
            line: tl,
            col: tc,
        });
    }
    out.push(Token { tok: Tok::End, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, tok: &Token, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError { kind, line: tok.line, col: tok.col })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek().tok == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            let t = self.peek().clone();
            self.err(&t, ParseErrorKind::Syntax(format!("expected `{c}`, found {}", describe(&t.tok))))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let negative = self.eat('-');
        let t = self.bump();
        match &t.tok {
            Tok::Num(v, text) => {
                if text.contains(['.', 'e', 'E']) || v.fract() != 0.0 {
                    return self.err(&t, ParseErrorKind::NonIntegerExponent(text.clone()));
                }
                let n = *v as i64;
                let n = if negative { -n } else { n };
                let n = i32::try_from(n)
                    .or_else(|_| self.err(&t, ParseErrorKind::Syntax(format!("exponent {n} out of range"))))?;
                Ok(Expr::Pow(Box::new(base), n))
            }
            other => self.err(&t, ParseErrorKind::Syntax(format!("expected integer exponent, found {}", describe(other)))),
        }
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let t = self.bump();
        match &t.tok {
            Tok::Num(v, _) => Ok(Expr::Num(*v)),
            Tok::Sym('-') => Ok(Expr::Neg(Box::new(self.base()?))),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(idx) = variable_index(name) {
                    return Ok(Expr::Var(idx));
                }
                let Some(func) = Func::from_name(name) else {
                    return self.err(&t, ParseErrorKind::UnknownIdentifier(name.clone()));
                };
                self.expect('(')?;
                let mut args = vec![self.expr()?];
                if self.eat(',') {
                    args.push(self.expr()?);
                }
                self.expect(')')?;
                if args.len() != func.arity() {
                    return self.err(
                        &t,
                        ParseErrorKind::Arity { func: func.name(), expected: func.arity(), found: args.len() },
                    );
                }
                if func == Func::SmoothPlus && !matches!(args[1], Expr::Num(k) if k > 0.0) {
                    return self.err(
                        &t,
                        ParseErrorKind::Syntax("smoothplus sharpness must be a positive literal".into()),
                    );
                }
                Ok(Expr::Call(func, args))
            }
            other => self.err(&t, ParseErrorKind::Syntax(format!("unexpected {}", describe(other)))),
        }
    }
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = digits.parse().ok()?;
    (k >= 1).then(|| k - 1)
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(_, s) => format!("number `{s}`"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Sym(c) => format!("`{c}`"),
        Tok::End => "end of input".into(),
    }
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    let t = p.peek().clone();
    if t.tok != Tok::End {
        return p.err(&t, ParseErrorKind::Syntax(format!("trailing {}", describe(&t.tok))));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_negated_variable() {
        assert_eq!(parse("-x1").unwrap(), Expr::Neg(Box::new(Expr::Var(0))));
    }

    #[test]
    fn parses_quadratic_field() {
        let e = parse("-x1 + x1^2").unwrap();
        let expected = Expr::Add(
            Box::new(Expr::Neg(Box::new(Expr::Var(0)))),
            Box::new(Expr::Pow(Box::new(Expr::Var(0)), 2)),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn rejects_fractional_exponent() {
        let err = parse("x1 ^ 2.5").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonIntegerExponent("2.5".into()));
        assert_eq!((err.line, err.col), (1, 6));
    }

    #[test]
    fn reports_unknown_identifiers_and_positions() {
        let err = parse("x1 +\n  y").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("y".into()));
        assert_eq!((err.line, err.col), (2, 3));
        assert!(matches!(parse("x0").unwrap_err().kind, ParseErrorKind::UnknownIdentifier(_)));
        assert!(matches!(parse("sin(x1)").unwrap_err().kind, ParseErrorKind::UnknownIdentifier(_)));
    }

    #[test]
    fn syntax_errors() {
        assert!(parse("(x1 + 2").is_err());
        assert!(parse("x1 +").is_err());
        assert!(parse("x1 x2").is_err());
        assert!(matches!(parse("min(x1)").unwrap_err().kind, ParseErrorKind::Arity { .. }));
        assert!(parse("smoothplus(x1, x2)").is_err());
    }
}
