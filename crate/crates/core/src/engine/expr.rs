//! Arithmetic expressions over named fields, and comparisons between them.
//!
//! Grammar:
//!
//! ```text
//! cond   := expr cmp expr
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | ident | '(' expr ')'
//! ```
//!
//! `×`, `÷`, `−`, `≤` and `≥` are accepted as aliases.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at {pos}: {reason}")]
    Syntax { pos: usize, reason: String },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("result is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = "=", alias = "==")]
    Eq,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Cmp {
    pub fn holds<T: PartialOrd>(self, lhs: T, rhs: T) -> bool {
        match self {
            Cmp::Lt => lhs < rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Eq => lhs == rhs,
            Cmp::Ge => lhs >= rhs,
            Cmp::Gt => lhs > rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Eq => "=",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
        }
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Cmp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "<" => Ok(Cmp::Lt),
            "<=" | "≤" => Ok(Cmp::Le),
            "=" | "==" => Ok(Cmp::Eq),
            ">=" | "≥" => Ok(Cmp::Ge),
            ">" => Ok(Cmp::Gt),
            other => Err(format!("unknown comparison `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Field(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(n) => *n,
            Expr::Field(name) => lookup(name).ok_or_else(|| ExprError::UnknownField(name.clone()))?,
            Expr::Neg(inner) => -inner.eval(lookup)?,
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(lookup)?, r.eval(lookup)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite)
        }
    }

    pub fn fields(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_fields(&mut out);
        out
    }

    fn collect_fields<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Field(f) => {
                out.insert(f);
            }
            Expr::Neg(e) => e.collect_fields(out),
            Expr::Bin(_, l, r) => {
                l.collect_fields(out);
                r.collect_fields(out);
            }
        }
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s)?;
        let e = p.expr()?;
        p.expect_end()?;
        Ok(e)
    }
}

/// `lhs cmp rhs` over field values.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub lhs: Expr,
    pub cmp: Cmp,
    pub rhs: Expr,
}

impl Condition {
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<bool, ExprError> {
        Ok(self.cmp.holds(self.lhs.eval(lookup)?, self.rhs.eval(lookup)?))
    }

    pub fn fields(&self) -> BTreeSet<&str> {
        let mut f = self.lhs.fields();
        f.extend(self.rhs.fields());
        f
    }
}

impl FromStr for Condition {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s)?;
        let lhs = p.expr()?;
        let cmp = match p.next() {
            Some((_, Tok::Cmp(c))) => c,
            other => {
                return Err(ExprError::Syntax {
                    pos: other.map_or(s.len(), |(pos, _)| pos),
                    reason: "expected comparison".into(),
                })
            }
        };
        let rhs = p.expr()?;
        p.expect_end()?;
        Ok(Condition { lhs, cmp, rhs })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(BinOp),
    Cmp(Cmp),
    LParen,
    RParen,
}

fn tokenize(s: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let peek = chars.get(i + 1).map(|(_, c)| *c);
        match c {
            c if c.is_whitespace() => i += 1,
            '+' => {
                out.push((pos, Tok::Op(BinOp::Add)));
                i += 1;
            }
            '-' | '−' => {
                out.push((pos, Tok::Op(BinOp::Sub)));
                i += 1;
            }
            '*' | '×' => {
                out.push((pos, Tok::Op(BinOp::Mul)));
                i += 1;
            }
            '/' | '÷' => {
                out.push((pos, Tok::Op(BinOp::Div)));
                i += 1;
            }
            '(' => {
                out.push((pos, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((pos, Tok::RParen));
                i += 1;
            }
            '≤' => {
                out.push((pos, Tok::Cmp(Cmp::Le)));
                i += 1;
            }
            '≥' => {
                out.push((pos, Tok::Cmp(Cmp::Ge)));
                i += 1;
            }
            '<' | '>' | '=' => {
                let (cmp, len) = match (c, peek) {
                    ('<', Some('=')) => (Cmp::Le, 2),
                    ('>', Some('=')) => (Cmp::Ge, 2),
                    ('=', Some('=')) => (Cmp::Eq, 2),
                    ('<', _) => (Cmp::Lt, 1),
                    ('>', _) => (Cmp::Gt, 1),
                    _ => (Cmp::Eq, 1),
                };
                out.push((pos, Tok::Cmp(cmp)));
                i += len;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                // exponent
                if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1.is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].1.is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let end = chars.get(i).map_or(s.len(), |(p, _)| *p);
                let text = &s[chars[start].0..end];
                let n = text.parse::<f64>().map_err(|_| ExprError::Syntax {
                    pos,
                    reason: format!("bad number `{text}`"),
                })?;
                out.push((pos, Tok::Num(n)));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let end = chars.get(i).map_or(s.len(), |(p, _)| *p);
                out.push((pos, Tok::Ident(s[chars[start].0..end].to_string())));
            }
            other => {
                return Err(ExprError::Syntax { pos, reason: format!("unexpected `{other}`") });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    len: usize,
}

impl Parser {
    fn new(s: &str) -> Result<Self, ExprError> {
        Ok(Self { toks: tokenize(s)?, at: 0, len: s.len() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.len, |(p, _)| *p)
    }

    fn expect_end(&self) -> Result<(), ExprError> {
        match self.toks.get(self.at) {
            None => Ok(()),
            Some((pos, _)) => Err(ExprError::Syntax { pos: *pos, reason: "trailing input".into() }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ (BinOp::Add | BinOp::Sub))) = self.peek().cloned() {
            self.at += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ (BinOp::Mul | BinOp::Div))) = self.peek().cloned() {
            self.at += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Tok::Op(BinOp::Sub)) = self.peek() {
            self.at += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        match self.next() {
            Some((_, Tok::Num(n))) => Ok(Expr::Num(n)),
            Some((_, Tok::Ident(name))) => Ok(Expr::Field(name)),
            Some((_, Tok::LParen)) => {
                let e = self.expr()?;
                match self.next() {
                    Some((_, Tok::RParen)) => Ok(e),
                    _ => Err(ExprError::Syntax { pos: self.pos(), reason: "expected `)`".into() }),
                }
            }
            _ => Err(ExprError::Syntax { pos, reason: "expected number, field or `(`".into() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(s: &str) -> f64 {
        s.parse::<Expr>()
            .unwrap()
            .eval(&|f| match f {
                "temp" => Some(20.0),
                "rpm" => Some(1000.0),
                _ => None,
            })
            .unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3"), 7.0);
        assert_eq!(eval("(1 + 2) * 3"), 9.0);
        assert_eq!(eval("10 - 4 - 3"), 3.0);
        assert_eq!(eval("-temp + 1"), -19.0);
        assert_eq!(eval("temp × 2 ÷ 4"), 10.0);
        assert_eq!(eval("rpm / 1e3"), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!("1 +".parse::<Expr>(), Err(ExprError::Syntax { .. })));
        assert!(matches!("(1".parse::<Expr>(), Err(ExprError::Syntax { .. })));
        assert!(matches!("1 $ 2".parse::<Expr>(), Err(ExprError::Syntax { .. })));
        let e: Expr = "nope * 2".parse().unwrap();
        assert_eq!(e.eval(&|_| None), Err(ExprError::UnknownField("nope".into())));
        let d: Expr = "1 / 0".parse().unwrap();
        assert_eq!(d.eval(&|_| None), Err(ExprError::NonFinite));
    }

    #[test]
    fn conditions() {
        let c: Condition = "temp > 24".parse().unwrap();
        assert!(!c.eval(&|_| Some(20.0)).unwrap());
        assert!(c.eval(&|_| Some(25.0)).unwrap());
        let c: Condition = "temp * 2 ≥ rpm / 20".parse().unwrap();
        assert_eq!(c.cmp, Cmp::Ge);
        assert_eq!(c.fields().into_iter().collect::<Vec<_>>(), vec!["rpm", "temp"]);
        assert!("temp".parse::<Condition>().is_err());
    }
}
