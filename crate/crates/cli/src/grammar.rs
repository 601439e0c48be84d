//! Text syntax for expression objectives.
//!
//! Variables are `u<level>_<index>`, or `u<level>` for a scalar level.
//! Binding from tightest: `^` (right-associative, positive integer literal
//! exponent), unary `-`, `*`, then `+` and binary `-`. `a - b` parses as
//! `Sum([a, Negate(b)])`; a unary minus written directly before a number
//! literal folds into a negative constant.

use std::fmt::Write as _;

use revstack_core::model::{Dims, Expr};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulaErrorKind {
    Syntax,
    UnknownVariable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaError {
    pub kind: FormulaErrorKind,
    /// Byte offset into the formula.
    pub offset: usize,
    pub message: String,
}

impl FormulaError {
    fn syntax(offset: usize, message: impl Into<String>) -> Self {
        FormulaError {
            kind: FormulaErrorKind::Syntax,
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Var { level: usize, index: Option<usize> },
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn digits(b: &[u8], mut i: usize) -> usize {
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    i
}

fn tokenize(s: &str) -> Result<Vec<(usize, Tok)>, FormulaError> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                let mut j = digits(b, i);
                if j < b.len() && b[j] == b'.' {
                    j = digits(b, j + 1);
                }
                if j < b.len() && (b[j] == b'e' || b[j] == b'E') {
                    let mut k = j + 1;
                    if k < b.len() && (b[k] == b'+' || b[k] == b'-') {
                        k += 1;
                    }
                    let e = digits(b, k);
                    if e == k {
                        return Err(FormulaError::syntax(j, "exponent needs digits"));
                    }
                    j = e;
                }
                let text = &s[i..j];
                let v: f64 = text
                    .parse()
                    .map_err(|_| FormulaError::syntax(i, format!("malformed number '{text}'")))?;
                i = j;
                out.push((start, Tok::Num(v, text.to_string())));
                continue;
            }
            b'u' => {
                let j = digits(b, i + 1);
                if j == i + 1 {
                    return Err(FormulaError::syntax(i, "expected a level number after 'u'"));
                }
                let level: usize = s[i + 1..j]
                    .parse()
                    .map_err(|_| FormulaError::syntax(i, "level number out of range"))?;
                let mut index = None;
                let mut end = j;
                if j < b.len() && b[j] == b'_' {
                    let k = digits(b, j + 1);
                    if k == j + 1 {
                        return Err(FormulaError::syntax(j, "expected an index after '_'"));
                    }
                    index = Some(
                        s[j + 1..k]
                            .parse()
                            .map_err(|_| FormulaError::syntax(j, "index out of range"))?,
                    );
                    end = k;
                }
                if end < b.len() && (b[end].is_ascii_alphanumeric() || b[end] == b'_') {
                    return Err(FormulaError::syntax(end, "unexpected character in variable name"));
                }
                i = end;
                out.push((start, Tok::Var { level, index }));
                continue;
            }
            _ => {
                let ch = s[i..].chars().next().unwrap_or('?');
                return Err(FormulaError::syntax(i, format!("unexpected character '{ch}'")));
            }
        };
        i += 1;
        out.push((start, tok));
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    dims: Option<&'a Dims>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn sum(&mut self) -> Result<Expr, FormulaError> {
        let mut terms = vec![self.product()?];
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    terms.push(self.product()?);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    terms.push(self.product()?.negate());
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Sum(terms) })
    }

    fn product(&mut self) -> Result<Expr, FormulaError> {
        let mut factors = vec![self.unary()?];
        while let Some(Tok::Star) = self.peek() {
            self.pos += 1;
            factors.push(self.unary()?);
        }
        Ok(if factors.len() == 1 { factors.pop().unwrap() } else { Expr::Product(factors) })
    }

    fn unary(&mut self) -> Result<Expr, FormulaError> {
        if let Some(Tok::Minus) = self.peek() {
            self.pos += 1;
            // `-3` is the constant −3 unless a power binds the literal first.
            if let Some(Tok::Num(v, _)) = self.peek() {
                let v = *v;
                if !matches!(self.toks.get(self.pos + 1).map(|(_, t)| t), Some(Tok::Caret)) {
                    self.pos += 1;
                    return Ok(Expr::Constant(-v));
                }
            }
            return Ok(self.unary()?.negate());
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, FormulaError> {
        let base = self.primary()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let k = self.exponent()?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    /// A positive integer literal, possibly raised again (right-associative).
    fn exponent(&mut self) -> Result<u32, FormulaError> {
        let at = self.offset();
        let k = match self.toks.get(self.pos) {
            Some((_, Tok::Num(v, text))) => {
                if text.contains(['.', 'e', 'E']) || *v < 1.0 || *v > u32::MAX as f64 {
                    return Err(FormulaError::syntax(at, format!("exponent must be a positive integer, got '{text}'")));
                }
                *v as u32
            }
            _ => return Err(FormulaError::syntax(at, "exponent must be a positive integer literal")),
        };
        self.pos += 1;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let inner = self.exponent()?;
            return k
                .checked_pow(inner)
                .ok_or_else(|| FormulaError::syntax(at, "exponent overflows"));
        }
        Ok(k)
    }

    fn primary(&mut self) -> Result<Expr, FormulaError> {
        let at = self.offset();
        let Some((_, tok)) = self.toks.get(self.pos).cloned() else {
            return Err(FormulaError::syntax(at, "unexpected end of formula"));
        };
        self.pos += 1;
        match tok {
            Tok::Num(v, _) => Ok(Expr::Constant(v)),
            Tok::Var { level, index } => self.variable(at, level, index),
            Tok::LParen => {
                let e = self.sum()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(e)
                    }
                    _ => Err(FormulaError::syntax(self.offset(), "expected ')'")),
                }
            }
            other => Err(FormulaError::syntax(at, format!("unexpected {}", describe(&other)))),
        }
    }

    fn variable(&self, at: usize, level: usize, index: Option<usize>) -> Result<Expr, FormulaError> {
        let unknown = |message: String| FormulaError {
            kind: FormulaErrorKind::UnknownVariable,
            offset: at,
            message,
        };
        let Some(dims) = self.dims else {
            return match index {
                Some(i) => Ok(Expr::var(level, i)),
                None => Ok(Expr::var(level, 1)),
            };
        };
        let n = dims.levels();
        if level == 0 || level > n {
            return Err(unknown(format!("level {level} does not exist in a {n}-level game")));
        }
        let m = dims.size(level);
        match index {
            None if m == 1 => Ok(Expr::var(level, 1)),
            None => Err(unknown(format!("u{level} is ambiguous: level {level} has {m} components, write u{level}_1 … u{level}_{m}"))),
            Some(i) if i == 0 || i > m => Err(unknown(format!("u{level}_{i} is out of range: level {level} has {m} components"))),
            Some(i) => Ok(Expr::var(level, i)),
        }
    }
}

fn describe(t: &Tok) -> &'static str {
    match t {
        Tok::Num(..) => "number",
        Tok::Var { .. } => "variable",
        Tok::Plus => "'+'",
        Tok::Minus => "'-'",
        Tok::Star => "'*'",
        Tok::Caret => "'^'",
        Tok::LParen => "'('",
        Tok::RParen => "')'",
    }
}

/// Parses a formula. With `dims`, variables are checked against the game.
pub fn parse_formula(s: &str, dims: Option<&Dims>) -> Result<Expr, FormulaError> {
    let toks = tokenize(s)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: s.len(),
        dims,
    };
    if p.toks.is_empty() {
        return Err(FormulaError::syntax(0, "empty formula"));
    }
    let e = p.sum()?;
    if p.pos != p.toks.len() {
        let (o, t) = &p.toks[p.pos];
        return Err(FormulaError::syntax(*o, format!("unexpected {} after a complete expression", describe(t))));
    }
    Ok(e)
}

// Binding strength of the printed form of each node.
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const ATOM: u8 = 5;

fn strength(e: &Expr) -> u8 {
    match e {
        Expr::Sum(cs) if cs.len() != 1 => SUM,
        Expr::Product(cs) if cs.len() != 1 => PRODUCT,
        Expr::Sum(_) | Expr::Product(_) => ATOM,
        Expr::Negate(_) => UNARY,
        Expr::Power(..) => UNARY + 1,
        Expr::Constant(c) if c.is_sign_negative() => UNARY,
        Expr::Constant(_) | Expr::Var { .. } => ATOM,
    }
}

fn write_num(out: &mut String, c: f64) {
    if c == 0.0 {
        out.push_str(if c.is_sign_negative() { "-0" } else { "0" });
    } else {
        let _ = write!(out, "{c:?}");
    }
}

/// Prints `e` so that it parses back to the same tree. Sums and products
/// nested in one another are parenthesized, so nesting is preserved.
/// Sum and product nodes with fewer than two children never come out of the
/// parser and print as their contents.
pub fn print_formula(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn write_child(out: &mut String, e: &Expr, min: u8) {
    if strength(e) < min {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Constant(c) => write_num(out, *c),
        Expr::Var { level, index } => {
            let _ = write!(out, "u{level}_{index}");
        }
        Expr::Sum(cs) => {
            for (i, c) in cs.iter().enumerate() {
                match c {
                    Expr::Negate(inner) if i > 0 => {
                        out.push_str(" - ");
                        write_child(out, inner, PRODUCT);
                    }
                    _ => {
                        if i > 0 {
                            out.push_str(" + ");
                        }
                        write_child(out, c, PRODUCT);
                    }
                }
            }
        }
        Expr::Product(cs) => {
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    out.push_str(" * ");
                }
                write_child(out, c, UNARY);
            }
        }
        Expr::Negate(inner) => {
            out.push('-');
            // A literal right after '-' would fold into a negative constant.
            if matches!(**inner, Expr::Constant(_)) {
                out.push('(');
                write_expr(out, inner);
                out.push(')');
            } else {
                write_child(out, inner, UNARY);
            }
        }
        Expr::Power(base, k) => {
            write_child(out, base, ATOM);
            let _ = write!(out, "^{k}");
        }
    }
}
