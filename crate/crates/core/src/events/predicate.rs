//! Boolean combinations of integer-linear constraints on a count matrix.
//!
//! Grammar (whitespace-insensitive, keywords lowercase):
//!
//! ```text
//! expr       := conj ("or" conj)*
//! conj       := unary ("and" unary)*
//! unary      := "not" unary | "true" | "false" | "(" expr ")" | comparison
//! comparison := linear ("<=" | ">=" | "=" | "==" | "<" | ">") linear
//! linear     := ["+" | "-"] term (("+" | "-") term)*
//! term       := factor ("*" factor)*
//! factor     := INT | "i" | "j" | "m" | "theta" | "(" linear ")"
//!             | "c[" linear "][" linear "]" | "row[" linear "]" | "col[" linear "]"
//!             | "sum(" VAR "=" linear ".." linear ["," VAR "=" linear ".." linear] ";" linear ")"
//! ```
//!
//! `c[i][j]` is the number of children of type `j` in class `i` (both 1-based),
//! `row[i]` sums a class over all types, `col[j]` a type over all classes.
//! Products must be linear in the cells. Inside `sum`, `VAR` is `i` or `j`.
//! Example: `sum(i=1..m, j=1..theta; (i-1) * c[i][j]) = 2`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::events::CountMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cmp::Le => "<=",
            Cmp::Eq => "=",
            Cmp::Ge => ">=",
        })
    }
}

/// `sum(w * c[class][type]) OP rhs`, terms sorted by (class, type), no zero weights.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinearAtom {
    terms: Vec<(usize, usize, i64)>,
    op: Cmp,
    rhs: i64,
}

impl LinearAtom {
    /// `terms` use 0-based (class, type) indices; duplicates are merged.
    pub fn new(terms: impl IntoIterator<Item = (usize, usize, i64)>, op: Cmp, rhs: i64) -> Self {
        let mut merged: BTreeMap<(usize, usize), i64> = BTreeMap::new();
        for (i, j, w) in terms {
            *merged.entry((i, j)).or_insert(0) += w;
        }
        LinearAtom {
            terms: merged
                .into_iter()
                .filter(|&(_, w)| w != 0)
                .map(|((i, j), w)| (i, j, w))
                .collect(),
            op,
            rhs,
        }
    }

    pub fn terms(&self) -> &[(usize, usize, i64)] {
        &self.terms
    }

    pub fn op(&self) -> Cmp {
        self.op
    }

    pub fn rhs(&self) -> i64 {
        self.rhs
    }

    pub fn lhs(&self, c: &CountMatrix) -> i64 {
        self.terms
            .iter()
            .map(|&(i, j, w)| w * i64::from(c.get(i, j)))
            .sum()
    }

    pub fn eval(&self, c: &CountMatrix) -> bool {
        let lhs = self.lhs(c);
        match self.op {
            Cmp::Le => lhs <= self.rhs,
            Cmp::Eq => lhs == self.rhs,
            Cmp::Ge => lhs >= self.rhs,
        }
    }
}

impl fmt::Display for LinearAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            f.write_str("0")?;
        }
        for (n, &(i, j, w)) in self.terms.iter().enumerate() {
            let mag = w.unsigned_abs();
            match (n, w < 0) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if mag != 1 {
                write!(f, "{mag}*")?;
            }
            write!(f, "c[{}][{}]", i + 1, j + 1)?;
        }
        write!(f, " {} {}", self.op, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MatrixPredicate {
    True,
    False,
    Atom(LinearAtom),
    Not(Box<MatrixPredicate>),
    And(Vec<MatrixPredicate>),
    Or(Vec<MatrixPredicate>),
}

impl MatrixPredicate {
    pub fn atom(terms: impl IntoIterator<Item = (usize, usize, i64)>, op: Cmp, rhs: i64) -> Self {
        MatrixPredicate::Atom(LinearAtom::new(terms, op, rhs))
    }

    /// `sum_j c[row][j] OP rhs` with `row` 0-based.
    pub fn row_sum(row: usize, theta: usize, op: Cmp, rhs: i64) -> Self {
        Self::atom((0..theta).map(|j| (row, j, 1)), op, rhs)
    }

    pub fn cell(class: usize, ty: usize, op: Cmp, rhs: i64) -> Self {
        Self::atom([(class, ty, 1)], op, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(p: MatrixPredicate) -> Self {
        MatrixPredicate::Not(Box::new(p))
    }

    pub fn and(ps: Vec<MatrixPredicate>) -> Self {
        MatrixPredicate::And(ps)
    }

    pub fn or(ps: Vec<MatrixPredicate>) -> Self {
        MatrixPredicate::Or(ps)
    }

    pub fn eval(&self, c: &CountMatrix) -> bool {
        match self {
            MatrixPredicate::True => true,
            MatrixPredicate::False => false,
            MatrixPredicate::Atom(a) => a.eval(c),
            MatrixPredicate::Not(p) => !p.eval(c),
            MatrixPredicate::And(ps) => ps.iter().all(|p| p.eval(c)),
            MatrixPredicate::Or(ps) => ps.iter().any(|p| p.eval(c)),
        }
    }

    pub fn atoms(&self) -> Vec<&LinearAtom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a LinearAtom>) {
        match self {
            MatrixPredicate::Atom(a) => out.push(a),
            MatrixPredicate::Not(p) => p.collect_atoms(out),
            MatrixPredicate::And(ps) | MatrixPredicate::Or(ps) => {
                ps.iter().for_each(|p| p.collect_atoms(out))
            }
            MatrixPredicate::True | MatrixPredicate::False => {}
        }
    }

    /// Largest (class, type) index referenced, if any.
    pub fn max_indices(&self) -> Option<(usize, usize)> {
        let atoms = self.atoms();
        let i = atoms.iter().flat_map(|a| a.terms.iter().map(|t| t.0)).max()?;
        let j = atoms.iter().flat_map(|a| a.terms.iter().map(|t| t.1)).max()?;
        Some((i, j))
    }

    /// Recognizes "row `r` has at least one child" (`Some((r, true))`) and its
    /// complement "row `r` is empty" (`Some((r, false))`), for any spelling
    /// built from one row-sum atom and negations.
    pub fn row_presence(&self, theta: usize) -> Option<(usize, bool)> {
        match self {
            MatrixPredicate::Not(p) => p.row_presence(theta).map(|(r, b)| (r, !b)),
            MatrixPredicate::Atom(a) => {
                let row = a.terms.first()?.0;
                let is_row_sum = a.terms.len() == theta
                    && a.terms
                        .iter()
                        .enumerate()
                        .all(|(j, &(i, tj, w))| i == row && tj == j && w == 1);
                if !is_row_sum {
                    return None;
                }
                match (a.op, a.rhs) {
                    (Cmp::Ge, 1) => Some((row, true)),
                    (Cmp::Le, 0) | (Cmp::Eq, 0) => Some((row, false)),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    pub fn parse(text: &str, m: usize, theta: usize) -> Result<Self> {
        let tokens = tokenize(text)?;
        let mut p = Parser {
            text,
            tokens,
            pos: 0,
            m: m as i64,
            theta: theta as i64,
            vars: Vec::new(),
            furthest: None,
        };
        let pred = p.expr();
        let pred = match pred {
            Ok(pred) if p.pos == p.tokens.len() => pred,
            Ok(_) => {
                let col = p.tokens[p.pos].col;
                return Err(p.error_at(col, "unexpected trailing input"));
            }
            Err(e) => return Err(p.furthest.take().unwrap_or(e)),
        };
        Ok(pred)
    }
}

impl fmt::Display for MatrixPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixPredicate::True => f.write_str("true"),
            MatrixPredicate::False => f.write_str("false"),
            MatrixPredicate::Atom(a) => write!(f, "{a}"),
            MatrixPredicate::Not(p) => write!(f, "not ({p})"),
            MatrixPredicate::And(ps) | MatrixPredicate::Or(ps) => {
                let sep = if matches!(self, MatrixPredicate::And(_)) {
                    " and "
                } else {
                    " or "
                };
                for (n, p) in ps.iter().enumerate() {
                    if n > 0 {
                        f.write_str(sep)?;
                    }
                    match p {
                        MatrixPredicate::And(_) | MatrixPredicate::Or(_) => write!(f, "({p})")?,
                        _ => write!(f, "{p}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Plus,
    Minus,
    Star,
    Comma,
    Semi,
    DotDot,
    Assign,
    Cmp(Cmp, i64), // strictness offset: `<` is `<= -1`, `>` is `>= +1`
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, msg: &str| Error::Parse {
        expr: text.to_string(),
        column: col,
        message: msg.to_string(),
    };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, len) = match two.as_str() {
            "<=" => (Tok::Cmp(Cmp::Le, 0), 2),
            ">=" => (Tok::Cmp(Cmp::Ge, 0), 2),
            "==" => (Tok::Cmp(Cmp::Eq, 0), 2),
            ".." => (Tok::DotDot, 2),
            _ => match c {
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                '[' => (Tok::LBracket, 1),
                ']' => (Tok::RBracket, 1),
                '+' => (Tok::Plus, 1),
                '-' => (Tok::Minus, 1),
                '*' => (Tok::Star, 1),
                ',' => (Tok::Comma, 1),
                ';' => (Tok::Semi, 1),
                '<' => (Tok::Cmp(Cmp::Le, -1), 1),
                '>' => (Tok::Cmp(Cmp::Ge, 1), 1),
                '=' => (Tok::Assign, 1),
                d if d.is_ascii_digit() => {
                    let start = i;
                    let mut j = i;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    let s: String = chars[start..j].iter().collect();
                    let v = s.parse().map_err(|_| err(col, "integer too large"))?;
                    (Tok::Int(v), j - start)
                }
                a if a.is_ascii_alphabetic() || a == '_' => {
                    let start = i;
                    let mut j = i;
                    while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                        j += 1;
                    }
                    (Tok::Ident(chars[start..j].iter().collect()), j - start)
                }
                _ => return Err(err(col, &format!("unexpected character '{c}'"))),
            },
        };
        out.push(Token { tok, col });
        i += len;
    }
    Ok(out)
}

/// A linear form in the cells plus a constant.
#[derive(Debug, Clone, Default)]
struct Lin {
    coeffs: BTreeMap<(usize, usize), i64>,
    constant: i64,
}

impl Lin {
    fn constant(v: i64) -> Self {
        Lin {
            coeffs: BTreeMap::new(),
            constant: v,
        }
    }

    fn is_constant(&self) -> bool {
        self.coeffs.values().all(|&w| w == 0)
    }

    fn add(mut self, other: Lin, sign: i64) -> Option<Lin> {
        for (k, w) in other.coeffs {
            let e = self.coeffs.entry(k).or_insert(0);
            *e = e.checked_add(w.checked_mul(sign)?)?;
        }
        self.constant = self.constant.checked_add(other.constant.checked_mul(sign)?)?;
        Some(self)
    }

    fn scale(mut self, s: i64) -> Option<Lin> {
        for w in self.coeffs.values_mut() {
            *w = w.checked_mul(s)?;
        }
        self.constant = self.constant.checked_mul(s)?;
        Some(self)
    }
}

struct Parser<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    m: i64,
    theta: i64,
    vars: Vec<(String, i64)>,
    furthest: Option<Error>,
}

impl Parser<'_> {
    fn col(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map_or(self.text.chars().count() + 1, |t| t.col)
    }

    fn error_at(&self, column: usize, msg: &str) -> Error {
        Error::Parse {
            expr: self.text.to_string(),
            column,
            message: msg.to_string(),
        }
    }

    fn fail<T>(&mut self, msg: &str) -> Result<T> {
        let col = self.col();
        let e = self.error_at(col, msg);
        let further = match &self.furthest {
            Some(Error::Parse { column, .. }) => col >= *column,
            _ => true,
        };
        if further {
            self.furthest = Some(self.error_at(col, msg));
        }
        Err(e)
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == word)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(&format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<MatrixPredicate> {
        let mut items = vec![self.conj()?];
        while self.peek_ident("or") {
            self.pos += 1;
            items.push(self.conj()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            MatrixPredicate::Or(items)
        })
    }

    fn conj(&mut self) -> Result<MatrixPredicate> {
        let mut items = vec![self.unary()?];
        while self.peek_ident("and") {
            self.pos += 1;
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            MatrixPredicate::And(items)
        })
    }

    fn unary(&mut self) -> Result<MatrixPredicate> {
        if self.peek_ident("not") {
            self.pos += 1;
            return Ok(MatrixPredicate::not(self.unary()?));
        }
        if self.peek_ident("true") {
            self.pos += 1;
            return Ok(MatrixPredicate::True);
        }
        if self.peek_ident("false") {
            self.pos += 1;
            return Ok(MatrixPredicate::False);
        }
        if self.peek() == Some(&Tok::LParen) {
            // Either a parenthesized linear form starting a comparison, or a group.
            let save = self.pos;
            if let Ok(p) = self.comparison() {
                return Ok(p);
            }
            self.pos = save + 1;
            let inner = self.expr()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(inner);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<MatrixPredicate> {
        let lhs = self.linear()?;
        let (op, shift) = match self.peek() {
            Some(Tok::Cmp(op, shift)) => (*op, *shift),
            Some(Tok::Assign) => (Cmp::Eq, 0),
            _ => return self.fail("expected a comparison operator"),
        };
        self.pos += 1;
        let rhs = self.linear()?;
        let Some(diff) = lhs.add(rhs, -1) else {
            return self.fail("integer overflow");
        };
        let Some(bound) = diff.constant.checked_neg().and_then(|b| b.checked_add(shift)) else {
            return self.fail("integer overflow");
        };
        Ok(MatrixPredicate::atom(
            diff.coeffs.into_iter().map(|((i, j), w)| (i, j, w)),
            op,
            bound,
        ))
    }

    fn linear(&mut self) -> Result<Lin> {
        let mut sign = 1;
        match self.peek() {
            Some(Tok::Minus) => {
                sign = -1;
                self.pos += 1;
            }
            Some(Tok::Plus) => self.pos += 1,
            _ => {}
        }
        let mut acc = Lin::default();
        let first = self.term()?;
        acc = match acc.add(first, sign) {
            Some(a) => a,
            None => return self.fail("integer overflow"),
        };
        loop {
            let sign = match self.peek() {
                Some(Tok::Plus) => 1,
                Some(Tok::Minus) => -1,
                _ => break,
            };
            self.pos += 1;
            let t = self.term()?;
            acc = match acc.add(t, sign) {
                Some(a) => a,
                None => return self.fail("integer overflow"),
            };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Lin> {
        let mut acc = self.factor()?;
        while self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            let f = self.factor()?;
            let prod = if f.is_constant() {
                acc.scale(f.constant)
            } else if acc.is_constant() {
                f.scale(acc.constant)
            } else {
                return self.fail("product of two cell expressions is not linear");
            };
            acc = match prod {
                Some(p) => p,
                None => return self.fail("integer overflow"),
            };
        }
        Ok(acc)
    }

    fn const_index(&mut self, what: &str, max: i64) -> Result<usize> {
        let col = self.col();
        let v = self.linear()?;
        if !v.is_constant() {
            return Err(self.error_at(col, &format!("{what} index must not reference cells")));
        }
        if v.constant < 1 || v.constant > max {
            let msg = format!("{what} index {} out of range 1..={max}", v.constant);
            self.furthest = Some(self.error_at(col, &msg));
            return Err(self.error_at(col, &msg));
        }
        Ok(v.constant as usize - 1)
    }

    fn factor(&mut self) -> Result<Lin> {
        let Some(tok) = self.peek().cloned() else {
            return self.fail("unexpected end of expression");
        };
        match tok {
            Tok::Int(v) => {
                self.pos += 1;
                Ok(Lin::constant(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.linear()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                match name.as_str() {
                    "c" => {
                        self.expect(Tok::LBracket, "'['")?;
                        let i = self.const_index("class", self.m)?;
                        self.expect(Tok::RBracket, "']'")?;
                        self.expect(Tok::LBracket, "'['")?;
                        let j = self.const_index("type", self.theta)?;
                        self.expect(Tok::RBracket, "']'")?;
                        let mut l = Lin::default();
                        l.coeffs.insert((i, j), 1);
                        Ok(l)
                    }
                    "row" => {
                        self.expect(Tok::LBracket, "'['")?;
                        let i = self.const_index("class", self.m)?;
                        self.expect(Tok::RBracket, "']'")?;
                        let mut l = Lin::default();
                        for j in 0..self.theta as usize {
                            l.coeffs.insert((i, j), 1);
                        }
                        Ok(l)
                    }
                    "col" => {
                        self.expect(Tok::LBracket, "'['")?;
                        let j = self.const_index("type", self.theta)?;
                        self.expect(Tok::RBracket, "']'")?;
                        let mut l = Lin::default();
                        for i in 0..self.m as usize {
                            l.coeffs.insert((i, j), 1);
                        }
                        Ok(l)
                    }
                    "sum" => self.sum(),
                    "m" => Ok(Lin::constant(self.m)),
                    "theta" => Ok(Lin::constant(self.theta)),
                    var => match self.vars.iter().rev().find(|(n, _)| n == var) {
                        Some(&(_, v)) => Ok(Lin::constant(v)),
                        None => {
                            self.pos -= 1;
                            self.fail(&format!("unknown name '{var}'"))
                        }
                    },
                }
            }
            _ => self.fail("expected a number, cell, or sum"),
        }
    }

    fn sum(&mut self) -> Result<Lin> {
        self.expect(Tok::LParen, "'(' after sum")?;
        let mut ranges = Vec::new();
        loop {
            let var = match self.peek() {
                Some(Tok::Ident(v)) if v == "i" || v == "j" => v.clone(),
                _ => return self.fail("expected summation variable i or j"),
            };
            self.pos += 1;
            self.expect(Tok::Assign, "'='")?;
            let lo = self.linear()?;
            self.expect(Tok::DotDot, "'..'")?;
            let hi = self.linear()?;
            if !lo.is_constant() || !hi.is_constant() {
                return self.fail("summation bounds must be constants");
            }
            ranges.push((var, lo.constant, hi.constant));
            match self.peek() {
                Some(Tok::Comma) => self.pos += 1,
                Some(Tok::Semi) => {
                    self.pos += 1;
                    break;
                }
                _ => return self.fail("expected ',' or ';'"),
            }
        }
        let body_start = self.pos;
        let mut body_end = None;
        let mut acc = Lin::default();
        let mut bindings: Vec<Vec<(String, i64)>> = vec![Vec::new()];
        for (var, lo, hi) in &ranges {
            let mut next = Vec::new();
            for b in &bindings {
                for v in *lo..=*hi {
                    let mut nb = b.clone();
                    nb.push((var.clone(), v));
                    next.push(nb);
                }
            }
            bindings = next;
        }
        for b in bindings {
            self.pos = body_start;
            let depth = self.vars.len();
            self.vars.extend(b);
            let body = self.linear();
            self.vars.truncate(depth);
            let body = body?;
            acc = match acc.add(body, 1) {
                Some(a) => a,
                None => return self.fail("integer overflow"),
            };
            body_end = Some(self.pos);
        }
        if let Some(end) = body_end {
            self.pos = end;
        } else {
            // Empty range: still consume the body.
            let depth = self.vars.len();
            self.vars
                .extend(ranges.iter().map(|(v, lo, _)| (v.clone(), *lo)));
            let body = self.linear();
            self.vars.truncate(depth);
            body?;
        }
        self.expect(Tok::RParen, "')' closing sum")?;
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(m: usize, theta: usize, entries: &[u32]) -> CountMatrix {
        CountMatrix::from_entries(m, theta, entries.to_vec()).unwrap()
    }

    #[test]
    fn parses_row_sum_atom() {
        let p = MatrixPredicate::parse("c[1][1] + c[1][2] >= 1", 2, 2).unwrap();
        assert_eq!(p, MatrixPredicate::row_sum(0, 2, Cmp::Ge, 1));
        assert_eq!(MatrixPredicate::parse("row[1] >= 1", 2, 2).unwrap(), p);
        assert!(p.eval(&mat(2, 2, &[0, 1, 5, 5])));
        assert!(!p.eval(&mat(2, 2, &[0, 0, 5, 5])));
    }

    #[test]
    fn sum_with_affine_weights() {
        // generation-size weights: class i counts (i - 1)
        let p = MatrixPredicate::parse("sum(i=1..m, j=1..theta; (i-1) * c[i][j]) = 2", 4, 1).unwrap();
        let expected = MatrixPredicate::atom([(1, 0, 1), (2, 0, 2), (3, 0, 3)], Cmp::Eq, 2);
        assert_eq!(p, expected);
        assert!(p.eval(&mat(4, 1, &[7, 0, 1, 0])));
        assert!(p.eval(&mat(4, 1, &[0, 2, 0, 0])));
        assert!(!p.eval(&mat(4, 1, &[0, 1, 1, 0])));
    }

    #[test]
    fn strict_comparisons_and_moved_constants() {
        let p = MatrixPredicate::parse("c[1][1] > 0", 1, 1).unwrap();
        assert_eq!(p, MatrixPredicate::cell(0, 0, Cmp::Ge, 1));
        let q = MatrixPredicate::parse("2 * c[1][1] + 3 < c[1][1] + 5", 1, 1).unwrap();
        assert_eq!(q, MatrixPredicate::cell(0, 0, Cmp::Le, 1));
    }

    #[test]
    fn boolean_structure_and_grouping() {
        let p = MatrixPredicate::parse("c[1][1] >= 1 and not (c[1][2] = 0 or c[2][1] = 0)", 2, 2).unwrap();
        match &p {
            MatrixPredicate::And(items) => {
                assert_eq!(items.len(), 2);
                assert!(matches!(items[1], MatrixPredicate::Not(_)));
            }
            other => panic!("{other:?}"),
        }
        let g = MatrixPredicate::parse("(c[1][1] + c[2][1]) >= 2", 2, 2).unwrap();
        assert_eq!(g, MatrixPredicate::atom([(0, 0, 1), (1, 0, 1)], Cmp::Ge, 2));
        let h = MatrixPredicate::parse("(c[1][1] >= 2)", 2, 2).unwrap();
        assert_eq!(h, MatrixPredicate::cell(0, 0, Cmp::Ge, 2));
    }

    #[test]
    fn errors_name_expression_and_column() {
        let e = MatrixPredicate::parse("c[1][1] >=", 2, 2).unwrap_err();
        match e {
            Error::Parse { expr, column, .. } => {
                assert_eq!(expr, "c[1][1] >=");
                assert_eq!(column, 11);
            }
            other => panic!("{other:?}"),
        }
        let e = MatrixPredicate::parse("c[3][1] >= 1", 2, 2).unwrap_err();
        assert!(e.to_string().contains("out of range"), "{e}");
        assert!(MatrixPredicate::parse("c[1][1] * c[1][2] >= 1", 2, 2).is_err());
        assert!(MatrixPredicate::parse("c[1][1] >= 1 $", 2, 2).is_err());
        assert!(MatrixPredicate::parse("k >= 1", 2, 2).is_err());
        assert!(MatrixPredicate::parse("c[1][1] >= 1 and", 2, 2).is_err());
    }

    #[test]
    fn display_is_canonical() {
        let p = MatrixPredicate::parse("-c[2][1] + 2*c[1][1] - 3*c[1][2] <= 4", 2, 2).unwrap();
        assert_eq!(p.to_string(), "2*c[1][1] - 3*c[1][2] - c[2][1] <= 4");
        let q = MatrixPredicate::parse("not (c[1][1] >= 1) and (true or false)", 2, 2).unwrap();
        assert_eq!(q.to_string(), "not (c[1][1] >= 1) and (true or false)");
        let z = MatrixPredicate::atom(Vec::new(), Cmp::Eq, 0);
        assert_eq!(z.to_string(), "0 = 0");
    }

    #[test]
    fn row_presence_recognition() {
        let p = MatrixPredicate::row_sum(0, 2, Cmp::Ge, 1);
        assert_eq!(p.row_presence(2), Some((0, true)));
        assert_eq!(MatrixPredicate::not(p.clone()).row_presence(2), Some((0, false)));
        assert_eq!(MatrixPredicate::row_sum(1, 2, Cmp::Eq, 0).row_presence(2), Some((1, false)));
        assert_eq!(MatrixPredicate::cell(0, 0, Cmp::Ge, 1).row_presence(2), None);
        assert_eq!(MatrixPredicate::row_sum(0, 2, Cmp::Ge, 2).row_presence(2), None);
    }

    fn arb_atom() -> impl Strategy<Value = MatrixPredicate> {
        (
            prop::collection::vec((0usize..3, 0usize..2, -3i64..4), 0..4),
            prop_oneof![Just(Cmp::Le), Just(Cmp::Eq), Just(Cmp::Ge)],
            -3i64..6,
        )
            .prop_map(|(terms, op, rhs)| MatrixPredicate::atom(terms, op, rhs))
    }

    fn arb_pred() -> impl Strategy<Value = MatrixPredicate> {
        let leaf = prop_oneof![
            4 => arb_atom(),
            1 => Just(MatrixPredicate::True),
            1 => Just(MatrixPredicate::False),
        ];
        leaf.prop_recursive(3, 16, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(MatrixPredicate::not),
                prop::collection::vec(inner.clone(), 2..4).prop_map(MatrixPredicate::And),
                prop::collection::vec(inner, 2..4).prop_map(MatrixPredicate::Or),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(p in arb_pred()) {
            let text = p.to_string();
            let back = MatrixPredicate::parse(&text, 3, 2).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
