//! Term grammar for separable models.
//!
//! ```text
//! model  := expr (';' expr)*
//! expr   := mul (('+' | '-') mul)*
//! mul    := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | 'b0'..'b9' | func '(' expr ')' | '(' expr ')'
//! func   := 'exp' | 'log' | 'sin' | 'cos'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)`. Each term is compiled to a postfix program for evaluation.

use std::fmt;

use thiserror::Error;

use super::{BasisFunction, EvalFailure, ModelBasis, ModelError};

/// Largest number of nonlinear parameters a term may reference.
pub const MAX_B: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at position {position}: expected {}, found {found}", .expected.join(" or "))]
pub struct ParseError {
    /// Byte offset into the source text.
    pub position: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }

    pub fn apply(self, v: f64) -> Result<f64, EvalFailure> {
        match self {
            Func::Exp => Ok(v.exp()),
            Func::Log if v <= 0.0 => Err(EvalFailure::Domain),
            Func::Log => Ok(v.ln()),
            Func::Sin => Ok(v.sin()),
            Func::Cos => Ok(v.cos()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn apply(self, l: f64, r: f64) -> Result<f64, EvalFailure> {
        match self {
            BinOp::Add => Ok(l + r),
            BinOp::Sub => Ok(l - r),
            BinOp::Mul => Ok(l * r),
            BinOp::Div if r == 0.0 => Err(EvalFailure::Pole),
            BinOp::Div => Ok(l / r),
            BinOp::Pow => Ok(l.powf(r)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    B(usize),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Highest `b` index referenced, if any.
    pub fn max_b(&self) -> Option<usize> {
        match self {
            Expr::Num(_) | Expr::X => None,
            Expr::B(i) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_b(),
            Expr::Bin(_, l, r) => l.max_b().max(r.max_b()),
        }
    }

    fn compile(&self, out: &mut Vec<Op>) {
        match self {
            Expr::Num(v) => out.push(Op::Const(*v)),
            Expr::X => out.push(Op::X),
            Expr::B(i) => out.push(Op::B(*i)),
            Expr::Neg(e) => {
                e.compile(out);
                out.push(Op::Neg);
            }
            Expr::Call(f, e) => {
                e.compile(out);
                out.push(Op::Call(*f));
            }
            Expr::Bin(op, l, r) => {
                l.compile(out);
                r.compile(out);
                out.push(Op::Bin(*op));
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::X => f.write_str("x"),
            Expr::B(i) => write!(f, "b{i}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Call(func, e) => {
                let name = match func {
                    Func::Exp => "exp",
                    Func::Log => "log",
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                };
                write!(f, "{name}({e})")
            }
            Expr::Bin(op, l, r) => {
                let sym = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                    BinOp::Pow => '^',
                };
                write!(f, "({l}{sym}{r})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    X,
    B(usize),
    Neg,
    Call(Func),
    Bin(BinOp),
}

/// A parsed term compiled to a postfix program.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    source: String,
    expr: Expr,
    program: Vec<Op>,
}

impl Term {
    pub fn new(source: impl Into<String>, expr: Expr) -> Self {
        let mut program = Vec::new();
        expr.compile(&mut program);
        Self {
            source: source.into(),
            expr,
            program,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// `1 +` the highest `b` index, or zero.
    pub fn arity_b(&self) -> usize {
        self.expr.max_b().map_or(0, |i| i + 1)
    }

    pub fn eval(&self, b: &[f64], x: f64) -> Result<f64, EvalFailure> {
        let mut stack: Vec<f64> = Vec::with_capacity(self.program.len());
        for op in &self.program {
            match *op {
                Op::Const(v) => stack.push(v),
                Op::X => stack.push(x),
                Op::B(i) => stack.push(b[i]),
                Op::Neg => {
                    let v = stack.pop().expect("compiled program is balanced");
                    stack.push(-v);
                }
                Op::Call(f) => {
                    let v = stack.pop().expect("compiled program is balanced");
                    stack.push(f.apply(v)?);
                }
                Op::Bin(op) => {
                    let r = stack.pop().expect("compiled program is balanced");
                    let l = stack.pop().expect("compiled program is balanced");
                    stack.push(op.apply(l, r)?);
                }
            }
        }
        let v = stack.pop().expect("compiled program is balanced");
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalFailure::NonFinite)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Sym(c) => write!(f, "'{c}'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v = text.parse::<f64>().map_err(|_| ParseError {
                position: start,
                expected: vec!["number".into()],
                found: format!("'{text}'"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^();".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or(c);
            return Err(ParseError {
                position: i,
                expected: vec!["operand".into(), "operator".into()],
                found: format!("'{ch}'"),
            });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

const OPERAND: &[&str] = &["number", "'x'", "'b0'..'b9'", "function", "'('", "'-'"];

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    term: usize,
    arity_error: Option<ModelError>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError {
            position: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.mul()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn mul(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error(&["')'", "operator"]));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                if name == "x" {
                    self.pos += 1;
                    return Ok(Expr::X);
                }
                if let Some(idx) = b_index(&name) {
                    self.pos += 1;
                    if idx >= MAX_B && self.arity_error.is_none() {
                        self.arity_error = Some(ModelError::Arity {
                            term: self.term,
                            index: idx,
                        });
                    }
                    return Ok(Expr::B(idx));
                }
                if let Some(f) = Func::from_name(&name) {
                    self.pos += 1;
                    if !self.eat('(') {
                        return Err(self.error(&["'('"]));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.error(&["')'", "operator"]));
                    }
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                Err(self.error(OPERAND))
            }
            _ => Err(self.error(OPERAND)),
        }
    }
}

fn b_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('b')?;
    if digits.is_empty() || !digits.bytes().all(|d| d.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn parse_terms(src: &str) -> Result<Vec<Term>, ModelError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        term: 0,
        arity_error: None,
    };
    let mut terms = Vec::new();
    loop {
        let start = p.offset();
        let expr = p.expr()?;
        let end = p.offset();
        terms.push(Term::new(src[start..end].trim(), expr));
        match p.peek() {
            Tok::End => break,
            Tok::Sym(';') => {
                p.pos += 1;
                p.term += 1;
            }
            _ => return Err(p.error(&["operator", "';'", "end of input"]).into()),
        }
    }
    if let Some(e) = p.arity_error {
        return Err(e);
    }
    Ok(terms)
}

/// Parses a single expression (no `;`).
pub fn parse_term(src: &str) -> Result<Term, ModelError> {
    let mut terms = parse_terms(src)?;
    if terms.len() != 1 {
        let position = src.find(';').unwrap_or(0);
        return Err(ParseError {
            position,
            expected: vec!["operator".into(), "end of input".into()],
            found: "';'".into(),
        }
        .into());
    }
    Ok(terms.remove(0))
}

/// Parses `term; term; ...` into a basis with one function per term.
pub fn parse_model(src: &str) -> Result<ModelBasis, ModelError> {
    let terms = parse_terms(src)?;
    let functions = terms
        .into_iter()
        .map(|t| {
            let label = t.source().to_string();
            let arity = t.arity_b();
            BasisFunction::new(label, arity, move |b, x| t.eval(b, x))
        })
        .collect();
    Ok(ModelBasis::new(src.trim(), functions))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_at(src: &str) -> usize {
        match parse_model(src) {
            Err(ModelError::Parse(e)) => e.position,
            other => panic!("expected parse error for {src:?}, got {other:?}"),
        }
    }

    #[test]
    fn trailing_operator_points_past_the_end() {
        assert_eq!(err_at("x +"), 3);
        match parse_model("x +") {
            Err(ModelError::Parse(e)) => {
                assert!(e.expected.contains(&"'x'".to_string()));
                assert_eq!(e.found, "end of input");
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn malformed_inputs() {
        assert_eq!(err_at(""), 0);
        assert_eq!(err_at("x;;x"), 2);
        assert_eq!(err_at("exp x"), 4);
        assert_eq!(err_at("(x"), 2);
        assert_eq!(err_at("x $ 2"), 2);
        assert_eq!(err_at("y*x"), 0);
        assert_eq!(err_at("x x"), 2);
    }

    #[test]
    fn b_index_cap() {
        assert_eq!(
            parse_model("x; exp(b10*x)").unwrap_err(),
            ModelError::Arity { term: 1, index: 10 }
        );
        assert_eq!(parse_model("exp(b9*x)").unwrap().n_b(), 10);
    }

    #[test]
    fn arity_and_constants() {
        let m = parse_model("1; x; b3*x").unwrap();
        assert_eq!(m.n_a(), 3);
        assert_eq!(m.n_b(), 4);
        assert_eq!(m.functions()[0].arity_b(), 0);
        assert_eq!(m.eval_term(0, &[0.0; 4], 5.0).unwrap(), 1.0);
    }

    #[test]
    fn precedence() {
        let t = parse_term("-x^2").unwrap();
        assert_eq!(t.eval(&[], 3.0).unwrap(), -9.0);
        let t = parse_term("2^3^2").unwrap();
        assert_eq!(t.eval(&[], 0.0).unwrap(), 512.0);
        let t = parse_term("1 - 2 - 3").unwrap();
        assert_eq!(t.eval(&[], 0.0).unwrap(), -4.0);
        let t = parse_term("8/2/2").unwrap();
        assert_eq!(t.eval(&[], 0.0).unwrap(), 2.0);
        let t = parse_term("2*x+1e-1*b0").unwrap();
        assert_eq!(t.eval(&[10.0], 1.5).unwrap(), 2.0 * 1.5 + 1e-1 * 10.0);
        let t = parse_term("2^-1").unwrap();
        assert_eq!(t.eval(&[], 0.0).unwrap(), 0.5);
    }

    #[test]
    fn evaluation_failures() {
        let t = parse_term("1/(x+b0)").unwrap();
        assert_eq!(t.eval(&[-0.5], 0.5), Err(EvalFailure::Pole));
        let t = parse_term("log(x)").unwrap();
        assert_eq!(t.eval(&[], -1.0), Err(EvalFailure::Domain));
        let t = parse_term("exp(x)").unwrap();
        assert_eq!(t.eval(&[], 1e4), Err(EvalFailure::NonFinite));
    }

    #[test]
    fn display_reparses_to_same_tree() {
        let t = parse_term("sin(b1*x)^2 - 3/(x+cos(b0))").unwrap();
        let again = parse_term(&t.expr().to_string()).unwrap();
        assert_eq!(again.expr(), t.expr());
    }
}
