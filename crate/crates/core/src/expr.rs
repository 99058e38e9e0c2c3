//! Scalar expression language for the nonlinear functions of a model.
//!
//! Grammar (highest binding first):
//!
//! ```text
//! atom    := number | pi | xK | const | func '(' expr ')' | '(' expr ')'
//! power   := atom ('^' exponent)?          exponent: nonnegative integer, right-assoc
//! unary   := ('-' | '+') unary | power
//! term    := unary (('*' | '/') unary)*
//! expr    := term (('+' | '-') term)*
//! ```
//!
//! Functions: `sin cos tan exp sqrt abs log`. Variables are `x1..xn`; they are
//! stored zero-based inside the tree.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Sqrt,
    Abs,
    Log,
}

impl UnaryOp {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "exp" => UnaryOp::Exp,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            "log" => UnaryOp::Log,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
            UnaryOp::Log => "log",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            UnaryOp::Neg => -v,
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
            UnaryOp::Tan => v.tan(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Sqrt => v.sqrt(),
            UnaryOp::Abs => v.abs(),
            UnaryOp::Log => v.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }
}

/// Parsed expression tree. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Pi,
    /// Zero-based state index (`x1` is `Var(0)`).
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: expected {expected}, found {found}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("non-finite value {value} produced by `{node}`")]
    NonFinite { node: String, value: f64 },
    #[error("expression references x{} but the point has {len} coordinates", .index + 1)]
    MissingVariable { index: usize, len: usize },
}

impl Expr {
    pub fn zero() -> Self {
        Expr::Const(0.0)
    }

    /// Evaluate in strict IEEE double arithmetic. The first node whose value is
    /// not finite is reported.
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(i) => *x.get(*i).ok_or(EvalError::MissingVariable {
                index: *i,
                len: x.len(),
            })?,
            Expr::Unary(op, a) => op.apply(a.eval(x)?),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x)?, b.eval(x)?);
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                }
            }
            Expr::Pow(a, k) => a.eval(x)?.powi(*k as i32),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                node: self.to_string(),
                value: v,
            })
        }
    }

    /// Largest zero-based variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) | Expr::Pi => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Pow(a, k) => match **a {
                Expr::Var(_) | Expr::Pi => write!(f, "{a}^{k}"),
                Expr::Const(c) if c >= 0.0 => write!(f, "{a}^{k}"),
                _ => write!(f, "({a})^{k}"),
            },
        }
    }
}

/// Default central-difference step for a coordinate value.
pub fn default_step(xk: f64) -> f64 {
    1e-6 * xk.abs().max(1.0)
}

/// Central difference `(f(x + h e_k) - f(x - h e_k)) / 2h` of an arbitrary
/// scalar function along zero-based axis `k`.
pub fn central_difference<F, E>(f: F, x: &[f64], k: usize, h: f64) -> Result<f64, E>
where
    F: Fn(&[f64]) -> Result<f64, E>,
{
    let mut p = x.to_vec();
    p[k] = x[k] + h;
    let fp = f(&p)?;
    p[k] = x[k] - h;
    let fm = f(&p)?;
    Ok((fp - fm) / (2.0 * h))
}

/// Numerical partial derivative of `e` along zero-based axis `k`.
pub fn partial_derivative(e: &Expr, x: &[f64], k: usize, h: f64) -> Result<f64, EvalError> {
    central_difference(|p| e.eval(p), x, k, h)
}

pub fn parse_expr(source: &str, n_vars: usize) -> Result<Expr, ParseError> {
    parse_expr_with(source, n_vars, &BTreeMap::new())
}

/// Parse with a table of named constants, which are substituted as literals.
pub fn parse_expr_with(
    source: &str,
    n_vars: usize,
    constants: &BTreeMap<String, f64>,
) -> Result<Expr, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        n_vars,
        constants,
        end: source.len(),
    };
    if p.tokens.is_empty() {
        return Err(ParseError {
            offset: 0,
            expected: "expression".into(),
            found: "end of input".into(),
        });
    }
    let e = p.expr()?;
    match p.peek() {
        None => Ok(e),
        Some(t) => Err(p.error_at(t, "operator or end of input")),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(_, s) => write!(f, "number `{s}`"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Op(c) => write!(f, "`{c}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((start, Tok::Op(c as char)));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
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
                let v: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    expected: "number".into(),
                    found: format!("`{text}`"),
                })?;
                if !v.is_finite() {
                    return Err(ParseError {
                        offset: start,
                        expected: "finite number".into(),
                        found: format!("`{text}`"),
                    });
                }
                out.push((start, Tok::Num(v, text.to_string())));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    expected: "expression token".into(),
                    found: format!("`{ch}`"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    n_vars: usize,
    constants: &'a BTreeMap<String, f64>,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&(usize, Tok)> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<(usize, Tok)> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &(usize, Tok), expected: &str) -> ParseError {
        ParseError {
            offset: t.0,
            expected: expected.into(),
            found: t.1.to_string(),
        }
    }

    fn error_eof(&self, expected: &str) -> ParseError {
        ParseError {
            offset: self.end,
            expected: expected.into(),
            found: "end of input".into(),
        }
    }

    fn expect(&mut self, want: Tok, desc: &str) -> Result<(), ParseError> {
        match self.next() {
            Some((_, ref t)) if *t == want => Ok(()),
            Some(t) => Err(self.error_at(&t, desc)),
            None => Err(self.error_eof(desc)),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some((_, Tok::Op(c @ ('+' | '-')))) = self.peek() {
            let op = if *c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some((_, Tok::Op(c @ ('*' | '/')))) = self.peek() {
            let op = if *c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some((_, Tok::Op('-'))) => {
                self.pos += 1;
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
            }
            Some((_, Tok::Op('+'))) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some((_, Tok::Op('^'))) = self.peek() {
            self.pos += 1;
            let k = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<u32, ParseError> {
        const WANT: &str = "nonnegative integer exponent";
        let t = self.next().ok_or_else(|| self.error_eof(WANT))?;
        let k = match &t.1 {
            Tok::Num(v, _) if v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64 => *v as u32,
            Tok::LParen => {
                let k = self.exponent()?;
                self.expect(Tok::RParen, "`)`")?;
                k
            }
            _ => return Err(self.error_at(&t, WANT)),
        };
        if let Some((_, Tok::Op('^'))) = self.peek() {
            let at = self.peek().cloned().unwrap();
            self.pos += 1;
            let inner = self.exponent()?;
            return k
                .checked_pow(inner)
                .ok_or_else(|| self.error_at(&at, "exponent that fits in 32 bits"));
        }
        Ok(k)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.next().ok_or_else(|| self.error_eof("operand"))?;
        match &t.1 {
            Tok::Num(v, _) => Ok(Expr::Const(*v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => self.identifier(&t, name),
            _ => Err(self.error_at(&t, "operand")),
        }
    }

    fn identifier(&mut self, t: &(usize, Tok), name: &str) -> Result<Expr, ParseError> {
        if let Some(op) = UnaryOp::from_name(name) {
            self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
            let arg = self.expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Expr::Unary(op, Box::new(arg)));
        }
        if name == "pi" {
            return Ok(Expr::Pi);
        }
        if let Some(&v) = self.constants.get(name) {
            return Ok(Expr::Const(v));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                return match digits.parse::<usize>() {
                    Ok(k) if (1..=self.n_vars).contains(&k) => Ok(Expr::Var(k - 1)),
                    _ => Err(self.error_at(t, &format!("state variable x1..x{}", self.n_vars))),
                };
            }
        }
        Err(self.error_at(t, "known variable, constant or function"))
    }
}
