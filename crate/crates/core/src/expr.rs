//! Target expressions: `x`, numeric literals, `+ - * /`, integer powers,
//! `abs(..)` and `exp(..)`, with the usual precedence.
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' '-'? integer)?
//! primary := 'x' | number | '(' sum ')' | ('abs' | 'exp') '(' sum ')'
//! ```
//!
//! A minus sign directly in front of a literal folds into it, so `-5` is
//! the literal −5. [`Expr`]'s `Display` prints the canonical form, which
//! parses back to the same tree.

use std::fmt;

use thiserror::Error;

/// Divisors this close to zero are treated as a division by zero.
pub const DIVISION_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    X,
    Num(f64),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Abs(Box<Expr>),
    Exp(Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("syntax error at byte {pos}: expected {}, found {found}", expected.join(" or "))]
pub struct SyntaxError {
    pub pos: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by {divisor:e} at x = {x}")]
    DivisionByZero { x: f64, divisor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    X,
    Num(f64, bool),
    Ident(String),
    Op(char),
    End,
}

struct Parser<'s> {
    src: &'s str,
    pos: usize,
    tok: Tok,
    tok_pos: usize,
}

impl<'s> Parser<'s> {
    fn new(src: &'s str) -> Result<Self, SyntaxError> {
        let mut p = Parser {
            src,
            pos: 0,
            tok: Tok::End,
            tok_pos: 0,
        };
        p.bump()?;
        Ok(p)
    }

    fn bump(&mut self) -> Result<(), SyntaxError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_pos = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            self.tok = Tok::End;
            return Ok(());
        };
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            let mut integral = true;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                integral &= bytes[self.pos] != b'.';
                self.pos += 1;
            }
            if self.pos < bytes.len() && matches!(bytes[self.pos], b'e' | b'E') {
                let mut q = self.pos + 1;
                if q < bytes.len() && matches!(bytes[q], b'+' | b'-') {
                    q += 1;
                }
                if q < bytes.len() && bytes[q].is_ascii_digit() {
                    integral = false;
                    self.pos = q;
                    while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                }
            }
            let text = &self.src[start..self.pos];
            let v: f64 = text.parse().map_err(|_| SyntaxError {
                pos: start,
                expected: vec!["number"],
                found: format!("{text:?}"),
            })?;
            self.tok = Tok::Num(v, integral);
        } else if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            let word = &self.src[start..self.pos];
            self.tok = if word == "x" {
                Tok::X
            } else {
                Tok::Ident(word.to_string())
            };
        } else if b"+-*/^()".contains(&c) {
            self.pos += 1;
            self.tok = Tok::Op(c as char);
        } else {
            let ch = self.src[self.pos..].chars().next().unwrap();
            return Err(SyntaxError {
                pos: self.pos,
                expected: vec!["token"],
                found: format!("{ch:?}"),
            });
        }
        Ok(())
    }

    fn fail<T>(&self, expected: Vec<&'static str>) -> Result<T, SyntaxError> {
        let found = match &self.tok {
            Tok::End => "end of input".to_string(),
            _ => format!("{:?}", self.src[self.tok_pos..self.pos].to_string()),
        };
        Err(SyntaxError {
            pos: self.tok_pos,
            expected,
            found,
        })
    }

    fn expect(&mut self, op: char, name: &'static str) -> Result<(), SyntaxError> {
        if self.tok == Tok::Op(op) {
            self.bump()
        } else {
            self.fail(vec![name])
        }
    }

    fn sum(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.product()?;
        loop {
            match self.tok {
                Tok::Op('+') => {
                    self.bump()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Tok::Op('-') => {
                    self.bump()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            match self.tok {
                Tok::Op('*') => {
                    self.bump()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Op('/') => {
                    self.bump()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            return Ok(match self.unary()? {
                Expr::Num(v) => Expr::Num(-v),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.primary()?;
        if self.tok != Tok::Op('^') {
            return Ok(base);
        }
        self.bump()?;
        let negative = self.tok == Tok::Op('-');
        if negative {
            self.bump()?;
        }
        match self.tok {
            Tok::Num(v, true) if v <= i32::MAX as f64 => {
                self.bump()?;
                let k = v as i32;
                Ok(Expr::Pow(Box::new(base), if negative { -k } else { k }))
            }
            _ => self.fail(vec!["integer exponent"]),
        }
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.tok.clone() {
            Tok::X => {
                self.bump()?;
                Ok(Expr::X)
            }
            Tok::Num(v, _) => {
                self.bump()?;
                Ok(Expr::Num(v))
            }
            Tok::Op('(') => {
                self.bump()?;
                let e = self.sum()?;
                self.expect(')', "')'")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "abs" || name == "exp" => {
                self.bump()?;
                self.expect('(', "'('")?;
                let e = Box::new(self.sum()?);
                self.expect(')', "')'")?;
                Ok(if name == "abs" { Expr::Abs(e) } else { Expr::Exp(e) })
            }
            _ => self.fail(vec!["'x'", "number", "'('", "'abs'", "'exp'"]),
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser::new(text)?;
    if p.tok == Tok::End {
        return p.fail(vec!["expression"]);
    }
    let e = p.sum()?;
    if p.tok != Tok::End {
        return p.fail(vec!["operator", "end of input"]);
    }
    Ok(e)
}

impl Expr {
    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::X => x,
            Expr::Num(v) => *v,
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Div(a, b) => {
                let d = b.eval(x)?;
                if d.abs() <= DIVISION_FLOOR {
                    return Err(EvalError::DivisionByZero { x, divisor: d });
                }
                a.eval(x)? / d
            }
            Expr::Pow(e, k) => {
                let b = e.eval(x)?;
                if *k < 0 && b.abs() <= DIVISION_FLOOR {
                    return Err(EvalError::DivisionByZero { x, divisor: b });
                }
                b.powi(*k)
            }
            Expr::Abs(e) => e.eval(x)?.abs(),
            Expr::Exp(e) => e.eval(x)?.exp(),
        })
    }

    /// Evaluation as a plain function; a division by zero yields NaN,
    /// which every consumer rejects as a non-finite sample.
    pub fn eval_or_nan(&self, x: f64) -> f64 {
        self.eval(x).unwrap_or(f64::NAN)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "(")?;
            self.write_at(f, 0)?;
            return write!(f, ")");
        }
        let bin = |f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr, p: u8| {
            a.write_at(f, p)?;
            write!(f, " {op} ")?;
            b.write_at(f, p + 1)
        };
        match self {
            Expr::X => write!(f, "x"),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.write_at(f, 3)
            }
            Expr::Add(a, b) => bin(f, a, "+", b, 1),
            Expr::Sub(a, b) => bin(f, a, "-", b, 1),
            Expr::Mul(a, b) => bin(f, a, "*", b, 2),
            Expr::Div(a, b) => bin(f, a, "/", b, 2),
            Expr::Pow(e, k) => {
                e.write_at(f, 5)?;
                write!(f, "^{k}")
            }
            Expr::Abs(e) => {
                write!(f, "abs(")?;
                e.write_at(f, 0)?;
                write!(f, ")")
            }
            Expr::Exp(e) => {
                write!(f, "exp(")?;
                e.write_at(f, 0)?;
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}
