//! Convex-polynomials: polynomials whose coefficients lie on the
//! probability simplex.
//!
//! The set is closed under multiplication and composition, maps `[-1, 1]`
//! into itself and `(0, inf)` into `(0, inf)`, and satisfies
//! `|p(x)| <= p(|x|)`. Every constructor here returns a value in canonical
//! form: nonnegative coefficients, unit mass, no trailing zeros.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logspace::{ln_factorial, signed_log_pow, EvalResult, SignedLogSum};

/// Coefficients above `-SIMPLEX_EPS` are accepted and clipped to zero.
pub const SIMPLEX_EPS: f64 = 1e-12;
/// Allowed distance of the coefficient sum from one.
pub const MASS_EPS: f64 = 1e-10;
/// `N ln|x|` beyond which evaluation switches to the log domain.
pub const LOG_DOMAIN_THRESHOLD: f64 = 700.0;
pub const DEFAULT_DEGREE_CAP: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("empty coefficient sequence")]
    EmptyInput,
    #[error("coefficient {index} is not finite")]
    NonFinite { index: usize },
    #[error("coefficient {index} = {value} is negative")]
    NegativeCoefficient { index: usize, value: f64 },
    #[error("coefficient mass {mass} is not positive")]
    ZeroMass { mass: f64 },
    #[error("coefficient mass {mass} differs from 1")]
    NotNormalized { mass: f64 },
    #[error("composition degree {degree} exceeds cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },
}

/// What `make_convex` does with a sequence whose mass is not exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassPolicy {
    Reject,
    Renormalize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoeffsRepr", into = "CoeffsRepr")]
pub struct ConvexPolynomial {
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CoeffsRepr {
    coeffs: Vec<f64>,
}

impl TryFrom<CoeffsRepr> for ConvexPolynomial {
    type Error = PolyError;
    fn try_from(r: CoeffsRepr) -> Result<Self, PolyError> {
        make_convex(&r.coeffs, MassPolicy::Reject)
    }
}

impl From<ConvexPolynomial> for CoeffsRepr {
    fn from(p: ConvexPolynomial) -> Self {
        CoeffsRepr { coeffs: p.coeffs }
    }
}

/// Validates `raw` as a point of the probability simplex.
pub fn make_convex(raw: &[f64], policy: MassPolicy) -> Result<ConvexPolynomial, PolyError> {
    if raw.is_empty() {
        return Err(PolyError::EmptyInput);
    }
    let mut coeffs = Vec::with_capacity(raw.len());
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() {
            return Err(PolyError::NonFinite { index });
        }
        if value < -SIMPLEX_EPS {
            return Err(PolyError::NegativeCoefficient { index, value });
        }
        coeffs.push(value.max(0.0));
    }
    let mass: f64 = coeffs.iter().sum();
    match policy {
        MassPolicy::Reject => {
            if (mass - 1.0).abs() > MASS_EPS {
                return Err(PolyError::NotNormalized { mass });
            }
        }
        MassPolicy::Renormalize => {
            if mass <= 0.0 || !mass.is_finite() {
                return Err(PolyError::ZeroMass { mass });
            }
            if mass != 1.0 {
                coeffs.iter_mut().for_each(|c| *c /= mass);
            }
        }
    }
    while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
        coeffs.pop();
    }
    Ok(ConvexPolynomial { coeffs })
}

impl ConvexPolynomial {
    /// The constant polynomial 1.
    pub fn one() -> Self {
        ConvexPolynomial { coeffs: vec![1.0] }
    }

    /// The monomial `x^k`.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        ConvexPolynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn evaluate(&self, x: f64) -> EvalResult {
        evaluate(self, x)
    }

    /// Plain `f64` value; infinite when the value overflows.
    pub fn value(&self, x: f64) -> f64 {
        evaluate(self, x).value
    }
}

/// Horner's scheme on the raw coefficients.
pub fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Log-domain evaluation over the monomial terms.
pub fn evaluate_log_domain(p: &ConvexPolynomial, x: f64) -> EvalResult {
    let mut acc = SignedLogSum::new();
    for (k, &c) in p.coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let (sign, log) = signed_log_pow(x, k);
        acc.push(sign, c.ln() + log);
    }
    acc.finish()
}

pub fn evaluate(p: &ConvexPolynomial, x: f64) -> EvalResult {
    let n = p.degree() as f64;
    if x.abs() > 1.0 && n * x.abs().ln() > LOG_DOMAIN_THRESHOLD {
        evaluate_log_domain(p, x)
    } else {
        EvalResult::from_value(horner(&p.coeffs, x))
    }
}

/// Coefficient convolution.
pub fn multiply(p: &ConvexPolynomial, q: &ConvexPolynomial) -> ConvexPolynomial {
    let out = convolve(&p.coeffs, &q.coeffs);
    make_convex(&out, MassPolicy::Renormalize).expect("product of simplex points is a simplex point")
}

pub(crate) fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn compose(p: &ConvexPolynomial, q: &ConvexPolynomial) -> Result<ConvexPolynomial, PolyError> {
    compose_with_cap(p, q, DEFAULT_DEGREE_CAP)
}

/// `p(q(x))` via Horner's scheme over polynomials, so every intermediate
/// stays a nonnegative sequence.
pub fn compose_with_cap(p: &ConvexPolynomial, q: &ConvexPolynomial, cap: usize) -> Result<ConvexPolynomial, PolyError> {
    let degree = p.degree() * q.degree();
    if degree > cap {
        return Err(PolyError::DegreeOverflow { degree, cap });
    }
    let mut acc = vec![*p.coeffs.last().unwrap()];
    for &c in p.coeffs.iter().rev().skip(1) {
        acc = convolve(&acc, &q.coeffs);
        acc[0] += c;
    }
    make_convex(&acc, MassPolicy::Renormalize)
}

/// `p^{(k)}(0) = k! a_k`. Returned in log form because `k!` overflows past 170.
pub fn derivative_at_zero(p: &ConvexPolynomial, k: usize) -> EvalResult {
    match p.coeffs.get(k) {
        Some(&c) if c > 0.0 && k <= 170 => EvalResult::from_value(c * (2..=k).fold(1.0, |f, i| f * i as f64)),
        Some(&c) if c > 0.0 => EvalResult::from_sign_log(1, c.ln() + ln_factorial(k)),
        _ => EvalResult::zero(),
    }
}
