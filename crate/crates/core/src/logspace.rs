//! Sign-tracked log-domain arithmetic.
//!
//! Sums of terms whose magnitudes exceed double range (large powers of
//! `|x| > 1`) are accumulated as separate positive and negative
//! log-sum-exp streams and only exponentiated at the end.

use serde::{Deserialize, Serialize};

/// Largest natural log whose exponential is still a finite `f64`.
pub const LN_F64_MAX: f64 = 709.782_712_893_384;

/// Result of an evaluation that may exceed double range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Direct value. Infinite (with the right sign) iff `overflowed`.
    pub value: f64,
    /// `ln |value|`, finite whenever the value is nonzero.
    pub magnitude_log: f64,
    /// -1, 0 or +1.
    pub sign: i8,
    pub overflowed: bool,
}

impl EvalResult {
    pub fn from_value(value: f64) -> Self {
        let sign = if value > 0.0 {
            1
        } else if value < 0.0 {
            -1
        } else {
            0
        };
        EvalResult {
            value,
            magnitude_log: value.abs().ln(),
            sign,
            overflowed: false,
        }
    }

    /// Builds a result from a sign and `ln |value|`, exponentiating when the
    /// magnitude fits in a double.
    pub fn from_sign_log(sign: i8, magnitude_log: f64) -> Self {
        if sign == 0 || magnitude_log == f64::NEG_INFINITY {
            return EvalResult::from_value(0.0);
        }
        let direct = magnitude_log.exp();
        if direct.is_finite() {
            EvalResult {
                value: f64::from(sign) * direct,
                magnitude_log,
                sign,
                overflowed: false,
            }
        } else {
            EvalResult {
                value: f64::from(sign) * f64::INFINITY,
                magnitude_log,
                sign,
                overflowed: true,
            }
        }
    }

    pub fn zero() -> Self {
        EvalResult::from_value(0.0)
    }

    /// `self / other` evaluated in the log domain.
    pub fn ratio_log(&self, other: &EvalResult) -> f64 {
        self.magnitude_log - other.magnitude_log
    }

    pub fn neg(self) -> Self {
        EvalResult {
            value: -self.value,
            sign: -self.sign,
            ..self
        }
    }
}

/// Streaming log-sum-exp over one sign class.
#[derive(Debug, Clone, Copy)]
struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl LogSumExp {
    const EMPTY: LogSumExp = LogSumExp {
        max: f64::NEG_INFINITY,
        scaled: 0.0,
    };

    fn push(&mut self, log: f64) {
        if log == f64::NEG_INFINITY {
            return;
        }
        if log <= self.max {
            self.scaled += (log - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - log).exp() + 1.0;
            self.max = log;
        }
    }

    fn log(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Accumulates signed terms given as `(sign, ln |term|)`.
#[derive(Debug, Clone, Copy)]
pub struct SignedLogSum {
    pos: LogSumExp,
    neg: LogSumExp,
}

impl Default for SignedLogSum {
    fn default() -> Self {
        SignedLogSum::new()
    }
}

impl SignedLogSum {
    pub fn new() -> Self {
        SignedLogSum {
            pos: LogSumExp::EMPTY,
            neg: LogSumExp::EMPTY,
        }
    }

    pub fn push(&mut self, sign: i8, log_magnitude: f64) {
        match sign {
            1 => self.pos.push(log_magnitude),
            -1 => self.neg.push(log_magnitude),
            _ => {}
        }
    }

    pub fn push_value(&mut self, value: f64) {
        if value > 0.0 {
            self.pos.push(value.ln());
        } else if value < 0.0 {
            self.neg.push((-value).ln());
        }
    }

    pub fn push_eval(&mut self, term: &EvalResult) {
        self.push(term.sign, term.magnitude_log);
    }

    pub fn finish(&self) -> EvalResult {
        let lp = self.pos.log();
        let ln = self.neg.log();
        if lp == ln {
            return EvalResult::zero();
        }
        let (sign, hi, lo) = if lp > ln { (1, lp, ln) } else { (-1, ln, lp) };
        let mag = hi + (-(lo - hi).exp()).ln_1p();
        EvalResult::from_sign_log(sign, mag)
    }
}

/// Sign and log-magnitude of `x^n`.
pub fn signed_log_pow(x: f64, n: usize) -> (i8, f64) {
    if n == 0 {
        return (1, 0.0);
    }
    if x == 0.0 {
        return (0, f64::NEG_INFINITY);
    }
    let sign = if x < 0.0 && n % 2 == 1 { -1 } else { 1 };
    (sign, n as f64 * x.abs().ln())
}

/// `ln(k!)` by direct summation; exact enough for the degrees used here.
pub fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancels_to_small_difference() {
        let mut acc = SignedLogSum::new();
        acc.push_value(8.0 / 3.0);
        acc.push_value(-1.0 / 3.0);
        let r = acc.finish();
        assert!((r.value - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.sign, 1);
    }

    #[test]
    fn overflow_is_encoded() {
        let mut acc = SignedLogSum::new();
        acc.push(-1, 800.0);
        acc.push(-1, 800.0);
        let r = acc.finish();
        assert!(r.overflowed);
        assert_eq!(r.sign, -1);
        assert!((r.magnitude_log - (800.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(r.value, f64::NEG_INFINITY);
    }

    #[test]
    fn exact_cancellation_is_zero() {
        let mut acc = SignedLogSum::new();
        acc.push(1, 3.0);
        acc.push(-1, 3.0);
        assert_eq!(acc.finish().sign, 0);
    }

    #[test]
    fn pow_sign() {
        assert_eq!(signed_log_pow(-2.0, 3).0, -1);
        assert_eq!(signed_log_pow(-2.0, 4).0, 1);
        assert_eq!(signed_log_pow(0.0, 0), (1, 0.0));
    }
}
