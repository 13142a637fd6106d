//! Convex-power series `Σ c_n x^n` with `c_n >= 0`, `Σ c_n = 1`.
//!
//! Series are coefficient rules with an analytic tail bound; combinations
//! stay lazy and carry composed bounds. Truncation folds the tail into the
//! constant term, so it lands exactly on the simplex.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{best_l2_from, ApproxError, ApproximationResult, QuadraticModel};
use crate::logspace::ln_factorial;
use crate::polycore::{convolve, make_convex, ConvexPolynomial, MassPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("resolvent parameter a = {0} must exceed 1")]
    BadParameter(f64),
    #[error("weights must be nonnegative and sum to 1 (got sum {0})")]
    BadWeights(f64),
    #[error("composition {0} is not supported")]
    UnsupportedComposition(&'static str),
    #[error("sample x = {0} lies outside [-1, inf)")]
    BadDomain(f64),
    #[error("need at least {needed} distinct sample points, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample ({0}, {1}) is not finite")]
    NonFiniteSample(f64, f64),
    #[error(transparent)]
    Fit(#[from] ApproxError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexPowerSeries {
    /// `e^{x-1}`: `c_n = e^{-1} / n!`.
    Exp,
    /// `(1 - a) / (x - a)`: `c_n = (a - 1) / a^{n+1}`, `a > 1`.
    Resolvent(f64),
    /// A convex-polynomial viewed as a finite series.
    Polynomial(ConvexPolynomial),
    /// `Σ w_i s_i` with `w` on the simplex.
    Combination(Vec<(f64, ConvexPowerSeries)>),
    Product(Box<ConvexPowerSeries>, Box<ConvexPowerSeries>),
    /// `p ∘ s = Σ p_k s^k`.
    PolyOfSeries(ConvexPolynomial, Box<ConvexPowerSeries>),
    /// `s ∘ p` for `p(0) = 0`, where each output coefficient is a finite sum.
    SeriesOfPoly(Box<ConvexPowerSeries>, ConvexPolynomial),
}

pub fn exp_series() -> ConvexPowerSeries {
    ConvexPowerSeries::Exp
}

pub fn resolvent_series(a: f64) -> Result<ConvexPowerSeries, SeriesError> {
    if !(a > 1.0) || !a.is_finite() {
        return Err(SeriesError::BadParameter(a));
    }
    Ok(ConvexPowerSeries::Resolvent(a))
}

impl ConvexPowerSeries {
    /// `c_0, ..., c_n`.
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            ConvexPowerSeries::Exp => (0..=n).map(|k| (-1.0 - ln_factorial(k)).exp()).collect(),
            ConvexPowerSeries::Resolvent(a) => {
                let lead = (a - 1.0) / a;
                (0..=n).map(|k| lead * a.powi(-(k as i32))).collect()
            }
            ConvexPowerSeries::Polynomial(p) => {
                let mut c = p.coeffs().to_vec();
                c.resize(n + 1, 0.0);
                c
            }
            ConvexPowerSeries::Combination(parts) => {
                let mut c = vec![0.0; n + 1];
                for (w, s) in parts {
                    for (ci, si) in c.iter_mut().zip(s.coefficients(n)) {
                        *ci += w * si;
                    }
                }
                c
            }
            ConvexPowerSeries::Product(s, t) => {
                let mut c = convolve(&s.coefficients(n), &t.coefficients(n));
                c.truncate(n + 1);
                c
            }
            ConvexPowerSeries::PolyOfSeries(p, s) => {
                let base = s.coefficients(n);
                let mut power = vec![1.0];
                let mut c = vec![0.0; n + 1];
                for (k, &pk) in p.coeffs().iter().enumerate() {
                    if k > 0 {
                        power = convolve(&power, &base);
                        power.truncate(n + 1);
                    }
                    for (ci, v) in c.iter_mut().zip(&power) {
                        *ci += pk * v;
                    }
                }
                c
            }
            ConvexPowerSeries::SeriesOfPoly(s, p) => {
                // p(0) = 0, so p^k starts at x^k and only k <= n matters.
                let outer = s.coefficients(n);
                let mut power = vec![1.0];
                let mut c = vec![0.0; n + 1];
                for (k, &sk) in outer.iter().enumerate() {
                    if k > 0 {
                        power = convolve(&power, p.coeffs());
                        power.truncate(n + 1);
                    }
                    for (ci, v) in c.iter_mut().zip(&power) {
                        *ci += sk * v;
                    }
                }
                c
            }
        }
    }

    pub fn coeff(&self, n: usize) -> f64 {
        self.coefficients(n)[n]
    }

    /// `Σ_{k <= n} c_k`.
    pub fn partial_mass(&self, n: usize) -> f64 {
        self.coefficients(n).iter().sum()
    }

    /// Upper bound on `1 − partial_mass(n)`.
    pub fn tail_bound(&self, n: usize) -> f64 {
        match self {
            ConvexPowerSeries::Exp => {
                if n == 0 {
                    1.0
                } else {
                    (-1.0 - ln_factorial(n) - (n as f64).ln()).exp()
                }
            }
            ConvexPowerSeries::Resolvent(a) => a.powi(-(n as i32 + 1)),
            ConvexPowerSeries::Polynomial(p) => {
                if n >= p.degree() {
                    0.0
                } else {
                    p.coeffs()[n + 1..].iter().sum()
                }
            }
            ConvexPowerSeries::Combination(parts) => parts.iter().map(|(w, s)| w * s.tail_bound(n)).sum(),
            ConvexPowerSeries::Product(s, t) => {
                // Σ_{i+j<=n} s_i t_j >= S(k) T(n-k) for every split k.
                (0..=n)
                    .map(|k| {
                        let (a, b) = (s.tail_bound(k).min(1.0), t.tail_bound(n - k).min(1.0));
                        a + b - a * b
                    })
                    .fold(1.0, f64::min)
            }
            ConvexPowerSeries::PolyOfSeries(p, s) => p
                .coeffs()
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &pk)| pk * (1.0 - (1.0 - s.tail_bound(n / k).min(1.0)).powi(k as i32)))
                .sum(),
            ConvexPowerSeries::SeriesOfPoly(s, p) => s.tail_bound(n / p.degree().max(1)),
        }
    }

    /// Partial sum `Σ_{k <= n} c_k x^k`.
    pub fn partial_sum(&self, x: f64, n: usize) -> f64 {
        self.coefficients(n).iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// How to combine series.
#[derive(Debug, Clone, PartialEq)]
pub enum Combine {
    Convex(Vec<(f64, ConvexPowerSeries)>),
    Product(ConvexPowerSeries, ConvexPowerSeries),
    Compose { outer: Composand, inner: Composand },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Composand {
    Poly(ConvexPolynomial),
    Series(ConvexPowerSeries),
}

pub fn combine(op: Combine) -> Result<ConvexPowerSeries, SeriesError> {
    match op {
        Combine::Convex(parts) => {
            let sum: f64 = parts.iter().map(|p| p.0).sum();
            if parts.is_empty() || parts.iter().any(|p| !(p.0 >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(SeriesError::BadWeights(sum));
            }
            Ok(ConvexPowerSeries::Combination(parts))
        }
        Combine::Product(s, t) => Ok(ConvexPowerSeries::Product(Box::new(s), Box::new(t))),
        Combine::Compose { outer, inner } => match (outer, inner) {
            (Composand::Poly(p), Composand::Poly(q)) => Ok(ConvexPowerSeries::Polynomial(
                crate::polycore::compose(&p, &q).map_err(|_| {
                    SeriesError::UnsupportedComposition("polynomial ∘ polynomial beyond the degree cap")
                })?,
            )),
            (Composand::Poly(p), Composand::Series(s)) => Ok(ConvexPowerSeries::PolyOfSeries(p, Box::new(s))),
            (Composand::Series(s), Composand::Poly(p)) => {
                if p.coeffs()[0] != 0.0 {
                    return Err(SeriesError::UnsupportedComposition(
                        "series ∘ polynomial with nonzero constant term",
                    ));
                }
                Ok(ConvexPowerSeries::SeriesOfPoly(Box::new(s), p))
            }
            (Composand::Series(_), Composand::Series(_)) => Err(SeriesError::UnsupportedComposition("series ∘ series")),
        },
    }
}

/// `c_0 + tail, c_1, ..., c_n` with `tail = 1 − partial_mass(n)`.
pub fn truncate_to_convex(s: &ConvexPowerSeries, n: usize) -> ConvexPolynomial {
    let mut c = s.coefficients(n);
    let tail = (1.0 - c.iter().sum::<f64>()).max(0.0);
    c[0] += tail;
    make_convex(&c, MassPolicy::Renormalize).expect("nonnegative coefficients with positive mass")
}

/// `max |p(z)| − p(c)` over a polar grid of the closed disk `|z| <= c`
/// (about `samples` points, always including the circle `|z| = c`).
pub fn modulus_bound_check(p: &ConvexPolynomial, c: f64, samples: usize) -> f64 {
    let radii = ((samples as f64).sqrt().ceil() as usize).max(2);
    let angles = samples.div_ceil(radii).max(4);
    let pc = p.value(c);
    let mut worst = f64::NEG_INFINITY;
    for i in 1..=radii {
        let r = c * i as f64 / radii as f64;
        for k in 0..angles {
            let z = Complex64::from_polar(r, std::f64::consts::TAU * k as f64 / angles as f64);
            let v = p
                .coeffs()
                .iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a);
            worst = worst.max(v.norm() - pc);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitVerdict {
    RepresentationConsistent,
    NoRepresentationConsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFit {
    pub poly: ConvexPolynomial,
    /// Root-mean-square residual over the samples.
    pub residual: f64,
    pub threshold: f64,
    pub verdict: FitVerdict,
    pub solve: ApproximationResult,
}

/// Relative residual threshold for a representation-consistent verdict.
pub const FIT_THRESHOLD: f64 = 1e-6;

/// Least-squares fit over the simplex with the empirical measure on the
/// samples (equal weights). The verdict threshold is `FIT_THRESHOLD`
/// times the RMS of the sampled values (1 if they vanish).
pub fn fit_convex_series(samples: &[(f64, f64)], n: usize) -> Result<SeriesFit, SeriesError> {
    fit_convex_series_with(samples, n, FIT_THRESHOLD, 1e-14, 200_000)
}

pub fn fit_convex_series_with(
    samples: &[(f64, f64)],
    n: usize,
    relative_threshold: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SeriesFit, SeriesError> {
    if let Some(&(x, y)) = samples.iter().find(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(SeriesError::NonFiniteSample(x, y));
    }
    if let Some(&(x, _)) = samples.iter().find(|s| s.0 < -1.0) {
        return Err(SeriesError::BadDomain(x));
    }
    let mut xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < n + 1 {
        return Err(SeriesError::TooFewSamples {
            needed: n + 1,
            got: xs.len(),
        });
    }
    let w = 1.0 / samples.len() as f64;
    let x: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let model = QuadraticModel::from_samples(&x, &vec![w; x.len()], &y, n);
    // Warm-start through doubling degrees.
    let mut warm: Option<ApproximationResult> = None;
    let mut stages: Vec<usize> = std::iter::successors(Some(1usize), |d| Some(d * 2))
        .take_while(|&d| d < n)
        .collect();
    stages.push(n);
    for d in stages {
        let r = best_l2_from(&model.truncated(d), warm.as_ref().map(|r| &r.poly), tol, max_iter)?;
        warm = Some(r);
    }
    let mut solve = warm.unwrap();
    solve.degree_cap = n;
    let scale = (y.iter().map(|v| v * v).sum::<f64>() * w).sqrt();
    let threshold = relative_threshold * if scale > 0.0 { scale } else { 1.0 };
    let residual = solve.error;
    Ok(SeriesFit {
        poly: solve.poly.clone(),
        residual,
        threshold,
        verdict: if residual <= threshold {
            FitVerdict::RepresentationConsistent
        } else {
            FitVerdict::NoRepresentationConsistent
        },
        solve,
    })
}
