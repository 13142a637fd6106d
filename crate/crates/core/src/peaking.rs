//! Peaking convex-polynomials on `[a, 0]`.
//!
//! For `a < x0 < -1` the family
//! `p(x) = (1 - α + r α x0) - r α x0 x^n + α x^{n+1}`, `r = (n+1)/n`,
//! with `n` even, has critical points only at `x0` and `0` and a strict
//! absolute maximum at `x0` over `[a, 0]`, provided `n` satisfies
//! `x0^{n+1} - (n+1) x0 + n < 0` and `α` is small. At `x0 = -1` the
//! linear polynomial `(x - a) / (1 - a)` peaks instead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polycore::{horner, make_convex, ConvexPolynomial, MassPolicy};

pub const MAX_EVEN_DEGREE: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeakError {
    #[error("x0 = {0} is not below -1")]
    NotBelowMinusOne(f64),
    #[error("no even n <= {cap} satisfies the degree condition for x0 = {x0}")]
    SearchExhausted { x0: f64, cap: usize },
    #[error("need a < x0 <= -1 (and a < -1), got a = {a}, x0 = {x0}")]
    BadEndpoints { a: f64, x0: f64 },
    #[error("step size underflows for a = {a}, x0 = {x0}, n = {n}")]
    DegenerateAlpha { a: f64, x0: f64, n: usize },
    #[error("grid size {0} is below the minimum of 100")]
    GridTooSmall(usize),
}

/// `x0^{n+1} - (n+1) x0 + n`. Large powers are reported as `-inf`, which
/// keeps the sign of the dominant term (n + 1 is odd and x0 < -1).
fn degree_condition(x0: f64, n: usize) -> f64 {
    let e = n + 1;
    if e as f64 * x0.abs().ln() > 700.0 {
        return f64::NEG_INFINITY;
    }
    x0.powi(e as i32) - e as f64 * x0 + n as f64
}

/// Smallest even `n >= 2` with `x0^{n+1} - (n+1) x0 + n < 0`.
pub fn min_even_degree(x0: f64) -> Result<usize, PeakError> {
    if !(x0 < -1.0) {
        return Err(PeakError::NotBelowMinusOne(x0));
    }
    (2..=MAX_EVEN_DEGREE)
        .step_by(2)
        .find(|&n| degree_condition(x0, n) < 0.0)
        .ok_or(PeakError::SearchExhausted {
            x0,
            cap: MAX_EVEN_DEGREE,
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakingPolynomial {
    pub poly: ConvexPolynomial,
    pub x0: f64,
    pub a: f64,
    /// Even degree parameter; 0 for the linear polynomial at `x0 = -1`.
    pub n: usize,
    /// Step size; 0 for the linear polynomial at `x0 = -1`.
    pub alpha: f64,
    pub peak_value: f64,
}

impl PeakingPolynomial {
    pub fn is_linear(&self) -> bool {
        self.n == 0
    }

    /// The three family coefficients `(c0, c_n, c_{n+1})` implied by
    /// `(n, alpha, x0)`, before any validation.
    pub fn family_coefficients(&self) -> (f64, f64, f64) {
        family_coefficients(self.n, self.alpha, self.x0)
    }
}

fn family_coefficients(n: usize, alpha: f64, x0: f64) -> (f64, f64, f64) {
    let r = (n + 1) as f64 / n as f64;
    (1.0 - alpha + r * alpha * x0, -r * alpha * x0, alpha)
}

/// Open upper bound on `alpha` that keeps the constant coefficient positive.
pub fn alpha_upper_bound(n: usize, x0: f64) -> f64 {
    let r = (n + 1) as f64 / n as f64;
    1.0 / (1.0 - r * x0)
}

/// Bound on `alpha` that keeps `p(a) > 0`: with `p(a) = 1 + alpha K`,
/// returns `-1/K` when `K < 0` and `+inf` otherwise.
fn alpha_endpoint_bound(n: usize, a: f64, x0: f64) -> f64 {
    let r = (n + 1) as f64 / n as f64;
    let log_an = n as f64 * a.abs().ln();
    if log_an < 700.0 {
        let an = a.powi(n as i32);
        let k = -1.0 + r * x0 - r * x0 * an + an * a;
        return if k >= 0.0 { f64::INFINITY } else { -1.0 / k };
    }
    // K ≈ a^n (a - r x0) once a^n dominates; a^n > 0 since n is even.
    let lead = a - r * x0;
    if lead >= 0.0 {
        f64::INFINITY
    } else {
        (-(log_an + (-lead).ln())).exp()
    }
}

/// Builds the peaking polynomial for `a < x0 <= -1` with the minimal even
/// `n` and `alpha = min(α₁, α₂) / 2`.
pub fn peaking_polynomial(a: f64, x0: f64) -> Result<PeakingPolynomial, PeakError> {
    if !(a < x0) || !(x0 <= -1.0) || !a.is_finite() {
        return Err(PeakError::BadEndpoints { a, x0 });
    }
    if x0 == -1.0 {
        let poly = make_convex(&[-a / (1.0 - a), 1.0 / (1.0 - a)], MassPolicy::Renormalize)
            .expect("a < -1 gives positive coefficients");
        let peak_value = horner(poly.coeffs(), x0);
        return Ok(PeakingPolynomial {
            poly,
            x0,
            a,
            n: 0,
            alpha: 0.0,
            peak_value,
        });
    }
    let n = min_even_degree(x0)?;
    let alpha = 0.5 * alpha_upper_bound(n, x0).min(alpha_endpoint_bound(n, a, x0));
    if !(alpha > f64::MIN_POSITIVE) {
        return Err(PeakError::DegenerateAlpha { a, x0, n });
    }
    let (c0, cn, cn1) = family_coefficients(n, alpha, x0);
    let mut coeffs = vec![0.0; n + 2];
    coeffs[0] = c0;
    coeffs[n] = cn;
    coeffs[n + 1] = cn1;
    let poly = make_convex(&coeffs, MassPolicy::Renormalize).map_err(|_| PeakError::DegenerateAlpha { a, x0, n })?;
    let peak_value = peak_value_direct(n, alpha, x0);
    Ok(PeakingPolynomial {
        poly,
        x0,
        a,
        n,
        alpha,
        peak_value,
    })
}

/// `1 - (α/n)(x0^{n+1} - (n+1) x0 + n)`.
pub fn peak_value_direct(n: usize, alpha: f64, x0: f64) -> f64 {
    1.0 - alpha / n as f64 * degree_condition(x0, n)
}

/// `1 - (α/n)(x0 - 1)^2 (x0^{n-1} + 2 x0^{n-2} + ... + (n-1) x0 + n)`.
pub fn peak_value_factored(n: usize, alpha: f64, x0: f64) -> f64 {
    let inner = (1..=n).fold(0.0, |acc, j| acc * x0 + j as f64);
    1.0 - alpha / n as f64 * (x0 - 1.0).powi(2) * inner
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: u8,
    pub name: &'static str,
    pub status: CheckStatus,
    /// Grid point (or parameter value) exhibiting a failure.
    pub witness: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakReport {
    pub grid_size: usize,
    pub checks: Vec<PropertyCheck>,
}

impl PeakReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn status(&self, property: u8) -> CheckStatus {
        self.checks
            .iter()
            .find(|c| c.property == property)
            .map_or(CheckStatus::NotApplicable, |c| c.status)
    }
}

fn check(property: u8, name: &'static str, failure: Option<(f64, String)>, ok: String) -> PropertyCheck {
    match failure {
        None => PropertyCheck {
            property,
            name,
            status: CheckStatus::Pass,
            witness: None,
            detail: ok,
        },
        Some((w, detail)) => PropertyCheck {
            property,
            name,
            status: CheckStatus::Fail,
            witness: Some(w),
            detail,
        },
    }
}

fn not_applicable(property: u8, name: &'static str) -> PropertyCheck {
    PropertyCheck {
        property,
        name,
        status: CheckStatus::NotApplicable,
        witness: None,
        detail: "linear case".into(),
    }
}

/// Sign of `v` with values inside `[-tol, tol]` reported as 0.
fn sign_tol(v: f64, tol: f64) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

/// Checks the seven peaking properties on a uniform grid over `[a, 0]`
/// (over `[a, -1]` in the linear case). The polynomial is evaluated from
/// the family parameters `(n, alpha, x0)`, so a hand-altered `alpha` is
/// seen as such.
pub fn verify_peak(pp: &PeakingPolynomial, grid_size: usize) -> Result<PeakReport, PeakError> {
    if grid_size < 100 {
        return Err(PeakError::GridTooSmall(grid_size));
    }
    if pp.is_linear() {
        return Ok(verify_linear(pp, grid_size));
    }
    let (n, alpha, x0, a) = (pp.n, pp.alpha, pp.x0, pp.a);
    let (c0, cn, cn1) = family_coefficients(n, alpha, x0);
    let mut raw = vec![0.0; n + 2];
    raw[0] = c0;
    raw[n] = cn;
    raw[n + 1] = cn1;
    let p = |x: f64| horner(&raw, x);
    let h = -a / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|i| a + h * i as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| p(x)).collect();
    let peak = p(x0);
    let vmax = values.iter().fold(peak.abs(), |m, v| m.max(v.abs()));
    let mut checks = Vec::with_capacity(7);

    // (1) nonnegative coefficients summing to one, matching the stored polynomial.
    let mass = c0 + cn + cn1;
    let stored_matches =
        pp.poly.coeffs().len() == raw.len() && pp.poly.coeffs().iter().zip(&raw).all(|(s, r)| (s - r).abs() <= 1e-12);
    let fail1 = if !(c0 > 0.0 && cn > 0.0 && cn1 > 0.0) {
        Some((alpha, format!("coefficients ({c0}, {cn}, {cn1}) not all positive")))
    } else if (mass - 1.0).abs() > 1e-12 {
        Some((alpha, format!("coefficient mass {mass}")))
    } else if !stored_matches {
        Some((alpha, "stored polynomial differs from the family coefficients".into()))
    } else {
        None
    };
    checks.push(check(
        1,
        "convex-polynomial",
        fail1,
        format!("c0 = {c0:.6e}, c_n = {cn:.6e}, c_n+1 = {cn1:.6e}"),
    ));

    // First differences; points within one cell of x0 or of 0 are excluded.
    let d1_tol = 1e-12 * vmax / h;
    let d1: Vec<(f64, i8)> = grid
        .iter()
        .map(|&x| (x, sign_tol((p(x + h) - p(x - h)) / (2.0 * h), d1_tol)))
        .collect();

    // (2) the only sign change of p' happens within a cell of x0, and p'(0) = 0.
    let mut fail2 = None;
    let mut last: Option<(f64, i8)> = None;
    for &(x, s) in &d1 {
        if s == 0 || x.abs() < h {
            continue;
        }
        if let Some((xp, sp)) = last {
            if sp != s && !(sp == 1 && s == -1 && xp < x0 + h && x > x0 - h) {
                fail2 = Some((x, format!("derivative changes sign between {xp} and {x}")));
                break;
            }
        }
        last = Some((x, s));
    }
    // p'(0) is the linear coefficient.
    let d0 = raw[1];
    if fail2.is_none() && d0 != 0.0 {
        fail2 = Some((0.0, format!("derivative at 0 is {d0:e}")));
    }
    checks.push(check(
        2,
        "critical points only at x0 and 0",
        fail2,
        "single sign change at x0".into(),
    ));

    // (3) increasing on [a, x0), decreasing on (x0, 0).
    let fail3 = d1
        .iter()
        .filter(|(x, _)| (x - x0).abs() > h && x.abs() > h)
        .find(|&&(x, s)| (x < x0 && s < 0) || (x > x0 && s > 0))
        .map(|&(x, s)| (x, format!("derivative sign {s} at {x}")));
    checks.push(check(
        3,
        "monotone on each side of x0",
        fail3,
        "increasing then decreasing".into(),
    ));

    // (4) 0 < p(x) < p(x0) away from x0.
    let fail4 = grid
        .iter()
        .zip(&values)
        .find(|&(&x, &v)| v <= 0.0 || ((x - x0).abs() > 0.5 * h && v >= peak))
        .map(|(&x, &v)| (x, format!("p({x}) = {v}, p(x0) = {peak}")));
    let argmax = grid
        .iter()
        .zip(&values)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(&x, _)| x)
        .unwrap();
    let fail4 = fail4.or_else(|| {
        ((argmax - x0).abs() > h).then(|| (argmax, format!("grid argmax {argmax} is not within a cell of x0")))
    });
    checks.push(check(
        4,
        "strict absolute maximum at x0",
        fail4,
        format!("grid argmax {argmax}"),
    ));

    // (5) concave down left of (n-1)/n x0, concave up right of it.
    let inflection = (n as f64 - 1.0) / n as f64 * x0;
    let d2_tol = 1e-12 * vmax / (h * h);
    let d2: Vec<(f64, i8)> = grid
        .iter()
        .map(|&x| (x, sign_tol((p(x + h) - 2.0 * p(x) + p(x - h)) / (h * h), d2_tol)))
        .collect();
    let fail5 = d2
        .iter()
        .find(|&&(x, s)| (s > 0 && x < inflection - h) || (s < 0 && x > inflection + h))
        .map(|&(x, s)| (x, format!("second difference sign {s} at {x}, inflection {inflection}")))
        .or_else(|| {
            let has_down = d2.iter().any(|&(x, s)| s < 0 && x < inflection);
            let has_up = d2.iter().any(|&(x, s)| s > 0 && x > inflection);
            (!(has_down && has_up)).then(|| (inflection, "no sign change of the second difference".into()))
        });
    checks.push(check(
        5,
        "inflection at (n-1)/n x0",
        fail5,
        format!("inflection {inflection}"),
    ));

    // (6) closed forms of p(x0).
    let direct = peak_value_direct(n, alpha, x0);
    let factored = peak_value_factored(n, alpha, x0);
    let rel = |u: f64, v: f64| (u - v).abs() / v.abs().max(f64::MIN_POSITIVE);
    let fail6 = if rel(direct, factored) > 1e-10 {
        Some((x0, format!("direct {direct} vs factored {factored}")))
    } else if rel(peak, direct) > 1e-10 {
        Some((x0, format!("p(x0) = {peak} vs closed form {direct}")))
    } else {
        None
    };
    checks.push(check(6, "peak value closed forms", fail6, format!("p(x0) = {peak}")));

    // (7) the degree condition forces p(x0) > 1.
    let cond = degree_condition(x0, n);
    let fail7 = (cond < 0.0 && !(peak > 1.0)).then(|| (x0, format!("condition {cond} < 0 but p(x0) = {peak}")));
    let ok7 = if cond < 0.0 {
        format!("p(x0) - 1 = {:e}", peak - 1.0)
    } else {
        "degree condition does not hold".into()
    };
    checks.push(check(7, "peak exceeds one", fail7, ok7));

    Ok(PeakReport { grid_size, checks })
}

fn verify_linear(pp: &PeakingPolynomial, grid_size: usize) -> PeakReport {
    let (a, x0) = (pp.a, pp.x0);
    let c = pp.poly.coeffs();
    let p = |x: f64| horner(c, x);
    let h = (x0 - a) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|i| a + h * i as f64).collect();
    let mut checks = Vec::with_capacity(7);
    let fail1 = (c.len() != 2 || c.iter().any(|&v| v <= 0.0)).then(|| (a, format!("coefficients {c:?}")));
    checks.push(check(1, "convex-polynomial", fail1, format!("coefficients {c:?}")));
    checks.push(not_applicable(2, "critical points only at x0 and 0"));
    let fail3 = grid
        .windows(2)
        .find(|w| p(w[1]) <= p(w[0]))
        .map(|w| (w[1], format!("not increasing at {}", w[1])));
    checks.push(check(
        3,
        "monotone on each side of x0",
        fail3,
        "increasing on [a, -1]".into(),
    ));
    let peak = p(x0);
    let fail4 = grid
        .iter()
        .filter(|&&x| (x - x0).abs() > 0.5 * h)
        .find(|&&x| p(x) < 0.0 || p(x) >= peak)
        .map(|&x| (x, format!("p({x}) = {}", p(x))));
    checks.push(check(
        4,
        "strict absolute maximum at x0",
        fail4,
        format!("p(-1) = {peak}"),
    ));
    checks.push(not_applicable(5, "inflection at (n-1)/n x0"));
    checks.push(not_applicable(6, "peak value closed forms"));
    checks.push(not_applicable(7, "peak exceeds one"));
    PeakReport { grid_size, checks }
}

/// `(x, p(x))` samples over `[a, 0]` for plotting.
pub fn sample_curve(pp: &PeakingPolynomial, points: usize) -> Vec<(f64, f64)> {
    let points = points.max(2);
    (0..points)
        .map(|i| {
            let x = pp.a - pp.a * i as f64 / (points - 1) as f64;
            (x, pp.poly.value(x))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_even_degree_examples() {
        // n = 2 gives -8 + 6 + 2 = 0 (not < 0); n = 4 gives -18.
        assert_eq!(degree_condition(-2.0, 2), 0.0);
        assert_eq!(degree_condition(-2.0, 4), -18.0);
        assert_eq!(min_even_degree(-2.0), Ok(4));
        assert_eq!(degree_condition(-3.0, 2), -16.0);
        assert_eq!(min_even_degree(-3.0), Ok(2));
        assert_eq!(min_even_degree(-1.0), Err(PeakError::NotBelowMinusOne(-1.0)));
        assert!(matches!(
            min_even_degree(-1.0 - 1e-8),
            Err(PeakError::SearchExhausted { .. })
        ));
    }

    #[test]
    fn min_even_degree_is_minimal() {
        for &x0 in &[-1.05, -1.2, -1.5, -2.5, -7.0] {
            let n = min_even_degree(x0).unwrap();
            assert!(degree_condition(x0, n) < 0.0);
            for m in (2..n).step_by(2) {
                assert!(degree_condition(x0, m) >= 0.0, "x0 = {x0}, m = {m}");
            }
        }
    }

    #[test]
    fn linear_endpoint_case() {
        let pp = peaking_polynomial(-3.0, -1.0).unwrap();
        assert_eq!(pp.poly.coeffs(), &[0.75, 0.25]);
        assert_eq!(pp.peak_value, 0.5);
        let report = verify_peak(&pp, 200).unwrap();
        assert_eq!(report.status(3), CheckStatus::Pass);
        assert!(report.all_pass());
    }

    #[test]
    fn worked_example() {
        let pp = peaking_polynomial(-3.0, -2.0).unwrap();
        assert_eq!(pp.n, 4);
        assert!((alpha_upper_bound(4, -2.0) - 2.0 / 7.0).abs() < 1e-15);
        // K = -1 - 5/2 + 405/2 - 243 = -44, so alpha = 1/88.
        assert!((pp.alpha - 1.0 / 88.0).abs() < 1e-15);
        assert!(pp.poly.coeffs().iter().all(|&c| c >= 0.0));
        assert_eq!(pp.poly.coeffs().iter().filter(|&&c| c > 0.0).count(), 3);
        assert!((pp.peak_value - (1.0 + 4.5 * pp.alpha)).abs() < 1e-14);
        let report = verify_peak(&pp, 10_001).unwrap();
        assert!(report.all_pass(), "{report:#?}");
    }

    #[test]
    fn bad_endpoints() {
        assert!(matches!(
            peaking_polynomial(-2.0, -2.0),
            Err(PeakError::BadEndpoints { .. })
        ));
        assert!(matches!(
            peaking_polynomial(-3.0, -0.5),
            Err(PeakError::BadEndpoints { .. })
        ));
        assert!(matches!(
            verify_peak(&peaking_polynomial(-3.0, -2.0).unwrap(), 50),
            Err(PeakError::GridTooSmall(50))
        ));
    }

    #[test]
    fn doubled_alpha_breaks_convexity() {
        let mut pp = peaking_polynomial(-3.0, -2.0).unwrap();
        pp.alpha = 2.0 * alpha_upper_bound(pp.n, pp.x0);
        let (c0, _, _) = pp.family_coefficients();
        assert!(c0 < 0.0);
        let report = verify_peak(&pp, 1000).unwrap();
        assert_eq!(report.status(1), CheckStatus::Fail);
    }

    #[test]
    fn closed_forms_agree() {
        for &x0 in &[-1.5, -2.0, -5.0, -20.0] {
            let pp = peaking_polynomial(2.0 * x0, x0).unwrap();
            let d = peak_value_direct(pp.n, pp.alpha, x0);
            let f = peak_value_factored(pp.n, pp.alpha, x0);
            assert!((d - f).abs() <= 1e-10 * d.abs());
            assert!(pp.peak_value > 1.0, "x0 = {x0}");
        }
    }

    #[test]
    fn far_endpoint_uses_log_bound() {
        let pp = peaking_polynomial(-1e6, -1.1).unwrap();
        assert!(pp.alpha > 0.0);
        assert!(pp.poly.value(-1e6) > 0.0 || pp.poly.evaluate(-1e6).overflowed);
    }
}
