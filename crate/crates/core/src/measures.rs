//! Compactly supported measures built from weighted atoms and
//! piecewise-polynomial densities, their distribution functions,
//! Riemann–Stieltjes integration, moments and moment-growth certificates.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logspace::{signed_log_pow, EvalResult, SignedLogSum};
use crate::polycore::{horner, ConvexPolynomial};
use crate::quadrature::{adaptive_integrate, GaussLegendre};

/// Samples per piece used to confirm a density is nonnegative.
const POSITIVITY_SAMPLES: usize = 1000;
/// Minimum growth ratio for a certificate.
pub const GROWTH_THRESHOLD: f64 = 1e-3;
/// Cells of the coarsest Riemann–Stieltjes partition.
pub const RS_BASE_CELLS: usize = 64;
const MAX_AUTO_ORDER: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("non-finite value in measure description")]
    NonFinite,
    #[error("piece [{l}, {u}] is empty or reversed")]
    EmptyPiece { l: f64, u: f64 },
    #[error("pieces [{0}, {1}] and [{2}, {3}] overlap")]
    Overlap(f64, f64, f64, f64),
    #[error("measure flagged positive has a negative {what} near {at}")]
    NotPositive { what: &'static str, at: f64 },
    #[error("integrand is not finite at x = {x}")]
    NonFiniteSample { x: f64 },
    #[error("atom at {x} coincides with an integration endpoint")]
    CommonDiscontinuity { x: f64 },
    #[error("quadrature order {0} is below the minimum of 4")]
    BadOrder(usize),
    #[error("refinement must be at least 1")]
    BadRefinement,
    #[error("horizon {0} is below the minimum of 10")]
    BadHorizon(usize),
    #[error("bad interval [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("hypothesis fails at k = {k}: integral {integral_log:.6e} (log) below bound {bound_log:.6e} (log)")]
    HypothesisFailed {
        k: usize,
        integral_log: f64,
        bound_log: f64,
    },
    #[error("no exponent in 1..={degree} reaches the bound at k = {k}")]
    ExtractionFailed { k: usize, degree: usize },
}

/// A density supported on `[l, u]` given by plain polynomial coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub interval: [f64; 2],
    pub density: Vec<f64>,
}

impl Piece {
    pub fn l(&self) -> f64 {
        self.interval[0]
    }

    pub fn u(&self) -> f64 {
        self.interval[1]
    }

    pub fn degree(&self) -> usize {
        self.density.len().saturating_sub(1)
    }

    pub fn density_at(&self, x: f64) -> f64 {
        horner(&self.density, x)
    }

    /// `∫_l^t x^k d(x) dx` for `l <= t <= u`.
    fn partial_moment(&self, k: usize, t: f64) -> f64 {
        let l = self.l();
        self.density
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                let e = (k + j + 1) as i32;
                d * (t.powi(e) - l.powi(e)) / e as f64
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct Measure {
    atoms: Vec<(f64, f64)>,
    pieces: Vec<Piece>,
    positive: bool,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
    #[serde(default)]
    pieces: Vec<Piece>,
    #[serde(default)]
    positive: bool,
}

impl TryFrom<MeasureRepr> for Measure {
    type Error = MeasureError;
    fn try_from(r: MeasureRepr) -> Result<Self, MeasureError> {
        Measure::new(r.atoms, r.pieces, r.positive)
    }
}

impl From<Measure> for MeasureRepr {
    fn from(m: Measure) -> Self {
        MeasureRepr {
            atoms: m.atoms,
            pieces: m.pieces,
            positive: m.positive,
        }
    }
}

impl Measure {
    pub fn new(atoms: Vec<(f64, f64)>, mut pieces: Vec<Piece>, positive: bool) -> Result<Self, MeasureError> {
        for &(x, w) in &atoms {
            if !x.is_finite() || !w.is_finite() {
                return Err(MeasureError::NonFinite);
            }
            if positive && w < 0.0 {
                return Err(MeasureError::NotPositive { what: "atom", at: x });
            }
        }
        for p in &pieces {
            let (l, u) = (p.l(), p.u());
            if !l.is_finite() || !u.is_finite() || p.density.iter().any(|d| !d.is_finite()) {
                return Err(MeasureError::NonFinite);
            }
            if l >= u {
                return Err(MeasureError::EmptyPiece { l, u });
            }
            if positive {
                for i in 0..POSITIVITY_SAMPLES {
                    let x = l + (u - l) * (i as f64 + 0.5) / POSITIVITY_SAMPLES as f64;
                    if p.density_at(x) < 0.0 {
                        return Err(MeasureError::NotPositive { what: "density", at: x });
                    }
                }
            }
        }
        pieces.sort_by(|a, b| a.l().total_cmp(&b.l()));
        for w in pieces.windows(2) {
            if w[1].l() < w[0].u() {
                return Err(MeasureError::Overlap(w[0].l(), w[0].u(), w[1].l(), w[1].u()));
            }
        }
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Measure {
            atoms,
            pieces,
            positive,
        })
    }

    /// Lebesgue measure on `(l, u)`.
    pub fn lebesgue(l: f64, u: f64) -> Result<Self, MeasureError> {
        Measure::new(
            vec![],
            vec![Piece {
                interval: [l, u],
                density: vec![1.0],
            }],
            true,
        )
    }

    pub fn atom(x: f64, w: f64) -> Result<Self, MeasureError> {
        Measure::new(vec![(x, w)], vec![], w >= 0.0)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    /// `(-1) · μ`.
    pub fn negated(&self) -> Measure {
        Measure {
            atoms: self.atoms.iter().map(|&(x, w)| (x, -w)).collect(),
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    interval: p.interval,
                    density: p.density.iter().map(|d| -d).collect(),
                })
                .collect(),
            positive: false,
        }
    }

    /// Smallest interval containing the support, or `None` for the zero measure.
    pub fn support_hull(&self) -> Option<(f64, f64)> {
        let lo = self
            .atoms
            .iter()
            .filter(|a| a.1 != 0.0)
            .map(|a| a.0)
            .chain(self.pieces.iter().map(Piece::l))
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .atoms
            .iter()
            .filter(|a| a.1 != 0.0)
            .map(|a| a.0)
            .chain(self.pieces.iter().map(Piece::u))
            .fold(f64::NEG_INFINITY, f64::max);
        (lo <= hi).then_some((lo, hi))
    }

    /// Largest `|x|` over the support.
    pub fn support_radius(&self) -> f64 {
        self.support_hull().map_or(0.0, |(lo, hi)| lo.abs().max(hi.abs()))
    }

    /// Describes why `|μ|([t, ∞)) > 0`, or `None` if that set is null.
    pub fn mass_at_or_above(&self, t: f64) -> Option<String> {
        if let Some(&(x, w)) = self.atoms.iter().find(|a| a.0 >= t && a.1 != 0.0) {
            return Some(format!("atom of weight {w} at {x} >= {t}"));
        }
        self.pieces
            .iter()
            .find(|p| p.u() > t && p.density.iter().any(|&d| d != 0.0))
            .map(|p| format!("density on [{}, {}] meets [{t}, inf)", p.l(), p.u()))
    }

    pub fn total_mass(&self) -> f64 {
        moment_distribution(self, 0, f64::INFINITY)
    }
}

/// `∫_{(-∞, x]} t^k dμ(t)` in closed form.
pub fn moment_distribution(mu: &Measure, k: usize, x: f64) -> f64 {
    let mut acc = 0.0;
    for &(loc, w) in &mu.atoms {
        if loc <= x {
            acc += w * loc.powi(k as i32);
        }
    }
    for p in &mu.pieces {
        if x > p.l() {
            acc += p.partial_moment(k, x.min(p.u()));
        }
    }
    acc
}

/// `F(x) = μ((-∞, x])`.
pub fn distribution(mu: &Measure, x: f64) -> f64 {
    moment_distribution(mu, 0, x)
}

/// `∫ x^n dμ` in closed form, accumulated in the log domain.
pub fn moment(mu: &Measure, n: usize) -> EvalResult {
    let mut acc = SignedLogSum::new();
    for &(x, w) in &mu.atoms {
        let (s, lg) = signed_log_pow(x, n);
        acc.push(s * sign_of(w), lg + w.abs().ln());
    }
    for p in &mu.pieces {
        for (j, &d) in p.density.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let e = n + j + 1;
            let scale = d.abs().ln() - (e as f64).ln();
            let (su, lu) = signed_log_pow(p.u(), e);
            let (sl, ll) = signed_log_pow(p.l(), e);
            acc.push(su * sign_of(d), lu + scale);
            acc.push(-sl * sign_of(d), ll + scale);
        }
    }
    acc.finish()
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Distribution function with precomputed breakpoints for fast evaluation.
#[derive(Debug, Clone)]
pub struct DistributionFunction {
    source: Measure,
    atom_locs: Vec<f64>,
    atom_cum: Vec<f64>,
    piece_cum: Vec<f64>,
}

impl DistributionFunction {
    pub fn new(source: Measure) -> Self {
        let atom_locs = source.atoms.iter().map(|a| a.0).collect();
        let atom_cum = source
            .atoms
            .iter()
            .scan(0.0, |s, a| {
                *s += a.1;
                Some(*s)
            })
            .collect();
        let piece_cum = source
            .pieces
            .iter()
            .scan(0.0, |s, p| {
                *s += p.partial_moment(0, p.u());
                Some(*s)
            })
            .collect();
        DistributionFunction {
            source,
            atom_locs,
            atom_cum,
            piece_cum,
        }
    }

    pub fn source(&self) -> &Measure {
        &self.source
    }

    pub fn eval(&self, x: f64) -> f64 {
        let na = self.atom_locs.partition_point(|&t| t <= x);
        let atoms = if na == 0 { 0.0 } else { self.atom_cum[na - 1] };
        let pieces = &self.source.pieces;
        // Pieces are sorted and disjoint; the first with u > x may contain x.
        let np = pieces.partition_point(|p| p.u() <= x);
        let mut mass = if np == 0 { 0.0 } else { self.piece_cum[np - 1] };
        if let Some(p) = pieces.get(np) {
            if x > p.l() {
                mass += p.partial_moment(0, x);
            }
        }
        atoms + mass
    }

    /// Whether the source has an atom exactly at `x`.
    pub fn jumps_at(&self, x: f64) -> bool {
        self.source.atoms.iter().any(|a| a.0 == x && a.1 != 0.0)
    }
}

/// Result of a Riemann–Stieltjes computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RsEstimate {
    pub value: f64,
    /// Difference between the last two refinement levels.
    pub error_estimate: f64,
}

/// Riemann–Stieltjes sums `Σ g(c_k)[F(x_k) - F(x_{k-1})]` over uniform
/// partitions with midpoint tags, doubled `refinement` times.
pub fn rs_integral(
    g: impl Fn(f64) -> f64,
    f: &DistributionFunction,
    a: f64,
    b: f64,
    refinement: usize,
) -> Result<RsEstimate, MeasureError> {
    if refinement < 1 {
        return Err(MeasureError::BadRefinement);
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(MeasureError::BadInterval(a, b));
    }
    let atoms: Vec<f64> = f
        .source()
        .atoms()
        .iter()
        .filter(|&&(x, w)| x > a && x < b && w != 0.0)
        .map(|a| a.0)
        .collect();
    let mut prev = f64::NAN;
    let mut last = f64::NAN;
    for level in 0..=refinement {
        let cells = RS_BASE_CELLS << level;
        let points = partition_points(a, b, cells, &atoms);
        let mut sum = 0.0;
        let mut f_left = f.eval(points[0]);
        for w in points.windows(2) {
            let f_right = f.eval(w[1]);
            let tag = 0.5 * (w[0] + w[1]);
            let gv = g(tag);
            if !gv.is_finite() {
                return Err(MeasureError::NonFiniteSample { x: tag });
            }
            sum += gv * (f_right - f_left);
            f_left = f_right;
        }
        prev = last;
        last = sum;
    }
    Ok(RsEstimate {
        value: last,
        error_estimate: (last - prev).abs(),
    })
}

/// Uniform partition of `[a, b]` with the cell holding each interior atom
/// shifted so the atom is its midpoint tag.
fn partition_points(a: f64, b: f64, cells: usize, atoms: &[f64]) -> Vec<f64> {
    let h = (b - a) / cells as f64;
    let mut pts: Vec<f64> = (0..=cells).map(|i| a + h * i as f64).collect();
    pts[cells] = b;
    for &t in atoms {
        // Right-continuity: the atom belongs to the cell (x_c, x_{c+1}].
        let c = pts.partition_point(|&x| x < t).saturating_sub(1);
        if c + 1 > cells {
            continue;
        }
        let (xl, xr) = (pts[c], pts[c + 1]);
        if xr == t {
            // Atom on a partition point: recentre the cell around it.
            if c >= 1 && c + 2 <= cells {
                let (lo, hi) = (t - 0.5 * h, t + 0.5 * h);
                if lo > pts[c - 1] && hi < pts[c + 2] {
                    pts[c] = lo;
                    pts[c + 1] = hi;
                }
            }
            continue;
        }
        if t - xl <= xr - t {
            if c + 1 < cells {
                pts[c + 1] = 2.0 * t - xl;
            }
        } else if c > 0 {
            let cand = 2.0 * t - xr;
            if cand > pts[c - 1] {
                pts[c] = cand;
            }
        }
    }
    debug_assert!(pts.windows(2).all(|w| w[0] < w[1]));
    pts
}

/// `|∫_a^b g dF - (g(b)F(b) - g(a)F(a) - ∫_a^b F g' dx)|` for polynomial `g`.
pub fn integration_by_parts_check(g: &[f64], f: &DistributionFunction, a: f64, b: f64) -> Result<f64, MeasureError> {
    if !(a < b) {
        return Err(MeasureError::BadInterval(a, b));
    }
    for x in [a, b] {
        if f.jumps_at(x) {
            return Err(MeasureError::CommonDiscontinuity { x });
        }
    }
    let mu = f.source();
    let lhs_b: f64 = g
        .iter()
        .enumerate()
        .fold(0.0, |s, (k, &c)| s + c * moment_distribution(mu, k, b));
    let lhs_a: f64 = g
        .iter()
        .enumerate()
        .fold(0.0, |s, (k, &c)| s + c * moment_distribution(mu, k, a));
    let lhs = lhs_b - lhs_a;

    let dg: Vec<f64> = g.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect();
    let mut breaks = vec![a, b];
    breaks.extend(mu.atoms.iter().map(|t| t.0).filter(|&x| x > a && x < b));
    for p in &mu.pieces {
        breaks.extend([p.l(), p.u()].into_iter().filter(|&x| x > a && x < b));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let max_density_degree = mu.pieces.iter().map(Piece::degree).max().unwrap_or(0);
    let order = (max_density_degree + 1 + dg.len()) / 2 + 2;
    let rule = GaussLegendre::new(order);
    let mut by_parts = 0.0;
    if !dg.is_empty() {
        for w in breaks.windows(2) {
            by_parts += rule.integrate(w[0], w[1], |x| distribution(mu, x) * horner(&dg, x));
        }
    }
    let rhs = horner(g, b) * distribution(mu, b) - horner(g, a) * distribution(mu, a) - by_parts;
    Ok((lhs - rhs).abs())
}

/// `∫ x^n f dμ` with a fixed `quad_order`-point Gauss–Legendre rule per
/// piece; each term is formed in the log domain.
pub fn weighted_moment(
    mu: &Measure,
    f: &(impl Fn(f64) -> f64 + ?Sized),
    n: usize,
    quad_order: usize,
) -> Result<EvalResult, MeasureError> {
    if quad_order < 4 {
        return Err(MeasureError::BadOrder(quad_order));
    }
    let rule = GaussLegendre::new(quad_order);
    weighted_moment_with(mu, f, n, &rule)
}

fn weighted_moment_with(
    mu: &Measure,
    f: &(impl Fn(f64) -> f64 + ?Sized),
    n: usize,
    rule: &GaussLegendre,
) -> Result<EvalResult, MeasureError> {
    let mut acc = SignedLogSum::new();
    let mut push = |x: f64, weight: f64| -> Result<(), MeasureError> {
        let fx = f(x);
        if !fx.is_finite() {
            return Err(MeasureError::NonFiniteSample { x });
        }
        let (s, lg) = signed_log_pow(x, n);
        let c = weight * fx;
        acc.push(s * sign_of(c), lg + c.abs().ln());
        Ok(())
    };
    for &(x, w) in &mu.atoms {
        push(x, w)?;
    }
    for p in &mu.pieces {
        for (x, w) in rule.on_interval(p.l(), p.u()) {
            push(x, w * p.density_at(x))?;
        }
    }
    Ok(acc.finish())
}

/// Weighted moment with automatic order: starts at `2 (n + piece degree)`
/// nodes and doubles until two successive orders agree to 1e-9; if the
/// cap is reached (non-smooth `f`), falls back to adaptive bisection.
pub fn weighted_moment_auto(
    mu: &Measure,
    f: &(impl Fn(f64) -> f64 + ?Sized),
    n: usize,
) -> Result<EvalResult, MeasureError> {
    let deg = mu.pieces.iter().map(Piece::degree).max().unwrap_or(0);
    let mut order = (2 * (n + deg)).max(8);
    let mut prev = weighted_moment_with(mu, f, n, &GaussLegendre::new(order))?;
    if mu.pieces.is_empty() {
        return Ok(prev);
    }
    while order < MAX_AUTO_ORDER {
        order *= 2;
        let next = weighted_moment_with(mu, f, n, &GaussLegendre::new(order))?;
        if agree(&prev, &next, 1e-9) {
            return Ok(next);
        }
        prev = next;
    }
    let radius = mu.support_radius();
    if (n as f64) * radius.ln().max(0.0) > 600.0 {
        // Linear-domain panels would overflow; keep the highest-order estimate.
        return Ok(prev);
    }
    weighted_moment_adaptive(mu, f, n)
}

fn agree(a: &EvalResult, b: &EvalResult, tol: f64) -> bool {
    if a.sign == 0 && b.sign == 0 {
        return true;
    }
    a.sign == b.sign && (a.magnitude_log - b.magnitude_log).abs() <= tol
}

fn weighted_moment_adaptive(
    mu: &Measure,
    f: &(impl Fn(f64) -> f64 + ?Sized),
    n: usize,
) -> Result<EvalResult, MeasureError> {
    let mut total = 0.0;
    for &(x, w) in &mu.atoms {
        let fx = f(x);
        if !fx.is_finite() {
            return Err(MeasureError::NonFiniteSample { x });
        }
        total += w * fx * x.powi(n as i32);
    }
    let deg = mu.pieces.iter().map(Piece::degree).max().unwrap_or(0);
    let rule = GaussLegendre::new((n + deg) / 2 + 4);
    let bad = std::cell::Cell::new(None);
    for p in &mu.pieces {
        let integrand = |x: f64| {
            let fx = f(x);
            if !fx.is_finite() {
                bad.set(Some(x));
                return 0.0;
            }
            x.powi(n as i32) * fx * p.density_at(x)
        };
        total += adaptive_integrate(&rule, p.l(), p.u(), 1e-12, &integrand);
    }
    if let Some(x) = bad.get() {
        return Err(MeasureError::NonFiniteSample { x });
    }
    Ok(EvalResult::from_value(total))
}

/// Log-domain tolerance for re-derived certificate values.
const REPRODUCE_TOL: f64 = 1e-9;

/// Evidence of geometric moment growth: `values[k] >= c · m^{exponents[k]}`.
///
/// Since the exponents are strictly increasing from at least 0, the bound
/// also gives `values[k] >= c · m^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentGrowthCertificate {
    pub c: f64,
    pub log_c: f64,
    pub m: f64,
    pub exponents: Vec<usize>,
    pub values: Vec<f64>,
    pub log_values: Vec<f64>,
    pub horizon: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("certificate is malformed: {0}")]
    Malformed(&'static str),
    #[error("value at exponent {n} does not reproduce (stored log {stored}, recomputed log {recomputed})")]
    Mismatch { n: usize, stored: f64, recomputed: f64 },
    #[error("value at exponent {n} is below c m^n")]
    BelowBound { n: usize },
}

impl MomentGrowthCertificate {
    /// Recomputes every listed value with `recompute` and checks the bound.
    pub fn validate(&self, recompute: impl Fn(usize) -> EvalResult) -> Result<(), CertificateError> {
        if !(self.m > 1.0) || !self.log_c.is_finite() {
            return Err(CertificateError::Malformed("needs m > 1 and c > 0"));
        }
        if self.exponents.len() != self.log_values.len() || self.exponents.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CertificateError::Malformed("exponents must be strictly increasing"));
        }
        let log_m = self.m.ln();
        for (&n, &stored) in self.exponents.iter().zip(&self.log_values) {
            let r = recompute(n);
            if r.sign <= 0 || (r.magnitude_log - stored).abs() > REPRODUCE_TOL {
                return Err(CertificateError::Mismatch {
                    n,
                    stored,
                    recomputed: r.magnitude_log,
                });
            }
            if r.magnitude_log < self.log_c + n as f64 * log_m - 1e-12 {
                return Err(CertificateError::BelowBound { n });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum GrowthVerdict {
    Certificate(MomentGrowthCertificate),
    Bounded {
        sup: f64,
        sup_log: f64,
        argmax: usize,
        horizon: usize,
    },
}

impl GrowthVerdict {
    pub fn certificate(&self) -> Option<&MomentGrowthCertificate> {
        match self {
            GrowthVerdict::Certificate(c) => Some(c),
            GrowthVerdict::Bounded { .. } => None,
        }
    }
}

fn cmp_eval(a: &EvalResult, b: &EvalResult) -> Ordering {
    match a.sign.cmp(&b.sign) {
        Ordering::Equal => match a.sign {
            1 => a.magnitude_log.total_cmp(&b.magnitude_log),
            -1 => b.magnitude_log.total_cmp(&a.magnitude_log),
            _ => Ordering::Equal,
        },
        o => o,
    }
}

/// Growth detection on a sequence `v_0..v_N`: running maxima, a least-squares
/// fit of `ln v` against the exponent, and `c = min v_k / m^{n_k}`.
pub fn detect_growth(values: &[EvalResult]) -> GrowthVerdict {
    let horizon = values.len().saturating_sub(1);
    let (argmax, sup) = values
        .iter()
        .enumerate()
        .max_by(|a, b| cmp_eval(a.1, b.1).then(b.0.cmp(&a.0)))
        .map(|(i, v)| (i, *v))
        .unwrap_or((0, EvalResult::zero()));
    let bounded = GrowthVerdict::Bounded {
        sup: sup.value,
        sup_log: sup.magnitude_log,
        argmax,
        horizon,
    };
    let mut exponents = Vec::new();
    let mut best: Option<EvalResult> = None;
    for (n, v) in values.iter().enumerate() {
        if v.sign <= 0 {
            continue;
        }
        if best.is_none_or(|b| cmp_eval(v, &b) == Ordering::Greater) {
            exponents.push(n);
            best = Some(*v);
        }
    }
    if exponents.len() < 3 {
        return bounded;
    }
    let xs: Vec<f64> = exponents.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = exponents.iter().map(|&n| values[n].magnitude_log).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let m = slope.exp();
    if !(m > 1.0 + GROWTH_THRESHOLD) {
        return bounded;
    }
    // Slack matches the reproduction tolerance of `validate`, so any
    // recomputation that reproduces the values also clears the bound.
    let log_m = m.ln();
    let log_c = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - x * log_m)
        .fold(f64::INFINITY, f64::min)
        - REPRODUCE_TOL;
    GrowthVerdict::Certificate(MomentGrowthCertificate {
        c: log_c.exp(),
        log_c,
        m,
        values: exponents.iter().map(|&n| values[n].value).collect(),
        log_values: ys,
        exponents,
        horizon,
    })
}

/// Moment-growth verdict for `∫ x^n f dμ`, `n = 0..=horizon`.
pub fn growth_certificate(
    mu: &Measure,
    f: &(impl Fn(f64) -> f64 + Sync + ?Sized),
    horizon: usize,
) -> Result<GrowthVerdict, MeasureError> {
    if horizon < 10 {
        return Err(MeasureError::BadHorizon(horizon));
    }
    let values = (0..=horizon)
        .into_par_iter()
        .map(|n| weighted_moment_auto(mu, f, n))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(detect_growth(&values))
}

/// For each `p_k` (k = 1, 2, ...) with `∫ p_k f dμ >= c m^k`, the first
/// exponent `1 <= n_k <= deg p_k` whose weighted moment also reaches `c m^k`.
pub fn extract_exponents(
    polys: &[ConvexPolynomial],
    mu: &Measure,
    f: &(impl Fn(f64) -> f64 + Sync + ?Sized),
    c: f64,
    m: f64,
) -> Result<Vec<usize>, MeasureError> {
    let max_deg = polys.iter().map(ConvexPolynomial::degree).max().unwrap_or(0);
    let v = (0..=max_deg)
        .into_par_iter()
        .map(|n| weighted_moment_auto(mu, f, n))
        .collect::<Result<Vec<_>, _>>()?;
    let reaches = |r: &EvalResult, bound_log: f64| r.sign > 0 && r.magnitude_log >= bound_log;
    let mut out = Vec::with_capacity(polys.len());
    for (i, p) in polys.iter().enumerate() {
        let k = i + 1;
        let bound_log = c.ln() + k as f64 * m.ln();
        let mut acc = SignedLogSum::new();
        for (j, &a) in p.coeffs().iter().enumerate() {
            if a > 0.0 {
                acc.push(v[j].sign, v[j].magnitude_log + a.ln());
            }
        }
        let integral = acc.finish();
        if !reaches(&integral, bound_log) {
            return Err(MeasureError::HypothesisFailed {
                k,
                integral_log: integral.magnitude_log,
                bound_log,
            });
        }
        let n = (1..=p.degree())
            .find(|&n| reaches(&v[n], bound_log))
            .ok_or(MeasureError::ExtractionFailed { k, degree: p.degree() })?;
        out.push(n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leb(l: f64, u: f64) -> Measure {
        Measure::lebesgue(l, u).unwrap()
    }

    #[test]
    fn moment_examples() {
        let mu = leb(-2.0, -1.0);
        assert!((moment(&mu, 2).value - 7.0 / 3.0).abs() < 1e-14);
        assert!((moment(&mu, 3).value + 15.0 / 4.0).abs() < 1e-14);
        let atom = Measure::atom(-1.0, 1.0).unwrap();
        for n in 0..20 {
            assert_eq!(moment(&atom, n).value, if n % 2 == 0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn distribution_examples() {
        let mu = leb(-2.0, -1.0);
        assert!((distribution(&mu, -1.5) - 0.5).abs() < 1e-15);
        assert_eq!(distribution(&mu, -3.0), 0.0);
        let atom = Measure::atom(-1.0, 1.0).unwrap();
        assert_eq!(distribution(&atom, -1.0), 1.0);
        assert_eq!(distribution(&atom, -1.0 - 1e-12), 0.0);
        let df = DistributionFunction::new(atom);
        assert_eq!(df.eval(-1.0), 1.0);
    }

    #[test]
    fn cached_distribution_matches_closed_form() {
        let mu = Measure::new(
            vec![(-1.5, 0.25), (0.2, 0.5)],
            vec![
                Piece {
                    interval: [-2.0, -1.0],
                    density: vec![1.0, 0.5],
                },
                Piece {
                    interval: [0.0, 1.0],
                    density: vec![0.0, 2.0],
                },
            ],
            false,
        )
        .unwrap();
        let df = DistributionFunction::new(mu.clone());
        for i in 0..=400 {
            let x = -2.5 + 4.0 * i as f64 / 400.0;
            assert!((df.eval(x) - distribution(&mu, x)).abs() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            Measure::lebesgue(1.0, 1.0),
            Err(MeasureError::EmptyPiece { .. })
        ));
        let overlapping = Measure::new(
            vec![],
            vec![
                Piece {
                    interval: [0.0, 2.0],
                    density: vec![1.0],
                },
                Piece {
                    interval: [1.0, 3.0],
                    density: vec![1.0],
                },
            ],
            true,
        );
        assert!(matches!(overlapping, Err(MeasureError::Overlap(..))));
        let negative = Measure::new(
            vec![],
            vec![Piece {
                interval: [-1.0, 1.0],
                density: vec![0.0, 1.0],
            }],
            true,
        );
        assert!(matches!(negative, Err(MeasureError::NotPositive { .. })));
        // Shared endpoints are fine.
        assert!(Measure::new(
            vec![],
            vec![
                Piece {
                    interval: [0.0, 1.0],
                    density: vec![1.0]
                },
                Piece {
                    interval: [1.0, 2.0],
                    density: vec![1.0]
                },
            ],
            true,
        )
        .is_ok());
    }

    #[test]
    fn rs_examples() {
        let df = DistributionFunction::new(leb(-2.0, -1.0));
        let r = rs_integral(|x| x * x, &df, -2.0, -1.0, 8).unwrap();
        assert!((r.value - 7.0 / 3.0).abs() < 1e-8);
        assert!((r.value - 7.0 / 3.0).abs() <= 2.0 * r.error_estimate);
        let c = rs_integral(|_| 1.0, &df, -1.8, -1.1, 3).unwrap();
        assert!((c.value - (df.eval(-1.1) - df.eval(-1.8))).abs() < 1e-14);
        let atom = DistributionFunction::new(Measure::atom(-1.5, 1.0).unwrap());
        for n in 0..8 {
            let r = rs_integral(|x| x.powi(n), &atom, -2.0, -1.0, 4).unwrap();
            assert!((r.value - (-1.5f64).powi(n)).abs() < 1e-12, "n = {n}: {}", r.value);
        }
        assert_eq!(rs_integral(|x| x, &df, -2.0, -1.0, 0), Err(MeasureError::BadRefinement));
        assert!(matches!(
            rs_integral(|x| if x > -1.2 { f64::NAN } else { x }, &df, -2.0, -1.0, 1),
            Err(MeasureError::NonFiniteSample { .. })
        ));
    }

    #[test]
    fn rs_atom_on_partition_point() {
        // -1.5 is a partition point of every uniform partition of [-2, -1].
        let atom = DistributionFunction::new(Measure::atom(-1.5, 2.0).unwrap());
        let r = rs_integral(|x| x.powi(3), &atom, -2.0, -1.0, 3).unwrap();
        assert!((r.value - 2.0 * (-1.5f64).powi(3)).abs() < 1e-12);
    }

    #[test]
    fn ibp_examples() {
        let df = DistributionFunction::new(leb(-2.0, -1.0));
        for n in 0..15 {
            let mut g = vec![0.0; n + 1];
            g[n] = 1.0;
            let r = integration_by_parts_check(&g, &df, -2.0, -1.0).unwrap();
            assert!(r < 1e-8, "n = {n}: {r}");
        }
        assert_eq!(integration_by_parts_check(&[3.7], &df, -2.0, -1.0).unwrap(), 0.0);
        let atom = DistributionFunction::new(Measure::atom(-2.0, 1.0).unwrap());
        assert_eq!(
            integration_by_parts_check(&[0.0, 1.0], &atom, -2.0, -1.0),
            Err(MeasureError::CommonDiscontinuity { x: -2.0 })
        );
    }

    #[test]
    fn weighted_moment_examples() {
        let mu = leb(-2.0, -1.0);
        for n in 0..10 {
            let one = weighted_moment(&mu, &|_| 1.0, n, 16).unwrap();
            assert!((one.value / moment(&mu, n).value - 1.0).abs() < 1e-12);
            let shifted = weighted_moment(&mu, &|x| x, n, 16).unwrap();
            assert!((shifted.value / moment(&mu, n + 1).value - 1.0).abs() < 1e-12);
        }
        assert_eq!(weighted_moment(&mu, &|_| 1.0, 2, 3), Err(MeasureError::BadOrder(3)));
        assert!(matches!(
            weighted_moment(&mu, &|_| f64::NAN, 2, 8),
            Err(MeasureError::NonFiniteSample { .. })
        ));
    }

    #[test]
    fn weighted_moment_against_rs_sum() {
        let mu = leb(-2.0, -1.0);
        let df = DistributionFunction::new(mu.clone());
        let quad = weighted_moment_auto(&mu, &|x| df.eval(x), 1).unwrap();
        let rs = rs_integral(|x| x * df.eval(x), &df, -2.0, -1.0, 10).unwrap();
        assert!((quad.value - rs.value).abs() < 1e-6);
    }

    #[test]
    fn kinked_weight_uses_adaptive_fallback() {
        let mu = leb(-3.0, -1.5);
        let r = weighted_moment_auto(&mu, &|x: f64| (x + 2.0).abs(), 0).unwrap();
        assert!((r.value - 0.625).abs() < 1e-10);
    }

    #[test]
    fn growth_examples() {
        let v = growth_certificate(&leb(-2.0, -1.0), &|_| 1.0, 60).unwrap();
        let cert = v.certificate().expect("certificate");
        assert!(cert.m > 1.8 && cert.m < 2.0, "m = {}", cert.m);
        cert.validate(|n| moment(&leb(-2.0, -1.0), n)).unwrap();

        match growth_certificate(&Measure::atom(-1.0, 1.0).unwrap(), &|_| 1.0, 60).unwrap() {
            GrowthVerdict::Bounded { sup, .. } => assert_eq!(sup, 1.0),
            other => panic!("{other:?}"),
        }
        match growth_certificate(&leb(0.0, 1.0), &|_| 1.0, 60).unwrap() {
            GrowthVerdict::Bounded { sup, argmax, .. } => {
                assert!((sup - 1.0).abs() < 1e-14);
                assert_eq!(argmax, 0);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            growth_certificate(&leb(0.0, 1.0), &|_| 1.0, 5),
            Err(MeasureError::BadHorizon(5))
        );
    }

    #[test]
    fn negated_measure_grows_on_odd_side() {
        let neg = leb(-2.0, -1.0).negated();
        let v = growth_certificate(&neg, &|_| 1.0, 60).unwrap();
        let cert = v.certificate().expect("certificate");
        assert!(cert.exponents.iter().skip(1).all(|n| n % 2 == 1));
    }

    #[test]
    fn tampered_certificate_fails_validation() {
        let mu = leb(-2.0, -1.0);
        let mut cert = growth_certificate(&mu, &|_| 1.0, 30)
            .unwrap()
            .certificate()
            .unwrap()
            .clone();
        cert.log_values[2] += 1e-6;
        assert!(matches!(
            cert.validate(|n| moment(&mu, n)),
            Err(CertificateError::Mismatch { .. })
        ));
    }

    #[test]
    fn extract_exponent_examples() {
        let mu = leb(-3.0, -2.0);
        let x = ConvexPolynomial::monomial(1);
        // ∫ x dμ = -2.5 here, so the weight -1 is needed for a positive bound.
        assert_eq!(
            extract_exponents(&[x.clone()], &mu, &|_| -1.0, 1e-3, 1.01).unwrap(),
            vec![1]
        );
        assert!(matches!(
            extract_exponents(&[x], &mu, &|_| 1.0, 1e-3, 1.01),
            Err(MeasureError::HypothesisFailed { .. })
        ));
        // ∫ x dμ is negative, so no positive bound holds.
        let mu = leb(-2.0, -1.0);
        assert!(matches!(
            extract_exponents(&[ConvexPolynomial::one()], &mu, &|_| 1.0, 1.0, 1.5),
            Err(MeasureError::HypothesisFailed { k: 1, .. })
        ));
        assert!(matches!(
            extract_exponents(&[ConvexPolynomial::one()], &mu, &|_| 1.0, 0.5, 1.5),
            Err(MeasureError::ExtractionFailed { k: 1, degree: 0 })
        ));
    }

    #[test]
    fn json_shape() {
        let m: Measure = serde_json::from_str(
            r#"{"atoms": [[-1.5, 0.5]], "pieces": [{"interval": [-2, -1], "density": [1]}], "positive": true}"#,
        )
        .unwrap();
        assert_eq!(m.atoms(), &[(-1.5, 0.5)]);
        assert!((m.total_mass() - 1.5).abs() < 1e-15);
        let back: Measure = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
