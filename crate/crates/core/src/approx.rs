//! Best approximation by convex-polynomials.
//!
//! Least squares in `L²(μ)` is a quadratic program over the probability
//! simplex, solved by away-step conditional gradient; the uniform problem
//! on a grid is a linear program solved by the dense simplex method. The
//! probes run either solver over a degree sequence and compare the result
//! with the exact lower bound forced by `|p| <= 1` on `[-1, 1]` and
//! `p >= 0` on `[0, ∞)`.

use std::sync::Mutex;

use crate::dd::Dd;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{moment, weighted_moment_auto, Measure, MeasureError};
use crate::polycore::{horner, make_convex, ConvexPolynomial, MassPolicy, LOG_DOMAIN_THRESHOLD};
use crate::quadrature::{adaptive_integrate, GaussLegendre};
use crate::simplex::{LinearProgram, LpError, RowKind};

/// Target or weight function.
pub type Target<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_THRESHOLD: f64 = 1e-2;
/// Default bound on `p(max |x|)` in uniform solves; see [`UniformOptions`].
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;
const WEIGHT_FLOOR: f64 = 1e-12;
const RHS_PERTURBATION: f64 = 1e-20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("Gram matrix has negative curvature {curvature:e} (norm {norm:e})")]
    NonPsdModel { curvature: f64, norm: f64 },
    #[error("internal LP failure: {0}")]
    Infeasible(LpError),
    #[error("monomials of degree {degree} overflow on a grid of radius {radius}")]
    RangeOverflow { degree: usize, radius: f64 },
    #[error("grid is empty")]
    EmptyGrid,
    #[error("grid is not sorted or not finite")]
    BadGrid,
    #[error("target is not finite at x = {x}")]
    NonFiniteTarget { x: f64 },
    #[error("tolerance {0} must be positive")]
    BadTolerance(f64),
    #[error("need a < b, got [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },
    #[error("degree list must be nonempty and increasing")]
    BadDegrees,
    #[error("start point has {got} coefficients, model degree allows {max}")]
    BadStart { got: usize, max: usize },
    #[error("measure support meets [-1, inf): {witness}")]
    SupportViolation { witness: String },
    #[error("weight vanishes (|f| < 1e-12) at x = {x}")]
    WeightVanishes { x: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    /// The objective stopped improving before the gap closed.
    Stalled,
    IterLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationResult {
    pub poly: ConvexPolynomial,
    /// Norm of the residual (L² or max over the grid).
    pub error: f64,
    pub degree_cap: usize,
    pub iterations: usize,
    /// Frank–Wolfe gap (L²) or error minus the LP dual bound (uniform).
    pub gap: f64,
    pub status: SolveStatus,
}

/// `‖Σ a_k x^k − f‖² = aᵀ G a − 2 aᵀ b + constant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    degree: usize,
    /// Row-major `(N + 1) x (N + 1)`.
    gram: Vec<f64>,
    linear: Vec<f64>,
    constant: f64,
    /// Quadrature discretization of the same norm, when built from a measure.
    #[serde(skip)]
    samples: Option<Samples>,
}

/// Nodes `x_i`, weights `w_i`, basis multipliers `φ_i` and targets `y_i`
/// with `‖p φ − y‖² = Σ w_i (p(x_i) φ_i − y_i)²` exactly for polynomials
/// of the model degree. Residuals formed at the nodes avoid the
/// cancellation inherent in `aᵀ G a − 2 aᵀ b + c`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Samples {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub phi: Vec<f64>,
    pub y: Vec<f64>,
}

const SAMPLE_PANELS: usize = 4;
/// Per piece; panels beyond the initial ones are spent where the target
/// is rough (kinks, steep ends).
const MAX_SAMPLE_PANELS: usize = 512;
const SAMPLE_RTOL: f64 = 1e-13;

impl Samples {
    /// Atoms plus composite Gauss–Legendre nodes on each piece, exact for
    /// `p² × density` with `deg p <= n`. Panels are bisected until the
    /// target terms `∫ y φ dμ` and `∫ y² dμ` are resolved as well.
    fn for_measure(mu: &Measure, n: usize, phi: Target, y: Target) -> Samples {
        let mut s = Samples::default();
        for &(x, w) in mu.atoms() {
            s.push(x, w, phi(x), y(x));
        }
        for p in mu.pieces() {
            let rule = GaussLegendre::new(n + p.density.len() / 2 + 2);
            let terms = |l: f64, u: f64| {
                rule.on_interval(l, u).fold([0.0; 4], |acc, (x, w)| {
                    let (yx, dw) = (y(x), w * horner(&p.density, x));
                    let cross = dw * yx * phi(x);
                    let sq = dw * yx * yx;
                    [acc[0] + cross, acc[1] + sq, acc[2] + cross.abs(), acc[3] + sq.abs()]
                })
            };
            // (l, u, terms, error estimate against the two halves)
            let split = |l: f64, u: f64| {
                let whole = terms(l, u);
                let m = 0.5 * (l + u);
                let (a, b) = (terms(l, m), terms(m, u));
                let err = (whole[0] - a[0] - b[0]).abs() + (whole[1] - a[1] - b[1]).abs();
                (l, u, whole, err)
            };
            let h = (p.u() - p.l()) / SAMPLE_PANELS as f64;
            let mut panels: Vec<_> = (0..SAMPLE_PANELS)
                .map(|k| split(p.l() + h * k as f64, p.l() + h * (k + 1) as f64))
                .collect();
            while panels.len() < MAX_SAMPLE_PANELS {
                let scale: f64 = panels.iter().map(|q| q.2[2] + q.2[3]).sum();
                let err: f64 = panels.iter().map(|q| q.3).sum();
                if err <= SAMPLE_RTOL * scale {
                    break;
                }
                let worst = (0..panels.len())
                    .max_by(|&i, &j| panels[i].3.total_cmp(&panels[j].3))
                    .unwrap();
                let (l, u, _, _) = panels[worst];
                let m = 0.5 * (l + u);
                if !(l < m && m < u) {
                    break;
                }
                panels[worst] = split(l, m);
                panels.insert(worst + 1, split(m, u));
            }
            for &(l, u, _, _) in &panels {
                for (x, w) in rule.on_interval(l, u) {
                    s.push(x, w * horner(&p.density, x), phi(x), y(x));
                }
            }
        }
        s
    }

    fn push(&mut self, x: f64, w: f64, phi: f64, y: f64) {
        self.x.push(x);
        self.w.push(w);
        self.phi.push(phi);
        self.y.push(y);
    }

    fn residual_norm(&self, p: &ConvexPolynomial) -> f64 {
        let sq: f64 = (0..self.x.len())
            .map(|i| self.w[i] * (p.value(self.x[i]) * self.phi[i] - self.y[i]).powi(2))
            .sum();
        sq.max(0.0).sqrt()
    }
}

impl QuadraticModel {
    pub fn new(gram: Vec<Vec<f64>>, linear: Vec<f64>, constant: f64) -> Self {
        let n1 = linear.len();
        assert!(n1 > 0 && gram.len() == n1 && gram.iter().all(|r| r.len() == n1));
        QuadraticModel {
            degree: n1 - 1,
            gram: gram.concat(),
            linear,
            constant,
            samples: None,
        }
    }

    /// Discrete model `Σ w_i (p(x_i) − y_i)²` over degrees `0..=n`.
    pub fn from_samples(x: &[f64], w: &[f64], y: &[f64], n: usize) -> QuadraticModel {
        let hankel: Vec<f64> = (0..=2 * n)
            .map(|k| x.iter().zip(w).map(|(&xi, &wi)| wi * xi.powi(k as i32)).sum())
            .collect();
        let linear = (0..=n)
            .map(|j| (0..x.len()).map(|i| w[i] * y[i] * x[i].powi(j as i32)).sum())
            .collect();
        let constant = w.iter().zip(y).map(|(wi, yi)| wi * yi * yi).sum();
        let gram = (0..=n).map(|j| hankel[j..=j + n].to_vec()).collect();
        let mut model = QuadraticModel::new(gram, linear, constant);
        model.samples = Some(Samples {
            x: x.to_vec(),
            w: w.to_vec(),
            phi: vec![1.0; x.len()],
            y: y.to_vec(),
        });
        model
    }

    pub fn samples(&self) -> Option<&Samples> {
        self.samples.as_ref()
    }

    /// `‖p − f‖` for the modelled norm: from the node residuals when
    /// available, else from the quadratic form.
    pub fn error_of(&self, p: &ConvexPolynomial) -> f64 {
        match &self.samples {
            Some(s) => s.residual_norm(p),
            None => self.objective(p.coeffs()).max(0.0).sqrt(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn gram(&self, j: usize, k: usize) -> f64 {
        self.gram[j * (self.degree + 1) + k]
    }

    pub fn gram_row(&self, j: usize) -> &[f64] {
        let n1 = self.degree + 1;
        &self.gram[j * n1..(j + 1) * n1]
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Leading `(n + 1)`-dimensional submodel (degree cap `n`).
    pub fn truncated(&self, n: usize) -> QuadraticModel {
        let n = n.min(self.degree);
        QuadraticModel {
            degree: n,
            gram: (0..=n).flat_map(|j| self.gram_row(j)[..=n].iter().copied()).collect(),
            linear: self.linear[..=n].to_vec(),
            constant: self.constant,
            samples: self.samples.clone(),
        }
    }

    /// `aᵀ G a − 2 aᵀ b + constant`, accumulated in double-double. Shorter
    /// `a` is padded with zeros.
    pub fn objective(&self, a: &[f64]) -> f64 {
        let mut acc = Dd::from(self.constant);
        for (j, &aj) in a.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            let row = self.gram_row(j);
            let mut inner = Dd::from(-2.0 * self.linear[j]);
            for (k, &ak) in a.iter().enumerate() {
                if ak != 0.0 {
                    inner += Dd::mul_f64(row[k], ak);
                }
            }
            acc += inner * aj;
        }
        acc.hi()
    }

    fn frobenius(&self) -> f64 {
        self.gram.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn mul(&self, v: &[f64]) -> Vec<f64> {
        (0..=self.degree)
            .map(|j| self.gram_row(j).iter().zip(v).map(|(g, x)| g * x).sum())
            .collect()
    }

    /// Estimates the extreme eigenvalues by power iteration and rejects
    /// `λ_min < −1e−8 ‖G‖`.
    pub fn check_psd(&self) -> Result<(), ApproxError> {
        let n1 = self.degree + 1;
        if self.gram.iter().any(|v| !v.is_finite()) {
            return Err(ApproxError::NonPsdModel {
                curvature: f64::NAN,
                norm: f64::INFINITY,
            });
        }
        let norm = self.frobenius();
        if norm == 0.0 {
            return Ok(());
        }
        let tol = 1e-8 * norm;
        if let Some(j) = (0..n1).find(|&j| self.gram(j, j) < -tol) {
            return Err(ApproxError::NonPsdModel {
                curvature: self.gram(j, j),
                norm,
            });
        }
        // Power iteration on ‖G‖ I − G converges to ‖G‖ − λ_min.
        let mut v: Vec<f64> = (0..n1).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut rayleigh = 0.0;
        for _ in 0..500 {
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= vn);
            let gv = self.mul(&v);
            let w: Vec<f64> = v.iter().zip(&gv).map(|(x, g)| norm * x - g).collect();
            let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
            let done = (next - rayleigh).abs() <= 1e-14 * norm;
            rayleigh = next;
            v = w;
            if done {
                break;
            }
        }
        let lambda_min = norm - rayleigh;
        if lambda_min < -tol {
            return Err(ApproxError::NonPsdModel {
                curvature: lambda_min,
                norm,
            });
        }
        Ok(())
    }
}

/// Least-squares model of `f` in `L²(μ)` over degrees `0..=n`.
pub fn build_quadratic_model(mu: &Measure, f: Target, n: usize) -> Result<QuadraticModel, ApproxError> {
    let hankel: Vec<f64> = (0..=2 * n).into_par_iter().map(|k| moment(mu, k).value).collect();
    let linear = (0..=n)
        .into_par_iter()
        .map(|j| weighted_moment_auto(mu, f, j).map(|r| r.value))
        .collect::<Result<Vec<_>, _>>()?;
    let constant = weighted_moment_auto(mu, &|x: f64| f(x) * f(x), 0)?.value;
    let gram = (0..=n).map(|j| hankel[j..=j + n].to_vec()).collect();
    let mut model = QuadraticModel::new(gram, linear, constant);
    model.samples = Some(Samples::for_measure(mu, n, &|_| 1.0, f));
    Ok(model)
}

/// Model of `‖p·w − target‖²` in `L²(μ)`: Gram `∫ x^{j+k} w² dμ`,
/// linear `∫ x^j w·target dμ`, constant `∫ target² dμ`.
fn build_weighted_model(mu: &Measure, w: Target, target: Target, n: usize) -> Result<QuadraticModel, ApproxError> {
    let w2 = |x: f64| w(x) * w(x);
    let hankel = (0..=2 * n)
        .into_par_iter()
        .map(|k| weighted_moment_auto(mu, &w2, k).map(|r| r.value))
        .collect::<Result<Vec<_>, _>>()?;
    let wt = |x: f64| w(x) * target(x);
    let linear = (0..=n)
        .into_par_iter()
        .map(|j| weighted_moment_auto(mu, &wt, j).map(|r| r.value))
        .collect::<Result<Vec<_>, _>>()?;
    let constant = weighted_moment_auto(mu, &|x: f64| target(x) * target(x), 0)?.value;
    let gram = (0..=n).map(|j| hankel[j..=j + n].to_vec()).collect();
    let mut model = QuadraticModel::new(gram, linear, constant);
    model.samples = Some(Samples::for_measure(mu, n, w, target));
    Ok(model)
}

/// `‖p − f‖_{L²(μ)}` by adaptive quadrature of the residual.
pub fn l2_distance(mu: &Measure, f: Target, p: &ConvexPolynomial) -> f64 {
    let mut total = 0.0;
    for &(x, w) in mu.atoms() {
        total += w * (p.value(x) - f(x)).powi(2);
    }
    let rule = GaussLegendre::new(16);
    for piece in mu.pieces() {
        let integrand = |x: f64| (p.value(x) - f(x)).powi(2) * horner(&piece.density, x);
        total += adaptive_integrate(&rule, piece.l(), piece.u(), 1e-12, &integrand);
    }
    total.max(0.0).sqrt()
}

/// Minimizes the model over the simplex, warm-starting through the degree
/// caps 1, 2, 4, ... below `model.degree`: each stage's optimum is feasible
/// for the next. Models sharing a prefix share the path, so the result is
/// nonincreasing along any doubling ladder of caps. `iterations` is the
/// total over stages.
pub fn best_l2(model: &QuadraticModel, tol: f64, max_iter: usize) -> Result<ApproximationResult, ApproxError> {
    let mut stages: Vec<usize> = std::iter::successors(Some(1usize), |d| Some(d * 2))
        .take_while(|&d| d < model.degree)
        .collect();
    stages.push(model.degree);
    let mut iterations = 0;
    let mut warm: Option<ApproximationResult> = None;
    for d in stages {
        let start = warm.as_ref().map(|r| &r.poly);
        let r = if d == model.degree {
            best_l2_from(model, start, tol, max_iter)?
        } else {
            best_l2_from(&model.truncated(d), start, tol, max_iter)?
        };
        iterations += r.iterations;
        warm = Some(r);
    }
    let mut r = warm.expect("at least one stage");
    r.iterations = iterations;
    Ok(r)
}

/// Away-step conditional gradient with exact line search, interleaved with
/// conjugate-gradient sweeps on the active face. `start` (possibly of a
/// lower degree) is the initial simplex point; by default the vertex with
/// the smallest objective.
pub fn best_l2_from(
    model: &QuadraticModel,
    start: Option<&ConvexPolynomial>,
    tol: f64,
    max_iter: usize,
) -> Result<ApproximationResult, ApproxError> {
    if !(tol > 0.0) {
        return Err(ApproxError::BadTolerance(tol));
    }
    model.check_psd()?;
    let n1 = model.degree + 1;
    let mut a = vec![0.0; n1];
    match start {
        Some(p) => {
            if p.coeffs().len() > n1 {
                return Err(ApproxError::BadStart {
                    got: p.coeffs().len(),
                    max: n1,
                });
            }
            a[..p.coeffs().len()].copy_from_slice(p.coeffs());
        }
        None => {
            let best = (0..n1)
                .map(|j| model.gram(j, j) - 2.0 * model.linear[j])
                .enumerate()
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap()
                .0;
            a[best] = 1.0;
        }
    }
    let mut solver = FrankWolfe::new(model, a);
    let norm = model.frobenius();
    let mut status = SolveStatus::IterLimit;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut checkpoint = solver.objective();
    while iterations < max_iter {
        gap = solver.fw_gap();
        if gap <= tol {
            status = SolveStatus::Converged;
            break;
        }
        solver.step(norm)?;
        iterations += 1;
        if iterations % FACE_SWEEP_EVERY == 0 {
            solver.face_sweep();
        }
        if iterations % RESYNC_EVERY == 0 {
            solver.resync();
        }
        if iterations % STALL_WINDOW == 0 {
            let now = solver.objective();
            if checkpoint - now <= STALL_RTOL * checkpoint.abs() {
                status = SolveStatus::Stalled;
                gap = solver.fw_gap();
                break;
            }
            checkpoint = now;
        }
    }
    if status == SolveStatus::IterLimit {
        gap = solver.fw_gap();
        if gap <= tol {
            status = SolveStatus::Converged;
        }
    }
    let poly = make_convex(&solver.a, MassPolicy::Renormalize).expect("iterate stays on the simplex");
    let error = model.error_of(&poly);
    Ok(ApproximationResult {
        poly,
        error,
        degree_cap: model.degree,
        iterations,
        gap: gap.max(0.0),
        status,
    })
}

const FACE_SWEEP_EVERY: usize = 25;
const RESYNC_EVERY: usize = 500;
const STALL_WINDOW: usize = 5000;
const STALL_RTOL: f64 = 1e-9;

/// Iterate state. Everything the solver needs is linear in `a`: either
/// `G a` (Gram form) or the residual at the quadrature nodes (sampled
/// form). A direction `d` is applied through its image (`G d` or `V d`).
struct FrankWolfe<'m> {
    model: &'m QuadraticModel,
    /// Columns `V_k = φ x^k` at the nodes, sampled form only.
    columns: Option<Vec<Vec<f64>>>,
    a: Vec<f64>,
    /// `G a`, or the residual `V a − y`.
    state: Vec<f64>,
    grad: Vec<f64>,
}

impl<'m> FrankWolfe<'m> {
    fn new(model: &'m QuadraticModel, a: Vec<f64>) -> Self {
        let columns = model.samples.as_ref().map(|s| {
            (0..=model.degree)
                .map(|k| s.x.iter().zip(&s.phi).map(|(&x, &p)| p * x.powi(k as i32)).collect())
                .collect()
        });
        let mut fw = FrankWolfe {
            model,
            columns,
            a,
            state: Vec::new(),
            grad: Vec::new(),
        };
        fw.resync();
        fw
    }

    fn resync(&mut self) {
        let mass: f64 = self.a.iter().sum();
        self.a.iter_mut().for_each(|x| *x /= mass);
        self.state = match (&self.columns, &self.model.samples) {
            (Some(cols), Some(s)) => {
                let mut r: Vec<f64> = s.y.iter().map(|y| -y).collect();
                for (col, &ak) in cols.iter().zip(&self.a) {
                    if ak != 0.0 {
                        r.iter_mut().zip(col).for_each(|(ri, v)| *ri += ak * v);
                    }
                }
                r
            }
            _ => self.model.mul(&self.a),
        };
        self.refresh_grad();
    }

    fn refresh_grad(&mut self) {
        self.grad = match (&self.columns, &self.model.samples) {
            (Some(cols), Some(s)) => {
                let wr: Vec<f64> = s.w.iter().zip(&self.state).map(|(w, r)| w * r).collect();
                cols.iter()
                    .map(|c| 2.0 * c.iter().zip(&wr).map(|(v, x)| v * x).sum::<f64>())
                    .collect()
            }
            _ => self
                .state
                .iter()
                .zip(&self.model.linear)
                .map(|(g, b)| 2.0 * (g - b))
                .collect(),
        };
    }

    /// Image of the vertex `e_j`.
    fn vertex_image(&self, j: usize) -> Vec<f64> {
        match &self.columns {
            Some(cols) => cols[j].clone(),
            None => self.model.gram_row(j).to_vec(),
        }
    }

    /// Image of the current point `a`.
    fn current_image(&self) -> Vec<f64> {
        match &self.model.samples {
            Some(s) if self.columns.is_some() => self.state.iter().zip(&s.y).map(|(r, y)| r + y).collect(),
            _ => self.state.clone(),
        }
    }

    /// `dᵀ G d` from the image of `d`.
    fn curvature(&self, d: impl Fn(usize) -> f64, image: &[f64]) -> f64 {
        match &self.model.samples {
            Some(s) if self.columns.is_some() => s.w.iter().zip(image).map(|(w, v)| w * v * v).sum(),
            _ => image.iter().enumerate().map(|(j, v)| d(j) * v).sum(),
        }
    }

    fn advance(&mut self, image: &[f64], gamma: f64) {
        self.state.iter_mut().zip(image).for_each(|(s, v)| *s += gamma * v);
        self.refresh_grad();
    }

    fn objective(&self) -> f64 {
        match &self.model.samples {
            Some(s) if self.columns.is_some() => s.w.iter().zip(&self.state).map(|(w, r)| w * r * r).sum(),
            _ => self.model.objective(&self.a),
        }
    }

    fn grad_dot_a(&self) -> f64 {
        self.a.iter().zip(&self.grad).map(|(x, g)| x * g).sum()
    }

    fn fw_gap(&self) -> f64 {
        let min = self.grad.iter().copied().fold(f64::INFINITY, f64::min);
        self.grad_dot_a() - min
    }

    fn step(&mut self, norm: f64) -> Result<(), ApproxError> {
        let n1 = self.a.len();
        let gdot = self.grad_dot_a();
        let (s, gs) = (0..n1)
            .map(|j| (j, self.grad[j]))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        let (v, gv) = (0..n1)
            .filter(|&j| self.a[j] > 0.0)
            .map(|j| (j, self.grad[j]))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        let fw = gdot - gs;
        let away = gv - gdot;
        let current = self.current_image();
        if fw >= away || self.a[v] >= 1.0 {
            // d = e_s − a.
            let image: Vec<f64> = self.vertex_image(s).iter().zip(&current).map(|(x, c)| x - c).collect();
            let a = &self.a;
            let curv = self.curvature(|j| f64::from(u8::from(j == s)) - a[j], &image);
            let gamma = line_step(fw, curv, 1.0, norm)?;
            self.a.iter_mut().for_each(|x| *x *= 1.0 - gamma);
            self.a[s] += gamma;
            self.advance(&image, gamma);
        } else {
            // d = a − e_v.
            let image: Vec<f64> = current.iter().zip(self.vertex_image(v)).map(|(c, x)| c - x).collect();
            let a = &self.a;
            let curv = self.curvature(|j| a[j] - f64::from(u8::from(j == v)), &image);
            let gmax = self.a[v] / (1.0 - self.a[v]);
            let gamma = line_step(away, curv, gmax, norm)?;
            self.a.iter_mut().for_each(|x| *x *= 1.0 + gamma);
            self.a[v] = if gamma >= gmax {
                0.0
            } else {
                (self.a[v] - gamma).max(0.0)
            };
            self.advance(&image, gamma);
        }
        Ok(())
    }

    /// Projected conjugate gradient on `{a_S : Σ a_S = 1}` for the current
    /// support `S`, stopping at the first bound hit. Reverted unless it
    /// lowers the objective.
    fn face_sweep(&mut self) {
        let support: Vec<usize> = (0..self.a.len()).filter(|&j| self.a[j] > 0.0).collect();
        let k = support.len();
        if k < 2 {
            return;
        }
        let saved = (self.a.clone(), self.state.clone(), self.grad.clone());
        let before = self.objective();
        let residual = |fw: &Self| -> Vec<f64> {
            let g: Vec<f64> = support.iter().map(|&j| -fw.grad[j]).collect();
            let mean = g.iter().sum::<f64>() / k as f64;
            g.iter().map(|x| x - mean).collect()
        };
        let images: Vec<Vec<f64>> = support.iter().map(|&j| self.vertex_image(j)).collect();
        let mut p = residual(self);
        let mut rr: f64 = p.iter().map(|x| x * x).sum();
        let rr0 = rr;
        for _ in 0..2 * k {
            if rr <= 1e-30 * rr0 || rr == 0.0 {
                break;
            }
            let mut image = vec![0.0; self.state.len()];
            for (img, &pi) in images.iter().zip(&p) {
                image.iter_mut().zip(img).for_each(|(x, v)| *x += pi * v);
            }
            let mut dense = vec![0.0; self.a.len()];
            for (&j, &pj) in support.iter().zip(&p) {
                dense[j] = pj;
            }
            let curv = 2.0 * self.curvature(|j| dense[j], &image);
            if !(curv > 0.0) {
                break;
            }
            let mut alpha = rr / curv;
            let mut blocking = None;
            for (idx, &pi) in p.iter().enumerate() {
                if pi < 0.0 {
                    let lim = self.a[support[idx]] / -pi;
                    if lim < alpha {
                        alpha = lim;
                        blocking = Some(idx);
                    }
                }
            }
            for (idx, &i) in support.iter().enumerate() {
                self.a[i] = (self.a[i] + alpha * p[idx]).max(0.0);
            }
            self.advance(&image, alpha);
            if let Some(idx) = blocking {
                self.a[support[idx]] = 0.0;
                break;
            }
            let r_new = residual(self);
            let rr_new: f64 = r_new.iter().map(|x| x * x).sum();
            let beta = rr_new / rr;
            for (pi, ri) in p.iter_mut().zip(&r_new) {
                *pi = ri + beta * *pi;
            }
            rr = rr_new;
        }
        let mass: f64 = self.a.iter().sum();
        if !(mass > 0.0) {
            (self.a, self.state, self.grad) = saved;
            return;
        }
        self.resync();
        if !(self.objective() < before) {
            (self.a, self.state, self.grad) = saved;
        }
    }
}

/// Exact line search for `γ ↦ −slope_gap·γ + curv·γ²` on `[0, γ_max]`.
fn line_step(slope_gap: f64, curv: f64, gmax: f64, norm: f64) -> Result<f64, ApproxError> {
    if curv > 0.0 {
        return Ok((slope_gap / (2.0 * curv)).min(gmax));
    }
    // The curvature is a difference of large Gram entries; only a clearly
    // negative value is evidence against positive semidefiniteness.
    if curv < -1e-8 * norm {
        return Err(ApproxError::NonPsdModel { curvature: curv, norm });
    }
    Ok(gmax)
}

/// Options for [`best_uniform_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformOptions {
    /// Upper bound on `p(R)`, `R = max |grid|`, added as an LP row. Keeps
    /// the coefficients small enough that the residual survives evaluation
    /// in double precision; `None` solves the plain Chebyshev problem.
    pub condition_cap: Option<f64>,
    pub max_iter: usize,
}

impl Default for UniformOptions {
    fn default() -> Self {
        UniformOptions {
            condition_cap: Some(DEFAULT_CONDITION_CAP),
            max_iter: 200_000,
        }
    }
}

/// Discrete Chebyshev approximation on `grid` with default options.
pub fn best_uniform(f: Target, grid: &[f64], n: usize) -> Result<ApproximationResult, ApproxError> {
    best_uniform_with(f, grid, n, &UniformOptions::default())
}

/// Solves `min t` s.t. `|Σ a_k x_i^k − f(x_i)| <= t`, `a` on the simplex,
/// through its dual (every row has a nonnegative right-hand side, so the
/// slack basis is feasible). Columns are scaled by `R^{-k}`; the primal
/// coefficients are the dual's row multipliers. The returned error is the
/// residual recomputed on the grid.
pub fn best_uniform_with(
    f: Target,
    grid: &[f64],
    n: usize,
    opts: &UniformOptions,
) -> Result<ApproximationResult, ApproxError> {
    if grid.is_empty() {
        return Err(ApproxError::EmptyGrid);
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(ApproxError::BadGrid);
    }
    let radius = grid.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if n as f64 * radius.ln() > LOG_DOMAIN_THRESHOLD {
        return Err(ApproxError::RangeOverflow { degree: n, radius });
    }
    let fx: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    if let Some(i) = fx.iter().position(|v| !v.is_finite()) {
        return Err(ApproxError::NonFiniteTarget { x: grid[i] });
    }
    let m = grid.len();
    let scale_base = if radius > 0.0 { radius } else { 1.0 };
    let scale: Vec<f64> = (0..=n).map(|k| scale_base.powi(-(k as i32))).collect();
    // Scaled Vandermonde (x_i / R)^k, within [-1, 1].
    let vander: Vec<Vec<f64>> = grid
        .iter()
        .map(|&x| {
            let t = x / scale_base;
            let mut row = Vec::with_capacity(n + 1);
            let mut v = 1.0;
            for _ in 0..=n {
                row.push(v);
                v *= t;
            }
            row
        })
        .collect();
    if vander.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ApproxError::RangeOverflow { degree: n, radius });
    }

    // Columns: u_i, v_i (i < m), λ⁺, λ⁻, [w]. Rows k = 0..=n, then t.
    let cap = opts.condition_cap;
    let nx = 2 * m + 2 + usize::from(cap.is_some());
    let mut rows = vec![vec![0.0; nx]; n + 2];
    for k in 0..=n {
        let row = &mut rows[k];
        for i in 0..m {
            row[i] = -vander[i][k];
            row[m + i] = vander[i][k];
        }
        row[2 * m] = scale[k];
        row[2 * m + 1] = -scale[k];
        if let Some(c) = cap {
            // Cap multiplier scaled by C, so the cost stays O(1).
            row[2 * m + 2] = -1.0 / c;
        }
    }
    for i in 0..2 * m {
        rows[n + 1][i] = 1.0;
    }
    let mut objective = vec![0.0; nx];
    for i in 0..m {
        objective[i] = -fx[i];
        objective[m + i] = fx[i];
    }
    objective[2 * m] = 1.0;
    objective[2 * m + 1] = -1.0;
    if cap.is_some() {
        objective[2 * m + 2] = -1.0;
    }
    // The coefficient rows have zero right-hand sides, which makes the dual
    // massively degenerate. Tiny distinct perturbations break the ties; in
    // primal terms they add Σ ε_k ã_k to the objective, so the recovered
    // polynomial stays feasible and its error is recomputed below.
    let mut rhs: Vec<f64> = (0..=n)
        .map(|k| RHS_PERTURBATION * (1.0 + (k as f64 * 0.618_033_988_749_895).fract()))
        .collect();
    rhs.push(1.0);
    let lp = LinearProgram {
        rows,
        kinds: vec![RowKind::Le; n + 2],
        rhs,
        objective,
    };
    let sol = lp.solve(opts.max_iter).map_err(ApproxError::Infeasible)?;
    let coeffs: Vec<f64> = (0..=n).map(|k| (sol.duals_dd[k] * scale[k]).hi().max(0.0)).collect();
    let poly = make_convex(&coeffs, MassPolicy::Renormalize)
        .map_err(|_| ApproxError::Infeasible(LpError::Infeasible(coeffs.iter().sum::<f64>())))?;
    let error = grid
        .iter()
        .zip(&fx)
        .map(|(&x, &y)| (poly.value(x) - y).abs())
        .fold(0.0, f64::max);
    Ok(ApproximationResult {
        poly,
        error,
        degree_cap: n,
        iterations: sol.iterations,
        gap: (error - sol.objective).max(0.0),
        status: SolveStatus::Converged,
    })
}

/// `m` Chebyshev points of the first kind mapped to `[a, b]`, ascending.
pub fn chebyshev_grid(a: f64, b: f64, m: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..m)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * m) as f64;
            0.5 * (a + b) - 0.5 * (b - a) * theta.cos()
        })
        .collect();
    g.sort_by(f64::total_cmp);
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    L2,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    /// Dense-consistent once `final <= threshold · initial`.
    pub threshold: f64,
    pub grid_points: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub uniform: UniformOptions,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            threshold: DEFAULT_THRESHOLD,
            grid_points: DEFAULT_GRID_POINTS,
            tol: 1e-10,
            max_iter: 200_000,
            uniform: UniformOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum DensityVerdict {
    DenseConsistent,
    /// Every convex-polynomial is at distance at least `bound`; `witness`
    /// is where the pointwise bound is largest.
    Obstructed {
        bound: f64,
        witness: f64,
    },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub mode: ProbeMode,
    pub degrees: Vec<usize>,
    pub results: Vec<ApproximationResult>,
    pub verdict: DensityVerdict,
}

impl DensityReport {
    pub fn errors(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.error).collect()
    }
}

/// Distance from `y` to the set of values convex-polynomials can take at
/// `x`: `[-1, 1]` on `[-1, 0)`, `[0, 1]` on `[0, 1]`, `[0, ∞)` beyond.
pub fn pointwise_obstruction(x: f64, y: f64) -> f64 {
    let (lo, hi) = if x < -1.0 {
        return 0.0;
    } else if x < 0.0 {
        (-1.0, 1.0)
    } else if x <= 1.0 {
        (0.0, 1.0)
    } else {
        (0.0, f64::INFINITY)
    };
    (lo - y).max(y - hi).max(0.0)
}

const OBSTRUCTION_SAMPLES: usize = 4097;

/// Lower bound on the distance from `f` to all convex-polynomials over
/// `[a, b]`: the sup of the pointwise bound (uniform) or its `L²` norm.
pub fn obstruction_bound(a: f64, b: f64, f: Target, mode: ProbeMode) -> (f64, f64) {
    if b < -1.0 {
        return (0.0, a);
    }
    let lo = a.max(-1.0);
    let beta = |x: f64| pointwise_obstruction(x, f(x));
    let (mut best, mut witness) = (0.0, lo);
    for i in 0..OBSTRUCTION_SAMPLES {
        let x = lo + (b - lo) * i as f64 / (OBSTRUCTION_SAMPLES - 1) as f64;
        let v = beta(x);
        if v > best {
            best = v;
            witness = x;
        }
    }
    match mode {
        ProbeMode::Uniform => (best, witness),
        ProbeMode::L2 => {
            if best == 0.0 || lo >= b {
                return (0.0, witness);
            }
            let rule = GaussLegendre::new(16);
            let sq = adaptive_integrate(&rule, lo, b, 1e-12, &|x: f64| beta(x).powi(2));
            (sq.max(0.0).sqrt(), witness)
        }
    }
}

/// `max |p − f|` over `OBSTRUCTION_SAMPLES` equispaced points of `[a, b]`
/// (endpoints included).
pub fn sup_distance(a: f64, b: f64, f: Target, p: &ConvexPolynomial) -> f64 {
    (0..OBSTRUCTION_SAMPLES)
        .map(|i| {
            let x = a + (b - a) * i as f64 / (OBSTRUCTION_SAMPLES - 1) as f64;
            (p.value(x) - f(x)).abs()
        })
        .fold(0.0, f64::max)
}

/// Error curve over `degrees` against Lebesgue measure on `(a, b)` (`l2`)
/// or a Chebyshev grid on `[a, b]` (`uniform`), with a verdict.
///
/// Reported errors are norms over the whole interval, not the solver's
/// discretization: L² by adaptive quadrature, uniform as the larger of the
/// grid maximum and [`sup_distance`].
///
/// L² solves are warm-started from the previous degree. Uniform solves run
/// in parallel; should one come back worse than a lower degree, the
/// lower-degree polynomial is carried forward, as it is feasible for the
/// larger cap.
pub fn density_probe(
    a: f64,
    b: f64,
    f: Target,
    degrees: &[usize],
    mode: ProbeMode,
    opts: &ProbeOptions,
) -> Result<DensityReport, ApproxError> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(ApproxError::BadInterval { a, b });
    }
    if degrees.is_empty() || degrees.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ApproxError::BadDegrees);
    }
    let results = match mode {
        ProbeMode::L2 => {
            let mu = Measure::lebesgue(a, b)?;
            let full = build_quadratic_model(&mu, f, *degrees.last().unwrap())?;
            let mut out: Vec<ApproximationResult> = Vec::with_capacity(degrees.len());
            for &n in degrees {
                let model = full.truncated(n);
                let start = out.last().map(|r| &r.poly);
                let mut r = best_l2_from(&model, start, opts.tol, opts.max_iter)?;
                r.error = l2_distance(&mu, f, &r.poly);
                out.push(r);
            }
            out
        }
        ProbeMode::Uniform => {
            let grid = chebyshev_grid(a, b, opts.grid_points);
            let mut out = degrees
                .par_iter()
                .map(|&n| {
                    let mut r = best_uniform_with(f, &grid, n, &opts.uniform)?;
                    r.error = r.error.max(sup_distance(a, b, f, &r.poly));
                    Ok(r)
                })
                .collect::<Result<Vec<_>, ApproxError>>()?;
            for i in 1..out.len() {
                if out[i].error > out[i - 1].error {
                    let prev = out[i - 1].clone();
                    out[i] = ApproximationResult {
                        degree_cap: out[i].degree_cap,
                        ..prev
                    };
                }
            }
            out
        }
    };
    let (bound, witness) = obstruction_bound(a, b, f, mode);
    let first = results[0].error;
    let last = results.last().unwrap().error;
    let verdict = if bound > 1e-12 {
        DensityVerdict::Obstructed { bound, witness }
    } else if last <= opts.threshold * first || last <= 1e-12 {
        DensityVerdict::DenseConsistent
    } else {
        DensityVerdict::Inconclusive
    };
    Ok(DensityReport {
        mode,
        degrees: degrees.to_vec(),
        results,
        verdict,
    })
}

/// Minimizes `‖p·f − target‖_{L²(μ)}` over convex-polynomials of degree
/// `<= n`, for `μ` supported in `(-∞, -1)`.
pub fn weighted_density_probe(
    mu: &Measure,
    f: Target,
    target: Target,
    n: usize,
) -> Result<ApproximationResult, ApproxError> {
    weighted_density_probe_with(mu, f, target, n, 1e-10, 200_000)
}

pub fn weighted_density_probe_with(
    mu: &Measure,
    f: Target,
    target: Target,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<ApproximationResult, ApproxError> {
    if let Some(witness) = mu.mass_at_or_above(-1.0) {
        return Err(ApproxError::SupportViolation { witness });
    }
    // Check the weight where the quadrature will sample it.
    let probe_rule = GaussLegendre::new(64);
    for &(x, _) in mu.atoms() {
        if !(f(x).abs() >= WEIGHT_FLOOR) {
            return Err(ApproxError::WeightVanishes { x });
        }
    }
    for p in mu.pieces() {
        if let Some((x, _)) = probe_rule
            .on_interval(p.l(), p.u())
            .find(|&(x, _)| !(f(x).abs() >= WEIGHT_FLOOR))
        {
            return Err(ApproxError::WeightVanishes { x });
        }
    }
    let vanished = Mutex::new(None);
    let guarded = |x: f64| {
        let v = f(x);
        if !(v.abs() >= WEIGHT_FLOOR) {
            vanished.lock().unwrap().get_or_insert(x);
        }
        v
    };
    let model = build_weighted_model(mu, &guarded, target, n)?;
    if let Some(x) = vanished.into_inner().unwrap() {
        return Err(ApproxError::WeightVanishes { x });
    }
    best_l2(&model, tol, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gram_examples() {
        let mu = Measure::lebesgue(-2.0, -1.0).unwrap();
        let m = build_quadratic_model(&mu, &|x| x, 1).unwrap();
        assert!(close(m.gram(0, 0), 1.0, 1e-14));
        assert!(close(m.gram(0, 1), -1.5, 1e-14));
        assert!(close(m.gram(1, 0), -1.5, 1e-14));
        assert!(close(m.gram(1, 1), 7.0 / 3.0, 1e-14));
        let zero = build_quadratic_model(&mu, &|_| 0.0, 3).unwrap();
        assert!(zero.linear().iter().all(|&b| b == 0.0));
        let atom = Measure::atom(-2.0, 1.0).unwrap();
        let m = build_quadratic_model(&atom, &|x| x, 1).unwrap();
        assert_eq!((m.gram(0, 0), m.gram(0, 1), m.gram(1, 1)), (1.0, -2.0, 4.0));
    }

    #[test]
    fn vertex_target() {
        let mu = Measure::lebesgue(-2.0, -1.0).unwrap();
        let m = build_quadratic_model(&mu, &|x| x, 2).unwrap();
        let r = best_l2(&m, 1e-12, 10_000).unwrap();
        assert!(r.error < 1e-6, "{r:?}");
        assert!(close(r.poly.coeffs()[1], 1.0, 1e-6));
    }

    #[test]
    fn non_psd_rejected() {
        let m = QuadraticModel::new(vec![vec![1.0, 0.0], vec![0.0, -1.0]], vec![0.0, 0.0], 0.0);
        assert!(matches!(best_l2(&m, 1e-8, 100), Err(ApproxError::NonPsdModel { .. })));
    }

    #[test]
    fn uniform_vertex_and_obstruction() {
        let grid = chebyshev_grid(-3.0, -2.0, 64);
        let r = best_uniform(&|x| x, &grid, 3).unwrap();
        assert!(r.error <= 1e-9, "{r:?}");
        let grid = chebyshev_grid(-1.0, 1.0, 64);
        let r = best_uniform(&|_| -5.0, &grid, 6).unwrap();
        assert!(r.error >= 4.0);
    }

    #[test]
    fn uniform_rejects_overflow() {
        let grid = [-1e10, -1.0];
        assert!(matches!(
            best_uniform(&|x| x, &grid, 40),
            Err(ApproxError::RangeOverflow { .. })
        ));
    }

    #[test]
    fn pointwise_bounds() {
        assert_eq!(pointwise_obstruction(-0.5, -5.0), 4.0);
        assert_eq!(pointwise_obstruction(0.0, -5.0), 5.0);
        assert_eq!(pointwise_obstruction(2.0, -5.0), 5.0);
        assert_eq!(pointwise_obstruction(2.0, 50.0), 0.0);
        assert_eq!(pointwise_obstruction(-2.0, -5.0), 0.0);
    }

    #[test]
    fn support_violation() {
        let mu = Measure::new(vec![(-0.5, 1.0)], vec![], true).unwrap();
        assert!(matches!(
            weighted_density_probe(&mu, &|_| 1.0, &|_| 1.0, 3),
            Err(ApproxError::SupportViolation { .. })
        ));
        let mu = Measure::lebesgue(-3.0, -2.0).unwrap();
        assert!(matches!(
            weighted_density_probe(&mu, &|x| x + 2.5, &|_| 1.0, 3),
            Err(ApproxError::WeightVanishes { .. }) | Ok(_)
        ));
        assert!(matches!(
            weighted_density_probe(&mu, &|_| 0.0, &|_| 1.0, 3),
            Err(ApproxError::WeightVanishes { .. })
        ));
    }
}
