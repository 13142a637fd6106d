//! Gauss–Legendre rules on `[-1, 1]` and their affine images.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Nodes and weights of an `order`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes ascending.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let theta = std::f64::consts::PI * (4 * i + 3) as f64 / (4 * n + 2) as f64;
            let mut x = (1.0 - (n as f64 - 1.0) / (8.0 * (n as f64).powi(3))) * theta.cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped to `[l, u]`.
    pub fn on_interval(&self, l: f64, u: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (u - l);
        let mid = 0.5 * (u + l);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, half * w))
    }

    pub fn integrate(&self, l: f64, u: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on_interval(l, u).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Globally adaptive bisection with a fixed Gauss–Legendre rule per panel:
/// the panel with the largest error estimate (|whole − left − right|) is
/// split until the summed estimate is within `tol` of the summed magnitude
/// `Σ|w f|`, or the panel budget runs out. The budget keeps integrands whose
/// rounding noise exceeds `tol` from running away.
pub fn adaptive_integrate(rule: &GaussLegendre, l: f64, u: f64, tol: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let first = Panel::new(rule, l, u, f);
    let (mut err, mut scale) = (first.err, first.scale);
    let mut heap = BinaryHeap::from([first]);
    while heap.len() < MAX_PANELS && err > tol * scale {
        let worst = heap.pop().unwrap();
        let m = 0.5 * (worst.l + worst.u);
        if m <= worst.l || m >= worst.u {
            heap.push(worst);
            break;
        }
        err -= worst.err;
        scale -= worst.scale;
        for p in [Panel::new(rule, worst.l, m, f), Panel::new(rule, m, worst.u, f)] {
            err += p.err;
            scale += p.scale;
            heap.push(p);
        }
    }
    heap.iter().map(|p| p.value).sum()
}

const MAX_PANELS: usize = 4096;

struct Panel {
    l: f64,
    u: f64,
    /// Two-half estimate.
    value: f64,
    err: f64,
    scale: f64,
}

impl Panel {
    fn new(rule: &GaussLegendre, l: f64, u: f64, f: &dyn Fn(f64) -> f64) -> Self {
        let m = 0.5 * (l + u);
        let whole = rule.integrate(l, u, f);
        let value = rule.integrate(l, m, f) + rule.integrate(m, u, f);
        let scale = rule.on_interval(l, u).map(|(x, w)| (w * f(x)).abs()).sum::<f64>();
        Panel {
            l,
            u,
            value,
            err: (value - whole).abs(),
            scale,
        }
    }
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err.total_cmp(&o.err).is_eq()
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}
