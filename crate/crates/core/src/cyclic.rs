//! Multiplication by `x` on a quadrature realization of L²(μ).
//!
//! Functions are node-value vectors, so the operator is exactly diagonal and
//! inner products are exactly quadrature sums. Convex-cyclicity of a vector
//! `f` is probed with the sup criterion: for each of a batch of random
//! functionals `g`, the orbit pairing `⟨Mⁿf, g⟩` must grow without bound.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{weighted_density_probe, ApproxError, ApproximationResult};
use crate::logspace::{signed_log_pow, EvalResult, SignedLogSum};
use crate::measures::{detect_growth, CertificateError, GrowthVerdict, Measure, MeasureError};
use crate::quadrature::GaussLegendre;

/// How many times each sampled member of an invariant set is pushed through `M`.
const INVARIANCE_POWERS: usize = 8;
const INVARIANT_SET_DEGREE: usize = 16;

#[derive(Debug, Error)]
pub enum CyclicError {
    #[error("degree must be at least 1")]
    BadDegree,
    #[error("horizon must be at least 1")]
    BadHorizon,
    #[error("need at least one trial")]
    BadTrials,
    #[error("power must be at least 1")]
    BadPower,
    #[error("scalar must be a nonzero finite number, got {0}")]
    BadScalar(f64),
    #[error("L²(μ) needs a positive measure; negative weight at {x}")]
    NegativeWeight { x: f64 },
    #[error("vector is not finite at node {x}")]
    NonFiniteVector { x: f64 },
    #[error("node-value vector has length {got}, space has {expected} nodes")]
    Length { got: usize, expected: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
}

/// Quadrature nodes and positive weights realizing L²(μ).
#[derive(Debug, Clone, Serialize)]
pub struct DiscretizedSpace {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
    #[serde(skip)]
    pub source: Measure,
}

impl DiscretizedSpace {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().fold(0.0, |s, w| s + w)
    }

    pub fn values(&self, f: &(dyn Fn(f64) -> f64 + Sync)) -> Result<Vec<f64>, CyclicError> {
        self.nodes
            .iter()
            .map(|&x| {
                let v = f(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(CyclicError::NonFiniteVector { x })
                }
            })
            .collect()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }

    /// `Mⁿ f`.
    pub fn apply_power(&self, f: &[f64], n: usize) -> Vec<f64> {
        self.nodes.iter().zip(f).map(|(&x, &v)| v * x.powi(n as i32)).collect()
    }

    fn check_len(&self, v: &[f64]) -> Result<(), CyclicError> {
        if v.len() != self.len() {
            return Err(CyclicError::Length {
                got: v.len(),
                expected: self.len(),
            });
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes on each density piece (enough to integrate
/// `x^{2·degree}` against the density exactly) plus the atoms themselves.
pub fn discretize(mu: &Measure, degree: usize) -> Result<DiscretizedSpace, CyclicError> {
    if degree < 1 {
        return Err(CyclicError::BadDegree);
    }
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for &(x, w) in mu.atoms() {
        if w < 0.0 {
            return Err(CyclicError::NegativeWeight { x });
        }
        if w > 0.0 {
            nodes.push(x);
            weights.push(w);
        }
    }
    for p in mu.pieces() {
        let order = degree + 1 + p.degree().div_ceil(2);
        let rule = GaussLegendre::new(order);
        for (x, w) in rule.on_interval(p.l(), p.u()) {
            let w = w * p.density_at(x);
            if w < 0.0 {
                return Err(CyclicError::NegativeWeight { x });
            }
            if w > 0.0 {
                nodes.push(x);
                weights.push(w);
            }
        }
    }
    Ok(DiscretizedSpace {
        nodes,
        weights,
        degree,
        source: mu.clone(),
    })
}

/// `⟨M^{power·n} f, g⟩` for `n = 0..=horizon`, summed in the log domain.
pub fn orbit_values(f: &[f64], g: &[f64], space: &DiscretizedSpace, horizon: usize, power: usize) -> Vec<EvalResult> {
    (0..=horizon)
        .map(|n| {
            let mut acc = SignedLogSum::new();
            for ((&x, &w), (&a, &b)) in space.nodes.iter().zip(&space.weights).zip(f.iter().zip(g)) {
                let c = w * a * b;
                if c == 0.0 {
                    continue;
                }
                let (s, l) = signed_log_pow(x, power * n);
                if s == 0 {
                    continue;
                }
                let sign = if c < 0.0 { -s } else { s };
                acc.push(sign, l + c.abs().ln());
            }
            acc.finish()
        })
        .collect()
}

/// Growth certificate (or the bounded sup) for `⟨Mⁿf, g⟩`, `n = 0..=horizon`.
pub fn orbit_sup(f: &[f64], g: &[f64], space: &DiscretizedSpace, horizon: usize) -> Result<GrowthVerdict, CyclicError> {
    if horizon < 1 {
        return Err(CyclicError::BadHorizon);
    }
    space.check_len(f)?;
    space.check_len(g)?;
    Ok(detect_growth(&orbit_values(f, g, space, horizon, 1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CyclicStatus {
    CyclicConsistent,
    NotCyclic,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCertificate {
    pub trial: usize,
    pub outcome: GrowthVerdict,
    /// Node values of the functional; kept only when the trial failed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub functional: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclicityVerdict {
    pub status: CyclicStatus,
    /// Analytic reason for a NotCyclic verdict.
    pub witness: Option<String>,
    pub power: usize,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub certificates: Vec<TrialCertificate>,
}

/// The `trial`-th random functional: i.i.d. standard normal node values
/// from its own ChaCha stream, so trials are independent of scheduling.
pub fn random_functional(space: &DiscretizedSpace, seed: u64, trial: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    (0..space.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Randomized sup-criterion test that `f` is convex-cyclic for `M`.
pub fn convex_cyclic_test(
    f: &(dyn Fn(f64) -> f64 + Sync),
    mu: &Measure,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<CyclicityVerdict, CyclicError> {
    odd_power_test(f, mu, 1, horizon, trials, seed)
}

/// Same test for `M^k`, i.e. exponents `k·n`. Even powers are rejected
/// analytically: `x^{kn} ≥ 0`, so the orbit never leaves a half-space.
pub fn odd_power_test(
    f: &(dyn Fn(f64) -> f64 + Sync),
    mu: &Measure,
    power: usize,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<CyclicityVerdict, CyclicError> {
    if power < 1 {
        return Err(CyclicError::BadPower);
    }
    if horizon < 1 {
        return Err(CyclicError::BadHorizon);
    }
    if trials < 1 {
        return Err(CyclicError::BadTrials);
    }
    let space = discretize(mu, horizon)?;
    let fv = space.values(f)?;
    let not_cyclic = |witness: String| CyclicityVerdict {
        status: CyclicStatus::NotCyclic,
        witness: Some(witness),
        power,
        horizon,
        trials,
        seed,
        certificates: Vec::new(),
    };
    if fv.iter().all(|&v| v == 0.0) {
        return Ok(not_cyclic("f = 0 a.e.".into()));
    }
    if let Some(w) = mu.mass_at_or_above(-1.0) {
        return Ok(not_cyclic(format!("mu([-1, inf)) > 0: {w}")));
    }
    if power % 2 == 0 {
        return Ok(not_cyclic(format!(
            "power {power} is even: x^(kn) >= 0, so <M^(kn) f, g> <= 0 for g = -f"
        )));
    }
    let certificates: Vec<TrialCertificate> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let g = random_functional(&space, seed, trial);
            let outcome = detect_growth(&orbit_values(&fv, &g, &space, horizon, power));
            let functional = outcome.certificate().is_none().then_some(g);
            TrialCertificate {
                trial,
                outcome,
                functional,
            }
        })
        .collect();
    let status = if certificates.iter().all(|c| c.outcome.certificate().is_some()) {
        CyclicStatus::CyclicConsistent
    } else {
        CyclicStatus::Inconclusive
    };
    Ok(CyclicityVerdict {
        status,
        witness: None,
        power,
        horizon,
        trials,
        seed,
        certificates,
    })
}

/// Re-checks every certificate of a verdict against orbit pairings
/// recomputed by direct summation (no log domain), with the functionals
/// regenerated from the seed.
pub fn revalidate(
    verdict: &CyclicityVerdict,
    f: &(dyn Fn(f64) -> f64 + Sync),
    mu: &Measure,
) -> Result<(), CertificateError> {
    let space = discretize(mu, verdict.horizon).map_err(|_| CertificateError::Malformed("cannot rebuild the space"))?;
    let fv = space
        .values(f)
        .map_err(|_| CertificateError::Malformed("vector is not finite"))?;
    for c in &verdict.certificates {
        let Some(cert) = c.outcome.certificate() else {
            continue;
        };
        let g = random_functional(&space, verdict.seed, c.trial);
        cert.validate(|n| EvalResult::from_value(space.inner(&space.apply_power(&fv, verdict.power * n), &g)))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvariantSet {
    /// `|f| ≤ 1` μ-a.e. on `[−1, 1]`.
    A,
    /// `f ≥ 0` μ-a.e. on `[0, ∞)`.
    B,
}

impl InvariantSet {
    fn in_region(self, x: f64) -> bool {
        match self {
            InvariantSet::A => (-1.0..=1.0).contains(&x),
            InvariantSet::B => x >= 0.0,
        }
    }

    fn admits(self, v: f64) -> bool {
        match self {
            InvariantSet::A => v.abs() <= 1.0,
            InvariantSet::B => v >= 0.0,
        }
    }

    /// Scalar that pushes the constant 1 out of the set.
    fn escaping_scalar(self) -> f64 {
        match self {
            InvariantSet::A => 2.0,
            InvariantSet::B => -1.0,
        }
    }
}

/// `scalar · h` leaves the set at `node` although `h` is a member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonSubspaceWitness {
    /// The member, a constant function.
    pub h: f64,
    pub scalar: f64,
    pub node: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSetReport {
    pub set: InvariantSet,
    pub region_nodes: usize,
    pub region_mass: f64,
    pub samples: usize,
    /// Membership checks of `M^j h` performed on the defining region.
    pub checks: usize,
    pub violations: usize,
    pub invariant: bool,
    /// The defining region carries no mass, so the constraint is vacuous
    /// and the set is all of L²(μ).
    pub trivial: bool,
    pub witness: Option<NonSubspaceWitness>,
}

/// Samples members of set A or B, pushes them through `M`, and looks for a
/// scalar multiple that leaves the set.
pub fn invariant_set_probe(
    mu: &Measure,
    set: InvariantSet,
    samples: usize,
    seed: u64,
) -> Result<InvariantSetReport, CyclicError> {
    let space = discretize(mu, INVARIANT_SET_DEGREE)?;
    let region: Vec<usize> = (0..space.len()).filter(|&i| set.in_region(space.nodes[i])).collect();
    let region_mass = region.iter().map(|&i| space.weights[i]).fold(0.0, |s, w| s + w);
    let trivial = region.is_empty() || region_mass <= 0.0;

    let results: Vec<(usize, usize)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut h = random_functional(&space, seed, s);
            for &i in &region {
                h[i] = match set {
                    InvariantSet::A => (2.0 * h[i]).clamp(-1.0, 1.0),
                    InvariantSet::B => h[i].abs(),
                };
            }
            let (mut checks, mut violations) = (0, 0);
            for _ in 0..INVARIANCE_POWERS {
                h = space.apply_power(&h, 1);
                for &i in &region {
                    checks += 1;
                    if !set.admits(h[i]) {
                        violations += 1;
                    }
                }
            }
            (checks, violations)
        })
        .collect();
    let checks = results.iter().map(|r| r.0).sum();
    let violations = results.iter().map(|r| r.1).sum();

    let witness = (!trivial).then(|| {
        let i = region[0];
        let scalar = set.escaping_scalar();
        NonSubspaceWitness {
            h: 1.0,
            scalar,
            node: space.nodes[i],
            value: scalar,
        }
    });
    Ok(InvariantSetReport {
        set,
        region_nodes: region.len(),
        region_mass,
        samples,
        checks,
        violations,
        invariant: violations == 0,
        trivial,
        witness,
    })
}

/// Best `‖p f − c f‖_{L²(μ)}` over convex-polynomials of degree ≤ `n`.
pub fn scalar_closure_demo(
    f: &(dyn Fn(f64) -> f64 + Sync),
    c: f64,
    mu: &Measure,
    n: usize,
) -> Result<ApproximationResult, CyclicError> {
    if !(c != 0.0 && c.is_finite()) {
        return Err(CyclicError::BadScalar(c));
    }
    let target = move |x: f64| c * f(x);
    Ok(weighted_density_probe(mu, f, &target, n)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{moment, Piece};

    #[test]
    fn discretize_examples() {
        let s = discretize(&Measure::atom(-2.0, 1.0).unwrap(), 7).unwrap();
        assert_eq!((s.nodes.clone(), s.weights.clone()), (vec![-2.0], vec![1.0]));

        let s = discretize(&Measure::lebesgue(-2.0, -1.0).unwrap(), 10).unwrap();
        let x = s.nodes.clone();
        assert!((s.inner(&x, &x) - 7.0 / 3.0).abs() < 1e-12);
        assert!((s.total_mass() - 1.0).abs() < 1e-12);

        let mu = Measure::new(
            vec![],
            vec![
                Piece {
                    interval: [-3.0, -2.0],
                    density: vec![1.0],
                },
                Piece {
                    interval: [-2.0, -1.5],
                    density: vec![1.0],
                },
            ],
            true,
        )
        .unwrap();
        assert_eq!(discretize(&mu, 5).unwrap().len(), 12);
    }

    #[test]
    fn gram_reproduces_moments() {
        let mu = Measure::lebesgue(-2.0, -1.2).unwrap();
        let s = discretize(&mu, 12).unwrap();
        for j in 0..=12 {
            for k in 0..=12 {
                let ip = s.inner(
                    &s.apply_power(&vec![1.0; s.len()], j),
                    &s.apply_power(&vec![1.0; s.len()], k),
                );
                let m = moment(&mu, j + k).value;
                assert!(((ip - m) / m).abs() < 1e-8, "{j} {k}");
            }
        }
    }

    #[test]
    fn orbit_sup_examples() {
        let s = discretize(&Measure::lebesgue(-2.0, -1.2).unwrap(), 80).unwrap();
        let one = vec![1.0; s.len()];
        let v = orbit_sup(&one, &one, &s, 80).unwrap();
        assert!(v.certificate().unwrap().m > 1.0);

        let s = discretize(&Measure::lebesgue(0.0, 1.0).unwrap(), 40).unwrap();
        let one = vec![1.0; s.len()];
        match orbit_sup(&one, &one, &s, 40).unwrap() {
            GrowthVerdict::Bounded { sup, .. } => assert!((sup - 1.0).abs() < 1e-12),
            v => panic!("{v:?}"),
        }
        match orbit_sup(&one, &vec![0.0; s.len()], &s, 40).unwrap() {
            GrowthVerdict::Bounded { sup, .. } => assert_eq!(sup, 0.0),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn cyclic_examples() {
        let mu = Measure::lebesgue(-2.0, -1.2).unwrap();
        let v = convex_cyclic_test(&|_| 1.0, &mu, 100, 32, 7).unwrap();
        assert_eq!(v.status, CyclicStatus::CyclicConsistent);
        assert_eq!(v.certificates.len(), 32);
        revalidate(&v, &|_| 1.0, &mu).unwrap();

        let v = convex_cyclic_test(&|x| x, &Measure::lebesgue(-2.0, 0.0).unwrap(), 50, 4, 7).unwrap();
        assert_eq!(v.status, CyclicStatus::NotCyclic);
        assert!(v.witness.unwrap().contains("[-1, inf)"));

        let v = convex_cyclic_test(&|_| 0.0, &mu, 50, 4, 7).unwrap();
        assert_eq!(v.status, CyclicStatus::NotCyclic);
    }

    #[test]
    fn powers() {
        let mu = Measure::lebesgue(-2.0, -1.2).unwrap();
        let v = odd_power_test(&|_| 1.0, &mu, 3, 100, 8, 1).unwrap();
        assert_eq!(v.status, CyclicStatus::CyclicConsistent);
        revalidate(&v, &|_| 1.0, &mu).unwrap();
        let v = odd_power_test(&|_| 1.0, &mu, 2, 100, 8, 1).unwrap();
        assert_eq!(v.status, CyclicStatus::NotCyclic);
        assert!(v.witness.unwrap().contains("even"));
        assert_eq!(
            odd_power_test(&|x| x * x, &mu, 1, 60, 8, 3).unwrap(),
            convex_cyclic_test(&|x| x * x, &mu, 60, 8, 3).unwrap()
        );
    }

    #[test]
    fn invariant_sets() {
        let r = invariant_set_probe(&Measure::lebesgue(-0.5, 0.5).unwrap(), InvariantSet::A, 16, 1).unwrap();
        assert!(r.invariant && !r.trivial);
        let w = r.witness.unwrap();
        assert_eq!((w.h, w.scalar), (1.0, 2.0));

        let r = invariant_set_probe(&Measure::lebesgue(-2.0, -1.2).unwrap(), InvariantSet::A, 16, 1).unwrap();
        assert!(r.trivial && r.witness.is_none());

        let r = invariant_set_probe(&Measure::lebesgue(0.0, 1.0).unwrap(), InvariantSet::B, 16, 1).unwrap();
        assert!(r.invariant && !r.trivial);
        assert_eq!(r.witness.unwrap().scalar, -1.0);
    }

    #[test]
    fn scalar_closure() {
        let mu = Measure::lebesgue(-2.0, -1.2).unwrap();
        let r = scalar_closure_demo(&|_| 1.0, 1.0, &mu, 4).unwrap();
        assert!(r.error <= 1e-9, "{}", r.error);
        let r = scalar_closure_demo(&|_| 1.0, -2.0, &mu, 20).unwrap();
        assert!(r.error < 0.1 * 2.0 * 0.8f64.sqrt());
        assert!(matches!(
            scalar_closure_demo(&|_| 1.0, -2.0, &Measure::lebesgue(-2.0, 0.0).unwrap(), 5),
            Err(CyclicError::Approx(ApproxError::SupportViolation { .. }))
        ));
        assert!(matches!(
            scalar_closure_demo(&|_| 1.0, 0.0, &mu, 5),
            Err(CyclicError::BadScalar(_))
        ));
    }
}
