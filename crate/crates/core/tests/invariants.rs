use proptest::prelude::*;

use convexpoly::approx::{best_l2, best_uniform, build_quadratic_model, chebyshev_grid, SolveStatus};
use convexpoly::cyclic::{convex_cyclic_test, discretize, odd_power_test, orbit_values, revalidate, CyclicStatus};
use convexpoly::expr::{parse_expression, Expr};
use convexpoly::measures::{moment, Measure};
use convexpoly::peaking::{peak_value_direct, peak_value_factored, peaking_polynomial};
use convexpoly::polycore::{
    compose, evaluate, evaluate_log_domain, horner, make_convex, multiply, ConvexPolynomial, MassPolicy,
};
use convexpoly::series::{exp_series, modulus_bound_check, resolvent_series, truncate_to_convex};

fn convex(max_len: usize) -> impl Strategy<Value = ConvexPolynomial> {
    prop::collection::vec(0.0..1.0f64, 1..=max_len)
        .prop_filter("positive mass", |v| v.iter().sum::<f64>() > 1e-6)
        .prop_map(|v| make_convex(&v, MassPolicy::Renormalize).unwrap())
}

fn on_simplex(c: &[f64]) -> bool {
    c.iter().all(|&a| a >= 0.0) && (c.iter().sum::<f64>() - 1.0).abs() <= 1e-10
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![Just(Expr::X), (-50i32..50).prop_map(|k| Expr::Num(k as f64 / 4.0))];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let b = |e| Box::new(e);
        prop_oneof![
            inner
                .clone()
                .prop_filter("literal signs fold", |e| !matches!(e, Expr::Num(_)))
                .prop_map(move |e| Expr::Neg(b(e))),
            (inner.clone(), inner.clone()).prop_map(move |(l, r)| Expr::Add(b(l), b(r))),
            (inner.clone(), inner.clone()).prop_map(move |(l, r)| Expr::Sub(b(l), b(r))),
            (inner.clone(), inner.clone()).prop_map(move |(l, r)| Expr::Mul(b(l), b(r))),
            (inner.clone(), inner.clone()).prop_map(move |(l, r)| Expr::Div(b(l), b(r))),
            (inner.clone(), -3i32..4).prop_map(move |(e, k)| Expr::Pow(b(e), k)),
            inner.clone().prop_map(move |e| Expr::Abs(b(e))),
            inner.prop_map(move |e| Expr::Exp(b(e))),
        ]
    })
}

proptest! {
    #[test]
    fn modulus_dominated_by_value_at_abs(p in convex(40), x in -10.0..10.0f64) {
        let lhs = evaluate(&p, x).value.abs();
        let rhs = evaluate(&p, x.abs()).value;
        prop_assert!(lhs <= rhs + 1e-12 * rhs);
    }

    #[test]
    fn unit_interval_maps_into_itself(p in convex(40), x in -1.0..=1.0f64) {
        let v = evaluate(&p, x).value;
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn positive_on_positive_axis(p in convex(40), x in 1e-6..1e3f64) {
        prop_assert_eq!(evaluate(&p, x).sign, 1);
    }

    #[test]
    fn value_at_one_is_one(p in convex(200)) {
        prop_assert!((evaluate(&p, 1.0).value - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn products_and_compositions_stay_convex(p in convex(21), q in convex(21)) {
        prop_assert!(on_simplex(multiply(&p, &q).coeffs()));
        prop_assert!(on_simplex(compose(&p, &q).unwrap().coeffs()));
    }

    #[test]
    fn horner_and_log_domain_agree(p in convex(201), x in 1.0..=3.0f64, neg in any::<bool>()) {
        prop_assume!(x > 1.0);
        let x = if neg { -x } else { x };
        let direct = horner(p.coeffs(), x);
        let logd = evaluate_log_domain(&p, x).value;
        // Relative to the modulus bound p(|x|): sign cancellation is not an
        // error of either path.
        let scale = evaluate(&p, x.abs()).value;
        prop_assert!((direct - logd).abs() <= 1e-9 * scale, "{direct} vs {logd}");
    }

    #[test]
    fn expressions_print_canonically(e in expr()) {
        let printed = e.to_string();
        let back = parse_expression(&printed).unwrap();
        prop_assert_eq!(&back, &e, "{}", printed);
        prop_assert_eq!(back.to_string(), printed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn peaking_forms_agree(x0 in -20.0..-1.05f64, stretch in 1.01..3.0f64) {
        let pp = peaking_polynomial(stretch * x0, x0).unwrap();
        let d = peak_value_direct(pp.n, pp.alpha, x0);
        let f = peak_value_factored(pp.n, pp.alpha, x0);
        prop_assert!((d - f).abs() <= 1e-10 * d.abs());
        // Near −1 the excess over 1 drops below an ulp.
        prop_assert!(pp.peak_value >= 1.0);
        prop_assert!(make_convex(pp.poly.coeffs(), MassPolicy::Reject).is_ok());
    }

    #[test]
    fn peak_exceeds_one(x0 in prop::sample::select(vec![-1.5, -2.0, -5.0, -20.0])) {
        let pp = peaking_polynomial(2.0 * x0, x0).unwrap();
        prop_assert!(pp.peak_value > 1.0);
        prop_assert!(pp.poly.value(x0) > 1.0);
    }

    #[test]
    fn modulus_bound_on_the_disk(p in convex(51), c in prop::sample::select(vec![0.5, 1.0, 2.0])) {
        let violation = modulus_bound_check(&p, c, 400);
        prop_assert!(violation <= 1e-10 * p.value(c), "violation {violation}");
    }

    #[test]
    fn series_truncations_are_convex(a in 1.01..20.0f64, n in 1usize..80) {
        for s in [exp_series(), resolvent_series(a).unwrap()] {
            prop_assert!(s.coefficients(n).iter().all(|&c| c >= 0.0));
            for m in [5, 10, 20, 50] {
                prop_assert!(1.0 - s.partial_mass(m) <= s.tail_bound(m) + 1e-15);
            }
            let p = truncate_to_convex(&s, n);
            prop_assert!(make_convex(p.coeffs(), MassPolicy::Reject).is_ok());
        }
    }

    #[test]
    fn moment_signs_alternate_left_of_minus_one(l in -3.0..-1.5f64, w in 0.05..0.5f64, n in 0usize..60) {
        let mu = Measure::lebesgue(l, -1.0 - w).unwrap();
        let m = moment(&mu, n);
        prop_assert_eq!(m.sign, if n % 2 == 0 { 1 } else { -1 });
        let neg = moment(&mu.negated(), n);
        prop_assert_eq!(neg.sign, -m.sign);
    }

    #[test]
    fn multiplication_operator_is_symmetric(
        l in -2.5..-0.5f64,
        w in 0.2..2.0f64,
        n in 0usize..40,
        fs in prop::collection::vec(-1.0..1.0f64, 64),
        gs in prop::collection::vec(-1.0..1.0f64, 64),
    ) {
        let space = discretize(&Measure::lebesgue(l, l + w).unwrap(), 12).unwrap();
        let f = &fs[..space.len()];
        let g = &gs[..space.len()];
        let left = space.inner(&space.apply_power(f, n), g);
        let right = space.inner(f, &space.apply_power(g, n));
        let scale = space.inner(&space.apply_power(&vec![1.0; f.len()], n).iter().map(|v| v.abs()).collect::<Vec<_>>(), &vec![1.0; f.len()]);
        prop_assert!((left - right).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn even_orbit_values_grow(l in -3.0..-1.2f64, delta in 0.05..0.15f64) {
        let u = -1.0 - delta;
        prop_assume!(l < u - 0.01);
        let space = discretize(&Measure::lebesgue(l, u).unwrap(), 16).unwrap();
        let ones = vec![1.0; space.len()];
        let vals = orbit_values(&ones, &ones, &space, 80, 1);
        let even: Vec<f64> = vals.iter().step_by(2).map(|v| v.magnitude_log).collect();
        // Eventually strictly increasing: the second half is.
        prop_assert!(even[even.len() / 2..].windows(2).all(|w| w[1] > w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cyclic_tests_are_reproducible(l in -2.5..-1.1f64, w in 0.1..1.0f64, seed in any::<u64>()) {
        let mu = Measure::lebesgue(l, l + w).unwrap();
        let one = |_: f64| 1.0;
        let a = convex_cyclic_test(&one, &mu, 60, 4, seed).unwrap();
        let b = convex_cyclic_test(&one, &mu, 60, 4, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a, &odd_power_test(&one, &mu, 1, 60, 4, seed).unwrap());
        if a.status == CyclicStatus::CyclicConsistent {
            prop_assert!(revalidate(&a, &one, &mu).is_ok());
        }
    }

    #[test]
    fn uniform_error_is_the_grid_maximum(c in -2.0..2.0f64, a in -3.0..-1.0f64, n in 1usize..12) {
        let f = move |x: f64| (c * x).exp() * 0.5;
        let grid = chebyshev_grid(a, a + 1.0, 64);
        let r = best_uniform(&f, &grid, n).unwrap();
        let max = grid.iter().map(|&x| (r.poly.value(x) - f(x)).abs()).fold(0.0, f64::max);
        prop_assert!((r.error - max).abs() <= 1e-10);
        // No convex-polynomial gets within 4 of the constant −5 on [−1, 1].
        for x in chebyshev_grid(-1.0, 1.0, 33) {
            prop_assert!((r.poly.value(x) + 5.0).abs() >= 4.0 - 1e-12);
        }
    }

    #[test]
    fn l2_error_nonincreasing_in_degree(c in -1.0..1.0f64, l in -3.0..-1.0f64) {
        let mu = Measure::lebesgue(l, l + 1.0).unwrap();
        let f = move |x: f64| (x + c).abs();
        let mut last = f64::INFINITY;
        for n in [1, 2, 4, 8] {
            let model = build_quadratic_model(&mu, &f, n).unwrap();
            let r = best_l2(&model, 1e-10, 200_000).unwrap();
            if r.status == SolveStatus::Converged {
                prop_assert!(r.gap <= 1e-10);
            }
            prop_assert!(r.error <= last + 1e-6, "degree {n}: {} after {last}", r.error);
            last = r.error;
        }
    }
}
