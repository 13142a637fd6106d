use convexpoly_wasm_demo::{approx_view, growth_view, peak_view};

#[test]
fn peak_view_matches_the_family() {
    let v = peak_view(-3.0, -2.0).unwrap();
    assert_eq!(v.n, 4);
    assert!(v.all_pass);
    assert!(v.peak_value > 1.0);
    assert_eq!(v.xs.len(), v.ys.len());
    assert!(peak_view(-3.0, 0.5).is_err());
}

#[test]
fn approx_view_ladder() {
    let v = approx_view("abs(x + 2)", -3.0, -1.5, true, "5, 10").unwrap();
    assert_eq!(v.errors.len(), 2);
    assert!(v.errors[1] <= v.errors[0]);
    assert_eq!(v.xs.len(), v.approximation.len());

    let v = approx_view("-5", -2.0, 0.0, false, "2,4").unwrap();
    assert!(v.verdict.starts_with("obstructed"));

    assert!(approx_view("x ^ 1.5", -3.0, -2.0, true, "3").is_err());
    assert!(approx_view("x", -3.0, -2.0, true, "500").is_err());
}

#[test]
fn growth_view_rates() {
    let v = growth_view(-2.0, -1.0, 60).unwrap();
    let m = v.rate.unwrap();
    assert!((1.8..=2.0).contains(&m));
    let v = growth_view(0.0, 1.0, 40).unwrap();
    assert_eq!(v.sup, Some(1.0));
}
