//! Three interactive operations for the static page in `www/`. Each takes
//! plain numbers/strings and returns a JSON string for the page to plot.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use convexpoly::approx::{chebyshev_grid, density_probe, DensityVerdict, ProbeMode, ProbeOptions};
use convexpoly::expr::parse_expression;
use convexpoly::measures::{detect_growth, moment, GrowthVerdict, Measure};
use convexpoly::peaking::{peaking_polynomial, sample_curve, verify_peak};

/// Anything above this is refused; the page runs on the main thread.
const MAX_DEGREE: usize = 80;
const MAX_HORIZON: usize = 2000;
const CURVE_POINTS: usize = 301;

#[derive(Serialize)]
pub struct PeakView {
    pub n: usize,
    pub alpha: f64,
    pub peak_value: f64,
    pub coeffs: Vec<f64>,
    pub all_pass: bool,
    pub checks: Vec<(u8, String, bool)>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

pub fn peak_view(a: f64, x0: f64) -> Result<PeakView, String> {
    let pp = peaking_polynomial(a, x0).map_err(|e| e.to_string())?;
    let report = verify_peak(&pp, 2001).map_err(|e| e.to_string())?;
    let (xs, ys) = sample_curve(&pp, CURVE_POINTS).into_iter().unzip();
    Ok(PeakView {
        n: pp.n,
        alpha: pp.alpha,
        peak_value: pp.peak_value,
        coeffs: pp.poly.coeffs().to_vec(),
        all_pass: report.all_pass(),
        checks: report
            .checks
            .iter()
            .map(|c| {
                (
                    c.property,
                    c.name.to_string(),
                    c.status != convexpoly::peaking::CheckStatus::Fail,
                )
            })
            .collect(),
        xs,
        ys,
    })
}

#[derive(Serialize)]
pub struct ApproxView {
    pub degrees: Vec<usize>,
    pub errors: Vec<f64>,
    pub verdict: String,
    pub xs: Vec<f64>,
    pub target: Vec<f64>,
    pub approximation: Vec<f64>,
}

pub fn approx_view(target: &str, a: f64, b: f64, uniform: bool, degrees: &str) -> Result<ApproxView, String> {
    let e = parse_expression(target).map_err(|e| e.to_string())?;
    let degrees: Vec<usize> = degrees
        .split(',')
        .map(|d| d.trim().parse().map_err(|_| format!("bad degree {d:?}")))
        .collect::<Result<_, _>>()?;
    if degrees.iter().any(|&d| d > MAX_DEGREE) {
        return Err(format!("degrees above {MAX_DEGREE} are disabled in the demo"));
    }
    let f = |x: f64| e.eval_or_nan(x);
    let mode = if uniform { ProbeMode::Uniform } else { ProbeMode::L2 };
    let opts = ProbeOptions {
        grid_points: 256,
        max_iter: 50_000,
        ..Default::default()
    };
    let report = density_probe(a, b, &f, &degrees, mode, &opts).map_err(|e| e.to_string())?;
    let p = &report.results.last().expect("nonempty ladder").poly;
    let xs = chebyshev_grid(a, b, CURVE_POINTS);
    let verdict = match report.verdict {
        DensityVerdict::DenseConsistent => "dense-consistent".to_string(),
        DensityVerdict::Obstructed { bound, witness } => {
            format!("obstructed: error ≥ {bound:.6} (worst at x = {witness:.4})")
        }
        DensityVerdict::Inconclusive => "inconclusive".to_string(),
    };
    Ok(ApproxView {
        errors: report.errors(),
        degrees: report.degrees,
        verdict,
        target: xs.iter().map(|&x| f(x)).collect(),
        approximation: xs.iter().map(|&x| p.value(x)).collect(),
        xs,
    })
}

#[derive(Serialize)]
pub struct GrowthView {
    /// `ln |∫ xⁿ dμ|` and the sign, n = 0..=horizon.
    pub log_magnitude: Vec<f64>,
    pub sign: Vec<i8>,
    /// Certified rate m, when moments grow.
    pub rate: Option<f64>,
    pub sup: Option<f64>,
}

pub fn growth_view(l: f64, u: f64, horizon: usize) -> Result<GrowthView, String> {
    if horizon > MAX_HORIZON {
        return Err(format!("horizon above {MAX_HORIZON} is disabled in the demo"));
    }
    let mu = Measure::lebesgue(l, u).map_err(|e| e.to_string())?;
    let values: Vec<_> = (0..=horizon).map(|n| moment(&mu, n)).collect();
    let (rate, sup) = match detect_growth(&values) {
        GrowthVerdict::Certificate(c) => (Some(c.m), None),
        GrowthVerdict::Bounded { sup, .. } => (None, Some(sup)),
    };
    Ok(GrowthView {
        log_magnitude: values.iter().map(|v| v.magnitude_log).collect(),
        sign: values.iter().map(|v| v.sign).collect(),
        rate,
        sup,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn peaking(a: f64, x0: f64) -> Result<String, JsValue> {
    to_js(peak_view(a, x0))
}

#[wasm_bindgen]
pub fn approximate(target: &str, a: f64, b: f64, uniform: bool, degrees: &str) -> Result<String, JsValue> {
    to_js(approx_view(target, a, b, uniform, degrees))
}

#[wasm_bindgen]
pub fn moment_growth(l: f64, u: f64, horizon: usize) -> Result<String, JsValue> {
    to_js(growth_view(l, u, horizon))
}
