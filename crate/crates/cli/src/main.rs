//! `convexpoly`: batch front end for the convexpoly library.
//!
//! Exit status: 0 on success, 1 when a computation rejects its input
//! (domain error), 2 on usage errors (bad flags, unreadable or malformed
//! input files, expression syntax errors).

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use thiserror::Error;

use convexpoly::approx::{self, ApproxError, ProbeMode, ProbeOptions};
use convexpoly::cyclic::{self, CyclicError, InvariantSet};
use convexpoly::expr::{parse_expression, Expr, SyntaxError};
use convexpoly::measures::{self, Measure, MeasureError};
use convexpoly::peaking::{self, PeakError};
use convexpoly::polycore::{self, ConvexPolynomial, PolyError};
use convexpoly::series::{self, SeriesError};

use output::{num, to_json, Table};

const SEED_ENV: &str = "CONVEXPOLY_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "convexpoly",
    version,
    about = "Convex-polynomial approximation, peaking polynomials, moment growth and convex-cyclicity experiments"
)]
struct Cli {
    /// Write the primary output here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate, multiply or compose convex-polynomials ({"coeffs": [...]}).
    #[command(subcommand)]
    Poly(PolyCmd),
    /// Build and verify the peaking polynomial for a point x0 < -1.
    Peak(PeakArgs),
    /// Moments (optionally weighted) of a measure as CSV.
    Moments(MomentArgs),
    /// Moment-growth certificate or bounded verdict as JSON.
    Certify(MomentArgs),
    /// Best convex-polynomial approximation errors over a degree ladder.
    Approximate(ApproximateArgs),
    /// Truncate a convex power series, or fit one to samples (`series fit`).
    Series(SeriesArgs),
    /// Randomized convex-cyclicity test for multiplication by x on L²(μ).
    Cyclic(CyclicArgs),
    /// Probe the invariant convex sets A (|f| ≤ 1 on [-1,1]) or B (f ≥ 0 on [0,∞)).
    InvariantSet(InvariantSetArgs),
}

#[derive(Subcommand, Debug)]
enum PolyCmd {
    /// Evaluate p at a list of points; CSV (x, value, sign, log_magnitude).
    Eval {
        /// Polynomial file, or inline JSON.
        #[arg(long)]
        poly: String,
        /// Comma-separated evaluation points.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
    },
    /// Product p·q.
    Mul {
        #[arg(long)]
        p: String,
        #[arg(long)]
        q: String,
    },
    /// Composition p(q(x)).
    Compose {
        #[arg(long)]
        p: String,
        #[arg(long)]
        q: String,
        #[arg(long, default_value_t = polycore::DEFAULT_DEGREE_CAP)]
        degree_cap: usize,
    },
}

#[derive(Args, Debug)]
struct PeakArgs {
    /// Left endpoint of the interval [a, x0].
    #[arg(long, allow_negative_numbers = true)]
    a: f64,
    #[arg(long, allow_negative_numbers = true)]
    x0: f64,
    /// Verification grid size.
    #[arg(long, default_value_t = 10_001)]
    grid: usize,
    /// Also write (x, p(x)) samples to this CSV file.
    #[arg(long)]
    emit_curve: Option<PathBuf>,
    #[arg(long, default_value_t = 1001)]
    curve_points: usize,
}

#[derive(Args, Debug)]
struct MomentArgs {
    /// Measure JSON file.
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    max_n: usize,
    /// Weight expression f(x) for ∫ xⁿ f dμ.
    #[arg(long)]
    weight: Option<String>,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum Mode {
    L2,
    Uniform,
}

#[derive(Args, Debug)]
struct ApproximateArgs {
    /// Target expression in x.
    #[arg(long)]
    target: String,
    /// Interval as `a,b`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    interval: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Mode::L2)]
    mode: Mode,
    /// Strictly increasing degree caps.
    #[arg(long, value_delimiter = ',', required = true)]
    degrees: Vec<usize>,
    /// Dense-consistent verdict once final ≤ threshold · initial.
    #[arg(long, default_value_t = approx::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = approx::DEFAULT_GRID_POINTS)]
    grid: usize,
    /// Frank–Wolfe gap tolerance (L² mode).
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iter: usize,
    /// Cap on p(max |x|) in uniform mode; `none` disables it.
    #[arg(long, default_value = "1e12")]
    condition_cap: String,
    /// Write (x, target, approximation, residual) for the last degree.
    #[arg(long)]
    residual_curve: Option<PathBuf>,
    /// Write the full report (polynomials, verdict) as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true)]
struct SeriesArgs {
    #[command(subcommand)]
    fit: Option<SeriesCmd>,
    #[arg(long, value_enum)]
    kind: Option<SeriesKind>,
    /// Resolvent parameter a > 1.
    #[arg(long, allow_negative_numbers = true)]
    param: Option<f64>,
    #[arg(long)]
    truncate: Option<usize>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SeriesKind {
    Exp,
    Resolvent,
}

#[derive(Subcommand, Debug)]
enum SeriesCmd {
    /// Least-squares convex-polynomial fit to (x, y) samples.
    Fit {
        /// CSV with columns x, y (a header row is skipped).
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        degree: usize,
    },
}

#[derive(Args, Debug)]
struct CyclicArgs {
    #[arg(long)]
    measure: PathBuf,
    /// The vector f as an expression in x.
    #[arg(long, default_value = "1")]
    vector: String,
    #[arg(long, default_value_t = 100)]
    max_n: usize,
    #[arg(long, default_value_t = 32)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test M^k instead of M.
    #[arg(long, default_value_t = 1)]
    power: usize,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum SetId {
    A,
    B,
}

#[derive(Args, Debug)]
struct InvariantSetArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, value_enum, ignore_case = true)]
    set: SetId,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Peak(#[from] PeakError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Cyclic(#[from] CyclicError),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    /// Stable short code printed with every error.
    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Syntax(_) => "expr",
            CliError::Poly(_) => "poly",
            CliError::Peak(_) => "peak",
            CliError::Measure(_) => "measure",
            CliError::Approx(_) => "approx",
            CliError::Series(_) => "series",
            CliError::Cyclic(_) => "cyclic",
            CliError::Output(_) => "output",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Syntax(_) => 2,
            _ => 1,
        }
    }
}

/// Everything that determines a run's output, logged before it starts.
#[derive(Debug, Serialize, Default)]
struct RunConfig {
    command: String,
    seed: Option<u64>,
    seed_from_env: bool,
    tol: Option<f64>,
    threshold: Option<f64>,
    horizon: Option<usize>,
    degrees: Vec<usize>,
    output: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_poly(arg: &str) -> Result<ConvexPolynomial, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read(Path::new(arg))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad polynomial {arg:?}: {e}")))
}

fn read_measure(path: &Path) -> Result<Measure, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Usage(format!("bad measure {}: {e}", path.display())))
}

fn parse_target(text: &str) -> Result<Expr, CliError> {
    Ok(parse_expression(text)?)
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    to_json(v).map_err(|e| CliError::Output(e.to_string()))
}

fn csv(t: &Table) -> Result<String, CliError> {
    t.to_csv().map_err(|e| CliError::Output(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be a positive number, got {v}")))
    }
}

/// `CONVEXPOLY_SEED` wins over `--seed`.
fn resolve_seed(flag: u64, cfg: &mut RunConfig) -> Result<u64, CliError> {
    let seed = match std::env::var(SEED_ENV) {
        Ok(s) => {
            cfg.seed_from_env = true;
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?
        }
        Err(_) => flag,
    };
    cfg.seed = Some(seed);
    Ok(seed)
}

fn log_config(cfg: &RunConfig) {
    info!("run config: {}", serde_json::to_string(cfg).unwrap_or_default());
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = RunConfig {
        output: cli.output.clone(),
        ..Default::default()
    };
    match cli.command {
        Command::Poly(cmd) => {
            cfg.command = "poly".into();
            log_config(&cfg);
            match cmd {
                PolyCmd::Eval { poly, x } => {
                    let p = read_poly(&poly)?;
                    let mut t = Table::new(&["x", "value", "sign", "log_magnitude"]);
                    for xi in x {
                        let r = p.evaluate(xi);
                        t.push(vec![num(xi), num(r.value), r.sign.to_string(), num(r.magnitude_log)]);
                    }
                    csv(&t)
                }
                PolyCmd::Mul { p, q } => json(&polycore::multiply(&read_poly(&p)?, &read_poly(&q)?)),
                PolyCmd::Compose { p, q, degree_cap } => json(&polycore::compose_with_cap(
                    &read_poly(&p)?,
                    &read_poly(&q)?,
                    degree_cap,
                )?),
            }
        }
        Command::Peak(args) => {
            cfg.command = "peak".into();
            log_config(&cfg);
            let pp = peaking::peaking_polynomial(args.a, args.x0)?;
            let report = peaking::verify_peak(&pp, args.grid)?;
            if let Some(path) = &args.emit_curve {
                let mut t = Table::new(&["x", "p"]);
                for (x, y) in peaking::sample_curve(&pp, args.curve_points) {
                    t.push(vec![num(x), num(y)]);
                }
                write_file(path, &csv(&t)?)?;
            }
            #[derive(Serialize)]
            struct PeakOut<'a> {
                polynomial: &'a peaking::PeakingPolynomial,
                report: &'a peaking::PeakReport,
            }
            json(&PeakOut {
                polynomial: &pp,
                report: &report,
            })
        }
        Command::Moments(args) => {
            cfg.command = "moments".into();
            cfg.horizon = Some(args.max_n);
            log_config(&cfg);
            let mu = read_measure(&args.measure)?;
            let weight = args.weight.as_deref().map(parse_target).transpose()?;
            let mut t = Table::new(&["n", "value", "sign", "log_magnitude"]);
            for n in 0..=args.max_n {
                let r = match &weight {
                    None => measures::moment(&mu, n),
                    Some(w) => measures::weighted_moment_auto(&mu, &|x| w.eval_or_nan(x), n)?,
                };
                t.push(vec![
                    n.to_string(),
                    num(r.value),
                    r.sign.to_string(),
                    num(r.magnitude_log),
                ]);
            }
            csv(&t)
        }
        Command::Certify(args) => {
            cfg.command = "certify".into();
            cfg.horizon = Some(args.max_n);
            log_config(&cfg);
            let mu = read_measure(&args.measure)?;
            let weight = args.weight.as_deref().map(parse_target).transpose()?;
            let verdict = match &weight {
                None => measures::growth_certificate(&mu, &|_| 1.0, args.max_n)?,
                Some(w) => measures::growth_certificate(&mu, &|x| w.eval_or_nan(x), args.max_n)?,
            };
            json(&verdict)
        }
        Command::Approximate(args) => {
            cfg.command = "approximate".into();
            cfg.tol = Some(positive("tol", args.tol)?);
            cfg.threshold = Some(positive("threshold", args.threshold)?);
            cfg.degrees = args.degrees.clone();
            log_config(&cfg);
            approximate(&args)
        }
        Command::Series(args) => {
            cfg.command = "series".into();
            match args.fit {
                Some(SeriesCmd::Fit { samples, degree }) => {
                    cfg.degrees = vec![degree];
                    log_config(&cfg);
                    let samples = read_samples(&samples)?;
                    json(&series::fit_convex_series(&samples, degree)?)
                }
                None => {
                    log_config(&cfg);
                    let kind = args
                        .kind
                        .ok_or_else(|| CliError::Usage("series needs --kind (or the `fit` subcommand)".into()))?;
                    let n = args
                        .truncate
                        .ok_or_else(|| CliError::Usage("series needs --truncate N".into()))?;
                    let s = match kind {
                        SeriesKind::Exp => series::exp_series(),
                        SeriesKind::Resolvent => {
                            let a = args
                                .param
                                .ok_or_else(|| CliError::Usage("--kind resolvent needs --param a".into()))?;
                            series::resolvent_series(a)?
                        }
                    };
                    json(&series::truncate_to_convex(&s, n))
                }
            }
        }
        Command::Cyclic(args) => {
            cfg.command = "cyclic".into();
            cfg.horizon = Some(args.max_n);
            let seed = resolve_seed(args.seed, &mut cfg)?;
            log_config(&cfg);
            let mu = read_measure(&args.measure)?;
            let f = parse_target(&args.vector)?;
            let verdict =
                cyclic::odd_power_test(&|x| f.eval_or_nan(x), &mu, args.power, args.max_n, args.trials, seed)?;
            json(&verdict)
        }
        Command::InvariantSet(args) => {
            cfg.command = "invariant-set".into();
            let seed = resolve_seed(args.seed, &mut cfg)?;
            log_config(&cfg);
            let mu = read_measure(&args.measure)?;
            let set = match args.set {
                SetId::A => InvariantSet::A,
                SetId::B => InvariantSet::B,
            };
            json(&cyclic::invariant_set_probe(&mu, set, args.samples, seed)?)
        }
    }
}

fn approximate(args: &ApproximateArgs) -> Result<String, CliError> {
    let [a, b] = args.interval[..] else {
        return Err(CliError::Usage(format!(
            "--interval needs exactly two numbers a,b, got {}",
            args.interval.len()
        )));
    };
    let condition_cap = match args.condition_cap.as_str() {
        "none" => None,
        s => Some(positive(
            "condition-cap",
            s.parse()
                .map_err(|_| CliError::Usage(format!("bad --condition-cap {s:?}")))?,
        )?),
    };
    let target = parse_target(&args.target)?;
    let f = |x: f64| target.eval_or_nan(x);
    let mode = match args.mode {
        Mode::L2 => ProbeMode::L2,
        Mode::Uniform => ProbeMode::Uniform,
    };
    let mut opts = ProbeOptions {
        threshold: args.threshold,
        grid_points: args.grid,
        tol: args.tol,
        max_iter: args.max_iter,
        ..Default::default()
    };
    opts.uniform.condition_cap = condition_cap;
    opts.uniform.max_iter = args.max_iter;
    let report = approx::density_probe(a, b, &f, &args.degrees, mode, &opts)?;
    info!(
        "verdict: {}",
        serde_json::to_string(&report.verdict).unwrap_or_default()
    );

    let mut t = Table::new(&["degree", "error", "iterations", "gap"]);
    for (d, r) in report.degrees.iter().zip(&report.results) {
        t.push(vec![d.to_string(), num(r.error), r.iterations.to_string(), num(r.gap)]);
    }
    if let Some(path) = &args.residual_curve {
        let p = &report.results.last().expect("degrees is nonempty").poly;
        let xs = match mode {
            ProbeMode::Uniform => approx::chebyshev_grid(a, b, args.grid),
            ProbeMode::L2 => (0..args.grid)
                .map(|i| a + (b - a) * i as f64 / (args.grid - 1).max(1) as f64)
                .collect(),
        };
        let mut c = Table::new(&["x", "target", "approximation", "residual"]);
        for x in xs {
            let (y, px) = (f(x), p.value(x));
            c.push(vec![num(x), num(y), num(px), num(px - y)]);
        }
        write_file(path, &csv(&c)?)?;
    }
    if let Some(path) = &args.report {
        write_file(path, &json(&report)?)?;
    }
    csv(&t)
}

/// Two numeric columns; a first row that does not parse is taken as a header.
fn read_samples(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = read(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let parsed = (rec.get(0).map(str::parse::<f64>), rec.get(1).map(str::parse::<f64>));
        match parsed {
            (Some(Ok(x)), Some(Ok(y))) => out.push((x, y)),
            _ if i == 0 => continue,
            _ => {
                return Err(CliError::Usage(format!(
                    "{}: row {} is not two numbers",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version go to stdout with status 0; everything else is a usage error.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let output = cli.output.clone();
    match run(cli) {
        Ok(text) => {
            match output {
                Some(path) => {
                    if let Err(e) = write_file(&path, &text) {
                        eprintln!("error[{}]: {e}", e.code());
                        return ExitCode::from(e.exit_code());
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
