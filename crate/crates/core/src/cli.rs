//! Command-line driver: `test`, `invert`, `bounds`, `mc` and `power`.
//!
//! Exit codes: 0 on completion (a rejection is a result, not an error),
//! 2 on bad input, 3 when the computation fails.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bootstrap::BootstrapSource;
use crate::hypothesis::{augment_with_counterfactual, HypothesisProblem, MomentEstimator, ProblemError, ProblemFile, RawSample};
use crate::inference::{invert_ci, run_test, ErrorKind, GridSpec, InferenceError, LambdaMode};
use crate::mixedlogit::{
    build_design, build_problem, identified_bounds, monte_carlo, power_csv, DesignError, GammaRule, McSettings, McTable,
    MixedLogitDesign,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "LSYSINFER_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lsysinfer", version, about = "Tests whether beta = Ax for some x >= 0")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads; LSYSINFER_THREADS takes precedence. Default: all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one test and print its report.
    Test(TestArgs),
    /// Confidence interval for a counterfactual `a'x` by test inversion.
    Invert(InvertArgs),
    /// Identified bounds on the elasticity c.d.f.
    Bounds(BoundsArgs),
    /// Monte Carlo rejection table for a design file.
    Mc(McArgs),
    /// Power curve over a sweep, as CSV.
    Power(McArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Problem JSON: A, beta_hat, known_mask, n, optional xi_hat and omega_i.
    #[arg(long, conflicts_with = "data")]
    pub problem: Option<PathBuf>,
    /// Microdata CSV with header `y,w`; needs --design.
    #[arg(long, requires = "design")]
    pub data: Option<PathBuf>,
    /// Design JSON giving the W support and the elasticity event.
    #[arg(long)]
    pub design: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferenceArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// rot, boot, two-stage[:gamma] or a number in [0, 1].
    #[arg(long, default_value = "boot")]
    pub lambda: String,
    #[arg(long, default_value_t = 250)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Hypothesised c.d.f. value; required with --data.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Comma-separated counterfactual row `a`; required with --problem.
    #[arg(long)]
    pub row: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub grid_lower: f64,
    #[arg(long, default_value_t = 1.0)]
    pub grid_upper: f64,
    #[arg(long, default_value_t = 21)]
    pub grid_points: usize,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub design: PathBuf,
    /// Use empirical conditional frequencies instead of the design's.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long)]
    pub design: PathBuf,
    /// `lower,upper,points`; replaces the design's gamma_rule.
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<String>,
    /// Also write the power CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn default_n() -> usize {
    1000
}
fn default_replications() -> usize {
    100
}
fn default_bootstrap() -> usize {
    250
}
fn default_alpha() -> f64 {
    0.05
}
fn default_lambda() -> String {
    "boot".into()
}
fn default_gamma_rule() -> GammaRule {
    GammaRule::LowerBound
}

/// Design file. Either `d` and `w_points` for the Sobol grid, or an explicit
/// `w_support` and `v_support` (types as `[c0, c1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_support: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_support: Option<Vec<(f64, f64)>>,
    /// Type probabilities; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_true: Option<Vec<f64>>,
    pub t: f64,
    pub w_bar: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda")]
    pub lambda: String,
    #[serde(default = "default_gamma_rule")]
    pub gamma_rule: GammaRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub known_q: bool,
}

impl DesignConfig {
    pub fn design(&self) -> Result<MixedLogitDesign, CliError> {
        let design = match (&self.v_support, &self.d) {
            (Some(types), _) => {
                let w = self.w_support.clone().ok_or_else(|| CliError::input("design", "w_support is required with v_support"))?;
                let x = self.x_true.clone().unwrap_or_else(|| vec![1.0 / types.len().max(1) as f64; types.len()]);
                MixedLogitDesign::new(w, types.clone(), x, self.t, self.w_bar, self.n)
            }
            (None, Some(d)) => {
                let w_points = self.w_points.ok_or_else(|| CliError::input("design", "w_points is required with d"))?;
                build_design(*d, w_points, self.t, self.w_bar, self.n).and_then(|base| match &self.x_true {
                    Some(x) => MixedLogitDesign::new(base.w_support, base.v_support, x.clone(), self.t, self.w_bar, self.n),
                    None => Ok(base),
                })
            }
            (None, None) => return Err(CliError::input("design", "give either d and w_points, or w_support and v_support")),
        };
        design.map_err(|e| CliError::design("design", e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub stage: String,
    pub message: String,
}

impl CliError {
    pub fn input(stage: &str, message: impl ToString) -> Self {
        Self {
            code: EXIT_INPUT,
            stage: stage.into(),
            message: message.to_string(),
        }
    }

    pub fn numerical(stage: &str, message: impl ToString) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            stage: stage.into(),
            message: message.to_string(),
        }
    }

    fn inference(e: InferenceError) -> Self {
        let code = match e.kind {
            ErrorKind::Input => EXIT_INPUT,
            ErrorKind::Numerical => EXIT_NUMERICAL,
        };
        Self {
            code,
            stage: e.stage.to_string(),
            message: e.message,
        }
    }

    fn problem(stage: &str, e: ProblemError) -> Self {
        match e {
            ProblemError::Linalg(_) | ProblemError::Lp(_) => Self::numerical(stage, e),
            other => Self::input(stage, other),
        }
    }

    fn design(stage: &str, e: DesignError) -> Self {
        match e {
            DesignError::NotSquare(_) | DesignError::WPoints(_) | DesignError::Invalid(_) => Self::input(stage, e),
            DesignError::Problem(p) => Self::problem(stage, p),
            DesignError::Inference(i) => Self::inference(i),
            DesignError::InfeasibleMoments | DesignError::Lp(_) => Self::numerical(stage, e),
        }
    }
}

fn read_text(path: &Path, what: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(what, format!("cannot read {}: {e}", path.display())))
}

/// Parses JSON, naming the path of the offending field on failure.
fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::input(what, inner)
        } else {
            CliError::input(what, format!("field `{path}`: {inner}"))
        }
    })
}

pub fn load_problem(path: &Path) -> Result<HypothesisProblem, CliError> {
    let file: ProblemFile = parse_json(&read_text(path, "problem")?, "problem")?;
    file.into_problem().map_err(|e| CliError::problem("problem", e))
}

pub fn load_design(path: &Path) -> Result<DesignConfig, CliError> {
    parse_json(&read_text(path, "design")?, "design")
}

#[derive(Debug, Deserialize)]
struct DataRow {
    y: f64,
    w: f64,
}

/// Reads `y,w` rows; `y` must be 0 or 1.
pub fn load_data(path: &Path) -> Result<RawSample, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::input("data", format!("cannot read {}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| CliError::input("data", e))?.clone();
    for name in ["y", "w"] {
        if !headers.iter().any(|h| h.trim() == name) {
            return Err(CliError::input("data", format!("field `{name}`: missing column in header")));
        }
    }
    let mut values = Vec::new();
    for (k, record) in reader.deserialize::<DataRow>().enumerate() {
        let line = k + 2;
        let row = record.map_err(|e| {
            let field = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.field().and_then(|f| headers.get(f as usize)).map(str::to_owned),
                _ => None,
            };
            match field {
                Some(f) => CliError::input("data", format!("line {line}: field `{f}`: {e}")),
                None => CliError::input("data", format!("line {line}: {e}")),
            }
        })?;
        if row.y != 0.0 && row.y != 1.0 {
            return Err(CliError::input("data", format!("line {line}: field `y` must be 0 or 1, got {}", row.y)));
        }
        if !row.w.is_finite() {
            return Err(CliError::input("data", format!("line {line}: field `w` must be finite")));
        }
        values.push(row.y);
        values.push(row.w);
    }
    RawSample::new(2, values).map_err(|_| CliError::input("data", "no rows"))
}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::input(what, format!("cannot parse {s:?} as a number"))))
        .collect()
}

fn parse_sweep(text: &str) -> Result<GammaRule, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::input("sweep", "expected lower,upper,points"));
    }
    let lower: f64 = parts[0].parse().map_err(|_| CliError::input("sweep", "lower is not a number"))?;
    let upper: f64 = parts[1].parse().map_err(|_| CliError::input("sweep", "upper is not a number"))?;
    let points: usize = parts[2].parse().map_err(|_| CliError::input("sweep", "points is not a count"))?;
    Ok(GammaRule::Sweep { lower, upper, points })
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(CliError::input("input", format!("alpha must lie in (0, 0.5), got {alpha}")))
    }
}

fn lambda_mode(text: &str, alpha: f64) -> Result<LambdaMode, CliError> {
    LambdaMode::parse(text, alpha).map_err(|e| CliError::input("input", e))
}

/// Command output: JSON, or CSV text for `power`.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Json(Value),
    Text(String),
}

impl Output {
    pub fn render(&self) -> String {
        match self {
            Output::Json(v) => {
                let mut s = serde_json::to_string_pretty(v).expect("json value serialises");
                s.push('\n');
                s
            }
            Output::Text(s) => s.clone(),
        }
    }
}

fn merge(report: impl Serialize, extra: Value) -> Value {
    let mut v = serde_json::to_value(report).expect("report serialises");
    if let (Value::Object(map), Value::Object(more)) = (&mut v, extra) {
        map.extend(more);
    }
    v
}

fn cmd_test(args: &TestArgs) -> Result<Output, CliError> {
    let inf = &args.inference;
    check_alpha(inf.alpha)?;
    let mode = lambda_mode(&inf.lambda, inf.alpha)?;
    let report = match (&args.input.problem, &args.input.data) {
        (Some(path), _) => {
            let problem = load_problem(path)?;
            run_test(&problem, BootstrapSource::Gaussian, inf.alpha, mode, inf.bootstrap, inf.seed)
        }
        (None, Some(data)) => {
            let config = load_design(args.input.design.as_deref().expect("clap requires --design"))?;
            let design = config.design()?;
            let gamma = args.gamma.ok_or_else(|| CliError::input("input", "--gamma is required with --data"))?;
            let sample = load_data(data)?;
            let problem = build_problem(&design, &sample, gamma, config.known_q).map_err(|e| CliError::design("input", e))?;
            let estimator = design.estimator(config.known_q);
            let source = BootstrapSource::Resample {
                sample: &sample,
                estimator: &estimator as &dyn MomentEstimator,
            };
            run_test(&problem, source, inf.alpha, mode, inf.bootstrap, inf.seed)
        }
        (None, None) => return Err(CliError::input("input", "give --problem or --data")),
    }
    .map_err(CliError::inference)?;
    Ok(Output::Json(merge(
        report,
        json!({ "command": "test", "lambda": inf.lambda, "gamma": args.gamma, "tool_version": TOOL_VERSION }),
    )))
}

fn cmd_invert(args: &InvertArgs) -> Result<Output, CliError> {
    let inf = &args.inference;
    check_alpha(inf.alpha)?;
    let mode = lambda_mode(&inf.lambda, inf.alpha)?;
    let grid = GridSpec {
        lower: args.grid_lower,
        upper: args.grid_upper,
        points: args.grid_points,
    };
    let ci = match (&args.input.problem, &args.input.data) {
        (Some(path), _) => {
            let base = load_problem(path)?;
            let row = parse_floats(args.row.as_deref().ok_or_else(|| CliError::input("row", "--row is required with --problem"))?, "row")?;
            if row.len() != base.d() {
                return Err(CliError::input("row", format!("expected {} entries, got {}", base.d(), row.len())));
            }
            let family = |g: f64| augment_with_counterfactual(&base, &row, g);
            invert_ci(&family, BootstrapSource::Gaussian, inf.alpha, mode, grid, inf.bootstrap, inf.seed)
        }
        (None, Some(data)) => {
            let config = load_design(args.input.design.as_deref().expect("clap requires --design"))?;
            let design = config.design()?;
            let sample = load_data(data)?;
            let estimator = design.estimator(config.known_q);
            let family = |g: f64| {
                build_problem(&design, &sample, g, config.known_q).map_err(|e| match e {
                    DesignError::Problem(p) => p,
                    other => ProblemError::Invalid {
                        field: "gamma",
                        reason: other.to_string(),
                    },
                })
            };
            let source = BootstrapSource::Resample {
                sample: &sample,
                estimator: &estimator as &dyn MomentEstimator,
            };
            invert_ci(&family, source, inf.alpha, mode, grid, inf.bootstrap, inf.seed)
        }
        (None, None) => return Err(CliError::input("input", "give --problem or --data")),
    }
    .map_err(CliError::inference)?;
    Ok(Output::Json(merge(
        ci,
        json!({ "command": "invert", "lambda": inf.lambda, "tool_version": TOOL_VERSION }),
    )))
}

fn cmd_bounds(args: &BoundsArgs) -> Result<Output, CliError> {
    let config = load_design(&args.design)?;
    let design = config.design()?;
    let (probs, source) = match &args.data {
        Some(path) => {
            let sample = load_data(path)?;
            let rows: Vec<usize> = (0..sample.len()).collect();
            let est = design.estimator(false).estimate(&sample, &rows).map_err(|e| CliError::problem("data", e))?;
            (est.beta_u, "data")
        }
        None => (design.population_cond_probs(), "population"),
    };
    let bounds = identified_bounds(&design, &probs).map_err(|e| CliError::design("bounds", e))?;
    Ok(Output::Json(merge(
        bounds,
        json!({
            "command": "bounds",
            "source": source,
            "width": bounds.upper - bounds.lower,
            "d": design.d(),
            "p": design.w_support.len() + 2,
            "config": config,
            "tool_version": TOOL_VERSION,
        }),
    )))
}

fn run_mc(args: &McArgs, require_sweep: bool) -> Result<(DesignConfig, McTable), CliError> {
    let mut config = load_design(&args.design)?;
    if let Some(s) = &args.sweep {
        config.gamma_rule = parse_sweep(s)?;
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(b) = args.bootstrap {
        config.bootstrap = b;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(l) = &args.lambda {
        config.lambda = l.clone();
    }
    if require_sweep && !matches!(config.gamma_rule, GammaRule::Sweep { .. }) {
        return Err(CliError::input("sweep", "power needs --sweep or a sweep gamma_rule"));
    }
    check_alpha(config.alpha)?;
    let design = config.design()?;
    let settings = McSettings {
        replications: config.replications,
        bootstrap: config.bootstrap,
        alpha: config.alpha,
        lambda_mode: lambda_mode(&config.lambda, config.alpha)?,
        seed: config.seed,
        known_q: config.known_q,
    };
    let table = monte_carlo(&design, config.gamma_rule, &settings).map_err(|e| CliError::design("mc", e))?;
    Ok((config, table))
}

fn cmd_mc(args: &McArgs) -> Result<Output, CliError> {
    let (config, table) = run_mc(args, false)?;
    if let Some(path) = &args.csv {
        fs::write(path, power_csv(&table)).map_err(|e| CliError::input("csv", format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(Output::Json(merge(
        &table,
        json!({ "command": "mc", "lambda": config.lambda, "config": config, "tool_version": TOOL_VERSION }),
    )))
}

fn cmd_power(args: &McArgs) -> Result<Output, CliError> {
    let (_, table) = run_mc(args, true)?;
    Ok(Output::Text(power_csv(&table)))
}

/// Runs the parsed command inside a thread pool of the requested size.
pub fn execute(config: &RunConfig) -> Result<Output, CliError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| CliError::input("input", format!("{THREADS_ENV}: expected a count, got {v:?}")))?),
        Err(_) => config.threads,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::input("input", format!("cannot start thread pool: {e}")))?;
    pool.install(|| match &config.command {
        Command::Test(a) => cmd_test(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Power(a) => cmd_power(a),
    })
}

/// Parses `args`, runs, writes the output and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = execute(&config).and_then(|out| {
        let text = out.render();
        match &config.output {
            Some(path) => fs::write(path, text).map_err(|e| CliError::input("output", format!("cannot write {}: {e}", path.display()))),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::input("output", format!("cannot write to stdout: {e}"))),
        }
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("lsysinfer: error [{}]: {}", e.stage, e.message);
            e.code
        }
    }
}
