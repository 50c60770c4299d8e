//! The full test and confidence sets by test inversion.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bootstrap::{
    self, critical_value, draw_bootstrap, lambda_bootstrap, omega_i_from_bootstrap, two_stage_critical_value, BootstrapError,
    BootstrapSource, CriticalValueReport, Programs,
};
use crate::hypothesis::{HypothesisProblem, ProblemError};
use crate::restricted::{restricted_estimator, RestrictError};
use crate::statistic::{estimate_x_star_with, StatError, StatisticValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    EstimateXStar,
    Bootstrap,
    OmegaI,
    Statistic,
    RestrictedEstimator,
    Lambda,
    CriticalValue,
    Inversion,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Input => "input",
            Stage::EstimateXStar => "estimate_x_star",
            Stage::Bootstrap => "bootstrap",
            Stage::OmegaI => "omega_i",
            Stage::Statistic => "statistic",
            Stage::RestrictedEstimator => "restricted_estimator",
            Stage::Lambda => "lambda",
            Stage::CriticalValue => "critical_value",
            Stage::Inversion => "inversion",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: dimensions, ranges, malformed data.
    Input,
    /// The computation itself failed.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage}: {message}")]
pub struct InferenceError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
    /// The null cannot hold for any data: no `x >= 0` matches the known rows.
    pub vacuous_null: bool,
}

impl InferenceError {
    fn new(stage: Stage, kind: ErrorKind, message: impl fmt::Display) -> Self {
        Self {
            stage,
            kind,
            message: message.to_string(),
            vacuous_null: false,
        }
    }

    fn input(stage: Stage, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorKind::Input, message)
    }

    fn numerical(stage: Stage, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorKind::Numerical, message)
    }

    fn from_problem(stage: Stage, e: ProblemError) -> Self {
        match e {
            ProblemError::Dimension { .. } | ProblemError::Invalid { .. } | ProblemError::Parse(_) => Self::input(stage, e),
            other => Self::numerical(stage, other),
        }
    }

    fn from_stat(stage: Stage, e: StatError) -> Self {
        let vacuous = matches!(e, StatError::InconsistentKnownBlock(_));
        let mut out = Self::numerical(stage, e);
        out.vacuous_null = vacuous;
        out
    }

    fn from_bootstrap(stage: Stage, e: BootstrapError) -> Self {
        match e {
            BootstrapError::BadAlpha(_) | BootstrapError::BadGamma(_) | BootstrapError::TooFewDraws { .. } => Self::input(stage, e),
            BootstrapError::Problem(p) => Self::from_problem(stage, p),
            BootstrapError::Restrict(RestrictError::LambdaOutOfRange(_)) => Self::input(stage, e),
            other => Self::numerical(stage, other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaMode {
    RuleOfThumb,
    BootstrapRule,
    Fixed { value: f64 },
    TwoStage { gamma: f64 },
}

impl LambdaMode {
    /// Parses `rot`, `boot`, `two-stage` (gamma = alpha / 10),
    /// `two-stage:<gamma>` or a number in `[0, 1]`.
    pub fn parse(text: &str, alpha: f64) -> Result<Self, String> {
        match text.trim() {
            "rot" => Ok(Self::RuleOfThumb),
            "boot" => Ok(Self::BootstrapRule),
            "two-stage" => Ok(Self::TwoStage { gamma: alpha / 10.0 }),
            other => {
                if let Some(g) = other.strip_prefix("two-stage:") {
                    let gamma: f64 = g.parse().map_err(|_| format!("lambda: cannot parse gamma in {other:?}"))?;
                    return Ok(Self::TwoStage { gamma });
                }
                let value: f64 = other
                    .parse()
                    .map_err(|_| format!("lambda: expected rot, boot, two-stage[:gamma] or a number, got {other:?}"))?;
                if !(0.0..=1.0).contains(&value) {
                    return Err(format!("lambda: fixed value must lie in [0, 1], got {value}"));
                }
                Ok(Self::Fixed { value })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub statistic: StatisticValue,
    pub critical: CriticalValueReport,
    pub reject: bool,
    pub p_value: f64,
    pub seed: u64,
    pub bootstrap: usize,
    pub alpha: f64,
    pub lambda_mode: LambdaMode,
    pub lambda_used: f64,
    /// Bootstrap quantile behind the data-driven lambda, when used.
    pub lambda_tau: Option<f64>,
    pub restricted_outer_value: f64,
    pub redraws: usize,
    pub timing_ms: f64,
}

/// `(1 + #{stat_b >= t_n}) / (B + 1)`.
pub fn bootstrap_p_value(stats: &[f64], t_n: f64) -> f64 {
    let exceed = stats.iter().filter(|&&s| s >= t_n).count();
    (1 + exceed) as f64 / (stats.len() + 1) as f64
}

pub fn run_test(
    problem: &HypothesisProblem,
    source: BootstrapSource<'_>,
    alpha: f64,
    mode: LambdaMode,
    b: usize,
    seed: u64,
) -> Result<TestReport, InferenceError> {
    let started = Instant::now();
    problem.check().map_err(|e| InferenceError::from_problem(Stage::Input, e))?;
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(InferenceError::input(Stage::Input, format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    if b == 0 {
        return Err(InferenceError::input(Stage::Input, "need at least one bootstrap draw"));
    }
    let full_rank = problem.full_row_rank();
    let star = estimate_x_star_with(problem, full_rank).map_err(|e| InferenceError::from_stat(Stage::EstimateXStar, e))?;
    let drawn = draw_bootstrap(problem, source, &star, b, seed).map_err(|e| InferenceError::from_bootstrap(Stage::Bootstrap, e))?;
    let draws = &drawn.draws;

    let mut problem = problem.clone();
    if problem.omega_i.is_none() {
        let omega = omega_i_from_bootstrap(draws).map_err(|e| InferenceError::from_bootstrap(Stage::OmegaI, e))?;
        problem.omega_i = Some(omega);
    }
    let programs = Programs::new(&problem).map_err(|e| InferenceError::from_stat(Stage::Statistic, e))?;
    let rn = problem.sqrt_n();
    let resid: Vec<f64> = problem.beta_hat.iter().zip(&star.fitted).map(|(x, f)| x - f).collect();
    let t_e = rn * programs.equality.dual_norm(&resid);
    let scaled: Vec<f64> = star.fitted.iter().map(|v| rn * v).collect();
    let t_i = programs
        .inequality
        .sup(&scaled)
        .map_err(|e| InferenceError::from_stat(Stage::Statistic, e))?;
    let statistic = StatisticValue::new(t_e, t_i);

    let restricted = restricted_estimator(&problem, &star).map_err(|e| {
        let vacuous = matches!(e, RestrictError::InfeasibleKnownBlock);
        let mut err = InferenceError::numerical(Stage::RestrictedEstimator, e);
        err.vacuous_null = vacuous;
        err
    })?;

    let mut lambda_tau = None;
    let critical = match mode {
        LambdaMode::TwoStage { gamma } => two_stage_critical_value(&problem, &programs, &star, draws, alpha, gamma)
            .map_err(|e| InferenceError::from_bootstrap(Stage::CriticalValue, e))?,
        _ => {
            let lambda = match mode {
                LambdaMode::RuleOfThumb => bootstrap::lambda_rule_of_thumb(problem.p(), problem.n),
                LambdaMode::BootstrapRule => {
                    let choice = lambda_bootstrap(&programs, draws, problem.n).map_err(|e| InferenceError::from_bootstrap(Stage::Lambda, e))?;
                    lambda_tau = Some(choice.tau);
                    choice.lambda
                }
                LambdaMode::Fixed { value } => value,
                LambdaMode::TwoStage { .. } => unreachable!(),
            };
            critical_value(&problem, &programs, &restricted, draws, lambda, alpha)
                .map_err(|e| InferenceError::from_bootstrap(Stage::CriticalValue, e))?
        }
    };
    let p_value = bootstrap_p_value(&critical.bootstrap_stats, statistic.t_n);
    Ok(TestReport {
        statistic,
        reject: statistic.t_n > critical.c_value,
        p_value,
        seed,
        bootstrap: b,
        alpha,
        lambda_mode: mode,
        lambda_used: critical.lambda_used,
        lambda_tau,
        restricted_outer_value: restricted.outer_value,
        redraws: drawn.redraws,
        critical,
        timing_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Evenly spaced search grid `lower, ..., upper` with `points >= 2` entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.lower + self.step() * k as f64).collect()
    }
}

/// Bisection steps per boundary; resolution is `step / 2^BISECTION_STEPS`.
pub const BISECTION_STEPS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub gamma: f64,
    pub reject: bool,
    pub p_value: f64,
    pub t_n: f64,
    pub c_value: f64,
    /// The known rows admit no `x >= 0` at this value.
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub grid: Vec<GridPoint>,
    /// Non-rejected grid points form one run.
    pub contiguous: bool,
    /// The interval reaches the edge of the search grid on that side.
    pub lower_censored: bool,
    pub upper_censored: bool,
    pub seed: u64,
    pub bootstrap: usize,
    pub lambda_mode: LambdaMode,
}

pub type ProblemFamily<'a> = dyn Fn(f64) -> Result<HypothesisProblem, ProblemError> + Sync + 'a;

fn evaluate(
    family: &ProblemFamily<'_>,
    gamma: f64,
    source: BootstrapSource<'_>,
    alpha: f64,
    mode: LambdaMode,
    b: usize,
    seed: u64,
) -> Result<GridPoint, InferenceError> {
    let problem = family(gamma).map_err(|e| InferenceError::from_problem(Stage::Inversion, e))?;
    match run_test(&problem, source, alpha, mode, b, seed) {
        Ok(r) => Ok(GridPoint {
            gamma,
            reject: r.reject,
            p_value: r.p_value,
            t_n: r.statistic.t_n,
            c_value: r.critical.c_value,
            vacuous: false,
        }),
        // a null that no distribution satisfies is rejected outright
        Err(e) if e.vacuous_null => Ok(GridPoint {
            gamma,
            reject: true,
            p_value: 0.0,
            t_n: f64::INFINITY,
            c_value: f64::NAN,
            vacuous: true,
        }),
        Err(e) => Err(e),
    }
}

/// Hull of the non-rejected values of `gamma`, with both boundaries refined
/// by bisection. Every test uses `seed`, so all values share their bootstrap
/// draws.
pub fn invert_ci(
    family: &ProblemFamily<'_>,
    source: BootstrapSource<'_>,
    alpha: f64,
    mode: LambdaMode,
    grid: GridSpec,
    b: usize,
    seed: u64,
) -> Result<ConfidenceInterval, InferenceError> {
    if grid.points < 2 || !(grid.upper > grid.lower) || !grid.lower.is_finite() || !grid.upper.is_finite() {
        return Err(InferenceError::input(Stage::Input, "grid needs finite bounds with upper > lower and at least 2 points"));
    }
    let values = grid.values();
    let points: Vec<GridPoint> = values
        .par_iter()
        .map(|&g| evaluate(family, g, source, alpha, mode, b, seed))
        .collect::<Result<_, _>>()?;
    let accepted: Vec<usize> = (0..points.len()).filter(|&k| !points[k].reject).collect();
    let (Some(&first), Some(&last)) = (accepted.first(), accepted.last()) else {
        return Err(InferenceError::numerical(Stage::Inversion, "empty confidence set at this alpha and grid"));
    };
    let contiguous = last - first + 1 == accepted.len();

    let refine = |mut inside: f64, mut outside: f64| -> Result<f64, InferenceError> {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (inside + outside);
            if evaluate(family, mid, source, alpha, mode, b, seed)?.reject {
                outside = mid;
            } else {
                inside = mid;
            }
        }
        Ok(inside)
    };
    let lower = if first == 0 { values[0] } else { refine(values[first], values[first - 1])? };
    let upper = if last + 1 == values.len() { values[last] } else { refine(values[last], values[last + 1])? };
    Ok(ConfidenceInterval {
        lower,
        upper,
        alpha,
        grid: points,
        contiguous,
        lower_censored: first == 0,
        upper_censored: last + 1 == values.len(),
        seed,
        bootstrap: b,
        lambda_mode: mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{augment_with_counterfactual, CellFrequencies, MomentEstimator, RawSample};
    use crate::matlin::DenseMatrix;

    #[test]
    fn deep_inside_the_cone_never_rejects() {
        let mut pr = HypothesisProblem::new(DenseMatrix::identity(3), vec![0.3, 0.4, 0.5], 500).unwrap();
        pr.xi_hat = DenseMatrix::identity(3).scale(0.01);
        for mode in [LambdaMode::RuleOfThumb, LambdaMode::BootstrapRule, LambdaMode::Fixed { value: 0.0 }, LambdaMode::TwoStage { gamma: 0.01 }] {
            let r = run_test(&pr, BootstrapSource::Gaussian, 0.1, mode, 50, 4).unwrap();
            assert_eq!(r.statistic.t_n, 0.0);
            assert!(!r.reject);
            assert!(r.critical.c_value >= 0.0);
        }
    }

    #[test]
    fn clearly_outside_rejects() {
        let mut pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.5, -0.5], 400).unwrap();
        pr.xi_hat = DenseMatrix::identity(2).scale(0.01);
        let r = run_test(&pr, BootstrapSource::Gaussian, 0.05, LambdaMode::BootstrapRule, 99, 1).unwrap();
        assert!(r.reject);
        assert!((r.p_value - 0.01).abs() < 1e-12);
    }

    #[test]
    fn p_value_convention() {
        assert_eq!(bootstrap_p_value(&[1.0, 2.0, 3.0], 2.0), 0.75);
        assert_eq!(bootstrap_p_value(&[], 0.0), 1.0);
    }

    #[test]
    fn lambda_mode_parsing() {
        assert_eq!(LambdaMode::parse("rot", 0.05), Ok(LambdaMode::RuleOfThumb));
        assert_eq!(LambdaMode::parse("boot", 0.05), Ok(LambdaMode::BootstrapRule));
        assert_eq!(LambdaMode::parse("two-stage:0.004", 0.05), Ok(LambdaMode::TwoStage { gamma: 0.004 }));
        assert_eq!(LambdaMode::parse("two-stage", 0.05), Ok(LambdaMode::TwoStage { gamma: 0.005 }));
        assert_eq!(LambdaMode::parse("0", 0.05), Ok(LambdaMode::Fixed { value: 0.0 }));
        assert!(LambdaMode::parse("2", 0.05).is_err());
        assert!(LambdaMode::parse("fast", 0.05).is_err());
    }

    #[test]
    fn vacuous_known_block_is_labelled() {
        let mut pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.5, 0.5], 100).unwrap();
        pr = augment_with_counterfactual(&pr, &[1.0, 1.0], -1.0).unwrap();
        let err = run_test(&pr, BootstrapSource::Gaussian, 0.05, LambdaMode::Fixed { value: 0.0 }, 20, 1).unwrap_err();
        assert_eq!(err.stage, Stage::RestrictedEstimator);
        assert!(err.vacuous_null);
        assert_eq!(err.kind, ErrorKind::Numerical);
    }

    fn point_identified(n: usize, seed: u64) -> (RawSample, CellFrequencies) {
        use rand::Rng;
        let mut rng = bootstrap::substream(seed, u64::MAX);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![(rng.gen::<f64>() < 0.3) as u8 as f64, 0.0]).collect();
        (
            RawSample::from_rows(&rows).unwrap(),
            CellFrequencies {
                w_support: vec![0.0],
                known_q: None,
            },
        )
    }

    fn width_at(n: usize, seed: u64) -> f64 {
        // beta = x with x = (P(Y=1), P(Y=0)) and the counterfactual row x_1 = gamma
        let (sample, est) = point_identified(n, seed);
        let all: Vec<usize> = (0..n).collect();
        let m = est.estimate(&sample, &all).unwrap();
        let mut base = HypothesisProblem::new(DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap(), m.beta_u, n).unwrap();
        base.xi_hat = m.xi_hat;
        base = augment_with_counterfactual(&base, &[1.0, 1.0], 1.0).unwrap();
        let family = move |g: f64| augment_with_counterfactual(&base, &[1.0, 0.0], g);
        let ci = invert_ci(
            &family,
            BootstrapSource::Resample { sample: &sample, estimator: &est },
            0.1,
            LambdaMode::Fixed { value: 0.0 },
            GridSpec { lower: 0.1, upper: 0.5, points: 41 },
            49,
            seed,
        )
        .unwrap();
        assert!(ci.lower <= 0.3 + 0.1 && ci.upper >= 0.3 - 0.1, "{ci:?}");
        assert!(ci.contiguous);
        ci.upper - ci.lower
    }

    #[test]
    fn interval_shrinks_with_n() {
        let small: f64 = (0..3).map(|s| width_at(1000, s)).sum();
        let large: f64 = (0..3).map(|s| width_at(4000, s)).sum();
        assert!(large < small, "{large} vs {small}");
    }

    #[test]
    fn empty_confidence_set() {
        let mut pr = HypothesisProblem::new(DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap(), vec![0.3], 10_000).unwrap();
        pr.xi_hat = DenseMatrix::identity(1).scale(1e-4);
        let base = augment_with_counterfactual(&pr, &[1.0, 1.0], 1.0).unwrap();
        let family = move |g: f64| augment_with_counterfactual(&base, &[1.0, 0.0], g);
        let err = invert_ci(
            &family,
            BootstrapSource::Gaussian,
            0.45,
            LambdaMode::Fixed { value: 0.0 },
            GridSpec { lower: 0.6, upper: 0.9, points: 4 },
            20,
            3,
        )
        .unwrap_err();
        assert!(err.message.contains("empty confidence set"));
    }
}
