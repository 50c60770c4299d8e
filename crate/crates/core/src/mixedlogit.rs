//! Random-coefficient binary logit: design, simulation, identified bounds on
//! the elasticity distribution, and Monte Carlo rejection studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{derive_seed, BootstrapSource};
use crate::hypothesis::{CellFrequencies, HypothesisProblem, MomentEstimator, ProblemError, RawSample};
use crate::inference::{run_test, InferenceError, LambdaMode};
use crate::lp::{LpBuilder, LpError, LpOptions, LpStatus, PreparedLp, Sense};
use crate::matlin::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("d = {0} is not a perfect square")]
    NotSquare(usize),
    #[error("w_points must be 4 or 16, got {0}")]
    WPoints(usize),
    #[error("invalid design: {0}")]
    Invalid(String),
    #[error("moment equalities are inconsistent with the type grid")]
    InfeasibleMoments,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Base-2 radical inverse of `k`: 1 -> 0.5, 2 -> 0.25, 3 -> 0.75, ...
pub fn sobol_point(mut k: u64) -> f64 {
    let mut out = 0.0;
    let mut scale = 0.5;
    while k > 0 {
        if k & 1 == 1 {
            out += scale;
        }
        k >>= 1;
        scale *= 0.5;
    }
    out
}

/// The first `m` one-dimensional Sobol points, skipping the origin.
pub fn sobol_points(m: usize) -> Vec<f64> {
    (1..=m as u64).map(sobol_point).collect()
}

/// Stretches `points` so their minimum lands on `lo` and maximum on `hi`.
fn stretch(points: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let min = points.iter().copied().fold(f64::INFINITY, f64::min);
    let max = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        points.iter().map(|x| lo + (x - min) / (max - min) * (hi - lo)).collect()
    } else {
        points.iter().map(|x| lo + x * (hi - lo)).collect()
    }
}

pub fn logit_choice_prob(w: f64, v: (f64, f64)) -> f64 {
    let z = v.0 + v.1 * w;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Price elasticity `c1 * w_bar * (1 - l(w_bar, v))`.
pub fn elasticity(v: (f64, f64), w_bar: f64) -> f64 {
    v.1 * w_bar * (1.0 - logit_choice_prob(w_bar, v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedLogitDesign {
    pub w_support: Vec<f64>,
    /// `(c0, c1)` per type
    pub v_support: Vec<(f64, f64)>,
    pub x_true: Vec<f64>,
    pub t: f64,
    pub w_bar: f64,
    pub n: usize,
}

pub fn build_design(d: usize, w_points: usize, t: f64, w_bar: f64, n: usize) -> Result<MixedLogitDesign, DesignError> {
    let m = (d as f64).sqrt().round() as usize;
    if d == 0 || m * m != d {
        return Err(DesignError::NotSquare(d));
    }
    let w_support: Vec<f64> = match w_points {
        4 => vec![0.0, 1.0, 2.0, 3.0],
        16 => (0..16).map(|k| k as f64 / 5.0).collect(),
        other => return Err(DesignError::WPoints(other)),
    };
    let raw = sobol_points(m);
    let c0 = stretch(&raw, 0.0, 0.5);
    let c1 = stretch(&raw, -3.0, 0.0);
    let v_support: Vec<(f64, f64)> = c0.iter().flat_map(|&a| c1.iter().map(move |&b| (a, b))).collect();
    MixedLogitDesign::new(w_support, v_support, vec![1.0 / d as f64; d], t, w_bar, n)
}

impl MixedLogitDesign {
    pub fn new(
        w_support: Vec<f64>,
        v_support: Vec<(f64, f64)>,
        x_true: Vec<f64>,
        t: f64,
        w_bar: f64,
        n: usize,
    ) -> Result<Self, DesignError> {
        if v_support.is_empty() || x_true.len() != v_support.len() {
            return Err(DesignError::Invalid("x_true must have one entry per type".into()));
        }
        if x_true.iter().any(|&x| !(x >= 0.0)) || (x_true.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DesignError::Invalid("x_true must be a probability vector".into()));
        }
        for (i, a) in w_support.iter().enumerate() {
            if w_support[..i].contains(a) {
                return Err(DesignError::Invalid(format!("repeated support point {a}")));
            }
        }
        if !t.is_finite() || !w_bar.is_finite() || n == 0 {
            return Err(DesignError::Invalid("t and w_bar must be finite and n positive".into()));
        }
        Ok(Self {
            w_support,
            v_support,
            x_true,
            t,
            w_bar,
            n,
        })
    }

    pub fn d(&self) -> usize {
        self.v_support.len()
    }

    /// `l(w_i, v_j)` as a `|W| x d` matrix.
    pub fn choice_matrix(&self) -> DenseMatrix {
        if self.w_support.is_empty() {
            return DenseMatrix::zeros(0, self.d());
        }
        let rows: Vec<Vec<f64>> = self
            .w_support
            .iter()
            .map(|&w| self.v_support.iter().map(|&v| logit_choice_prob(w, v)).collect())
            .collect();
        DenseMatrix::from_rows(&rows).expect("rectangular")
    }

    /// `a_j = 1{elasticity_j <= t}`.
    pub fn indicator(&self) -> Vec<f64> {
        self.v_support
            .iter()
            .map(|&v| if elasticity(v, self.w_bar) <= self.t { 1.0 } else { 0.0 })
            .collect()
    }

    /// `P(Y = 1 | W = w)` under `x_true`.
    pub fn population_cond_probs(&self) -> Vec<f64> {
        self.choice_matrix().matvec(&self.x_true).expect("conformable")
    }

    /// `F(t | w_bar)` under `x_true`.
    pub fn population_cdf(&self) -> f64 {
        self.indicator().iter().zip(&self.x_true).map(|(a, x)| a * x).sum()
    }

    /// `A` with the moment rows, the adding-up row and the indicator row.
    pub fn constraint_matrix(&self) -> DenseMatrix {
        let mut a = self.choice_matrix();
        a.push_row(&vec![1.0; self.d()]).expect("width d");
        a.push_row(&self.indicator()).expect("width d");
        a
    }

    pub fn estimator(&self, known_q: bool) -> CellFrequencies {
        CellFrequencies {
            w_support: self.w_support.clone(),
            known_q: known_q.then(|| vec![1.0 / self.w_support.len() as f64; self.w_support.len()]),
        }
    }
}

/// `n` rows `(y, w)`: `W` uniform on its support, a type drawn from `x_true`,
/// then `Y ~ Bernoulli(l(W, V))`.
pub fn simulate_sample(design: &MixedLogitDesign, seed: u64) -> RawSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cumulative = Vec::with_capacity(design.d());
    let mut acc = 0.0;
    for x in &design.x_true {
        acc += x;
        cumulative.push(acc);
    }
    let mut values = Vec::with_capacity(2 * design.n);
    for _ in 0..design.n {
        let w = design.w_support[rng.gen_range(0..design.w_support.len())];
        let u: f64 = rng.gen::<f64>() * acc;
        let j = cumulative.iter().position(|&c| u < c).unwrap_or(design.d() - 1);
        let y = rng.gen::<f64>() < logit_choice_prob(w, design.v_support[j]);
        values.push(if y { 1.0 } else { 0.0 });
        values.push(w);
    }
    RawSample::new(2, values).expect("n > 0")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElasticityBounds {
    pub lower: f64,
    pub upper: f64,
    pub t: f64,
    pub w_bar: f64,
}

/// `min` and `max` of `a'x` over `{x >= 0 : 1'x = 1, L x = q}`.
pub fn bounds_lp(choice: &DenseMatrix, cond_probs: &[f64], a: &[f64]) -> Result<(f64, f64), DesignError> {
    let d = a.len();
    if cond_probs.len() != choice.rows() || (choice.rows() > 0 && choice.cols() != d) {
        return Err(DesignError::Invalid(format!(
            "{} conditional probabilities for a {}x{} choice matrix with {} types",
            cond_probs.len(),
            choice.rows(),
            choice.cols(),
            d
        )));
    }
    let mut b = LpBuilder::new();
    let x0 = b.add_vars(d, 0.0, f64::INFINITY);
    b.add_eq((0..d).map(|j| (x0 + j, 1.0)).collect(), 1.0);
    for (i, &q) in cond_probs.iter().enumerate() {
        b.add_eq((0..d).map(|j| (x0 + j, choice[(i, j)])).collect(), q);
    }
    let prepared = PreparedLp::new(&b.build(Sense::Minimize), &LpOptions::default())?;
    if !prepared.is_feasible() {
        return Err(DesignError::InfeasibleMoments);
    }
    let lo = prepared.solve(a, Sense::Minimize)?;
    let hi = prepared.solve(a, Sense::Maximize)?;
    if lo.status != LpStatus::Optimal || hi.status != LpStatus::Optimal {
        return Err(DesignError::InfeasibleMoments);
    }
    Ok((lo.value.clamp(0.0, 1.0), hi.value.clamp(0.0, 1.0)))
}

pub fn identified_bounds(design: &MixedLogitDesign, cond_probs: &[f64]) -> Result<ElasticityBounds, DesignError> {
    let (lower, upper) = bounds_lp(&design.choice_matrix(), cond_probs, &design.indicator())?;
    Ok(ElasticityBounds {
        lower,
        upper,
        t: design.t,
        w_bar: design.w_bar,
    })
}

/// `beta_hat = (cell frequencies, 1, gamma)` against the design's `A`.
pub fn build_problem(
    design: &MixedLogitDesign,
    sample: &RawSample,
    gamma: f64,
    known_q: bool,
) -> Result<HypothesisProblem, DesignError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(DesignError::Invalid(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let rows: Vec<usize> = (0..sample.len()).collect();
    let est = design.estimator(known_q).estimate(sample, &rows)?;
    let k = design.w_support.len();
    let mut beta_hat = est.beta_u;
    beta_hat.push(1.0);
    beta_hat.push(gamma);
    let mut known_mask = vec![false; k];
    known_mask.extend([true, true]);
    let problem = HypothesisProblem {
        a: design.constraint_matrix(),
        beta_hat,
        known_mask,
        n: sample.len(),
        xi_hat: est.xi_hat,
        omega_i: None,
    };
    problem.check()?;
    Ok(problem)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    LowerBound,
    UpperBound,
    Fixed(f64),
    /// Offset from the lower bound (negative moves outside the set).
    LowerOffset(f64),
    Sweep { lower: f64, upper: f64, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub gamma: f64,
    pub reject_rate: f64,
    pub mc_se: f64,
    pub rejections: usize,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McTable {
    pub rows: Vec<McRow>,
    pub identified_set: ElasticityBounds,
    pub population_cdf: f64,
    pub p: usize,
    pub d: usize,
    pub n: usize,
    pub replications: usize,
    pub bootstrap: usize,
    pub alpha: f64,
    pub lambda_mode: LambdaMode,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub replications: usize,
    pub bootstrap: usize,
    pub alpha: f64,
    pub lambda_mode: LambdaMode,
    pub seed: u64,
    pub known_q: bool,
}

/// Rejection frequencies over independent simulated samples. Every `gamma`
/// of a sweep sees the same samples and bootstrap streams.
pub fn monte_carlo(design: &MixedLogitDesign, rule: GammaRule, settings: &McSettings) -> Result<McTable, DesignError> {
    if settings.replications == 0 {
        return Err(DesignError::Invalid("need at least one replication".into()));
    }
    let bounds = identified_bounds(design, &design.population_cond_probs())?;
    let gammas: Vec<f64> = match rule {
        GammaRule::LowerBound => vec![bounds.lower],
        GammaRule::UpperBound => vec![bounds.upper],
        GammaRule::Fixed(g) => vec![g],
        GammaRule::LowerOffset(off) => vec![bounds.lower + off],
        GammaRule::Sweep { lower, upper, points } => {
            if points < 2 || !(upper > lower) {
                return Err(DesignError::Invalid("sweep needs upper > lower and at least 2 points".into()));
            }
            (0..points).map(|k| lower + (upper - lower) * k as f64 / (points - 1) as f64).collect()
        }
    };
    let estimator = design.estimator(settings.known_q);
    let decisions: Vec<Vec<bool>> = (0..settings.replications)
        .into_par_iter()
        .map(|r| -> Result<Vec<bool>, DesignError> {
            let sample_seed = derive_seed(settings.seed, 2 * r as u64);
            let boot_seed = derive_seed(settings.seed, 2 * r as u64 + 1);
            let sample = simulate_sample(design, sample_seed);
            gammas
                .iter()
                .map(|&g| replicate_decision(design, &sample, &estimator, g, settings, boot_seed))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let rows = gammas
        .iter()
        .enumerate()
        .map(|(k, &gamma)| {
            let rejections = decisions.iter().filter(|d| d[k]).count();
            let rate = rejections as f64 / settings.replications as f64;
            McRow {
                gamma,
                reject_rate: rate,
                mc_se: (rate * (1.0 - rate) / settings.replications as f64).sqrt(),
                rejections,
                replications: settings.replications,
            }
        })
        .collect();
    Ok(McTable {
        rows,
        identified_set: bounds,
        population_cdf: design.population_cdf(),
        p: design.w_support.len() + 2,
        d: design.d(),
        n: design.n,
        replications: settings.replications,
        bootstrap: settings.bootstrap,
        alpha: settings.alpha,
        lambda_mode: settings.lambda_mode,
        seed: settings.seed,
    })
}

fn replicate_decision(
    design: &MixedLogitDesign,
    sample: &RawSample,
    estimator: &CellFrequencies,
    gamma: f64,
    settings: &McSettings,
    boot_seed: u64,
) -> Result<bool, DesignError> {
    // a c.d.f. value outside [0, 1] is rejected by any sensible test
    if !(0.0..=1.0).contains(&gamma) {
        return Ok(true);
    }
    let problem = match build_problem(design, sample, gamma, settings.known_q) {
        Ok(p) => p,
        // an empty cell in the original sample: treat like a failed draw, keep the null
        Err(DesignError::Problem(ProblemError::EmptyCell(_))) => return Ok(false),
        Err(e) => return Err(e),
    };
    let source = BootstrapSource::Resample { sample, estimator };
    match run_test(&problem, source, settings.alpha, settings.lambda_mode, settings.bootstrap, boot_seed) {
        Ok(report) => Ok(report.reject),
        Err(e) if e.vacuous_null => Ok(true),
        Err(e) => Err(e.into()),
    }
}

/// `gamma,reject_rate,mc_se` rows.
pub fn power_csv(table: &McTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["gamma", "reject_rate", "mc_se"]).expect("in-memory write");
    for row in &table.rows {
        w.write_record([row.gamma.to_string(), row.reject_rate.to_string(), row.mc_se.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
