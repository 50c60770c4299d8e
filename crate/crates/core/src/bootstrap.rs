//! Bootstrap draws, critical values and the data-driven tuning parameter.
//!
//! Replicate `b` always draws from its own ChaCha substream, so results do
//! not depend on how replicates are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hypothesis::{HypothesisProblem, MomentEstimator, ProblemError, RawSample};
use crate::matlin::{self, DenseMatrix, LinalgError};
use crate::restricted::{upper_bound_term, RestrictError, RestrictedEstimate};
use crate::statistic::{estimate_x_star_with, omega_or_identity, EqualityNorm, InequalitySet, StarEstimate, StatError};

/// Consecutive degenerate resamples tolerated for one replicate.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BootstrapError {
    #[error("replicate {replicate}: {consecutive} consecutive degenerate resamples")]
    Degenerate { replicate: usize, consecutive: usize },
    #[error("replicate {replicate}: {source}")]
    Replicate { replicate: usize, source: StatError },
    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("alpha must lie in (0, 0.5), got {0}")]
    BadAlpha(f64),
    #[error("two-stage gamma must lie in (0, alpha), got {0}")]
    BadGamma(f64),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Restrict(#[from] RestrictError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The RNG for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A well-mixed child seed for `(seed, index)` (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapDraw {
    pub g_e: Vec<f64>,
    pub g_i: Vec<f64>,
    pub replicate_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    pub draws: Vec<BootstrapDraw>,
    /// Degenerate resamples that were discarded and redrawn.
    pub redraws: usize,
}

/// Where replicate estimates of the unknown block come from.
#[derive(Clone, Copy)]
pub enum BootstrapSource<'a> {
    /// Resample rows with replacement and re-run the estimator.
    Resample {
        sample: &'a RawSample,
        estimator: &'a dyn MomentEstimator,
    },
    /// `beta_u + xi_hat^{1/2} z / sqrt(n)` with standard normal `z`; for
    /// problems supplied without microdata.
    Gaussian,
}

/// Relative size below which a change in a fitted value is rounding.
const FIT_NOISE: f64 = 1e-10;

pub fn draw_bootstrap(
    problem: &HypothesisProblem,
    source: BootstrapSource<'_>,
    star: &StarEstimate,
    b: usize,
    seed: u64,
) -> Result<BootstrapDraws, BootstrapError> {
    let full_rank = problem.full_row_rank();
    let rn = problem.sqrt_n();
    let base_resid: Vec<f64> = problem.beta_hat.iter().zip(&star.fitted).map(|(x, f)| x - f).collect();
    let xi_root = match source {
        BootstrapSource::Gaussian if problem.p_u() > 0 => Some(matlin::psd_sqrt(&problem.xi_hat)?),
        _ => None,
    };
    let beta_u = problem.beta_u();

    let one = |rep: usize| -> Result<(BootstrapDraw, usize), BootstrapError> {
        let mut failures = 0usize;
        loop {
            let stream = ((failures as u64) << 32) | rep as u64;
            let mut rng = substream(seed, stream);
            let estimate = match source {
                BootstrapSource::Resample { sample, estimator } => {
                    let m = sample.len();
                    let rows: Vec<usize> = (0..m).map(|_| rng.gen_range(0..m)).collect();
                    estimator.estimate(sample, &rows)
                }
                BootstrapSource::Gaussian => {
                    let z: Vec<f64> = (0..beta_u.len()).map(|_| rng.sample(StandardNormal)).collect();
                    let shift = match &xi_root {
                        Some(r) => r.matvec(&z)?,
                        None => Vec::new(),
                    };
                    Ok(crate::hypothesis::MomentEstimate {
                        beta_u: beta_u.iter().zip(&shift).map(|(b, s)| b + s / rn).collect(),
                        xi_hat: problem.xi_hat.clone(),
                    })
                }
            };
            let estimate = match estimate {
                Ok(e) => e,
                Err(ProblemError::EmptyCell(_)) => {
                    failures += 1;
                    if failures >= MAX_REDRAWS {
                        return Err(BootstrapError::Degenerate {
                            replicate: rep,
                            consecutive: failures,
                        });
                    }
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            // the weighting matrix stays at the sample's xi_hat
            let replicate = problem.with_estimate(&estimate.beta_u, problem.xi_hat.clone());
            let star_b = estimate_x_star_with(&replicate, full_rank).map_err(|source| BootstrapError::Replicate { replicate: rep, source })?;
            let g_e = replicate
                .beta_hat
                .iter()
                .zip(&star_b.fitted)
                .zip(&base_resid)
                .map(|((x, f), r)| rn * ((x - f) - r))
                .collect();
            let g_i = star_b
                .fitted
                .iter()
                .zip(&star.fitted)
                .map(|(&fb, &f)| {
                    // rounding-level differences (e.g. rows pinned by the known block) would
                    // otherwise survive into Omega_i as spurious directions
                    if (fb - f).abs() <= FIT_NOISE * (1.0 + f.abs().max(fb.abs())) {
                        0.0
                    } else {
                        rn * (fb - f)
                    }
                })
                .collect();
            return Ok((
                BootstrapDraw {
                    g_e,
                    g_i,
                    replicate_index: rep,
                },
                failures,
            ));
        }
    };
    let results: Vec<Result<(BootstrapDraw, usize), BootstrapError>> = (0..b).into_par_iter().map(one).collect();
    let mut draws = Vec::with_capacity(b);
    let mut redraws = 0;
    for r in results {
        let (draw, failed) = r?;
        redraws += failed;
        draws.push(draw);
    }
    Ok(BootstrapDraws { draws, redraws })
}

/// `psd_sqrt` of the sample covariance (divisor `B`) of the `g_i` draws.
pub fn omega_i_from_bootstrap(draws: &[BootstrapDraw]) -> Result<DenseMatrix, BootstrapError> {
    if draws.len() < 2 {
        return Err(BootstrapError::TooFewDraws {
            needed: 2,
            got: draws.len(),
        });
    }
    let p = draws[0].g_i.len();
    let b = draws.len() as f64;
    let mut mean = vec![0.0; p];
    for d in draws {
        for (m, v) in mean.iter_mut().zip(&d.g_i) {
            *m += v / b;
        }
    }
    let mut cov = DenseMatrix::zeros(p, p);
    for d in draws {
        for i in 0..p {
            let di = d.g_i[i] - mean[i];
            for j in 0..p {
                cov[(i, j)] += di * (d.g_i[j] - mean[j]);
            }
        }
    }
    let cov = cov.scale(1.0 / b).symmetrized();
    Ok(matlin::psd_sqrt(&cov)?)
}

/// The `ceil(len * level)`-th smallest value (1-based), clamped to the sample.
pub fn order_statistic(values: &[f64], level: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    // guard against B * level landing a hair above an integer
    let k = ((b as f64) * level - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(b) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriticalMethod {
    OneStep,
    TwoStage { gamma: f64, first_stage: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalValueReport {
    pub c_value: f64,
    pub alpha: f64,
    pub lambda_used: f64,
    pub draws: usize,
    pub bootstrap_stats: Vec<f64>,
    pub method: CriticalMethod,
}

/// Programs shared by the statistic and every bootstrap replicate.
#[derive(Debug, Clone)]
pub struct Programs {
    pub equality: EqualityNorm,
    pub inequality: InequalitySet,
    full_row_rank: bool,
}

impl Programs {
    pub fn new(problem: &HypothesisProblem) -> Result<Self, StatError> {
        let full_row_rank = problem.full_row_rank();
        Ok(Self {
            equality: EqualityNorm::with_rank_flag(problem, full_row_rank)?,
            inequality: InequalitySet::new(&problem.a, &omega_or_identity(problem), full_row_rank)?,
            full_row_rank,
        })
    }

    pub fn full_row_rank(&self) -> bool {
        self.full_row_rank
    }
}

fn check_alpha(alpha: f64) -> Result<(), BootstrapError> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(BootstrapError::BadAlpha(alpha))
    }
}

fn per_draw<F>(draws: &[BootstrapDraw], f: F) -> Result<Vec<f64>, BootstrapError>
where
    F: Fn(&BootstrapDraw) -> Result<f64, StatError> + Sync,
{
    draws
        .par_iter()
        .map(|d| {
            f(d).map_err(|source| BootstrapError::Replicate {
                replicate: d.replicate_index,
                source,
            })
        })
        .collect()
}

pub fn critical_value(
    problem: &HypothesisProblem,
    programs: &Programs,
    restricted: &RestrictedEstimate,
    draws: &[BootstrapDraw],
    lambda: f64,
    alpha: f64,
) -> Result<CriticalValueReport, BootstrapError> {
    check_alpha(alpha)?;
    if draws.is_empty() {
        return Err(BootstrapError::TooFewDraws { needed: 1, got: 0 });
    }
    let bound = upper_bound_term(problem, lambda, restricted)?;
    let stats = per_draw(draws, |d| {
        let g: Vec<f64> = d.g_i.iter().zip(&bound).map(|(a, b)| a + b).collect();
        Ok(programs.equality.dual_norm(&d.g_e).max(programs.inequality.sup(&g)?))
    })?;
    Ok(CriticalValueReport {
        c_value: order_statistic(&stats, 1.0 - alpha).max(0.0),
        alpha,
        lambda_used: lambda,
        draws: draws.len(),
        bootstrap_stats: stats,
        method: CriticalMethod::OneStep,
    })
}

pub fn lambda_rule_of_thumb(p: usize, n: usize) -> f64 {
    let e = std::f64::consts::E;
    let lp = (p as f64).max(e).ln();
    let ln = (n as f64).max(e).ln().max(e).ln();
    (1.0 / (lp * ln).sqrt()).clamp(0.0, 1.0)
}

pub fn delta_n(n: usize) -> f64 {
    let e = std::f64::consts::E;
    1.0 / (n as f64).max(e).ln().max(e).ln().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub tau: f64,
    pub delta: f64,
}

/// `min(1, tau)` with `tau` the `(1 - delta_n)` quantile of `sup <s, g_i>`.
pub fn lambda_bootstrap(programs: &Programs, draws: &[BootstrapDraw], n: usize) -> Result<LambdaChoice, BootstrapError> {
    if draws.is_empty() {
        return Err(BootstrapError::TooFewDraws { needed: 1, got: 0 });
    }
    let delta = delta_n(n);
    let values = per_draw(draws, |d| programs.inequality.sup(&d.g_i))?;
    let tau = order_statistic(&values, 1.0 - delta).max(0.0);
    Ok(LambdaChoice {
        lambda: tau.min(1.0),
        tau,
        delta,
    })
}

pub fn two_stage_critical_value(
    problem: &HypothesisProblem,
    programs: &Programs,
    star: &StarEstimate,
    draws: &[BootstrapDraw],
    alpha: f64,
    gamma: f64,
) -> Result<CriticalValueReport, BootstrapError> {
    check_alpha(alpha)?;
    if !(gamma > 0.0 && gamma < alpha) {
        return Err(BootstrapError::BadGamma(gamma));
    }
    if draws.is_empty() {
        return Err(BootstrapError::TooFewDraws { needed: 1, got: 0 });
    }
    let first = per_draw(draws, |d| {
        let neg: Vec<f64> = d.g_i.iter().map(|v| -v).collect();
        programs.inequality.sup(&neg)
    })?;
    let c1 = order_statistic(&first, 1.0 - gamma).max(0.0);
    let h: Vec<f64> = star.fitted.iter().map(|v| problem.sqrt_n() * v).collect();
    let capped = InequalitySet::with_cap(&problem.a, &omega_or_identity(problem), programs.full_row_rank, &h, c1)?;
    let stats = per_draw(draws, |d| Ok(programs.equality.dual_norm(&d.g_e).max(capped.sup(&d.g_i)?)))?;
    Ok(CriticalValueReport {
        c_value: order_statistic(&stats, 1.0 - alpha + gamma).max(0.0),
        alpha,
        lambda_used: 0.0,
        draws: draws.len(),
        bootstrap_stats: stats,
        method: CriticalMethod::TwoStage { gamma, first_stage: c1 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::CellFrequencies;
    use crate::restricted::restricted_estimator;
    use crate::statistic::estimate_x_star;
    use proptest::prelude::*;
    use rand::Rng;

    fn draw(g_e: &[f64], g_i: &[f64], k: usize) -> BootstrapDraw {
        BootstrapDraw {
            g_e: g_e.to_vec(),
            g_i: g_i.to_vec(),
            replicate_index: k,
        }
    }

    fn toy() -> (HypothesisProblem, RawSample, CellFrequencies) {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 3 == 0) as u8 as f64, (i % 2) as f64]).collect();
        let sample = RawSample::from_rows(&rows).unwrap();
        let est = CellFrequencies {
            w_support: vec![0.0, 1.0],
            known_q: None,
        };
        let all: Vec<usize> = (0..40).collect();
        let m = est.estimate(&sample, &all).unwrap();
        let a = DenseMatrix::from_rows(&[vec![0.2, 0.6], vec![0.3, 0.5]]).unwrap();
        let mut pr = HypothesisProblem::new(a, m.beta_u, 40).unwrap();
        pr.xi_hat = m.xi_hat;
        (pr, sample, est)
    }

    #[test]
    fn quantile_convention() {
        assert_eq!(order_statistic(&[4.0, 1.0, 3.0, 2.0], 0.75), 3.0);
        let b: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(order_statistic(&b, 0.95), 190.0);
        assert_eq!(order_statistic(&[0.0; 5], 0.9), 0.0);
    }

    #[test]
    fn lambda_formulas() {
        assert_eq!(lambda_rule_of_thumb(1, 1), 1.0);
        assert!((lambda_rule_of_thumb(6, 1000) - 0.537377).abs() < 1e-5);
        assert!((delta_n(1000) - 0.71926).abs() < 1e-4);
        let mut last = 2.0;
        for p in 1..40 {
            let v = lambda_rule_of_thumb(p, 500);
            assert!(v <= last);
            last = v;
        }
        let mut last = 2.0;
        for n in [1, 10, 100, 1000, 10_000, 1_000_000] {
            let v = lambda_rule_of_thumb(6, n);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn zero_and_empty_draws() {
        let (pr, sample, est) = toy();
        let star = estimate_x_star(&pr).unwrap();
        let src = BootstrapSource::Resample { sample: &sample, estimator: &est };
        assert!(draw_bootstrap(&pr, src, &star, 0, 1).unwrap().draws.is_empty());

        let zeros: Vec<BootstrapDraw> = (0..5).map(|k| draw(&[0.0, 0.0], &[0.0, 0.0], k)).collect();
        let programs = Programs::new(&pr).unwrap();
        let r = restricted_estimator(&pr, &star).unwrap();
        assert_eq!(critical_value(&pr, &programs, &r, &zeros, 0.0, 0.05).unwrap().c_value, 0.0);
        assert_eq!(lambda_bootstrap(&programs, &zeros, 1000).unwrap().lambda, 0.0);
        let two = two_stage_critical_value(&pr, &programs, &star, &zeros, 0.05, 0.005).unwrap();
        assert_eq!(two.c_value, 0.0);
        assert_eq!(two.method, CriticalMethod::TwoStage { gamma: 0.005, first_stage: 0.0 });
        assert_eq!(omega_i_from_bootstrap(&zeros).unwrap(), DenseMatrix::zeros(2, 2));
        assert!(omega_i_from_bootstrap(&zeros[..1]).is_err());
    }

    #[test]
    fn constant_data_gives_zero_draws() {
        let rows = vec![vec![1.0, 0.0]; 10];
        let sample = RawSample::from_rows(&rows).unwrap();
        let est = CellFrequencies {
            w_support: vec![0.0],
            known_q: None,
        };
        let pr = HypothesisProblem::new(DenseMatrix::from_rows(&[vec![1.0, 0.5]]).unwrap(), vec![1.0], 10).unwrap();
        let star = estimate_x_star(&pr).unwrap();
        let out = draw_bootstrap(&pr, BootstrapSource::Resample { sample: &sample, estimator: &est }, &star, 8, 3).unwrap();
        assert!(out.draws.iter().all(|d| d.g_e.iter().chain(&d.g_i).all(|&v| v == 0.0)));
    }

    #[test]
    fn two_point_omega() {
        let draws: Vec<BootstrapDraw> = (0..4).map(|k| draw(&[0.0, 0.0], &[if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0], k)).collect();
        let om = omega_i_from_bootstrap(&draws).unwrap();
        assert!((om[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(om[(1, 1)], 0.0);
    }

    #[test]
    fn redraws_empty_cells() {
        // cell w = 1 has a single row, so many resamples miss it
        let mut rows = vec![vec![0.0, 0.0]; 6];
        rows.push(vec![1.0, 1.0]);
        let sample = RawSample::from_rows(&rows).unwrap();
        let est = CellFrequencies {
            w_support: vec![0.0, 1.0],
            known_q: None,
        };
        let pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.0, 1.0], 7).unwrap();
        let star = estimate_x_star(&pr).unwrap();
        let out = draw_bootstrap(&pr, BootstrapSource::Resample { sample: &sample, estimator: &est }, &star, 20, 11).unwrap();
        assert_eq!(out.draws.len(), 20);
        assert!(out.redraws > 0);
        // a cell that never appears exhausts the redraw budget
        let est = CellFrequencies {
            w_support: vec![0.0, 1.0, 2.0],
            known_q: None,
        };
        let pr3 = HypothesisProblem::new(DenseMatrix::identity(3), vec![0.0, 1.0, 0.5], 7).unwrap();
        let star3 = estimate_x_star(&pr3).unwrap();
        let err = draw_bootstrap(&pr3, BootstrapSource::Resample { sample: &sample, estimator: &est }, &star3, 2, 11).unwrap_err();
        assert!(matches!(err, BootstrapError::Degenerate { consecutive: MAX_REDRAWS, .. }));
    }

    #[test]
    fn draws_are_thread_count_invariant() {
        let (pr, sample, est) = toy();
        let star = estimate_x_star(&pr).unwrap();
        let src = BootstrapSource::Resample { sample: &sample, estimator: &est };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| draw_bootstrap(&pr, src, &star, 30, 99).unwrap())
        };
        assert_eq!(run(1), run(3));
        let g = draw_bootstrap(&pr, BootstrapSource::Gaussian, &star, 5, 99).unwrap();
        assert_eq!(g, draw_bootstrap(&pr, BootstrapSource::Gaussian, &star, 5, 99).unwrap());
    }

    #[test]
    fn quantile_is_calibrated_on_a_known_law() {
        // uniform stats: P(U_{B+1} <= c) = ceil(B(1-a)) / (B+1)
        let mut rng = substream(5, 0);
        let mut hits = 0;
        let reps = 4000;
        for _ in 0..reps {
            let stats: Vec<f64> = (0..99).map(|_| rng.gen::<f64>()).collect();
            let c = order_statistic(&stats, 0.9);
            if rng.gen::<f64>() <= c {
                hits += 1;
            }
        }
        let rate = hits as f64 / reps as f64;
        assert!((rate - 0.9).abs() < 0.02, "{rate}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn critical_value_is_monotone_in_lambda(seed in 0u64..1000) {
            let (pr, sample, est) = toy();
            let star = estimate_x_star(&pr).unwrap();
            let src = BootstrapSource::Resample { sample: &sample, estimator: &est };
            let draws = draw_bootstrap(&pr, src, &star, 25, seed).unwrap().draws;
            let programs = Programs::new(&pr).unwrap();
            let r = restricted_estimator(&pr, &star).unwrap();
            let mut last = f64::INFINITY;
            for lam in [0.0, 0.25, 0.5, 1.0] {
                let c = critical_value(&pr, &programs, &r, &draws, lam, 0.1).unwrap().c_value;
                prop_assert!(c >= 0.0);
                prop_assert!(c <= last + 1e-9);
                last = c;
            }
        }
    }
}
