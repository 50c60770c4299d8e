//! Problem data: `(A, beta_hat, known rows, n, xi_hat, omega_i)`, the raw
//! sample it was estimated from, and builders for common shapes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LpError};
use crate::matlin::{DenseMatrix, LinalgError, SpectralFactorization, Svd};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("dimension mismatch in {field}: expected {expected}, got {got}")]
    Dimension {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid value in {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("empty conditioning cell {0} in the sample")]
    EmptyCell(usize),
    #[error("malformed problem file: {0}")]
    Parse(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

fn dim(field: &'static str, expected: usize, got: usize) -> Result<(), ProblemError> {
    if expected == got {
        Ok(())
    } else {
        Err(ProblemError::Dimension { field, expected, got })
    }
}

/// Test data for the null `beta = Ax` with `x >= 0`.
///
/// `xi_hat` is the asymptotic variance of the unknown block of `beta_hat`
/// (rows where `known_mask` is false, in their original order).
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisProblem {
    pub a: DenseMatrix,
    pub beta_hat: Vec<f64>,
    pub known_mask: Vec<bool>,
    pub n: usize,
    pub xi_hat: DenseMatrix,
    pub omega_i: Option<DenseMatrix>,
}

impl HypothesisProblem {
    /// A problem with no known rows and identity `xi_hat`.
    pub fn new(a: DenseMatrix, beta_hat: Vec<f64>, n: usize) -> Result<Self, ProblemError> {
        let p = a.rows();
        let problem = Self {
            a,
            beta_hat,
            known_mask: vec![false; p],
            n,
            xi_hat: DenseMatrix::identity(p),
            omega_i: None,
        };
        problem.check()?;
        Ok(problem)
    }

    pub fn p(&self) -> usize {
        self.a.rows()
    }

    pub fn d(&self) -> usize {
        self.a.cols()
    }

    pub fn unknown_rows(&self) -> Vec<usize> {
        (0..self.p()).filter(|&i| !self.known_mask[i]).collect()
    }

    pub fn known_rows(&self) -> Vec<usize> {
        (0..self.p()).filter(|&i| self.known_mask[i]).collect()
    }

    pub fn p_u(&self) -> usize {
        self.known_mask.iter().filter(|k| !**k).count()
    }

    pub fn beta_u(&self) -> Vec<f64> {
        self.unknown_rows().into_iter().map(|i| self.beta_hat[i]).collect()
    }

    pub fn beta_k(&self) -> Vec<f64> {
        self.known_rows().into_iter().map(|i| self.beta_hat[i]).collect()
    }

    pub fn a_u(&self) -> DenseMatrix {
        self.a.select_rows(&self.unknown_rows())
    }

    pub fn a_k(&self) -> DenseMatrix {
        self.a.select_rows(&self.known_rows())
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// Copy with the unknown block of `beta_hat` and `xi_hat` replaced.
    pub fn with_estimate(&self, beta_u: &[f64], xi_hat: DenseMatrix) -> Self {
        let mut out = self.clone();
        for (i, v) in self.unknown_rows().into_iter().zip(beta_u) {
            out.beta_hat[i] = *v;
        }
        out.xi_hat = xi_hat;
        out
    }

    /// Whether `d >= p` and `A` has full row rank, the case where the range
    /// condition holds trivially.
    pub fn full_row_rank(&self) -> bool {
        self.d() >= self.p() && Svd::new(&self.a).rank() == self.p()
    }

    pub fn check(&self) -> Result<(), ProblemError> {
        let p = self.p();
        dim("beta_hat", p, self.beta_hat.len())?;
        dim("known_mask", p, self.known_mask.len())?;
        let pu = self.p_u();
        dim("xi_hat rows", pu, self.xi_hat.rows())?;
        dim("xi_hat cols", pu, self.xi_hat.cols())?;
        if let Some(om) = &self.omega_i {
            dim("omega_i rows", p, om.rows())?;
            dim("omega_i cols", p, om.cols())?;
        }
        if self.n == 0 {
            return Err(ProblemError::Invalid {
                field: "n",
                reason: "sample size must be positive".into(),
            });
        }
        if p == 0 || self.d() == 0 {
            return Err(ProblemError::Invalid {
                field: "A",
                reason: "A must have at least one row and one column".into(),
            });
        }
        if self.beta_hat.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::Invalid {
                field: "beta_hat",
                reason: "non-finite entry".into(),
            });
        }
        Ok(())
    }

    pub fn to_file(&self) -> ProblemFile {
        ProblemFile {
            a: self.a.clone(),
            beta_hat: self.beta_hat.clone(),
            known_mask: self.known_mask.clone(),
            n: self.n,
            xi_hat: Some(self.xi_hat.clone()),
            omega_i: self.omega_i.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("problem serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| ProblemError::Parse(e.to_string()))?;
        file.into_problem()
    }
}

/// On-disk form of a [`HypothesisProblem`]. A missing `xi_hat` means identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "A")]
    pub a: DenseMatrix,
    pub beta_hat: Vec<f64>,
    pub known_mask: Vec<bool>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_hat: Option<DenseMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_i: Option<DenseMatrix>,
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<HypothesisProblem, ProblemError> {
        let pu = self.known_mask.iter().filter(|k| !**k).count();
        let problem = HypothesisProblem {
            xi_hat: self.xi_hat.unwrap_or_else(|| DenseMatrix::identity(pu)),
            a: self.a,
            beta_hat: self.beta_hat,
            known_mask: self.known_mask,
            n: self.n,
            omega_i: self.omega_i,
        };
        problem.check()?;
        Ok(problem)
    }
}

/// i.i.d. observations stored row-major with a fixed arity.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    arity: usize,
    values: Vec<f64>,
}

impl RawSample {
    pub fn new(arity: usize, values: Vec<f64>) -> Result<Self, ProblemError> {
        if arity == 0 || values.is_empty() || values.len() % arity != 0 {
            return Err(ProblemError::Invalid {
                field: "sample",
                reason: format!("{} values cannot form non-empty rows of arity {arity}", values.len()),
            });
        }
        Ok(Self { arity, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ProblemError> {
        let arity = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != arity) {
            return Err(ProblemError::Invalid {
                field: "sample",
                reason: "rows have inconsistent arity".into(),
            });
        }
        Self::new(arity, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.arity
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.arity..(i + 1) * self.arity]
    }
}

/// Unknown-block estimate and its asymptotic variance.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub beta_u: Vec<f64>,
    pub xi_hat: DenseMatrix,
}

/// Maps a (possibly resampled) set of rows to `beta_u` and `xi_hat`.
pub trait MomentEstimator: Send + Sync {
    fn estimate(&self, sample: &RawSample, rows: &[usize]) -> Result<MomentEstimate, ProblemError>;
}

/// Conditional frequencies `P(Y = 1 | W = w_j)` from `(y, w)` rows, with
/// variance `diag(p(1 - p) / q)` where `q` is the cell mass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFrequencies {
    pub w_support: Vec<f64>,
    /// Use these cell masses instead of the empirical ones in `xi_hat`.
    pub known_q: Option<Vec<f64>>,
}

impl CellFrequencies {
    fn cell_of(&self, w: f64) -> Option<usize> {
        self.w_support.iter().position(|&s| (s - w).abs() <= 1e-9 * (1.0 + s.abs()))
    }
}

impl MomentEstimator for CellFrequencies {
    fn estimate(&self, sample: &RawSample, rows: &[usize]) -> Result<MomentEstimate, ProblemError> {
        if sample.arity() < 2 {
            return Err(ProblemError::Invalid {
                field: "sample",
                reason: "expected (y, w) columns".into(),
            });
        }
        let k = self.w_support.len();
        let mut count = vec![0usize; k];
        let mut ones = vec![0usize; k];
        for &r in rows {
            let row = sample.row(r);
            let cell = self.cell_of(row[1]).ok_or_else(|| ProblemError::Invalid {
                field: "w",
                reason: format!("value {} is not in the support", row[1]),
            })?;
            count[cell] += 1;
            if row[0] > 0.5 {
                ones[cell] += 1;
            }
        }
        if let Some(j) = count.iter().position(|&c| c == 0) {
            return Err(ProblemError::EmptyCell(j));
        }
        let total = rows.len() as f64;
        let beta_u: Vec<f64> = ones.iter().zip(&count).map(|(&o, &c)| o as f64 / c as f64).collect();
        let var: Vec<f64> = (0..k)
            .map(|j| {
                let q = match &self.known_q {
                    Some(q) => q[j],
                    None => count[j] as f64 / total,
                };
                beta_u[j] * (1.0 - beta_u[j]) / q
            })
            .collect();
        Ok(MomentEstimate {
            beta_u,
            xi_hat: DenseMatrix::from_diag(&var),
        })
    }
}

/// Appends the known row `a_row' x = gamma`.
pub fn augment_with_counterfactual(
    base: &HypothesisProblem,
    a_row: &[f64],
    gamma: f64,
) -> Result<HypothesisProblem, ProblemError> {
    dim("a_row", base.d(), a_row.len())?;
    if !gamma.is_finite() {
        return Err(ProblemError::Invalid {
            field: "gamma",
            reason: "non-finite".into(),
        });
    }
    let mut out = base.clone();
    out.a.push_row(a_row)?;
    out.beta_hat.push(gamma);
    out.known_mask.push(true);
    if let Some(om) = &base.omega_i {
        // keep a p x p shape; the new coordinate carries no sampling noise
        let p = om.rows();
        let mut grown = DenseMatrix::zeros(p + 1, p + 1);
        for i in 0..p {
            for j in 0..p {
                grown[(i, j)] = om[(i, j)];
            }
        }
        out.omega_i = Some(grown);
    }
    Ok(out)
}

/// Encodes `E[G - M delta | W] <= 0` as `G = M delta+ - M delta- - Delta`
/// with all three blocks non-negative.
pub fn build_conditional_moment_problem(
    g_bar: &[f64],
    m_bar: &DenseMatrix,
    n: usize,
) -> Result<HypothesisProblem, ProblemError> {
    let p = g_bar.len();
    dim("M_bar rows", p, m_bar.rows())?;
    let neg = m_bar.scale(-1.0);
    let a = m_bar.hstack(&neg)?.hstack(&DenseMatrix::identity(p).scale(-1.0))?;
    HypothesisProblem::new(a, g_bar.to_vec(), n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub p: usize,
    pub d: usize,
    pub p_unknown: usize,
    pub rank: usize,
    /// `d >= p` with full row rank: the range test is vacuous.
    pub equality_part_vanishes: bool,
    pub xi_min_eigenvalue: f64,
    pub xi_psd: bool,
    pub known_block_consistent: bool,
    pub messages: Vec<String>,
}

pub fn validate(problem: &HypothesisProblem) -> Diagnostics {
    let mut messages = Vec::new();
    if let Err(e) = problem.check() {
        messages.push(e.to_string());
    }
    let rank = Svd::new(&problem.a).rank();
    let vanishes = problem.d() >= problem.p() && rank == problem.p();
    if vanishes {
        messages.push("A has full row rank with d >= p; the equality statistic is identically zero".into());
    } else {
        messages.push(format!("range test active: rank(A) = {rank} < p = {}", problem.p()));
    }
    let (xi_min, xi_psd) = if problem.xi_hat.rows() == 0 {
        (0.0, true)
    } else {
        match SpectralFactorization::symmetric(&problem.xi_hat) {
            Ok(f) => {
                let min = f.eigenvalues.last().copied().unwrap_or(0.0);
                let top = f.eigenvalues.first().copied().unwrap_or(0.0).abs();
                (min, min >= -1e-8 * top.max(1e-300))
            }
            Err(e) => {
                messages.push(format!("xi_hat: {e}"));
                (f64::NAN, false)
            }
        }
    };
    if !xi_psd {
        messages.push("xi_hat is not positive semi-definite".into());
    }
    let known_block_consistent = {
        let kr = problem.known_rows();
        if kr.is_empty() {
            true
        } else {
            lp::feasible_cone_point(&problem.a.select_rows(&kr), &problem.beta_k())
                .map(|x| x.is_some())
                .unwrap_or(false)
        }
    };
    if !known_block_consistent {
        messages.push("no x >= 0 reproduces the known rows".into());
    }
    Diagnostics {
        p: problem.p(),
        d: problem.d(),
        p_unknown: problem.p_u(),
        rank,
        equality_part_vanishes: vanishes,
        xi_min_eigenvalue: xi_min,
        xi_psd,
        known_block_consistent,
        messages,
    }
}
