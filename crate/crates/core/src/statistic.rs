//! The estimator `x*`, the equality and inequality statistics, and the
//! population feasibility checks.

use serde::Serialize;
use thiserror::Error;

use crate::hypothesis::HypothesisProblem;
use crate::lp::{self, LpBuilder, LpError, LpOptions, LpStatus, PreparedLp, Sense};
use crate::matlin::{self, DenseMatrix, LinalgError, SpectralFactorization, Svd};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("known rows cannot be matched: {0}")]
    InconsistentKnownBlock(LinalgError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("inequality program is unbounded; omega_i does not control the cone directions")]
    Unbounded,
    #[error("inequality program is infeasible")]
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StarMethod {
    PinvLeastNorm,
    ConstrainedGls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarEstimate {
    pub x_star: Vec<f64>,
    /// `A x*`
    pub fitted: Vec<f64>,
    pub method: StarMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatisticValue {
    pub t_e: f64,
    pub t_i: f64,
    pub t_n: f64,
}

impl StatisticValue {
    pub fn new(t_e: f64, t_i: f64) -> Self {
        Self {
            t_e,
            t_i,
            t_n: t_e.max(t_i),
        }
    }
}

/// `A†β` when `A` has full row rank and `d >= p`; otherwise the GLS fit of
/// the unknown rows weighted by `xi_hat†`, subject to the known rows.
pub fn estimate_x_star(problem: &HypothesisProblem) -> Result<StarEstimate, StatError> {
    estimate_x_star_with(problem, problem.full_row_rank())
}

/// As [`estimate_x_star`] with the full-row-rank test supplied by the caller,
/// so bootstrap replicates do not repeat the SVD.
pub fn estimate_x_star_with(problem: &HypothesisProblem, full_row_rank: bool) -> Result<StarEstimate, StatError> {
    let (x_star, method) = if full_row_rank {
        (matlin::pseudoinverse_apply(&problem.a, &problem.beta_hat)?, StarMethod::PinvLeastNorm)
    } else {
        let a_u = problem.a_u();
        let w = if a_u.rows() == 0 {
            DenseMatrix::zeros(0, 0)
        } else {
            matlin::psd_pinv(&problem.xi_hat)?
        };
        let (q, c) = if a_u.rows() == 0 {
            (DenseMatrix::zeros(problem.d(), problem.d()), vec![0.0; problem.d()])
        } else {
            let wa = w.matmul(&a_u)?;
            let q = a_u.transpose().matmul(&wa)?;
            let c = wa.tr_matvec(&problem.beta_u())?;
            (q, c)
        };
        let x = matlin::kkt_solve(&q, &c, &problem.a_k(), &problem.beta_k()).map_err(|e| match e {
            LinalgError::InconsistentConstraints(_) => StatError::InconsistentKnownBlock(e),
            other => StatError::Linalg(other),
        })?;
        (x, StarMethod::ConstrainedGls)
    };
    let fitted = problem.a.matvec(&x_star)?;
    Ok(StarEstimate { x_star, fitted, method })
}

/// Weighting for the equality statistic: `(xi_hat^{1/2})†`, or nothing when
/// the statistic vanishes identically.
#[derive(Debug, Clone)]
pub struct EqualityNorm {
    weight: Option<DenseMatrix>,
    unknown: Vec<usize>,
}

impl EqualityNorm {
    pub fn new(problem: &HypothesisProblem) -> Result<Self, StatError> {
        Self::with_rank_flag(problem, problem.full_row_rank())
    }

    pub fn with_rank_flag(problem: &HypothesisProblem, full_row_rank: bool) -> Result<Self, StatError> {
        let weight = if full_row_rank || problem.p_u() == 0 {
            None
        } else {
            Some(matlin::psd_sqrt_pinv(&problem.xi_hat)?)
        };
        Ok(Self {
            weight,
            unknown: problem.unknown_rows(),
        })
    }

    /// `sup { <s_u, v_u> : ||xi^{1/2} s_u||_1 <= 1 }` for a full-length `v`.
    pub fn dual_norm(&self, v: &[f64]) -> f64 {
        match &self.weight {
            None => 0.0,
            Some(w) => {
                let vu: Vec<f64> = self.unknown.iter().map(|&i| v[i]).collect();
                matlin::norm_inf(&w.matvec(&vu).expect("conformable"))
            }
        }
    }
}

/// `sqrt(n) * sup <s_u, beta_u - A_u x*>` over the studentised unit ball.
pub fn t_stat_equality(problem: &HypothesisProblem, star: &StarEstimate) -> Result<f64, StatError> {
    let norm = EqualityNorm::new(problem)?;
    let resid: Vec<f64> = problem.beta_hat.iter().zip(&star.fitted).map(|(b, f)| b - f).collect();
    Ok(problem.sqrt_n() * norm.dual_norm(&resid))
}

/// Columns `Q` spanning `range(Omega)`, intersected with `range(A)` unless
/// `A` has full row rank, scaled so that `Omega Q` has orthonormal columns.
/// The inequality program searches `s = Q y`.
pub fn inequality_basis(a: &DenseMatrix, omega: &DenseMatrix, full_row_rank: bool) -> Result<DenseMatrix, StatError> {
    let p = a.rows();
    if omega.rows() != p || omega.cols() != p {
        return Err(StatError::Linalg(LinalgError::DimensionMismatch {
            op: "inequality_basis",
            expected: format!("{p}x{p} omega"),
            got: format!("{}x{}", omega.rows(), omega.cols()),
        }));
    }
    let eig = SpectralFactorization::symmetric(omega)?;
    let kept: Vec<usize> = (0..p).filter(|&k| eig.eigenvalues[k] > eig.tolerance).collect();
    let mut u_omega = DenseMatrix::zeros(p, kept.len());
    for (c, &k) in kept.iter().enumerate() {
        for i in 0..p {
            u_omega[(i, c)] = eig.eigenvectors[(i, k)];
        }
    }
    if full_row_rank || kept.is_empty() || a.cols() == 0 {
        return whiten(omega, u_omega);
    }
    // Singular values of (I - P_A) U_omega are sines of the principal angles.
    let svd_a = Svd::new(a);
    let r = svd_a.rank();
    let mut resid = u_omega.clone();
    for c in 0..kept.len() {
        for k in 0..r {
            let proj: f64 = (0..p).map(|i| svd_a.u[(i, k)] * u_omega[(i, c)]).sum();
            for i in 0..p {
                resid[(i, c)] -= proj * svd_a.u[(i, k)];
            }
        }
    }
    let svd_r = Svd::new(&resid);
    let inside: Vec<usize> = (0..kept.len()).filter(|&k| svd_r.singular_values[k] <= SUBSPACE_TOL).collect();
    let mut coef = DenseMatrix::zeros(kept.len(), inside.len());
    for (c, &k) in inside.iter().enumerate() {
        for i in 0..kept.len() {
            coef[(i, c)] = svd_r.v[(i, k)];
        }
    }
    whiten(omega, u_omega.matmul(&coef)?)
}

// Q V diag(1/σ) from the SVD U diag(σ) V' of Omega Q.
fn whiten(omega: &DenseMatrix, q: DenseMatrix) -> Result<DenseMatrix, StatError> {
    if q.cols() == 0 {
        return Ok(q);
    }
    let svd = Svd::new(&omega.matmul(&q)?);
    let k = q.cols();
    let mut m = DenseMatrix::zeros(k, k);
    for c in 0..k {
        let sigma = svd.singular_values[c];
        if sigma <= 0.0 {
            return Err(StatError::Unbounded);
        }
        for i in 0..k {
            m[(i, c)] = svd.v[(i, c)] / sigma;
        }
    }
    Ok(q.matmul(&m)?)
}

const SUBSPACE_TOL: f64 = 1e-7;

/// The polytope `{s in range(A) ∩ range(Omega) : A's <= 0, ||Omega s||_1 <= 1}`,
/// phase-1 processed so that `sup <s, g>` can be evaluated for many `g`.
///
/// With `cap = Some((h, c))` an extra scalar `u <= 0` with `u <= <s, h> + c`
/// joins the program and the objective gains `+ u`.
#[derive(Debug, Clone)]
pub struct InequalitySet {
    prepared: PreparedLp,
    basis: DenseMatrix,
    y_index: usize,
    u_index: Option<usize>,
}

impl InequalitySet {
    pub fn new(a: &DenseMatrix, omega: &DenseMatrix, full_row_rank: bool) -> Result<Self, StatError> {
        Self::build(a, omega, full_row_rank, None)
    }

    pub fn with_cap(
        a: &DenseMatrix,
        omega: &DenseMatrix,
        full_row_rank: bool,
        h: &[f64],
        c: f64,
    ) -> Result<Self, StatError> {
        Self::build(a, omega, full_row_rank, Some((h, c)))
    }

    fn build(a: &DenseMatrix, omega: &DenseMatrix, full_row_rank: bool, cap: Option<(&[f64], f64)>) -> Result<Self, StatError> {
        let (p, d) = (a.rows(), a.cols());
        let basis = inequality_basis(a, omega, full_row_rank)?;
        let k = basis.cols();
        let at_q = a.transpose().matmul(&basis)?;
        let omega_q = omega.matmul(&basis)?;
        let free = f64::NEG_INFINITY;
        let inf = f64::INFINITY;
        let mut b = LpBuilder::new();
        let y0 = b.add_vars(k, free, inf);
        let plus0 = b.add_vars(p, 0.0, inf);
        let minus0 = b.add_vars(p, 0.0, inf);
        for j in 0..d {
            let scale = (0..k).fold(0.0_f64, |m, l| m.max(at_q[(j, l)].abs()));
            if scale > 0.0 {
                b.add_le(nonzero(y0, (0..k).map(|l| at_q[(j, l)] / scale)), 0.0);
            }
        }
        b.add_le((0..p).flat_map(|i| [(plus0 + i, 1.0), (minus0 + i, 1.0)]).collect(), 1.0);
        for i in 0..p {
            let mut terms = vec![(plus0 + i, 1.0), (minus0 + i, -1.0)];
            terms.extend(nonzero(y0, (0..k).map(|l| -omega_q[(i, l)])));
            b.add_eq(terms, 0.0);
        }
        let u_index = match cap {
            Some((h, c)) => {
                if h.len() != p {
                    return Err(StatError::Linalg(LinalgError::DimensionMismatch {
                        op: "InequalitySet cap",
                        expected: p.to_string(),
                        got: h.len().to_string(),
                    }));
                }
                let qh = basis.tr_matvec(h)?;
                let u = b.add_var(0.0, free, 0.0);
                let mut terms = vec![(u, 1.0)];
                terms.extend(nonzero(y0, qh.iter().map(|v| -v)));
                b.add_le(terms, c);
                Some(u)
            }
            None => None,
        };
        let prepared = PreparedLp::new(&b.build(Sense::Maximize), &LpOptions::default())?;
        if !prepared.is_feasible() {
            return Err(StatError::Infeasible);
        }
        Ok(Self {
            prepared,
            basis,
            y_index: y0,
            u_index,
        })
    }

    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }

    /// `sup <s, g>` (plus `u` when capped) and the maximising `s`.
    pub fn sup_with_point(&self, g: &[f64]) -> Result<(f64, Vec<f64>), StatError> {
        let k = self.basis.cols();
        let mut c = vec![0.0; self.prepared.num_vars()];
        c[self.y_index..self.y_index + k].copy_from_slice(&self.basis.tr_matvec(g)?);
        if let Some(u) = self.u_index {
            c[u] = 1.0;
        }
        let sol = self.prepared.solve(&c, Sense::Maximize)?;
        match sol.status {
            LpStatus::Optimal => Ok((sol.value, self.basis.matvec(&sol.point[self.y_index..self.y_index + k])?)),
            LpStatus::Unbounded => Err(StatError::Unbounded),
            LpStatus::Infeasible => Err(StatError::Infeasible),
        }
    }

    pub fn sup(&self, g: &[f64]) -> Result<f64, StatError> {
        self.sup_with_point(g).map(|(v, _)| v)
    }
}

fn nonzero(first: usize, coefs: impl Iterator<Item = f64>) -> Vec<(usize, f64)> {
    coefs.enumerate().filter(|(_, v)| *v != 0.0).map(|(l, v)| (first + l, v)).collect()
}

pub fn omega_or_identity(problem: &HypothesisProblem) -> DenseMatrix {
    problem
        .omega_i
        .clone()
        .unwrap_or_else(|| DenseMatrix::identity(problem.p()))
}

/// `sqrt(n) * sup <s, A x*>` over the inequality polytope.
pub fn t_stat_inequality(problem: &HypothesisProblem, star: &StarEstimate) -> Result<f64, StatError> {
    let set = InequalitySet::new(&problem.a, &omega_or_identity(problem), problem.full_row_rank())?;
    let g: Vec<f64> = star.fitted.iter().map(|v| problem.sqrt_n() * v).collect();
    set.sup(&g)
}

pub fn test_statistic(problem: &HypothesisProblem, star: &StarEstimate) -> Result<StatisticValue, StatError> {
    Ok(StatisticValue::new(
        t_stat_equality(problem, star)?,
        t_stat_inequality(problem, star)?,
    ))
}

/// Whether `beta = Ax` has a solution with `x >= 0`, by phase-1 simplex.
pub fn population_feasible(a: &DenseMatrix, beta: &[f64]) -> Result<bool, StatError> {
    Ok(lp::feasible_cone_point(a, beta)?.is_some())
}

/// Range residual and cone value behind [`geometric_feasible`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricCheck {
    /// `||beta - P_range(A) beta||_inf`
    pub range_residual: f64,
    /// `max <s, A†beta>` over `s` in `range(A') ∩ R^d_-` with `||s||_1 <= 1`.
    pub cone_value: f64,
}

impl GeometricCheck {
    pub fn feasible(&self) -> bool {
        self.range_residual <= 1e-8 && self.cone_value <= 1e-8
    }
}

/// Feasibility through the range condition plus the sign condition on the
/// minimum-norm solution, without searching for `x` directly.
pub fn geometric_check(a: &DenseMatrix, beta: &[f64]) -> Result<GeometricCheck, StatError> {
    let svd = Svd::new(a);
    let projected = svd.project_range(beta);
    let range_residual = beta.iter().zip(&projected).fold(0.0_f64, |m, (b, q)| m.max((b - q).abs()));
    let x_star = svd.pinv_apply(beta)?;
    let (p, d) = (a.rows(), a.cols());
    let mut b = LpBuilder::new();
    let y0 = b.add_vars(p, f64::NEG_INFINITY, f64::INFINITY);
    let s0 = b.add_vars(d, f64::NEG_INFINITY, 0.0);
    for (j, &xj) in x_star.iter().enumerate() {
        b.set_cost(s0 + j, xj);
    }
    for j in 0..d {
        let mut terms: Vec<(usize, f64)> = (0..p).filter(|&i| a[(i, j)] != 0.0).map(|i| (y0 + i, a[(i, j)])).collect();
        terms.push((s0 + j, -1.0));
        b.add_eq(terms, 0.0);
    }
    b.add_le((0..d).map(|j| (s0 + j, -1.0)).collect(), 1.0);
    let sol = lp::solve(&b.build(Sense::Maximize), &LpOptions::default())?;
    if sol.status != LpStatus::Optimal {
        return Err(StatError::Unbounded);
    }
    Ok(GeometricCheck {
        range_residual,
        cone_value: sol.value,
    })
}

pub fn geometric_feasible(a: &DenseMatrix, beta: &[f64]) -> Result<bool, StatError> {
    Ok(geometric_check(a, beta)?.feasible())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn x_star_examples() {
        let pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.4, 0.6], 10).unwrap();
        let s = estimate_x_star(&pr).unwrap();
        assert_eq!(s.method, StarMethod::PinvLeastNorm);
        assert!((s.x_star[0] - 0.4).abs() < 1e-12 && (s.x_star[1] - 0.6).abs() < 1e-12);

        let pr = HypothesisProblem::new(m(&[&[1.0], &[1.0]]), vec![1.0, 1.2], 100).unwrap();
        let s = estimate_x_star(&pr).unwrap();
        assert_eq!(s.method, StarMethod::ConstrainedGls);
        assert!((s.x_star[0] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn known_rows_are_reproduced() {
        let mut pr = HypothesisProblem::new(m(&[&[0.2, 0.6, 0.9], &[0.1, 0.5, 0.7], &[1.0, 1.0, 1.0]]), vec![0.5, 0.4, 1.0], 100).unwrap();
        pr.a.push_row(&[1.0, 0.0, 0.0]).unwrap();
        pr.beta_hat.push(0.3);
        pr.known_mask = vec![false, false, true, true];
        pr.xi_hat = DenseMatrix::identity(2);
        let s = estimate_x_star(&pr).unwrap();
        assert!((s.fitted[2] - 1.0).abs() < 1e-10 && (s.fitted[3] - 0.3).abs() < 1e-10);

        pr.a.push_row(&[1.0, 0.0, 0.0]).unwrap();
        pr.beta_hat.push(0.7);
        pr.known_mask.push(true);
        assert!(matches!(estimate_x_star(&pr), Err(StatError::InconsistentKnownBlock(_))));
    }

    #[test]
    fn equality_examples() {
        let pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.4, 0.6], 10).unwrap();
        let s = estimate_x_star(&pr).unwrap();
        assert_eq!(t_stat_equality(&pr, &s).unwrap(), 0.0);

        let pr = HypothesisProblem::new(m(&[&[1.0], &[1.0]]), vec![1.0, 1.2], 100).unwrap();
        let s = estimate_x_star(&pr).unwrap();
        assert!((t_stat_equality(&pr, &s).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inequality_examples() {
        let pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.5, -0.3], 100).unwrap();
        let s = estimate_x_star(&pr).unwrap();
        assert!((t_stat_inequality(&pr, &s).unwrap() - 3.0).abs() < 1e-12);
        let pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.5, 0.3], 100).unwrap();
        let s = estimate_x_star(&pr).unwrap();
        assert!(t_stat_inequality(&pr, &s).unwrap().abs() < 1e-12);
        // the full program with the x block gives the same value
        let set = InequalitySet::new(&DenseMatrix::identity(2), &DenseMatrix::identity(2), false).unwrap();
        assert!((set.sup(&[5.0, -3.0]).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn capped_program_adds_bounded_term() {
        let eye = DenseMatrix::identity(2);
        // u <= <s, h> + c with h = 0 and c = -0.5: u = -0.5
        let set = InequalitySet::with_cap(&eye, &eye, true, &[0.0, 0.0], -0.5).unwrap();
        assert!((set.sup(&[0.0, 0.0]).unwrap() + 0.5).abs() < 1e-12);
        // c large: u = 0 and the program reduces to the plain one
        let set = InequalitySet::with_cap(&eye, &eye, true, &[0.0, 0.0], 10.0).unwrap();
        assert!((set.sup(&[1.0, -2.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_omega_is_restricted_to_its_range() {
        let eye = DenseMatrix::identity(2);
        let omega = DenseMatrix::from_diag(&[1.0, 0.0]);
        let set = InequalitySet::new(&eye, &omega, true).unwrap();
        assert!((set.sup(&[-1.0, -100.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn population_examples() {
        assert!(population_feasible(&DenseMatrix::identity(2), &[0.3, 0.7]).unwrap());
        assert!(!population_feasible(&m(&[&[1.0], &[1.0]]), &[1.0, 2.0]).unwrap());
        assert!(population_feasible(&m(&[&[1.0, -1.0]]), &[-3.0]).unwrap());
        assert!(geometric_feasible(&m(&[&[1.0, -1.0]]), &[-3.0]).unwrap());
        assert!(!geometric_feasible(&m(&[&[1.0], &[1.0]]), &[1.0, 2.0]).unwrap());
        assert!(!geometric_feasible(&DenseMatrix::identity(2), &[-0.1, 1.1]).unwrap());
    }

    fn psd(seed: &[f64], p: usize) -> DenseMatrix {
        let l = DenseMatrix::new(p, p, seed[..p * p].to_vec()).unwrap();
        let mut g = l.matmul(&l.transpose()).unwrap();
        for i in 0..p {
            g[(i, i)] += 0.1;
        }
        g.symmetrized()
    }

    /// Direct program: sup sqrt(n) <s, r> s.t. ||xi^{1/2} s||_1 <= 1.
    fn equality_by_lp(pr: &HypothesisProblem, star: &StarEstimate) -> f64 {
        let pu = pr.p_u();
        let root = matlin::psd_sqrt(&pr.xi_hat).unwrap();
        let unknown = pr.unknown_rows();
        let mut b = LpBuilder::new();
        let s0 = b.add_vars(pu, f64::NEG_INFINITY, f64::INFINITY);
        let t0 = b.add_vars(pu, f64::NEG_INFINITY, f64::INFINITY);
        let a0 = b.add_vars(pu, 0.0, f64::INFINITY);
        for (k, &i) in unknown.iter().enumerate() {
            b.set_cost(s0 + k, pr.sqrt_n() * (pr.beta_hat[i] - star.fitted[i]));
            let mut terms = vec![(t0 + k, -1.0)];
            terms.extend((0..pu).map(|l| (s0 + l, root[(k, l)])));
            b.add_eq(terms, 0.0);
            b.add_le(vec![(t0 + k, 1.0), (a0 + k, -1.0)], 0.0);
            b.add_le(vec![(t0 + k, -1.0), (a0 + k, -1.0)], 0.0);
        }
        b.add_le((0..pu).map(|k| (a0 + k, 1.0)).collect(), 1.0);
        lp::solve(&b.build(Sense::Maximize), &LpOptions::default()).unwrap().value
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn equality_closed_form_matches_lp(
            p in 2usize..5,
            a in proptest::collection::vec(-1.0f64..1.0, 16),
            beta in proptest::collection::vec(-1.0f64..1.0, 4),
            l in proptest::collection::vec(-1.0f64..1.0, 16),
        ) {
            let d = 1;
            let amat = DenseMatrix::new(p, d, a[..p * d].to_vec()).unwrap();
            let mut pr = HypothesisProblem::new(amat, beta[..p].to_vec(), 50).unwrap();
            pr.xi_hat = psd(&l, p);
            let star = estimate_x_star(&pr).unwrap();
            let closed = t_stat_equality(&pr, &star).unwrap();
            let direct = equality_by_lp(&pr, &star);
            prop_assert!((closed - direct).abs() <= 1e-8 * (1.0 + direct.abs()), "{} vs {}", closed, direct);
        }

        #[test]
        fn studentisation_and_omega_scaling(
            a in proptest::collection::vec(-1.0f64..1.0, 6),
            beta in proptest::collection::vec(-1.0f64..1.0, 3),
            c in 0.2f64..5.0,
        ) {
            let amat = DenseMatrix::new(3, 2, a).unwrap();
            let pr = HypothesisProblem::new(amat, beta, 40).unwrap();
            let star = estimate_x_star(&pr).unwrap();
            let te = t_stat_equality(&pr, &star).unwrap();
            // beta_u and xi^{1/2} scaled jointly by c (xi by c^2)
            let mut scaled = pr.clone();
            scaled.beta_hat.iter_mut().for_each(|v| *v *= c);
            scaled.xi_hat = pr.xi_hat.scale(c * c);
            let star2 = estimate_x_star(&scaled).unwrap();
            let te2 = t_stat_equality(&scaled, &star2).unwrap();
            prop_assert!((te - te2).abs() <= 1e-9 * (1.0 + te.abs()));

            let ti = t_stat_inequality(&pr, &star).unwrap();
            let mut om = pr.clone();
            om.omega_i = Some(DenseMatrix::identity(3).scale(c));
            let ti2 = t_stat_inequality(&om, &star).unwrap();
            prop_assert!((ti2 - ti / c).abs() <= 1e-9 * (1.0 + ti.abs()));
            prop_assert_eq!(ti > 1e-12, ti2 > 1e-12);
        }

        #[test]
        fn inside_the_cone_inequality_vanishes(beta in proptest::collection::vec(0.0f64..2.0, 1..5)) {
            let p = beta.len();
            let pr = HypothesisProblem::new(DenseMatrix::identity(p), beta, 100).unwrap();
            let star = estimate_x_star(&pr).unwrap();
            prop_assert!(t_stat_inequality(&pr, &star).unwrap().abs() < 1e-12);
        }

        #[test]
        fn min_norm_solution_is_orthogonal_to_kernel(
            a in proptest::collection::vec(-2.0f64..2.0, 30),
            x0 in proptest::collection::vec(0.0f64..2.0, 6),
            p in 1usize..5, d in 1usize..6,
        ) {
            let amat = DenseMatrix::new(p, d, a[..p * d].to_vec()).unwrap();
            let beta = amat.matvec(&x0[..d]).unwrap();
            let xs = matlin::pseudoinverse_apply(&amat, &beta).unwrap();
            for z in matlin::null_space(&amat) {
                prop_assert!(matlin::dot(&xs, &z).abs() < 1e-9);
            }
        }
    }
}
