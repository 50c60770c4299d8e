//! Restricted estimate of `beta` under the null and the upper-bound term it
//! feeds into the critical value.
//!
//! The min-max problem `min_b sup_s sqrt(n) <s, A x* - b>` over `b = Ax`,
//! `x >= 0`, `b_k = beta_k` and the inequality polytope for `s` is collapsed
//! into one linear program by dualising the inner supremum.

use thiserror::Error;

use crate::hypothesis::HypothesisProblem;
use crate::lp::{self, LpBuilder, LpError, LpOptions, LpStatus, Sense};
use crate::statistic::{inequality_basis, omega_or_identity, StarEstimate, StatError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RestrictError {
    #[error("no x >= 0 reproduces the known rows; the null is vacuous for this known block")]
    InfeasibleKnownBlock,
    #[error("restricted program is unbounded")]
    Unbounded,
    #[error("lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Stat(#[from] StatError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedEstimate {
    pub beta_r: Vec<f64>,
    /// `x >= 0` with `A x = beta_r`.
    pub witness_x: Vec<f64>,
    pub outer_value: f64,
}

pub fn restricted_estimator(problem: &HypothesisProblem, star: &StarEstimate) -> Result<RestrictedEstimate, RestrictError> {
    let a = &problem.a;
    let (p, d) = (a.rows(), a.cols());
    let omega = omega_or_identity(problem);
    let rn = problem.sqrt_n();
    // inner program: sup c'y s.t. A'Q y <= 0, ||Omega Q y||_1 <= 1, whose dual is
    // min ||nu||_inf s.t. Q'A mu + Q'Omega nu = c, mu >= 0
    let q = inequality_basis(a, &omega, problem.full_row_rank())?;
    let k = q.cols();
    let qt_a = q.transpose().matmul(a).map_err(StatError::from)?;
    let qt_omega = q.transpose().matmul(&omega).map_err(StatError::from)?;
    let rhs = q.tr_matvec(&star.fitted).map_err(StatError::from)?;

    let free = f64::NEG_INFINITY;
    let inf = f64::INFINITY;
    let mut b = LpBuilder::new();
    let phi1 = b.add_var(1.0, 0.0, inf);
    let mu = b.add_vars(d, 0.0, inf);
    let nu = b.add_vars(p, free, inf);
    let b0 = b.num_vars();
    for i in 0..p {
        if problem.known_mask[i] {
            b.add_var(0.0, problem.beta_hat[i], problem.beta_hat[i]);
        } else {
            b.add_var(0.0, free, inf);
        }
    }
    let x0 = b.add_vars(d, 0.0, inf);

    for i in 0..p {
        b.add_ge(vec![(phi1, 1.0), (nu + i, -1.0)], 0.0);
        b.add_ge(vec![(phi1, 1.0), (nu + i, 1.0)], 0.0);
    }
    for l in 0..k {
        let mut terms = Vec::new();
        terms.extend((0..d).filter(|&j| qt_a[(l, j)] != 0.0).map(|j| (mu + j, qt_a[(l, j)])));
        terms.extend((0..p).filter(|&i| qt_omega[(l, i)] != 0.0).map(|i| (nu + i, qt_omega[(l, i)])));
        terms.extend((0..p).filter(|&i| q[(i, l)] != 0.0).map(|i| (b0 + i, rn * q[(i, l)])));
        b.add_eq(terms, rn * rhs[l]);
    }
    for i in 0..p {
        let mut terms: Vec<(usize, f64)> = (0..d).filter(|&j| a[(i, j)] != 0.0).map(|j| (x0 + j, a[(i, j)])).collect();
        terms.push((b0 + i, -1.0));
        b.add_eq(terms, 0.0);
    }
    let sol = lp::solve(&b.build(Sense::Minimize), &LpOptions::default())?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(RestrictError::InfeasibleKnownBlock),
        LpStatus::Unbounded => return Err(RestrictError::Unbounded),
    }
    let witness_x: Vec<f64> = sol.point[x0..x0 + d].iter().map(|v| v.max(0.0)).collect();
    let mut beta_r = sol.point[b0..b0 + p].to_vec();
    for i in 0..p {
        if problem.known_mask[i] {
            beta_r[i] = problem.beta_hat[i];
        }
    }
    Ok(RestrictedEstimate {
        beta_r,
        witness_x,
        outer_value: sol.value,
    })
}

/// Coefficients `lambda * sqrt(n) * A * witness_x` of the linear upper bound.
pub fn upper_bound_term(
    problem: &HypothesisProblem,
    lambda: f64,
    restricted: &RestrictedEstimate,
) -> Result<Vec<f64>, RestrictError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(RestrictError::LambdaOutOfRange(lambda));
    }
    let ax = problem.a.matvec(&restricted.witness_x).map_err(StatError::from)?;
    let scale = lambda * problem.sqrt_n();
    Ok(ax.into_iter().map(|v| scale * v).collect())
}

/// `sup <s, sqrt(n) (A x* - b)>` over the inequality polytope; the inner
/// value of the restricted program at a given `b`.
pub fn inner_value(problem: &HypothesisProblem, star: &StarEstimate, b: &[f64]) -> Result<f64, StatError> {
    let set = crate::statistic::InequalitySet::new(&problem.a, &omega_or_identity(problem), problem.full_row_rank())?;
    let g: Vec<f64> = star.fitted.iter().zip(b).map(|(f, bi)| problem.sqrt_n() * (f - bi)).collect();
    set.sup(&g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlin::DenseMatrix;
    use crate::statistic::{estimate_x_star, population_feasible};
    use proptest::prelude::*;

    #[test]
    fn inside_cone_has_zero_value() {
        let pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.3, 0.7], 100).unwrap();
        let star = estimate_x_star(&pr).unwrap();
        let r = restricted_estimator(&pr, &star).unwrap();
        assert!(r.outer_value.abs() < 1e-12);
        assert!(population_feasible(&pr.a, &r.beta_r).unwrap());
    }

    #[test]
    fn identity_with_negative_coordinate() {
        let pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.5, -0.3], 100).unwrap();
        let star = estimate_x_star(&pr).unwrap();
        let r = restricted_estimator(&pr, &star).unwrap();
        // For b >= 0 and s <= 0, -<s, b> >= 0, so the inner value never drops
        // below sqrt(n) * 0.3 = 3; b = 0 attains it.
        assert!((r.outer_value - 3.0).abs() < 1e-12, "{r:?}");
        assert!((inner_value(&pr, &star, &[0.5, 0.0]).unwrap() - 3.0).abs() < 1e-12);
        // grid oracle: no b >= 0 beats the returned value
        let at_r = inner_value(&pr, &star, &r.beta_r).unwrap();
        assert!((at_r - r.outer_value).abs() < 1e-9);
        for i in 0..=10 {
            for j in 0..=10 {
                let b = [i as f64 * 0.1, j as f64 * 0.1];
                assert!(at_r <= inner_value(&pr, &star, &b).unwrap() + 1e-9);
            }
        }
    }

    #[test]
    fn infeasible_known_block() {
        let mut pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.5, 0.5], 100).unwrap();
        pr.a.push_row(&[1.0, 1.0]).unwrap();
        pr.beta_hat.push(-1.0);
        pr.known_mask.push(true);
        let star = estimate_x_star(&pr).unwrap();
        assert_eq!(restricted_estimator(&pr, &star), Err(RestrictError::InfeasibleKnownBlock));
    }

    #[test]
    fn upper_bound_examples() {
        let pr = HypothesisProblem::new(DenseMatrix::identity(2), vec![0.3, 0.7], 100).unwrap();
        let r = RestrictedEstimate {
            beta_r: vec![0.3, 0.7],
            witness_x: vec![0.3, 0.7],
            outer_value: 0.0,
        };
        assert_eq!(upper_bound_term(&pr, 0.0, &r).unwrap(), vec![0.0, 0.0]);
        let full = upper_bound_term(&pr, 1.0, &r).unwrap();
        let half = upper_bound_term(&pr, 0.5, &r).unwrap();
        assert!(full.iter().zip(&half).all(|(f, h)| *h == 0.5 * f));
        assert!(upper_bound_term(&pr, 1.5, &r).is_err());
        // on A's <= 0 (here s <= 0) the bound is non-positive
        assert!(full.iter().all(|&v| v >= 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn outer_value_matches_inner_at_solution(
            a in proptest::collection::vec(-2.0f64..2.0, 20),
            beta in proptest::collection::vec(-1.0f64..1.0, 4),
            p in 1usize..5, d in 1usize..5,
        ) {
            let amat = DenseMatrix::new(p, d, a[..p * d].to_vec()).unwrap();
            let pr = HypothesisProblem::new(amat, beta[..p].to_vec(), 64).unwrap();
            let star = estimate_x_star(&pr).unwrap();
            let r = restricted_estimator(&pr, &star).unwrap();
            let inner = inner_value(&pr, &star, &r.beta_r).unwrap();
            prop_assert!((inner - r.outer_value).abs() <= 1e-6 * (1.0 + inner.abs()), "{} vs {}", inner, r.outer_value);
            prop_assert!(population_feasible(&pr.a, &r.beta_r).unwrap());
            let ax = pr.a.matvec(&r.witness_x).unwrap();
            prop_assert!(ax.iter().zip(&r.beta_r).all(|(l, b)| (l - b).abs() <= 1e-7));
        }
    }
}
