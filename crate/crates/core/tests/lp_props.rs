use lsysinfer::lp::{solve, LpBuilder, LpOptions, LpStatus, Sense, StandardFormLP};
use lsysinfer::matlin::DenseMatrix;
use proptest::prelude::*;

/// Solves a small square system by Gaussian elimination; `None` if singular.
fn solve_square(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[piv][c].abs() < 1e-9 {
            return None;
        }
        m.swap(c, piv);
        rhs.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
                rhs[r] -= f * rhs[c];
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Best vertex of `{x in [0,1]^n : G x <= h}` by enumerating active sets.
fn brute_force_min(c: &[f64], g: &[Vec<f64>], h: &[f64]) -> Option<f64> {
    let n = c.len();
    // every constraint as (row, rhs) meaning row'x <= rhs
    let mut all: Vec<(Vec<f64>, f64)> = g.iter().cloned().zip(h.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        all.push((e.clone(), 1.0));
        e[j] = -1.0;
        all.push((e, 0.0));
    }
    let mut best: Option<f64> = None;
    for active in subsets(all.len(), n) {
        let m: Vec<Vec<f64>> = active.iter().map(|&i| all[i].0.clone()).collect();
        let r: Vec<f64> = active.iter().map(|&i| all[i].1).collect();
        let Some(x) = solve_square(m, r) else { continue };
        let feasible = all.iter().all(|(row, rhs)| row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() <= rhs + 1e-7);
        if feasible {
            let v: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

fn small() -> impl Strategy<Value = f64> {
    (-4i32..=4).prop_map(|v| v as f64 / 2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn optimum_matches_vertex_enumeration(
        n in 1usize..=3,
        m in 0usize..=3,
        entries in prop::collection::vec(small(), 12),
        rhs in prop::collection::vec(small(), 3),
        cost in prop::collection::vec(small(), 3),
    ) {
        let c = &cost[..n];
        let g: Vec<Vec<f64>> = (0..m).map(|i| entries[i * n..(i + 1) * n].to_vec()).collect();
        let h = &rhs[..m];
        let mut b = LpBuilder::new();
        let x0 = b.add_vars(n, 0.0, 1.0);
        for j in 0..n {
            b.set_cost(x0 + j, c[j]);
        }
        for (row, &r) in g.iter().zip(h) {
            b.add_le(row.iter().enumerate().map(|(j, &v)| (x0 + j, v)).collect(), r);
        }
        let sol = solve(&b.build(Sense::Minimize), &LpOptions::default()).unwrap();
        match brute_force_min(c, &g, h) {
            Some(v) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.value - v).abs() < 1e-7, "simplex {} vs vertices {}", sol.value, v);
                prop_assert!(sol.residual < 1e-8);
            }
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
        }
    }

    #[test]
    fn duals_certify_optimality(
        p in 1usize..=4,
        d in 1usize..=6,
        entries in prop::collection::vec(-3i32..=3, 24),
        x_feasible in prop::collection::vec(0u32..=3, 6),
        cost in prop::collection::vec(0u32..=5, 6),
    ) {
        let g = DenseMatrix::new(p, d, entries[..p * d].iter().map(|&v| v as f64).collect()).unwrap();
        let x: Vec<f64> = x_feasible[..d].iter().map(|&v| v as f64).collect();
        let h = g.matvec(&x).unwrap();
        let c: Vec<f64> = cost[..d].iter().map(|&v| v as f64).collect();
        let lp = StandardFormLP {
            objective: c.clone(),
            eq_matrix: g.clone(),
            eq_rhs: h.clone(),
            var_bounds: vec![(0.0, f64::INFINITY); d],
            sense: Sense::Minimize,
        };
        let sol = solve(&lp, &LpOptions::default()).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let dual_value: f64 = h.iter().zip(&sol.duals).map(|(a, b)| a * b).sum();
        prop_assert!((sol.value - dual_value).abs() < 1e-7, "primal {} dual {}", sol.value, dual_value);
        let gty = g.tr_matvec(&sol.duals).unwrap();
        for j in 0..d {
            let reduced = c[j] - gty[j];
            prop_assert!(reduced > -1e-7);
            prop_assert!((reduced * sol.point[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn solves_are_deterministic(
        entries in prop::collection::vec(small(), 12),
        rhs in prop::collection::vec(small(), 3),
        cost in prop::collection::vec(small(), 4),
    ) {
        let mut b = LpBuilder::new();
        let x0 = b.add_vars(4, -1.0, 2.0);
        for j in 0..4 {
            b.set_cost(x0 + j, cost[j]);
        }
        for i in 0..3 {
            b.add_le((0..4).map(|j| (x0 + j, entries[i * 4 + j])).collect(), rhs[i]);
        }
        let lp = b.build(Sense::Maximize);
        let first = solve(&lp, &LpOptions::default()).unwrap();
        let second = solve(&lp, &LpOptions::default()).unwrap();
        prop_assert_eq!(first.status, second.status);
        prop_assert_eq!(first.value.to_bits(), second.value.to_bits());
        prop_assert_eq!(
            first.point.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            second.point.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(first.iterations, second.iterations);
    }
}
