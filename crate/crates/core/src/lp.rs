//! Dense two-phase simplex for standard-form linear programs.
//!
//! Problems are stated as `optimize c'x s.t. Gx = h, l <= x <= u` with
//! possibly infinite bounds. Internally every variable is shifted or split so
//! that the working problem is `min c'z s.t. Mz = b, z >= 0, b >= 0`, solved
//! on a full tableau. Pricing is Dantzig's rule with ratio-test ties broken
//! toward the largest pivot; long runs of degenerate pivots switch to Bland's
//! rule. The solver is deterministic: the same input always produces the
//! same pivot sequence.
//!
//! [`PreparedLp`] runs phase 1 once and reuses the feasible basis for any
//! number of objectives over the same feasible set, which is how the
//! bootstrap evaluates hundreds of programs that differ only in their
//! objective.

use thiserror::Error;

use crate::matlin::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// Pivot limit; `None` means `50 * (rows + cols)` of the working form.
    pub max_iterations: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("simplex iteration limit of {0} pivots exceeded")]
    IterationLimit(usize),
}

/// `optimize objective'x s.t. eq_matrix x = eq_rhs, lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardFormLP {
    pub objective: Vec<f64>,
    pub eq_matrix: DenseMatrix,
    pub eq_rhs: Vec<f64>,
    /// `(lower, upper)` per variable; either side may be infinite.
    pub var_bounds: Vec<(f64, f64)>,
    pub sense: Sense,
}

impl StandardFormLP {
    fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.eq_matrix.rows() != self.eq_rhs.len() {
            return Err(LpError::Malformed(format!(
                "{} constraint rows but {} right-hand sides",
                self.eq_matrix.rows(),
                self.eq_rhs.len()
            )));
        }
        if self.eq_matrix.rows() > 0 && self.eq_matrix.cols() != n {
            return Err(LpError::Malformed(format!(
                "{} objective coefficients but {} constraint columns",
                n,
                self.eq_matrix.cols()
            )));
        }
        if self.var_bounds.len() != n {
            return Err(LpError::Malformed(format!("{} variables but {} bounds", n, self.var_bounds.len())));
        }
        if self.objective.iter().chain(&self.eq_rhs).any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("non-finite objective or right-hand side".into()));
        }
        for (j, &(lo, hi)) in self.var_bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("invalid bounds [{lo}, {hi}] on variable {j}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LPSolution {
    pub status: LpStatus,
    /// Objective value in the caller's sense; NaN unless optimal.
    pub value: f64,
    /// Primal point; empty unless optimal.
    pub point: Vec<f64>,
    /// Multipliers `y` on the equality rows, signed so that the reduced
    /// costs are `objective - G'y` in the caller's sense. Empty unless optimal.
    pub duals: Vec<f64>,
    /// Largest violation of `Gx = h` or of the bounds at `point`.
    pub residual: f64,
    pub iterations: usize,
}

impl LPSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            value: f64::NAN,
            point: Vec::new(),
            duals: Vec::new(),
            residual: f64::NAN,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve(lp: &StandardFormLP, opts: &LpOptions) -> Result<LPSolution, LpError> {
    let prepared = PreparedLp::new(lp, opts)?;
    prepared.solve(&lp.objective, lp.sense)
}

/// A phase-1 point of `{x >= 0 : Ax = beta}`, or `None` when empty.
pub fn feasible_cone_point(a: &DenseMatrix, beta: &[f64]) -> Result<Option<Vec<f64>>, LpError> {
    if a.rows() != beta.len() {
        return Err(LpError::Malformed(format!("A has {} rows, beta has length {}", a.rows(), beta.len())));
    }
    let lp = StandardFormLP {
        objective: vec![0.0; a.cols()],
        eq_matrix: a.clone(),
        eq_rhs: beta.to_vec(),
        var_bounds: vec![(0.0, f64::INFINITY); a.cols()],
        sense: Sense::Minimize,
    };
    let sol = solve(&lp, &LpOptions::default())?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(sol.point.into_iter().map(|v| v.max(0.0)).collect()),
        _ => None,
    })
}

/// Incremental construction of a [`StandardFormLP`]; inequality rows get a
/// non-negative slack column.
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.bounds.push((lower, upper));
        self.objective.len() - 1
    }

    /// Adds `count` variables sharing the same bounds; returns the first index.
    pub fn add_vars(&mut self, count: usize, lower: f64, upper: f64) -> usize {
        let first = self.objective.len();
        for _ in 0..count {
            self.add_var(0.0, lower, upper);
        }
        first
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push((terms, rhs));
    }

    /// `terms <= rhs`.
    pub fn add_le(&mut self, mut terms: Vec<(usize, f64)>, rhs: f64) {
        let slack = self.add_var(0.0, 0.0, f64::INFINITY);
        terms.push((slack, 1.0));
        self.rows.push((terms, rhs));
    }

    /// `terms >= rhs`.
    pub fn add_ge(&mut self, mut terms: Vec<(usize, f64)>, rhs: f64) {
        let slack = self.add_var(0.0, 0.0, f64::INFINITY);
        terms.push((slack, -1.0));
        self.rows.push((terms, rhs));
    }

    pub fn build(&self, sense: Sense) -> StandardFormLP {
        let n = self.objective.len();
        let mut g = DenseMatrix::zeros(self.rows.len(), n);
        let mut h = Vec::with_capacity(self.rows.len());
        for (i, (terms, rhs)) in self.rows.iter().enumerate() {
            for &(j, v) in terms {
                g[(i, j)] += v;
            }
            h.push(*rhs);
        }
        StandardFormLP {
            objective: self.objective.clone(),
            eq_matrix: g,
            eq_rhs: h,
            var_bounds: self.bounds.clone(),
            sense,
        }
    }
}

/// How an original variable maps onto non-negative working columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + z[col]`
    Shifted { col: usize, offset: f64 },
    /// `x = offset - z[col]`
    Mirrored { col: usize, offset: f64 },
    /// `x = z[pos] - z[neg]`
    Split { pos: usize, neg: usize },
}

const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;
const BLAND_AFTER: usize = 50;

/// Working tableau `[B^-1 M | B^-1 | B^-1 b]`; artificial columns are kept
/// so `B^-1` can be read off for the duals.
#[derive(Debug, Clone)]
struct Tableau {
    m: usize,
    /// structural working columns (excludes artificials)
    n: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    /// the other half of a split free variable, if any
    partner: Vec<Option<usize>>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let inv = 1.0 / self.data[r * w + c];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.data[r * w + c] = 1.0;
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for (other, row) in before.chunks_mut(w).chain(after.chunks_mut(w)).enumerate() {
            let _ = other;
            let f = row[c];
            if f == 0.0 {
                continue;
            }
            for (x, &p) in row.iter_mut().zip(prow.iter()) {
                *x -= f * p;
                if x.abs() < DROP_TOL {
                    *x = 0.0;
                }
            }
            row[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Reduced costs for working costs `cost` (length `n`, artificials cost 0
    /// unless `phase_one`).
    fn reduced_costs(&self, cost: &[f64], phase_one: bool) -> Vec<f64> {
        let total = self.n + self.m;
        let cost_of = |j: usize| -> f64 {
            if j < self.n {
                if phase_one { 0.0 } else { cost[j] }
            } else if phase_one {
                1.0
            } else {
                0.0
            }
        };
        let mut d: Vec<f64> = (0..total).map(cost_of).collect();
        for i in 0..self.m {
            let cb = cost_of(self.basis[i]);
            if cb == 0.0 {
                continue;
            }
            let row = &self.data[i * self.width..i * self.width + total];
            for (dj, &a) in d.iter_mut().zip(row) {
                *dj -= cb * a;
            }
        }
        d
    }

    /// Primal simplex with Dantzig pricing and a largest-pivot tie-break in
    /// the ratio test. After a run of degenerate pivots it falls back to
    /// Bland's rule, which cannot cycle. Returns `Ok(true)` at optimality,
    /// `Ok(false)` when unbounded.
    fn run(
        &mut self,
        cost: &[f64],
        phase_one: bool,
        opt_tol: f64,
        iterations: &mut usize,
        limit: usize,
    ) -> Result<bool, LpError> {
        let allowed = if phase_one { self.n + self.m } else { self.n };
        let mut in_basis = vec![false; self.n + self.m];
        let mut degenerate_run = 0usize;
        loop {
            let d = self.reduced_costs(cost, phase_one);
            in_basis.iter_mut().for_each(|b| *b = false);
            for &b in &self.basis {
                in_basis[b] = true;
            }
            // With its partner basic, a split half has zero reduced cost up to
            // rounding, and entering it would trace a spurious ray.
            let eligible = |j: usize| {
                d[j] < -opt_tol && !in_basis[j] && !self.partner.get(j).copied().flatten().is_some_and(|k| in_basis[k])
            };
            let bland = degenerate_run >= BLAND_AFTER;
            let enter = if bland {
                (0..allowed).find(|&j| eligible(j))
            } else {
                (0..allowed).filter(|&j| eligible(j)).fold(None, |best: Option<usize>, j| match best {
                    Some(b) if d[b] <= d[j] => Some(b),
                    _ => Some(j),
                })
            };
            let Some(enter) = enter else {
                return Ok(true);
            };
            let mut min_ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.at(i, enter);
                if a > PIVOT_TOL {
                    min_ratio = min_ratio.min(self.rhs(i).max(0.0) / a);
                }
            }
            if min_ratio == f64::INFINITY {
                return Ok(false);
            }
            let slack = 1e-12 * (1.0 + min_ratio);
            let mut leave: Option<usize> = None;
            for i in 0..self.m {
                let a = self.at(i, enter);
                if a <= PIVOT_TOL || self.rhs(i).max(0.0) / a > min_ratio + slack {
                    continue;
                }
                leave = match leave {
                    None => Some(i),
                    Some(l) => {
                        let better = if bland {
                            self.basis[i] < self.basis[l]
                        } else {
                            let al = self.at(l, enter);
                            a > al || (a == al && self.basis[i] < self.basis[l])
                        };
                        Some(if better { i } else { l })
                    }
                };
            }
            let row = leave.expect("a row attains the minimum ratio");
            degenerate_run = if min_ratio <= slack { degenerate_run + 1 } else { 0 };
            *iterations += 1;
            if *iterations > limit {
                return Err(LpError::IterationLimit(limit));
            }
            self.pivot(row, enter);
        }
    }
}

/// A linear program whose feasible set has been processed by phase 1.
#[derive(Debug, Clone)]
pub struct PreparedLp {
    source: StandardFormLP,
    maps: Vec<VarMap>,
    /// rows of the working form that came from the caller's equality rows
    orig_rows: usize,
    /// `-1` for rows multiplied by -1 to make the right-hand side non-negative
    row_sign: Vec<f64>,
    tableau: Option<Tableau>,
    phase_one_iterations: usize,
    limit: usize,
    opts: LpOptions,
}

impl PreparedLp {
    pub fn new(lp: &StandardFormLP, opts: &LpOptions) -> Result<Self, LpError> {
        lp.validate()?;
        let n_orig = lp.objective.len();
        let m_orig = lp.eq_rhs.len();

        let mut maps = Vec::with_capacity(n_orig);
        let mut ncols = 0usize;
        let mut upper_rows: Vec<(usize, f64)> = Vec::new();
        for &(lo, hi) in &lp.var_bounds {
            let map = if lo.is_finite() {
                let col = ncols;
                ncols += 1;
                if hi.is_finite() {
                    upper_rows.push((col, hi - lo));
                }
                VarMap::Shifted { col, offset: lo }
            } else if hi.is_finite() {
                let col = ncols;
                ncols += 1;
                VarMap::Mirrored { col, offset: hi }
            } else {
                let pos = ncols;
                ncols += 2;
                VarMap::Split { pos, neg: pos + 1 }
            };
            maps.push(map);
        }
        // each finite upper bound gets its own slack column
        let n = ncols + upper_rows.len();
        let m = m_orig + upper_rows.len();
        let width = n + m + 1;
        let mut data = vec![0.0; m * width];
        let mut row_sign = vec![1.0; m];

        for i in 0..m_orig {
            let mut rhs = lp.eq_rhs[i];
            let row = &mut data[i * width..(i + 1) * width];
            for (j, map) in maps.iter().enumerate() {
                let g = if lp.eq_matrix.rows() > 0 { lp.eq_matrix[(i, j)] } else { 0.0 };
                if g == 0.0 {
                    continue;
                }
                match *map {
                    VarMap::Shifted { col, offset } => {
                        row[col] += g;
                        rhs -= g * offset;
                    }
                    VarMap::Mirrored { col, offset } => {
                        row[col] -= g;
                        rhs -= g * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        row[pos] += g;
                        row[neg] -= g;
                    }
                }
            }
            row[width - 1] = rhs;
        }
        for (k, &(col, span)) in upper_rows.iter().enumerate() {
            let i = m_orig + k;
            let row = &mut data[i * width..(i + 1) * width];
            row[col] = 1.0;
            row[ncols + k] = 1.0;
            row[width - 1] = span;
        }
        for i in 0..m {
            let row = &mut data[i * width..(i + 1) * width];
            if row[width - 1] < 0.0 {
                for v in row[..n].iter_mut() {
                    *v = -*v;
                }
                row[width - 1] = -row[width - 1];
                row_sign[i] = -1.0;
            }
            row[n + i] = 1.0;
        }
        let limit = opts.max_iterations.unwrap_or(50 * (m + n + m).max(1));
        let mut partner = vec![None; n];
        for map in &maps {
            if let VarMap::Split { pos, neg } = *map {
                partner[pos] = Some(neg);
                partner[neg] = Some(pos);
            }
        }
        let mut tableau = Tableau {
            m,
            n,
            width,
            data,
            basis: (n..n + m).collect(),
            partner,
        };
        let mut iterations = 0;
        tableau.run(&[], true, opts.opt_tol, &mut iterations, limit)?;

        let infeasibility: f64 = (0..m).filter(|&i| tableau.basis[i] >= n).map(|i| tableau.rhs(i)).sum();
        let bmax = (0..m).map(|i| tableau.rhs(i).abs()).fold(0.0_f64, f64::max);
        let scale = lp.eq_rhs.iter().fold(1.0_f64, |a, v| a.max(v.abs())).max(bmax);
        let feasible = infeasibility <= opts.feas_tol * scale * (m.max(1) as f64);

        if feasible {
            // Pivot zero-level artificials out where a structural column allows it;
            // the rest sit on redundant rows and never leave.
            for i in 0..m {
                if tableau.basis[i] < n {
                    continue;
                }
                if let Some(j) = (0..n).find(|&j| tableau.at(i, j).abs() > 1e-7 && !tableau.basis.contains(&j)) {
                    tableau.pivot(i, j);
                    iterations += 1;
                }
            }
        }

        Ok(Self {
            source: lp.clone(),
            maps,
            orig_rows: m_orig,
            row_sign,
            tableau: feasible.then_some(tableau),
            phase_one_iterations: iterations,
            limit,
            opts: *opts,
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.tableau.is_some()
    }

    pub fn num_vars(&self) -> usize {
        self.maps.len()
    }

    /// Optimises `objective` over the prepared feasible set, starting from
    /// the phase-1 basis every time.
    pub fn solve(&self, objective: &[f64], sense: Sense) -> Result<LPSolution, LpError> {
        if objective.len() != self.maps.len() {
            return Err(LpError::Malformed(format!(
                "objective has {} entries for {} variables",
                objective.len(),
                self.maps.len()
            )));
        }
        if objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("non-finite objective".into()));
        }
        let Some(base) = &self.tableau else {
            return Ok(LPSolution::without_point(LpStatus::Infeasible, self.phase_one_iterations));
        };
        let flip = if sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut cost = vec![0.0; base.n];
        let mut constant = 0.0;
        for (j, map) in self.maps.iter().enumerate() {
            let c = flip * objective[j];
            match *map {
                VarMap::Shifted { col, offset } => {
                    cost[col] += c;
                    constant += c * offset;
                }
                VarMap::Mirrored { col, offset } => {
                    cost[col] -= c;
                    constant += c * offset;
                }
                VarMap::Split { pos, neg } => {
                    cost[pos] += c;
                    cost[neg] -= c;
                }
            }
        }
        let cscale = cost.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let mut tableau = base.clone();
        let mut iterations = self.phase_one_iterations;
        let bounded = tableau.run(&cost, false, self.opts.opt_tol * cscale, &mut iterations, self.limit)?;
        if !bounded {
            return Ok(LPSolution::without_point(LpStatus::Unbounded, iterations));
        }

        let mut z = vec![0.0; tableau.n];
        for i in 0..tableau.m {
            let b = tableau.basis[i];
            if b < tableau.n {
                z[b] = tableau.rhs(i).max(0.0);
            }
        }
        let point: Vec<f64> = self
            .maps
            .iter()
            .map(|map| match *map {
                VarMap::Shifted { col, offset } => offset + z[col],
                VarMap::Mirrored { col, offset } => offset - z[col],
                VarMap::Split { pos, neg } => z[pos] - z[neg],
            })
            .collect();
        let value: f64 = flip * constant + flip * cost.iter().zip(&z).map(|(c, v)| c * v).sum::<f64>();

        // y' = c_B' B^-1, with B^-1 stored in the artificial block.
        let mut duals = vec![0.0; self.orig_rows];
        for i in 0..tableau.m {
            let b = tableau.basis[i];
            let cb = if b < tableau.n { cost[b] } else { 0.0 };
            if cb == 0.0 {
                continue;
            }
            for (k, y) in duals.iter_mut().enumerate() {
                *y += cb * tableau.at(i, tableau.n + k);
            }
        }
        for (k, y) in duals.iter_mut().enumerate() {
            *y *= self.row_sign[k] * flip;
        }

        let residual = self.residual(&point);
        Ok(LPSolution {
            status: LpStatus::Optimal,
            value,
            point,
            duals,
            residual,
            iterations,
        })
    }

    fn residual(&self, x: &[f64]) -> f64 {
        let lp = &self.source;
        let mut worst: f64 = 0.0;
        if lp.eq_matrix.rows() > 0 {
            let gx = lp.eq_matrix.matvec(x).expect("conformable");
            for (l, r) in gx.iter().zip(&lp.eq_rhs) {
                worst = worst.max((l - r).abs());
            }
        }
        for (v, &(lo, hi)) in x.iter().zip(&lp.var_bounds) {
            worst = worst.max(lo - v).max(v - hi);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(obj: &[f64], rows: &[&[f64]], rhs: &[f64], sense: Sense) -> StandardFormLP {
        StandardFormLP {
            objective: obj.to_vec(),
            eq_matrix: DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap(),
            eq_rhs: rhs.to_vec(),
            var_bounds: vec![(0.0, f64::INFINITY); obj.len()],
            sense,
        }
    }

    #[test]
    fn segment_maximum() {
        let sol = solve(&lp(&[1.0, 1.0], &[&[1.0, 1.0]], &[1.0], Sense::Maximize), &LpOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!((sol.point[0] + sol.point[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_constraint_is_infeasible() {
        let sol = solve(&lp(&[1.0], &[&[1.0]], &[-1.0], Sense::Maximize), &LpOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn weighted_segment_picks_better_vertex() {
        // vertices (1,0) -> 1 and (0,1) -> 2
        let sol = solve(&lp(&[1.0, 2.0], &[&[1.0, 1.0]], &[1.0], Sense::Maximize), &LpOptions::default()).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-12);
        assert!((sol.point[0]).abs() < 1e-12 && (sol.point[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_ray() {
        let sol = solve(&lp(&[1.0, 0.0], &[&[1.0, -1.0]], &[0.0], Sense::Maximize), &LpOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_bounded_variables() {
        // min x + y, x free, -2 <= y <= 3, x - y = 1  => y = -2, x = -1
        let mut b = LpBuilder::new();
        let x = b.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        let y = b.add_var(1.0, -2.0, 3.0);
        b.add_eq(vec![(x, 1.0), (y, -1.0)], 1.0);
        let sol = solve(&b.build(Sense::Minimize), &LpOptions::default()).unwrap();
        assert!((sol.value + 3.0).abs() < 1e-12, "{sol:?}");
        assert!((sol.point[0] + 1.0).abs() < 1e-12);
        // upper-only bound: max z with z <= 4
        let mut b = LpBuilder::new();
        b.add_var(1.0, f64::NEG_INFINITY, 4.0);
        let sol = solve(&b.build(Sense::Maximize), &LpOptions::default()).unwrap();
        assert!((sol.value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn inequality_rows_through_builder() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6 -> (1.6, 1.2), value 2.8
        let mut b = LpBuilder::new();
        let x = b.add_var(1.0, 0.0, f64::INFINITY);
        let y = b.add_var(1.0, 0.0, f64::INFINITY);
        b.add_le(vec![(x, 1.0), (y, 2.0)], 4.0);
        b.add_le(vec![(x, 3.0), (y, 1.0)], 6.0);
        let sol = solve(&b.build(Sense::Maximize), &LpOptions::default()).unwrap();
        assert!((sol.value - 2.8).abs() < 1e-12);
        // x + y >= 1 with min x + y -> 1
        let mut b = LpBuilder::new();
        let x = b.add_var(1.0, 0.0, f64::INFINITY);
        let y = b.add_var(1.0, 0.0, f64::INFINITY);
        b.add_ge(vec![(x, 1.0), (y, 1.0)], 1.0);
        let sol = solve(&b.build(Sense::Minimize), &LpOptions::default()).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let sol = solve(
            &lp(&[1.0, 2.0], &[&[1.0, 1.0], &[2.0, 2.0]], &[1.0, 2.0], Sense::Minimize),
            &LpOptions::default(),
        )
        .unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prepared_lp_reuses_phase_one() {
        let base = lp(&[0.0, 0.0, 0.0], &[&[1.0, 1.0, 1.0]], &[1.0], Sense::Maximize);
        let prepared = PreparedLp::new(&base, &LpOptions::default()).unwrap();
        for k in 0..3 {
            let mut c = vec![0.0; 3];
            c[k] = 1.0 + k as f64;
            let sol = prepared.solve(&c, Sense::Maximize).unwrap();
            assert!((sol.value - (1.0 + k as f64)).abs() < 1e-12);
        }
        assert!(prepared.solve(&[1.0], Sense::Maximize).is_err());
    }

    #[test]
    fn malformed_inputs() {
        let mut bad = lp(&[1.0, 1.0], &[&[1.0, 1.0]], &[1.0], Sense::Minimize);
        bad.var_bounds[0] = (2.0, 1.0);
        assert!(matches!(solve(&bad, &LpOptions::default()), Err(LpError::Malformed(_))));
        let mut bad = lp(&[1.0, 1.0], &[&[1.0, 1.0]], &[1.0], Sense::Minimize);
        bad.eq_rhs.push(0.0);
        assert!(solve(&bad, &LpOptions::default()).is_err());
    }

    #[test]
    fn cone_point_examples() {
        let eye = DenseMatrix::identity(2);
        let x = feasible_cone_point(&eye, &[0.3, 0.7]).unwrap().unwrap();
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] - 0.7).abs() < 1e-12);
        assert!(feasible_cone_point(&eye, &[-0.1, 1.1]).unwrap().is_none());
        let a = DenseMatrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let x = feasible_cone_point(&a, &[-3.0]).unwrap().unwrap();
        assert!((x[1] - x[0] - 3.0).abs() < 1e-12 && x.iter().all(|&v| v >= 0.0));
    }
}
