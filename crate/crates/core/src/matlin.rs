//! Dense real linear algebra.
//!
//! Row-major [`DenseMatrix`] plus the handful of factorizations the test
//! needs: a cyclic Jacobi symmetric eigendecomposition, a one-sided Jacobi
//! SVD, Moore-Penrose pseudoinverse application, PSD square roots, and
//! equality-constrained quadratic minimisation through the KKT system.
//!
//! Singular values and eigenvalues below `RANK_TOL * largest` are treated as
//! exactly zero everywhere in this module.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative cutoff below which singular values / eigenvalues count as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Relative level below which a negative eigenvalue is clamped to zero by
/// [`psd_sqrt`] instead of being reported.
pub const NEG_EIG_TOL: f64 = 1e-8;

const MAX_JACOBI_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix has eigenvalue {0:e}, below the PSD clamping threshold")]
    NegativeEigenvalue(f64),
    #[error("equality constraints are inconsistent (residual {0:e})")]
    InconsistentConstraints(f64),
}

fn mismatch(op: &'static str, expected: impl fmt::Display, got: impl fmt::Display) -> LinalgError {
    LinalgError::DimensionMismatch {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

/// A dense real matrix in row-major order. Entries are always finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(mismatch("DenseMatrix::new", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equally long rows. An empty list gives
    /// a 0x0 matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(mismatch("DenseMatrix::from_rows", cols, format!("{} in row {i}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(mismatch("matmul", format!("{} rows", self.cols), other.rows));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `M v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.cols {
            return Err(mismatch("matvec", self.cols, v.len()));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `M' v` without materialising the transpose.
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.rows {
            return Err(mismatch("tr_matvec", self.rows, v.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|M_ij - M_ji|`; infinite for non-square input.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Appends one row at the bottom.
    pub fn push_row(&mut self, row: &[f64]) -> Result<(), LinalgError> {
        if self.rows > 0 && row.len() != self.cols {
            return Err(mismatch("push_row", self.cols, row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        if self.rows == 0 {
            self.cols = row.len();
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    /// `[self, other]` side by side.
    pub fn hstack(&self, other: &DenseMatrix) -> Result<Self, LinalgError> {
        if self.rows != other.rows {
            return Err(mismatch("hstack", self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Symmetric part `(M + M') / 2`.
    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl TryFrom<Vec<Vec<f64>>> for DenseMatrix {
    type Error = LinalgError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, LinalgError> {
        Self::from_rows(&rows)
    }
}

impl From<DenseMatrix> for Vec<Vec<f64>> {
    fn from(m: DenseMatrix) -> Self {
        m.to_rows()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Symmetric eigendecomposition `M = V diag(λ) V'` with eigenvalues sorted
/// in descending order.
#[derive(Debug, Clone)]
pub struct SpectralFactorization {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub eigenvectors: DenseMatrix,
    /// Absolute cutoff: eigenvalues with `|λ| <= tolerance` are zero.
    pub tolerance: f64,
}

impl SpectralFactorization {
    /// Cyclic Jacobi. Rejects input whose asymmetry exceeds
    /// `1e-10 * (1 + max|M|)`.
    pub fn symmetric(m: &DenseMatrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(mismatch("SpectralFactorization", "square matrix", format!("{}x{}", m.rows, m.cols)));
        }
        let asym = m.asymmetry();
        if asym > 1e-10 * (1.0 + m.max_abs()) {
            return Err(LinalgError::NotSymmetric(asym));
        }
        let n = m.rows;
        let mut a = m.symmetrized();
        let mut v = DenseMatrix::identity(n);
        let scale: f64 = a.data.iter().map(|x| x * x).sum::<f64>();
        for _ in 0..MAX_JACOBI_SWEEPS {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if off <= 1e-32 * scale || off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[(p, p)];
                    let aqq = a[(q, q)];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
        let mut eigenvectors = DenseMatrix::zeros(n, n);
        for (new, &old) in order.iter().enumerate() {
            for k in 0..n {
                eigenvectors[(k, new)] = v[(k, old)];
            }
        }
        let largest = eigenvalues.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        Ok(Self {
            eigenvalues,
            eigenvectors,
            tolerance: RANK_TOL * largest,
        })
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.iter().filter(|l| l.abs() > self.tolerance).count()
    }

    /// `V diag(f(λ)) V'`, with `f` applied only to eigenvalues above the
    /// tolerance and zero elsewhere.
    pub fn compose(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.eigenvalues.len();
        let mut out = DenseMatrix::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            if lam.abs() <= self.tolerance {
                continue;
            }
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = self.eigenvectors[(i, k)] * w;
                for j in 0..n {
                    out[(i, j)] += vik * self.eigenvectors[(j, k)];
                }
            }
        }
        out.symmetrized()
    }

    /// `V Λ V'` using the raw eigenvalues.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.eigenvalues.len();
        let mut out = DenseMatrix::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += self.eigenvectors[(i, k)] * lam * self.eigenvectors[(j, k)];
                }
            }
        }
        out
    }
}

/// Thin singular value decomposition `M = U diag(σ) V'` from one-sided
/// Jacobi, with `σ` descending. `U` is `m x r`, `V` is `n x r`, `r = min(m, n)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
    pub tolerance: f64,
}

impl Svd {
    pub fn new(m: &DenseMatrix) -> Self {
        if m.rows >= m.cols {
            Self::tall(m)
        } else {
            let t = Self::tall(&m.transpose());
            Self {
                u: t.v,
                singular_values: t.singular_values,
                v: t.u,
                tolerance: t.tolerance,
            }
        }
    }

    // Hestenes one-sided Jacobi on the columns of a tall matrix.
    fn tall(m: &DenseMatrix) -> Self {
        let (rows, cols) = (m.rows, m.cols);
        let mut a: Vec<Vec<f64>> = (0..cols).map(|j| m.col(j)).collect();
        let mut v: Vec<Vec<f64>> = (0..cols)
            .map(|j| {
                let mut e = vec![0.0; cols];
                e[j] = 1.0;
                e
            })
            .collect();
        for _ in 0..MAX_JACOBI_SWEEPS {
            let mut rotated = false;
            for i in 0..cols {
                for j in (i + 1)..cols {
                    let alpha = dot(&a[i], &a[i]);
                    let beta = dot(&a[j], &a[j]);
                    let gamma = dot(&a[i], &a[j]);
                    if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    let (lo, hi) = a.split_at_mut(j);
                    rotate(&mut lo[i], &mut hi[0], c, s);
                    let (lo, hi) = v.split_at_mut(j);
                    rotate(&mut lo[i], &mut hi[0], c, s);
                }
            }
            if !rotated {
                break;
            }
        }
        let norms: Vec<f64> = a.iter().map(|c| norm2(c)).collect();
        let mut order: Vec<usize> = (0..cols).collect();
        order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
        let largest = order.first().map_or(0.0, |&i| norms[i]);
        let tolerance = RANK_TOL * largest;
        let mut u = DenseMatrix::zeros(rows, cols);
        let mut vm = DenseMatrix::zeros(cols, cols);
        let mut singular_values = Vec::with_capacity(cols);
        for (k, &j) in order.iter().enumerate() {
            let s = norms[j];
            singular_values.push(s);
            if s > tolerance && s > 0.0 {
                for r in 0..rows {
                    u[(r, k)] = a[j][r] / s;
                }
            }
            for r in 0..cols {
                vm[(r, k)] = v[j][r];
            }
        }
        Self {
            u,
            singular_values,
            v: vm,
            tolerance,
        }
    }

    pub fn rank(&self) -> usize {
        self.singular_values
            .iter()
            .filter(|&&s| s > self.tolerance && s > 0.0)
            .count()
    }

    /// `M† b`.
    pub fn pinv_apply(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.u.rows {
            return Err(mismatch("pseudoinverse_apply", self.u.rows, b.len()));
        }
        let n = self.v.rows;
        let mut x = vec![0.0; n];
        for k in 0..self.rank() {
            let coef = (0..self.u.rows).map(|r| self.u[(r, k)] * b[r]).sum::<f64>() / self.singular_values[k];
            for (r, xr) in x.iter_mut().enumerate() {
                *xr += self.v[(r, k)] * coef;
            }
        }
        Ok(x)
    }

    /// Explicit `M†` (`n x m`).
    pub fn pinv(&self) -> DenseMatrix {
        let (m, n) = (self.u.rows, self.v.rows);
        let mut out = DenseMatrix::zeros(n, m);
        for k in 0..self.rank() {
            let inv = 1.0 / self.singular_values[k];
            for i in 0..n {
                let vik = self.v[(i, k)] * inv;
                for j in 0..m {
                    out[(i, j)] += vik * self.u[(j, k)];
                }
            }
        }
        out
    }

    /// Orthogonal projection of `b` onto the column space of `M`.
    pub fn project_range(&self, b: &[f64]) -> Vec<f64> {
        let m = self.u.rows;
        let mut out = vec![0.0; m];
        for k in 0..self.rank() {
            let coef: f64 = (0..m).map(|r| self.u[(r, k)] * b[r]).sum();
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.u[(r, k)] * coef;
            }
        }
        out
    }

    /// Orthonormal basis of the null space of `M`, as columns. Only complete
    /// when `M` is tall or square; wide inputs also need the directions
    /// missing from the thin `V`, which [`null_space`] supplies.
    fn null_columns(&self) -> Vec<Vec<f64>> {
        (self.rank()..self.v.cols).map(|k| self.v.col(k)).collect()
    }
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (ai, bi) = (*a, *b);
        *a = c * ai - s * bi;
        *b = s * ai + c * bi;
    }
}

/// Minimum-norm least-squares solution `M† b`.
pub fn pseudoinverse_apply(m: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if b.len() != m.rows {
        return Err(mismatch("pseudoinverse_apply", m.rows, b.len()));
    }
    Svd::new(m).pinv_apply(b)
}

pub fn rank(m: &DenseMatrix) -> usize {
    if m.rows == 0 || m.cols == 0 {
        return 0;
    }
    Svd::new(m).rank()
}

/// Orthonormal basis (columns) of `{x : Mx = 0}`.
pub fn null_space(m: &DenseMatrix) -> Vec<Vec<f64>> {
    if m.rows >= m.cols {
        return Svd::new(m).null_columns();
    }
    // Wide case: null(M) = null(M'M), which is square.
    let gram = m.transpose().matmul(m).expect("conformable");
    let eig = SpectralFactorization::symmetric(&gram).expect("gram matrix is symmetric");
    // Singular values of M are square roots of the Gram eigenvalues, so the
    // rank cutoff is squared.
    let largest = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let cutoff = RANK_TOL * RANK_TOL * largest;
    (0..m.cols)
        .filter(|&k| eig.eigenvalues[k] <= cutoff)
        .map(|k| eig.eigenvectors.col(k))
        .collect()
}

fn checked_psd(m: &DenseMatrix) -> Result<SpectralFactorization, LinalgError> {
    let eig = SpectralFactorization::symmetric(m)?;
    let largest = eig.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    if let Some(&min) = eig.eigenvalues.last() {
        if min < -NEG_EIG_TOL * largest {
            return Err(LinalgError::NegativeEigenvalue(min));
        }
    }
    Ok(eig)
}

/// Symmetric PSD square root `S` with `S S = M`.
pub fn psd_sqrt(m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let eig = checked_psd(m)?;
    Ok(eig.compose(|l| l.max(0.0).sqrt()))
}

/// `(M^{1/2})†` for symmetric PSD `M`.
pub fn psd_sqrt_pinv(m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let eig = checked_psd(m)?;
    Ok(eig.compose(|l| if l > 0.0 { 1.0 / l.sqrt() } else { 0.0 }))
}

/// `M†` for symmetric PSD `M`.
pub fn psd_pinv(m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let eig = checked_psd(m)?;
    Ok(eig.compose(|l| if l > 0.0 { 1.0 / l } else { 0.0 }))
}

/// Minimises `x'Qx - 2c'x` subject to `Ex = f`.
///
/// Takes the minimum-norm solution of `[[2Q, E'], [E, 0]] [x; μ] = [2c; f]`.
/// `E` may have zero rows (unconstrained problem).
pub fn kkt_solve(q: &DenseMatrix, c: &[f64], e: &DenseMatrix, f: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = q.rows;
    if !q.is_square() || c.len() != n {
        return Err(mismatch("kkt_solve", format!("{n}x{n} Q and length-{n} c"), format!("{}x{} Q, {} c", q.rows, q.cols, c.len())));
    }
    let m = e.rows;
    if m > 0 && e.cols != n {
        return Err(mismatch("kkt_solve", format!("E with {n} columns"), e.cols));
    }
    if f.len() != m {
        return Err(mismatch("kkt_solve", format!("{m} constraint values"), f.len()));
    }
    let size = n + m;
    let mut kkt = DenseMatrix::zeros(size, size);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = 2.0 * q[(i, j)];
        }
    }
    for r in 0..m {
        for j in 0..n {
            kkt[(n + r, j)] = e[(r, j)];
            kkt[(j, n + r)] = e[(r, j)];
        }
    }
    let mut rhs: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
    rhs.extend_from_slice(f);
    let sol = pseudoinverse_apply(&kkt, &rhs)?;
    let x = sol[..n].to_vec();
    if m > 0 {
        let ex = e.matvec(&x)?;
        let resid = ex.iter().zip(f).fold(0.0_f64, |a, (l, r)| a.max((l - r).abs()));
        if resid > 1e-6 {
            return Err(LinalgError::InconsistentConstraints(resid));
        }
    }
    Ok(x)
}
