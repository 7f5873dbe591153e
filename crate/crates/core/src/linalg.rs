//! Dense and sparse primitives shared by the rest of the crate.
//!
//! Everything is `f64`. Vectors are plain `Vec<f64>` / `&[f64]`; the
//! symmetric matrices the solvers see are reached only through
//! [`LinearOperator`], so the Hessian of a large objective never has to be
//! materialized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type DenseVector = Vec<f64>;

/// Relative pivot threshold used by the Cholesky and Thomas factorizations.
pub const PIVOT_RTOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("numerical breakdown in conjugate gradient at iteration {iteration}")]
    NumericalBreakdown { iteration: usize },
    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),
}

fn check_len(expected: usize, found: usize) -> Result<(), LinalgError> {
    if expected == found {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch { expected, found })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// A symmetric `dim x dim` operator accessed only through products.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// Writes `A x` into `out`. Both slices have length `dim()`.
    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    fn apply(&self, x: &[f64]) -> DenseVector {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_into(x, out)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_into(x, out)
    }
}

/// Largest normalized symmetry defect `|u.Av - v.Au| / (|u| |v| scale)` over
/// `probes` seeded random pairs, where `scale` is the largest `|Aw|/|w|` seen.
pub fn symmetry_defect(op: &dyn LinearOperator, probes: usize, seed: u64) -> f64 {
    let d = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..probes {
        let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let au = op.apply(&u);
        let av = op.apply(&v);
        let (nu, nv) = (norm(&u), norm(&v));
        let scale = (norm(&au) / nu).max(norm(&av) / nv).max(f64::MIN_POSITIVE);
        let defect = (dot(&u, &av) - dot(&v, &au)).abs() / (nu * nv * scale);
        worst = worst.max(defect);
    }
    worst
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrixCsr {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrixCsr {
    pub fn try_new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        let bad = |msg: String| Err(LinalgError::InvalidStructure(msg));
        if row_offsets.len() != rows + 1 {
            return bad(format!("row_offsets has length {}, expected {}", row_offsets.len(), rows + 1));
        }
        if row_offsets[0] != 0 || row_offsets[rows] != values.len() {
            return bad("row_offsets must start at 0 and end at nnz".into());
        }
        if col_indices.len() != values.len() {
            return bad("col_indices and values differ in length".into());
        }
        for r in 0..rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return bad(format!("row_offsets decreases at row {r}"));
            }
            let idx = &col_indices[lo..hi];
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("column indices not strictly increasing in row {r}"));
            }
            if idx.last().is_some_and(|&c| c >= cols) {
                return bad(format!("column index out of range in row {r}"));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return bad("non-finite value".into());
        }
        Ok(Self { rows, cols, row_offsets, col_indices, values })
    }

    /// Builds a matrix from per-row `(column, value)` lists; each list is
    /// sorted and must not repeat a column.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self, LinalgError> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in rows {
            let mut sorted = row.clone();
            sorted.sort_by_key(|&(c, _)| c);
            for (c, v) in sorted {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(values.len());
        }
        Self::try_new(rows.len(), cols, row_offsets, col_indices, values)
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let rows: Vec<Vec<(usize, f64)>> = (0..a.rows())
            .map(|i| {
                (0..a.cols())
                    .filter(|&j| a.get(i, j) != 0.0)
                    .map(|j| (j, a.get(i, j)))
                    .collect()
            })
            .collect();
        Self::from_rows(a.cols(), &rows).expect("dense matrix yields valid CSR")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        self.row(r).map(|(c, v)| v * x[c]).sum()
    }

    pub fn spmv(&self, x: &[f64]) -> Result<DenseVector, LinalgError> {
        check_len(self.cols, x.len())?;
        Ok((0..self.rows).map(|r| self.row_dot(r, x)).collect())
    }

    /// `A^T y`, accumulated row by row.
    pub fn spmv_transpose(&self, y: &[f64]) -> Result<DenseVector, LinalgError> {
        check_len(self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                out[c] += v * yr;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                col_indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        Self { rows: self.cols, cols: self.rows, row_offsets, col_indices, values }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut out = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            out.set(i, i, v);
        }
        out
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        check_len(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Collects the columns `A e_i` of a symmetric operator.
    pub fn from_operator(op: &dyn LinearOperator) -> Self {
        let d = op.dim();
        let mut out = Self::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            op.apply_into(&e, &mut col);
            e[j] = 0.0;
            for i in 0..d {
                out.set(i, j, col[i]);
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Result<DenseVector, LinalgError> {
        check_len(self.cols, x.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        check_len(self.cols, other.rows)?;
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Principal submatrix on `idx x idx`.
    pub fn select(&self, idx: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(idx.len(), idx.len(), |i, j| self.get(idx[i], idx[j]))
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `s^T A s` for square `A`.
    pub fn quadratic_form(&self, s: &[f64]) -> f64 {
        (0..self.rows).map(|i| s[i] * dot(self.row(i), s)).sum()
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.rows, self.cols);
        self.rows
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }
}

/// Symmetric tridiagonal matrix; only one off-diagonal is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalMatrix {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self, LinalgError> {
        if diag.is_empty() {
            return Err(LinalgError::InvalidStructure("empty tridiagonal matrix".into()));
        }
        check_len(diag.len() - 1, offdiag.len())?;
        Ok(Self { diag, offdiag })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let m = self.diag.len();
        let mut out = DenseMatrix::from_diag(&self.diag);
        for i in 0..m - 1 {
            out.set(i, i + 1, self.offdiag[i]);
            out.set(i + 1, i, self.offdiag[i]);
        }
        out
    }

    pub fn quadratic_form(&self, z: &[f64]) -> f64 {
        let mut acc: f64 = self.diag.iter().zip(z).map(|(a, v)| a * v * v).sum();
        for i in 0..self.offdiag.len() {
            acc += 2.0 * self.offdiag[i] * z[i] * z[i + 1];
        }
        acc
    }
}

impl LinearOperator for TridiagonalMatrix {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let m = self.diag.len();
        for i in 0..m {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.offdiag[i - 1] * x[i - 1];
            }
            if i + 1 < m {
                v += self.offdiag[i] * x[i + 1];
            }
            out[i] = v;
        }
    }
}

/// `T + shift I = L D L^T` with unit lower bidiagonal `L`.
#[derive(Debug, Clone)]
pub struct TridiagonalLdl {
    pivots: Vec<f64>,
    multipliers: Vec<f64>,
}

impl TridiagonalLdl {
    pub fn factor(t: &TridiagonalMatrix, shift: f64) -> Result<Self, LinalgError> {
        let m = t.diag.len();
        let max_diag = t.diag.iter().fold(0.0_f64, |acc, a| acc.max((a + shift).abs()));
        let floor = PIVOT_RTOL * max_diag;
        let mut pivots = Vec::with_capacity(m);
        let mut multipliers = Vec::with_capacity(m.saturating_sub(1));
        let mut pivot = t.diag[0] + shift;
        for i in 0..m {
            if !(pivot > floor) {
                return Err(LinalgError::NotPositiveDefinite { index: i, pivot });
            }
            pivots.push(pivot);
            if i + 1 < m {
                let l = t.offdiag[i] / pivot;
                multipliers.push(l);
                pivot = t.diag[i + 1] + shift - l * t.offdiag[i];
            }
        }
        Ok(Self { pivots, multipliers })
    }

    /// `L^{-1} rhs`
    fn forward(&self, rhs: &[f64]) -> Vec<f64> {
        let mut y = rhs.to_vec();
        for i in 1..y.len() {
            y[i] -= self.multipliers[i - 1] * y[i - 1];
        }
        y
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<DenseVector, LinalgError> {
        check_len(self.pivots.len(), rhs.len())?;
        let mut y = self.forward(rhs);
        for (yi, p) in y.iter_mut().zip(&self.pivots) {
            *yi /= p;
        }
        for i in (0..y.len() - 1).rev() {
            y[i] -= self.multipliers[i] * y[i + 1];
        }
        Ok(y)
    }

    /// `v^T (T + shift I)^{-1} v` from a single forward sweep.
    pub fn inverse_quadratic_form(&self, v: &[f64]) -> f64 {
        self.forward(v).iter().zip(&self.pivots).map(|(y, p)| y * y / p).sum()
    }
}

/// Solves `(T + shift I) y = rhs` by the Thomas algorithm in `O(m)`.
pub fn tridiag_solve(
    t: &TridiagonalMatrix,
    shift: f64,
    rhs: &[f64],
) -> Result<DenseVector, LinalgError> {
    check_len(t.diag.len(), rhs.len())?;
    TridiagonalLdl::factor(t, shift)?.solve(rhs)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors `A + shift I`; only the lower triangle of `a` is read.
    pub fn factor_shifted(a: &DenseMatrix, shift: f64) -> Result<Self, LinalgError> {
        check_len(a.rows(), a.cols())?;
        let n = a.rows();
        let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max((a.get(i, i) + shift).abs()));
        let floor = PIVOT_RTOL * max_diag;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let row_j = j * n;
            let mut pivot = a.get(j, j) + shift - dot(&l[row_j..row_j + j], &l[row_j..row_j + j]);
            if !(pivot > floor) {
                return Err(LinalgError::NotPositiveDefinite { index: j, pivot });
            }
            pivot = pivot.sqrt();
            l[row_j + j] = pivot;
            for i in j + 1..n {
                let row_i = i * n;
                let s = a.get(i, j) - dot(&l[row_i..row_i + j], &l[row_j..row_j + j]);
                l[row_i + j] = s / pivot;
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn factor(a: &DenseMatrix) -> Result<Self, LinalgError> {
        Self::factor_shifted(a, 0.0)
    }

    /// `L^{-1} rhs`
    pub fn forward(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            y[i] = (y[i] - dot(row, &y[..i])) / self.lower[i * n + i];
        }
        y
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<DenseVector, LinalgError> {
        check_len(self.n, rhs.len())?;
        let n = self.n;
        let mut y = self.forward(rhs);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lower[k * n + i] * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        Ok(y)
    }

    /// `v^T (LL^T)^{-1} v = |L^{-1} v|^2`
    pub fn inverse_quadratic_form(&self, v: &[f64]) -> f64 {
        let y = self.forward(v);
        dot(&y, &y)
    }
}

/// Cholesky-based solve of a symmetric positive definite system.
pub fn dense_spd_solve(a: &DenseMatrix, rhs: &[f64]) -> Result<DenseVector, LinalgError> {
    check_len(a.rows(), rhs.len())?;
    Cholesky::factor(a)?.solve(rhs)
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: DenseVector,
    pub iterations: usize,
    pub converged: bool,
    /// `|(A + shift I) y - rhs| / |rhs|` of the returned iterate.
    pub relative_residual: f64,
}

/// Conjugate gradient on `(A + shift I) y = rhs` from `y = 0`.
///
/// Stops when the recursive relative residual falls below `tol`. After
/// `max_iter` steps the iterate with the smallest residual seen is returned
/// with `converged = false`.
pub fn cg_solve(
    a: &dyn LinearOperator,
    shift: f64,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome, LinalgError> {
    let d = a.dim();
    check_len(d, rhs.len())?;
    let rhs_norm = norm(rhs);
    let mut x = vec![0.0; d];
    if rhs_norm == 0.0 {
        return Ok(CgOutcome { solution: x, iterations: 0, converged: true, relative_residual: 0.0 });
    }
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; d];
    let mut rr = dot(&r, &r);
    let mut best = (1.0, x.clone());
    for it in 1..=max_iter {
        a.apply_into(&p, &mut ap);
        axpy(shift, &p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) || !curvature.is_finite() {
            return Err(LinalgError::NumericalBreakdown { iteration: it });
        }
        let step = rr / curvature;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        let rr_next = dot(&r, &r);
        let rel = rr_next.sqrt() / rhs_norm;
        if rel <= tol {
            return Ok(CgOutcome { solution: x, iterations: it, converged: true, relative_residual: rel });
        }
        if rel < best.0 {
            best = (rel, x.clone());
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok(CgOutcome { solution: best.1, iterations: max_iter, converged: false, relative_residual: best.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn dense_reference(a: &DenseMatrix, x: &[f64]) -> Vec<f64> {
        (0..a.rows()).map(|i| (0..a.cols()).map(|j| a.get(i, j) * x[j]).sum()).collect()
    }

    fn random_spd(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut a = b.transpose().matmul(&b).unwrap();
        for i in 0..n {
            a.add_to(i, i, 0.5);
        }
        a
    }

    #[test]
    fn spmv_identity_and_single_entry() {
        let eye = SparseMatrixCsr::from_dense(&DenseMatrix::identity(2));
        assert_eq!(eye.spmv(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        let a = SparseMatrixCsr::from_rows(2, &[vec![(1, 5.0)], vec![]]).unwrap();
        assert_eq!(a.spmv(&[1.0, 2.0]).unwrap(), vec![10.0, 0.0]);
    }

    #[test]
    fn spmv_rejects_wrong_length() {
        let a = SparseMatrixCsr::from_dense(&DenseMatrix::identity(3));
        assert_eq!(
            a.spmv(&[1.0, 2.0]),
            Err(LinalgError::DimensionMismatch { expected: 3, found: 2 })
        );
    }

    #[test]
    fn csr_structure_is_validated() {
        assert!(SparseMatrixCsr::try_new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrixCsr::try_new(1, 3, vec![0, 2], vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrixCsr::try_new(1, 3, vec![1, 2], vec![1], vec![1.0]).is_err());
        assert!(SparseMatrixCsr::try_new(1, 3, vec![0, 1], vec![3], vec![1.0]).is_err());
    }

    #[test]
    fn transpose_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = DenseMatrix::from_fn(4, 7, |_, _| if rng.gen_bool(0.4) { rng.gen_range(-2.0..2.0) } else { 0.0 });
        let a = SparseMatrixCsr::from_dense(&d);
        assert_eq!(a.transpose().to_dense(), d.transpose());
        let y = [1.0, -2.0, 0.5, 3.0];
        let via_t = a.transpose().spmv(&y).unwrap();
        let direct = a.spmv_transpose(&y).unwrap();
        for (u, v) in via_t.iter().zip(&direct) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn tridiag_examples() {
        let t = TridiagonalMatrix::new(vec![2.0, 2.0], vec![0.0]).unwrap();
        assert_eq!(tridiag_solve(&t, 0.0, &[2.0, 4.0]).unwrap(), vec![1.0, 2.0]);
        let t = TridiagonalMatrix::new(vec![2.0, 2.0], vec![1.0]).unwrap();
        let y = tridiag_solve(&t, 0.0, &[3.0, 3.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15);
        let t = TridiagonalMatrix::new(vec![-1.0], vec![]).unwrap();
        assert!(matches!(
            tridiag_solve(&t, 0.5, &[1.0]),
            Err(LinalgError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn ldl_inverse_quadratic_form() {
        let t = TridiagonalMatrix::new(vec![3.0, 2.5, 4.0], vec![1.0, -0.5]).unwrap();
        let v = [1.0, -2.0, 0.5];
        let ldl = TridiagonalLdl::factor(&t, 0.3).unwrap();
        let y = ldl.solve(&v).unwrap();
        assert!((ldl.inverse_quadratic_form(&v) - dot(&v, &y)).abs() < 1e-13);
    }

    #[test]
    fn dense_spd_examples() {
        assert_eq!(dense_spd_solve(&DenseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(dense_spd_solve(&DenseMatrix::from_diag(&[4.0, 9.0]), &[8.0, 27.0]).unwrap(), vec![2.0, 3.0]);
        let a = random_spd(8, 11);
        let rhs: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let sol = dense_spd_solve(&a, &rhs).unwrap();
        let res: Vec<f64> = a.matvec(&sol).unwrap().iter().zip(&rhs).map(|(u, v)| u - v).collect();
        assert!(norm(&res) <= 1e-9);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DenseMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(dense_spd_solve(&a, &[1.0, 1.0]), Err(LinalgError::NotPositiveDefinite { index: 1, .. })));
        let singular = DenseMatrix::from_fn(2, 2, |_, _| 1.0);
        assert!(dense_spd_solve(&singular, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn cg_identity_one_iteration() {
        let rhs = [1.0, -2.0, 3.0, 0.5, 4.0];
        let out = cg_solve(&DenseMatrix::identity(5), 0.0, &rhs, 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        for (u, v) in out.solution.iter().zip(&rhs) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn cg_matches_cholesky() {
        let diag: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let a = DenseMatrix::from_diag(&diag);
        let rhs = vec![1.0; 20];
        let out = cg_solve(&a, 1.0, &rhs, 1e-14, 100).unwrap();
        let reference = Cholesky::factor_shifted(&a, 1.0).unwrap().solve(&rhs).unwrap();
        assert!(out.converged);
        for (u, v) in out.solution.iter().zip(&reference) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn cg_reports_budget_exhaustion() {
        let diag: Vec<f64> = (0..30).map(|i| 10f64.powi(i % 7)).collect();
        let out = cg_solve(&DenseMatrix::from_diag(&diag), 0.0, &vec![1.0; 30], 1e-12, 1).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn cg_breakdown_on_zero_operator() {
        let zero = DenseMatrix::zeros(3, 3);
        assert!(matches!(
            cg_solve(&zero, 0.0, &[1.0, 0.0, 0.0], 1e-10, 5),
            Err(LinalgError::NumericalBreakdown { iteration: 1 })
        ));
    }

    #[test]
    fn symmetry_probe_flags_asymmetric() {
        assert!(symmetry_defect(&random_spd(6, 1), 5, 0) < 1e-14);
        let skew = DenseMatrix::from_fn(4, 4, |i, j| (i as f64) - (j as f64) + if i == j { 1.0 } else { 0.0 });
        assert!(symmetry_defect(&skew, 5, 0) > 1e-3);
    }

    proptest! {
        #[test]
        fn spmv_agrees_with_dense(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = DenseMatrix::from_fn(10, 10, |_, _| if rng.gen_bool(0.3) { rng.gen_range(-3.0..3.0) } else { 0.0 });
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = SparseMatrixCsr::from_dense(&d).spmv(&x).unwrap();
            let want = dense_reference(&d, &x);
            for (u, v) in got.iter().zip(&want) {
                prop_assert!((u - v).abs() <= 1e-12);
            }
        }

        #[test]
        fn thomas_agrees_with_cholesky(seed in 0u64..10_000, m in 1usize..25, shift in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let off: Vec<f64> = (0..m - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Diagonal dominance keeps the random tridiagonal positive definite.
            let diag: Vec<f64> = (0..m).map(|_| rng.gen_range(2.1..4.0)).collect();
            let t = TridiagonalMatrix::new(diag, off).unwrap();
            let rhs: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = tridiag_solve(&t, shift, &rhs).unwrap();
            let z = Cholesky::factor_shifted(&t.to_dense(), shift).unwrap().solve(&rhs).unwrap();
            for (u, v) in y.iter().zip(&z) {
                prop_assert!((u - v).abs() <= 1e-9);
            }
        }
    }
}
