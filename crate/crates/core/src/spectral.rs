//! The Krylov error constant `rho^(m)(A, b)` and the bounds built on it.
//!
//! Two independent routes compute `rho^(m)`:
//!
//! * from the Lanczos coefficients, `(prod_{j=1}^m beta_{j+1})^{1/m}`;
//! * from the monic-polynomial characterization
//!   `min_c |A^m v_1 + sum_i c_i A^i v_1|^{1/m}`, solved as a dense least
//!   squares problem on the (column-scaled) Krylov matrix.
//!
//! The bound evaluators take the spectrum explicitly. The convergence-rate
//! expressions are evaluated as plain formulas and compared against solver
//! traces by [`check_convergence_bound`] and [`check_linear_rate`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::lanczos::{lanczos, LanczosError};
use crate::linalg::{norm, DenseMatrix, LinearOperator};
use crate::solvers::TraceRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("dense oracle limited to dimension {limit}, got {dim}")]
    TooLarge { dim: usize, limit: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Lanczos(#[from] LanczosError),
}

pub const POLYNOMIAL_ORACLE_MAX_DIM: usize = 200;
pub const SUBSPACE_ORACLE_MAX_DIM: usize = 100;

/// `(prod_{j=1}^{m} beta_{j+1})^{1/m}` over the first `m_effective`
/// coefficients; zero when any of them is zero (breakdown).
pub fn rho_from_betas(betas: &[f64], m_effective: usize) -> f64 {
    assert!(betas.len() >= m_effective, "need at least m_effective coefficients");
    if m_effective == 0 {
        return 0.0;
    }
    let used = &betas[..m_effective];
    if used.iter().any(|&b| b <= 0.0) {
        return 0.0;
    }
    (used.iter().map(|b| b.ln()).sum::<f64>() / m_effective as f64).exp()
}

fn to_nalgebra(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j))
}

/// Krylov matrix `[b, Ab, ..., A^{j-1} b]` with unit-norm columns, plus the
/// next power `A^j b` scaled consistently with the last column.
fn scaled_krylov(a: &DMatrix<f64>, b: &[f64], j: usize) -> (DMatrix<f64>, DVector<f64>) {
    let d = b.len();
    let mut k = DMatrix::zeros(d, j);
    let mut col = DVector::from_column_slice(b);
    col /= col.norm();
    for i in 0..j {
        k.set_column(i, &col);
        col = a * &col;
        let n = col.norm();
        if n > 0.0 && i + 1 < j {
            col /= n;
        }
    }
    (k, col)
}

/// `rho^(m)` as the minimal monic-polynomial residual, by least squares on
/// the Krylov matrix (minimum-norm solution when it is rank deficient).
pub fn rho_polynomial(a: &DenseMatrix, b: &[f64], m: usize) -> Result<f64, SpectralError> {
    let d = a.rows();
    if d > POLYNOMIAL_ORACLE_MAX_DIM {
        return Err(SpectralError::TooLarge { dim: d, limit: POLYNOMIAL_ORACLE_MAX_DIM });
    }
    if b.len() != d || m == 0 {
        return Err(SpectralError::InvalidInput(format!("b has length {}, d = {d}, m = {m}", b.len())));
    }
    if norm(b) == 0.0 {
        return Err(LanczosError::ZeroStartVector.into());
    }
    let an = to_nalgebra(a);
    // Columns are scaled, so the monic coefficient of A^m becomes the
    // product of the scale factors; track it to undo at the end.
    let mut v = DVector::from_column_slice(b);
    v /= v.norm();
    let mut k = DMatrix::zeros(d, m);
    let mut log_scale = 0.0;
    for i in 0..m {
        k.set_column(i, &v);
        v = &an * &v;
        let n = v.norm();
        if n == 0.0 {
            return Ok(0.0);
        }
        v /= n;
        log_scale += n.ln();
    }
    // v = A^m v_1 / prod(n_i); columns of k are A^i v_1 / prod_{<=i} n.
    let svd = k.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * (d.max(m) as f64) * f64::EPSILON;
    let coeffs = svd.solve(&v, cutoff).map_err(|e| SpectralError::InvalidInput(e.to_string()))?;
    let residual = (&v - &k * coeffs).norm();
    if residual == 0.0 {
        return Ok(0.0);
    }
    Ok(((residual.ln() + log_scale) / m as f64).exp())
}

/// Largest `|(I - P_j) A w|` over unit `w` in `K_j(A, b)`, where `P_j` is the
/// orthogonal projector onto `K_j`; computed by dense SVD.
pub fn invariant_subspace_violation(a: &DenseMatrix, b: &[f64], j: usize) -> Result<f64, SpectralError> {
    let d = a.rows();
    if d > SUBSPACE_ORACLE_MAX_DIM {
        return Err(SpectralError::TooLarge { dim: d, limit: SUBSPACE_ORACLE_MAX_DIM });
    }
    if b.len() != d || j == 0 || j > d {
        return Err(SpectralError::InvalidInput(format!("b has length {}, d = {d}, j = {j}", b.len())));
    }
    if norm(b) == 0.0 {
        return Err(LanczosError::ZeroStartVector.into());
    }
    let an = to_nalgebra(a);
    let (k, _) = scaled_krylov(&an, b, j);
    let svd = k.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > smax * 1e-10).count();
    let basis = u.columns(0, rank).into_owned();
    let projector = &basis * basis.transpose();
    let complement = DMatrix::identity(d, d) - &projector;
    let m = complement * &an * projector;
    Ok(m.singular_values().max())
}

/// Distinct values of `eigs`, descending; values within `1e-12` relative
/// of each other are merged.
pub fn distinct_eigenvalues(eigs: &[f64]) -> Vec<f64> {
    let mut sorted = eigs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let scale = sorted.first().map_or(0.0, |v| v.abs()).max(f64::MIN_POSITIVE);
    let mut out: Vec<f64> = Vec::new();
    for v in sorted {
        if out.last().is_none_or(|&last| (last - v).abs() > 1e-12 * scale) {
            out.push(v);
        }
    }
    out
}

/// `2^{1/m} L1 / 4`
pub fn bound_l1(l1: f64, m: usize) -> f64 {
    2f64.powf(1.0 / m as f64) * l1 / 4.0
}

/// Geometric mean of the `m` largest distinct eigenvalues, or zero when
/// there are at most `m` distinct eigenvalues.
pub fn bound_top_eigenvalues(eigs: &[f64], m: usize) -> f64 {
    let distinct = distinct_eigenvalues(eigs);
    if m >= distinct.len() {
        return 0.0;
    }
    let top = &distinct[..m];
    if top.iter().any(|&v| v <= 0.0) {
        return 0.0;
    }
    (top.iter().map(|v| v.ln()).sum::<f64>() / m as f64).exp()
}

/// Smallest `Delta` with every eigenvalue in `[0, Delta] U [L1 - Delta, L1]`,
/// where `L1` is the largest eigenvalue.
pub fn cluster_width(eigs: &[f64]) -> f64 {
    let l1 = eigs.iter().copied().fold(0.0_f64, f64::max);
    eigs.iter().map(|&v| v.max(0.0).min(l1 - v)).fold(0.0_f64, f64::max)
}

/// `2^{1/m} sqrt(Delta (L1 - Delta)) / 2`, defined for even `m`.
pub fn bound_two_cluster(delta: f64, l1: f64, m: usize) -> Option<f64> {
    (m % 2 == 0 && m > 0).then(|| 2f64.powf(1.0 / m as f64) * (delta * (l1 - delta)).max(0.0).sqrt() / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoReport {
    pub rho_lanczos: f64,
    pub rho_polynomial: Option<f64>,
    pub bound_l1: f64,
    pub bound_topm: Option<f64>,
    pub bound_cluster: Option<f64>,
    pub m: usize,
    pub m_effective: usize,
    pub breakdown: bool,
    /// Largest eigenvalue `L1`.
    pub l1: f64,
}

impl RhoReport {
    /// Violated invariants, described; empty when the report is consistent.
    pub fn violations(&self) -> Vec<String> {
        let slack = 1e-8 * self.l1.max(1.0);
        let mut out = Vec::new();
        let mut check = |name: &str, bound: Option<f64>| {
            if let Some(b) = bound {
                if self.rho_lanczos > b + slack {
                    out.push(format!("rho {:.6e} exceeds {name} bound {:.6e}", self.rho_lanczos, b));
                }
            }
        };
        check("L1", Some(self.bound_l1));
        check("top-m eigenvalue", self.bound_topm);
        check("two-cluster", self.bound_cluster);
        if let (Some(p), false) = (self.rho_polynomial, self.breakdown) {
            let scale = p.max(self.rho_lanczos);
            if (p - self.rho_lanczos).abs() > 1e-6 * scale {
                out.push(format!("lanczos rho {:.10e} differs from polynomial rho {:.10e}", self.rho_lanczos, p));
            }
        }
        out
    }
}

/// Diagnostics for `A = diag(eigenvalues)` and start vector `b` expressed in
/// the eigenbasis (`rho` is invariant under orthogonal change of basis).
pub fn check_bounds(eigenvalues: &[f64], b: &[f64], m: usize) -> Result<RhoReport, SpectralError> {
    if eigenvalues.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(SpectralError::InvalidInput("spectrum must be finite and nonnegative".into()));
    }
    let a = DiagonalOperator(eigenvalues);
    let dense = (eigenvalues.len() <= POLYNOMIAL_ORACLE_MAX_DIM).then(|| DenseMatrix::from_diag(eigenvalues));
    report(&a, dense.as_ref(), eigenvalues, b, m)
}

/// Same as [`check_bounds`] for a dense symmetric PSD matrix.
pub fn check_bounds_dense(a: &DenseMatrix, b: &[f64], m: usize) -> Result<RhoReport, SpectralError> {
    let eigs = symmetric_eigenvalues(a);
    let l1 = eigs.iter().copied().fold(0.0_f64, f64::max);
    // Round-off can leave tiny negative eigenvalues on a PSD input.
    if eigs.iter().any(|&v| v < -1e-10 * l1.max(1.0)) {
        return Err(SpectralError::InvalidInput("matrix is not positive semidefinite".into()));
    }
    let clipped: Vec<f64> = eigs.iter().map(|v| v.max(0.0)).collect();
    let dense = (a.rows() <= POLYNOMIAL_ORACLE_MAX_DIM).then_some(a);
    report(a, dense, &clipped, b, m)
}

fn report(
    op: &dyn LinearOperator,
    dense: Option<&DenseMatrix>,
    eigs: &[f64],
    b: &[f64],
    m: usize,
) -> Result<RhoReport, SpectralError> {
    let basis = lanczos(op, b, m)?;
    let l1 = eigs.iter().copied().fold(0.0_f64, f64::max);
    let rho_polynomial = match dense {
        Some(a) => Some(rho_polynomial(a, b, m)?),
        None => None,
    };
    let delta = cluster_width(eigs);
    Ok(RhoReport {
        rho_lanczos: basis.rho(),
        rho_polynomial,
        bound_l1: bound_l1(l1, m),
        bound_topm: Some(bound_top_eigenvalues(eigs, m)),
        bound_cluster: bound_two_cluster(delta, l1, m),
        m,
        m_effective: basis.m_effective(),
        breakdown: basis.breakdown,
        l1,
    })
}

pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    SymmetricEigen::new(to_nalgebra(a)).eigenvalues.iter().copied().collect()
}

struct DiagonalOperator<'a>(&'a [f64]);

impl LinearOperator for DiagonalOperator<'_> {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), v) in out.iter_mut().zip(self.0).zip(x) {
            *o = a * v;
        }
    }
}

/// Global rate bound for the convex case:
/// `(9 rho D^2 / 2m)(1/k + 1/k^2) + 9 (L2 + M) D^3 / (2 k^2)`.
pub fn theorem1_bound(rho_max: f64, d_radius: f64, l2: f64, m_reg: f64, m: usize, k: usize) -> f64 {
    assert!(k >= 1, "bound is stated for k >= 1");
    let k = k as f64;
    let m = m as f64;
    9.0 * rho_max * d_radius * d_radius / (2.0 * m) * (1.0 / k + 1.0 / (k * k))
        + 9.0 * (l2 + m_reg) * d_radius.powi(3) / (2.0 * k * k)
}

/// Iteration count sufficient for `delta_k <= eps` in the strongly convex
/// case, summed over halving stages:
/// `(72 rho / (m mu))(log2(delta0/eps) + 1) + log2(delta0/eps) + 1
///  + 8 (L2 + M)^{1/2} delta0^{1/4} / ((1 - 2^{-1/4}) mu^{3/4})`.
pub fn theorem2_iterations(rho_max: f64, m: usize, mu: f64, l2: f64, m_reg: f64, delta0: f64, eps: f64) -> f64 {
    assert!(mu > 0.0 && delta0 > 0.0 && eps > 0.0 && eps < delta0, "invalid inputs");
    let stages = (delta0 / eps).log2() + 1.0;
    72.0 * rho_max / (m as f64 * mu) * stages
        + stages
        + 8.0 * (l2 + m_reg).sqrt() * delta0.powf(0.25) / ((1.0 - 2f64.powf(-0.25)) * mu.powf(0.75))
}

/// Length of one halving stage started at suboptimality `delta`:
/// `ceil(72 rho / (m mu)) + 8 (L2 + M)^{1/2} delta^{1/4} / mu^{3/4} + 1`.
pub fn halving_stage_length(rho_max: f64, m: usize, mu: f64, l2: f64, m_reg: f64, delta: f64) -> f64 {
    (72.0 * rho_max / (m as f64 * mu)).ceil() + 8.0 * (l2 + m_reg).sqrt() * delta.max(0.0).powf(0.25) / mu.powf(0.75) + 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub k: usize,
    pub measured: f64,
    pub bound: f64,
}

fn prefix_maxima(trace: &[TraceRecord]) -> (Vec<f64>, Vec<f64>) {
    let mut rho = Vec::with_capacity(trace.len());
    let mut reg = Vec::with_capacity(trace.len());
    let (mut r, mut mm) = (0.0_f64, 0.0_f64);
    for rec in trace {
        r = r.max(rec.rho_m.unwrap_or(0.0));
        mm = mm.max(rec.m_accepted);
        rho.push(r);
        reg.push(mm);
    }
    (rho, reg)
}

/// Compares `f(x_k) - f*` against [`theorem1_bound`] at every `k >= 1`,
/// with `rho_max` and `M` taken as running maxima over the steps so far.
pub fn check_convergence_bound(
    trace: &[TraceRecord],
    f_star: f64,
    d_radius: f64,
    l2: f64,
    m: usize,
) -> Vec<BoundViolation> {
    let (rho, reg) = prefix_maxima(trace);
    trace
        .iter()
        .enumerate()
        .filter(|(_, rec)| rec.k >= 1)
        .filter_map(|(i, rec)| {
            let measured = rec.f - f_star;
            let bound = theorem1_bound(rho[i], d_radius, l2, reg[i], m, rec.k);
            (measured > bound).then_some(BoundViolation { k: rec.k, measured, bound })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRateCheck {
    /// First `k` with `delta_k <= eps`, if reached.
    pub iterations: Option<usize>,
    pub iteration_bound: f64,
    /// Windows that failed to halve the suboptimality.
    pub stalled_windows: Vec<BoundViolation>,
}

impl LinearRateCheck {
    pub fn passed(&self) -> bool {
        self.iterations.is_some_and(|k| k as f64 <= self.iteration_bound) && self.stalled_windows.is_empty()
    }
}

/// Checks the strongly convex iteration bound to reach `eps` and that the
/// suboptimality halves within every [`halving_stage_length`] window.
pub fn check_linear_rate(
    trace: &[TraceRecord],
    f_star: f64,
    mu: f64,
    l2: f64,
    m: usize,
    eps: f64,
) -> LinearRateCheck {
    let rho_max = trace.iter().filter_map(|r| r.rho_m).fold(0.0_f64, f64::max);
    let m_max = trace.iter().map(|r| r.m_accepted).fold(0.0_f64, f64::max);
    let delta: Vec<f64> = trace.iter().map(|r| r.f - f_star).collect();
    let delta0 = delta[0];
    let iterations = trace.iter().zip(&delta).find(|(_, &dk)| dk <= eps).map(|(r, _)| r.k);
    let iteration_bound = theorem2_iterations(rho_max, m, mu, l2, m_max, delta0, eps);
    let last = iterations.map_or(trace.len() - 1, |k| k.min(trace.len() - 1));
    let mut stalled_windows = Vec::new();
    for start in 0..last {
        let dk = delta[start];
        if dk <= eps {
            break;
        }
        let window = halving_stage_length(rho_max, m, mu, l2, m_max, dk).floor() as usize;
        let end = (start + window).min(trace.len() - 1);
        let halved = delta[start + 1..=end].iter().any(|&dj| dj <= 0.5 * dk);
        if !halved && start + window <= last {
            stalled_windows.push(BoundViolation { k: start, measured: delta[end], bound: 0.5 * dk });
        }
    }
    LinearRateCheck { iterations, iteration_bound, stalled_windows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_from_betas_examples() {
        assert!((rho_from_betas(&[0.5, 0.5], 2) - 0.5).abs() < 1e-15);
        assert_eq!(rho_from_betas(&[0.5, 0.0, 3.0], 3), 0.0);
        assert_eq!(rho_from_betas(&[], 0), 0.0);
    }

    #[test]
    fn diag123_one_step() {
        let a = DenseMatrix::from_diag(&[1.0, 2.0, 3.0]);
        let b = [1.0; 3];
        let want = (2.0f64 / 3.0).sqrt();
        let basis = lanczos(&a, &b, 1).unwrap();
        assert!((basis.alphas[0] - 2.0).abs() < 1e-15);
        assert!((basis.rho() - want).abs() < 1e-14);
        assert!((rho_polynomial(&a, &b, 1).unwrap() - want).abs() < 1e-14);
        let report = check_bounds(&[1.0, 2.0, 3.0], &b, 1).unwrap();
        assert!((report.bound_l1 - 1.5).abs() < 1e-15);
        assert!(report.violations().is_empty());
    }

    #[test]
    fn polynomial_rho_vanishes_for_few_distinct_eigenvalues() {
        let a = DenseMatrix::from_diag(&[2.0, 2.0, 5.0, 5.0, 1.0, 1.0]);
        let b = [1.0, -1.0, 0.5, 2.0, 1.0, 3.0];
        assert!(rho_polynomial(&a, &b, 3).unwrap() < 1e-4);
        let c = DenseMatrix::from_diag(&[4.0; 5]);
        assert!(rho_polynomial(&c, &[1.0, 2.0, 3.0, 4.0, 5.0], 1).unwrap() < 1e-7);
        let report = check_bounds(&[2.0, 2.0, 5.0, 5.0, 1.0, 1.0], &b, 4).unwrap();
        assert_eq!(report.rho_lanczos, 0.0);
        assert_eq!(report.bound_topm, Some(0.0));
    }

    #[test]
    fn eigenvector_start_is_invariant() {
        let a = DenseMatrix::from_diag(&[1.0, 2.0, 3.0]);
        assert!(invariant_subspace_violation(&a, &[0.0, 1.0, 0.0], 1).unwrap() < 1e-14);
        assert!(invariant_subspace_violation(&a, &[1.0, 1.0, 1.0], 3).unwrap() < 1e-10);
        let v = invariant_subspace_violation(&a, &[1.0, 1.0, 1.0], 1).unwrap();
        assert!((v - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sublinear_bound_shape() {
        let full = theorem1_bound(0.0, 2.0, 0.5, 1.5, 4, 3);
        assert!((full - 9.0 * 2.0 * 8.0 / 18.0).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for k in 1..200 {
            let v = theorem1_bound(0.3, 5.0, 0.0, 1.0, 5, k);
            assert!(v < last && v > 0.0);
            last = v;
        }
    }

    #[test]
    fn linear_bound_shape() {
        let half = theorem2_iterations(0.0, 3, 0.5, 0.0, 1.0, 8.0, 4.0);
        let tail = 8.0 * 8f64.powf(0.25) / ((1.0 - 2f64.powf(-0.25)) * 0.5f64.powf(0.75));
        assert!((half - (2.0 + tail)).abs() < 1e-12);
        let a = theorem2_iterations(0.0, 3, 0.5, 0.0, 1.0, 8.0, 1e-3);
        let b = theorem2_iterations(0.0, 30, 0.5, 0.0, 1.0, 8.0, 1e-3);
        assert_eq!(a, b);
    }

    #[test]
    fn cluster_bound_needs_even_m() {
        assert!(bound_two_cluster(0.1, 1.0, 3).is_none());
        let v = bound_two_cluster(0.04, 1.0, 4).unwrap();
        assert!((v - 2f64.powf(0.25) * (0.04f64 * 0.96).sqrt() / 2.0).abs() < 1e-15);
        assert!((cluster_width(&[0.0, 0.01, 0.97, 1.0]) - 0.03).abs() < 1e-15);
    }
}
