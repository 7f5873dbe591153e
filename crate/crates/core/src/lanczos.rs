//! Symmetric Lanczos tridiagonalization of a Krylov subspace.
//!
//! Starting from `v_1 = b / |b|`, the recurrence
//!
//! ```text
//! A v_j = beta_{j+1} v_{j+1} + alpha_j v_j + beta_j v_{j-1}
//! ```
//!
//! produces an orthonormal basis `V` of `K_m(A, b)` together with the
//! projected tridiagonal `T = V^T A V` and the projected start vector
//! `V^T b = |b| e_1`. Every new direction is fully reorthogonalized against
//! the stored basis (two Gram-Schmidt passes), so the basis stays orthonormal
//! to working precision. When `beta_{j+1}` drops to the breakdown threshold
//! the subspace `K_j` is invariant under `A`; the iteration stops there and
//! records `beta_{j+1} = 0`.

use thiserror::Error;

use crate::linalg::{axpy, dot, norm, DenseMatrix, LinearOperator, TridiagonalMatrix};

/// Relative breakdown threshold, scaled by the largest `|A v_j|` seen.
pub const BREAKDOWN_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LanczosError {
    #[error("zero start vector")]
    ZeroStartVector,
    #[error("subspace dimension {m} outside 1..={dim}")]
    InvalidDimension { m: usize, dim: usize },
    #[error("start vector has length {found}, operator dimension is {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// How small `beta_{j+1}` must be to count as breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BreakdownTol {
    /// `BREAKDOWN_RTOL`-style threshold relative to `max_j |A v_j|`.
    Relative(f64),
    Absolute(f64),
}

impl Default for BreakdownTol {
    fn default() -> Self {
        BreakdownTol::Relative(BREAKDOWN_RTOL)
    }
}

#[derive(Debug, Clone)]
pub struct LanczosBasis {
    /// Orthonormal columns `v_1 .. v_{m'}`.
    pub vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// `betas[j-1] = beta_{j+1}`; the last entry is the coefficient that
    /// would lead out of the subspace and is exactly `0.0` on breakdown.
    pub betas: Vec<f64>,
    pub b_norm: f64,
    pub m_requested: usize,
    pub breakdown: bool,
}

impl LanczosBasis {
    pub fn m_effective(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Projected operator `V^T A V`.
    pub fn tridiagonal(&self) -> TridiagonalMatrix {
        let m = self.m_effective();
        TridiagonalMatrix::new(self.alphas.clone(), self.betas[..m - 1].to_vec())
            .expect("lanczos coefficients have consistent lengths")
    }

    /// Projected start vector `V^T b = |b| e_1`.
    pub fn projected_start(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.m_effective()];
        e[0] = self.b_norm;
        e
    }

    /// `V z`
    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.m_effective());
        let mut out = vec![0.0; self.dim()];
        for (v, &c) in self.vectors.iter().zip(z) {
            axpy(c, v, &mut out);
        }
        out
    }

    /// `V^T x`
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.vectors.iter().map(|v| dot(v, x)).collect()
    }

    /// `V` as a dense `d x m'` matrix.
    pub fn basis_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.dim(), self.m_effective(), |i, j| self.vectors[j][i])
    }

    /// Geometric mean of the recorded `beta_{j+1}` (zero after breakdown).
    pub fn rho(&self) -> f64 {
        crate::spectral::rho_from_betas(&self.betas, self.m_effective())
    }
}

/// Runs up to `m` Lanczos steps on `(a, b)` with the default breakdown rule.
pub fn lanczos(a: &dyn LinearOperator, b: &[f64], m: usize) -> Result<LanczosBasis, LanczosError> {
    lanczos_with_tol(a, b, m, BreakdownTol::default())
}

pub fn lanczos_with_tol(
    a: &dyn LinearOperator,
    b: &[f64],
    m: usize,
    tol: BreakdownTol,
) -> Result<LanczosBasis, LanczosError> {
    let d = a.dim();
    if b.len() != d {
        return Err(LanczosError::DimensionMismatch { expected: d, found: b.len() });
    }
    if m == 0 || m > d {
        return Err(LanczosError::InvalidDimension { m, dim: d });
    }
    let b_norm = norm(b);
    if b_norm == 0.0 || !b_norm.is_finite() {
        return Err(LanczosError::ZeroStartVector);
    }

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::<f64>::with_capacity(m);
    let mut breakdown = false;
    let mut scale = 0.0_f64;

    let mut v: Vec<f64> = b.iter().map(|x| x / b_norm).collect();
    let mut w = vec![0.0; d];
    for j in 0..m {
        a.apply_into(&v, &mut w);
        scale = scale.max(norm(&w));
        if let (Some(prev), Some(&beta)) = (vectors.last(), betas.last()) {
            axpy(-beta, prev, &mut w);
        }
        let alpha = dot(&v, &w);
        axpy(-alpha, &v, &mut w);
        vectors.push(v);
        alphas.push(alpha);
        for _ in 0..2 {
            for q in &vectors {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let beta = norm(&w);
        let threshold = match tol {
            BreakdownTol::Relative(r) => r * scale,
            BreakdownTol::Absolute(t) => t,
        };
        if beta <= threshold {
            betas.push(0.0);
            breakdown = true;
            break;
        }
        betas.push(beta);
        if j + 1 == m {
            break;
        }
        v = w.iter().map(|x| x / beta).collect();
    }

    Ok(LanczosBasis { vectors, alphas, betas, b_norm, m_requested: m, breakdown })
}

/// Dimension `r_0` of the maximal Krylov subspace: the first `j` with
/// `beta_{j+1} <= tol`.
pub fn krylov_dimension(a: &dyn LinearOperator, b: &[f64], tol: f64) -> Result<usize, LanczosError> {
    let basis = lanczos_with_tol(a, b, a.dim(), BreakdownTol::Absolute(tol))?;
    Ok(basis.m_effective())
}
