//! Objective functions: value, gradient, Hessian-vector products and
//! coordinate-block second-order information.
//!
//! An objective owns its current point. The solvers move it with
//! [`Objective::take_step`] / [`Objective::take_coordinate_step`], which lets
//! the logistic loss keep the margins `a_j^T x` cached between iterations.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{axpy, dot, norm, norm_inf, DenseMatrix, LinearOperator, SparseMatrixCsr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("invalid coordinate set: {0}")]
    InvalidCoordinates(String),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
}

pub trait Objective {
    fn dim(&self) -> usize;

    fn point(&self) -> &[f64];

    /// Moves the evaluation point, rebuilding any cached state.
    fn set_point(&mut self, x: &[f64]);

    fn value(&self) -> f64;

    fn gradient(&self) -> Vec<f64>;

    /// Hessian at the current point, accessed through products.
    fn hessian_operator(&self) -> Box<dyn LinearOperator + '_>;

    fn dense_hessian(&self) -> DenseMatrix {
        DenseMatrix::from_operator(&*self.hessian_operator())
    }

    /// Gradient entries and Hessian block on `coords`.
    fn subspace_parts(&self, coords: &[usize]) -> Result<(Vec<f64>, DenseMatrix), ObjectiveError> {
        validate_coords(coords, self.dim())?;
        let g = self.gradient();
        let op = self.hessian_operator();
        let d = self.dim();
        let mut h = DenseMatrix::zeros(coords.len(), coords.len());
        let mut e = vec![0.0; d];
        for (j, &c) in coords.iter().enumerate() {
            e[c] = 1.0;
            let col = op.apply(&e);
            e[c] = 0.0;
            for (i, &r) in coords.iter().enumerate() {
                h.set(i, j, col[r]);
            }
        }
        Ok((coords.iter().map(|&c| g[c]).collect(), h))
    }

    /// `f(x + step) - f(x)`, evaluated without moving the point.
    fn step_change(&self, step: &[f64]) -> f64;

    /// `f(x + step) - f(x)` where `step` is `z` placed on `coords`.
    fn coordinate_step_change(&self, coords: &[usize], z: &[f64]) -> f64 {
        self.step_change(&scatter(self.dim(), coords, z))
    }

    fn take_step(&mut self, step: &[f64]) {
        let mut x = self.point().to_vec();
        axpy(1.0, step, &mut x);
        self.set_point(&x);
    }

    fn take_coordinate_step(&mut self, coords: &[usize], z: &[f64]) {
        let step = scatter(self.dim(), coords, z);
        self.take_step(&step);
    }

    /// Lipschitz constant of the Hessian, when known.
    fn lipschitz_hessian(&self) -> Option<f64> {
        None
    }

    fn strong_convexity(&self) -> Option<f64> {
        None
    }

    /// Exact optimal value, when known in closed form.
    fn optimal_value(&self) -> Option<f64> {
        None
    }
}

fn scatter(d: usize, coords: &[usize], z: &[f64]) -> Vec<f64> {
    let mut step = vec![0.0; d];
    for (&c, &v) in coords.iter().zip(z) {
        step[c] = v;
    }
    step
}

pub fn validate_coords(coords: &[usize], dim: usize) -> Result<(), ObjectiveError> {
    let mut seen = vec![false; dim];
    for &c in coords {
        if c >= dim {
            return Err(ObjectiveError::InvalidCoordinates(format!("index {c} out of range for dimension {dim}")));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(ObjectiveError::InvalidCoordinates(format!("duplicate index {c}")));
        }
    }
    Ok(())
}

/// Sparse features with binary `{0, 1}` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: SparseMatrixCsr,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: SparseMatrixCsr, labels: Vec<f64>) -> Result<Self, ObjectiveError> {
        if labels.len() != features.rows() {
            return Err(ObjectiveError::InvalidData(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if labels.iter().any(|&b| b != 0.0 && b != 1.0) {
            return Err(ObjectiveError::InvalidData("labels must be 0 or 1".into()));
        }
        if features.rows() == 0 {
            return Err(ObjectiveError::InvalidData("dataset has no samples".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &SparseMatrixCsr {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }
}

/// Maps a raw label to `{0, 1}`: `+1` becomes 1, everything else 0.
pub fn normalize_label(raw: f64) -> f64 {
    if raw == 1.0 {
        1.0
    } else {
        0.0
    }
}

/// `log(1 + e^u)` without overflow.
#[inline]
pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `softplus(u + e) - softplus(u)`, accurate for small `e`.
#[inline]
fn softplus_change(u: f64, e: f64) -> f64 {
    if e.abs() <= 1.0 {
        (e.exp_m1() * sigmoid(u)).ln_1p()
    } else {
        softplus(u + e) - softplus(u)
    }
}

/// Per-sample loss `(1 - b) t + log(1 + e^{-t})`, which equals
/// `softplus(t)` for `b = 0` and `softplus(-t)` for `b = 1`.
#[inline]
fn sample_loss(t: f64, b: f64) -> f64 {
    if b == 1.0 {
        softplus(-t)
    } else {
        softplus(t)
    }
}

#[inline]
fn sample_loss_change(t: f64, b: f64, delta: f64) -> f64 {
    if b == 1.0 {
        softplus_change(-t, -delta)
    } else {
        softplus_change(t, delta)
    }
}

/// Accepted coordinate steps between full rebuilds of the margin cache.
pub const CACHE_REBUILD_INTERVAL: usize = 100;

/// Average logistic loss `(1/n) sum_j (1 - b_j) a_j^T x + log(1 + exp(-a_j^T x))`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    data: Arc<Dataset>,
    columns: SparseMatrixCsr,
    x: Vec<f64>,
    margins: Vec<f64>,
    steps_since_rebuild: usize,
}

impl LogisticObjective {
    pub fn new(data: Arc<Dataset>) -> Self {
        let columns = data.features().transpose();
        let d = data.n_features();
        let n = data.n_samples();
        Self { data, columns, x: vec![0.0; d], margins: vec![0.0; n], steps_since_rebuild: 0 }
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.data
    }

    /// Cached margins `a_j^T x`.
    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    /// `|cache - A x|_inf`
    pub fn cache_drift(&self) -> f64 {
        let fresh = self.data.features().spmv(&self.x).expect("dimension checked at construction");
        fresh.iter().zip(&self.margins).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    fn rebuild_cache(&mut self) {
        self.margins = self.data.features().spmv(&self.x).expect("dimension checked at construction");
        self.steps_since_rebuild = 0;
    }

    fn n(&self) -> f64 {
        self.data.n_samples() as f64
    }

    fn curvature_weights(&self) -> Vec<f64> {
        self.margins
            .iter()
            .map(|&t| {
                let s = sigmoid(t);
                s * (1.0 - s)
            })
            .collect()
    }

    /// Sparse change of the margins caused by `z` on `coords`.
    fn margin_delta(&self, coords: &[usize], z: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let mut delta = vec![0.0; self.data.n_samples()];
        let mut touched = Vec::new();
        let mut mark = vec![false; self.data.n_samples()];
        for (&c, &zc) in coords.iter().zip(z) {
            for (row, v) in self.columns.row(c) {
                if !mark[row] {
                    mark[row] = true;
                    touched.push(row);
                }
                delta[row] += v * zc;
            }
        }
        let values = touched.iter().map(|&r| delta[r]).collect();
        (touched, values)
    }

    /// Gradient block and Hessian block on `coords`, touching only those
    /// columns of the data. Entries of each sample row are grouped so the
    /// block costs `sum_j k_j^2` for `k_j` selected nonzeros in row `j`.
    fn block_parts(&self, coords: &[usize]) -> (Vec<f64>, DenseMatrix) {
        let n = self.n();
        let labels = self.data.labels();
        let weights = self.curvature_weights();
        let mut g = vec![0.0; coords.len()];
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (local, &c) in coords.iter().enumerate() {
            for (row, v) in self.columns.row(c) {
                g[local] += v * (sigmoid(self.margins[row]) - labels[row]);
                entries.push((row, local, v));
            }
        }
        g.iter_mut().for_each(|v| *v /= n);
        entries.sort_unstable_by_key(|&(row, local, _)| (row, local));
        let mut h = DenseMatrix::zeros(coords.len(), coords.len());
        for group in entries.chunk_by(|a, b| a.0 == b.0) {
            let w = weights[group[0].0] / n;
            if w == 0.0 {
                continue;
            }
            for (i, &(_, li, vi)) in group.iter().enumerate() {
                let wv = w * vi;
                h.add_to(li, li, wv * vi);
                for &(_, lj, vj) in &group[i + 1..] {
                    h.add_to(li, lj, wv * vj);
                    h.add_to(lj, li, wv * vj);
                }
            }
        }
        (g, h)
    }
}

struct LogisticHessian<'a> {
    features: &'a SparseMatrixCsr,
    weights: Vec<f64>,
}

impl LinearOperator for LogisticHessian<'_> {
    fn dim(&self) -> usize {
        self.features.cols()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.features.rows() as f64;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, w) in self.weights.iter().enumerate() {
            let u = self.features.row_dot(r, v) * w / n;
            if u != 0.0 {
                for (c, a) in self.features.row(r) {
                    out[c] += a * u;
                }
            }
        }
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.data.n_features()
    }

    fn point(&self) -> &[f64] {
        &self.x
    }

    fn set_point(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "point has wrong dimension");
        self.x = x.to_vec();
        self.rebuild_cache();
    }

    fn value(&self) -> f64 {
        let labels = self.data.labels();
        self.margins.iter().zip(labels).map(|(&t, &b)| sample_loss(t, b)).sum::<f64>() / self.n()
    }

    fn gradient(&self) -> Vec<f64> {
        let labels = self.data.labels();
        let n = self.n();
        let residual: Vec<f64> =
            self.margins.iter().zip(labels).map(|(&t, &b)| (sigmoid(t) - b) / n).collect();
        self.data.features().spmv_transpose(&residual).expect("dimension checked at construction")
    }

    fn hessian_operator(&self) -> Box<dyn LinearOperator + '_> {
        Box::new(LogisticHessian { features: self.data.features(), weights: self.curvature_weights() })
    }

    fn dense_hessian(&self) -> DenseMatrix {
        let all: Vec<usize> = (0..self.dim()).collect();
        self.block_parts(&all).1
    }

    fn subspace_parts(&self, coords: &[usize]) -> Result<(Vec<f64>, DenseMatrix), ObjectiveError> {
        validate_coords(coords, self.dim())?;
        Ok(self.block_parts(coords))
    }

    fn step_change(&self, step: &[f64]) -> f64 {
        let delta = self.data.features().spmv(step).expect("step has wrong dimension");
        let labels = self.data.labels();
        let total: f64 = self
            .margins
            .iter()
            .zip(&delta)
            .zip(labels)
            .map(|((&t, &dt), &b)| if dt == 0.0 { 0.0 } else { sample_loss_change(t, b, dt) })
            .sum();
        total / self.n()
    }

    fn coordinate_step_change(&self, coords: &[usize], z: &[f64]) -> f64 {
        let (rows, delta) = self.margin_delta(coords, z);
        let labels = self.data.labels();
        let total: f64 =
            rows.iter().zip(&delta).map(|(&r, &dt)| sample_loss_change(self.margins[r], labels[r], dt)).sum();
        total / self.n()
    }

    fn take_step(&mut self, step: &[f64]) {
        axpy(1.0, step, &mut self.x);
        self.rebuild_cache();
    }

    fn take_coordinate_step(&mut self, coords: &[usize], z: &[f64]) {
        let (rows, delta) = self.margin_delta(coords, z);
        for (&c, &zc) in coords.iter().zip(z) {
            self.x[c] += zc;
        }
        for (&r, &dt) in rows.iter().zip(&delta) {
            self.margins[r] += dt;
        }
        self.steps_since_rebuild += 1;
        if self.steps_since_rebuild >= CACHE_REBUILD_INTERVAL {
            self.rebuild_cache();
        }
    }
}

/// Eigenvalue layout for [`make_quadratic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Spectrum {
    Explicit { eigenvalues: Vec<f64> },
    /// `rank` distinct nonzero eigenvalues drawn from `(0, l1]`, rest zero.
    LowRank { dim: usize, rank: usize, l1: f64 },
    /// Half of the eigenvalues in `[0, delta]`, half in `[l1 - delta, l1]`.
    TwoCluster { dim: usize, delta: f64, l1: f64 },
    /// Eigenvalues in `[lo, hi]`, both endpoints included.
    Interval { dim: usize, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    pub spectrum: Spectrum,
    /// Apply a seeded orthogonal change of basis (product of reflections).
    #[serde(default = "default_true")]
    pub rotate: bool,
    #[serde(default)]
    pub f_star: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

const ROTATION_REFLECTIONS: usize = 8;

/// `f(x) = 1/2 (x - x*)^T Q^T diag(eigenvalues) Q (x - x*) + f*`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    eigenvalues: Vec<f64>,
    reflections: Vec<Vec<f64>>,
    x_star: Vec<f64>,
    f_star: f64,
    x: Vec<f64>,
}

pub fn make_quadratic(spec: &QuadraticSpec) -> Result<QuadraticObjective, ObjectiveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let eigenvalues = match &spec.spectrum {
        Spectrum::Explicit { eigenvalues } => eigenvalues.clone(),
        &Spectrum::LowRank { dim, rank, l1 } => {
            if rank > dim || !(l1 > 0.0) {
                return Err(ObjectiveError::InvalidSpectrum(format!("rank {rank} in dimension {dim}, l1 = {l1}")));
            }
            let mut eig = vec![0.0; dim];
            for (i, v) in eig.iter_mut().take(rank).enumerate() {
                // Stratified draws keep the nonzero eigenvalues distinct.
                let lo = l1 * i as f64 / rank as f64;
                let hi = l1 * (i + 1) as f64 / rank as f64;
                *v = if i + 1 == rank { l1 } else { rng.gen_range(lo.max(f64::MIN_POSITIVE)..hi) };
            }
            eig
        }
        &Spectrum::TwoCluster { dim, delta, l1 } => {
            if !(l1 > delta && delta > 0.0) {
                return Err(ObjectiveError::InvalidSpectrum(format!("need l1 > delta > 0, got {l1}, {delta}")));
            }
            (0..dim)
                .map(|i| if i % 2 == 0 { rng.gen_range(0.0..=delta) } else { rng.gen_range(l1 - delta..=l1) })
                .collect()
        }
        &Spectrum::Interval { dim, lo, hi } => {
            if !(hi >= lo) || dim == 0 {
                return Err(ObjectiveError::InvalidSpectrum(format!("empty interval [{lo}, {hi}]")));
            }
            (0..dim)
                .map(|i| match i {
                    0 => lo,
                    1 => hi,
                    _ => rng.gen_range(lo..=hi),
                })
                .collect()
        }
    };
    if eigenvalues.is_empty() {
        return Err(ObjectiveError::InvalidSpectrum("empty spectrum".into()));
    }
    if let Some(bad) = eigenvalues.iter().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(ObjectiveError::InvalidSpectrum(format!("eigenvalue {bad} is negative or not finite")));
    }
    let d = eigenvalues.len();
    let reflections = if spec.rotate {
        (0..ROTATION_REFLECTIONS.min(d))
            .map(|_| {
                let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&u);
                u.iter_mut().for_each(|v| *v /= n);
                u
            })
            .collect()
    } else {
        Vec::new()
    };
    let x_star = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    Ok(QuadraticObjective { eigenvalues, reflections, x_star, f_star: spec.f_star, x: vec![0.0; d] })
}

impl QuadraticObjective {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// `Q v`
    pub fn to_eigenbasis(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for u in &self.reflections {
            let c = 2.0 * dot(u, &out);
            axpy(-c, u, &mut out);
        }
        out
    }

    /// `Q^T v`
    pub fn from_eigenbasis(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for u in self.reflections.iter().rev() {
            let c = 2.0 * dot(u, &out);
            axpy(-c, u, &mut out);
        }
        out
    }

    fn hessian_times(&self, v: &[f64]) -> Vec<f64> {
        let mut w = self.to_eigenbasis(v);
        w.iter_mut().zip(&self.eigenvalues).for_each(|(wi, l)| *wi *= l);
        self.from_eigenbasis(&w)
    }

    fn offset(&self) -> Vec<f64> {
        self.x.iter().zip(&self.x_star).map(|(a, b)| a - b).collect()
    }
}

struct QuadraticHessian<'a>(&'a QuadraticObjective);

impl LinearOperator for QuadraticHessian<'_> {
    fn dim(&self) -> usize {
        self.0.eigenvalues.len()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0.hessian_times(x));
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn point(&self) -> &[f64] {
        &self.x
    }

    fn set_point(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "point has wrong dimension");
        self.x = x.to_vec();
    }

    fn value(&self) -> f64 {
        let p = self.to_eigenbasis(&self.offset());
        0.5 * p.iter().zip(&self.eigenvalues).map(|(v, l)| l * v * v).sum::<f64>() + self.f_star
    }

    fn gradient(&self) -> Vec<f64> {
        self.hessian_times(&self.offset())
    }

    fn hessian_operator(&self) -> Box<dyn LinearOperator + '_> {
        Box::new(QuadraticHessian(self))
    }

    fn step_change(&self, step: &[f64]) -> f64 {
        let p = self.to_eigenbasis(&self.offset());
        let q = self.to_eigenbasis(step);
        p.iter().zip(&q).zip(&self.eigenvalues).map(|((pi, qi), l)| l * qi * (pi + 0.5 * qi)).sum()
    }

    fn lipschitz_hessian(&self) -> Option<f64> {
        Some(0.0)
    }

    fn strong_convexity(&self) -> Option<f64> {
        let mu = self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        (mu > 0.0).then_some(mu)
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(self.f_star)
    }
}

/// Largest relative error of the gradient against central differences of
/// the value and of the Hessian operator against central differences of the
/// gradient, over `probes` random directions at the current point.
pub fn derivative_check(obj: &mut dyn Objective, probes: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = obj.point().to_vec();
    let d = obj.dim();
    let g = obj.gradient();
    let hess = obj.dense_hessian();
    let (mut worst_g, mut worst_h) = (0.0_f64, 0.0_f64);
    for _ in 0..probes {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let nv = norm(&v);
        let v: Vec<f64> = v.iter().map(|a| a / nv).collect();
        let h = 1e-5 * (1.0 + norm(&x));
        let shifted = |sign: f64| -> Vec<f64> { x.iter().zip(&v).map(|(a, b)| a + sign * h * b).collect() };
        obj.set_point(&shifted(1.0));
        let (fp, gp) = (obj.value(), obj.gradient());
        obj.set_point(&shifted(-1.0));
        let (fm, gm) = (obj.value(), obj.gradient());
        obj.set_point(&x);
        let fd = (fp - fm) / (2.0 * h);
        let an = dot(&g, &v);
        worst_g = worst_g.max((fd - an).abs() / an.abs().max(norm(&g)).max(1e-12));
        let hv = hess.matvec(&v).expect("dimension");
        let hv_op = obj.hessian_operator().apply(&v);
        let fd_h: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let scale = norm(&hv_op).max(1e-12);
        let err_op = norm(&hv_op.iter().zip(&fd_h).map(|(a, b)| a - b).collect::<Vec<_>>()) / scale;
        let err_dense = norm_inf(&hv.iter().zip(&hv_op).map(|(a, b)| a - b).collect::<Vec<_>>()) / scale;
        worst_h = worst_h.max(err_op).max(err_dense);
    }
    (worst_g, worst_h)
}
