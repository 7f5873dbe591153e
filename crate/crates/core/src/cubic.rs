//! Cubic-regularized quadratic model `g^T s + 1/2 s^T H s + M/6 |s|^3`.
//!
//! For positive semidefinite `H` the minimizer is `s(l) = -(H + l I)^{-1} g`
//! at the unique root `l*` of
//!
//! ```text
//! phi(l) = l^2 - (M^2 / 4) |(H + l I)^{-1} g|^2,
//! phi'(l) = 2 l + (M^2 / 2) s^T (H + l I)^{-1} s.
//! ```
//!
//! The root is located with Newton's method kept inside a sign-changing
//! bracket, falling back to bisection when a Newton step leaves the bracket
//! or stalls. Each evaluation solves one shifted system with the backend
//! matching the Hessian representation: Cholesky for dense, `LDL^T` (Thomas)
//! for tridiagonal, conjugate gradient for a matrix-free operator.

use thiserror::Error;

use crate::linalg::{
    cg_solve, dot, norm, Cholesky, DenseMatrix, LinalgError, LinearOperator, TridiagonalLdl,
    TridiagonalMatrix,
};

#[derive(Debug, Error, Clone)]
pub enum CubicError {
    #[error("invalid cubic model: {0}")]
    InvalidModel(String),
    #[error("cubic subproblem not converged after {} iterations (residual {:e})", .best.newton_iters, .best.residual)]
    NotConverged { best: CubicSolution },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Hessian representation; picks the linear-solve backend.
#[derive(Clone, Copy)]
pub enum ModelHessian<'a> {
    Dense(&'a DenseMatrix),
    Tridiagonal(&'a TridiagonalMatrix),
    Operator(&'a dyn LinearOperator),
}

impl ModelHessian<'_> {
    pub fn dim(&self) -> usize {
        match self {
            ModelHessian::Dense(h) => h.rows(),
            ModelHessian::Tridiagonal(t) => t.dim(),
            ModelHessian::Operator(op) => op.dim(),
        }
    }

    pub fn quadratic_form(&self, s: &[f64]) -> f64 {
        match self {
            ModelHessian::Dense(h) => h.quadratic_form(s),
            ModelHessian::Tridiagonal(t) => t.quadratic_form(s),
            ModelHessian::Operator(op) => dot(s, &op.apply(s)),
        }
    }

    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        match self {
            ModelHessian::Dense(h) => h.apply(s),
            ModelHessian::Tridiagonal(t) => t.apply(s),
            ModelHessian::Operator(op) => op.apply(s),
        }
    }
}

impl std::fmt::Debug for ModelHessian<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self {
            ModelHessian::Dense(_) => "Dense",
            ModelHessian::Tridiagonal(_) => "Tridiagonal",
            ModelHessian::Operator(_) => "Operator",
        };
        write!(f, "ModelHessian::{kind}(dim = {})", self.dim())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CubicModel<'a> {
    pub g: &'a [f64],
    pub hessian: ModelHessian<'a>,
    pub m: f64,
}

impl<'a> CubicModel<'a> {
    pub fn new(g: &'a [f64], hessian: ModelHessian<'a>, m: f64) -> Result<Self, CubicError> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(CubicError::InvalidModel(format!("regularization M = {m} must be positive")));
        }
        if hessian.dim() != g.len() {
            return Err(CubicError::InvalidModel(format!(
                "gradient length {} does not match Hessian dimension {}",
                g.len(),
                hessian.dim()
            )));
        }
        Ok(Self { g, hessian, m })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// `g^T s + 1/2 s^T H s + M/6 |s|^3`
    pub fn value(&self, s: &[f64]) -> f64 {
        model_value(self, s)
    }
}

pub fn model_value(model: &CubicModel<'_>, s: &[f64]) -> f64 {
    model_terms(model, s).total()
}

/// The three terms of the model at `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelTerms {
    /// `g^T s`
    pub linear: f64,
    /// `1/2 s^T H s`
    pub quadratic: f64,
    /// `M/6 |s|^3`
    pub cubic: f64,
}

impl ModelTerms {
    pub fn total(&self) -> f64 {
        self.linear + self.quadratic + self.cubic
    }
}

pub fn model_terms(model: &CubicModel<'_>, s: &[f64]) -> ModelTerms {
    assert_eq!(s.len(), model.dim(), "step dimension does not match model");
    let ns = norm(s);
    ModelTerms {
        linear: dot(model.g, s),
        quadratic: 0.5 * model.hessian.quadratic_form(s),
        cubic: model.m / 6.0 * ns * ns * ns,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSolution {
    pub s: Vec<f64>,
    pub lambda_star: f64,
    pub newton_iters: usize,
    /// `|lambda* - (M/2)|s||` at the returned point.
    pub residual: f64,
}

impl CubicSolution {
    pub fn step_norm(&self) -> f64 {
        norm(&self.s)
    }
}

#[derive(Debug, Clone)]
pub struct CubicOptions {
    /// Relative stopping tolerance on `|l - (M/2)|s(l)||`.
    pub tol: f64,
    pub max_iters: usize,
    /// CG iteration cap per shifted solve; defaults to `max(10 d, 100)`.
    pub cg_max_iter: Option<usize>,
    /// Starting multiplier, e.g. the root from a previous line-search trial.
    pub lambda_hint: Option<f64>,
}

impl Default for CubicOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 300, cg_max_iter: None, lambda_hint: None }
    }
}

/// Smallest multiplier ever evaluated.
const LAMBDA_FLOOR: f64 = 1e-12;

struct Evaluation {
    s: Vec<f64>,
    /// `s^T (H + l I)^{-1} s`
    inv_form: f64,
}

fn evaluate(model: &CubicModel<'_>, lambda: f64, opts: &CubicOptions) -> Result<Evaluation, LinalgError> {
    let g = model.g;
    match model.hessian {
        ModelHessian::Dense(h) => {
            let chol = Cholesky::factor_shifted(h, lambda)?;
            let mut s = chol.solve(g)?;
            s.iter_mut().for_each(|v| *v = -*v);
            let inv_form = chol.inverse_quadratic_form(&s);
            Ok(Evaluation { s, inv_form })
        }
        ModelHessian::Tridiagonal(t) => {
            let ldl = TridiagonalLdl::factor(t, lambda)?;
            let mut s = ldl.solve(g)?;
            s.iter_mut().for_each(|v| *v = -*v);
            let inv_form = ldl.inverse_quadratic_form(&s);
            Ok(Evaluation { s, inv_form })
        }
        ModelHessian::Operator(op) => {
            let d = op.dim();
            let cap = opts.cg_max_iter.unwrap_or((10 * d).max(100));
            let cg_tol = 1e-2 * opts.tol;
            let first = cg_solve(op, lambda, g, cg_tol, cap)?;
            if !first.converged {
                log::debug!(
                    "cg stopped at relative residual {:e} for shift {lambda:e}",
                    first.relative_residual
                );
            }
            let mut s = first.solution;
            s.iter_mut().for_each(|v| *v = -*v);
            let second = cg_solve(op, lambda, &s, cg_tol, cap)?;
            let inv_form = dot(&s, &second.solution);
            Ok(Evaluation { s, inv_form })
        }
    }
}

/// Minimizes the cubic model; see the module docs for the method.
pub fn solve_cubic(model: &CubicModel<'_>, opts: &CubicOptions) -> Result<CubicSolution, CubicError> {
    let d = model.dim();
    let g_norm = norm(model.g);
    if g_norm == 0.0 {
        return Ok(CubicSolution { s: vec![0.0; d], lambda_star: 0.0, newton_iters: 0, residual: 0.0 });
    }
    let half_m = 0.5 * model.m;
    let phi = |lambda: f64, ev: &Evaluation| {
        let ns = norm(&ev.s);
        (lambda - half_m * ns) * (lambda + half_m * ns)
    };
    let dphi = |lambda: f64, ev: &Evaluation| 2.0 * lambda + 2.0 * half_m * half_m * ev.inv_form;
    let gap = |lambda: f64, ev: &Evaluation| (lambda - half_m * norm(&ev.s)).abs();
    let converged = |lambda: f64, ev: &Evaluation| gap(lambda, ev) <= opts.tol * lambda.max(1.0);

    // For PSD H, |s(l)| <= |g| / l, so phi(sqrt(M|g|/2)) >= 0. Doubling
    // covers Hessians with slightly negative rounding-level eigenvalues.
    let mut lo = 0.0_f64;
    let mut hi = (half_m * g_norm).sqrt().max(LAMBDA_FLOOR);
    let mut iters = 0usize;
    let upper = loop {
        iters += 1;
        match evaluate(model, hi, opts) {
            Ok(ev) if phi(hi, &ev) >= 0.0 => {
                if converged(hi, &ev) {
                    return Ok(finish(hi, ev, iters, half_m));
                }
                break (hi, ev);
            }
            Ok(_) | Err(LinalgError::NotPositiveDefinite { .. }) | Err(LinalgError::NumericalBreakdown { .. }) => {
                lo = hi;
                hi *= 2.0;
            }
            Err(e) => return Err(e.into()),
        }
        if iters > 200 || !hi.is_finite() {
            return Err(CubicError::InvalidModel("no upper bracket for the multiplier; is H bounded below?".into()));
        }
    };
    let mut best = Some(upper);

    let mut lambda = match opts.lambda_hint {
        Some(h) if h > lo && h < hi => h,
        _ => hi,
    };
    let mut last_step = hi - lo;
    let mut prev_step = last_step;
    let mut current: Option<Evaluation> = None;
    if lambda == hi {
        current = best.take().map(|(_, ev)| ev);
    }

    while iters < opts.max_iters {
        let ev = match current.take() {
            Some(ev) => ev,
            None => {
                iters += 1;
                match evaluate(model, lambda, opts) {
                    Ok(ev) => ev,
                    Err(LinalgError::NotPositiveDefinite { .. }) | Err(LinalgError::NumericalBreakdown { .. }) => {
                        // Below the admissible range: raise the floor and bisect.
                        lo = lambda;
                        lambda = 0.5 * (lo + hi);
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        };
        if converged(lambda, &ev) {
            return Ok(finish(lambda, ev, iters, half_m));
        }
        let value = phi(lambda, &ev);
        if value < 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        if best.as_ref().is_none_or(|(bl, bev)| gap(lambda, &ev) < gap(*bl, bev)) {
            best = Some((lambda, ev_clone(&ev)));
        }
        let slope = dphi(lambda, &ev);
        let newton = lambda - value / slope;
        let newton_ok = slope > 0.0 && newton > lo && newton < hi && (value / slope).abs() * 2.0 <= prev_step.abs();
        prev_step = last_step;
        let next = if newton_ok {
            newton
        } else {
            (0.5 * (lo + hi)).max(LAMBDA_FLOOR)
        };
        last_step = next - lambda;
        if next == lambda || hi - lo <= f64::EPSILON * hi {
            break;
        }
        lambda = next;
    }

    let (lambda, ev) = best.expect("at least one evaluation succeeded");
    let sol = finish(lambda, ev, iters, half_m);
    if sol.residual <= opts.tol * lambda.max(1.0) {
        Ok(sol)
    } else {
        Err(CubicError::NotConverged { best: sol })
    }
}

fn ev_clone(ev: &Evaluation) -> Evaluation {
    Evaluation { s: ev.s.clone(), inv_form: ev.inv_form }
}

fn finish(lambda: f64, ev: Evaluation, iters: usize, half_m: f64) -> CubicSolution {
    let residual = (lambda - half_m * norm(&ev.s)).abs();
    CubicSolution { s: ev.s, lambda_star: lambda, newton_iters: iters, residual }
}
