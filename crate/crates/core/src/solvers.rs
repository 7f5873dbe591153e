//! Cubic regularized Newton (CRN), stochastic subspace cubic Newton (SSCN)
//! and Krylov CRN, sharing one backtracking line search on the cubic
//! regularization parameter `M`.
//!
//! Each outer iteration tries `M = R, R / beta, R / beta^2, ...` and accepts
//! the first step with
//!
//! ```text
//! f(x + s) <= f(x) + g^T s + 1/2 s^T H s + M/6 |s|^3
//! ```
//!
//! then seeds the next iteration with `R = beta * M`. The subspace methods
//! evaluate the right-hand side from projected quantities only. The decrease
//! `f(x + s) - f(x)` comes from [`Objective::step_change`], so the tracked
//! objective value is `f(x_0)` plus the accepted decreases.

use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cubic::{model_terms, solve_cubic, CubicError, CubicModel, CubicOptions, ModelHessian, ModelTerms};
use crate::lanczos::{lanczos, LanczosError};
use crate::linalg::norm;
use crate::objectives::{Objective, ObjectiveError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Crn,
    Sscn,
    KrylovCrn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Crn => "crn",
            Method::Sscn => "sscn",
            Method::KrylovCrn => "krylov_crn",
        }
    }

    pub fn uses_subspace(self) -> bool {
        self != Method::Crn
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "crn" => Ok(Method::Crn),
            "sscn" => Ok(Method::Sscn),
            "krylov_crn" | "krylov" => Ok(Method::KrylovCrn),
            other => Err(format!("unknown method {other:?} (expected crn, sscn or krylov_crn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    /// Subspace dimension; ignored by CRN.
    pub m: usize,
    #[serde(rename = "R0", alias = "r0")]
    pub r0: f64,
    pub ls_beta: f64,
    pub max_iters: usize,
    pub time_budget_s: Option<f64>,
    pub grad_tol: f64,
    pub seed: u64,
    pub max_ls_trials: usize,
    /// Floor on the line-search seed `R`. Without it a long run of easy
    /// steps can drive `R` so low that `max_ls_trials` doublings no longer
    /// reach a workable `M`.
    #[serde(rename = "R_min", alias = "r_min")]
    pub r_min: f64,
    /// With the line search off, every iteration uses `M = R0` and takes the
    /// step unconditionally.
    pub line_search: bool,
    /// CRN factors a dense Hessian up to this dimension and uses CG above it.
    pub dense_threshold: usize,
    pub cubic_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::KrylovCrn,
            m: 10,
            r0: 1.0,
            ls_beta: 0.5,
            max_iters: 1000,
            time_budget_s: None,
            grad_tol: 1e-9,
            seed: 0,
            max_ls_trials: 60,
            r_min: 1e-16,
            line_search: true,
            dense_threshold: 500,
            cubic_tol: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn new(method: Method, m: usize) -> Self {
        Self { method, m, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidConfig(msg));
        if !(self.ls_beta > 0.0 && self.ls_beta < 1.0) {
            return bad(format!("ls_beta must lie in (0, 1), got {}", self.ls_beta));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return bad(format!("R0 must be positive, got {}", self.r0));
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if !(self.r_min >= 0.0 && self.r_min <= self.r0) {
            return bad(format!("R_min must lie in [0, R0], got {}", self.r_min));
        }
        if self.max_ls_trials == 0 {
            return bad("max_ls_trials must be at least 1".into());
        }
        if !(self.grad_tol >= 0.0) {
            return bad(format!("grad_tol must be nonnegative, got {}", self.grad_tol));
        }
        if let Some(t) = self.time_budget_s {
            if !(t > 0.0) {
                return bad(format!("time_budget_s must be positive, got {t}"));
            }
        }
        if !(self.cubic_tol > 0.0) {
            return bad(format!("cubic_tol must be positive, got {}", self.cubic_tol));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "line search failed at iteration {k} after {trials} trials (last M = {last_m:e}, \
         decrease exceeded the model by {excess:e})"
    )]
    LineSearchFailed { k: usize, trials: usize, last_m: f64, excess: f64 },
    #[error(transparent)]
    Cubic(#[from] CubicError),
    #[error(transparent)]
    Lanczos(#[from] LanczosError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("starting point has length {found}, objective dimension is {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    /// Line-search seed `R_k`.
    pub r: f64,
    pub k: usize,
}

impl SolverState {
    pub fn new(obj: &dyn Objective, config: &SolverConfig) -> Self {
        let grad = obj.gradient();
        Self { x: obj.point().to_vec(), f: obj.value(), grad_norm: norm(&grad), grad, r: config.r0, k: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub elapsed_s: f64,
    pub f: f64,
    pub grad_norm: f64,
    /// Accepted `M` of the step leading to `x_k`; zero at `k = 0`.
    pub m_accepted: f64,
    pub ls_trials: usize,
    pub step_norm: f64,
    /// `rho^(m)(H_{k-1}, g_{k-1})`, Krylov CRN only.
    pub rho_m: Option<f64>,
    pub m_effective: Option<usize>,
}

/// What one outer iteration did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub m_accepted: f64,
    pub ls_trials: usize,
    pub step_norm: f64,
    pub rho_m: Option<f64>,
    pub m_effective: Option<usize>,
    /// Time spent on trace-only work that the method itself does not need.
    pub instrumentation: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    TimeBudget,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: SolverState,
    pub trace: Vec<TraceRecord>,
    pub stop: StopReason,
}

/// One line-search candidate built for a given `M`.
pub struct Candidate<S> {
    pub step: S,
    /// `g^T s + 1/2 s^T H s + M/6 |s|^3`
    pub model: f64,
    /// Rounding allowance added to `model` in the acceptance test.
    pub slack: f64,
    /// `f(x + s) - f(x)`
    pub decrease: f64,
    pub step_norm: f64,
}

pub struct Accepted<S> {
    pub m: f64,
    pub candidate: Candidate<S>,
    pub trials: usize,
}

/// Tries `M = r * ls_beta^{-i}` for `i = 0, 1, ...` and returns the first
/// candidate whose decrease is at most its model value.
pub fn line_search_accept<S>(
    r: f64,
    ls_beta: f64,
    max_trials: usize,
    k: usize,
    mut build: impl FnMut(f64) -> Result<Candidate<S>, SolverError>,
) -> Result<Accepted<S>, SolverError> {
    let mut m = r;
    let mut excess = f64::NAN;
    for trial in 1..=max_trials {
        let candidate = build(m)?;
        if candidate.decrease <= candidate.model + candidate.slack {
            return Ok(Accepted { m, candidate, trials: trial });
        }
        excess = candidate.decrease - candidate.model;
        log::trace!("iteration {k}: rejected M = {m:e}, excess {excess:e}");
        m /= ls_beta;
    }
    Err(SolverError::LineSearchFailed { k, trials: max_trials, last_m: m * ls_beta, excess })
}

fn search<S>(
    state: &SolverState,
    config: &SolverConfig,
    build: impl FnMut(f64) -> Result<Candidate<S>, SolverError>,
) -> Result<Accepted<S>, SolverError> {
    if config.line_search {
        line_search_accept(state.r, config.ls_beta, config.max_ls_trials, state.k, build)
    } else {
        let mut build = build;
        Ok(Accepted { m: config.r0, candidate: build(config.r0)?, trials: 1 })
    }
}

/// Relative rounding allowance of the decrease test. Near the optimum the
/// cubic term can fall below the round-off in `g^T s + 1/2 s^T H s`, and an
/// exact quadratic would then be rejected on noise alone.
pub const ACCEPT_RTOL: f64 = 1e-12;

fn acceptance_slack(terms: &ModelTerms) -> f64 {
    ACCEPT_RTOL * (terms.linear.abs() + terms.quadratic.abs())
}

fn cubic_options(config: &SolverConfig, hint: Option<f64>) -> CubicOptions {
    CubicOptions { tol: config.cubic_tol, lambda_hint: hint, ..CubicOptions::default() }
}

fn finish(state: &mut SolverState, obj: &dyn Objective, config: &SolverConfig, m: f64, decrease: f64) {
    state.x.copy_from_slice(obj.point());
    state.f += decrease;
    state.grad = obj.gradient();
    state.grad_norm = norm(&state.grad);
    state.r = if config.line_search { (config.ls_beta * m).max(config.r_min) } else { config.r0 };
    state.k += 1;
}

/// Full-dimensional cubic Newton step.
pub fn crn_step(state: &mut SolverState, obj: &mut dyn Objective, config: &SolverConfig) -> Result<StepInfo, SolverError> {
    let g = state.grad.clone();
    let mut hint = None;
    let accepted = {
        let view: &dyn Objective = obj;
        let dense = (view.dim() <= config.dense_threshold).then(|| view.dense_hessian());
        let op = if dense.is_none() { Some(view.hessian_operator()) } else { None };
        search(state, config, |m| {
            let hessian = match (&dense, &op) {
                (Some(h), _) => ModelHessian::Dense(h),
                (None, Some(op)) => ModelHessian::Operator(&**op),
                (None, None) => unreachable!(),
            };
            let model = CubicModel::new(&g, hessian, m)?;
            let sol = solve_cubic(&model, &cubic_options(config, hint))?;
            hint = Some(sol.lambda_star);
            let terms = model_terms(&model, &sol.s);
            Ok(Candidate {
                model: terms.total(),
                slack: acceptance_slack(&terms),
                decrease: view.step_change(&sol.s),
                step_norm: sol.step_norm(),
                step: sol.s,
            })
        })?
    };
    obj.take_step(&accepted.candidate.step);
    finish(state, obj, config, accepted.m, accepted.candidate.decrease);
    Ok(StepInfo {
        m_accepted: accepted.m,
        ls_trials: accepted.trials,
        step_norm: accepted.candidate.step_norm,
        rho_m: None,
        m_effective: None,
        instrumentation: Duration::ZERO,
    })
}

/// Cubic Newton step restricted to `K_m(H, g)`.
pub fn krylov_crn_step(
    state: &mut SolverState,
    obj: &mut dyn Objective,
    config: &SolverConfig,
) -> Result<StepInfo, SolverError> {
    let view: &dyn Objective = obj;
    let basis = {
        let op = view.hessian_operator();
        lanczos(&*op, &state.grad, config.m.min(view.dim()))?
    };
    let t = basis.tridiagonal();
    let gt = basis.projected_start();
    let mut hint = None;
    let accepted = search(state, config, |m| {
        let model = CubicModel::new(&gt, ModelHessian::Tridiagonal(&t), m)?;
        let sol = solve_cubic(&model, &cubic_options(config, hint))?;
        hint = Some(sol.lambda_star);
        let s = basis.lift(&sol.s);
        let terms = model_terms(&model, &sol.s);
        Ok(Candidate {
            model: terms.total(),
            slack: acceptance_slack(&terms),
            decrease: view.step_change(&s),
            step_norm: sol.step_norm(),
            step: s,
        })
    })?;
    obj.take_step(&accepted.candidate.step);
    finish(state, obj, config, accepted.m, accepted.candidate.decrease);
    Ok(StepInfo {
        m_accepted: accepted.m,
        ls_trials: accepted.trials,
        step_norm: accepted.candidate.step_norm,
        rho_m: Some(basis.rho()),
        m_effective: Some(basis.m_effective()),
        instrumentation: Duration::ZERO,
    })
}

/// Cubic Newton step on `m` coordinates sampled without replacement.
pub fn sscn_step(
    state: &mut SolverState,
    obj: &mut dyn Objective,
    config: &SolverConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepInfo, SolverError> {
    let d = obj.dim();
    let mut coords = sample(rng, d, config.m.min(d)).into_vec();
    coords.sort_unstable();
    let (gt, ht) = obj.subspace_parts(&coords)?;
    if gt.iter().all(|&v| v == 0.0) {
        // Nothing to do on this block. Running the line search anyway would
        // accept the null step at M = R and shrink R for no reason.
        state.k += 1;
        return Ok(StepInfo {
            m_accepted: state.r,
            ls_trials: 0,
            step_norm: 0.0,
            rho_m: None,
            m_effective: Some(coords.len()),
            instrumentation: Duration::ZERO,
        });
    }
    let mut hint = None;
    let accepted = {
        let view: &dyn Objective = obj;
        search(state, config, |m| {
            let model = CubicModel::new(&gt, ModelHessian::Dense(&ht), m)?;
            let sol = solve_cubic(&model, &cubic_options(config, hint))?;
            hint = Some(sol.lambda_star);
            let terms = model_terms(&model, &sol.s);
            Ok(Candidate {
                model: terms.total(),
                slack: acceptance_slack(&terms),
                decrease: view.coordinate_step_change(&coords, &sol.s),
                step_norm: sol.step_norm(),
                step: sol.s,
            })
        })?
    };
    obj.take_coordinate_step(&coords, &accepted.candidate.step);
    // The full gradient only feeds the trace and the stopping test.
    let started = Instant::now();
    finish(state, obj, config, accepted.m, accepted.candidate.decrease);
    Ok(StepInfo {
        m_accepted: accepted.m,
        ls_trials: accepted.trials,
        step_norm: accepted.candidate.step_norm,
        rho_m: None,
        m_effective: Some(coords.len()),
        instrumentation: started.elapsed(),
    })
}

/// Runs the configured method from `x0` until `|g| <= grad_tol`,
/// `max_iters` or the time budget, recording one trace row per iteration
/// (including the starting point as `k = 0`).
pub fn run(obj: &mut dyn Objective, x0: &[f64], config: &SolverConfig) -> Result<RunResult, SolverError> {
    config.validate()?;
    if x0.len() != obj.dim() {
        return Err(SolverError::DimensionMismatch { expected: obj.dim(), found: x0.len() });
    }
    let started = Instant::now();
    let mut excluded = Duration::ZERO;
    obj.set_point(x0);
    let mut state = SolverState::new(obj, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = vec![TraceRecord {
        k: 0,
        elapsed_s: 0.0,
        f: state.f,
        grad_norm: state.grad_norm,
        m_accepted: 0.0,
        ls_trials: 0,
        step_norm: 0.0,
        rho_m: None,
        m_effective: None,
    }];
    let stop = loop {
        if state.grad_norm <= config.grad_tol {
            break StopReason::GradientTolerance;
        }
        if state.k >= config.max_iters {
            break StopReason::MaxIterations;
        }
        if config.time_budget_s.is_some_and(|t| (started.elapsed() - excluded).as_secs_f64() >= t) {
            break StopReason::TimeBudget;
        }
        let info = match config.method {
            Method::Crn => crn_step(&mut state, obj, config)?,
            Method::KrylovCrn => krylov_crn_step(&mut state, obj, config)?,
            Method::Sscn => sscn_step(&mut state, obj, config, &mut rng)?,
        };
        excluded += info.instrumentation;
        trace.push(TraceRecord {
            k: state.k,
            elapsed_s: (started.elapsed().saturating_sub(excluded)).as_secs_f64(),
            f: state.f,
            grad_norm: state.grad_norm,
            m_accepted: info.m_accepted,
            ls_trials: info.ls_trials,
            step_norm: info.step_norm,
            rho_m: info.rho_m,
            m_effective: info.m_effective,
        });
    };
    log::debug!("{} stopped after {} iterations: {stop:?}", config.method, state.k);
    Ok(RunResult { state, trace, stop })
}
