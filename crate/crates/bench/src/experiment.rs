//! Runs an [`ExperimentConfig`]: loads the problem, resolves `f*`, runs each
//! method (SSCN once per seed), writes traces and a `summary.json`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use subspace_crn::objectives::{make_quadratic, Dataset, LogisticObjective, Objective, QuadraticSpec};
use subspace_crn::solvers::{run, Method, SolverConfig, SolverError};
use subspace_crn::spectral::{check_convergence_bound, check_linear_rate, BoundViolation, LinearRateCheck};
use thiserror::Error;

use crate::config::{DatasetSpec, ExperimentConfig, FstarSetting};
use crate::fstar::{cache_dir, compute_fstar, logistic_fstar_cached, FstarOptions, FstarRecord};
use crate::libsvm::{parse_libsvm, LibsvmError};
use crate::synthetic::make_synthetic_logistic;
use crate::trace::{read_trace, trace_file_name, write_trace};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] LibsvmError),
    #[error("solver failed: {0}")]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration and input problems, 3 for
    /// solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Solver(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Problem {
    Logistic(Arc<Dataset>),
    Quadratic(QuadraticSpec),
}

impl Problem {
    pub fn load(spec: &DatasetSpec) -> Result<Self, HarnessError> {
        match spec {
            DatasetSpec::Libsvm { path, dim } => Ok(Problem::Logistic(Arc::new(parse_libsvm(path, *dim)?))),
            DatasetSpec::SyntheticLogistic(s) => {
                let syn = make_synthetic_logistic(s).map_err(HarnessError::Config)?;
                Ok(Problem::Logistic(Arc::new(syn.dataset)))
            }
            DatasetSpec::Quadratic(q) => {
                make_quadratic(q).map_err(|e| HarnessError::Config(e.to_string()))?;
                Ok(Problem::Quadratic(q.clone()))
            }
        }
    }

    pub fn objective(&self) -> Box<dyn Objective> {
        match self {
            Problem::Logistic(data) => Box::new(LogisticObjective::new(data.clone())),
            Problem::Quadratic(q) => Box::new(make_quadratic(q).expect("validated in load")),
        }
    }
}

pub fn resolve_fstar(
    problem: &Problem,
    setting: Option<FstarSetting>,
    opts: &FstarOptions,
) -> Result<Option<FstarRecord>, HarnessError> {
    match setting {
        None => Ok(None),
        Some(FstarSetting::Value(v)) => Ok(Some(FstarRecord {
            fstar: v,
            grad_norm: f64::NAN,
            iterations: 0,
            possibly_unattained: false,
            source: "config".into(),
            key: None,
        })),
        Some(FstarSetting::Directive(_)) => match problem {
            Problem::Logistic(data) => Ok(Some(logistic_fstar_cached(data, opts, &cache_dir())?.record)),
            Problem::Quadratic(_) => Ok(Some(compute_fstar(&mut *problem.objective(), opts)?)),
        },
    }
}

/// Every (method, seed) pair the config asks for.
pub fn planned_runs(cfg: &ExperimentConfig) -> Vec<(SolverConfig, u64)> {
    let mut out = Vec::new();
    for m in &cfg.methods {
        let reps = if m.method == Method::Sscn { cfg.repetitions } else { 1 };
        for r in 0..reps as u64 {
            let seed = m.seed + r;
            out.push((SolverConfig { seed, ..m.clone() }, seed));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub method: Method,
    pub m: usize,
    pub seed: u64,
    pub file: String,
    pub iterations: usize,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub stop: String,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub fstar: Option<FstarRecord>,
    pub runs: Vec<RunSummary>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate().map_err(HarnessError::Config)?;
    let problem = Problem::load(&cfg.dataset)?;
    let fstar = resolve_fstar(&problem, cfg.fstar, &FstarOptions::default())?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::Io(format!("cannot create {}: {e}", out.display())))?;
    let mut runs = Vec::new();
    for (solver, seed) in planned_runs(cfg) {
        let mut obj = problem.objective();
        let x0 = vec![0.0; obj.dim()];
        let started = Instant::now();
        let res = run(&mut *obj, &x0, &solver)?;
        let wall_s = started.elapsed().as_secs_f64();
        let file = trace_file_name(&solver, seed);
        let path = out.join(&file);
        write_trace(&path, &res.trace, fstar.as_ref().map(|f| f.fstar))
            .map_err(|e| HarnessError::Io(format!("cannot write {}: {e}", path.display())))?;
        log::info!("{file}: {} iterations, f = {:e} ({:?})", res.state.k, res.state.f, res.stop);
        runs.push(RunSummary {
            method: solver.method,
            m: solver.m,
            seed,
            file,
            iterations: res.state.k,
            final_f: res.state.f,
            final_grad_norm: res.state.grad_norm,
            stop: format!("{:?}", res.stop),
            wall_s,
        });
    }
    let report = ExperimentReport { fstar, runs };
    let summary = out.join("summary.json");
    std::fs::write(&summary, serde_json::to_string_pretty(&report).expect("report serializes"))
        .map_err(|e| HarnessError::Io(format!("cannot write {}: {e}", summary.display())))?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TraceBoundCheck {
    pub file: PathBuf,
    pub method: Method,
    pub global_rate: Vec<BoundViolation>,
    pub linear: LinearRateCheck,
    /// Largest `k` in the trace.
    pub last_k: usize,
}

impl TraceBoundCheck {
    /// The linear-rate check fails when the target was reached late, or was
    /// never reached although the trace ran past the iteration bound, or a
    /// halving window stalled.
    pub fn passed(&self) -> bool {
        let reached_ok = match self.linear.iterations {
            Some(k) => k as f64 <= self.linear.iteration_bound,
            None => self.last_k as f64 <= self.linear.iteration_bound,
        };
        self.global_rate.is_empty() && reached_ok && self.linear.stalled_windows.is_empty()
    }
}

/// Compares the CRN and Krylov CRN traces of a quadratic experiment with the
/// global-rate bound and the strongly convex iteration bound at `eps_rel * delta_0`.
pub fn check_experiment_bounds(cfg: &ExperimentConfig, eps_rel: f64) -> Result<Vec<TraceBoundCheck>, HarnessError> {
    let DatasetSpec::Quadratic(spec) = &cfg.dataset else {
        return Err(HarnessError::Config("bound checks need a quadratic dataset".into()));
    };
    let q = make_quadratic(spec).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mu = q.strong_convexity().ok_or_else(|| HarnessError::Config("bound checks need a positive smallest eigenvalue".into()))?;
    let fstar = q.f_star();
    let mut out = Vec::new();
    for (solver, seed) in planned_runs(cfg) {
        if solver.method == Method::Sscn {
            continue;
        }
        let path = cfg.output_dir.join(trace_file_name(&solver, seed));
        out.push(check_trace_file(&path, solver.method, solver.m.min(q.dim()), fstar, mu, eps_rel)?);
    }
    Ok(out)
}

pub fn check_trace_file(
    path: &Path,
    method: Method,
    m: usize,
    fstar: f64,
    mu: f64,
    eps_rel: f64,
) -> Result<TraceBoundCheck, HarnessError> {
    let rows = read_trace(path).map_err(HarnessError::Io)?;
    let trace: Vec<_> = rows.into_iter().map(|r| r.record).collect();
    let first = trace.first().ok_or_else(|| HarnessError::Io(format!("{}: empty trace", path.display())))?;
    let delta0 = first.f - fstar;
    let d_radius = (2.0 * delta0.max(0.0) / mu).sqrt();
    let global_rate = check_convergence_bound(&trace, fstar, d_radius, 0.0, m);
    let linear = check_linear_rate(&trace, fstar, mu, 0.0, m, eps_rel * delta0);
    Ok(TraceBoundCheck { file: path.to_path_buf(), method, global_rate, linear, last_k: trace.last().map_or(0, |r| r.k) })
}
