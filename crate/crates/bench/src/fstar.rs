//! Reference optimal values.
//!
//! Quadratics report their closed-form `f*`. For logistic regression the
//! value comes from a full CRN run to `|g| <= grad_tol` and is cached in a
//! JSON sidecar keyed by a hash of the dataset. When the final iterate
//! separates the data the infimum is 0 and is not attained, so the returned
//! value is only the level the run reached; the record says so.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subspace_crn::objectives::{Dataset, LogisticObjective, Objective};
use subspace_crn::solvers::{run, Method, SolverConfig, SolverError, StopReason};

use crate::libsvm::write_libsvm_string;

pub const CACHE_ENV: &str = "SUBSPACE_CRN_CACHE";
const KEY_VERSION: &str = "fstar-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct FstarOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub time_budget_s: Option<f64>,
}

impl Default for FstarOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-12, max_iters: 2000, time_budget_s: Some(300.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FstarRecord {
    pub fstar: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub possibly_unattained: bool,
    /// `closed_form` or `crn`.
    pub source: String,
    #[serde(default)]
    pub key: Option<String>,
}

/// `$SUBSPACE_CRN_CACHE`, or a directory under the system temp dir.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("subspace-crn-fstar"))
}

pub fn dataset_key(data: &Dataset, opts: &FstarOptions) -> String {
    let mut h = Sha256::new();
    h.update(KEY_VERSION.as_bytes());
    h.update(format!("{} {} {:e}\n", data.n_samples(), data.n_features(), opts.grad_tol).as_bytes());
    h.update(write_libsvm_string(data).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Closed form when the objective knows its optimum, otherwise CRN from 0.
pub fn compute_fstar(obj: &mut dyn Objective, opts: &FstarOptions) -> Result<FstarRecord, SolverError> {
    if let Some(f) = obj.optimal_value() {
        return Ok(FstarRecord {
            fstar: f,
            grad_norm: 0.0,
            iterations: 0,
            possibly_unattained: false,
            source: "closed_form".into(),
            key: None,
        });
    }
    let cfg = SolverConfig {
        grad_tol: opts.grad_tol,
        max_iters: opts.max_iters,
        time_budget_s: opts.time_budget_s,
        ..SolverConfig::new(Method::Crn, 1)
    };
    let x0 = vec![0.0; obj.dim()];
    let res = run(obj, &x0, &cfg)?;
    Ok(FstarRecord {
        fstar: obj.value(),
        grad_norm: res.state.grad_norm,
        iterations: res.state.k,
        possibly_unattained: res.stop != StopReason::GradientTolerance,
        source: "crn".into(),
        key: None,
    })
}

/// True when every sample sits strictly on the side of its label.
pub fn separates(obj: &LogisticObjective) -> bool {
    obj.margins()
        .iter()
        .zip(obj.dataset().labels())
        .all(|(&t, &b)| if b == 1.0 { t > 0.0 } else { t < 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedFstar {
    pub record: FstarRecord,
    pub cache_hit: bool,
    pub path: PathBuf,
}

/// Logistic reference value, read from or written to `dir`.
pub fn logistic_fstar_cached(
    data: &Arc<Dataset>,
    opts: &FstarOptions,
    dir: &Path,
) -> Result<CachedFstar, SolverError> {
    let key = dataset_key(data, opts);
    let path = dir.join(format!("{key}.json"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        match serde_json::from_str::<FstarRecord>(&text) {
            Ok(record) if record.key.as_deref() == Some(key.as_str()) => {
                log::info!("f* cache hit: {}", path.display());
                return Ok(CachedFstar { record, cache_hit: true, path });
            }
            _ => log::warn!("ignoring unreadable f* cache entry {}", path.display()),
        }
    }
    let mut obj = LogisticObjective::new(data.clone());
    let mut record = compute_fstar(&mut obj, opts)?;
    if separates(&obj) {
        log::warn!("final iterate separates the data: the infimum 0 is not attained, f* is only a reference level");
        record.possibly_unattained = true;
    }
    record.key = Some(key);
    let written = std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, serde_json::to_string_pretty(&record).expect("record serializes")));
    if let Err(e) = written {
        log::warn!("could not write f* cache {}: {e}", path.display());
    }
    Ok(CachedFstar { record, cache_hit: false, path })
}
