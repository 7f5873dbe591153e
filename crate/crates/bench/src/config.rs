//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "dataset": { "kind": "synthetic_logistic", "n": 500, "d": 2000, "sparsity": 0.01, "seed": 0 },
//!   "methods": [
//!     { "method": "krylov_crn", "m": 10 },
//!     { "method": "sscn", "m": 100, "max_iters": 5000 },
//!     { "method": "crn" }
//!   ],
//!   "fstar": "compute",
//!   "output_dir": "out/logistic",
//!   "repetitions": 5
//! }
//! ```
//!
//! `dataset.kind` is one of `libsvm` (`path`, optional `dim`),
//! `synthetic_logistic` or `quadratic` (`spectrum`, `rotate`, `f_star`,
//! `seed`). `fstar` is a number, `"compute"`, or omitted. Relative paths are
//! resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subspace_crn::objectives::QuadraticSpec;
use subspace_crn::solvers::SolverConfig;

use crate::synthetic::SyntheticLogisticSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Libsvm {
        path: PathBuf,
        #[serde(default)]
        dim: Option<usize>,
    },
    SyntheticLogistic(SyntheticLogisticSpec),
    Quadratic(QuadraticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FstarDirective {
    Compute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FstarSetting {
    Value(f64),
    Directive(FstarDirective),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub methods: Vec<SolverConfig>,
    #[serde(default)]
    pub fstar: Option<FstarSetting>,
    pub output_dir: PathBuf,
    /// Number of seeds for SSCN, starting at each method's `seed`.
    #[serde(default = "one")]
    pub repetitions: usize,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut cfg = Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DatasetSpec::Libsvm { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                *data = base.join(&*data);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.methods.is_empty() {
            return Err("at least one method is required".into());
        }
        if self.repetitions == 0 {
            return Err("repetitions must be at least 1".into());
        }
        for m in &self.methods {
            m.validate().map_err(|e| format!("{}: {e}", m.method))?;
        }
        if let Some(FstarSetting::Value(v)) = self.fstar {
            if !v.is_finite() {
                return Err("fstar must be finite".into());
            }
        }
        Ok(())
    }
}
