//! Seeded sparse logistic-regression data with a planted separator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use subspace_crn::linalg::SparseMatrixCsr;
use subspace_crn::objectives::{sigmoid, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticLogisticSpec {
    pub n: usize,
    pub d: usize,
    /// Probability that a feature entry is nonzero.
    pub sparsity: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticLogistic {
    pub dataset: Dataset,
    pub separator: Vec<f64>,
    /// `a_j^T w` for the planted separator `w`.
    pub scores: Vec<f64>,
}

/// Features are Bernoulli(`sparsity`) masks times standard normals; the
/// separator has standard normal entries scaled so scores have unit
/// variance; label `b_j = 1` with probability `sigmoid(4 a_j^T w)`.
pub fn make_synthetic_logistic(spec: &SyntheticLogisticSpec) -> Result<SyntheticLogistic, String> {
    let SyntheticLogisticSpec { n, d, sparsity, seed } = *spec;
    if n == 0 || d == 0 {
        return Err(format!("need n, d >= 1, got n = {n}, d = {d}"));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(format!("sparsity must lie in (0, 1], got {sparsity}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (sparsity * d as f64).sqrt();
    let separator: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::new();
        for c in 0..d {
            if rng.gen_bool(sparsity) {
                row.push((c, rng.sample::<f64, _>(StandardNormal)));
            }
        }
        let score: f64 = row.iter().map(|&(c, v)| v * separator[c]).sum();
        labels.push(if rng.gen::<f64>() < sigmoid(4.0 * score) { 1.0 } else { 0.0 });
        scores.push(score);
        rows.push(row);
    }
    let features = SparseMatrixCsr::from_rows(d, &rows).map_err(|e| e.to_string())?;
    let dataset = Dataset::new(features, labels).map_err(|e| e.to_string())?;
    Ok(SyntheticLogistic { dataset, separator, scores })
}

/// Area under the ROC curve of `scores` against binary `labels`, with ties
/// counted as one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k] == 1.0).count() as f64 * mid_rank;
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&b| b == 1.0).count() as f64;
    let neg = labels.len() as f64 - pos;
    (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}
