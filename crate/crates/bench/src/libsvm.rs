//! LIBSVM / SVMlight text format.
//!
//! Each nonempty line is `label idx:val idx:val ...` with 1-based feature
//! indices. Labels are mapped to `{0, 1}` (`+1` becomes 1, anything else 0).
//! Text after `#` is a comment.

use std::fmt::Write as _;
use std::path::Path;

use subspace_crn::linalg::SparseMatrixCsr;
use subspace_crn::objectives::{normalize_label, Dataset};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LibsvmError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no samples in input")]
    Empty,
    #[error("feature index {index} exceeds the configured dimension {dim}")]
    DimensionTooSmall { index: usize, dim: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// A parsed file before label normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLibsvm {
    pub labels: Vec<f64>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub dim: usize,
}

pub fn parse_libsvm_str(text: &str, dim: Option<usize>) -> Result<RawLibsvm, LibsvmError> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| LibsvmError::Parse { line: line_no, message };
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("line is nonempty");
        let label: f64 = label_tok.parse().map_err(|_| err(format!("invalid label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(err(format!("invalid label {label_tok:?}")));
        }
        let mut row: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| err(format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("invalid feature index in {tok:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("invalid feature value in {tok:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value in {tok:?}")));
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        row.sort_by_key(|&(c, _)| c);
        let before = row.len();
        // Stable sort keeps file order within equal indices; keep the last.
        let mut dedup: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for entry in row {
            match dedup.last_mut() {
                Some(last) if last.0 == entry.0 => *last = entry,
                _ => dedup.push(entry),
            }
        }
        if dedup.len() != before {
            log::warn!("line {line_no}: duplicate feature index, keeping the last value");
        }
        labels.push(label);
        rows.push(dedup);
    }
    if rows.is_empty() {
        return Err(LibsvmError::Empty);
    }
    let dim = match dim {
        Some(d) if d < max_index => return Err(LibsvmError::DimensionTooSmall { index: max_index, dim: d }),
        Some(d) => d,
        None => max_index,
    };
    Ok(RawLibsvm { labels, rows, dim })
}

impl RawLibsvm {
    pub fn into_dataset(self) -> Result<Dataset, LibsvmError> {
        let mut remapped = 0usize;
        let labels: Vec<f64> = self
            .labels
            .iter()
            .map(|&b| {
                let nb = normalize_label(b);
                if nb != b {
                    remapped += 1;
                }
                nb
            })
            .collect();
        if remapped > 0 {
            log::info!("normalized {remapped} labels to {{0, 1}}");
        }
        let features =
            SparseMatrixCsr::from_rows(self.dim, &self.rows).map_err(|e| LibsvmError::Invalid(e.to_string()))?;
        Dataset::new(features, labels).map_err(|e| LibsvmError::Invalid(e.to_string()))
    }
}

pub fn parse_libsvm(path: impl AsRef<Path>, dim: Option<usize>) -> Result<Dataset, LibsvmError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| LibsvmError::Io { path: path.display().to_string(), source })?;
    parse_libsvm_str(&text, dim)?.into_dataset()
}

/// Canonical text: labels as `1` / `0`, indices ascending, values in
/// shortest round-trip form, one `\n` per line.
pub fn write_libsvm_string(data: &Dataset) -> String {
    let mut out = String::new();
    let x = data.features();
    for (r, &b) in data.labels().iter().enumerate() {
        out.push_str(if b == 1.0 { "1" } else { "0" });
        for (c, v) in x.row(r) {
            write!(out, " {}:{}", c + 1, v).expect("writing to a string");
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(data: &Dataset, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, write_libsvm_string(data))
}
