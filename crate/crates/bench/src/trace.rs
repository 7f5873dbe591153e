//! CSV trace files, one per (method, seed).

use std::path::Path;

use subspace_crn::solvers::{SolverConfig, TraceRecord};

pub const HEADER: [&str; 10] =
    ["k", "elapsed_s", "f", "subopt", "grad_norm", "M_accepted", "ls_trials", "step_norm", "rho_m", "m_effective"];

/// Smallest suboptimality written, for log-scale plots.
pub const SUBOPT_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub record: TraceRecord,
    pub subopt: Option<f64>,
}

pub fn trace_file_name(cfg: &SolverConfig, seed: u64) -> String {
    if cfg.method.uses_subspace() {
        format!("{}_m{}_seed{seed}.csv", cfg.method, cfg.m)
    } else {
        format!("{}_seed{seed}.csv", cfg.method)
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn subopt(f: f64, fstar: f64) -> f64 {
    (f - fstar).max(SUBOPT_FLOOR)
}

pub fn write_trace(path: &Path, trace: &[TraceRecord], fstar: Option<f64>) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(HEADER)?;
    for r in trace {
        w.write_record([
            r.k.to_string(),
            num(r.elapsed_s),
            num(r.f),
            fstar.map(|fs| num(subopt(r.f, fs))).unwrap_or_default(),
            num(r.grad_norm),
            num(r.m_accepted),
            r.ls_trials.to_string(),
            num(r.step_norm),
            r.rho_m.map(num).unwrap_or_default(),
            r.m_effective.map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<Option<T>, String> {
    let raw = rec.get(i).ok_or_else(|| format!("row {line}: missing column {}", HEADER[i]))?;
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse().map(Some).map_err(|_| format!("row {line}: bad {} value {raw:?}", HEADER[i]))
}

fn required<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T, String> {
    field(rec, i, line)?.ok_or_else(|| format!("row {line}: empty {}", HEADER[i]))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(HEADER) {
        return Err(format!("{}: unexpected header {:?}", path.display(), header));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let line = i as u64 + 2;
        rows.push(TraceRow {
            record: TraceRecord {
                k: required(&rec, 0, line)?,
                elapsed_s: required(&rec, 1, line)?,
                f: required(&rec, 2, line)?,
                grad_norm: required(&rec, 4, line)?,
                m_accepted: required(&rec, 5, line)?,
                ls_trials: required(&rec, 6, line)?,
                step_norm: required(&rec, 7, line)?,
                rho_m: field(&rec, 8, line)?,
                m_effective: field(&rec, 9, line)?,
            },
            subopt: field(&rec, 3, line)?,
        });
    }
    Ok(rows)
}
