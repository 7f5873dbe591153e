//! Experiment harness for `subspace-crn`: LIBSVM ingestion, synthetic data,
//! reference optimal values, JSON configs and CSV traces.

pub mod config;
pub mod experiment;
pub mod fstar;
pub mod libsvm;
pub mod synthetic;
pub mod trace;
