//! Experiment harness for functional Gaussian-process data assimilation on
//! the 1D heat-conduction benchmark: table sweeps, single cases with
//! per-node CSV output, and oracle checks.

pub mod checks;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::RunConfig;
pub use error::{RunError, Stage};
pub use experiment::{compute_case, run_case, run_table, CaseResult, CaseRun, DataSource, TableOutcome};
