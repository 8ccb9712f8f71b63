//! Experiment driver for `ppstat`: accuracy runs of the primitives,
//! synthetic benchmarks of the statistical measures and CSV dataset
//! evaluations, each producing a JSON [`StatReport`].

use std::path::PathBuf;

pub mod cli;
pub mod harness;
pub mod report;

pub use harness::{
    run_approx, run_bench, run_dataset, ApproxArgs, ApproxFn, BenchArgs, DatasetArgs, Measure, RunConfig, Sampling,
};
pub use report::{ReportParams, StatReport};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Domain = 2,
    Io = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ppstat::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Write { .. } => ExitStatus::Io,
            CliError::Core(e) if e.is_io_error() => ExitStatus::Io,
            CliError::Core(e) if e.is_domain_error() => ExitStatus::Domain,
            CliError::Core(_) => ExitStatus::Usage,
        }
    }
}
