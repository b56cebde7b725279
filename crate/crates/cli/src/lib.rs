//! Command-line front end for the `apfv-core` scheme: configuration files,
//! single runs with per-step checks, convergence studies and CSV/SVG/text
//! output.

pub mod config;
pub mod convergence;
pub mod error;
pub mod output;
pub mod run;

pub use config::{ConvergenceConfig, RunConfig};
pub use convergence::{convergence, study, ConvergenceOptions, ConvergenceTable};
pub use error::{CliError, CliResult};
pub use run::{run, simulate, RunOptions, RunRecord, RunSummary};
