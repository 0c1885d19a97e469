//! Configuration, experiment-grid execution, metrics export and summaries
//! for the `deahes` simulator.

pub mod config;
pub mod error;
pub mod grid;
pub mod output;
pub mod summary;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use grid::{run_grid, RunOptions, RunReport};
pub use output::{format_float, MetricsRow, HEADER};
pub use summary::{render_tsv, summarize, SummaryRow};
