//! Configuration, orchestration and CSV output for the `jcfb` binary.

pub mod config;
pub mod error;
pub mod job;
pub mod output;

pub use config::{parse_config, JobConfig, Mode};
pub use error::CliError;
pub use job::{run_job, JobReport, Manifest, Status};
pub use output::Table;
