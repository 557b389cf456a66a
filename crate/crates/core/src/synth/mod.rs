//! Seeded generator of SMTP sessions with known ground truth.
//!
//! Each session is a connection attempt that fails, is rejected during the
//! envelope phase, or delivers mail. The generator emits the session's flow
//! record, the server log entry it would leave (none for failed attempts),
//! and its true class, plus black and white lists for the sender population.

mod config;
mod generate;
mod size;

use thiserror::Error;

pub use config::{
    default_servers, AcceptedModel, Diurnal, FailedModel, RejectedModel, SenderPopulation,
    SynthConfig, DEFAULT_REASON_WEIGHTS,
};
pub use generate::{
    class_violation_rates, generate, write_list, write_log, write_truth_csv, SenderKind,
    SynthOutput, SynthSession,
};
pub use size::{solve_lognormal_sigma, SizeSampler};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid configuration field {0}")]
    InvalidConfig(String),
    #[error("config line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },
    #[error("empty input")]
    EmptyInput,
}
