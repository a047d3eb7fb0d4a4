//! Command-line front end: scenario files, gain synthesis and simulation
//! reports, trajectory CSV export.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod trajectory_csv;

pub use commands::{cmd_simulate, cmd_synthesize, cmd_verify, Context, PENDUBOT_SCENARIO};
pub use config::{Overrides, Scenario, ScenarioConfig};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
    pub const VERIFICATION: i32 = 4;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("simulation diverged at t = {t} s{}", suggested_dt.map_or(String::new(), |dt| format!("; retry with dt ≤ {dt:e} (set simulation.dt or pass --dt)")))]
    Divergence { t: f64, suggested_dt: Option<f64> },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => exit::CONFIG,
            Self::Divergence { .. } => exit::DIVERGENCE,
            Self::Verification(_) => exit::VERIFICATION,
            Self::Io(_) => exit::IO,
        }
    }
}
