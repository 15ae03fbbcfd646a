//! Benchmark harness: synthetic problems answered by simulated
//! decision-makers, replicated optimization runs and simple-regret summaries.

pub mod bench;
pub mod plot;
pub mod sim;

pub use bench::{aggregate, run_bench, run_replication, BenchConfig, RegretTrace, Summary};
pub use sim::{anchored_design, calibrate_noise, eval_problem, initial_design, simulate_response, SimulatedDM, TestProblem};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] pbo_core::Error),
    #[error("unknown problem {0:?}")]
    UnknownProblem(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("trace lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no traces to aggregate")]
    NoTraces,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
