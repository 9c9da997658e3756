//! Synthetic two-stream populations and the Monte Carlo harness that scores the
//! estimators against them.

mod harness;
mod scenario;
mod summary;

pub use harness::{
    run_monte_carlo, MonteCarloRun, SimulationOptions, BINARY_METHODS, CONTINUOUS_METHODS,
};
pub use scenario::{generate_population, Component, OutcomeKind, ResponseProb, ScenarioConfig};
pub use summary::{
    format_sig6, summarize, MonteCarloSummary, Observation, RowKey, SummaryRow, SUMMARY_COLUMNS,
};
