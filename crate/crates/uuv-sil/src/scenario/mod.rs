//! Scenario configuration, the closed-loop runner and everything derived
//! from its transcript: metrics, pass conditions, plot data and
//! comparisons.

pub mod bundled;
pub mod compare;
pub mod config;
pub mod metrics;
pub mod plot;
pub mod predicate;
pub mod runner;
pub mod vehicle;

pub use config::{ConfigError, ScenarioConfig};
pub use metrics::{compute_metrics, decode_transcript, RunMetrics};
pub use runner::{run_scenario, run_to_dir, run_with_reasoner, RunError, RunResult, RunSummary};
