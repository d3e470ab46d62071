//! Experiment harness: configs, data assembly, parallel method × seed grids,
//! result tables, k2 analysis and SVG plots.

pub mod config;
pub mod data;
pub mod k2;
pub mod plan;
pub mod plots;
pub mod results;

pub use config::ExperimentConfig;
pub use plan::{run_plan, ExperimentPlan, PlanOutcome};
pub use results::ResultsTable;
