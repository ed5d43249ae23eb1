//! Desk-scale simulation studies of lower confidence bounds for selected
//! prediction models: data generation, a logistic lasso grid, the two-stage
//! selection pipeline and coverage summaries.

pub mod aggregate;
pub mod error;
pub mod lasso;
pub mod pipeline;
pub mod scenario;

pub use aggregate::{aggregate, liberal_threshold, Summary};
pub use error::{Result, SimError};
pub use pipeline::{
    run_experiment, DataSource, ExperimentConfig, ExperimentOutput, RunFailure, RunRecord,
};
pub use scenario::{gen_scenario_a, InjectedData, ScenarioAConfig};
