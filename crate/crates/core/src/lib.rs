//! Lower confidence bounds for the prediction performance of a model selected
//! among several evaluated candidates.
//!
//! The central method is multiplicity-adjusted bootstrap tilting: bootstrap
//! estimates of every evaluated model are rank-transformed, the row-wise
//! maximum over models supplies the multiplicity correction, and the selected
//! model's tilting parameter is calibrated against it. Classical bounds
//! (Wald, Wilson, Clopper-Pearson, DeLong, Hanley-McNeil) and the Šidák
//! adjustment are provided for comparison.

pub mod baselines;
pub mod error;
pub mod mabt;
pub mod measures;
pub mod methods;
pub mod resample;
pub mod rng;
pub mod selection;
pub mod special;
pub mod tilting;

pub use error::{Error, Result};
pub use mabt::{mabt_lower_bound, simultaneous_bounds};
pub use measures::{EvaluationTable, MeasureKind, WeightVector};
pub use methods::{compute_bound, BaseMethod, BoundOutcome, Method};
pub use resample::{bootstrap_performance, draw_resamples, BootstrapEnsemble, ResamplePlan};
pub use selection::{final_select, preselect, Rule};
pub use tilting::{bt_lower_bound, CalibrationResult};
