//! Counter-based CPU power modelling.
//!
//! The pipeline joins cumulative event-counter traces with power-sensor
//! traces ([`sync`]), fits linear power models by least squares
//! ([`regress`]) and chooses the counter subset by greedy search scored with
//! k-fold cross-validated MAPE ([`search`]). [`datagen`] produces synthetic
//! trace pairs with a known ground-truth model for testing.

pub mod cli;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod regress;
pub mod search;
pub mod sync;

pub use dataset::{CounterName, CounterTrace, Dataset, PowerTrace, SampleRow};
pub use error::{Error, Result};
pub use regress::{fit_freq_baseline, fit_ols, mape, validate, FitDiagnostics, PowerModel};
pub use sync::{coverage_report, synchronize, CoverageReport, SyncConfig};
