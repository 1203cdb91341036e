//! Self-optimizing production line toolkit.
//!
//! The crate wires four pieces together:
//!
//! * [`bus`] — an in-process message broker with topics, offset-ordered logs,
//!   consumer groups and schema-validated publishing.
//! * [`sim`] — a ground-truth simulator of a popcorn dosing process mapping a
//!   conveyor runtime to three conflicting objectives (energy, time, corn).
//! * [`surrogates`] / [`smbo`] — ordinary Kriging and random-forest regression
//!   behind one fit/predict interface, plus the sequential model-based
//!   optimization loop (design generation, infill search, step).
//! * [`cognition`] / [`conceptual`] — candidate-pipeline instantiation,
//!   scoring, selection, drift detection and re-calibration, backed by a
//!   knowledge base with constraint checks and CSV reporting.
//!
//! The numeric core is generic over the scalar type via [`scalar::Real`];
//! the aliases below pin the concrete types used by the experiment runner.

pub mod bus;
pub mod cognition;
pub mod conceptual;
pub mod runner;
pub mod scalar;
pub mod sim;
pub mod smbo;
pub mod surrogates;

/// Kriging model over `f64`, the type the runner fits.
pub type KrigingModel = surrogates::kriging::KrigingModel<f64>;
/// Random-forest model over `f64`.
pub type ForestModel = surrogates::forest::ForestModel<f64>;
/// Training dataset over `f64`.
pub type Dataset = surrogates::Dataset<f64>;
/// Fitted surrogate of either kind over `f64`.
pub type FittedModel = surrogates::FittedModel<f64>;
/// SMBO loop state over `f64`.
pub type SmboState = smbo::SmboState<f64>;
