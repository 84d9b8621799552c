//! Performance functions over machine-translated (T) and manually created (M)
//! training data, and the cost-optimal data-collection strategies they imply.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: closed-form evaluation, isoperfs, tangency and expansion paths.
//! - [`fitting`]: least-squares and Gaussian-process estimation, goodness of fit.
//! - [`analysis`]: contours of fitted models, GPR least-cost points, M/T trends.
//! - [`ingest`]: loading and validating observation files.
//! - [`render`]: SVG T-M diagrams and cost curves.

pub mod analysis;
pub mod error;
pub mod fitting;
pub mod ingest;
pub mod model;
pub mod render;
mod roots;

pub use error::{AnalysisError, FitError, IngestError, ModelError, RenderError, RowError};
pub use fitting::{evaluate_fit, fit_amue, fit_gpr, split_train_test, FitOptions, FitReport, GprModel, Predictor};
pub use ingest::{load_observations, ExperimentContext, Observation, ObservationSet, Schema};
pub use model::{AmueParams, CostModel, ExpansionPath, OperatingPoint, RealizableRegion};
