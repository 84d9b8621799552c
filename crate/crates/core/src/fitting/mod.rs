//! Parameter estimation for the performance function.

mod amue;
mod gpr;
mod lbfgsb;
mod lm;
mod metrics;

use serde::{Deserialize, Serialize};

use crate::error::FitError;

pub use amue::{fit_amue, fit_amue_detailed, AmueFit};
pub use gpr::{
    fit_gpr, fit_gpr_with, GprHyperparameters, GprModel, GprObjective, GprPrediction, LengthScales, LENGTH_SCALE_BOUNDS, MAX_JITTER,
    NOISE_FLOOR, NOISE_VARIANCE_MAX, SIGNAL_VARIANCE_BOUNDS,
};
pub use metrics::{evaluate_fit, report_from_predictions, split_train_test, FitReport, Metrics, Predictor, Setup, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative objective change that ends a run.
    pub tolerance: f64,
    /// Number of starts, including the deterministic first one.
    pub restarts: usize,
    pub rng_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-12,
            restarts: 10,
            rng_seed: 0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.max_iterations == 0 {
            return Err(FitError::InvalidOption {
                name: "max_iterations",
                reason: "must be positive",
            });
        }
        if self.restarts == 0 {
            return Err(FitError::InvalidOption {
                name: "restarts",
                reason: "must be at least 1",
            });
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(FitError::InvalidOption {
                name: "tolerance",
                reason: "must be positive",
            });
        }
        Ok(())
    }
}
