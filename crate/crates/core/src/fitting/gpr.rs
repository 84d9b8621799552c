//! Gaussian-process regression with an RBF kernel plus white noise.
//!
//! Inputs are divided by the largest data size in the training set so one
//! length scale is meaningful for both axes. Targets are centred on their
//! mean, which is also the prior mean. Hyperparameters are optimised in log
//! space by maximising the log marginal likelihood with multi-start
//! box-constrained L-BFGS.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgsb::{self, BoxSettings};
use super::metrics::Predictor;
use super::FitOptions;
use crate::error::FitError;
use crate::ingest::ObservationSet;

/// Lower bound on the noise variance as a fraction of the target variance.
pub const NOISE_FLOOR: f64 = 1e-6;
/// Largest jitter (relative to the target variance) tried before giving up.
pub const MAX_JITTER: f64 = 1e-2;
pub const LENGTH_SCALE_BOUNDS: (f64, f64) = (1e-2, 1e2);
/// Signal variance bounds relative to the target variance.
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-2, 1e2);
/// Noise variance upper bound relative to the target variance.
pub const NOISE_VARIANCE_MAX: f64 = 1e1;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthScales {
    /// One length scale shared by the T and M axes.
    #[default]
    Shared,
    /// Separate length scales for T and M.
    PerDimension,
}

/// Kernel hyperparameters in natural units. Length scales are in normalised
/// data-size units; variances in Π².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprHyperparameters {
    pub length_scale_t: f64,
    pub length_scale_m: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GprHyperparameters {
    pub fn isotropic(length_scale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        Self {
            length_scale_t: length_scale,
            length_scale_m: length_scale,
            signal_variance,
            noise_variance,
        }
    }
}

/// Normalised training data shared by the objective and the fitted model.
#[derive(Debug, Clone)]
struct TrainingData {
    inputs: Vec<[f64; 2]>,
    targets: DVector<f64>,
    input_scale: f64,
    target_mean: f64,
    target_variance: f64,
}

impl TrainingData {
    fn new(obs: &ObservationSet) -> Self {
        let input_scale = obs.iter().map(|o| o.t.max(o.m)).fold(0.0, f64::max);
        let input_scale = if input_scale > 0.0 { input_scale } else { 1.0 };
        let n = obs.len() as f64;
        let target_mean = obs.iter().map(|o| o.pi).sum::<f64>() / n;
        let variance = obs.iter().map(|o| (o.pi - target_mean).powi(2)).sum::<f64>() / n;
        Self {
            inputs: obs.iter().map(|o| [o.t / input_scale, o.m / input_scale]).collect(),
            targets: DVector::from_iterator(obs.len(), obs.iter().map(|o| o.pi - target_mean)),
            input_scale,
            target_mean,
            target_variance: if variance > 0.0 { variance } else { 1.0 },
        }
    }

    fn rbf(&self, h: &GprHyperparameters) -> DMatrix<f64> {
        let n = self.inputs.len();
        DMatrix::from_fn(n, n, |i, j| rbf(&self.inputs[i], &self.inputs[j], h))
    }
}

#[inline]
fn rbf(a: &[f64; 2], b: &[f64; 2], h: &GprHyperparameters) -> f64 {
    let dt = (a[0] - b[0]) / h.length_scale_t;
    let dm = (a[1] - b[1]) / h.length_scale_m;
    h.signal_variance * (-0.5 * (dt * dt + dm * dm)).exp()
}

/// Log marginal likelihood of the centred targets as a function of the
/// log-hyperparameters, in the order
/// `[ln ℓ, ln σ_f², ln σ_n²]` (shared) or `[ln ℓ_t, ln ℓ_m, ln σ_f², ln σ_n²]`.
#[derive(Debug, Clone)]
pub struct GprObjective {
    data: TrainingData,
    shape: LengthScales,
}

impl GprObjective {
    pub fn new(obs: &ObservationSet, shape: LengthScales) -> Self {
        Self {
            data: TrainingData::new(obs),
            shape,
        }
    }

    pub fn dimension(&self) -> usize {
        match self.shape {
            LengthScales::Shared => 3,
            LengthScales::PerDimension => 4,
        }
    }

    pub fn target_variance(&self) -> f64 {
        self.data.target_variance
    }

    pub fn hyperparameters(&self, log_params: &[f64]) -> GprHyperparameters {
        match self.shape {
            LengthScales::Shared => GprHyperparameters {
                length_scale_t: log_params[0].exp(),
                length_scale_m: log_params[0].exp(),
                signal_variance: log_params[1].exp(),
                noise_variance: log_params[2].exp(),
            },
            LengthScales::PerDimension => GprHyperparameters {
                length_scale_t: log_params[0].exp(),
                length_scale_m: log_params[1].exp(),
                signal_variance: log_params[2].exp(),
                noise_variance: log_params[3].exp(),
            },
        }
    }

    /// Box bounds on the log-hyperparameters.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let v = self.data.target_variance;
        let (l_lo, l_hi) = (LENGTH_SCALE_BOUNDS.0.ln(), LENGTH_SCALE_BOUNDS.1.ln());
        let mut lower = vec![l_lo];
        let mut upper = vec![l_hi];
        if self.shape == LengthScales::PerDimension {
            lower.push(l_lo);
            upper.push(l_hi);
        }
        lower.extend([(SIGNAL_VARIANCE_BOUNDS.0 * v).ln(), (NOISE_FLOOR * v).ln()]);
        upper.extend([(SIGNAL_VARIANCE_BOUNDS.1 * v).ln(), (NOISE_VARIANCE_MAX * v).ln()]);
        (lower, upper)
    }

    /// Log marginal likelihood and its gradient with respect to the
    /// log-hyperparameters. `None` when the kernel matrix is not positive definite.
    pub fn value_and_gradient(&self, log_params: &[f64]) -> Option<(f64, Vec<f64>)> {
        let h = self.hyperparameters(log_params);
        let n = self.data.inputs.len();
        let k_rbf = self.data.rbf(&h);
        let mut k = k_rbf.clone();
        for i in 0..n {
            k[(i, i)] += h.noise_variance;
        }
        let chol = k.cholesky()?;
        let alpha = chol.solve(&self.data.targets);
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let value = -0.5 * self.data.targets.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;

        // dL/dθ = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ)
        let k_inv = chol.inverse();
        let w = &alpha * alpha.transpose() - k_inv;
        let mut grad_lt = 0.0;
        let mut grad_lm = 0.0;
        let mut grad_sf = 0.0;
        for i in 0..n {
            for j in 0..n {
                let kij = k_rbf[(i, j)];
                let wij = w[(i, j)];
                let a = &self.data.inputs[i];
                let b = &self.data.inputs[j];
                let dt = (a[0] - b[0]) / h.length_scale_t;
                let dm = (a[1] - b[1]) / h.length_scale_m;
                grad_sf += wij * kij;
                grad_lt += wij * kij * dt * dt;
                grad_lm += wij * kij * dm * dm;
            }
        }
        let grad_sn = h.noise_variance * w.trace();
        let gradient = match self.shape {
            LengthScales::Shared => vec![0.5 * (grad_lt + grad_lm), 0.5 * grad_sf, 0.5 * grad_sn],
            LengthScales::PerDimension => vec![0.5 * grad_lt, 0.5 * grad_lm, 0.5 * grad_sf, 0.5 * grad_sn],
        };
        Some((value, gradient))
    }

    fn initial_point(&self) -> Vec<f64> {
        let v = self.data.target_variance;
        let mut x = vec![0.3f64.ln()];
        if self.shape == LengthScales::PerDimension {
            x.push(0.3f64.ln());
        }
        x.extend([v.ln(), (1e-2 * v).ln()]);
        x
    }
}

/// A fitted Gaussian process, ready for prediction.
#[derive(Debug, Clone)]
pub struct GprModel {
    hyper: GprHyperparameters,
    shape: LengthScales,
    data: TrainingData,
    dual_weights: DVector<f64>,
    chol_factor: DMatrix<f64>,
    log_marginal_likelihood: f64,
}

/// Posterior predictive moments at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GprPrediction {
    pub mean: f64,
    /// Variance of a new noisy observation: latent variance plus `noise_variance`.
    pub variance: f64,
}

impl GprModel {
    /// Conditions the process on `obs` with fixed hyperparameters. The noise
    /// variance is raised to the floor if needed, then jitter is escalated ×10
    /// until the kernel matrix factorises.
    pub fn with_hyperparameters(obs: &ObservationSet, hyper: GprHyperparameters, shape: LengthScales) -> Result<Self, FitError> {
        let data = TrainingData::new(obs);
        let floor = NOISE_FLOOR * data.target_variance;
        let mut hyper = hyper;
        hyper.noise_variance = hyper.noise_variance.max(floor);
        if shape == LengthScales::Shared {
            hyper.length_scale_m = hyper.length_scale_t;
        }
        let k_rbf = data.rbf(&hyper);
        let n = data.inputs.len();
        let mut jitter = 0.0;
        loop {
            let mut k = k_rbf.clone();
            for i in 0..n {
                k[(i, i)] += hyper.noise_variance + jitter;
            }
            if let Some(chol) = k.cholesky() {
                hyper.noise_variance += jitter;
                let dual_weights = chol.solve(&data.targets);
                let l = chol.unpack();
                let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
                let lml = -0.5 * data.targets.dot(&dual_weights) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
                return Ok(Self {
                    hyper,
                    shape,
                    data,
                    dual_weights,
                    chol_factor: l,
                    log_marginal_likelihood: lml,
                });
            }
            jitter = if jitter == 0.0 { floor } else { jitter * 10.0 };
            if jitter > MAX_JITTER * data.target_variance {
                return Err(FitError::IllConditioned { jitter });
            }
        }
    }

    pub fn hyperparameters(&self) -> GprHyperparameters {
        self.hyper
    }

    pub fn length_scales(&self) -> LengthScales {
        self.shape
    }

    pub fn length_scale(&self) -> f64 {
        self.hyper.length_scale_t
    }

    pub fn signal_variance(&self) -> f64 {
        self.hyper.signal_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.hyper.noise_variance
    }

    /// Training inputs in normalised units.
    pub fn training_inputs(&self) -> &[[f64; 2]] {
        &self.data.inputs
    }

    /// Data-size divisor applied to both inputs.
    pub fn input_scale(&self) -> f64 {
        self.data.input_scale
    }

    pub fn prior_mean(&self) -> f64 {
        self.data.target_mean
    }

    pub fn dual_weights(&self) -> &DVector<f64> {
        &self.dual_weights
    }

    /// Lower-triangular Cholesky factor of `K + σ_n²·I`.
    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol_factor
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    fn cross_kernel(&self, t: f64, m: f64) -> DVector<f64> {
        let q = [t / self.data.input_scale, m / self.data.input_scale];
        DVector::from_iterator(self.data.inputs.len(), self.data.inputs.iter().map(|x| rbf(&q, x, &self.hyper)))
    }

    pub fn predict_mean(&self, t: f64, m: f64) -> f64 {
        self.data.target_mean + self.cross_kernel(t, m).dot(&self.dual_weights)
    }

    pub fn predict(&self, t: f64, m: f64) -> GprPrediction {
        let k_star = self.cross_kernel(t, m);
        let mean = self.data.target_mean + k_star.dot(&self.dual_weights);
        let v = self
            .chol_factor
            .solve_lower_triangular(&k_star)
            .expect("Cholesky factor has a positive diagonal");
        let latent = (self.hyper.signal_variance - v.norm_squared()).max(0.0);
        GprPrediction {
            mean,
            variance: latent + self.hyper.noise_variance,
        }
    }
}

impl Predictor for GprModel {
    fn predict(&self, t: f64, m: f64) -> f64 {
        self.predict_mean(t, m)
    }
}

/// Fits RBF + white-noise hyperparameters by maximising the log marginal
/// likelihood. Start 0 is a fixed heuristic point; the remaining
/// `restarts − 1` starts are drawn uniformly in the log box.
pub fn fit_gpr(obs: &ObservationSet, options: &FitOptions) -> Result<GprModel, FitError> {
    fit_gpr_with(obs, options, LengthScales::Shared)
}

pub fn fit_gpr_with(obs: &ObservationSet, options: &FitOptions, shape: LengthScales) -> Result<GprModel, FitError> {
    options.validate()?;
    let objective = GprObjective::new(obs, shape);
    let (lower, upper) = objective.bounds();

    let mut rng = ChaCha8Rng::seed_from_u64(options.rng_seed);
    let mut starts = vec![objective.initial_point()];
    for _ in 1..options.restarts {
        starts.push(lower.iter().zip(&upper).map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect());
    }

    let settings = BoxSettings {
        max_iterations: options.max_iterations,
        ..BoxSettings::default()
    };
    let negated = |x: &[f64]| {
        objective
            .value_and_gradient(x)
            .map(|(v, g)| (-v, g.into_iter().map(|d| -d).collect()))
    };
    let outcomes: Vec<_> = starts
        .par_iter()
        .map(|x0| lbfgsb::minimize(negated, x0, &lower, &upper, &settings))
        .collect();
    // Lowest negative likelihood wins; ties keep the earliest restart.
    let best = outcomes
        .into_iter()
        .flatten()
        .filter(|o| o.value.is_finite())
        .fold(None::<lbfgsb::BoxOutcome>, |best, o| match best {
            Some(b) if b.value <= o.value => Some(b),
            _ => Some(o),
        })
        .ok_or(FitError::NoConvergence)?;
    GprModel::with_hyperparameters(obs, objective.hyperparameters(&best.x), shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ExperimentContext, Observation};

    fn surface(points: &[(f64, f64)]) -> ObservationSet {
        let ctx = ExperimentContext::new("fi", "en", 1_000_000).unwrap();
        ObservationSet::new(
            ctx,
            points
                .iter()
                .map(|&(t, m)| Observation::new(t, m, 40.0 + 0.5 * t.powf(0.4) + 2.0 * m.powf(0.3)))
                .collect(),
        )
        .unwrap()
    }

    fn grid() -> Vec<(f64, f64)> {
        let axis = [0.0, 500.0, 1500.0, 3000.0, 5000.0];
        axis.iter().flat_map(|&t| axis.iter().map(move |&m| (t, m))).collect()
    }

    #[test]
    fn single_point_prediction_equals_target() {
        let obs = surface(&[(100.0, 100.0)]);
        let model = fit_gpr(&obs, &FitOptions::default()).unwrap();
        let target = obs.observations()[0].pi;
        assert!((model.predict_mean(100.0, 100.0) - target).abs() <= 1e-6);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let obs = surface(&grid());
        for shape in [LengthScales::Shared, LengthScales::PerDimension] {
            let objective = GprObjective::new(&obs, shape);
            let v = objective.target_variance();
            let mut x = vec![0.4f64.ln()];
            if shape == LengthScales::PerDimension {
                x.push(0.7f64.ln());
            }
            x.extend([(0.8 * v).ln(), (0.05 * v).ln()]);
            let (_, grad) = objective.value_and_gradient(&x).unwrap();
            for i in 0..x.len() {
                let h = 1e-5;
                let mut up = x.clone();
                up[i] += h;
                let mut down = x.clone();
                down[i] -= h;
                let fd = (objective.value_and_gradient(&up).unwrap().0 - objective.value_and_gradient(&down).unwrap().0) / (2.0 * h);
                assert!((grad[i] - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "{shape:?} {i}: {} vs {fd}", grad[i]);
            }
        }
    }

    #[test]
    fn prediction_reverts_to_prior_far_away() {
        let obs = surface(&grid());
        let model = fit_gpr(&obs, &FitOptions::default()).unwrap();
        let far = 5000.0 + 25.0 * model.length_scale() * model.input_scale() * 2.0;
        let p = model.predict(far, far);
        assert!((p.mean - model.prior_mean()).abs() < 1e-6);
        assert!((p.variance - (model.signal_variance() + model.noise_variance())).abs() < 1e-6 * model.signal_variance());
    }

    #[test]
    fn variance_at_training_inputs_includes_noise() {
        let obs = surface(&grid());
        let model = fit_gpr(&obs, &FitOptions::default()).unwrap();
        for o in &obs {
            let p = model.predict(o.t, o.m);
            assert!(p.variance >= model.noise_variance());
            assert!(p.variance <= model.noise_variance() + model.signal_variance());
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let obs = surface(&grid());
        let options = FitOptions::default();
        let a = fit_gpr(&obs, &options).unwrap();
        let b = fit_gpr(&obs, &options).unwrap();
        assert_eq!(a.hyperparameters(), b.hyperparameters());
    }

    #[test]
    fn noise_floor_is_enforced() {
        let obs = surface(&grid());
        let model = GprModel::with_hyperparameters(&obs, GprHyperparameters::isotropic(0.3, 10.0, 0.0), LengthScales::Shared).unwrap();
        let v = GprObjective::new(&obs, LengthScales::Shared).target_variance();
        assert!(model.noise_variance() >= NOISE_FLOOR * v);
    }
}
