//! Bounded nonlinear least squares for the AMUE coefficients.
//!
//! Bounds are enforced by reparameterisation: coefficients are `exp(u)` and
//! elasticities are `EXPONENT_CAP · sigmoid(v)`. Levenberg-Marquardt then runs
//! unconstrained on `(u_zs, u_t, v_t, u_m, v_m)`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lm::{self, LmSettings};
use super::metrics::{evaluate_fit, FitReport, Split};
use super::FitOptions;
use crate::error::FitError;
use crate::ingest::ObservationSet;
use crate::model::{power, AmueParams, EXPONENT_CAP};

const PARAMS: usize = 5;
const MIN_COEFFICIENT: f64 = 1e-3;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn to_params(theta: &DVector<f64>) -> [f64; PARAMS] {
    [
        theta[0].exp(),
        theta[1].exp(),
        EXPONENT_CAP * sigmoid(theta[2]),
        theta[3].exp(),
        EXPONENT_CAP * sigmoid(theta[4]),
    ]
}

fn to_theta(p: [f64; PARAMS]) -> DVector<f64> {
    let exponent = |a: f64| logit((a / EXPONENT_CAP).clamp(1e-6, 1.0 - 1e-6));
    DVector::from_vec(vec![
        p[0].max(1e-12).ln(),
        p[1].max(1e-12).ln(),
        exponent(p[2]),
        p[3].max(1e-12).ln(),
        exponent(p[4]),
    ])
}

struct Problem<'a> {
    obs: &'a ObservationSet,
}

impl Problem<'_> {
    fn residuals_and_jacobian(&self, theta: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let [a_zs, a_t, alpha_t, a_m, alpha_m] = to_params(theta);
        let s_t = sigmoid(theta[2]);
        let s_m = sigmoid(theta[4]);
        let dalpha_t = EXPONENT_CAP * s_t * (1.0 - s_t);
        let dalpha_m = EXPONENT_CAP * s_m * (1.0 - s_m);
        let n = self.obs.len();
        let mut r = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, PARAMS);
        for (i, o) in self.obs.iter().enumerate() {
            let pt = power(o.t, alpha_t);
            let pm = power(o.m, alpha_m);
            r[i] = a_zs + a_t * pt + a_m * pm - o.pi;
            jac[(i, 0)] = a_zs;
            jac[(i, 1)] = a_t * pt;
            jac[(i, 2)] = if o.t > 0.0 { a_t * pt * o.t.ln() * dalpha_t } else { 0.0 };
            jac[(i, 3)] = a_m * pm;
            jac[(i, 4)] = if o.m > 0.0 { a_m * pm * o.m.ln() * dalpha_m } else { 0.0 };
        }
        Some((r, jac))
    }
}

/// Starting point from the data: zero-shot offset from the smallest
/// observation, coefficients from two-point slopes at elasticity ½.
fn heuristic_start(obs: &ObservationSet) -> [f64; PARAMS] {
    let min_pi = obs.iter().map(|o| o.pi).fold(f64::INFINITY, f64::min);
    let a_zs = min_pi.max(MIN_COEFFICIENT);
    let slope = |primary: fn(&crate::ingest::Observation) -> f64, other: fn(&crate::ingest::Observation) -> f64| {
        let min_other = obs.iter().map(other).fold(f64::INFINITY, f64::min);
        obs.iter()
            .filter(|o| other(o) == min_other && primary(o) > 0.0)
            .max_by(|a, b| primary(a).total_cmp(&primary(b)))
            .map(|o| ((o.pi - a_zs).max(MIN_COEFFICIENT)) / primary(o).sqrt())
            .unwrap_or(0.1)
    };
    let a_t = slope(|o| o.t, |o| o.m);
    let a_m = slope(|o| o.m, |o| o.t);
    [a_zs, a_t.max(MIN_COEFFICIENT), 0.5, a_m.max(MIN_COEFFICIENT), 0.5]
}

/// Latin-hypercube starts over the parameter box.
fn latin_hypercube(obs: &ObservationSet, count: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; PARAMS]> {
    if count == 0 {
        return Vec::new();
    }
    let max_pi = obs.iter().map(|o| o.pi).fold(0.0, f64::max).max(1.0);
    let mut columns: Vec<Vec<f64>> = (0..PARAMS)
        .map(|_| {
            let mut strata: Vec<f64> = (0..count).map(|k| (k as f64 + rng.random::<f64>()) / count as f64).collect();
            strata.shuffle(rng);
            strata
        })
        .collect();
    let log_coef = |u: f64| (MIN_COEFFICIENT.ln() + u * (10f64.ln() - MIN_COEFFICIENT.ln())).exp();
    let exponent = |u: f64| 0.05 + u * 0.85;
    (0..count)
        .map(|k| {
            let u: Vec<f64> = columns.iter_mut().map(|c| c[k]).collect();
            [
                MIN_COEFFICIENT + u[0] * max_pi,
                log_coef(u[1]),
                exponent(u[2]),
                log_coef(u[3]),
                exponent(u[4]),
            ]
        })
        .collect()
}

/// Result of one multi-start fit, including the per-start objective traces.
#[derive(Debug, Clone)]
pub struct AmueFit {
    pub params: AmueParams,
    pub report: FitReport,
    /// Residual sum of squares at the optimum.
    pub sse: f64,
    /// Index of the winning start (0 is the heuristic start).
    pub best_start: usize,
    /// Residual sum of squares after each accepted iteration, per start.
    pub traces: Vec<Vec<f64>>,
}

/// Least-squares AMUE fit. Returns the best of `options.restarts` starts.
pub fn fit_amue(obs: &ObservationSet, options: &FitOptions) -> Result<(AmueParams, FitReport), FitError> {
    let fit = fit_amue_detailed(obs, options)?;
    Ok((fit.params, fit.report))
}

pub fn fit_amue_detailed(obs: &ObservationSet, options: &FitOptions) -> Result<AmueFit, FitError> {
    options.validate()?;
    if obs.len() < PARAMS {
        return Err(FitError::Underdetermined {
            found: obs.len(),
            needed: PARAMS,
        });
    }
    let first = &obs.observations()[0];
    if obs.iter().all(|o| o.t == first.t && o.m == first.m) {
        return Err(FitError::RankDeficient);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.rng_seed);
    let mut starts = vec![heuristic_start(obs)];
    starts.extend(latin_hypercube(obs, options.restarts - 1, &mut rng));

    let problem = Problem { obs };
    let settings = LmSettings {
        max_iterations: options.max_iterations,
        tolerance: options.tolerance,
    };
    let outcomes: Vec<_> = starts
        .par_iter()
        .map(|start| lm::minimize(|x| problem.residuals_and_jacobian(x), to_theta(*start), &settings))
        .collect();

    let mut best: Option<(usize, &lm::LmOutcome)> = None;
    for (i, outcome) in outcomes.iter().enumerate() {
        if let Some(o) = outcome {
            if o.cost.is_finite() && best.is_none_or(|(_, b)| o.cost < b.cost) {
                best = Some((i, o));
            }
        }
    }
    let (best_start, outcome) = best.ok_or(FitError::NoConvergence)?;
    let p = to_params(&outcome.x);
    let params = AmueParams::new(p[0], p[1], p[2].min(EXPONENT_CAP), p[3], p[4].min(EXPONENT_CAP))?;
    let report = evaluate_fit(&params, obs, Split::Train);
    Ok(AmueFit {
        params,
        report,
        sse: 2.0 * outcome.cost,
        best_start,
        traces: outcomes
            .iter()
            .map(|o| o.as_ref().map(|o| o.history.iter().map(|c| 2.0 * c).collect()).unwrap_or_default())
            .collect(),
    })
}
