//! Levenberg-Marquardt loop for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct LmSettings {
    pub max_iterations: usize,
    /// Stop once an accepted step reduces the cost by less than this fraction.
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub x: DVector<f64>,
    /// Half the residual sum of squares at `x`.
    pub cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub history: Vec<f64>,
}

const LAMBDA_MAX: f64 = 1e16;
const DIAG_FLOOR: f64 = 1e-12;

/// Minimises `½‖r(x)‖²`. `model` returns the residual vector and its Jacobian
/// (rows = residuals), or `None` where the model is undefined.
pub(crate) fn minimize<F>(model: F, x0: DVector<f64>, settings: &LmSettings) -> Option<LmOutcome>
where
    F: Fn(&DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)>,
{
    let mut x = x0;
    let (mut r, mut jac) = model(&x)?;
    let mut cost = 0.5 * r.norm_squared();
    if !cost.is_finite() {
        return None;
    }
    let mut history = vec![cost];
    let mut lambda = 1e-3;

    'outer: for _ in 0..settings.max_iterations {
        if cost == 0.0 {
            break;
        }
        let gradient = jac.tr_mul(&r);
        let normal = jac.tr_mul(&jac);
        let scale = normal.diagonal().map(|d| d.max(DIAG_FLOOR));

        loop {
            let mut damped = normal.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * scale[i];
            }
            let step = match damped.cholesky() {
                Some(chol) => -chol.solve(&gradient),
                None => {
                    lambda *= 10.0;
                    if lambda > LAMBDA_MAX {
                        break 'outer;
                    }
                    continue;
                }
            };
            let candidate = &x + &step;
            let trial = model(&candidate).filter(|(r, _)| r.iter().all(|v| v.is_finite()));
            if let Some((r_new, jac_new)) = trial {
                let cost_new = 0.5 * r_new.norm_squared();
                if cost_new < cost {
                    let reduction = cost - cost_new;
                    let small_step = step.norm() <= 1e-14 * (x.norm() + 1e-14);
                    x = candidate;
                    r = r_new;
                    jac = jac_new;
                    cost = cost_new;
                    history.push(cost);
                    lambda = (lambda / 3.0).max(1e-15);
                    if reduction <= settings.tolerance * (cost + reduction) || small_step {
                        break 'outer;
                    }
                    break;
                }
            }
            lambda *= 4.0;
            if lambda > LAMBDA_MAX {
                break 'outer;
            }
        }
    }
    Some(LmOutcome { x, cost, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_decay() {
        // y = 3·exp(−0.7·x), exact data.
        let xs: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let model = |p: &DVector<f64>| {
            let r = DVector::from_iterator(xs.len(), xs.iter().zip(&ys).map(|(x, y)| p[0] * (-p[1] * x).exp() - y));
            let j = DMatrix::from_fn(xs.len(), 2, |i, k| {
                let e = (-p[1] * xs[i]).exp();
                if k == 0 {
                    e
                } else {
                    -p[0] * xs[i] * e
                }
            });
            Some((r, j))
        };
        let out = minimize(
            model,
            DVector::from_vec(vec![1.0, 0.1]),
            &LmSettings {
                max_iterations: 200,
                tolerance: 1e-15,
            },
        )
        .unwrap();
        assert!((out.x[0] - 3.0).abs() < 1e-9);
        assert!((out.x[1] - 0.7).abs() < 1e-9);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
