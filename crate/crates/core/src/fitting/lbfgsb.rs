//! Projected limited-memory BFGS for smooth objectives on a box.
//!
//! Variables pinned at a bound with the gradient pushing outward are frozen
//! for the step; the quasi-Newton direction is built on the remaining free
//! coordinates and the trial point is projected back onto the box.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub(crate) struct BoxSettings {
    pub max_iterations: usize,
    pub memory: usize,
    /// Projected-gradient infinity norm below which the point is stationary.
    pub pg_tolerance: f64,
    /// Relative objective change below which iteration stops.
    pub f_tolerance: f64,
}

impl Default for BoxSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            memory: 10,
            pg_tolerance: 1e-8,
            f_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BoxOutcome {
    pub x: Vec<f64>,
    pub value: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

fn projected_gradient(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| {
            if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

/// Two-loop recursion restricted to the free coordinates (`mask[i] == true`).
fn direction(g: &[f64], mask: &[bool], history: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let masked = |v: &[f64]| -> Vec<f64> { v.iter().zip(mask).map(|(x, &k)| if k { *x } else { 0.0 }).collect() };
    let mut q = masked(g);
    let mut alphas = Vec::with_capacity(history.len());
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = history.iter().map(|(s, y)| (masked(s), masked(y))).collect();
    for (s, y) in pairs.iter().rev() {
        let sy = dot(s, y);
        if sy <= 0.0 {
            alphas.push(0.0);
            continue;
        }
        let a = dot(s, &q) / sy;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y)) = pairs.last() {
        let yy = dot(y, y);
        let sy = dot(s, y);
        if yy > 0.0 && sy > 0.0 {
            let gamma = sy / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for ((s, y), a) in pairs.iter().zip(alphas.iter().rev()) {
        let sy = dot(s, y);
        if sy <= 0.0 {
            continue;
        }
        let b = dot(y, &q) / sy;
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Minimises `objective` over `[lower, upper]`. The objective returns the value
/// and gradient, or `None` where it is undefined (treated as +∞).
pub(crate) fn minimize<F>(objective: F, x0: &[f64], lower: &[f64], upper: &[f64], settings: &BoxSettings) -> Option<BoxOutcome>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = objective(&x).filter(|(f, _)| f.is_finite())?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();

    for iteration in 0..settings.max_iterations {
        let pg = projected_gradient(&x, &g, lower, upper);
        if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) < settings.pg_tolerance {
            break;
        }
        let mask: Vec<bool> = pg.iter().map(|v| *v != 0.0).collect();
        let mut d = direction(&g, &mask, &history);
        if dot(&d, &g) >= 0.0 {
            history.clear();
            d = pg.iter().map(|v| -v).collect();
        }

        let mut step = if iteration == 0 && history.is_empty() {
            (1.0 / dot(&d, &d).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut trial, lower, upper);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if moved.iter().all(|v| *v == 0.0) {
                break;
            }
            if let Some((ft, gt)) = objective(&trial).filter(|(f, _)| f.is_finite()) {
                if ft <= fx + 1e-4 * dot(&g, &moved) {
                    accepted = Some((trial, ft, gt, moved));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((x_new, f_new, g_new, s)) = accepted else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            history.push_back((s, y));
            if history.len() > settings.memory {
                history.pop_front();
            }
        }
        let change = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        if change <= settings.f_tolerance * fx.abs().max(1.0) {
            break;
        }
    }
    Some(BoxOutcome { x, value: fx })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Some((f, g))
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let out = minimize(
            rosenbrock,
            &[-1.2, 1.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &BoxSettings {
                max_iterations: 500,
                f_tolerance: 1e-16,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-5, "{:?}", out.x);
        assert!((out.x[1] - 1.0).abs() < 1e-5, "{:?}", out.x);
    }

    #[test]
    fn active_bound_is_respected() {
        // Minimum of the quadratic is at (3, −2); the box cuts it to (1, −2).
        let f = |x: &[f64]| Some(((x[0] - 3.0).powi(2) + (x[1] + 2.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 2.0)]));
        let out = minimize(f, &[0.0, 0.0], &[-1.0, -4.0], &[1.0, 4.0], &BoxSettings::default()).unwrap();
        assert_eq!(out.x[0], 1.0);
        assert!((out.x[1] + 2.0).abs() < 1e-7);
    }
}
