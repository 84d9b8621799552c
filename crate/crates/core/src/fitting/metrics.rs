use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::ingest::ObservationSet;

/// Anything that maps `(t, m)` to a performance estimate.
pub trait Predictor {
    fn predict(&self, t: f64, m: f64) -> f64;
}

impl Predictor for crate::model::AmueParams {
    fn predict(&self, t: f64, m: f64) -> f64 {
        self.eval_unchecked(t, m)
    }
}

impl<F: Fn(f64, f64) -> f64> Predictor for F {
    fn predict(&self, t: f64, m: f64) -> f64 {
        self(t, m)
    }
}

/// Fine-tuning setup implied by which data sources are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setup {
    ZeroShot,
    TranslateTrain,
    FewShot,
    Combined,
}

impl Setup {
    pub fn of(t: f64, m: f64) -> Self {
        match (t > 0.0, m > 0.0) {
            (false, false) => Setup::ZeroShot,
            (true, false) => Setup::TranslateTrain,
            (false, true) => Setup::FewShot,
            (true, true) => Setup::Combined,
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setup::ZeroShot => "zero-shot",
            Setup::TranslateTrain => "translate-train",
            Setup::FewShot => "few-shot",
            Setup::Combined => "combined",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub rmse: f64,
    /// `None` when the targets have zero variance and r² is undefined.
    pub r2: Option<f64>,
}

impl Metrics {
    fn compute(pairs: &[(f64, f64)]) -> Self {
        let n = pairs.len() as f64;
        let mean = pairs.iter().map(|(y, _)| y).sum::<f64>() / n;
        let ss_res: f64 = pairs.iter().map(|(y, p)| (y - p).powi(2)).sum();
        let ss_tot: f64 = pairs.iter().map(|(y, _)| (y - mean).powi(2)).sum();
        Self {
            count: pairs.len(),
            rmse: (ss_res / n).sqrt(),
            r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub split: Split,
    pub overall: Metrics,
    /// Only setups that occur in the data are listed.
    pub per_setup: BTreeMap<Setup, Metrics>,
}

/// RMSE and r² overall and per fine-tuning setup.
pub fn evaluate_fit<P: Predictor + ?Sized>(predictor: &P, obs: &ObservationSet, split: Split) -> FitReport {
    let rows: Vec<_> = obs.iter().map(|o| (o.t, o.m, o.pi, predictor.predict(o.t, o.m))).collect();
    report_from_predictions(&rows, split)
}

/// Same report built from `(t, m, observed, predicted)` rows, so predictions
/// from several models can be pooled. `rows` must be non-empty.
pub fn report_from_predictions(rows: &[(f64, f64, f64, f64)], split: Split) -> FitReport {
    let mut groups: BTreeMap<Setup, Vec<(f64, f64)>> = BTreeMap::new();
    let mut all = Vec::with_capacity(rows.len());
    for &(t, m, y, y_hat) in rows {
        all.push((y, y_hat));
        groups.entry(Setup::of(t, m)).or_default().push((y, y_hat));
    }
    FitReport {
        split,
        overall: Metrics::compute(&all),
        per_setup: groups.into_iter().map(|(k, v)| (k, Metrics::compute(&v))).collect(),
    }
}

/// Deterministic shuffled split. The train share is rounded to the nearest
/// count and clamped so both halves are non-empty.
pub fn split_train_test(obs: &ObservationSet, train_fraction: f64, rng_seed: u64) -> Result<(ObservationSet, ObservationSet), FitError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(FitError::InvalidOption {
            name: "train_fraction",
            reason: "must lie strictly between 0 and 1",
        });
    }
    let n = obs.len();
    if n < 2 {
        return Err(FitError::SplitTooSmall(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (train, test) = order.split_at(n_train);
    Ok((obs.subset(train)?, obs.subset(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ExperimentContext, Observation};

    fn set(n: usize) -> ObservationSet {
        let ctx = ExperimentContext::new("sw", "en", 10_000).unwrap();
        ObservationSet::new(
            ctx,
            (0..n)
                .map(|i| Observation::new((i % 4) as f64 * 10.0, (i / 4) as f64 * 7.0, 40.0 + i as f64 * 0.7 + ((i * 7) % 5) as f64))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_and_mean_predictors() {
        let obs = set(12);
        let lookup = |t: f64, m: f64| obs.iter().find(|o| o.t == t && o.m == m).unwrap().pi;
        let report = evaluate_fit(&lookup, &obs, Split::Train);
        assert_eq!(report.overall.rmse, 0.0);
        assert_eq!(report.overall.r2, Some(1.0));

        let mean = obs.targets().iter().sum::<f64>() / obs.len() as f64;
        let report = evaluate_fit(&|_: f64, _: f64| mean, &obs, Split::Test);
        assert!(report.overall.r2.unwrap().abs() < 1e-12);
        let total: usize = report.per_setup.values().map(|m| m.count).sum();
        assert_eq!(total, obs.len());
    }

    #[test]
    fn single_point_setup_has_no_r2() {
        let obs = set(12);
        let report = evaluate_fit(&|_: f64, _: f64| 50.0, &obs, Split::Train);
        assert_eq!(report.per_setup[&Setup::ZeroShot].count, 1);
        assert_eq!(report.per_setup[&Setup::ZeroShot].r2, None);
    }

    #[test]
    fn r2_rmse_identity() {
        let obs = set(20);
        let report = evaluate_fit(&|t: f64, m: f64| 41.0 + 0.2 * t + 0.3 * m, &obs, Split::Train);
        let ys = obs.targets();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
        let r = report.overall;
        let identity = 1.0 - r.rmse.powi(2) * r.count as f64 / ss_tot;
        assert!((r.r2.unwrap() - identity).abs() < 1e-12);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let obs = set(10);
        let (train, test) = split_train_test(&obs, 0.8, 7).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let (train2, _) = split_train_test(&obs, 0.8, 7).unwrap();
        assert_eq!(train, train2);
        let mut all: Vec<_> = train.iter().chain(test.iter()).map(|o| (o.t, o.m)).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected: Vec<_> = obs.iter().map(|o| (o.t, o.m)).collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, expected);
        let differs = (1..=10).any(|s| split_train_test(&obs, 0.8, s).unwrap().0 != train);
        assert!(differs);
        assert!(split_train_test(&obs, 1.0, 0).is_err());
        assert!(split_train_test(&set(1), 0.5, 0).is_err());
    }
}
