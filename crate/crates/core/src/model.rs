//! Closed-form mathematics of the additive unequal-elasticity performance
//! function `Π(T, M) = a_zs + a_t·T^α_t + a_m·M^α_m`.
//!
//! Data sizes are continuous non-negative reals here; rounding to whole
//! example counts is left to the reporting layer.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::roots::increasing_root;

/// Upper bound on both elasticities. Keeps `1/(1 − α_m)` finite.
pub const EXPONENT_CAP: f64 = 1.0 - 1e-4;

/// Coefficients below this are treated as exactly zero when choosing between
/// the interior tangency and the axis special cases.
pub const DEGENERATE_COEFFICIENT: f64 = 1e-10;

/// `x^α` with `0^α = 0` for every `α`, so an absent data source contributes nothing.
#[inline]
pub(crate) fn power(x: f64, alpha: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(alpha)
    }
}

fn check_count(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Domain { name, value })
    }
}

/// The five coefficients of the performance function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAmueParams")]
pub struct AmueParams {
    a_zs: f64,
    a_t: f64,
    alpha_t: f64,
    a_m: f64,
    alpha_m: f64,
}

#[derive(Deserialize)]
struct RawAmueParams {
    a_zs: f64,
    a_t: f64,
    alpha_t: f64,
    a_m: f64,
    alpha_m: f64,
}

impl TryFrom<RawAmueParams> for AmueParams {
    type Error = ModelError;

    fn try_from(raw: RawAmueParams) -> Result<Self, Self::Error> {
        AmueParams::new(raw.a_zs, raw.a_t, raw.alpha_t, raw.a_m, raw.alpha_m)
    }
}

impl AmueParams {
    pub fn new(a_zs: f64, a_t: f64, alpha_t: f64, a_m: f64, alpha_m: f64) -> Result<Self, ModelError> {
        for (name, value) in [("a_zs", a_zs), ("a_t", a_t), ("a_m", a_m)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    reason: "coefficients must be finite and non-negative",
                });
            }
        }
        for (name, value) in [("alpha_t", alpha_t), ("alpha_m", alpha_m)] {
            if !(0.0..=EXPONENT_CAP).contains(&value) {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    reason: "elasticities must lie in [0, 1 - 1e-4]",
                });
            }
        }
        Ok(Self {
            a_zs,
            a_t,
            alpha_t,
            a_m,
            alpha_m,
        })
    }

    pub fn a_zs(&self) -> f64 {
        self.a_zs
    }
    pub fn a_t(&self) -> f64 {
        self.a_t
    }
    pub fn alpha_t(&self) -> f64 {
        self.alpha_t
    }
    pub fn a_m(&self) -> f64 {
        self.a_m
    }
    pub fn alpha_m(&self) -> f64 {
        self.alpha_m
    }

    /// Same coefficients with a different zero-shot offset.
    pub fn with_a_zs(&self, a_zs: f64) -> Result<Self, ModelError> {
        Self::new(a_zs, self.a_t, self.alpha_t, self.a_m, self.alpha_m)
    }

    /// Whether translated data moves performance at all.
    pub fn translated_active(&self) -> bool {
        self.a_t >= DEGENERATE_COEFFICIENT && self.alpha_t > 0.0
    }

    /// Whether manual data moves performance at all.
    pub fn manual_active(&self) -> bool {
        self.a_m >= DEGENERATE_COEFFICIENT && self.alpha_m > 0.0
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, t: f64, m: f64) -> f64 {
        self.a_zs + self.a_t * power(t, self.alpha_t) + self.a_m * power(m, self.alpha_m)
    }

    /// Performance at `t` translated and `m` manual examples.
    pub fn eval(&self, t: f64, m: f64) -> Result<f64, ModelError> {
        check_count("t", t)?;
        check_count("m", m)?;
        Ok(self.eval_unchecked(t, m))
    }

    /// Translate-train performance: all `p` pivot examples translated, no manual data.
    pub fn translate_train_perf(&self, p: f64) -> Result<f64, ModelError> {
        check_count("p", p)?;
        Ok(self.eval_unchecked(p, 0.0))
    }

    /// Few-shot performance with `k` manual examples and no translation.
    pub fn few_shot_perf(&self, k: f64) -> Result<f64, ModelError> {
        check_count("k", k)?;
        Ok(self.eval_unchecked(0.0, k))
    }

    fn check_level(&self, pi_c: f64) -> Result<(), ModelError> {
        if pi_c.is_finite() && pi_c >= self.a_zs {
            Ok(())
        } else {
            Err(ModelError::InfeasiblePerformance {
                level: pi_c,
                a_zs: self.a_zs,
            })
        }
    }

    /// Manual data needed to reach `pi_c` given `t` translated examples.
    ///
    /// `None` when `t` alone already exceeds `pi_c`, i.e. the isoperf does not
    /// pass above this `t`.
    pub fn isoperf_m_of_t(&self, pi_c: f64, t: f64) -> Result<Option<f64>, ModelError> {
        self.check_level(pi_c)?;
        check_count("t", t)?;
        if !self.manual_active() {
            return Err(ModelError::DegenerateIsoperf);
        }
        let remaining = pi_c - self.a_zs - self.a_t * power(t, self.alpha_t);
        if remaining < 0.0 {
            return Ok(None);
        }
        Ok(Some((remaining / self.a_m).powf(1.0 / self.alpha_m)))
    }

    /// `dM/dT` along the isoperf through `(t, m)`. Never positive.
    pub fn isoperf_slope(&self, t: f64, m: f64) -> Result<f64, ModelError> {
        check_count("t", t)?;
        check_count("m", m)?;
        if !self.manual_active() {
            return Err(ModelError::DegenerateIsoperf);
        }
        if t == 0.0 || m == 0.0 {
            return Err(ModelError::SingularSlope { t, m });
        }
        if !self.translated_active() {
            return Ok(0.0);
        }
        let ratio = (self.alpha_t * self.a_t) / (self.alpha_m * self.a_m);
        Ok(-ratio * t.powf(self.alpha_t - 1.0) / m.powf(self.alpha_m - 1.0))
    }

    /// Manual data on the expansion path (locus of tangencies) at `t` translated examples.
    pub fn expansion_path_m_of_t(&self, cost: &CostModel, t: f64) -> Result<f64, ModelError> {
        check_count("t", t)?;
        if !self.translated_active() {
            return Err(ModelError::DegeneratePath);
        }
        if !self.manual_active() {
            return Ok(0.0);
        }
        Ok(self.path_m_unchecked(cost, t))
    }

    #[inline]
    fn path_m_unchecked(&self, cost: &CostModel, t: f64) -> f64 {
        let scale = (cost.c_t * self.a_m * self.alpha_m) / (cost.c_m * self.a_t * self.alpha_t);
        let inv = 1.0 / (1.0 - self.alpha_m);
        scale.powf(inv) * power(t, (1.0 - self.alpha_t) * inv)
    }

    /// Slope of the expansion path when both elasticities equal `α_m`:
    /// `(c_t·a_m / (c_m·a_t))^(1/(1−α_m))`.
    pub fn homogeneous_path_slope(&self, cost: &CostModel) -> Result<f64, ModelError> {
        if !self.translated_active() {
            return Err(ModelError::DegeneratePath);
        }
        Ok((cost.c_t * self.a_m / (cost.c_m * self.a_t)).powf(1.0 / (1.0 - self.alpha_m)))
    }

    fn point(&self, cost: &CostModel, t: f64, m: f64, on_boundary: bool) -> OperatingPoint {
        OperatingPoint {
            t,
            m,
            pi: self.eval_unchecked(t, m),
            cost: cost.cost_unchecked(t, m),
            on_boundary,
        }
    }

    /// Unconstrained least-cost point on the isoperf `pi_c`: where the isocost
    /// of slope `−c_t/c_m` touches it.
    pub fn tangency_point(&self, cost: &CostModel, pi_c: f64) -> Result<OperatingPoint, ModelError> {
        self.check_level(pi_c)?;
        if pi_c == self.a_zs {
            return Ok(self.point(cost, 0.0, 0.0, false));
        }
        match (self.translated_active(), self.manual_active()) {
            (false, false) => Err(ModelError::InfeasiblePerformance {
                level: pi_c,
                a_zs: self.a_zs,
            }),
            (false, true) => {
                let m = self
                    .isoperf_m_of_t(pi_c, 0.0)?
                    .expect("level at or above a_zs has a T = 0 intercept");
                Ok(self.point(cost, 0.0, m, false))
            }
            (true, false) => {
                let t = ((pi_c - self.a_zs) / self.a_t).powf(1.0 / self.alpha_t);
                Ok(self.point(cost, t, 0.0, false))
            }
            (true, true) => {
                // Performance along the path is strictly increasing in t.
                let gap = |t: f64| self.eval_unchecked(t, self.path_m_unchecked(cost, t)) - pi_c;
                let t = increasing_root(gap, 1.0).ok_or(ModelError::NoBracket { level: pi_c })?;
                let m = self.path_m_unchecked(cost, t);
                Ok(self.point(cost, t, m, false))
            }
        }
    }

    /// Least-cost point on the isoperf `pi_c` restricted to the realizable region.
    pub fn least_cost_point(
        &self,
        cost: &CostModel,
        region: &RealizableRegion,
        pi_c: f64,
    ) -> Result<OperatingPoint, ModelError> {
        let tangency = self.tangency_point(cost, pi_c)?;
        if tangency.t <= region.p_max {
            return Ok(tangency);
        }
        let unrealizable = ModelError::Unrealizable {
            level: pi_c,
            required_t: tangency.t,
            p_max: region.p_max,
        };
        if !self.manual_active() {
            return Err(unrealizable);
        }
        // Cost along a convex isoperf is convex in t, so the strip optimum sits on T = p_max.
        let m = self.isoperf_m_of_t(pi_c, region.p_max)?.ok_or(unrealizable)?;
        Ok(self.point(cost, region.p_max, m, true))
    }

    /// Least-cost points for increasing performance levels.
    pub fn trace_expansion_path(
        &self,
        cost: &CostModel,
        region: &RealizableRegion,
        levels: &[f64],
    ) -> Result<ExpansionPath, ModelError> {
        for (index, pair) in levels.windows(2).enumerate() {
            if !(pair[1] > pair[0]) {
                return Err(ModelError::UnorderedLevels {
                    index: index + 1,
                    value: pair[1],
                });
            }
        }
        if let Some(&first) = levels.first() {
            if !(first > self.a_zs) {
                return Err(ModelError::InfeasiblePerformance {
                    level: first,
                    a_zs: self.a_zs,
                });
            }
        }
        let points = levels
            .iter()
            .map(|&pi| self.least_cost_point(cost, region, pi))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ExpansionPath { points })
    }

    /// `(performance, minimum cost)` pairs along the expansion path.
    pub fn min_cost_curve(
        &self,
        cost: &CostModel,
        region: &RealizableRegion,
        levels: &[f64],
    ) -> Result<Vec<(f64, f64)>, ModelError> {
        let path = self.trace_expansion_path(cost, region, levels)?;
        Ok(path.points.iter().map(|p| (p.pi, p.cost)).collect())
    }
}

/// Unit prices of a translated and a manually created example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCostModel")]
pub struct CostModel {
    c_t: f64,
    c_m: f64,
}

#[derive(Deserialize)]
struct RawCostModel {
    c_t: f64,
    c_m: f64,
}

impl TryFrom<RawCostModel> for CostModel {
    type Error = ModelError;

    fn try_from(raw: RawCostModel) -> Result<Self, Self::Error> {
        CostModel::new(raw.c_t, raw.c_m)
    }
}

impl CostModel {
    pub fn new(c_t: f64, c_m: f64) -> Result<Self, ModelError> {
        for (name, value) in [("c_t", c_t), ("c_m", c_m)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    reason: "unit costs must be finite and strictly positive",
                });
            }
        }
        Ok(Self { c_t, c_m })
    }

    /// Builds the model from the translation price and the ratio `c_t / c_m`.
    pub fn from_ratio(c_t: f64, cost_ratio: f64) -> Result<Self, ModelError> {
        if !(cost_ratio.is_finite() && cost_ratio > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "cost_ratio",
                value: cost_ratio,
                reason: "cost ratio must be finite and strictly positive",
            });
        }
        Self::new(c_t, c_t / cost_ratio)
    }

    pub fn c_t(&self) -> f64 {
        self.c_t
    }
    pub fn c_m(&self) -> f64 {
        self.c_m
    }

    /// Relative cheapness of translation, `c_t / c_m`.
    pub fn cost_ratio(&self) -> f64 {
        self.c_t / self.c_m
    }

    /// Slope of every isocost line in the (T, M) plane.
    pub fn isocost_slope(&self) -> f64 {
        -self.cost_ratio()
    }

    #[inline]
    pub(crate) fn cost_unchecked(&self, t: f64, m: f64) -> f64 {
        self.c_t * t + self.c_m * m
    }

    pub fn total_cost(&self, t: f64, m: f64) -> Result<f64, ModelError> {
        check_count("t", t)?;
        check_count("m", m)?;
        Ok(self.cost_unchecked(t, m))
    }
}

/// Translated data cannot exceed the pivot set: `0 ≤ T ≤ p_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizableRegion {
    p_max: f64,
}

impl RealizableRegion {
    pub fn new(p_max: f64) -> Result<Self, ModelError> {
        if p_max.is_nan() || p_max < 0.0 {
            return Err(ModelError::Domain {
                name: "p_max",
                value: p_max,
            });
        }
        Ok(Self { p_max })
    }

    pub fn unbounded() -> Self {
        Self { p_max: f64::INFINITY }
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn contains(&self, t: f64, m: f64) -> bool {
        (0.0..=self.p_max).contains(&t) && m >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub t: f64,
    pub m: f64,
    pub pi: f64,
    pub cost: f64,
    /// Set when the point sits on `T = p_max` instead of an interior tangency.
    pub on_boundary: bool,
}

/// Least-cost points ordered by increasing performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPath {
    points: Vec<OperatingPoint>,
}

impl ExpansionPath {
    pub fn points(&self) -> &[OperatingPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, OperatingPoint> {
        self.points.iter()
    }
}

impl<'a> IntoIterator for &'a ExpansionPath {
    type Item = &'a OperatingPoint;
    type IntoIter = std::slice::Iter<'a, OperatingPoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> AmueParams {
        AmueParams::new(40.0, 0.5, 0.4, 2.0, 0.3).unwrap()
    }

    fn swahili(a_zs: f64) -> AmueParams {
        AmueParams::new(a_zs, 5.2e-2, 0.42, 1.1, 0.37).unwrap()
    }

    #[test]
    fn rejects_out_of_bound_params() {
        assert!(AmueParams::new(-1.0, 0.5, 0.4, 2.0, 0.3).is_err());
        assert!(AmueParams::new(40.0, 0.5, 1.0, 2.0, 0.3).is_err());
        assert!(AmueParams::new(40.0, 0.5, 0.4, 2.0, -0.1).is_err());
        assert!(AmueParams::new(40.0, f64::NAN, 0.4, 2.0, 0.3).is_err());
        assert!(AmueParams::new(0.0, 0.0, 0.0, 0.0, EXPONENT_CAP).is_ok());
    }

    #[test]
    fn deserialization_validates() {
        let bad: Result<AmueParams, _> = serde_json::from_str(
            r#"{"a_zs":1,"a_t":1,"alpha_t":1.5,"a_m":1,"alpha_m":0.3}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn eval_zero_data_is_zero_shot() {
        assert_eq!(reference().eval(0.0, 0.0).unwrap(), 40.0);
        assert_eq!(swahili(51.3).eval(0.0, 0.0).unwrap(), 51.3);
        // α = 0 still contributes nothing at zero data.
        let flat = AmueParams::new(10.0, 3.0, 0.0, 2.0, 0.0).unwrap();
        assert_eq!(flat.eval(0.0, 0.0).unwrap(), 10.0);
        assert_eq!(flat.eval(5.0, 0.0).unwrap(), 13.0);
    }

    #[test]
    fn eval_reference_values() {
        // 40 + 0.5·1024^0.4 = 40 + 0.5·16 = 48.0 exactly (1024^0.4 = 2^4).
        assert_relative_eq!(reference().eval(1024.0, 0.0).unwrap(), 48.0, epsilon = 1e-12);
        assert!(reference().eval(-1.0, 0.0).is_err());
        assert!(reference().eval(0.0, f64::NAN).is_err());
    }

    #[test]
    fn special_setups() {
        let p = reference();
        let expected = 40.0 + 0.5 * (0.4 * 3696f64.ln()).exp();
        assert_relative_eq!(p.translate_train_perf(3696.0).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(p.translate_train_perf(3696.0).unwrap(), 53.3679, epsilon = 1e-3);
        assert_relative_eq!(p.few_shot_perf(500.0).unwrap(), 52.9039, epsilon = 1e-3);
        let no_t = p.with_a_zs(40.0).unwrap();
        let no_t = AmueParams::new(no_t.a_zs(), 0.0, 0.4, 2.0, 0.3).unwrap();
        assert_eq!(no_t.translate_train_perf(1e6).unwrap(), 40.0);
        assert!(p.few_shot_perf(-3.0).is_err());
    }

    #[test]
    fn total_cost_arithmetic() {
        let cm = CostModel::new(0.007, 0.7).unwrap();
        assert_relative_eq!(cm.total_cost(1000.0, 100.0).unwrap(), 77.0, epsilon = 1e-12);
        assert_eq!(cm.total_cost(0.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            cm.total_cost(200.0, 30.0).unwrap(),
            2.0 * cm.total_cost(100.0, 15.0).unwrap()
        );
        assert!(cm.total_cost(-1.0, 0.0).is_err());
        assert!(CostModel::new(0.0, 1.0).is_err());
        assert_relative_eq!(CostModel::from_ratio(0.007, 0.01).unwrap().c_m(), 0.7);
    }

    #[test]
    fn isoperf_intercept_and_errors() {
        let p = reference();
        let m0 = p.isoperf_m_of_t(60.0, 0.0).unwrap().unwrap();
        assert_relative_eq!(m0, (20.0f64 / 2.0).powf(1.0 / 0.3), max_relative = 1e-14);
        assert!(matches!(
            p.isoperf_m_of_t(39.0, 0.0),
            Err(ModelError::InfeasiblePerformance { .. })
        ));
        let no_m = AmueParams::new(40.0, 0.5, 0.4, 0.0, 0.3).unwrap();
        assert_eq!(no_m.isoperf_m_of_t(60.0, 1.0), Err(ModelError::DegenerateIsoperf));
        // T alone at 1e8 gives 40 + 0.5·1e8^0.4 = 40 + 0.5·1584.9 > 60.
        assert_eq!(p.isoperf_m_of_t(60.0, 1e8).unwrap(), None);
    }

    #[test]
    fn isoperf_round_trip_against_root_oracle() {
        let p = reference();
        let m = p.isoperf_m_of_t(60.0, 1000.0).unwrap().unwrap();
        assert_relative_eq!(p.eval(1000.0, m).unwrap(), 60.0, max_relative = 1e-9);
        // Independent route: bisect the manual term directly.
        let oracle = crate::roots::bisect_bracket(
            |m| 40.0 + 0.5 * 1000f64.powf(0.4) + 2.0 * m.powf(0.3) - 60.0,
            0.0,
            1e7,
            200,
        );
        assert_relative_eq!(m, oracle, max_relative = 1e-9);
    }

    #[test]
    fn slope_special_cases() {
        let sym = AmueParams::new(10.0, 1.3, 0.45, 1.3, 0.45).unwrap();
        assert_relative_eq!(sym.isoperf_slope(77.0, 77.0).unwrap(), -1.0, epsilon = 1e-14);
        let no_t = AmueParams::new(10.0, 0.0, 0.45, 1.3, 0.45).unwrap();
        assert_eq!(no_t.isoperf_slope(5.0, 9.0).unwrap(), 0.0);
        assert!(matches!(sym.isoperf_slope(0.0, 1.0), Err(ModelError::SingularSlope { .. })));
        assert!(matches!(sym.isoperf_slope(1.0, 0.0), Err(ModelError::SingularSlope { .. })));
    }

    #[test]
    fn slope_matches_finite_difference() {
        let p = reference();
        for &t in &[10.0, 250.0, 1000.0, 4000.0] {
            let m = p.isoperf_m_of_t(60.0, t).unwrap().unwrap();
            let h = t * 1e-5;
            let up = p.isoperf_m_of_t(60.0, t + h).unwrap().unwrap();
            let down = p.isoperf_m_of_t(60.0, t - h).unwrap().unwrap();
            let fd = (up - down) / (2.0 * h);
            assert_relative_eq!(p.isoperf_slope(t, m).unwrap(), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn path_with_equal_elasticities_and_balanced_costs_is_unit_slope() {
        let p = AmueParams::new(30.0, 0.8, 0.35, 2.4, 0.35).unwrap();
        // c_t·a_m = c_m·a_t → 0.3·2.4 = 0.9·0.8
        let cm = CostModel::new(0.3, 0.9).unwrap();
        for &t in &[1.0, 17.0, 1234.5] {
            assert_relative_eq!(p.expansion_path_m_of_t(&cm, t).unwrap(), t, max_relative = 1e-12);
        }
    }

    #[test]
    fn degenerate_path_is_reported() {
        let te = AmueParams::new(30.0, 5.1e-19, 0.25, 12.0, 0.15).unwrap();
        let cm = CostModel::from_ratio(0.007, 0.1).unwrap();
        assert_eq!(te.expansion_path_m_of_t(&cm, 10.0), Err(ModelError::DegeneratePath));
        let point = te.tangency_point(&cm, 60.0).unwrap();
        assert_eq!(point.t, 0.0);
        assert_relative_eq!(point.pi, 60.0, max_relative = 1e-12);
    }

    #[test]
    fn homogeneous_slope_for_swahili() {
        let sw = swahili(50.0);
        let s1 = sw.homogeneous_path_slope(&CostModel::from_ratio(0.007, 0.1).unwrap()).unwrap();
        let s2 = sw.homogeneous_path_slope(&CostModel::from_ratio(0.007, 0.01).unwrap()).unwrap();
        assert!((s1 - 3.2).abs() <= 0.15, "{s1}");
        assert!((s2 - 0.08).abs() <= 0.01, "{s2}");
    }

    #[test]
    fn symmetric_tangency_sits_on_diagonal() {
        let p = AmueParams::new(0.0, 1.0, 0.5, 1.0, 0.5).unwrap();
        let cm = CostModel::new(2.0, 2.0).unwrap();
        let point = p.tangency_point(&cm, 20.0).unwrap();
        assert_relative_eq!(point.t, point.m, max_relative = 1e-12);
        assert_relative_eq!(point.t, 100.0, max_relative = 1e-12);
    }

    #[test]
    fn tangency_slope_condition() {
        let p = reference();
        let cm = CostModel::new(0.007, 0.7).unwrap();
        let point = p.tangency_point(&cm, 60.0).unwrap();
        let slope = p.isoperf_slope(point.t, point.m).unwrap();
        assert!((slope + cm.cost_ratio()).abs() <= 1e-6 * cm.cost_ratio());
        assert_relative_eq!(point.pi, 60.0, max_relative = 1e-9);
        assert!(!point.on_boundary);
    }

    #[test]
    fn axis_fallbacks() {
        let cm = CostModel::new(1.0, 1.0).unwrap();
        let only_t = AmueParams::new(10.0, 2.0, 0.5, 0.0, 0.5).unwrap();
        let point = only_t.tangency_point(&cm, 30.0).unwrap();
        assert_relative_eq!(point.t, 100.0, max_relative = 1e-12);
        assert_eq!(point.m, 0.0);
        let region = RealizableRegion::new(50.0).unwrap();
        assert!(matches!(
            only_t.least_cost_point(&cm, &region, 30.0),
            Err(ModelError::Unrealizable { .. })
        ));
        let nothing = AmueParams::new(10.0, 0.0, 0.5, 0.0, 0.5).unwrap();
        assert!(nothing.tangency_point(&cm, 11.0).is_err());
        assert!(reference().tangency_point(&cm, 39.0).is_err());
    }

    #[test]
    fn region_collapsed_to_zero_is_few_shot() {
        let p = reference();
        let cm = CostModel::new(0.007, 0.7).unwrap();
        let region = RealizableRegion::new(0.0).unwrap();
        let point = p.least_cost_point(&cm, &region, 60.0).unwrap();
        assert_eq!(point.t, 0.0);
        assert_relative_eq!(point.m, p.isoperf_m_of_t(60.0, 0.0).unwrap().unwrap());
        assert!(point.on_boundary);
    }

    #[test]
    fn inactive_region_matches_tangency() {
        let p = reference();
        let cm = CostModel::new(0.007, 0.7).unwrap();
        let tangency = p.tangency_point(&cm, 60.0).unwrap();
        let bounded = RealizableRegion::new(tangency.t * 2.0).unwrap();
        assert_eq!(p.least_cost_point(&cm, &bounded, 60.0).unwrap(), tangency);
        assert_eq!(
            p.least_cost_point(&cm, &RealizableRegion::unbounded(), 60.0).unwrap(),
            tangency
        );
    }

    #[test]
    fn trace_rejects_unordered_levels() {
        let p = reference();
        let cm = CostModel::new(0.007, 0.7).unwrap();
        let region = RealizableRegion::unbounded();
        assert!(matches!(
            p.trace_expansion_path(&cm, &region, &[50.0, 50.0]),
            Err(ModelError::UnorderedLevels { index: 1, .. })
        ));
        assert!(p.trace_expansion_path(&cm, &region, &[40.0, 50.0]).is_err());
        let path = p.trace_expansion_path(&cm, &region, &[45.0, 50.0, 55.0]).unwrap();
        assert_eq!(path.len(), 3);
        assert!(path.points().windows(2).all(|w| w[1].cost >= w[0].cost));
    }

    #[test]
    fn telugu_trace_follows_manual_axis() {
        let te = AmueParams::new(30.0, 5.1e-19, 0.25, 12.0, 0.15).unwrap();
        let cm = CostModel::from_ratio(0.007, 0.1).unwrap();
        let region = RealizableRegion::new(3696.0).unwrap();
        let path = te.trace_expansion_path(&cm, &region, &[40.0, 50.0, 60.0, 70.0]).unwrap();
        assert!(path.iter().all(|p| p.t == 0.0));
    }

    #[test]
    fn min_cost_near_zero_shot_is_cheap() {
        let p = reference();
        let cm = CostModel::new(0.007, 0.7).unwrap();
        let curve = p
            .min_cost_curve(&cm, &RealizableRegion::unbounded(), &[40.0 + 1e-6, 50.0, 60.0])
            .unwrap();
        assert!(curve[0].1 < 1e-6);
        assert!(curve[1].1 > curve[0].1 && curve[2].1 > curve[1].1);
    }
}
