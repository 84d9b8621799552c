//! Python bindings: closed-form analysis, fitting, loading and rendering.
//!
//! Errors from the core crate surface as `ValueError` (bad input) or
//! `RuntimeError` (numerical failure).

use std::collections::BTreeMap;

use perfunc_core::analysis::{self, amue_bundles, gpr_isoperf_contour, GridSpec, Trend};
use perfunc_core::fitting::{self, FitOptions, FitReport, Predictor, Split};
use perfunc_core::ingest::{self, ExperimentContext, Observation, Schema};
use perfunc_core::model::{self, RealizableRegion};
use perfunc_core::render::{self, CostCurveSpec, Series, TmDiagramSpec};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn region(p_max: Option<f64>) -> PyResult<RealizableRegion> {
    p_max.map_or(Ok(RealizableRegion::unbounded()), |p| RealizableRegion::new(p).map_err(value_err))
}

fn options(restarts: usize, seed: u64) -> FitOptions {
    FitOptions {
        restarts,
        rng_seed: seed,
        ..FitOptions::default()
    }
}

fn report_dict<'py>(py: Python<'py>, report: &FitReport) -> PyResult<Bound<'py, PyDict>> {
    let metrics = |m: &fitting::Metrics| -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("count", m.count)?;
        d.set_item("rmse", m.rmse)?;
        d.set_item("r2", m.r2)?;
        Ok(d)
    };
    let out = PyDict::new(py);
    out.set_item("split", if report.split == Split::Train { "train" } else { "test" })?;
    out.set_item("overall", metrics(&report.overall)?)?;
    let per = PyDict::new(py);
    for (setup, m) in &report.per_setup {
        per.set_item(setup.to_string(), metrics(m)?)?;
    }
    out.set_item("per_setup", per)?;
    Ok(out)
}

/// Unit prices of translated and manual examples.
#[pyclass(frozen, from_py_object, name = "CostModel", module = "perfunc")]
#[derive(Clone)]
struct PyCostModel(model::CostModel);

#[pymethods]
impl PyCostModel {
    #[new]
    fn new(c_t: f64, c_m: f64) -> PyResult<Self> {
        model::CostModel::new(c_t, c_m).map(Self).map_err(value_err)
    }

    /// Build from c_t and the ratio c_t / c_m.
    #[staticmethod]
    fn from_ratio(c_t: f64, cost_ratio: f64) -> PyResult<Self> {
        model::CostModel::from_ratio(c_t, cost_ratio).map(Self).map_err(value_err)
    }

    #[getter]
    fn c_t(&self) -> f64 {
        self.0.c_t()
    }

    #[getter]
    fn c_m(&self) -> f64 {
        self.0.c_m()
    }

    #[getter]
    fn cost_ratio(&self) -> f64 {
        self.0.cost_ratio()
    }

    #[getter]
    fn isocost_slope(&self) -> f64 {
        self.0.isocost_slope()
    }

    fn total_cost(&self, t: f64, m: f64) -> PyResult<f64> {
        self.0.total_cost(t, m).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("CostModel(c_t={}, c_m={})", self.0.c_t(), self.0.c_m())
    }
}

#[pyclass(frozen, from_py_object, name = "OperatingPoint", module = "perfunc")]
#[derive(Clone)]
struct PyOperatingPoint(model::OperatingPoint);

#[pymethods]
impl PyOperatingPoint {
    #[getter]
    fn t(&self) -> f64 {
        self.0.t
    }

    #[getter]
    fn m(&self) -> f64 {
        self.0.m
    }

    #[getter]
    fn pi(&self) -> f64 {
        self.0.pi
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.0.cost
    }

    #[getter]
    fn on_boundary(&self) -> bool {
        self.0.on_boundary
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!("OperatingPoint(t={}, m={}, pi={}, cost={}, on_boundary={})", p.t, p.m, p.pi, p.cost, p.on_boundary)
    }
}

fn points(list: &[model::OperatingPoint]) -> Vec<PyOperatingPoint> {
    list.iter().copied().map(PyOperatingPoint).collect()
}

/// Π = a_zs + a_t·T^α_t + a_m·M^α_m.
#[pyclass(frozen, from_py_object, name = "AmueParams", module = "perfunc")]
#[derive(Clone)]
struct PyAmueParams(model::AmueParams);

#[pymethods]
impl PyAmueParams {
    #[new]
    fn new(a_zs: f64, a_t: f64, alpha_t: f64, a_m: f64, alpha_m: f64) -> PyResult<Self> {
        model::AmueParams::new(a_zs, a_t, alpha_t, a_m, alpha_m).map(Self).map_err(value_err)
    }

    #[getter]
    fn a_zs(&self) -> f64 {
        self.0.a_zs()
    }

    #[getter]
    fn a_t(&self) -> f64 {
        self.0.a_t()
    }

    #[getter]
    fn alpha_t(&self) -> f64 {
        self.0.alpha_t()
    }

    #[getter]
    fn a_m(&self) -> f64 {
        self.0.a_m()
    }

    #[getter]
    fn alpha_m(&self) -> f64 {
        self.0.alpha_m()
    }

    fn eval(&self, t: f64, m: f64) -> PyResult<f64> {
        self.0.eval(t, m).map_err(value_err)
    }

    fn translate_train_perf(&self, p: f64) -> PyResult<f64> {
        self.0.translate_train_perf(p).map_err(value_err)
    }

    fn few_shot_perf(&self, k: f64) -> PyResult<f64> {
        self.0.few_shot_perf(k).map_err(value_err)
    }

    /// M on the isoperf at level `pi_c` for a given T, or None past its T intercept.
    fn isoperf_m_of_t(&self, pi_c: f64, t: f64) -> PyResult<Option<f64>> {
        self.0.isoperf_m_of_t(pi_c, t).map_err(value_err)
    }

    fn isoperf_slope(&self, t: f64, m: f64) -> PyResult<f64> {
        self.0.isoperf_slope(t, m).map_err(value_err)
    }

    fn expansion_path_m_of_t(&self, cost: &PyCostModel, t: f64) -> PyResult<f64> {
        self.0.expansion_path_m_of_t(&cost.0, t).map_err(value_err)
    }

    fn homogeneous_path_slope(&self, cost: &PyCostModel) -> PyResult<f64> {
        self.0.homogeneous_path_slope(&cost.0).map_err(value_err)
    }

    fn tangency_point(&self, cost: &PyCostModel, pi_c: f64) -> PyResult<PyOperatingPoint> {
        self.0.tangency_point(&cost.0, pi_c).map(PyOperatingPoint).map_err(value_err)
    }

    #[pyo3(signature = (cost, pi_c, p_max=None))]
    fn least_cost_point(&self, cost: &PyCostModel, pi_c: f64, p_max: Option<f64>) -> PyResult<PyOperatingPoint> {
        self.0
            .least_cost_point(&cost.0, &region(p_max)?, pi_c)
            .map(PyOperatingPoint)
            .map_err(value_err)
    }

    #[pyo3(signature = (cost, levels, p_max=None))]
    fn trace_expansion_path(&self, cost: &PyCostModel, levels: Vec<f64>, p_max: Option<f64>) -> PyResult<Vec<PyOperatingPoint>> {
        let path = self.0.trace_expansion_path(&cost.0, &region(p_max)?, &levels).map_err(value_err)?;
        Ok(points(path.points()))
    }

    /// `(performance, minimum cost)` pairs.
    #[pyo3(signature = (cost, levels, p_max=None))]
    fn min_cost_curve(&self, cost: &PyCostModel, levels: Vec<f64>, p_max: Option<f64>) -> PyResult<Vec<(f64, f64)>> {
        self.0.min_cost_curve(&cost.0, &region(p_max)?, &levels).map_err(value_err)
    }

    /// "increasing", "decreasing" or "constant" M/T ratio along the expansion path.
    #[pyo3(signature = (tol=analysis::DEFAULT_TREND_TOLERANCE))]
    fn mt_trend(&self, tol: f64) -> &'static str {
        match analysis::classify_mt_trend(&self.0, tol).trend {
            Trend::Increasing => "increasing",
            Trend::Decreasing => "decreasing",
            Trend::Constant => "constant",
        }
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "AmueParams(a_zs={}, a_t={}, alpha_t={}, a_m={}, alpha_m={})",
            p.a_zs(),
            p.a_t(),
            p.alpha_t(),
            p.a_m(),
            p.alpha_m()
        )
    }
}

/// Observations for one (language, pivot size) pair.
#[pyclass(frozen, from_py_object, name = "ObservationSet", module = "perfunc")]
#[derive(Clone)]
struct PyObservationSet(ingest::ObservationSet);

#[pymethods]
impl PyObservationSet {
    #[new]
    #[pyo3(signature = (language, pivot_size, t, m, pi, pivot_language="en"))]
    fn new(language: &str, pivot_size: u64, t: Vec<f64>, m: Vec<f64>, pi: Vec<f64>, pivot_language: &str) -> PyResult<Self> {
        if t.len() != m.len() || t.len() != pi.len() {
            return Err(PyValueError::new_err("t, m and pi must have the same length"));
        }
        let ctx = ExperimentContext::new(language, pivot_language, pivot_size).map_err(value_err)?;
        let obs = t.into_iter().zip(m).zip(pi).map(|((t, m), pi)| Observation::new(t, m, pi)).collect();
        ingest::ObservationSet::new(ctx, obs).map(Self).map_err(value_err)
    }

    #[getter]
    fn language(&self) -> String {
        self.0.context().language.clone()
    }

    #[getter]
    fn pivot_size(&self) -> u64 {
        self.0.context().pivot_size
    }

    /// `(t, m, pi)` triples.
    fn rows(&self) -> Vec<(f64, f64, f64)> {
        self.0.iter().map(|o| (o.t, o.m, o.pi)).collect()
    }

    fn aggregate_seeds(&self) -> Self {
        Self(self.0.aggregate_seeds())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("ObservationSet(language={:?}, pivot_size={}, n={})", self.language(), self.pivot_size(), self.0.len())
    }
}

/// Gaussian-process performance function (RBF + white noise kernel).
#[pyclass(frozen, name = "GprModel", module = "perfunc")]
struct PyGprModel(fitting::GprModel);

#[pymethods]
impl PyGprModel {
    /// `(mean, variance)` of the predictive distribution.
    fn predict(&self, t: f64, m: f64) -> (f64, f64) {
        let p = self.0.predict(t, m);
        (p.mean, p.variance)
    }

    #[getter]
    fn log_marginal_likelihood(&self) -> f64 {
        self.0.log_marginal_likelihood()
    }

    #[getter]
    fn hyperparameters(&self) -> BTreeMap<&'static str, f64> {
        let h = self.0.hyperparameters();
        BTreeMap::from([
            ("length_scale_t", h.length_scale_t),
            ("length_scale_m", h.length_scale_m),
            ("signal_variance", h.signal_variance),
            ("noise_variance", h.noise_variance),
        ])
    }

    /// Isoperf polylines traced on an `n × n` grid over `[0, t_max] × [0, m_max]`.
    #[pyo3(signature = (pi_c, t_max, m_max, n=analysis::DEFAULT_GRID_RESOLUTION))]
    fn isoperf(&self, pi_c: f64, t_max: f64, m_max: f64, n: usize) -> PyResult<Vec<Vec<(f64, f64)>>> {
        let grid = GridSpec::new(t_max, m_max, n, n).map_err(value_err)?;
        Ok(gpr_isoperf_contour(&self.0, pi_c, &grid).into_iter().map(|c| c.vertices).collect())
    }

    #[pyo3(signature = (cost, pi_c, p_max, m_max, n=analysis::DEFAULT_GRID_RESOLUTION))]
    fn least_cost_point(&self, cost: &PyCostModel, pi_c: f64, p_max: f64, m_max: f64, n: usize) -> PyResult<PyOperatingPoint> {
        let region = RealizableRegion::new(p_max).map_err(value_err)?;
        let grid = GridSpec::new(p_max, m_max, n, n).map_err(value_err)?;
        analysis::gpr_least_cost_point(&self.0, &cost.0, &region, pi_c, &grid)
            .map(PyOperatingPoint)
            .map_err(value_err)
    }
}

#[pyfunction]
#[pyo3(signature = (path, schema=None))]
fn load_observations(path: std::path::PathBuf, schema: Option<BTreeMap<String, String>>) -> PyResult<Vec<PyObservationSet>> {
    let mut s = Schema::default();
    for (field, column) in schema.unwrap_or_default() {
        let slot = match field.as_str() {
            "language" => &mut s.language,
            "pivot_language" => &mut s.pivot_language,
            "pivot_size" => &mut s.pivot_size,
            "translated_size" => &mut s.translated_size,
            "manual_size" => &mut s.manual_size,
            "seed" => &mut s.seed,
            "f1" => &mut s.f1,
            "model" => &mut s.model,
            "task" => &mut s.task,
            "default_pivot_language" => &mut s.default_pivot_language,
            other => return Err(PyValueError::new_err(format!("unknown schema field `{other}`"))),
        };
        *slot = column;
    }
    let sets = ingest::load_observations(path, &s).map_err(value_err)?;
    Ok(sets.into_iter().map(PyObservationSet).collect())
}

/// Least-squares AMUE fit; returns `(params, training report)`.
#[pyfunction]
#[pyo3(signature = (obs, restarts=10, seed=0))]
fn fit_amue<'py>(py: Python<'py>, obs: &PyObservationSet, restarts: usize, seed: u64) -> PyResult<(PyAmueParams, Bound<'py, PyDict>)> {
    let set = obs.0.clone();
    let (params, report) = py
        .detach(move || fitting::fit_amue(&set, &options(restarts, seed)))
        .map_err(runtime_err)?;
    Ok((PyAmueParams(params), report_dict(py, &report)?))
}

#[pyfunction]
#[pyo3(signature = (obs, restarts=10, seed=0))]
fn fit_gpr(py: Python<'_>, obs: &PyObservationSet, restarts: usize, seed: u64) -> PyResult<PyGprModel> {
    let set = obs.0.clone();
    py.detach(move || fitting::fit_gpr(&set, &options(restarts, seed)))
        .map(PyGprModel)
        .map_err(runtime_err)
}

/// RMSE and r² of a fitted AmueParams or GprModel on `obs`.
#[pyfunction]
fn evaluate_fit<'py>(py: Python<'py>, model: &Bound<'py, PyAny>, obs: &PyObservationSet) -> PyResult<Bound<'py, PyDict>> {
    let report = if let Ok(p) = model.cast::<PyAmueParams>() {
        fitting::evaluate_fit(&p.get().0, &obs.0, Split::Test)
    } else if let Ok(g) = model.cast::<PyGprModel>() {
        fitting::evaluate_fit(&g.get().0 as &dyn Predictor, &obs.0, Split::Test)
    } else {
        return Err(PyValueError::new_err("model must be an AmueParams or a GprModel"));
    };
    report_dict(py, &report)
}

/// `(train, test)` split with the given train share.
#[pyfunction]
#[pyo3(signature = (obs, train_fraction=0.8, seed=0))]
fn split_train_test(obs: &PyObservationSet, train_fraction: f64, seed: u64) -> PyResult<(PyObservationSet, PyObservationSet)> {
    let (a, b) = fitting::split_train_test(&obs.0, train_fraction, seed).map_err(value_err)?;
    Ok((PyObservationSet(a), PyObservationSet(b)))
}

/// SVG T-M diagram with isoperfs, isocosts and the expansion path.
#[pyfunction]
#[pyo3(signature = (params, cost, levels, p_max, t_max, m_max, title=String::new()))]
fn render_tm_diagram(
    params: &PyAmueParams,
    cost: &PyCostModel,
    levels: Vec<f64>,
    p_max: f64,
    t_max: f64,
    m_max: f64,
    title: String,
) -> PyResult<String> {
    let region = RealizableRegion::new(p_max).map_err(value_err)?;
    let (bundles, path) = amue_bundles(&params.0, &cost.0, &region, &levels, t_max, 200).map_err(value_err)?;
    let spec = TmDiagramSpec {
        title,
        t_range: (0.0, t_max),
        m_range: (0.0, m_max),
        contours: bundles.iter().map(|b| b.contour.clone()).collect(),
        isocosts: bundles.iter().map(|b| b.isocost).collect(),
        path: path.points().to_vec(),
        p_max: Some(p_max),
        guide_slope: None,
        x_label: "T (translated examples)".into(),
        y_label: "M (manual examples)".into(),
    };
    render::render_tm_diagram(&spec).map_err(value_err)
}

/// SVG chart of `{label: [(cost, performance), ...]}`, one line per label.
#[pyfunction]
#[pyo3(signature = (series, title=String::new()))]
fn render_cost_curve(series: BTreeMap<String, Vec<(f64, f64)>>, title: String) -> PyResult<String> {
    let spec = CostCurveSpec {
        title,
        series: series.into_iter().map(|(label, points)| Series { label, points }).collect(),
        x_label: "minimum total cost".into(),
        y_label: "performance".into(),
    };
    render::render_cost_curve(&spec).map_err(value_err)
}

#[pymodule]
fn perfunc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAmueParams>()?;
    m.add_class::<PyCostModel>()?;
    m.add_class::<PyOperatingPoint>()?;
    m.add_class::<PyObservationSet>()?;
    m.add_class::<PyGprModel>()?;
    m.add_function(wrap_pyfunction!(load_observations, m)?)?;
    m.add_function(wrap_pyfunction!(fit_amue, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gpr, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_fit, m)?)?;
    m.add_function(wrap_pyfunction!(split_train_test, m)?)?;
    m.add_function(wrap_pyfunction!(render_tm_diagram, m)?)?;
    m.add_function(wrap_pyfunction!(render_cost_curve, m)?)?;
    m.add("EXPONENT_CAP", model::EXPONENT_CAP)?;
    Ok(())
}
