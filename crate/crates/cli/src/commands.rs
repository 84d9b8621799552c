//! The five subcommands. Each one computes everything in memory first and
//! hands the finished files to [`Outputs`], so a failure writes nothing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use perfunc_core::analysis::{amue_bundles, amue_isoperf_contour, gpr_isoperf_contour, gpr_least_cost_point, Contour, GridSpec};
use perfunc_core::fitting::{
    evaluate_fit, fit_amue, fit_gpr, report_from_predictions, split_train_test, FitReport, GprHyperparameters, GprModel, Predictor,
    Split,
};
use perfunc_core::ingest::{load_observations, ExperimentContext, ObservationSet};
use perfunc_core::model::{AmueParams, CostModel, OperatingPoint, RealizableRegion};
use perfunc_core::render::{render_cost_curve, render_tm_diagram, CostCurveSpec, Series, TmDiagramSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelChoice, RunConfig};
use crate::output::{count, slug, Outputs};

const DEFAULT_LEVEL_COUNT: usize = 12;
/// Span above a_zs used for default levels when no observations are at hand.
const PARAMS_ONLY_LEVEL_SPAN: f64 = 25.0;
const CONTOUR_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Amue,
    Gpr,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Amue => "amue",
            Kind::Gpr => "gpr",
        }
    }

    fn selected(choice: ModelChoice) -> Vec<Kind> {
        let mut kinds = Vec::new();
        if choice.amue() {
            kinds.push(Kind::Amue);
        }
        if choice.gpr() {
            kinds.push(Kind::Gpr);
        }
        kinds
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmueBlock {
    pub params: AmueParams,
    pub fit: FitReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GprBlock {
    pub hyperparameters: GprHyperparameters,
    pub log_marginal_likelihood: f64,
    pub fit: FitReport,
}

/// One `(language, pivot_size)` row of a fit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRow {
    pub language: String,
    pub pivot_language: String,
    pub pivot_size: u64,
    pub model_label: String,
    pub task_label: String,
    pub observations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub amue: Option<AmueBlock>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gpr: Option<GprBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReportFile {
    pub model: ModelChoice,
    pub seed: u64,
    pub restarts: usize,
    pub rows: Vec<FitRow>,
}

/// A `(language, pivot_size)` group with whatever models the command needs.
struct Subject {
    context: ExperimentContext,
    set: Option<ObservationSet>,
    amue: Option<AmueParams>,
    gpr: Option<GprModel>,
}

impl Subject {
    fn label(&self) -> String {
        format!("{} P={}", self.context.language, self.context.pivot_size)
    }

    fn stem(&self, prefix: &str, kind: Kind) -> String {
        format!("{prefix}_{}_P{}_{}", slug(&self.context.language), self.context.pivot_size, kind.name())
    }

    fn region(&self, cfg: &RunConfig) -> Result<RealizableRegion> {
        Ok(RealizableRegion::new(cfg.p_max.unwrap_or(self.context.pivot_size as f64))?)
    }

    fn amue(&self) -> &AmueParams {
        self.amue.as_ref().expect("AMUE parameters prepared")
    }

    fn gpr(&self) -> &GprModel {
        self.gpr.as_ref().expect("GPR model prepared")
    }

    /// Performance at zero data under the given model.
    fn base(&self, kind: Kind) -> f64 {
        match kind {
            Kind::Amue => self.amue().a_zs(),
            Kind::Gpr => self.gpr().predict_mean(0.0, 0.0),
        }
    }

    fn levels(&self, cfg: &RunConfig, kind: Kind) -> Result<Vec<f64>> {
        if let Some(levels) = &cfg.levels {
            return Ok(levels.clone());
        }
        let lo = self.base(kind) + 1.0;
        let hi = match &self.set {
            Some(set) => percentile(&set.targets(), 0.95),
            None => lo - 1.0 + PARAMS_ONLY_LEVEL_SPAN,
        };
        if !(hi > lo) {
            bail!(
                "{}: the 95th percentile of observed performance ({hi:.3}) does not exceed the zero-data level + 1 ({lo:.3}); pass --levels",
                self.label()
            );
        }
        let n = DEFAULT_LEVEL_COUNT;
        Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
    }

    fn grid(&self, region: &RealizableRegion) -> Result<GridSpec> {
        let set = self.set.as_ref().expect("GPR subjects carry observations");
        GridSpec::default_for(region, set.max_m()).with_context(|| format!("{}: no manual data to span a GPR grid", self.label()))
    }

    /// Least-cost points for increasing levels.
    fn path(&self, kind: Kind, cost: &CostModel, region: &RealizableRegion, levels: &[f64]) -> Result<Vec<OperatingPoint>> {
        match kind {
            Kind::Amue => {
                let params = self.amue();
                if !params.translated_active() {
                    warn!("{}: translated-data coefficient is degenerate; the expansion path runs along T = 0", self.label());
                }
                Ok(params.trace_expansion_path(cost, region, levels)?.points().to_vec())
            }
            Kind::Gpr => {
                let grid = self.grid(region)?;
                levels
                    .iter()
                    .map(|&l| gpr_least_cost_point(self.gpr(), cost, region, l, &grid).map_err(anyhow::Error::from))
                    .collect()
            }
        }
    }
}

/// Linear-interpolation percentile of unsorted values.
fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn read_report(path: &PathBuf) -> Result<FitReportFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing fit report {}", path.display()))
}

fn load_sets(cfg: &RunConfig) -> Result<Option<Vec<ObservationSet>>> {
    cfg.input
        .as_ref()
        .map(|path| load_observations(path, &cfg.schema).with_context(|| format!("loading {}", path.display())))
        .transpose()
}

/// Gathers observation sets and saved parameters, then fits whatever is missing.
fn prepare(cfg: &RunConfig, kinds: &[Kind]) -> Result<Vec<Subject>> {
    let sets = load_sets(cfg)?;
    let report = cfg.params.as_ref().map(read_report).transpose()?;
    let want_amue = kinds.contains(&Kind::Amue);
    let want_gpr = kinds.contains(&Kind::Gpr);

    let mut subjects: Vec<Subject> = match (report, sets) {
        (None, None) => bail!("no data: pass --input (observations) or --params (a fit report)"),
        (None, Some(sets)) => sets
            .into_iter()
            .map(|set| Subject {
                context: set.context().clone(),
                set: Some(set),
                amue: None,
                gpr: None,
            })
            .collect(),
        (Some(report), sets) => {
            let mut by_key: BTreeMap<(String, u64), ObservationSet> = sets
                .unwrap_or_default()
                .into_iter()
                .map(|s| ((s.context().language.clone(), s.context().pivot_size), s))
                .collect();
            report
                .rows
                .into_iter()
                .map(|row| {
                    let set = by_key.remove(&(row.language.clone(), row.pivot_size));
                    let context = ExperimentContext {
                        language: row.language,
                        pivot_language: row.pivot_language,
                        pivot_size: row.pivot_size,
                        model_label: row.model_label,
                        task_label: row.task_label,
                    };
                    Subject {
                        context,
                        set,
                        amue: row.amue.map(|b| b.params),
                        gpr: None,
                    }
                })
                .collect()
        }
    };

    for s in &subjects {
        if want_amue && s.amue.is_none() && s.set.is_none() {
            bail!("{}: the fit report has no AMUE parameters and no observations were given", s.label());
        }
        if want_gpr && s.set.is_none() {
            bail!("{}: GPR analysis needs the observations; pass --input", s.label());
        }
    }

    let options = cfg.fit;
    subjects.par_iter_mut().try_for_each(|s| -> Result<()> {
        if want_amue && s.amue.is_none() {
            let set = s.set.as_ref().expect("checked above");
            s.amue = Some(fit_amue(set, &options).with_context(|| format!("{}: AMUE fit", s.label()))?.0);
        }
        if want_gpr {
            let set = s.set.as_ref().expect("checked above");
            s.gpr = Some(fit_gpr(set, &options).with_context(|| format!("{}: GPR fit", s.label()))?);
        }
        Ok(())
    })?;
    Ok(subjects)
}

fn json(value: &impl Serialize) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn fit(cfg: &RunConfig) -> Result<Outputs> {
    let sets = load_sets(cfg)?.ok_or_else(|| anyhow!("fit needs observations: pass --input"))?;
    let options = cfg.fit;
    let model = cfg.model;
    let rows = sets
        .par_iter()
        .map(|set| -> Result<FitRow> {
            let ctx = set.context();
            let label = format!("{} P={}", ctx.language, ctx.pivot_size);
            let amue = model
                .amue()
                .then(|| fit_amue(set, &options).map(|(params, fit)| AmueBlock { params, fit }))
                .transpose()
                .with_context(|| format!("{label}: AMUE fit"))?;
            let gpr = model
                .gpr()
                .then(|| {
                    fit_gpr(set, &options).map(|m| GprBlock {
                        hyperparameters: m.hyperparameters(),
                        log_marginal_likelihood: m.log_marginal_likelihood(),
                        fit: evaluate_fit(&m, set, Split::Train),
                    })
                })
                .transpose()
                .with_context(|| format!("{label}: GPR fit"))?;
            info!("{label}: fitted {} observations", set.len());
            Ok(FitRow {
                language: ctx.language.clone(),
                pivot_language: ctx.pivot_language.clone(),
                pivot_size: ctx.pivot_size,
                model_label: ctx.model_label.clone(),
                task_label: ctx.task_label.clone(),
                observations: set.len(),
                amue,
                gpr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = FitReportFile {
        model,
        seed: options.rng_seed,
        restarts: options.restarts,
        rows,
    };
    let mut out = Outputs::default();
    out.add("fit_report.json", json(&report)?);
    Ok(out)
}

/// Test-split `(t, m, observed, predicted)` rows.
type Predictions = Vec<(f64, f64, f64, f64)>;

#[derive(Debug, Serialize)]
struct SetEvaluation {
    language: String,
    pivot_size: u64,
    train_size: usize,
    test_size: usize,
    train: FitReport,
    test: FitReport,
}

#[derive(Debug, Serialize)]
struct ModelEvaluation {
    model: &'static str,
    /// Test predictions of every set pooled together.
    overall_test: FitReport,
    sets: Vec<SetEvaluation>,
}

#[derive(Debug, Serialize)]
struct EvaluationFile {
    train_fraction: f64,
    seed: u64,
    models: Vec<ModelEvaluation>,
}

pub fn evaluate(cfg: &RunConfig) -> Result<Outputs> {
    let sets = load_sets(cfg)?.ok_or_else(|| anyhow!("evaluate needs observations: pass --input"))?;
    let options = cfg.fit;
    let mut models = Vec::new();
    for kind in Kind::selected(cfg.model) {
        let results = sets
            .par_iter()
            .map(|set| -> Result<(SetEvaluation, Predictions)> {
                let ctx = set.context();
                let label = format!("{} P={}", ctx.language, ctx.pivot_size);
                let (train, test) = split_train_test(set, cfg.train_fraction, options.rng_seed).with_context(|| label.clone())?;
                let predictor: Box<dyn Predictor + Send + Sync> = match kind {
                    Kind::Amue => Box::new(fit_amue(&train, &options).with_context(|| format!("{label}: AMUE fit"))?.0),
                    Kind::Gpr => Box::new(fit_gpr(&train, &options).with_context(|| format!("{label}: GPR fit"))?),
                };
                let rows = test.iter().map(|o| (o.t, o.m, o.pi, predictor.predict(o.t, o.m))).collect();
                Ok((
                    SetEvaluation {
                        language: ctx.language.clone(),
                        pivot_size: ctx.pivot_size,
                        train_size: train.len(),
                        test_size: test.len(),
                        train: evaluate_fit(predictor.as_ref(), &train, Split::Train),
                        test: evaluate_fit(predictor.as_ref(), &test, Split::Test),
                    },
                    rows,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let pooled: Vec<_> = results.iter().flat_map(|(_, rows)| rows.iter().copied()).collect();
        models.push(ModelEvaluation {
            model: kind.name(),
            overall_test: report_from_predictions(&pooled, Split::Test),
            sets: results.into_iter().map(|(e, _)| e).collect(),
        });
    }
    let file = EvaluationFile {
        train_fraction: cfg.train_fraction,
        seed: options.rng_seed,
        models,
    };
    let mut out = Outputs::default();
    out.add("evaluate_report.json", json(&file)?);
    Ok(out)
}

fn points_csv(rows: &[(String, u64, &str, f64, OperatingPoint)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["language", "pivot_size", "model", "level", "t", "m", "pi", "cost", "on_boundary"])?;
    for (language, pivot_size, model, level, p) in rows {
        w.write_record([
            language.clone(),
            pivot_size.to_string(),
            model.to_string(),
            level.to_string(),
            count(p.t).to_string(),
            count(p.m).to_string(),
            p.pi.to_string(),
            p.cost.to_string(),
            p.on_boundary.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// M extent for an AMUE diagram: room for the operating points, the data and
/// the middle of the top isoperf.
fn amue_m_extent(params: &AmueParams, levels: &[f64], t_max: f64, points: &[OperatingPoint], set: Option<&ObservationSet>) -> f64 {
    let top = levels.last().copied().unwrap_or(params.a_zs());
    let mid = params.isoperf_m_of_t(top, 0.5 * t_max).ok().flatten().unwrap_or(0.0);
    let pts = points.iter().map(|p| p.m).fold(0.0, f64::max);
    let data = set.map_or(0.0, ObservationSet::max_m);
    (1.25 * pts).max(1.25 * data).max(1.5 * mid).max(1.0)
}

fn diagram(
    s: &Subject,
    kind: Kind,
    region: &RealizableRegion,
    levels: &[f64],
    cost: Option<&CostModel>,
    points: &[OperatingPoint],
) -> Result<Option<(String, Vec<Contour>)>> {
    let (t_range, m_range, contours) = match kind {
        Kind::Amue => {
            let params = s.amue();
            if !params.manual_active() {
                warn!("{}: manual-data coefficient is degenerate; isoperfs are vertical and no diagram is drawn", s.label());
                return Ok(None);
            }
            let t_max = 1.25 * region.p_max().max(points.iter().map(|p| p.t).fold(0.0, f64::max));
            let ts: Vec<f64> = (0..=CONTOUR_SAMPLES).map(|k| t_max * k as f64 / CONTOUR_SAMPLES as f64).collect();
            let contours = match (cost, points.is_empty()) {
                (Some(cost), false) => amue_bundles(params, cost, region, levels, t_max, CONTOUR_SAMPLES + 1)?
                    .0
                    .into_iter()
                    .map(|b| b.contour)
                    .collect(),
                _ => levels
                    .iter()
                    .map(|&l| amue_isoperf_contour(params, l, &ts))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            let m_max = amue_m_extent(params, levels, t_max, points, s.set.as_ref());
            ((0.0, t_max), (0.0, m_max), contours)
        }
        Kind::Gpr => {
            let grid = s.grid(region)?;
            let contours = levels.iter().flat_map(|&l| gpr_isoperf_contour(s.gpr(), l, &grid)).collect();
            ((0.0, grid.t_max), (0.0, grid.m_max), contours)
        }
    };
    let isocosts = match cost {
        Some(cost) => points.iter().map(|p| (cost.isocost_slope(), p.m - cost.isocost_slope() * p.t)).collect(),
        None => Vec::new(),
    };
    let spec = TmDiagramSpec {
        title: format!("{} ({})", s.label(), kind.name()),
        t_range,
        m_range,
        contours: contours.clone(),
        isocosts,
        path: points.to_vec(),
        p_max: Some(region.p_max()),
        guide_slope: None,
        x_label: "T (translated examples)".into(),
        y_label: "M (manual examples)".into(),
    };
    Ok(Some((render_tm_diagram(&spec)?, contours)))
}

pub fn expansion_path(cfg: &RunConfig) -> Result<Outputs> {
    let cost = cfg.cost()?;
    let kinds = Kind::selected(cfg.model);
    let subjects = prepare(cfg, &kinds)?;
    let jobs: Vec<(&Subject, Kind)> = subjects.iter().flat_map(|s| kinds.iter().map(move |&k| (s, k))).collect();
    let files = jobs
        .par_iter()
        .map(|&(s, kind)| -> Result<Vec<(String, String)>> {
            let region = s.region(cfg)?;
            let levels = s.levels(cfg, kind)?;
            let points = s.path(kind, &cost, &region, &levels).with_context(|| format!("{}: expansion path", s.label()))?;
            let rows: Vec<_> = levels
                .iter()
                .zip(&points)
                .map(|(&l, &p)| (s.context.language.clone(), s.context.pivot_size, kind.name(), l, p))
                .collect();
            let stem = s.stem("expansion_path", kind);
            let mut files = vec![(format!("{stem}.csv"), points_csv(&rows)?)];
            if let Some((svg, _)) = diagram(s, kind, &region, &levels, Some(&cost), &points)? {
                files.push((format!("{stem}.svg"), svg));
            }
            Ok(files)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outputs::default();
    for (name, text) in files.into_iter().flatten() {
        out.add(name, text);
    }
    Ok(out)
}

pub fn isoperf(cfg: &RunConfig) -> Result<Outputs> {
    let cost = cfg.cost_if_given();
    let kinds = Kind::selected(cfg.model);
    let subjects = prepare(cfg, &kinds)?;
    let jobs: Vec<(&Subject, Kind)> = subjects.iter().flat_map(|s| kinds.iter().map(move |&k| (s, k))).collect();
    let files = jobs
        .par_iter()
        .map(|&(s, kind)| -> Result<Vec<(String, String)>> {
            let region = s.region(cfg)?;
            let levels = s.levels(cfg, kind)?;
            let points = match &cost {
                Some(cost) => s.path(kind, cost, &region, &levels)?,
                None => Vec::new(),
            };
            let stem = s.stem("isoperf", kind);
            let Some((svg, contours)) = diagram(s, kind, &region, &levels, cost.as_ref(), &points)? else {
                return Ok(Vec::new());
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["language", "pivot_size", "model", "level", "polyline", "vertex", "t", "m"])?;
            let mut polyline = BTreeMap::<u64, usize>::new();
            for c in &contours {
                let index = polyline.entry(c.level.to_bits()).or_default();
                for (v, &(t, m)) in c.vertices.iter().enumerate() {
                    w.write_record([
                        s.context.language.clone(),
                        s.context.pivot_size.to_string(),
                        kind.name().to_string(),
                        c.level.to_string(),
                        index.to_string(),
                        v.to_string(),
                        t.to_string(),
                        m.to_string(),
                    ])?;
                }
                *index += 1;
            }
            let csv = String::from_utf8(w.into_inner()?)?;
            Ok(vec![(format!("{stem}.csv"), csv), (format!("{stem}.svg"), svg)])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outputs::default();
    for (name, text) in files.into_iter().flatten() {
        out.add(name, text);
    }
    Ok(out)
}

pub fn cost_curve(cfg: &RunConfig) -> Result<Outputs> {
    let cost = cfg.cost()?;
    let kinds = Kind::selected(cfg.model);
    let subjects = prepare(cfg, &kinds)?;
    let mut out = Outputs::default();
    for kind in kinds {
        let curves = subjects
            .par_iter()
            .map(|s| -> Result<(Vec<f64>, Vec<OperatingPoint>)> {
                let region = s.region(cfg)?;
                let levels = s.levels(cfg, kind)?;
                let points = s.path(kind, &cost, &region, &levels).with_context(|| format!("{}: minimum-cost curve", s.label()))?;
                if let Some(k) = points.windows(2).position(|w| !(w[1].cost > w[0].cost)) {
                    bail!(
                        "{}: minimum cost is not increasing in performance ({} at level {} then {} at level {})",
                        s.label(),
                        points[k].cost,
                        levels[k],
                        points[k + 1].cost,
                        levels[k + 1]
                    );
                }
                Ok((levels, points))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut rows = Vec::new();
        let mut series = Vec::new();
        for (s, (levels, points)) in subjects.iter().zip(&curves) {
            for (&l, &p) in levels.iter().zip(points) {
                rows.push((s.context.language.clone(), s.context.pivot_size, kind.name(), l, p));
            }
            series.push(Series {
                label: s.label(),
                points: points.iter().map(|p| (p.cost, p.pi)).collect(),
            });
        }
        let mut title = String::new();
        let _ = write!(title, "Performance vs minimum cost ({}, cost ratio {})", kind.name(), cost.cost_ratio());
        let svg = render_cost_curve(&CostCurveSpec {
            title,
            series,
            x_label: "minimum total cost".into(),
            y_label: "performance".into(),
        })?;
        out.add(format!("cost_curve_{}.csv", kind.name()), points_csv(&rows)?);
        out.add(format!("cost_curve_{}.svg", kind.name()), svg);
    }
    Ok(out)
}
