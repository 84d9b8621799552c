//! Analyses over fitted models: isoperf contours, GPR least-cost points and
//! M/T trend classification.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::fitting::GprModel;
use crate::model::{AmueParams, CostModel, ExpansionPath, OperatingPoint, RealizableRegion};
use crate::roots::bisect_bracket;

/// Maximum `|predictor(vertex) − level|` for any emitted contour vertex.
pub const CONTOUR_TOLERANCE: f64 = 0.05;
/// Half-width of the band in which `α_m − α_t` counts as zero.
pub const DEFAULT_TREND_TOLERANCE: f64 = 0.02;
pub const DEFAULT_GRID_RESOLUTION: usize = 200;

// Enough halvings to reach subnormal spacing from any grid edge.
const EDGE_BISECTIONS: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourSource {
    Amue,
    Gpr,
}

/// A level set of a performance function as a polyline in (t, m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub level: f64,
    /// Closed-form contours are sorted by t. Traced contours run from their
    /// lower-t end to their higher-t end.
    pub vertices: Vec<(f64, f64)>,
    pub source: ContourSource,
}

/// Closed-form isoperf sampled at `t_grid`; points where the curve is
/// undefined (T alone already exceeds the level) are dropped.
pub fn amue_isoperf_contour(params: &AmueParams, pi_c: f64, t_grid: &[f64]) -> Result<Contour, AnalysisError> {
    if !(pi_c > params.a_zs()) {
        return Err(crate::error::ModelError::InfeasiblePerformance {
            level: pi_c,
            a_zs: params.a_zs(),
        }
        .into());
    }
    let mut ts: Vec<f64> = t_grid.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut vertices = Vec::with_capacity(ts.len());
    for t in ts {
        if let Some(m) = params.isoperf_m_of_t(pi_c, t)? {
            if m.is_finite() {
                vertices.push((t, m));
            }
        }
    }
    if vertices.is_empty() {
        return Err(AnalysisError::EmptyContour { level: pi_c });
    }
    Ok(Contour {
        level: pi_c,
        vertices,
        source: ContourSource::Amue,
    })
}

/// Rectangular sampling grid over `[0, t_max] × [0, m_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_max: f64,
    pub m_max: f64,
    /// Number of sample columns (≥ 2).
    pub nt: usize,
    /// Number of sample rows (≥ 2).
    pub nm: usize,
}

impl GridSpec {
    pub fn new(t_max: f64, m_max: f64, nt: usize, nm: usize) -> Result<Self, AnalysisError> {
        if !(t_max.is_finite() && t_max > 0.0 && m_max.is_finite() && m_max > 0.0) {
            return Err(AnalysisError::InvalidGrid("extent must be positive and finite"));
        }
        if nt < 2 || nm < 2 {
            return Err(AnalysisError::InvalidGrid("need at least two samples per axis"));
        }
        Ok(Self { t_max, m_max, nt, nm })
    }

    /// 200×200 over `[0, p_max] × [0, 1.25·max_m]`.
    pub fn default_for(region: &RealizableRegion, max_observed_m: f64) -> Result<Self, AnalysisError> {
        Self::new(region.p_max(), 1.25 * max_observed_m, DEFAULT_GRID_RESOLUTION, DEFAULT_GRID_RESOLUTION)
    }

    fn t_at(&self, i: usize) -> f64 {
        self.t_max * i as f64 / (self.nt - 1) as f64
    }

    fn m_at(&self, j: usize) -> f64 {
        self.m_max * j as f64 / (self.nm - 1) as f64
    }

    pub fn cell_width(&self) -> f64 {
        self.t_max / (self.nt - 1) as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.m_max / (self.nm - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    /// From `(i, j)` to `(i + 1, j)`.
    Horizontal(usize, usize),
    /// From `(i, j)` to `(i, j + 1)`.
    Vertical(usize, usize),
}

/// Level-set polylines of `predictor` by marching squares. Crossing points
/// are located by bisection on the predictor along each cell edge; saddle
/// cells are resolved by evaluating the cell centre.
pub fn trace_contours<P>(predictor: &P, level: f64, grid: &GridSpec, source: ContourSource) -> Vec<Contour>
where
    P: Fn(f64, f64) -> f64 + Sync,
{
    let values: Vec<Vec<f64>> = (0..grid.nm)
        .into_par_iter()
        .map(|j| (0..grid.nt).map(|i| predictor(grid.t_at(i), grid.m_at(j))).collect())
        .collect();
    let above = |i: usize, j: usize| values[j][i] >= level;

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for j in 0..grid.nm - 1 {
        for i in 0..grid.nt - 1 {
            let corners = [above(i, j), above(i + 1, j), above(i + 1, j + 1), above(i, j + 1)];
            let bottom = Edge::Horizontal(i, j);
            let right = Edge::Vertical(i + 1, j);
            let top = Edge::Horizontal(i, j + 1);
            let left = Edge::Vertical(i, j);
            // Edge k joins corner k and corner k + 1.
            let edges = [bottom, right, top, left];
            let crossed: Vec<Edge> = (0..4).filter(|&k| corners[k] != corners[(k + 1) % 4]).map(|k| edges[k]).collect();
            match crossed.len() {
                2 => segments.push((crossed[0], crossed[1])),
                4 => {
                    let centre = predictor(0.5 * (grid.t_at(i) + grid.t_at(i + 1)), 0.5 * (grid.m_at(j) + grid.m_at(j + 1))) >= level;
                    if centre == corners[0] {
                        // Corner 0 connects through the centre to corner 2: cut off corners 1 and 3.
                        segments.push((bottom, right));
                        segments.push((top, left));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                _ => {}
            }
        }
    }
    if segments.is_empty() {
        return Vec::new();
    }

    let mut points: HashMap<Edge, (f64, f64)> = HashMap::new();
    let mut locate = |edge: Edge| -> (f64, f64) {
        *points.entry(edge).or_insert_with(|| match edge {
            Edge::Horizontal(i, j) => {
                let m = grid.m_at(j);
                let t = bisect_bracket(|t| predictor(t, m) - level, grid.t_at(i), grid.t_at(i + 1), EDGE_BISECTIONS);
                (t, m)
            }
            Edge::Vertical(i, j) => {
                let t = grid.t_at(i);
                let m = bisect_bracket(|m| predictor(t, m) - level, grid.m_at(j), grid.m_at(j + 1), EDGE_BISECTIONS);
                (t, m)
            }
        })
    };

    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(k);
        by_edge.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut polylines: Vec<Vec<Edge>> = Vec::new();

    let walk = |start: usize, from: Edge, used: &mut Vec<bool>| -> Vec<Edge> {
        let mut chain = vec![from];
        let mut current = start;
        let mut at = from;
        loop {
            used[current] = true;
            let (a, b) = segments[current];
            let next_edge = if a == at { b } else { a };
            chain.push(next_edge);
            let next = by_edge[&next_edge].iter().copied().find(|&s| !used[s]);
            match next {
                Some(s) => {
                    current = s;
                    at = next_edge;
                }
                None => break,
            }
        }
        chain
    };

    // Open polylines first (they start on an edge used by a single segment), then loops.
    for k in 0..segments.len() {
        if used[k] {
            continue;
        }
        let (a, b) = segments[k];
        if by_edge[&a].len() == 1 {
            polylines.push(walk(k, a, &mut used));
        } else if by_edge[&b].len() == 1 {
            polylines.push(walk(k, b, &mut used));
        }
    }
    for k in 0..segments.len() {
        if !used[k] {
            let (a, _) = segments[k];
            polylines.push(walk(k, a, &mut used));
        }
    }

    polylines
        .into_iter()
        .map(|chain| {
            let mut vertices: Vec<(f64, f64)> = chain.into_iter().map(&mut locate).collect();
            if vertices.first().map(|v| v.0) > vertices.last().map(|v| v.0) {
                vertices.reverse();
            }
            Contour { level, vertices, source }
        })
        .collect()
}

/// Level-set polylines of the GPR posterior mean. Empty when the level lies
/// outside the range of the mean on the grid.
pub fn gpr_isoperf_contour(model: &GprModel, pi_c: f64, grid: &GridSpec) -> Vec<Contour> {
    trace_contours(&|t, m| model.predict_mean(t, m), pi_c, grid, ContourSource::Gpr)
}

/// Cheapest point on the traced level set inside `T ≤ p_max`.
pub fn least_cost_on_contours<P>(
    predictor: &P,
    contours: &[Contour],
    cost: &CostModel,
    region: &RealizableRegion,
) -> Option<OperatingPoint>
where
    P: Fn(f64, f64) -> f64,
{
    let p_max = region.p_max();
    let mut candidates: Vec<(f64, f64, bool)> = Vec::new();
    for contour in contours {
        for &(t, m) in &contour.vertices {
            if t <= p_max {
                candidates.push((t, m, t == p_max));
            }
        }
        for pair in contour.vertices.windows(2) {
            let ((t0, m0), (t1, m1)) = (pair[0], pair[1]);
            if (t0 < p_max) != (t1 < p_max) && t0 != p_max && t1 != p_max {
                let g = |m: f64| predictor(p_max, m) - contour.level;
                let m = if g(m0).signum() != g(m1).signum() {
                    bisect_bracket(g, m0, m1, EDGE_BISECTIONS)
                } else {
                    m0 + (m1 - m0) * (p_max - t0) / (t1 - t0)
                };
                candidates.push((p_max, m, true));
            }
        }
    }
    candidates
        .into_iter()
        .map(|(t, m, on_boundary)| OperatingPoint {
            t,
            m,
            pi: predictor(t, m),
            cost: cost.c_t() * t + cost.c_m() * m,
            on_boundary,
        })
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.t.total_cmp(&b.t)))
}

/// Least-cost operating point for a GPR performance function: minimum-cost
/// vertex over the traced isoperf, clipped to the realizable region.
pub fn gpr_least_cost_point(
    model: &GprModel,
    cost: &CostModel,
    region: &RealizableRegion,
    pi_c: f64,
    grid: &GridSpec,
) -> Result<OperatingPoint, AnalysisError> {
    let contours = gpr_isoperf_contour(model, pi_c, grid);
    least_cost_on_contours(&|t, m| model.predict_mean(t, m), &contours, cost, region).ok_or(AnalysisError::Infeasible { level: pi_c })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Increasing,
    Constant,
    Decreasing,
}

/// How the M/T ratio moves along the expansion path as performance grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendClass {
    pub trend: Trend,
    /// `α_m − α_t`.
    pub delta: f64,
}

pub fn classify_mt_trend(params: &AmueParams, tol: f64) -> TrendClass {
    let delta = params.alpha_m() - params.alpha_t();
    let trend = if delta > tol {
        Trend::Increasing
    } else if delta < -tol {
        Trend::Decreasing
    } else {
        Trend::Constant
    };
    TrendClass { trend, delta }
}

/// `m / t` at each interior path point (points with `t = 0` are skipped).
pub fn mt_ratios(path: &ExpansionPath) -> Vec<f64> {
    path.iter().filter(|p| p.t > 0.0 && !p.on_boundary).map(|p| p.m / p.t).collect()
}

/// One isoperf with its least-cost point and the isocost through it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoperfBundle {
    pub contour: Contour,
    pub point: OperatingPoint,
    /// Isocost line `m = slope·t + intercept` through `point`.
    pub isocost: (f64, f64),
}

/// Closed-form isoperfs at `levels`, sampled on `samples` evenly spaced t
/// values in `[0, t_max]` plus each least-cost t, with the matching isocost
/// lines. Used to draw T-M diagrams.
pub fn amue_bundles(
    params: &AmueParams,
    cost: &CostModel,
    region: &RealizableRegion,
    levels: &[f64],
    t_max: f64,
    samples: usize,
) -> Result<(Vec<IsoperfBundle>, ExpansionPath), AnalysisError> {
    let path = params.trace_expansion_path(cost, region, levels)?;
    let base: Vec<f64> = (0..samples.max(2)).map(|k| t_max * k as f64 / (samples.max(2) - 1) as f64).collect();
    let mut bundles = Vec::with_capacity(levels.len());
    for (point, &level) in path.iter().zip(levels) {
        let mut grid = base.clone();
        grid.push(point.t);
        let contour = amue_isoperf_contour(params, level, &grid)?;
        let slope = cost.isocost_slope();
        bundles.push(IsoperfBundle {
            contour,
            point: *point,
            isocost: (slope, point.m - slope * point.t),
        });
    }
    Ok((bundles, path))
}
