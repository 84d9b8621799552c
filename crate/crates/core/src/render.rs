//! Static SVG figures: T-M diagrams and performance/cost curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::Contour;
use crate::error::RenderError;
use crate::model::OperatingPoint;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
/// Fraction of each dimension left empty on every side of the plot area.
pub const MARGIN: f64 = 0.1;
pub const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Affine map from data coordinates to SVG pixels (y grows downwards).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotFrame {
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl PlotFrame {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Result<Self, RenderError> {
        for (lo, hi) in [x_range, y_range] {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(RenderError::InvalidRange(lo, hi));
            }
        }
        Ok(Self { x_range, y_range })
    }

    pub fn left(&self) -> f64 {
        MARGIN * WIDTH
    }
    pub fn right(&self) -> f64 {
        (1.0 - MARGIN) * WIDTH
    }
    pub fn top(&self) -> f64 {
        MARGIN * HEIGHT
    }
    pub fn bottom(&self) -> f64 {
        (1.0 - MARGIN) * HEIGHT
    }

    pub fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        (
            self.left() + (x - x0) / (x1 - x0) * (self.right() - self.left()),
            self.bottom() - (y - y0) / (y1 - y0) * (self.bottom() - self.top()),
        )
    }

    pub fn from_px(&self, px: f64, py: f64) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        (
            x0 + (px - self.left()) / (self.right() - self.left()) * (x1 - x0),
            y0 + (self.bottom() - py) / (self.bottom() - self.top()) * (y1 - y0),
        )
    }

    /// Portion of `y = slope·x + intercept` inside the data rectangle.
    fn clip_line(&self, slope: f64, intercept: f64) -> Option<((f64, f64), (f64, f64))> {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        let (mut lo, mut hi) = (x0, x1);
        if slope == 0.0 {
            if intercept < y0 || intercept > y1 {
                return None;
            }
        } else {
            let a = (y0 - intercept) / slope;
            let b = (y1 - intercept) / slope;
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
        (lo < hi).then_some(((lo, slope * lo + intercept), (hi, slope * hi + intercept)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmDiagramSpec {
    pub title: String,
    pub t_range: (f64, f64),
    pub m_range: (f64, f64),
    pub contours: Vec<Contour>,
    /// Isocost lines as `(slope, intercept)` in `m = slope·t + intercept`.
    pub isocosts: Vec<(f64, f64)>,
    pub path: Vec<OperatingPoint>,
    /// Upper edge of the realizable region; shaded when present.
    pub p_max: Option<f64>,
    /// Slope of a reference ray through the origin.
    pub guide_slope: Option<f64>,
    pub x_label: String,
    pub y_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    /// `(cost, performance)` pairs sorted by cost.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurveSpec {
    pub title: String,
    pub series: Vec<Series>,
    pub x_label: String,
    pub y_label: String,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick positions with a 1-2-5 step giving roughly five intervals.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let scale = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|k| k * scale).find(|s| *s >= raw).unwrap_or(10.0 * scale);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".to_owned()
    } else if v.abs() >= 1e5 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

fn polyline_points(frame: &PlotFrame, points: impl Iterator<Item = (f64, f64)>) -> String {
    let mut out = String::new();
    for (x, y) in points {
        let (px, py) = frame.to_px(x, y);
        if !out.is_empty() {
            out.push(' ');
        }
        let _ = write!(out, "{px:.3},{py:.3}");
    }
    out
}

fn open_document(frame: &PlotFrame, title: &str, x_label: &str, y_label: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (l, r, t, b) = (frame.left(), frame.right(), frame.top(), frame.bottom());
    let _ = writeln!(
        svg,
        r#"<defs><clipPath id="plot-area"><rect x="{l}" y="{t}" width="{}" height="{}"/></clipPath></defs>"#,
        r - l,
        b - t
    );
    let _ = writeln!(svg, r#"<text class="title" x="{}" y="{}" text-anchor="middle" font-size="16">{}</text>"#, WIDTH / 2.0, t / 2.0, escape(title));
    let _ = writeln!(svg, r#"<g class="axes" stroke="black" fill="none"><rect x="{l}" y="{t}" width="{}" height="{}"/></g>"#, r - l, b - t);

    let _ = writeln!(svg, r#"<g class="ticks" font-size="10">"#);
    for x in ticks(frame.x_range.0, frame.x_range.1) {
        let (px, _) = frame.to_px(x, frame.y_range.0);
        let _ = writeln!(svg, r#"<line x1="{px:.3}" y1="{b}" x2="{px:.3}" y2="{}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(svg, r#"<text x="{px:.3}" y="{}" text-anchor="middle">{}</text>"#, b + 18.0, tick_label(x));
    }
    for y in ticks(frame.y_range.0, frame.y_range.1) {
        let (_, py) = frame.to_px(frame.x_range.0, y);
        let _ = writeln!(svg, r#"<line x1="{}" y1="{py:.3}" x2="{l}" y2="{py:.3}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.3}" text-anchor="end">{}</text>"#, l - 8.0, py + 3.0, tick_label(y));
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<text class="x-label" x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, b + 40.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
        l - 50.0,
        (t + b) / 2.0,
        l - 50.0,
        (t + b) / 2.0,
        escape(y_label)
    );
    svg
}

fn legend(svg: &mut String, frame: &PlotFrame, entries: &[(String, &str)]) {
    let _ = writeln!(svg, r#"<g class="legend" font-size="11">"#);
    for (k, (label, color)) in entries.iter().enumerate() {
        let y = frame.top() + 14.0 + 16.0 * k as f64;
        let x = frame.right() + 8.0;
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 14.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, x + 18.0, y + 4.0, escape(label));
    }
    let _ = writeln!(svg, "</g>");
}

/// T-M diagram: isoperfs, tangent isocosts, least-cost markers, the
/// expansion path and the shaded region `T ≤ p_max`.
pub fn render_tm_diagram(spec: &TmDiagramSpec) -> Result<String, RenderError> {
    if spec.contours.iter().all(|c| c.vertices.is_empty()) && spec.path.is_empty() {
        return Err(RenderError::EmptySpec);
    }
    let frame = PlotFrame::new(spec.t_range, spec.m_range)?;
    let mut svg = open_document(&frame, &spec.title, &spec.x_label, &spec.y_label);
    let _ = writeln!(svg, r#"<g clip-path="url(#plot-area)">"#);

    if let Some(p_max) = spec.p_max {
        let hi = p_max.min(spec.t_range.1);
        if hi > spec.t_range.0 {
            let (x0, _) = frame.to_px(spec.t_range.0, 0.0);
            let (x1, _) = frame.to_px(hi, 0.0);
            let _ = writeln!(
                svg,
                r##"<rect class="realizable" x="{x0:.3}" y="{}" width="{:.3}" height="{}" fill="#dddddd" fill-opacity="0.5"/>"##,
                frame.top(),
                x1 - x0,
                frame.bottom() - frame.top()
            );
            if p_max < spec.t_range.1 {
                let _ = writeln!(
                    svg,
                    r#"<line class="p-max" x1="{x1:.3}" y1="{}" x2="{x1:.3}" y2="{}" stroke="gray" stroke-dasharray="6 4"/>"#,
                    frame.top(),
                    frame.bottom()
                );
            }
        }
    }

    if let Some(slope) = spec.guide_slope {
        if let Some((a, b)) = frame.clip_line(slope, 0.0) {
            let (x1, y1) = frame.to_px(a.0, a.1);
            let (x2, y2) = frame.to_px(b.0, b.1);
            let _ = writeln!(
                svg,
                r#"<line class="guide" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="gray" stroke-dasharray="2 3"/>"#
            );
        }
    }

    let mut entries = Vec::new();
    for (k, contour) in spec.contours.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<polyline class="isoperf" data-level="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            contour.level,
            polyline_points(&frame, contour.vertices.iter().copied())
        );
        if entries.last().is_none_or(|(label, _): &(String, &str)| *label != format!("Π = {}", tick_label(contour.level))) {
            entries.push((format!("Π = {}", tick_label(contour.level)), color));
        }
    }

    for &(slope, intercept) in &spec.isocosts {
        if let Some((a, b)) = frame.clip_line(slope, intercept) {
            let (x1, y1) = frame.to_px(a.0, a.1);
            let (x2, y2) = frame.to_px(b.0, b.1);
            let _ = writeln!(
                svg,
                r#"<line class="isocost" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="black" stroke-width="0.8" stroke-dasharray="4 3"/>"#
            );
        }
    }

    if !spec.path.is_empty() {
        let _ = writeln!(
            svg,
            r#"<polyline class="expansion-path" points="{}" fill="none" stroke="black" stroke-width="2"/>"#,
            polyline_points(&frame, spec.path.iter().map(|p| (p.t, p.m)))
        );
        for p in &spec.path {
            let (cx, cy) = frame.to_px(p.t, p.m);
            let _ = writeln!(
                svg,
                r#"<circle class="least-cost" data-level="{}" cx="{cx:.3}" cy="{cy:.3}" r="4" fill="black"/>"#,
                p.pi
            );
        }
    }
    let _ = writeln!(svg, "</g>");
    legend(&mut svg, &frame, &entries);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Performance against total cost, one polyline per series.
pub fn render_cost_curve(spec: &CostCurveSpec) -> Result<String, RenderError> {
    if spec.series.is_empty() {
        return Err(RenderError::EmptySpec);
    }
    for s in &spec.series {
        if s.points.is_empty() {
            return Err(RenderError::EmptySeries(s.label.clone()));
        }
        if let Some(index) = s.points.windows(2).position(|w| !(w[1].0 >= w[0].0)) {
            return Err(RenderError::UnsortedSeries {
                label: s.label.clone(),
                index: index + 1,
            });
        }
    }
    let all = spec.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let pad = |lo: f64, hi: f64| {
        let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let frame = PlotFrame::new(pad(x0.min(0.0), x1), pad(y0, y1))?;
    let mut svg = open_document(&frame, &spec.title, &spec.x_label, &spec.y_label);
    let _ = writeln!(svg, r#"<g clip-path="url(#plot-area)">"#);
    let mut entries = Vec::new();
    for (k, s) in spec.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&s.label),
            polyline_points(&frame, s.points.iter().copied())
        );
        entries.push((s.label.clone(), color));
    }
    let _ = writeln!(svg, "</g>");
    legend(&mut svg, &frame, &entries);
    svg.push_str("</svg>\n");
    Ok(svg)
}
