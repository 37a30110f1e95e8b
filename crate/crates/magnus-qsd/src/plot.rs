//! Self-contained SVG charts: population/error line plots with confidence
//! bands and labeled bar charts with error whiskers. No external renderer,
//! fonts, or scripts — each output is one static SVG document.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{QsdError, Result};

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 860.0;
const TOP: f64 = 46.0;
const BOTTOM: f64 = 482.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
    "#bcbd22", "#e377c2",
];

/// One labeled curve, optionally with a shaded lower/upper band.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// (lower, upper) envelope, same length as `x`.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

impl Series {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            x,
            y,
            band: None,
        }
    }

    pub fn with_band(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.band = Some((lower, upper));
        self
    }
}

/// Line chart; `log_y` switches the vertical axis to decade scaling and
/// silently drops non-positive values.
#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub log_y: bool,
}

impl LinePlot {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            log_y: false,
        }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn push(&mut self, series: Series) {
        self.series.push(series);
    }

    pub fn render(&self) -> Result<String> {
        if self.series.is_empty() {
            return Err(QsdError::InvalidArgument("plot has no series".into()));
        }
        for s in &self.series {
            if s.x.len() != s.y.len() {
                return Err(QsdError::DimensionMismatch(format!(
                    "series \"{}\": {} x-values vs {} y-values",
                    s.label,
                    s.x.len(),
                    s.y.len()
                )));
            }
            if let Some((lo, hi)) = &s.band {
                if lo.len() != s.x.len() || hi.len() != s.x.len() {
                    return Err(QsdError::DimensionMismatch(format!(
                        "series \"{}\": band length mismatch",
                        s.label
                    )));
                }
            }
        }
        let keep = |v: f64| v.is_finite() && (!self.log_y || v > 0.0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for (&x, &y) in s.x.iter().zip(&s.y) {
                if x.is_finite() && keep(y) {
                    xs.push(x);
                    ys.push(y);
                }
            }
            if let Some((lo, hi)) = &s.band {
                for v in lo.iter().chain(hi.iter()) {
                    if keep(*v) {
                        ys.push(*v);
                    }
                }
            }
        }
        if xs.is_empty() || ys.is_empty() {
            return Err(QsdError::InvalidArgument(
                "no plottable points (after filtering non-finite values)".into(),
            ));
        }
        let (xmin, xmax) = padded_range(&xs, false);
        let (ymin, ymax) = padded_range(&ys, self.log_y);
        let to_x = |v: f64| LEFT + (v - xmin) / (xmax - xmin) * (RIGHT - LEFT);
        let to_y = |v: f64| {
            let t = if self.log_y {
                (v.log10() - ymin) / (ymax - ymin)
            } else {
                (v - ymin) / (ymax - ymin)
            };
            BOTTOM - t * (BOTTOM - TOP)
        };

        let mut svg = svg_header(&self.title, &self.x_label, &self.y_label);
        for (v, label) in x_ticks(xmin, xmax) {
            let sx = to_x(v);
            let _ = write!(
                svg,
                "<line x1='{sx:.1}' y1='{TOP}' x2='{sx:.1}' y2='{BOTTOM}' stroke='#dddddd' stroke-width='1'/>\
                 <text x='{sx:.1}' y='{:.1}' text-anchor='middle' class='tick'>{label}</text>",
                BOTTOM + 18.0
            );
        }
        for (v, label) in y_axis_ticks(ymin, ymax, self.log_y) {
            let sy = to_y(v);
            let _ = write!(
                svg,
                "<line x1='{LEFT}' y1='{sy:.1}' x2='{RIGHT}' y2='{sy:.1}' stroke='#dddddd' stroke-width='1'/>\
                 <text x='{:.1}' y='{:.1}' text-anchor='end' class='tick'>{label}</text>",
                LEFT - 6.0,
                sy + 4.0
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            if let Some((lo, hi)) = &s.band {
                let mut pts = String::new();
                for i in 0..s.x.len() {
                    if s.x[i].is_finite() && keep(hi[i]) {
                        let _ = write!(pts, "{:.1},{:.1} ", to_x(s.x[i]), to_y(hi[i]));
                    }
                }
                for i in (0..s.x.len()).rev() {
                    if s.x[i].is_finite() && keep(lo[i]) {
                        let _ = write!(pts, "{:.1},{:.1} ", to_x(s.x[i]), to_y(lo[i]));
                    }
                }
                if !pts.is_empty() {
                    let _ = write!(
                        svg,
                        "<polygon points='{}' fill='{color}' opacity='0.15'/>",
                        pts.trim_end()
                    );
                }
            }
            for segment in finite_segments(&s.x, &s.y, &keep) {
                let mut pts = String::new();
                for (x, y) in segment {
                    let _ = write!(pts, "{:.1},{:.1} ", to_x(x), to_y(y));
                }
                let _ = write!(
                    svg,
                    "<polyline points='{}' fill='none' stroke='{color}' stroke-width='1.8'/>",
                    pts.trim_end()
                );
            }
        }
        let labels: Vec<(&str, &str)> = self
            .series
            .iter()
            .enumerate()
            .map(|(k, s)| (s.label.as_str(), PALETTE[k % PALETTE.len()]))
            .collect();
        svg.push_str(&legend(&labels));
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

/// One bar with a symmetric confidence whisker.
#[derive(Debug, Clone)]
pub struct Bar {
    pub label: String,
    pub value: f64,
    pub ci_halfwidth: f64,
}

/// Categorical bar chart; `log_y` requires strictly positive values.
#[derive(Debug, Clone)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub bars: Vec<Bar>,
    pub log_y: bool,
}

impl BarChart {
    pub fn new(title: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            y_label: y_label.into(),
            bars: Vec::new(),
            log_y: false,
        }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn push(&mut self, label: impl Into<String>, value: f64, ci_halfwidth: f64) {
        self.bars.push(Bar {
            label: label.into(),
            value,
            ci_halfwidth,
        });
    }

    pub fn render(&self) -> Result<String> {
        if self.bars.is_empty() {
            return Err(QsdError::InvalidArgument("bar chart has no bars".into()));
        }
        let mut ys = Vec::new();
        for b in &self.bars {
            if !b.value.is_finite() {
                return Err(QsdError::NonFinite(format!("bar \"{}\"", b.label)));
            }
            if self.log_y && b.value <= 0.0 {
                return Err(QsdError::InvalidArgument(format!(
                    "bar \"{}\" is non-positive on a log axis",
                    b.label
                )));
            }
            ys.push(b.value + b.ci_halfwidth.abs());
            let low = b.value - b.ci_halfwidth.abs();
            ys.push(if self.log_y && low <= 0.0 { b.value } else { low });
            if !self.log_y {
                ys.push(0.0);
            }
        }
        let (ymin, ymax) = padded_range(&ys, self.log_y);
        let to_y = |v: f64| {
            let t = if self.log_y {
                (v.log10() - ymin) / (ymax - ymin)
            } else {
                (v - ymin) / (ymax - ymin)
            };
            BOTTOM - t * (BOTTOM - TOP)
        };
        let n = self.bars.len() as f64;
        let slot = (RIGHT - LEFT) / n;
        let bar_w = 0.6 * slot;

        let mut svg = svg_header(&self.title, "", &self.y_label);
        for (v, label) in y_axis_ticks(ymin, ymax, self.log_y) {
            let sy = to_y(v);
            let _ = write!(
                svg,
                "<line x1='{LEFT}' y1='{sy:.1}' x2='{RIGHT}' y2='{sy:.1}' stroke='#dddddd' stroke-width='1'/>\
                 <text x='{:.1}' y='{:.1}' text-anchor='end' class='tick'>{label}</text>",
                LEFT - 6.0,
                sy + 4.0
            );
        }
        let base = if self.log_y { BOTTOM } else { to_y(0.0) };
        for (k, b) in self.bars.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let cx = LEFT + (k as f64 + 0.5) * slot;
            let top = to_y(b.value);
            let (y0, h) = if top <= base {
                (top, base - top)
            } else {
                (base, top - base)
            };
            let _ = write!(
                svg,
                "<rect x='{:.1}' y='{y0:.1}' width='{bar_w:.1}' height='{h:.1}' fill='{color}' opacity='0.8'/>",
                cx - bar_w / 2.0
            );
            if b.ci_halfwidth.abs() > 0.0 {
                let hi = to_y(b.value + b.ci_halfwidth.abs());
                let lo_val = b.value - b.ci_halfwidth.abs();
                let lo = if self.log_y && lo_val <= 0.0 {
                    BOTTOM
                } else {
                    to_y(lo_val)
                };
                let _ = write!(
                    svg,
                    "<line x1='{cx:.1}' y1='{hi:.1}' x2='{cx:.1}' y2='{lo:.1}' stroke='#222222' stroke-width='1.5'/>\
                     <line x1='{:.1}' y1='{hi:.1}' x2='{:.1}' y2='{hi:.1}' stroke='#222222' stroke-width='1.5'/>\
                     <line x1='{:.1}' y1='{lo:.1}' x2='{:.1}' y2='{lo:.1}' stroke='#222222' stroke-width='1.5'/>",
                    cx - 6.0, cx + 6.0, cx - 6.0, cx + 6.0
                );
            }
            let _ = write!(
                svg,
                "<text x='{cx:.1}' y='{:.1}' text-anchor='middle' class='tick'>{}</text>",
                BOTTOM + 18.0,
                escape(&b.label)
            );
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg)?;
    Ok(())
}

fn svg_header(title: &str, x_label: &str, y_label: &str) -> String {
    let mut svg = format!(
        "<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 {WIDTH} {HEIGHT}' \
         font-family='Helvetica, Arial, sans-serif'>\
         <style>.tick{{font-size:12px;fill:#333333}}.axis{{font-size:14px;fill:#111111}}\
         .title{{font-size:16px;fill:#111111;font-weight:bold}}.legend{{font-size:13px;fill:#111111}}</style>\
         <rect width='{WIDTH}' height='{HEIGHT}' fill='#ffffff'/>\
         <rect x='{LEFT}' y='{TOP}' width='{:.1}' height='{:.1}' fill='none' stroke='#333333' stroke-width='1'/>",
        RIGHT - LEFT,
        BOTTOM - TOP
    );
    let _ = write!(
        svg,
        "<text x='{:.1}' y='24' text-anchor='middle' class='title'>{}</text>",
        (LEFT + RIGHT) / 2.0,
        escape(title)
    );
    if !x_label.is_empty() {
        let _ = write!(
            svg,
            "<text x='{:.1}' y='{:.1}' text-anchor='middle' class='axis'>{}</text>",
            (LEFT + RIGHT) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
    }
    if !y_label.is_empty() {
        let _ = write!(
            svg,
            "<text x='20' y='{:.1}' text-anchor='middle' class='axis' transform='rotate(-90 20 {:.1})'>{}</text>",
            (TOP + BOTTOM) / 2.0,
            (TOP + BOTTOM) / 2.0,
            escape(y_label)
        );
    }
    svg
}

fn legend(entries: &[(&str, &str)]) -> String {
    let mut svg = String::new();
    let x = RIGHT - 200.0;
    for (row, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 16.0 + row as f64 * 18.0;
        let _ = write!(
            svg,
            "<line x1='{x:.1}' y1='{y:.1}' x2='{:.1}' y2='{y:.1}' stroke='{color}' stroke-width='3'/>\
             <text x='{:.1}' y='{:.1}' class='legend'>{}</text>",
            x + 26.0,
            x + 32.0,
            y + 4.0,
            escape(label)
        );
    }
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Data range padded by 4%; degenerate ranges widen symmetrically. For log
/// axes the returned pair is (log10 min, log10 max).
fn padded_range(values: &[f64], log: bool) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        let t = if log { v.log10() } else { v };
        lo = lo.min(t);
        hi = hi.max(t);
    }
    if lo == hi {
        let pad = if log { 0.5 } else { lo.abs().max(1.0) * 0.5 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Round tick positions covering [lo, hi] with a 1-2-5 step ladder.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let range = hi - lo;
    let raw = range / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| range / s <= 7.0)
        .unwrap_or(10.0 * mag);
    let mut v = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while v <= hi + 1e-9 * step {
        out.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
        v += step;
    }
    out
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.6}");
        let trimmed = s.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn x_ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    nice_ticks(lo, hi).into_iter().map(|v| (v, format_tick(v))).collect()
}

/// Tick positions in data units; for log axes (lo, hi are log10 values)
/// ticks sit on decades.
fn y_axis_ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if !log {
        return nice_ticks(lo, hi).into_iter().map(|v| (v, format_tick(v))).collect();
    }
    let first = lo.ceil() as i64;
    let last = hi.floor() as i64;
    let mut out = Vec::new();
    if first > last {
        // Less than one decade: fall back to a few linear positions.
        for v in nice_ticks(10f64.powf(lo), 10f64.powf(hi)) {
            if v > 0.0 {
                out.push((v, format_tick(v)));
            }
        }
        return out;
    }
    for e in first..=last {
        out.push((10f64.powi(e as i32), format!("1e{e}")));
    }
    out
}

/// Split a curve into maximal runs of plottable points.
fn finite_segments(
    x: &[f64],
    y: &[f64],
    keep: &dyn Fn(f64) -> bool,
) -> Vec<Vec<(f64, f64)>> {
    let mut segments = Vec::new();
    let mut current = Vec::new();
    for (&xv, &yv) in x.iter().zip(y) {
        if xv.is_finite() && keep(yv) {
            current.push((xv, yv));
        } else if !current.is_empty() {
            segments.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        segments.push(current);
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(haystack: &str, needle: &str) -> usize {
        haystack.matches(needle).count()
    }

    #[test]
    fn line_plot_renders_series_bands_and_legend() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y1: Vec<f64> = x.iter().map(|t| t.cos()).collect();
        let y2: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let lo: Vec<f64> = y1.iter().map(|v| v - 0.05).collect();
        let hi: Vec<f64> = y1.iter().map(|v| v + 0.05).collect();
        let mut plot = LinePlot::new("populations", "time", "population");
        plot.push(Series::new("ground", x.clone(), y1).with_band(lo, hi));
        plot.push(Series::new("excited", x, y2));
        let svg = plot.render().unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(count(&svg, "<polyline"), 2);
        assert_eq!(count(&svg, "<polygon"), 1);
        assert!(svg.contains("ground") && svg.contains("excited"));
        assert!(svg.contains("populations") && svg.contains("population"));
    }

    #[test]
    fn non_finite_points_split_the_polyline() {
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let y = vec![1.0, 2.0, f64::NAN, 4.0, 5.0];
        let mut plot = LinePlot::new("t", "x", "y");
        plot.push(Series::new("s", x, y));
        let svg = plot.render().unwrap();
        assert_eq!(count(&svg, "<polyline"), 2);
    }

    #[test]
    fn log_axis_uses_decade_ticks_and_drops_nonpositive() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y = vec![1e-5, 1e-4, 0.0, 1e-2];
        let mut plot = LinePlot::new("err", "delta", "error").log_y();
        plot.push(Series::new("scheme", x, y));
        let svg = plot.render().unwrap();
        assert!(svg.contains("1e-4") && svg.contains("1e-3"));
        assert_eq!(count(&svg, "<polyline"), 2);
    }

    #[test]
    fn empty_or_mismatched_input_is_rejected() {
        assert!(LinePlot::new("a", "b", "c").render().is_err());
        let mut plot = LinePlot::new("a", "b", "c");
        plot.push(Series::new("s", vec![1.0], vec![1.0, 2.0]));
        assert!(plot.render().is_err());
        let mut all_nan = LinePlot::new("a", "b", "c");
        all_nan.push(Series::new("s", vec![1.0], vec![f64::NAN]));
        assert!(all_nan.render().is_err());
    }

    #[test]
    fn bar_chart_draws_bars_whiskers_and_labels() {
        let mut chart = BarChart::new("scheme comparison", "time-averaged error").log_y();
        chart.push("em", 1e-2, 2e-3);
        chart.push("magnus1", 1e-3, 1e-4);
        chart.push("magnus2", 2e-4, 3e-5);
        let svg = chart.render().unwrap();
        assert_eq!(count(&svg, "<rect"), 2 + 3); // background + frame + bars
        assert!(count(&svg, "<line") >= 9); // three whiskers with caps
        assert!(svg.contains("magnus2"));
        let mut bad = BarChart::new("x", "y").log_y();
        bad.push("neg", -1.0, 0.1);
        assert!(bad.render().is_err());
    }

    #[test]
    fn ticks_cover_range_with_round_steps() {
        let t = nice_ticks(0.0, 1.0);
        assert!(t.contains(&0.0) && t.contains(&1.0));
        assert!(t.len() >= 4 && t.len() <= 8);
        let t2 = nice_ticks(-0.13, 2.7);
        assert!(t2.windows(2).all(|w| w[1] > w[0]));
        assert!(t2[0] >= -0.13 && *t2.last().unwrap() <= 2.7 + 1e-9);
    }

    #[test]
    fn svg_file_round_trips_to_disk() {
        let mut plot = LinePlot::new("t", "x", "y");
        plot.push(Series::new("s", vec![0.0, 1.0], vec![0.0, 1.0]));
        let svg = plot.render().unwrap();
        let path = std::env::temp_dir().join("magnus_qsd_plot_test.svg");
        write_svg(&path, &svg).unwrap();
        let back = std::fs::read_to_string(&path).unwrap();
        assert_eq!(back, svg);
        let _ = std::fs::remove_file(&path);
    }
}
