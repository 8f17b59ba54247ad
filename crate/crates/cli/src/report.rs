//! SVG line charts of training logs.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};
use crate::metrics_log::{ratio_below_one, LogRow};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_Y: f64 = 40.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Return,
    Ratio,
    HessianTrace,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Return, Metric::Ratio, Metric::HessianTrace];

    pub fn slug(self) -> &'static str {
        match self {
            Metric::Return => "return",
            Metric::Ratio => "ratio",
            Metric::HessianTrace => "hessian_trace",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Return => "evaluation return",
            Metric::Ratio => "divergence ratio",
            Metric::HessianTrace => "Hessian trace",
        }
    }

    fn value(self, row: &LogRow) -> f64 {
        match self {
            Metric::Return => row.ret,
            Metric::Ratio => row.ratio,
            Metric::HessianTrace => row.hessian_trace,
        }
    }

    /// Reference line drawn across the chart.
    fn reference(self) -> Option<f64> {
        (self == Metric::Ratio).then_some(1.0)
    }
}

pub fn series(name: &str, rows: &[LogRow], metric: Metric) -> Series {
    Series { name: name.to_string(), points: rows.iter().map(|r| (r.step, metric.value(r))).collect() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        Some((lo - 0.5, hi + 0.5))
    } else {
        Some((lo, hi))
    }
}

/// Line chart with one polyline per series (non-finite points split the line)
/// and a legend. `reference` adds a dashed horizontal line.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, all: &[Series], reference: Option<f64>) -> String {
    let points = || all.iter().flat_map(|s| s.points.iter().copied()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (x0, x1) = bounds(points().map(|p| p.0)).unwrap_or((0.0, 1.0));
    let (y0, y1) = bounds(points().map(|p| p.1).chain(reference)).unwrap_or((0.0, 1.0));
    let (pw, ph) = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT, HEIGHT - 2.0 * MARGIN_Y);
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_Y + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, MARGIN_LEFT + pw / 2.0, escape(title));
    let _ = writeln!(svg, r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(xv), HEIGHT - MARGIN_Y + 15.0, tick(xv));
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_LEFT - 5.0, sy(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, MARGIN_LEFT + pw / 2.0, HEIGHT - 8.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">{1}</text>"#,
        MARGIN_Y + ph / 2.0,
        escape(y_label)
    );
    if let Some(r) = reference {
        let _ = writeln!(
            svg,
            r##"<line class="reference" x1="{MARGIN_LEFT}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#555" stroke-dasharray="4 3"/>"##,
            sy(r),
            MARGIN_LEFT + pw
        );
    }
    for (k, s) in all.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut segment: Vec<String> = Vec::new();
        let flush = |segment: &mut Vec<String>, svg: &mut String| {
            if !segment.is_empty() {
                let _ = writeln!(svg, r#"<polyline class="series" data-name="{}" fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, escape(&s.name), segment.join(" "));
                segment.clear();
            }
        };
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                segment.push(format!("{:.2},{:.2}", sx(x), sy(y)));
            } else {
                flush(&mut segment, &mut svg);
            }
        }
        flush(&mut segment, &mut svg);
        let ly = MARGIN_Y + 10.0 + 18.0 * k as f64;
        let lx = MARGIN_LEFT + pw + 10.0;
        let _ = writeln!(svg, r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#, lx + 20.0, lx + 25.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn chart_for(runs: &[(String, Vec<LogRow>)], metric: Metric) -> String {
    let all: Vec<Series> = runs.iter().map(|(name, rows)| series(name, rows, metric)).collect();
    let title = if runs.len() == 1 { format!("{} ({})", metric.label(), runs[0].0) } else { metric.label().to_string() };
    line_chart(&title, "environment step", metric.label(), &all, metric.reference())
}

/// Writes three charts per run, plus overlays when there is more than one run.
pub fn write_plots(runs: &[(String, Vec<LogRow>)], dir: &Path) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: String, body: String| -> CliResult<()> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for run in runs {
        for metric in Metric::ALL {
            emit(format!("{}_{}.svg", run.0, metric.slug()), chart_for(std::slice::from_ref(run), metric))?;
        }
    }
    if runs.len() > 1 {
        for metric in Metric::ALL {
            emit(format!("overlay_{}.svg", metric.slug()), chart_for(runs, metric))?;
        }
    }
    Ok(written)
}

/// Table of the fraction of updates with divergence ratio below one.
pub fn fraction_table(runs: &[(String, Vec<LogRow>)]) -> String {
    let width = runs.iter().map(|r| r.0.len()).max().unwrap_or(3).max(3);
    let mut out = format!("{:width$}  {:>7}  {:>12}\n", "run", "updates", "ratio<1");
    for (name, rows) in runs {
        let _ = writeln!(out, "{name:width$}  {:>7}  {:>12.2}", rows.len(), ratio_below_one(rows));
    }
    out
}
