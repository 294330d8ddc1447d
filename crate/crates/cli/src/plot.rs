//! Deterministic SVG scatter and curve plots from CSV tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use geomae::table::Table;
use geomae::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// `x1` against `x2` for every input.
    Scatter2d,
    /// Top (`x1`, `x2`) and side (`x1`, `x3`) orthographic views side by side.
    Scatter3dProjection,
    /// Latent codes `z1`, `z2` (or `z1` against `gt_z1`, else the row index).
    LatentEmbedding,
    /// First input as points, every further input as a polyline through its
    /// rows.
    CurveOverlay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Style {
    pub point_size: f64,
    /// Series colors, cycled.
    pub colors: Vec<String>,
    pub width: u32,
    pub height: u32,
    pub title: Option<String>,
    /// Color points of the first series by this column instead of a flat color.
    pub color_by: Option<String>,
}

impl Default for Style {
    fn default() -> Self {
        Style {
            point_size: 2.5,
            colors: [
                "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            width: 640,
            height: 480,
            title: None,
            color_by: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    #[serde(default)]
    pub style: Style,
}

impl PlotSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("plot spec {}: {e}", path.display())))
    }
}

struct Series {
    name: String,
    x: Vec<f64>,
    y: Vec<f64>,
    values: Option<Vec<f64>>,
    line: bool,
}

struct Panel {
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

fn column(t: &Table, name: &str, path: &Path) -> Result<Vec<f64>> {
    t.column(name)
        .map_err(|e| e.context(path.display().to_string()))
}

fn series_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Renders the plot described by `spec` from already loaded tables (one per
/// input, in order).
pub fn render(spec: &PlotSpec, tables: &[Table]) -> Result<String> {
    if tables.is_empty() || tables.len() != spec.inputs.len() {
        return Err(Error::InvalidArgument(
            "a plot needs at least one input table".into(),
        ));
    }
    let inputs: Vec<(&Path, &Table)> = spec
        .inputs
        .iter()
        .map(|p| p.as_path())
        .zip(tables)
        .collect();
    let color_values = |i: usize, t: &Table, p: &Path| -> Result<Option<Vec<f64>>> {
        match (&spec.style.color_by, i) {
            (Some(c), 0) => Ok(Some(column(t, c, p)?)),
            _ => Ok(None),
        }
    };
    let panels = match spec.kind {
        PlotKind::Scatter2d => {
            let mut series = Vec::new();
            for (i, (p, t)) in inputs.iter().enumerate() {
                series.push(Series {
                    name: series_name(p),
                    x: column(t, "x1", p)?,
                    y: column(t, "x2", p)?,
                    values: color_values(i, t, p)?,
                    line: false,
                });
            }
            vec![Panel {
                x_label: "x1".into(),
                y_label: "x2".into(),
                series,
            }]
        }
        PlotKind::Scatter3dProjection => {
            let mut top = Vec::new();
            let mut side = Vec::new();
            for (i, (p, t)) in inputs.iter().enumerate() {
                let (x1, x2, x3) = (
                    column(t, "x1", p)?,
                    column(t, "x2", p)?,
                    column(t, "x3", p)?,
                );
                let values = color_values(i, t, p)?;
                top.push(Series {
                    name: series_name(p),
                    x: x1.clone(),
                    y: x2,
                    values: values.clone(),
                    line: false,
                });
                side.push(Series {
                    name: series_name(p),
                    x: x1,
                    y: x3,
                    values,
                    line: false,
                });
            }
            vec![
                Panel {
                    x_label: "x1".into(),
                    y_label: "x2".into(),
                    series: top,
                },
                Panel {
                    x_label: "x1".into(),
                    y_label: "x3".into(),
                    series: side,
                },
            ]
        }
        PlotKind::LatentEmbedding => {
            let mut series = Vec::new();
            let mut y_label = String::new();
            for (i, (p, t)) in inputs.iter().enumerate() {
                let x = column(t, "z1", p)?;
                let (y, label) = if t.column_index("z2").is_ok() {
                    (column(t, "z2", p)?, "z2")
                } else if t.column_index("gt_z1").is_ok() {
                    (column(t, "gt_z1", p)?, "gt_z1")
                } else {
                    ((0..x.len()).map(|k| k as f64).collect(), "index")
                };
                y_label = label.into();
                series.push(Series {
                    name: series_name(p),
                    x,
                    y,
                    values: color_values(i, t, p)?,
                    line: false,
                });
            }
            vec![Panel {
                x_label: "z1".into(),
                y_label,
                series,
            }]
        }
        PlotKind::CurveOverlay => {
            let mut series = Vec::new();
            for (i, (p, t)) in inputs.iter().enumerate() {
                series.push(Series {
                    name: series_name(p),
                    x: column(t, "x1", p)?,
                    y: column(t, "x2", p)?,
                    values: color_values(i, t, p)?,
                    line: i > 0,
                });
            }
            vec![Panel {
                x_label: "x1".into(),
                y_label: "x2".into(),
                series,
            }]
        }
    };
    Ok(svg(&panels, &spec.style))
}

/// Loads the inputs, renders, and writes the output file.
pub fn run(spec: &PlotSpec) -> Result<()> {
    let tables = spec
        .inputs
        .iter()
        .map(|p| Table::load(p))
        .collect::<Result<Vec<_>>>()?;
    let text = render(spec, &tables)?;
    std::fs::write(&spec.output, text)
        .map_err(|e| Error::from(e).context(format!("writing {}", spec.output.display())))
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Unpadded finite range for the color ramp; a constant column maps to the
/// ramp start.
fn value_range(values: &[f64]) -> (f64, f64) {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo, lo + 1.0)
    } else {
        (lo, hi)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-9 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Piecewise-linear blue to yellow ramp.
fn ramp(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 4] = [
        (68.0, 1.0, 84.0),
        (49.0, 104.0, 142.0),
        (53.0, 183.0, 121.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let s = t * (STOPS.len() - 1) as f64;
    let i = (s.floor() as usize).min(STOPS.len() - 2);
    let f = s - i as f64;
    let mix = |a: f64, b: f64| (a + f * (b - a)).round() as u8;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg(panels: &[Panel], style: &Style) -> String {
    let (pw, ph) = (style.width as f64, style.height as f64);
    let total_w = pw * panels.len() as f64;
    let top = if style.title.is_some() { 30.0 } else { 0.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{}" viewBox="0 0 {total_w} {}" font-family="sans-serif" font-size="12">"#,
        ph + top,
        ph + top
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(title) = &style.title {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="16">{}</text>"#,
            total_w / 2.0,
            escape(title)
        );
    }
    for (k, panel) in panels.iter().enumerate() {
        let (ml, mr, mt, mb) = (60.0, 20.0, 20.0, 50.0);
        let ox = k as f64 * pw + ml;
        let oy = top + mt;
        let (w, h) = (pw - ml - mr, ph - mt - mb);
        let (x0, x1) = bounds(panel.series.iter().flat_map(|s| s.x.iter().copied()));
        let (y0, y1) = bounds(panel.series.iter().flat_map(|s| s.y.iter().copied()));
        let sx = |v: f64| ox + (v - x0) / (x1 - x0) * w;
        let sy = |v: f64| oy + h - (v - y0) / (y1 - y0) * h;
        let _ = writeln!(s, r#"<g class="axes">"#);
        let _ = writeln!(
            s,
            r#"<rect x="{ox:.2}" y="{oy:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="black"/>"#
        );
        for t in ticks(x0, x1) {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/><text x="{0:.2}" y="{3:.2}" text-anchor="middle">{4}</text>"#,
                sx(t),
                oy + h,
                oy + h + 5.0,
                oy + h + 18.0,
                label(t)
            );
        }
        for t in ticks(y0, y1) {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="black"/><text x="{3:.2}" y="{4:.2}" text-anchor="end">{5}</text>"#,
                ox - 5.0,
                sy(t),
                ox,
                ox - 8.0,
                sy(t) + 4.0,
                label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            ox + w / 2.0,
            oy + h + 38.0,
            escape(&panel.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{0:.2}" y="{1:.2}" text-anchor="middle" transform="rotate(-90 {0:.2} {1:.2})">{2}</text>"#,
            ox - 45.0,
            oy + h / 2.0,
            escape(&panel.y_label)
        );
        let _ = writeln!(s, "</g>");
        for (i, series) in panel.series.iter().enumerate() {
            let color = &style.colors[i % style.colors.len().max(1)];
            let _ = writeln!(
                s,
                r#"<g class="series" data-name="{}">"#,
                escape(&series.name)
            );
            if series.line {
                let pts: Vec<String> = series
                    .x
                    .iter()
                    .zip(&series.y)
                    .filter(|(a, b)| a.is_finite() && b.is_finite())
                    .map(|(&a, &b)| format!("{:.2},{:.2}", sx(a), sy(b)))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
            } else {
                let (v0, v1) = series
                    .values
                    .as_ref()
                    .map(|v| value_range(v))
                    .unwrap_or((0.0, 1.0));
                for (j, (&a, &b)) in series.x.iter().zip(&series.y).enumerate() {
                    if !(a.is_finite() && b.is_finite()) {
                        continue;
                    }
                    let fill = match &series.values {
                        Some(v) => ramp((v[j] - v0) / (v1 - v0)),
                        None => color.clone(),
                    };
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{fill}"/>"#,
                        sx(a),
                        sy(b),
                        style.point_size
                    );
                }
            }
            let _ = writeln!(s, "</g>");
        }
        // legend
        for (i, series) in panel.series.iter().enumerate() {
            let color = &style.colors[i % style.colors.len().max(1)];
            let ly = oy + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                ox + w - 120.0,
                ly - 9.0,
                ox + w - 105.0,
                ly,
                escape(&series.name)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
