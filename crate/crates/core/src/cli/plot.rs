//! Minimal static SVG rendering of CSV artifacts: polylines, axis ticks and
//! a colour-mapped grid for heatmaps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 56.0;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("artifact {0} is not listed in the store manifest")]
    UnknownArtifact(String),
    #[error("column {0} not found")]
    MissingColumn(String),
    #[error("nothing to plot: {0}")]
    Empty(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Line,
    LogLog,
    SemiLog,
    Heatmap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    /// Store directory holding `manifest.json`.
    pub store: PathBuf,
    /// Artifact file name inside the store.
    pub artifact: String,
    pub x_column: Option<String>,
    pub y_column: Option<String>,
    pub x_label: String,
    pub y_label: String,
    pub output: PathBuf,
}

/// Numeric table read from a CSV artifact (`#` lines are comments; empty
/// fields become NaN).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, PlotError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(|f| f.trim().parse().unwrap_or(f64::NAN)).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, PlotError> {
        let k = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PlotError::MissingColumn(name.into()))?;
        Ok(self.rows.iter().map(|r| r.get(k).copied().unwrap_or(f64::NAN)).collect())
    }
}

/// Render `spec` and write the SVG. Fails if the artifact is not part of
/// the store's manifest.
pub fn render_artifact(spec: &PlotSpec) -> Result<String, PlotError> {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(spec.store.join("manifest.json"))?)?;
    let listed = manifest["artifacts"]
        .as_array()
        .is_some_and(|a| a.iter().any(|v| v.as_str() == Some(spec.artifact.as_str())));
    if !listed {
        return Err(PlotError::UnknownArtifact(spec.artifact.clone()));
    }
    let table = Table::read(&spec.store.join(&spec.artifact))?;
    let svg = match spec.kind {
        PlotKind::Heatmap => heatmap(&table, &spec.x_label, &spec.y_label)?,
        kind => {
            let xc = spec.x_column.clone().unwrap_or_else(|| table.headers[0].clone());
            let yc = spec
                .y_column
                .clone()
                .or_else(|| table.headers.get(1).cloned())
                .ok_or_else(|| PlotError::MissingColumn("second column".into()))?;
            let (x, y) = (table.column(&xc)?, table.column(&yc)?);
            line_plot(&x, &y, kind, &spec.x_label, &spec.y_label)?
        }
    };
    std::fs::write(&spec.output, &svg)?;
    Ok(svg)
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Roughly `n` round tick values covering `[lo, hi]`.
fn linear_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= n as f64)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: &[f64], log: bool) -> Option<Self> {
        let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite() && (!log || *x > 0.0)).collect();
        if v.is_empty() {
            return None;
        }
        let t = |x: f64| if log { x.log10() } else { x };
        let mut lo = v.iter().map(|&x| t(x)).fold(f64::INFINITY, f64::min);
        let mut hi = v.iter().map(|&x| t(x)).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Some(Self { lo, hi, log })
    }

    fn map(&self, x: f64, a: f64, b: f64) -> f64 {
        let x = if self.log { x.log10() } else { x };
        a + (x - self.lo) / (self.hi - self.lo) * (b - a)
    }

    /// Ticks in data coordinates.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            let every = ((b - a) / 8).max(1);
            (a..=b)
                .step_by(every as usize)
                .map(|k| 10f64.powi(k))
                .filter(|&v| v.log10() >= self.lo - 1e-9 && v.log10() <= self.hi + 1e-9)
                .collect()
        } else {
            linear_ticks(self.lo, self.hi, 6)
        }
    }
}

fn frame(svg: &mut String, xa: &Axis, ya: &Axis, x_label: &str, y_label: &str) {
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for t in xa.ticks() {
        let px = xa.map(t, x0, x1);
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            y0 + 19.0,
            fmt_tick(t)
        );
    }
    for t in ya.ticks() {
        let py = ya.map(t, y0, y1);
        let _ = writeln!(svg, r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            py + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let cy = (y0 + y1) / 2.0;
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{cy:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 18 {cy:.2})">{}</text>"#,
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open_svg() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Polyline of `(x, y)`; points that are not finite (or not positive on a
/// log axis) break the line.
pub fn line_plot(x: &[f64], y: &[f64], kind: PlotKind, x_label: &str, y_label: &str) -> Result<String, PlotError> {
    let (lx, ly) = match kind {
        PlotKind::LogLog => (true, true),
        PlotKind::SemiLog => (false, true),
        _ => (false, false),
    };
    let keep = |a: f64, log: bool| a.is_finite() && (!log || a > 0.0);
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(&a, &b)| (a, b)).collect();
    let good: Vec<(f64, f64)> = pts.iter().copied().filter(|&(a, b)| keep(a, lx) && keep(b, ly)).collect();
    if good.is_empty() {
        return Err(PlotError::Empty("no finite points".into()));
    }
    let xs: Vec<f64> = good.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = good.iter().map(|p| p.1).collect();
    let xa = Axis::fit(&xs, lx).expect("non-empty");
    let ya = Axis::fit(&ys, ly).expect("non-empty");
    let mut svg = open_svg();
    frame(&mut svg, &xa, &ya, x_label, y_label);
    let mut segment = String::new();
    let flush = |seg: &mut String, svg: &mut String| {
        if !seg.is_empty() {
            let _ = writeln!(svg, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, seg.trim_end());
            seg.clear();
        }
    };
    for &(a, b) in &pts {
        if keep(a, lx) && keep(b, ly) {
            let px = xa.map(a, MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
            let py = ya.map(b, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
            let _ = write!(segment, "{px:.2},{py:.2} ");
        } else {
            flush(&mut segment, &mut svg);
        }
    }
    flush(&mut segment, &mut svg);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Map `t ∈ [0, 1]` through a five-stop perceptual ramp.
fn colour(t: f64) -> String {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let s = t * 4.0;
    let k = (s.floor() as usize).min(3);
    let f = s - k as f64;
    let c: Vec<u8> = (0..3).map(|i| (STOPS[k][i] + f * (STOPS[k + 1][i] - STOPS[k][i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Grid of cells: rows of the table on the horizontal axis (first column as
/// coordinate), remaining columns stacked vertically.
pub fn heatmap(table: &Table, x_label: &str, y_label: &str) -> Result<String, PlotError> {
    let n_rows = table.rows.len();
    let n_cols = table.headers.len().saturating_sub(1);
    if n_rows == 0 || n_cols == 0 {
        return Err(PlotError::Empty("heatmap needs at least two columns and one row".into()));
    }
    let vals: Vec<f64> = table.rows.iter().flat_map(|r| r.iter().skip(1).copied()).filter(|v| v.is_finite()).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let xs = table.column(&table.headers[0])?;
    let xa = Axis::fit(&xs, false).ok_or_else(|| PlotError::Empty("no finite coordinates".into()))?;
    let ya = Axis {
        lo: 0.0,
        hi: n_cols as f64,
        log: false,
    };
    let mut svg = open_svg();
    let cw = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / n_rows as f64;
    let ch = (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) / n_cols as f64;
    for (i, row) in table.rows.iter().enumerate() {
        for j in 0..n_cols {
            let v = row.get(j + 1).copied().unwrap_or(f64::NAN);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN_LEFT + i as f64 * cw,
                HEIGHT - MARGIN_BOTTOM - (j + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05,
                colour((v - lo) / span)
            );
        }
    }
    frame(&mut svg, &xa, &ya, x_label, y_label);
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(linear_ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let log = Axis { lo: -2.0, hi: 3.0, log: true };
        assert_eq!(log.ticks(), vec![1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0]);
    }

    #[test]
    fn loglog_skips_non_positive_points() {
        let x = [1.0, 10.0, 100.0, 1000.0];
        let y = [1.0, -1.0, 100.0, 1000.0];
        let svg = line_plot(&x, &y, PlotKind::LogLog, "t", "msd").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(line_plot(&[1.0], &[-1.0], PlotKind::LogLog, "", "").is_err());
    }

    #[test]
    fn rendering_is_deterministic() {
        let x: Vec<f64> = (1..50).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let a = line_plot(&x, &y, PlotKind::Line, "x", "y<2>").unwrap();
        assert_eq!(a, line_plot(&x, &y, PlotKind::Line, "x", "y<2>").unwrap());
        assert!(a.contains("y&lt;2&gt;"));
    }

    #[test]
    fn colour_ramp_endpoints() {
        assert_eq!(colour(0.0), "#440154");
        assert_eq!(colour(1.0), "#fde725");
    }
}
