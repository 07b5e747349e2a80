//! SVG learning-curve and histogram plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub inputs: Vec<PathBuf>,
    pub labels: Vec<String>,
    pub threshold: Option<f64>,
    pub title: String,
    pub output: PathBuf,
}

impl PlotSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.inputs.is_empty() {
            return Err(CliError::Usage("plot needs at least one input series".into()));
        }
        if !self.labels.is_empty() && self.labels.len() != self.inputs.len() {
            return Err(CliError::Usage(format!(
                "{} labels for {} inputs",
                self.labels.len(),
                self.inputs.len()
            )));
        }
        Ok(())
    }

    fn label(&self, i: usize) -> String {
        self.labels.get(i).cloned().unwrap_or_else(|| {
            self.inputs[i]
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("series {i}"))
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct CurveRow {
    pub episode: f64,
    pub mean: f64,
    #[serde(default)]
    pub variance: Option<f64>,
    #[serde(default)]
    pub std: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct BinRow {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: f64,
}

/// Parses every row of a CSV with a header line. Rows are numbered from 1
/// at the header, like the line numbers of an editor.
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Usage(format!("{}: {other:?}", path.display())),
    })?;
    let mut rows = Vec::new();
    for (i, rec) in rd.deserialize::<T>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| {
            let at = e.position().map(|p| p.line()).unwrap_or(row as u64);
            CliError::Usage(format!("{}: malformed row {at}: {e}", path.display()))
        })?;
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (ylo, yhi) = widen(y);
        let pad = 0.05 * (yhi - ylo);
        Self {
            x: widen(x),
            y: (ylo - pad, yhi + pad),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str, config_hash: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "<desc>config-hash {config_hash}</desc>");
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        esc(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
    );
    let _ = writeln!(out, r#"<g class="ticks">"#);
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.px(xv),
            y0 + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            f.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        esc(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        esc(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(out: &mut String, labels: &[String], dashed_threshold: bool) {
    let x = WIDTH - RIGHT + 15.0;
    let _ = writeln!(out, r#"<g class="legend">"#);
    for (i, l) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<g class="legend-entry"><line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            x + 20.0,
            COLORS[i % COLORS.len()],
            x + 26.0,
            y + 4.0,
            esc(l)
        );
    }
    if dashed_threshold {
        let y = TOP + 10.0 + 20.0 * labels.len() as f64;
        let _ = writeln!(
            out,
            r#"<g class="legend-threshold"><line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="black" stroke-dasharray="6 4"/><text x="{}" y="{}">threshold</text></g>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0
        );
    }
    let _ = writeln!(out, "</g>");
}

/// Mean line with a translucent ±1 std band per series, plus an optional
/// dashed threshold line.
pub fn curves_svg(series: &[(String, Vec<CurveRow>)], threshold: Option<f64>, title: &str, config_hash: &str) -> String {
    let std_of = |r: &CurveRow| r.std.or(r.variance.map(f64::sqrt)).unwrap_or(0.0);
    let xs = series.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.episode));
    let x = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for r in series.iter().flat_map(|(_, rows)| rows) {
        let s = std_of(r);
        y = (y.0.min(r.mean - s), y.1.max(r.mean + s));
    }
    if let Some(t) = threshold {
        y = (y.0.min(t), y.1.max(t));
    }
    let f = Frame::new(x, y);
    let mut out = String::new();
    header(&mut out, title, config_hash);
    axes(&mut out, &f, "episode", "cumulative reward");
    for (i, (_, rows)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let upper = rows.iter().map(|r| format!("{:.2},{:.2}", f.px(r.episode), f.py(r.mean + std_of(r))));
        let lower = rows.iter().rev().map(|r| format!("{:.2},{:.2}", f.px(r.episode), f.py(r.mean - std_of(r))));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            out,
            r#"<polygon class="band" fill="{color}" fill-opacity="0.2" stroke="none" points="{}"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = rows.iter().map(|r| format!("{:.2},{:.2}", f.px(r.episode), f.py(r.mean))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            line.join(" ")
        );
    }
    if let Some(t) = threshold {
        let _ = writeln!(
            out,
            r#"<line class="threshold" x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="6 4"/>"#,
            WIDTH - RIGHT,
            y = f.py(t)
        );
    }
    let labels: Vec<String> = series.iter().map(|(l, _)| l.clone()).collect();
    legend(&mut out, &labels, threshold.is_some());
    out.push_str("</svg>\n");
    out
}

/// Side-by-side bars of each series' final-reward histogram.
pub fn histogram_svg(series: &[(String, Vec<BinRow>)], threshold: Option<f64>, title: &str, config_hash: &str) -> String {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ymax: f64 = 0.0;
    for r in series.iter().flat_map(|(_, rows)| rows) {
        x = (x.0.min(r.bin_low), x.1.max(r.bin_high));
        ymax = ymax.max(r.count);
    }
    if let Some(t) = threshold {
        x = (x.0.min(t), x.1.max(t));
    }
    let f = Frame::new(x, (0.0, ymax.max(1.0)));
    let mut out = String::new();
    header(&mut out, title, config_hash);
    axes(&mut out, &f, "final cumulative reward", "policies");
    let n = series.len() as f64;
    for (i, (_, rows)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(out, r#"<g class="bars" fill="{color}" fill-opacity="0.7">"#);
        for r in rows {
            let w = (f.px(r.bin_high) - f.px(r.bin_low)).max(1.0) / n;
            let x0 = f.px(r.bin_low) + w * i as f64;
            let top = f.py(r.count);
            let _ = writeln!(
                out,
                r#"<rect class="bar" x="{x0:.2}" y="{top:.2}" width="{w:.2}" height="{:.2}"/>"#,
                f.py(0.0) - top
            );
        }
        let _ = writeln!(out, "</g>");
    }
    if let Some(t) = threshold {
        let _ = writeln!(
            out,
            r#"<line class="threshold" x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-dasharray="6 4"/>"#,
            HEIGHT - BOTTOM,
            x = f.px(t)
        );
    }
    let labels: Vec<String> = series.iter().map(|(l, _)| l.clone()).collect();
    legend(&mut out, &labels, threshold.is_some());
    out.push_str("</svg>\n");
    out
}

/// Reads the input CSVs and renders the curve or histogram variant.
pub fn render(spec: &PlotSpec, histogram: bool, config_hash: &str) -> Result<String, CliError> {
    spec.validate()?;
    if histogram {
        let series = spec
            .inputs
            .iter()
            .enumerate()
            .map(|(i, p)| Ok((spec.label(i), read_rows::<BinRow>(p)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(histogram_svg(&series, spec.threshold, &spec.title, config_hash))
    } else {
        let series = spec
            .inputs
            .iter()
            .enumerate()
            .map(|(i, p)| Ok((spec.label(i), read_rows::<CurveRow>(p)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(curves_svg(&series, spec.threshold, &spec.title, config_hash))
    }
}

/// Scatter panels sharing one SVG document, used by the toy figure.
pub struct Panel<'a> {
    pub title: &'a str,
    pub points: &'a [[f64; 2]],
    /// Draw points as segments from the origin of the panel.
    pub arrows_from: Option<[f64; 2]>,
    pub path: Option<&'a [[f64; 2]]>,
    pub marker: Option<[f64; 2]>,
}

pub fn panels_svg(title: &str, panels: &[Panel<'_>], caption: &str, config_hash: &str) -> String {
    let size = 260.0;
    let gap = 20.0;
    let w = gap + panels.len() as f64 * (size + gap);
    let h = size + 90.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "<desc>config-hash {config_hash}</desc>");
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(title));
    for (k, p) in panels.iter().enumerate() {
        let ox = gap + k as f64 * (size + gap);
        let oy = 40.0;
        let mut all: Vec<[f64; 2]> = p.points.to_vec();
        all.extend(p.path.unwrap_or(&[]));
        all.extend(p.marker);
        all.extend(p.arrows_from);
        let ext = all.iter().fold(1e-9_f64, |m, q| m.max(q[0].abs()).max(q[1].abs())) * 1.1;
        let tx = |v: f64| ox + size / 2.0 + v / ext * size / 2.0;
        let ty = |v: f64| oy + size / 2.0 - v / ext * size / 2.0;
        let _ = writeln!(out, r#"<g class="panel">"#);
        let _ = writeln!(
            out,
            r##"<rect x="{ox}" y="{oy}" width="{size}" height="{size}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            ox + size / 2.0,
            oy + size + 18.0,
            esc(p.title)
        );
        if let Some(path) = p.path {
            let pts: Vec<String> = path.iter().map(|q| format!("{:.2},{:.2}", tx(q[0]), ty(q[1]))).collect();
            let _ = writeln!(out, r##"<polyline fill="none" stroke="#333" stroke-width="2" points="{}"/>"##, pts.join(" "));
        }
        for q in p.points {
            match p.arrows_from {
                Some(o) => {
                    let _ = writeln!(
                        out,
                        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#1f77b4" stroke-opacity="0.5"/>"##,
                        tx(o[0]),
                        ty(o[1]),
                        tx(q[0]),
                        ty(q[1])
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#1f77b4" fill-opacity="0.5"/>"##,
                        tx(q[0]),
                        ty(q[1])
                    );
                }
            }
        }
        if let Some(m) = p.marker {
            let _ = writeln!(out, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#d62728"/>"##, tx(m[0]), ty(m[1]));
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, esc(caption));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> Vec<CurveRow> {
        (0..n)
            .map(|k| CurveRow {
                episode: (10 * (k + 1)) as f64,
                mean: k as f64,
                variance: Some(1.0),
                std: Some(1.0),
            })
            .collect()
    }

    #[test]
    fn one_series_one_polyline() {
        let svg = curves_svg(&[("a".into(), rows(3))], Some(1.0), "t", "h");
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("class=\"series\"").nth(1).unwrap();
        let pts = pts.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 3);
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
        assert!(svg.contains("fill-opacity=\"0.2\""));
    }

    #[test]
    fn legend_lists_each_series() {
        let svg = curves_svg(&[("a".into(), rows(2)), ("b".into(), rows(4))], None, "t", "h");
        assert_eq!(svg.matches("class=\"legend-entry\"").count(), 2);
    }

    #[test]
    fn histogram_draws_a_bar_per_bin() {
        let bins = vec![
            BinRow { bin_low: 0.0, bin_high: 1.0, count: 2.0 },
            BinRow { bin_low: 1.0, bin_high: 2.0, count: 0.0 },
        ];
        let svg = histogram_svg(&[("a".into(), bins)], Some(1.5), "t", "h");
        assert_eq!(svg.matches("class=\"bar\"").count(), 2);
    }

    #[test]
    fn labels_escape_markup() {
        let svg = curves_svg(&[("<a&b>".into(), rows(1))], None, "t", "h");
        assert!(svg.contains("&lt;a&amp;b&gt;"));
    }
}
