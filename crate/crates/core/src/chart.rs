//! Standalone SVG line and bar charts. Output depends only on the input, so
//! identical series give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::ChartError;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Half-widths drawn as whiskers around each `y`.
    pub ci: Option<Vec<f64>>,
}

impl Series {
    pub fn new(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            x,
            y,
            ci: None,
        }
    }

    pub fn with_ci(mut self, ci: Vec<f64>) -> Self {
        self.ci = Some(ci);
        self
    }

    fn check(&self) -> Result<(), ChartError> {
        let ci_ok = self.ci.as_ref().is_none_or(|c| c.len() == self.y.len());
        if self.x.len() != self.y.len() || !ci_ok {
            return Err(ChartError::LengthMismatch(self.label.clone()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartKind {
    Line,
    Bar,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Labels {
    pub title: String,
    pub x: String,
    pub y: String,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

pub fn render_svg(
    series: &[Series],
    kind: ChartKind,
    labels: &Labels,
) -> Result<String, ChartError> {
    for s in series {
        s.check()?;
    }
    if series.iter().all(|s| s.x.is_empty()) {
        return Err(ChartError::EmptySeries);
    }
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    let y_top = series
        .iter()
        .flat_map(|s| {
            s.y.iter()
                .enumerate()
                .map(move |(i, y)| finite(*y) + s.ci.as_ref().map_or(0.0, |c| finite(c[i])))
        })
        .fold(0.0_f64, f64::max);
    let y_max = nice_ceiling(y_top);
    let mut xs: Vec<f64> = series.iter().flat_map(|s| s.x.iter().copied()).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (x_min, x_max) = (xs[0], xs[xs.len() - 1]);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let sy = |y: f64| TOP + plot_h - finite(y).max(0.0) / y_max * plot_h;
    let slot = plot_w / xs.len() as f64;
    let sx = |x: f64| match kind {
        ChartKind::Line if x_max > x_min => LEFT + (x - x_min) / (x_max - x_min) * plot_w,
        ChartKind::Line => LEFT + plot_w / 2.0,
        ChartKind::Bar => {
            let i = xs.iter().position(|v| *v == x).unwrap_or(0);
            LEFT + slot * (i as f64 + 0.5)
        }
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if !labels.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text class="title" x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(&labels.title)
        );
    }

    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black"><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/></g>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text class="ytick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(v) + 4.0,
            fmt_num(v)
        );
    }
    for &x in &xs {
        let _ = writeln!(
            svg,
            r#"<text class="xtick" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(x),
            TOP + plot_h + 16.0,
            fmt_num(x)
        );
    }
    if !labels.x.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            H - 12.0,
            escape(&labels.x)
        );
    }
    if !labels.y.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text class="ylabel" x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&labels.y)
        );
    }

    let bar_w = slot * 0.8 / series.len() as f64;
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            svg,
            r#"<g class="series" data-label="{}">"#,
            escape(&s.label)
        );
        match kind {
            ChartKind::Line => {
                let pts: Vec<String> =
                    s.x.iter()
                        .zip(&s.y)
                        .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                    pts.join(" ")
                );
                for (&x, &y) in s.x.iter().zip(&s.y) {
                    let _ = writeln!(
                        svg,
                        r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                        sx(x),
                        sy(y)
                    );
                }
            }
            ChartKind::Bar => {
                for (&x, &y) in s.x.iter().zip(&s.y) {
                    let left = sx(x) - slot * 0.4 + bar_w * k as f64;
                    let _ = writeln!(
                        svg,
                        r#"<rect class="point" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                        left,
                        sy(y),
                        bar_w,
                        TOP + plot_h - sy(y)
                    );
                }
            }
        }
        if let Some(ci) = &s.ci {
            for ((&x, &y), &c) in s.x.iter().zip(&s.y).zip(ci) {
                let cx = match kind {
                    ChartKind::Line => sx(x),
                    ChartKind::Bar => sx(x) - slot * 0.4 + bar_w * (k as f64 + 0.5),
                };
                let _ = writeln!(
                    svg,
                    r#"<line class="ci" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                    sy(y - c),
                    sy(y + c)
                );
            }
        }
        svg.push_str("</g>\n");

        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = W - RIGHT + 16.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/><text x="{:.2}" y="{ly:.2}">{}</text></g>"#,
            ly - 10.0,
            lx + 18.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders and writes atomically: a temp file next to `out`, then a rename.
pub fn render_chart(
    series: &[Series],
    kind: ChartKind,
    labels: &Labels,
    out: &Path,
) -> Result<(), ChartError> {
    let svg = render_svg(series, kind, labels)?;
    write_atomic(out, svg.as_bytes()).map_err(|e| ChartError::Io(out.display().to_string(), e))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "no file name"))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn nice_ceiling(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * mag >= v {
            return step * mag;
        }
    }
    10.0 * mag
}

fn fmt_num(v: f64) -> String {
    if v == v.round() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
