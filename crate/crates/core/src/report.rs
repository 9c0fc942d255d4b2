//! Deterministic report rendering: CSV series and fixed-geometry SVG line
//! charts suitable for golden-file comparison (no timestamps, stable number
//! formatting, LF endings).

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const CHART_WIDTH: u32 = 640;
pub const CHART_HEIGHT: u32 = 400;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// One named plotted series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }
}

/// Locale-independent short float formatting: up to 4 decimals, trailing
/// zeros trimmed, so identical inputs yield identical bytes everywhere.
pub fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e12 {
        return format!("{}", v as i64);
    }
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

fn axis_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Fixed-size SVG line chart. Empty series render as an empty-axes chart.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (CHART_WIDTH as f64, CHART_HEIGHT as f64);
    let (px0, px1) = (MARGIN_L, w - MARGIN_R);
    let (py0, py1) = (h - MARGIN_B, MARGIN_T);
    let (x_lo, x_hi) = axis_bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = axis_bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| px0 + (x - x_lo) / (x_hi - x_lo) * (px1 - px0);
    let sy = |y: f64| py0 + (y - y_lo) / (y_hi - y_lo) * (py1 - py0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_WIDTH}\" height=\"{CHART_HEIGHT}\" viewBox=\"0 0 {CHART_WIDTH} {CHART_HEIGHT}\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{CHART_WIDTH}\" height=\"{CHART_HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"14\">{}</text>",
        fmt_num(w / 2.0),
        xml_escape(title)
    );
    // Axes.
    let _ = writeln!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt_num(px0),
        fmt_num(py0),
        fmt_num(px1),
        fmt_num(py0)
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt_num(px0),
        fmt_num(py0),
        fmt_num(px0),
        fmt_num(py1)
    );
    // Ticks: 5 per axis.
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"10\">{}</text>",
            fmt_num(sx(xv)),
            fmt_num(py0 + 16.0),
            fmt_num(xv)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\">{}</text>",
            fmt_num(px0 - 6.0),
            fmt_num(sy(yv) + 3.0),
            fmt_num(yv)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">{}</text>",
        fmt_num((px0 + px1) / 2.0),
        fmt_num(h - 10.0),
        xml_escape(x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" transform=\"rotate(-90 14 {})\">{}</text>",
        fmt_num((py0 + py1) / 2.0),
        fmt_num((py0 + py1) / 2.0),
        xml_escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.points.is_empty() {
            let path: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt_num(sx(x)), fmt_num(sy(y))))
                .collect();
            let _ = writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
                color,
                path.join(" ")
            );
            for &(x, y) in &s.points {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\"/>",
                    fmt_num(sx(x)),
                    fmt_num(sy(y)),
                    color
                );
            }
        }
        let ly = MARGIN_T + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>",
            fmt_num(px1 - 150.0),
            fmt_num(ly),
            color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\">{}</text>",
            fmt_num(px1 - 136.0),
            fmt_num(ly + 9.0),
            xml_escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Write CSV with LF endings and locale-independent numbers.
pub fn write_csv(path: &std::path::Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parse a simple CSV produced by this crate: header + numeric columns
/// selected by name. Errors carry the 1-based offending line.
pub fn read_csv_columns(text: &str, wanted: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        format: "csv".into(),
        line: 1,
        detail: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut idx = Vec::with_capacity(wanted.len());
    for w in wanted {
        let i = cols.iter().position(|c| c == w).ok_or_else(|| Error::Parse {
            format: "csv".into(),
            line: 1,
            detail: format!("missing column {w}"),
        })?;
        idx.push(i);
    }
    let mut out = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let mut row = Vec::with_capacity(idx.len());
        for &i in &idx {
            let f = fields.get(i).ok_or_else(|| Error::Parse {
                format: "csv".into(),
                line: ln + 1,
                detail: "short row".into(),
            })?;
            row.push(f.parse::<f64>().map_err(|_| Error::Parse {
                format: "csv".into(),
                line: ln + 1,
                detail: format!("not a number: {f}"),
            })?);
        }
        out.push(row);
    }
    Ok(out)
}
