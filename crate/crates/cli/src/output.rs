//! CSV tables, field snapshots and SVG line charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use apfv_core::StructuredMesh;

use crate::error::{CliError, CliResult};

pub const UNITS_LINE: &str =
    "# units: nondimensional (length of the unit cell, reference density 1, time = length / velocity); counts are integers";

/// Fixed-width round-trip formatting so repeated runs give identical bytes.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table kept in memory until written.
#[derive(Clone, Debug)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    /// Starts a table with the config hash and units comment lines followed
    /// by the header row.
    pub fn new(config_hash: &str, header: &[&str]) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "# config_hash={config_hash}");
        let _ = writeln!(text, "{UNITS_LINE}");
        text.push_str(&header.join(","));
        text.push('\n');
        Csv {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.columns, "csv row width");
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_file(path, &self.text)
    }
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Text snapshot of one cell field: a comment naming the field, a line
/// `nx ny lx ly time`, then `ny` rows of `nx` values (row `j = 0` first).
pub fn snapshot_text(mesh: &StructuredMesh, field: &str, step: usize, time: f64, values: &[f64]) -> String {
    assert_eq!(values.len(), mesh.cell_count());
    let mut s = String::new();
    let _ = writeln!(s, "# field={field} step={step}");
    let _ = writeln!(
        s,
        "{} {} {} {} {}",
        mesh.nx(),
        mesh.ny(),
        fmt_f64(mesh.lx()),
        fmt_f64(mesh.ly()),
        fmt_f64(time)
    );
    for row in values.chunks(mesh.nx()) {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Parses [`snapshot_text`] output into `(nx, ny, lx, ly, time, values)`.
pub fn parse_snapshot(text: &str) -> Option<(usize, usize, f64, f64, f64, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let head: Vec<&str> = lines.next()?.split_whitespace().collect();
    if head.len() != 5 {
        return None;
    }
    let nx = head[0].parse().ok()?;
    let ny = head[1].parse().ok()?;
    let (lx, ly, t) = (head[2].parse().ok()?, head[3].parse().ok()?, head[4].parse().ok()?);
    let mut values = Vec::with_capacity(nx * ny);
    for line in lines {
        let row: Vec<f64> = line.split_whitespace().map(|v| v.parse().ok()).collect::<Option<_>>()?;
        if row.len() != nx {
            return None;
        }
        values.extend(row);
    }
    (values.len() == nx * ny).then_some((nx, ny, lx, ly, t, values))
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line chart of one or more `(x, y)` series.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let pts = series.iter().flat_map(|(_, s)| s.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x0.is_finite() && x1.is_finite()) {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        let pad = if y0 == 0.0 { 1.0 } else { 0.5 * y0.abs() };
        y0 -= pad;
        y1 += pad;
    }
    let pw = SVG_W - MARGIN_L - MARGIN_R;
    let ph = SVG_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        SVG_W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            SVG_H - MARGIN_B + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        SVG_H - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(y_label)
    );
    for (i, (name, data)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = data
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = MARGIN_T + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{}</text>"#,
            SVG_W - MARGIN_R - 8.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_hash_units_and_header() {
        let mut c = Csv::new("abc", &["a", "b"]);
        c.row(&["1".into(), fmt_f64(0.5)]);
        let lines: Vec<&str> = c.as_str().lines().collect();
        assert_eq!(lines[0], "# config_hash=abc");
        assert!(lines[1].starts_with("# units:"));
        assert_eq!(lines[2], "a,b");
        assert_eq!(lines[3], "1,5.0000000000000000e-1");
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn snapshot_round_trips_row_major() {
        let mesh = StructuredMesh::new(3, 4, 1.5, 2.0).unwrap();
        let values: Vec<f64> = (0..12).map(|k| k as f64 * 0.1).collect();
        let text = snapshot_text(&mesh, "rho", 20, 0.25, &values);
        assert_eq!(text.lines().count(), 2 + 4);
        let (nx, ny, lx, ly, t, back) = parse_snapshot(&text).unwrap();
        assert_eq!((nx, ny, lx, ly, t), (3, 4, 1.5, 2.0, 0.25));
        assert_eq!(back, values);
        // Third line holds the first grid row (j = 0).
        let third: Vec<f64> = text.lines().nth(2).unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(third, vec![0.0, 0.1, 0.2]);
    }

    #[test]
    fn svg_contains_one_polyline_per_series() {
        let s = svg_line_chart(
            "t <1>",
            "time",
            "energy",
            &[("a", vec![(0.0, 1.0), (1.0, 0.5)]), ("b", vec![(0.0, 2.0), (1.0, 2.0)])],
        );
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("t &lt;1&gt;"));
    }

    #[test]
    fn svg_handles_constant_and_empty_series() {
        let s = svg_line_chart("c", "x", "y", &[("flat", vec![(0.0, 0.0), (0.0, 0.0)])]);
        assert!(!s.contains("NaN") && !s.contains("inf"));
        let s = svg_line_chart("e", "x", "y", &[("none", vec![])]);
        assert!(!s.contains("NaN"));
    }
}
