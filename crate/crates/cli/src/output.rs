//! CSV, JSON and SVG output.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::run::{RunResult, SeriesTable, VerificationReport};

pub const CSV_HEADER: &str = "r,integral_sinh_H,integral_H,g,phi,phi_err,bound_B,margin";

/// Formats with 17 significant digits, enough to round-trip every `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_text(table: &SeriesTable) -> String {
    let mut out = String::with_capacity(64 * (table.r.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for i in 0..table.r.len() {
        let row = [
            table.r[i],
            table.integral_sinh_h[i],
            table.integral_h[i],
            table.g[i],
            table.phi[i],
            table.phi_err[i],
            table.bound[i],
            table.margin[i],
        ];
        let cells: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses a file written by [`csv_text`] back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<Vec<f64>>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .map(|line| {
            line.split(',')
                .map(|c| c.parse::<f64>().map_err(|e| format!("{c}: {e}")))
                .collect()
        })
        .collect()
}

/// File-name-safe form of a center label.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes CSV series, optional plots and `report.json` into `dir`.
pub fn write_all(result: &mut RunResult, dir: &Path, plot: bool) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    for (label, table) in &result.tables {
        let stem = file_stem(label);
        let csv_name = format!("phi_{stem}.csv");
        fs::write(dir.join(&csv_name), csv_text(table))?;
        let plot_name = format!("phi_{stem}.svg");
        if plot {
            fs::write(dir.join(&plot_name), svg_plot(label, table))?;
        }
        if let Some(c) = result.report.centers.iter_mut().find(|c| &c.label == label) {
            c.csv = Some(csv_name);
            c.plot = plot.then_some(plot_name);
        }
    }
    let path = dir.join("report.json");
    fs::write(&path, report_json(&result.report)?)?;
    Ok(path)
}

pub fn report_json(report: &VerificationReport) -> io::Result<String> {
    // non-finite numbers have no JSON form and become null
    let mut text = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    text.push('\n');
    Ok(text)
}

/// `phi(r)` with error bars as a standalone SVG document.
pub fn svg_plot(label: &str, table: &SeriesTable) -> String {
    let (width, height) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 50.0);
    let (r_min, r_max) = bounds(table.r.iter().copied());
    let (p_min, p_max) = bounds(
        table
            .phi
            .iter()
            .zip(&table.phi_err)
            .flat_map(|(p, e)| [p - e, p + e]),
    );
    let p_min = p_min.min(0.0);
    let sx = |r: f64| left + (r - r_min) / (r_max - r_min) * (width - left - right);
    let sy = |p: f64| height - bottom - (p - p_min) / (p_max - p_min) * (height - top - bottom);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle">phi(r), center {}</text>"#,
        width / 2.0,
        escape(label)
    );
    let (x0, y0, x1, y1) = (left, height - bottom, width - right, top);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let r = r_min + (r_max - r_min) * k as f64 / 4.0;
        let p = p_min + (p_max - p_min) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(r),
            y0 + 18.0,
            tick(r)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            sy(p) + 4.0,
            tick(p)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">r</text>"#,
        (x0 + x1) / 2.0,
        height - 10.0
    );
    let points: Vec<String> = table
        .r
        .iter()
        .zip(&table.phi)
        .map(|(&r, &p)| format!("{:.2},{:.2}", sx(r), sy(p)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
        points.join(" ")
    );
    for ((&r, &p), &e) in table.r.iter().zip(&table.phi).zip(&table.phi_err) {
        let x = sx(r);
        let _ = writeln!(
            s,
            r#"<path d="M{x:.2},{:.2} L{x:.2},{:.2}" stroke="firebrick"/><circle cx="{x:.2}" cy="{:.2}" r="2.5" fill="steelblue"/>"#,
            sy(p - e),
            sy(p + e),
            sy(p)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(lo < hi) {
        let mid = if lo.is_finite() { lo } else { 0.0 };
        return (mid - 1.0, mid + 1.0);
    }
    (lo, hi)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
