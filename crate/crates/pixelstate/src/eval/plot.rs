//! Small self-contained SVG line charts.
//!
//! No font rasterization, no external plotting stack: the output is plain
//! SVG text (axes, ticks, polylines, legend), viewable in any browser and
//! byte-deterministic for identical inputs.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

const W: f64 = 640.0;
const H: f64 = 360.0;
const ML: f64 = 62.0; // left margin
const MR: f64 = 16.0;
const MT: f64 = 30.0;
const MB: f64 = 42.0;

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    let s = if a >= 1000.0 || a < 0.001 {
        format!("{v:.2e}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    };
    // trim trailing zeros of plain decimals
    if s.contains('.') && !s.contains('e') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn data_range(series: &[Series<'_>], axis: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for p in &s.points {
            let v = if axis == 0 { p.0 } else { p.1 };
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        // widen a degenerate range symmetrically
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn draw_chart(
    out: &mut String,
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
) {
    let (xmin, xmax) = data_range(series, 0);
    let (ymin, ymax) = data_range(series, 1);
    let px = |x: f64| x0 + ML + (x - xmin) / (xmax - xmin) * (w - ML - MR);
    let py = |y: f64| y0 + h - MB - (y - ymin) / (ymax - ymin) * (h - MT - MB);

    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        x0 + w / 2.0,
        y0 + 16.0,
        title
    );
    // frame
    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444" stroke-width="1"/>"##,
        x0 + ML,
        y0 + MT,
        w - ML - MR,
        h - MT - MB
    );
    // ticks
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = xmin + t * (xmax - xmin);
        let yv = ymin + t * (ymax - ymin);
        let xp = px(xv);
        let yp = py(yv);
        let _ = writeln!(
            out,
            r##"<line x1="{xp:.1}" y1="{:.1}" x2="{xp:.1}" y2="{:.1}" stroke="#444" stroke-width="1"/>"##,
            y0 + h - MB,
            y0 + h - MB + 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{xp:.1}" y="{:.1}" font-size="10" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            y0 + h - MB + 15.0,
            fmt_num(xv)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{yp:.1}" x2="{:.1}" y2="{yp:.1}" stroke="#444" stroke-width="1"/>"##,
            x0 + ML - 4.0,
            x0 + ML
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end" font-family="sans-serif">{}</text>"#,
            x0 + ML - 7.0,
            yp + 3.5,
            fmt_num(yv)
        );
        // light grid
        if i > 0 && i < 4 {
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{yp:.1}" x2="{:.1}" y2="{yp:.1}" stroke="#ddd" stroke-width="0.5"/>"##,
                x0 + ML,
                x0 + w - MR
            );
        }
    }
    // axis labels
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        x0 + ML + (w - ML - MR) / 2.0,
        y0 + h - 8.0,
        x_label
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        x0 + 14.0,
        y0 + MT + (h - MT - MB) / 2.0,
        x0 + 14.0,
        y0 + MT + (h - MT - MB) / 2.0,
        y_label
    );
    // series
    for s in series {
        if s.points.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            let _ = write!(d, "{:.2},{:.2} ", px(*x), py(*y));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            d.trim_end(),
            s.color
        );
    }
    // legend
    for (i, s) in series.iter().enumerate() {
        let lx = x0 + ML + 10.0;
        let ly = y0 + MT + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/>"#,
            ly - 3.5,
            lx + 18.0,
            ly - 3.5,
            s.color
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="10" font-family="sans-serif">{}</text>"#,
            lx + 23.0,
            s.label
        );
    }
}

/// One chart per file.
pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    draw_chart(&mut out, 0.0, 0.0, W, H, title, x_label, y_label, series);
    out.push_str("</svg>\n");
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Vertically stacked panels sharing a width; used for per-dimension traces.
pub fn multi_panel_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    panels: &[(String, Vec<Series<'_>>)],
) -> Result<()> {
    let panel_h = 220.0;
    let total_h = panel_h * panels.len() as f64 + 24.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{total_h}" viewBox="0 0 {W} {total_h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{total_h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="16" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        W / 2.0,
        title
    );
    for (i, (panel_title, series)) in panels.iter().enumerate() {
        draw_chart(
            &mut out,
            0.0,
            24.0 + panel_h * i as f64,
            W,
            panel_h,
            panel_title,
            if i + 1 == panels.len() { x_label } else { "" },
            "",
            series,
        );
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
