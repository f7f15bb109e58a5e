//! Text tables and SVG value curves, rendered only from
//! [`ExperimentResults`], so `report` reproduces them without simulating.

use std::fmt::Write as _;
use std::path::Path;

use crate::experiment::{ExperimentResults, MetricStat, BASELINE_LABEL};
use crate::{write_file, Result};

/// Metrics shown as percentages.
const PERCENT: [bool; 5] = [true, false, false, true, false];
const HEADERS: [&str; 5] = ["TR %", "Sharpe", "Sortino", "MDD %", "Calmar"];
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];
const BASELINE_COLOR: &str = "#555555";

fn cell(stat: &MetricStat, percent: bool) -> String {
    let k = if percent { 100.0 } else { 1.0 };
    match (stat.mean, stat.std) {
        (None, _) => "n/a".into(),
        (Some(m), None) => format!("{:.2}", m * k),
        (Some(m), Some(s)) => format!("{:.2} ± {:.2}", m * k, s * k),
    }
}

pub fn render_table(results: &ExperimentResults) -> String {
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("config")
        .chain(HEADERS)
        .chain(["seeds"])
        .map(String::from)
        .collect()];
    for r in &results.rows {
        let mut line = vec![r.label.clone()];
        line.extend(r.metrics.iter().zip(PERCENT).map(|(m, p)| cell(m, p)));
        line.push(format!("{}/{}", r.seeds_ok, r.seeds));
        rows.push(line);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "{} (mean ± std over seeds)", results.name);
    for (i, r) in rows.iter().enumerate() {
        let cols: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| {
                let pad = w - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cols.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    for r in results.rows.iter().filter(|r| !r.errors.is_empty()) {
        for e in &r.errors {
            let _ = writeln!(out, "error [{}]: {e}", r.label);
        }
    }
    out
}

/// Per-day mean and sample std of the portfolio value across a label's
/// successful runs.
pub fn mean_curve(results: &ExperimentResults, label: &str) -> Option<(Vec<f64>, Vec<f64>)> {
    let curves: Vec<&Vec<f64>> = results
        .runs
        .iter()
        .filter(|r| r.label == label && r.error.is_none() && !r.values.is_empty())
        .map(|r| &r.values)
        .collect();
    let len = curves.iter().map(|c| c.len()).min()?;
    let n = curves.len() as f64;
    let mean: Vec<f64> = (0..len).map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / n).collect();
    let std = (0..len)
        .map(|t| {
            if curves.len() < 2 {
                0.0
            } else {
                (curves.iter().map(|c| (c[t] - mean[t]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            }
        })
        .collect();
    Some((mean, std))
}

/// Line chart of mean value curves with ±1 std bands.
pub fn render_svg(results: &ExperimentResults, labels: &[&str], title: &str) -> String {
    const W: f64 = 800.0;
    const H: f64 = 420.0;
    const L: f64 = 80.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 120.0;
    let series: Vec<(&str, Vec<f64>, Vec<f64>)> = labels
        .iter()
        .filter_map(|l| mean_curve(results, l).map(|(m, s)| (*l, m, s)))
        .collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let len = series.iter().map(|s| s.1.len()).max().unwrap_or(0);
    if len < 2 {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#, W / 2.0, H / 2.0);
        out.push_str("</svg>\n");
        return out;
    }
    let lo = series
        .iter()
        .flat_map(|(_, m, s)| m.iter().zip(s).map(|(a, b)| a - b))
        .fold(f64::INFINITY, f64::min);
    let hi = series
        .iter()
        .flat_map(|(_, m, s)| m.iter().zip(s).map(|(a, b)| a + b))
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let px = |t: usize| L + (W - L - R) * t as f64 / (len - 1) as f64;
    let py = |v: f64| T + (H - T - B) * (hi - v) / (hi - lo);

    let _ = writeln!(
        out,
        r##"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        W - L - R,
        H - T - B
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{:.0}</text>"#, L - 6.0, py(v) + 4.0, v);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">trading day</text>"#, (L + W - R) / 2.0, H - B + 20.0);

    for (i, (label, mean, std)) in series.iter().enumerate() {
        let color = if *label == BASELINE_LABEL { BASELINE_COLOR } else { PALETTE[i % PALETTE.len()] };
        let upper = mean.iter().zip(std).enumerate().map(|(t, (m, s))| format!("{:.2},{:.2}", px(t), py(m + s)));
        let lower = mean
            .iter()
            .zip(std)
            .enumerate()
            .rev()
            .map(|(t, (m, s))| format!("{:.2},{:.2}", px(t), py(m - s)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = mean.iter().enumerate().map(|(t, m)| format!("{:.2},{:.2}", px(t), py(*m))).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let y = H - B + 40.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{L}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            L + 24.0,
            L + 30.0,
            y + 4.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `table.txt`, `curves.svg` (every row) and `curves/<slug>.svg`
/// (each planner cell against the baseline).
pub fn write_reports(results: &ExperimentResults, dir: &Path) -> Result<()> {
    write_file(&dir.join("table.txt"), render_table(results))?;
    let all: Vec<&str> = results.cells.iter().map(|c| c.label.as_str()).collect();
    let shown: Vec<&str> = all.iter().copied().take(PALETTE.len() + 1).collect();
    write_file(&dir.join("curves.svg"), render_svg(results, &shown, &results.name))?;
    for c in results.cells.iter().filter(|c| c.label != BASELINE_LABEL) {
        let svg = render_svg(results, &[BASELINE_LABEL, &c.label], &c.label);
        write_file(&dir.join("curves").join(format!("{}.svg", c.slug)), svg)?;
    }
    Ok(())
}
