//! SVG charts with the CSV data behind them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EvalError, EvalReport};
use crate::search_space::Trial;
use crate::tpe::best_so_far;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub scatter_csv: PathBuf,
    pub scatter_svg: PathBuf,
    pub trials_csv: PathBuf,
    pub best_so_far_svg: PathBuf,
    pub objective_svg: PathBuf,
}

/// Rescales to `[0, 1]`; a constant series maps to zeros.
pub fn normalize_min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

pub fn emit_plots(report: &EvalReport, trials: &[Trial], out_dir: impl AsRef<Path>) -> Result<PlotFiles, EvalError> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let files = PlotFiles {
        scatter_csv: dir.join("validation_scatter.csv"),
        scatter_svg: dir.join("validation_scatter.svg"),
        trials_csv: dir.join("trials.csv"),
        best_so_far_svg: dir.join("best_so_far.svg"),
        objective_svg: dir.join("objective_trace.svg"),
    };

    let raw: Vec<f64> = report.per_sample.iter().map(|s| s.s_val).collect();
    let norm = normalize_min_max(&raw);
    let mut csv = String::from("sample_id,s_val,s_val_normalized,dice\n");
    for (s, n) in report.per_sample.iter().zip(&norm) {
        writeln!(csv, "{},{},{},{}", s.id, s.s_val, n, s.dice).expect("string write");
    }
    fs::write(&files.scatter_csv, csv)?;
    let points: Vec<(f64, f64)> = norm.iter().zip(&report.per_sample).map(|(n, s)| (*n, s.dice)).collect();
    let title = match report.pearson_r {
        Some(r) => format!("Validation score vs Dice (r = {r:.3})"),
        None => "Validation score vs Dice".to_owned(),
    };
    fs::write(
        &files.scatter_svg,
        chart(&title, "normalized validation score", "Dice", &points, Style::Dots),
    )?;

    let best = best_so_far(trials);
    let mut csv = String::from("trial_id,objective,best_so_far\n");
    for (t, b) in trials.iter().zip(&best) {
        writeln!(csv, "{},{},{}", t.id, t.objective, b).expect("string write");
    }
    fs::write(&files.trials_csv, csv)?;
    let best_pts: Vec<(f64, f64)> = trials.iter().zip(&best).map(|(t, b)| (t.id as f64, *b)).collect();
    let obj_pts: Vec<(f64, f64)> = trials.iter().map(|t| (t.id as f64, t.objective)).collect();
    fs::write(
        &files.best_so_far_svg,
        chart("Best objective so far", "trial", "objective", &best_pts, Style::Line),
    )?;
    fs::write(
        &files.objective_svg,
        chart("Objective per trial", "trial", "objective", &obj_pts, Style::LineDots),
    )?;
    Ok(files)
}

#[derive(Clone, Copy, PartialEq)]
enum Style {
    Dots,
    Line,
    LineDots,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn chart(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)], style: Style) -> String {
    let range = |sel: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        match (lo.is_finite(), hi > lo) {
            (false, _) => (0.0, 1.0),
            (true, false) => (lo - 0.5, lo + 0.5),
            (true, true) => (lo, hi),
        }
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title)).unwrap();
    let (left, right, top, bottom) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    writeln!(s, r#"<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" fill="none" stroke="black"/>"#).unwrap();
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(xv), bottom + 16.0, tick(xv)).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, sy(yv) + 4.0, tick(yv)).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(xlabel)).unwrap();
    writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, H / 2.0, H / 2.0, escape(ylabel)).unwrap();
    if style != Style::Dots && points.len() > 1 {
        let path: Vec<String> = points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, path.join(" ")).unwrap();
    }
    if style != Style::Line {
        for (x, y) in points {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="darkorange" fill-opacity="0.8"/>"#, sx(*x), sy(*y)).unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
