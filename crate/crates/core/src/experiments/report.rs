//! Report files: a JSON summary, CSV tables and SVG plots per experiment.
//!
//! All writers are deterministic: the same report produces the same bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::ablation::AblationReport;
use super::artifacts::create_parent;
use super::samples::SampleEvalReport;
use super::tracking::EstimationReport;
use super::ExperimentError;
use crate::metrics::SUCCESS_THRESHOLD;

fn write(path: &Path, text: &str) -> Result<(), ExperimentError> {
    create_parent(path)?;
    std::fs::write(path, text).map_err(ExperimentError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    write(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(ExperimentError::io(path))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Failed(format!("{}: {e}", path.display())))
}

/// `samples.json`, `samples.csv`, `map_errors.csv`, `samples.svg`.
pub fn write_sample_eval(dir: &Path, rep: &SampleEvalReport) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut summary = format!("# object={} density={} config={} seed={}\n", rep.object, rep.density, rep.config_hash, rep.seed);
    summary.push_str("method,n_samples,avg_loglik,median,q1,q3,iqr,mean_ms\n");
    let mut errors = String::from("method,n_samples,case,normalized_add\n");
    for m in &rep.methods {
        let s = &m.map_summary;
        let _ = writeln!(summary, "{},{},{},{},{},{},{},{}", m.method.label(), m.n_samples, m.avg_loglik, s.median, s.q1, s.q3, s.iqr, m.ms_per_contact);
        for (i, e) in m.map_errors.iter().enumerate() {
            let _ = writeln!(errors, "{},{},{i},{e}", m.method.label(), m.n_samples);
        }
    }
    let bars: Vec<(String, f64)> = rep.methods.iter().map(|m| (format!("{} ({})", m.method.label(), m.n_samples), m.avg_loglik)).collect();
    let svg = bar_chart(&format!("{}: average log-likelihood", rep.object), &bars);
    let files = [
        (dir.join("samples.json"), None),
        (dir.join("samples.csv"), Some(summary)),
        (dir.join("map_errors.csv"), Some(errors)),
        (dir.join("samples.svg"), Some(svg)),
    ];
    emit(files, rep)
}

/// `<scenario>.json`, `<scenario>_summary.csv`, `<scenario>_errors.csv`,
/// `<scenario>.svg`.
pub fn write_estimation(dir: &Path, rep: &EstimationReport) -> Result<Vec<PathBuf>, ExperimentError> {
    let name = &rep.scenario;
    let mut summary = format!("# object={} density={} runs={} config={} seed={}\n", rep.object, rep.density, rep.runs, rep.config_hash, rep.seed);
    summary.push_str("method,step,median,q1,q3,iqr,successes_final,mean_step_ms\n");
    let mut errors = String::from("method,run,step,normalized_add\n");
    let mut series = Vec::new();
    for m in &rep.methods {
        for (n, s) in m.summaries.iter().enumerate() {
            let _ = writeln!(summary, "{},{n},{},{},{},{},{},{}", m.method.label(), s.median, s.q1, s.q3, s.iqr, m.successes, m.mean_step_ms);
        }
        for (r, run) in m.errors.iter().enumerate() {
            for (n, e) in run.iter().enumerate() {
                let _ = writeln!(errors, "{},{r},{n},{e}", m.method.label());
            }
        }
        series.push((m.method.label().to_string(), m.summaries.iter().enumerate().map(|(n, s)| (n as f64, s.median)).collect()));
    }
    let svg = line_chart(&format!("{} {}: median error of the averaged belief", rep.object, name), "step", &series, Some(SUCCESS_THRESHOLD));
    let files = [
        (dir.join(format!("{name}.json")), None),
        (dir.join(format!("{name}_summary.csv")), Some(summary)),
        (dir.join(format!("{name}_errors.csv")), Some(errors)),
        (dir.join(format!("{name}.svg")), Some(svg)),
    ];
    emit(files, rep)
}

/// `ablation.json`, `ablation_density.csv`, `ablation_samples.csv`,
/// `ablation_samples.svg`.
pub fn write_ablation(dir: &Path, rep: &AblationReport) -> Result<Vec<PathBuf>, ExperimentError> {
    let table = |rows: &[super::ablation::AblationRow]| {
        let mut t = format!("# object={} config={} seed={}\n", rep.object, rep.config_hash, rep.seed);
        t.push_str("density,method,n_samples,avg_loglik,median,q1,q3\n");
        for r in rows {
            let _ = writeln!(t, "{},{},{},{},{},{},{}", r.density, r.method.label(), r.n_samples, r.avg_loglik, r.median, r.q1, r.q3);
        }
        for g in &rep.gaps {
            let _ = writeln!(t, "# gap: {g}");
        }
        t
    };
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in &rep.by_count {
        let label = r.method.label().to_string();
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, pts)) => pts.push(((r.n_samples as f64).log10(), r.median)),
            None => series.push((label, vec![((r.n_samples as f64).log10(), r.median)])),
        }
    }
    let svg = line_chart(&format!("{}: MAP error against log10 sample count", rep.object), "log10 samples", &series, Some(SUCCESS_THRESHOLD));
    let files = [
        (dir.join("ablation.json"), None),
        (dir.join("ablation_density.csv"), Some(table(&rep.by_density))),
        (dir.join("ablation_samples.csv"), Some(table(&rep.by_count))),
        (dir.join("ablation_samples.svg"), Some(svg)),
    ];
    emit(files, rep)
}

fn emit<T: Serialize>(files: [(PathBuf, Option<String>); 4], rep: &T) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut out = Vec::new();
    for (path, text) in files {
        match text {
            Some(t) => write(&path, &t)?,
            None => write_json(&path, rep)?,
        }
        out.push(path);
    }
    Ok(out)
}

/// Rewrites the CSV and SVG files of every JSON report found in `dir`.
pub fn regenerate(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(ExperimentError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    for p in entries {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        match stem {
            "samples" => out.extend(write_sample_eval(dir, &read_json(&p)?)?),
            "ablation" => out.extend(write_ablation(dir, &read_json(&p)?)?),
            "static" | "push" => out.extend(write_estimation(dir, &read_json(&p)?)?),
            _ => {}
        }
    }
    Ok(out)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn svg_header(title: &str) -> String {
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    s.push('\n');
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Polylines with one legend entry per series and an optional horizontal
/// reference line.
pub fn line_chart(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)], reference: Option<f64>) -> String {
    let (x0, x1) = range(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let (y0, y1) = range(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)).chain(reference).chain([0.0]));
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut s = svg_header(title);
    let _ = writeln!(s, r#"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - M, W - M, H - M);
    let _ = writeln!(s, r#"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#, H - M);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 20.0, escape(x_label));
    for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(s, r#"<text x="{}" y="{y:.1}" text-anchor="end">{v:.3}</text>"#, M - 4.0);
    }
    for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{v}</text>"#, H - M + 16.0);
    }
    if let Some(r) = reference {
        let y = sy(r);
        let _ = writeln!(s, r#"<line x1="{M}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="gray" stroke-dasharray="5,4"/>"#, W - M);
    }
    for (i, (label, pts)) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().filter(|p| p.1.is_finite()).map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, path.join(" "));
        let ly = M + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.1}" fill="{c}">{}</text>"#, W - M - 120.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let (lo, hi) = range(bars.iter().map(|b| b.1).chain([0.0]));
    let sy = |y: f64| H - M - (y - lo) / (hi - lo) * (H - 2.0 * M);
    let mut s = svg_header(title);
    let slot = (W - 2.0 * M) / bars.len().max(1) as f64;
    let base = sy(0.0);
    let _ = writeln!(s, r#"<line x1="{M}" y1="{base:.1}" x2="{}" y2="{base:.1}" stroke="black"/>"#, W - M);
    for (i, (label, v)) in bars.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let x = M + slot * (i as f64 + 0.15);
        let y = sy(*v);
        let (top, h) = if y < base { (y, base - y) } else { (base, y - base) };
        let _ = writeln!(s, r#"<rect x="{x:.1}" y="{top:.1}" width="{:.1}" height="{h:.1}" fill="{c}"/>"#, slot * 0.7);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x + slot * 0.35, H - M + 16.0, escape(label));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, x + slot * 0.35, top - 4.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = line_chart("a<b", "x", &[("one".into(), vec![(0.0, 0.5), (1.0, 0.05)])], Some(0.1));
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b") && s.contains("stroke-dasharray"));
        let b = bar_chart("t", &[("x".into(), -3.0), ("y".into(), -1.0)]);
        assert_eq!(b.matches("<rect").count(), 3);
    }
}
