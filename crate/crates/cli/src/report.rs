//! Images-to-reach table and learning-curve chart over finished runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use deal_core::acquisition::StrategyKind;
use deal_core::data::artifacts::read_run_json;
use deal_core::engine::stats::{format_percent, reach_summary, savings_fraction, ReachSummary};
use deal_core::engine::{AggregatePoint, RunRecord};

use crate::error::{io_error, CliError};

/// One table cell: a strategy at a target accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachCell {
    #[serde(flatten)]
    pub reach: ReachSummary,
    /// Savings against the random baseline, in percent with two decimals.
    pub savings_percent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub strategy: StrategyKind,
    pub cells: Vec<ReachCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub targets: Vec<f64>,
    /// Label of the run used as the uniform baseline for savings.
    pub baseline: Option<String>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub table: ReportTable,
    pub markdown: String,
    pub svg: String,
}

/// A run found on disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub label: String,
    pub record: RunRecord,
}

/// `out_dir/run.json` if present, otherwise `*/run.json` in name order.
pub fn discover_runs(out_dir: &Path) -> Result<Vec<LoadedRun>, CliError> {
    let read = |path: &Path, label: String| -> Result<LoadedRun, CliError> {
        let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
        let artifact = read_run_json(std::io::BufReader::new(file))
            .map_err(|e| CliError::from(e).with_context(&path.display().to_string()))?;
        Ok(LoadedRun { label, record: artifact.record })
    };
    let single = out_dir.join("run.json");
    if single.is_file() {
        let label = out_dir.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string();
        return Ok(vec![read(&single, label)?]);
    }
    let entries = std::fs::read_dir(out_dir).map_err(|e| io_error(out_dir, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("run.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::missing(format!("no run.json under {}", out_dir.display())));
    }
    dirs.iter()
        .map(|d| read(&d.join("run.json"), d.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string()))
        .collect()
}

impl CliError {
    fn with_context(mut self, context: &str) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }
}

pub fn validate_targets(targets: &[f64]) -> Result<(), CliError> {
    if targets.is_empty() {
        return Err(CliError::field("targets", "give at least one target accuracy"));
    }
    let bad: Vec<_> = targets
        .iter()
        .enumerate()
        .filter(|(_, t)| !(**t > 0.0 && **t < 1.0))
        .map(|(i, t)| deal_core::FieldError::new(format!("targets[{i}]"), format!("{t} must lie strictly between 0 and 1")))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::config(bad))
    }
}

/// Reach counts for every run and target, with savings against the first
/// `random` run when one is present and both reached the target in every repeat.
pub fn reach_table(runs: &[LoadedRun], targets: &[f64]) -> Result<ReportTable, CliError> {
    validate_targets(targets)?;
    let complete = |r: &RunRecord| r.repeats.iter().filter(|x| x.complete).cloned().collect::<Vec<_>>();
    let summaries: Vec<Vec<ReachSummary>> = runs
        .iter()
        .map(|run| targets.iter().map(|&t| reach_summary(&complete(&run.record), t)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    let baseline = runs.iter().position(|r| r.record.strategy == StrategyKind::Random);
    let rows = runs
        .iter()
        .zip(&summaries)
        .enumerate()
        .map(|(i, (run, sums))| ReportRow {
            label: run.label.clone(),
            strategy: run.record.strategy,
            cells: sums
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let base = baseline.filter(|&b| b != i).and_then(|b| summaries[b][k].mean_count);
                    let savings_percent = match (s.mean_count, base) {
                        (Some(ours), Some(theirs)) => savings_fraction(ours, theirs).ok().map(format_percent),
                        _ => None,
                    };
                    ReachCell { reach: s.clone(), savings_percent }
                })
                .collect(),
        })
        .collect();
    Ok(ReportTable { targets: targets.to_vec(), baseline: baseline.map(|b| runs[b].label.clone()), rows })
}

pub fn markdown(table: &ReportTable) -> String {
    let mut out = String::from("| strategy |");
    for t in &table.targets {
        write!(out, " labels to {t:.4} | savings |").unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|---:|".repeat(table.targets.len()));
    out.push('\n');
    for row in &table.rows {
        write!(out, "| {} |", row.label).unwrap();
        for cell in &row.cells {
            let r = &cell.reach;
            match (r.mean_count, r.std_count) {
                (Some(m), Some(s)) => write!(out, " {m:.1} ± {s:.1} |").unwrap(),
                _ => write!(out, " not reached ({}/{}) |", r.reached_repeats, r.total_repeats).unwrap(),
            }
            match &cell.savings_percent {
                Some(p) => write!(out, " {p}% |").unwrap(),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    if let Some(b) = &table.baseline {
        writeln!(out, "\nSavings are relative to `{b}`.").unwrap();
    }
    out
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Mean test accuracy per labeled count with a shaded ±1 std band per run.
pub fn svg_chart(curves: &[(String, Vec<AggregatePoint>)]) -> String {
    let (w, h) = (760.0, 460.0);
    let (left, right, top, bottom) = (64.0, 190.0, 36.0, 52.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let points = curves.iter().flat_map(|(_, c)| c.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.labeled_count as f64);
        x1 = x1.max(p.labeled_count as f64);
        y0 = y0.min(p.mean_test_accuracy - p.std_test_accuracy);
        y1 = y1.max(p.mean_test_accuracy + p.std_test_accuracy);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let y0 = ((y0 * 10.0).floor() / 10.0).clamp(0.0, 1.0);
    let mut y1 = ((y1 * 10.0).ceil() / 10.0).clamp(0.0, 1.0);
    if y1 <= y0 {
        y1 = (y0 + 0.1).min(1.0);
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y.clamp(y0, y1) - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">Test accuracy over labeled samples</text>"#, left + pw / 2.0).unwrap();
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let (px, py) = (sx(fx), sy(fy));
        writeln!(s, r##"<line x1="{px:.2}" y1="{top:.2}" x2="{px:.2}" y2="{:.2}" stroke="#eee"/>"##, top + ph).unwrap();
        writeln!(s, r##"<line x1="{left:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#eee"/>"##, left + pw).unwrap();
        writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{fx:.0}</text>"#, top + ph + 18.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{fy:.2}</text>"#, left - 6.0, py + 4.0).unwrap();
    }
    writeln!(s, r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##).unwrap();
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">labeled samples</text>"#, left + pw / 2.0, h - 12.0).unwrap();
    writeln!(s, r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">test accuracy</text>"#, top + ph / 2.0).unwrap();

    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper = curve.iter().map(|p| (sx(p.labeled_count as f64), sy(p.mean_test_accuracy + p.std_test_accuracy)));
        let lower = curve.iter().rev().map(|p| (sx(p.labeled_count as f64), sy(p.mean_test_accuracy - p.std_test_accuracy)));
        let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let line: Vec<String> =
            curve.iter().map(|p| format!("{:.2},{:.2}", sx(p.labeled_count as f64), sy(p.mean_test_accuracy))).collect();
        writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, band.join(" ")).unwrap();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" ")).unwrap();
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = left + pw + 16.0;
        writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>"#, lx + 22.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 28.0, ly + 4.0, escape(label)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn build(out_dir: &Path, targets: &[f64]) -> Result<Report, CliError> {
    validate_targets(targets)?;
    let runs = discover_runs(out_dir)?;
    let table = reach_table(&runs, targets)?;
    let curves = runs
        .iter()
        .map(|r| Ok((r.label.clone(), r.record.aggregate()?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Report { markdown: markdown(&table), svg: svg_chart(&curves), table })
}
