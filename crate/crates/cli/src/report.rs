//! `simulate` and `report`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use plotters::prelude::*;
use zt5g_core::netsim::{read_summary_csv, summarize, write_csv, write_summary_csv, SweepRow};
use zt5g_core::{run_sweep, SimScenario};

use crate::failure::{fail, Failure};

pub fn load_scenario(path: Option<&Path>) -> anyhow::Result<SimScenario> {
    let Some(path) = path else {
        return Ok(SimScenario::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
    SimScenario::from_toml(&text).map_err(|e| Failure::new("config", format!("{}: {e}", path.display())).into())
}

/// Per-run records go next to the summary, as `<stem>.runs.csv`.
pub fn runs_path(summary: &Path) -> PathBuf {
    let stem = summary.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    summary.with_file_name(format!("{stem}.runs.csv"))
}

pub fn simulate(scenario: &SimScenario, summary_path: &Path, out: &mut impl Write) -> anyhow::Result<Vec<SweepRow>> {
    let ns = scenario.sweep.ue_values();
    let seeds = scenario.sweep.seeds();
    let records = run_sweep(scenario, &ns, &seeds);
    let rows = summarize(&records);
    if let Some(dir) = summary_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    write_summary_csv(&rows, &mut buf)?;
    fs::write(summary_path, buf).with_context(|| summary_path.display().to_string())?;
    let runs = runs_path(summary_path);
    let mut buf = Vec::new();
    write_csv(&records, &mut buf)?;
    fs::write(&runs, buf).with_context(|| runs.display().to_string())?;

    writeln!(out, "{:>5} {:>5} {:>11} {:>13} {:>8}", "n_ues", "runs", "latency_s", "overhead_B", "success")?;
    for r in &rows {
        writeln!(
            out,
            "{:>5} {:>5} {:>11.4} {:>13.1} {:>8.3}",
            r.n_ues, r.runs, r.mean_latency_s, r.mean_overhead_bytes, r.success_rate
        )?;
    }
    writeln!(out, "wrote {} and {}", summary_path.display(), runs.display())?;
    Ok(rows)
}

fn plot(path: &Path, title: &str, y_label: &str, points: &[(f64, f64)]) -> anyhow::Result<()> {
    let (x_min, x_max) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let y_max = points.iter().map(|p| p.1).fold(0.0, f64::max) * 1.1;
    let (x_lo, x_hi) = if x_min == x_max { (x_min - 1.0, x_max + 1.0) } else { (x_min, x_max) };
    let y_hi = if y_max > 0.0 { y_max } else { 1.0 };

    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(64)
        .build_cartesian_2d(x_lo..x_hi, 0.0..y_hi)?;
    chart
        .configure_mesh()
        .x_desc("number of UEs")
        .y_desc(y_label)
        .draw()?;
    chart.draw_series(LineSeries::new(points.iter().copied(), &BLUE))?;
    chart.draw_series(points.iter().map(|&p| Circle::new(p, 3, BLUE.filled())))?;
    root.present()?;
    Ok(())
}

/// Reads a summary CSV and draws overhead and latency against UE count.
/// Returns the two SVG paths.
pub fn report(summary_path: &Path, out_dir: &Path) -> anyhow::Result<[PathBuf; 2]> {
    let bytes = fs::read(summary_path).map_err(|e| Failure::new("io", format!("{}: {e}", summary_path.display())))?;
    let rows = read_summary_csv(bytes.as_slice())
        .map_err(|e| Failure::new("config", format!("{}: {e}", summary_path.display())))?;
    if rows.is_empty() {
        return fail("empty-input", format!("{} has no rows", summary_path.display()));
    }
    fs::create_dir_all(out_dir)?;
    let overhead: Vec<(f64, f64)> = rows.iter().map(|r| (r.n_ues as f64, r.mean_overhead_bytes / 1024.0)).collect();
    let latency: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mean_latency_s.is_finite())
        .map(|r| (r.n_ues as f64, r.mean_latency_s))
        .collect();
    if latency.is_empty() {
        return fail("empty-input", "no successful runs to plot latency for");
    }
    let paths = [out_dir.join("overhead.svg"), out_dir.join("latency.svg")];
    plot(&paths[0], "Authentication overhead", "traffic per handshake (KB)", &overhead)?;
    plot(&paths[1], "Handshake latency", "latency (s)", &latency)?;
    Ok(paths)
}
