//! CSV and JSON output. All numbers go through shortest-round-trip
//! formatting so identical runs produce identical bytes.

use std::io::Write;
use std::path::Path;

use jetflow_core::analysis::OrderReport;
use jetflow_core::{SdeProblem, Trajectory};
use serde::Serialize;

fn fmt_f64(v: f64) -> String {
    let mut buf = ryu::Buffer::new();
    buf.format(v).to_string()
}

/// Trajectory table: time, state components, invariant values, and the
/// analytic solution components when the problem has a closed form.
pub fn write_trajectory_csv(
    path: &Path,
    problem: &SdeProblem,
    traj: &Trajectory,
    exact: Option<&[Vec<f64>]>,
) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec![String::from("t")];
    for i in 0..problem.dim() {
        header.push(format!("y{}", i + 1));
    }
    for j in 0..problem.invariant_count() {
        header.push(format!("g{}", j + 1));
    }
    if exact.is_some() {
        for i in 0..problem.dim() {
            header.push(format!("exact_y{}", i + 1));
        }
    }
    wtr.write_record(&header)?;
    for i in 0..traj.len() {
        let mut row: Vec<String> = vec![fmt_f64(traj.grid().time(i))];
        row.extend(traj.state(i).iter().copied().map(fmt_f64));
        row.extend(traj.invariants()[i].iter().copied().map(fmt_f64));
        if let Some(cols) = exact {
            row.extend(cols[i].iter().copied().map(fmt_f64));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryDoc<'a> {
    problem: &'a str,
    scheme: &'a str,
    seed: u64,
    rng: &'a str,
    steps: usize,
    horizon: f64,
    t: Vec<f64>,
    states: &'a [Vec<f64>],
    invariants: &'a [Vec<f64>],
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<&'a [Vec<f64>]>,
}

pub fn write_trajectory_json(
    path: &Path,
    problem: &SdeProblem,
    scheme_id: &str,
    seed: u64,
    traj: &Trajectory,
    exact: Option<&[Vec<f64>]>,
) -> std::io::Result<()> {
    let doc = TrajectoryDoc {
        problem: problem.label(),
        scheme: scheme_id,
        seed,
        rng: jetflow_core::rng::RNG_ID,
        steps: traj.grid().steps(),
        horizon: traj.grid().horizon(),
        t: traj.grid().times().to_vec(),
        states: traj.states(),
        invariants: traj.invariants(),
        exact,
    };
    write_json(path, &doc)
}

#[derive(Serialize)]
pub struct PointDoc {
    pub steps: usize,
    pub dt: f64,
    pub error: f64,
    pub std_error: f64,
    pub n_divergent: usize,
    pub in_fit: bool,
}

/// Serialized convergence report. Carries everything needed to rerun the
/// study: seed, generator identifier, solver, and the grid ladder.
#[derive(Serialize)]
pub struct ReportDoc {
    pub study: String,
    pub problem: String,
    pub scheme: String,
    pub solver: String,
    pub rng: String,
    pub seed: u64,
    pub n_paths: usize,
    pub horizon: f64,
    pub grid_steps: Vec<usize>,
    pub reference: String,
    pub status: String,
    pub slope: Option<f64>,
    pub residual: Option<f64>,
    pub points: Vec<PointDoc>,
}

impl ReportDoc {
    pub fn new(report: &OrderReport, solver: String, reference: String) -> Self {
        ReportDoc {
            study: report.study.clone(),
            problem: report.problem.clone(),
            scheme: report.scheme.clone(),
            solver,
            rng: report.rng.clone(),
            seed: report.seed,
            n_paths: report.n_paths,
            horizon: report.horizon,
            grid_steps: report.points.iter().map(|p| p.steps).collect(),
            reference,
            status: report.status.to_string(),
            slope: report.slope,
            residual: report.residual,
            points: report
                .points
                .iter()
                .map(|p| PointDoc {
                    steps: p.steps,
                    dt: p.dt,
                    error: p.error,
                    std_error: p.std_error,
                    n_divergent: p.n_divergent,
                    in_fit: p.in_fit,
                })
                .collect(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, doc)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn write_report_csv(path: &Path, report: &OrderReport) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["steps", "dt", "error", "std_error", "n_divergent", "in_fit"])?;
    for p in &report.points {
        wtr.write_record(&[
            p.steps.to_string(),
            fmt_f64(p.dt),
            fmt_f64(p.error),
            fmt_f64(p.std_error),
            p.n_divergent.to_string(),
            p.in_fit.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Human-readable report summary for stdout.
pub fn render_report(report: &OrderReport, reference: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} study: {} / {} (T = {}, {} paths, seed {})\n",
        report.study, report.problem, report.scheme, report.horizon, report.n_paths, report.seed
    ));
    out.push_str(&format!("reference: {}\n", reference));
    out.push_str(&format!(
        "{:>8} {:>12} {:>14} {:>14} {:>10} {:>7}\n",
        "steps", "dt", "error", "std_error", "divergent", "in_fit"
    ));
    for p in &report.points {
        out.push_str(&format!(
            "{:>8} {:>12.6} {:>14.6e} {:>14.6e} {:>10} {:>7}\n",
            p.steps, p.dt, p.error, p.std_error, p.n_divergent, p.in_fit
        ));
    }
    match (report.status, report.slope) {
        (status, Some(slope)) => out.push_str(&format!(
            "status: {}; fitted slope {:.4} (log-log residual {:.2e})\n",
            status,
            slope,
            report.residual.unwrap_or(0.0)
        )),
        (status, None) => out.push_str(&format!("status: {}\n", status)),
    }
    out
}

/// One line of the angular-momentum summary table.
#[derive(Clone, Debug, Serialize)]
pub struct TableCell {
    pub dt: f64,
    pub steps: usize,
    pub scheme: String,
    pub mean_abs_gap: f64,
    pub sd_abs_gap: f64,
    pub n_divergent: usize,
    pub n_seeds: usize,
}

pub fn write_table_csv(path: &Path, cells: &[TableCell]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record([
        "dt",
        "steps",
        "scheme",
        "mean_abs_gap",
        "sd_abs_gap",
        "n_divergent",
        "n_seeds",
    ])?;
    for c in cells {
        wtr.write_record(&[
            fmt_f64(c.dt),
            c.steps.to_string(),
            c.scheme.clone(),
            fmt_f64(c.mean_abs_gap),
            fmt_f64(c.sd_abs_gap),
            c.n_divergent.to_string(),
            c.n_seeds.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn render_table(cells: &[TableCell], target: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "angular momentum deviation |h(T) - {}| (mean over seeds, +/- sd)\n",
        target
    ));
    out.push_str(&format!(
        "{:>8} {:>8} {:>18} {:>14} {:>14} {:>10}\n",
        "dt", "steps", "scheme", "mean", "sd", "divergent"
    ));
    for c in cells {
        out.push_str(&format!(
            "{:>8} {:>8} {:>18} {:>14.6e} {:>14.6e} {:>10}\n",
            c.dt, c.steps, c.scheme, c.mean_abs_gap, c.sd_abs_gap, c.n_divergent
        ));
    }
    out
}
