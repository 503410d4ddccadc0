//! Wires configurations to the core library: builds problems and studies,
//! fans Monte Carlo samples out across a rayon pool, and writes results.
//!
//! Samples are collected into an index-ordered vector before any reduction,
//! so output bytes do not depend on the worker count.

use std::fmt;
use std::path::PathBuf;

use jetflow_core::analysis::{
    AnalysisError, DriftStudy, OrderReport, StrongReference, StrongStudy, StudyConfig, WeakStudy,
    WeakTarget,
};
use jetflow_core::flow::OdeSolverSpec;
use jetflow_core::problems::ProblemRegistry;
use jetflow_core::rng::derive_stream;
use jetflow_core::scheme::{JetVariant, SimulateError};
use jetflow_core::{simulate, BrownianPath, Scheme, SdeProblem, TimeGrid, Trajectory};
use rayon::prelude::*;

use crate::config::{
    sanitize_id, CommandKind, ExperimentConfig, Observable, OutputFormat, ReferenceKind, StudyKind,
};
use crate::formats;

/// Stream label for numerically estimated weak expectations ("WEAKREF").
const TAG_WEAK_REF: u64 = 0x5745_414b_5245_46;
/// Stream label for the angular momentum table ("table1").
const TAG_TABLE1: u64 = 0x7461_626c_6531;

#[derive(Debug)]
pub enum DriverError {
    /// Bad names, bad parameters, impossible study setups. Exit code 2.
    Config(String),
    /// The numerics blew up. Exit code 3; partial output is kept.
    Divergence(String),
    /// Filesystem trouble. Exit code 1.
    Io(String),
}

impl fmt::Display for DriverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriverError::Config(m) => write!(f, "{}", m),
            DriverError::Divergence(m) => write!(f, "{}", m),
            DriverError::Io(m) => write!(f, "{}", m),
        }
    }
}

impl std::error::Error for DriverError {}

impl From<crate::config::ConfigError> for DriverError {
    fn from(e: crate::config::ConfigError) -> Self {
        DriverError::Config(e.0)
    }
}

impl From<std::io::Error> for DriverError {
    fn from(e: std::io::Error) -> Self {
        DriverError::Io(e.to_string())
    }
}

impl From<csv::Error> for DriverError {
    fn from(e: csv::Error) -> Self {
        DriverError::Io(e.to_string())
    }
}

fn map_analysis(e: AnalysisError) -> DriverError {
    match e {
        AnalysisError::ExcessiveDivergence { .. } => DriverError::Divergence(e.to_string()),
        other => DriverError::Config(other.to_string()),
    }
}

pub fn build_problem(name: &str) -> Result<SdeProblem, DriverError> {
    let registry = ProblemRegistry::with_builtins();
    registry.build(name).ok_or_else(|| {
        DriverError::Config(format!(
            "unknown problem '{}'; available: {}",
            name,
            registry.names().join(", ")
        ))
    })
}

/// Closed-form pathwise solution from the problem's exact flow, as a
/// function of elapsed time and the Brownian value at that time.
fn pathwise_solution(name: &str) -> Result<jetflow_core::analysis::PathwiseSolution, DriverError> {
    let problem = build_problem(name)?;
    if !problem.has_exact_flow() {
        return Err(DriverError::Config(format!(
            "problem '{}' has no closed-form solution; use --reference numeric",
            name
        )));
    }
    let initial = problem.initial().to_vec();
    Ok(Box::new(move |elapsed, w| {
        problem
            .exact_flow(&initial, 0.0, elapsed, w)
            .expect("flow presence was checked")
    }))
}

fn solver_string(scheme: &Scheme) -> String {
    match scheme {
        Scheme::EulerMaruyama => String::from("none"),
        Scheme::Jet { variant, solver } => match variant {
            JetVariant::Expansion { .. } => String::from("closed-form expansion"),
            _ => solver.to_string(),
        },
    }
}

pub struct SimulateOutcome {
    pub files: Vec<PathBuf>,
    pub trajectory: Trajectory,
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulateOutcome, DriverError> {
    let problem = build_problem(&cfg.problem)?;
    let steps = cfg.steps[0];
    let grid = TimeGrid::uniform(cfg.horizon, steps)
        .map_err(|e| DriverError::Config(format!("bad grid: {}", e)))?;
    let path = BrownianPath::sample(&grid, problem.noise_dim(), cfg.seed);

    let (trajectory, divergence) = match simulate(&problem, &cfg.scheme, &path) {
        Ok(t) => (t, None),
        Err(SimulateError::Divergence { step, partial }) => (partial, Some(step)),
        Err(SimulateError::Scheme(e)) => {
            return Err(DriverError::Config(format!("cannot run scheme: {}", e)))
        }
    };

    let exact = if problem.has_exact_flow() {
        let initial = problem.initial().to_vec();
        Some(
            (0..trajectory.len())
                .map(|i| {
                    problem
                        .exact_flow(&initial, 0.0, grid.time(i), path.value(i))
                        .expect("flow presence was checked")
                })
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };

    std::fs::create_dir_all(&cfg.out)?;
    let base = format!(
        "trajectory-{}-{}-N{}-seed{}",
        cfg.problem,
        sanitize_id(&cfg.scheme.id()),
        steps,
        cfg.seed
    );
    let mut files = Vec::new();
    match cfg.format {
        OutputFormat::Csv => {
            let file = cfg.out.join(format!("{}.csv", base));
            formats::write_trajectory_csv(&file, &problem, &trajectory, exact.as_deref())?;
            files.push(file);
        }
        OutputFormat::Json => {
            let file = cfg.out.join(format!("{}.json", base));
            formats::write_trajectory_json(
                &file,
                &problem,
                &cfg.scheme.id(),
                cfg.seed,
                &trajectory,
                exact.as_deref(),
            )?;
            files.push(file);
        }
    }

    if let Some(step) = divergence {
        return Err(DriverError::Divergence(format!(
            "trajectory diverged at step {} (t = {}); partial output in {}",
            step,
            grid.time(step),
            files[0].display()
        )));
    }
    Ok(SimulateOutcome { files, trajectory })
}

fn study_config(cfg: &ExperimentConfig) -> StudyConfig {
    StudyConfig {
        steps: cfg.steps.clone(),
        horizon: cfg.horizon,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
    }
}

pub fn run_strong_study(study: &StrongStudy) -> Result<OrderReport, DriverError> {
    let n = study.config().n_paths;
    let samples: Vec<_> = (0..n).into_par_iter().map(|j| study.sample(j)).collect();
    study.collect(&samples).map_err(map_analysis)
}

pub fn run_weak_study(study: &WeakStudy) -> Result<OrderReport, DriverError> {
    let n = study.config().n_paths;
    let samples: Vec<_> = (0..n).into_par_iter().map(|j| study.sample(j)).collect();
    study.collect(&samples).map_err(map_analysis)
}

pub fn run_drift_study(study: &DriftStudy) -> Result<OrderReport, DriverError> {
    let n = study.config().n_paths;
    let samples: Vec<_> = (0..n).into_par_iter().map(|j| study.sample(j)).collect();
    study.collect(&samples).map_err(map_analysis)
}

/// Analytic expectation of the observable at the horizon for the canonical
/// problems, where a formula is known.
fn analytic_expectation(problem: &str, observable: Observable, horizon: f64) -> Option<f64> {
    if observable.index() != 0 {
        return None;
    }
    match problem {
        // E[X_T] = x0 exp(mu' T) for the canonical (mu' = 0.13125, x0 = 1).
        "gbm" => Some((0.13125 * horizon).exp()),
        // Y = sinh(X) with X_T ~ N(0.1 T, 0.0625 T):
        // E[sinh(X_T)] = sinh(mean) exp(variance / 2).
        "disguised-linear" => Some((0.1 * horizon).sinh() * (0.03125 * horizon).exp()),
        _ => None,
    }
}

/// Monte Carlo estimate of the expectation on a fine grid (or straight from
/// the closed form when one exists). Returns (mean, standard error).
fn numeric_expectation(
    cfg: &ExperimentConfig,
    observable_index: usize,
) -> Result<(f64, f64), DriverError> {
    let problem = build_problem(&cfg.problem)?;
    let seed = derive_stream(cfg.seed, &[TAG_WEAK_REF]);
    let horizon = cfg.horizon;
    let values: Vec<Option<f64>> = if problem.has_exact_flow() {
        let grid = TimeGrid::uniform(horizon, 1).expect("validated horizon");
        let initial = problem.initial().to_vec();
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|j| {
                let path = BrownianPath::sample(
                    &grid,
                    problem.noise_dim(),
                    derive_stream(seed, &[j as u64]),
                );
                let x = problem
                    .exact_flow(&initial, 0.0, horizon, path.value(1))
                    .expect("flow presence was checked");
                Some(x[observable_index])
            })
            .collect()
    } else {
        let fine = cfg.steps.last().expect("validated steps") * cfg.refine_factor;
        let grid = TimeGrid::uniform(horizon, fine)
            .map_err(|e| DriverError::Config(format!("bad reference grid: {}", e)))?;
        let scheme = Scheme::Jet {
            variant: JetVariant::DtJet,
            solver: OdeSolverSpec::near_exact(),
        };
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|j| {
                let path = BrownianPath::sample(
                    &grid,
                    problem.noise_dim(),
                    derive_stream(seed, &[j as u64]),
                );
                match simulate(&problem, &scheme, &path) {
                    Ok(traj) => Some(traj.final_state()[observable_index]),
                    Err(_) => None,
                }
            })
            .collect()
    };
    let kept: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if kept.len() < 2 {
        return Err(DriverError::Divergence(String::from(
            "reference expectation: nearly all paths diverged",
        )));
    }
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let var = kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

pub struct ConvergenceOutcome {
    pub report: OrderReport,
    pub reference: String,
    pub files: Vec<PathBuf>,
    pub rendered: String,
}

pub fn cmd_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceOutcome, DriverError> {
    let problem = build_problem(&cfg.problem)?;
    let sc = study_config(cfg);

    let (report, reference) = match cfg.study {
        StudyKind::Strong => {
            let use_analytic = match cfg.reference {
                ReferenceKind::Analytic => true,
                ReferenceKind::Numeric => false,
                ReferenceKind::Auto => problem.has_exact_flow(),
            };
            let (reference, note) = if use_analytic {
                (
                    StrongReference::Analytic(pathwise_solution(&cfg.problem)?),
                    String::from("analytic pathwise solution"),
                )
            } else {
                let ref_scheme = Scheme::Jet {
                    variant: JetVariant::DtJet,
                    solver: OdeSolverSpec::near_exact(),
                };
                let note = format!(
                    "numeric: {} on a {}x finer grid, common path",
                    ref_scheme.id(),
                    cfg.refine_factor
                );
                (
                    StrongReference::Numeric {
                        scheme: ref_scheme,
                        refine_factor: cfg.refine_factor,
                    },
                    note,
                )
            };
            let study = StrongStudy::new(sc, problem, cfg.scheme.clone(), reference)
                .map_err(map_analysis)?;
            (run_strong_study(&study)?, note)
        }
        StudyKind::Weak => {
            let idx = cfg.observable.index();
            if idx >= problem.dim() {
                return Err(DriverError::Config(format!(
                    "observable {} is out of range for '{}' (dimension {})",
                    cfg.observable.name(),
                    cfg.problem,
                    problem.dim()
                )));
            }
            let (expectation, note) = if let Some(v) = cfg.expectation {
                (v, format!("expectation {} (from flag)", v))
            } else if let Some(v) = analytic_expectation(&cfg.problem, cfg.observable, cfg.horizon)
            {
                (v, format!("analytic expectation {}", v))
            } else if cfg.reference == ReferenceKind::Numeric {
                let (mean, se) = numeric_expectation(cfg, idx)?;
                (
                    mean,
                    format!("numeric expectation {} (standard error {})", mean, se),
                )
            } else {
                return Err(DriverError::Config(format!(
                    "no analytic expectation known for {} of '{}'; pass --expectation or --reference numeric",
                    cfg.observable.name(),
                    cfg.problem
                )));
            };
            let pathwise = if problem.has_exact_flow() {
                Some(pathwise_solution(&cfg.problem)?)
            } else {
                None
            };
            let target = WeakTarget {
                observable: Box::new(move |x: &[f64]| x[idx]),
                expectation,
                pathwise,
            };
            let study =
                WeakStudy::new(sc, problem, cfg.scheme.clone(), target).map_err(map_analysis)?;
            (run_weak_study(&study)?, note)
        }
        StudyKind::Drift => {
            let study = DriftStudy::new(sc, problem, cfg.scheme.clone()).map_err(map_analysis)?;
            (
                run_drift_study(&study)?,
                String::from("invariant levels at the initial state"),
            )
        }
    };

    std::fs::create_dir_all(&cfg.out)?;
    let base = format!(
        "{}-{}-{}-seed{}",
        cfg.study.name(),
        cfg.problem,
        sanitize_id(&cfg.scheme.id()),
        cfg.seed
    );
    let csv_file = cfg.out.join(format!("{}.csv", base));
    let json_file = cfg.out.join(format!("{}.json", base));
    formats::write_report_csv(&csv_file, &report)?;
    let doc = formats::ReportDoc::new(&report, solver_string(&cfg.scheme), reference.clone());
    formats::write_json(&json_file, &doc)?;
    let rendered = formats::render_report(&report, &reference);
    Ok(ConvergenceOutcome {
        report,
        reference,
        files: vec![csv_file, json_file],
        rendered,
    })
}

pub struct Table1Config {
    pub seed: u64,
    pub n_seeds: usize,
    pub out: PathBuf,
}

pub struct Table1Outcome {
    pub cells: Vec<formats::TableCell>,
    pub target: f64,
    pub files: Vec<PathBuf>,
    pub rendered: String,
}

/// Angular momentum at t = 10 for the orbital problem, per step length and
/// scheme, averaged over independent seeds. Both schemes see the same path
/// within a cell.
pub fn cmd_table1(cfg: &Table1Config) -> Result<Table1Outcome, DriverError> {
    if cfg.n_seeds == 0 {
        return Err(DriverError::Config(String::from("need at least one seed")));
    }
    let problem = build_problem("kepler")?;
    let target = problem.invariant_values(problem.initial())[0];
    let horizon = 10.0;
    let step_counts: [usize; 4] = [10, 25, 100, 1000];
    let jet = Scheme::Jet {
        variant: JetVariant::DtJet,
        solver: OdeSolverSpec::near_exact(),
    };

    let units: Vec<(usize, u64)> = step_counts
        .iter()
        .flat_map(|&n| (0..cfg.n_seeds as u64).map(move |s| (n, s)))
        .collect();
    let gaps: Vec<(Option<f64>, Option<f64>)> = units
        .par_iter()
        .map(|&(steps, s)| {
            let grid = TimeGrid::uniform(horizon, steps).expect("fixed table grid");
            let path_seed = derive_stream(cfg.seed, &[TAG_TABLE1, steps as u64, s]);
            let path = BrownianPath::sample(&grid, problem.noise_dim(), path_seed);
            let gap = |scheme: &Scheme| -> Option<f64> {
                let traj = simulate(&problem, scheme, &path).ok()?;
                Some((traj.invariants().last().expect("nonempty")[0] - target).abs())
            };
            (gap(&Scheme::EulerMaruyama), gap(&jet))
        })
        .collect();

    let mut cells = Vec::new();
    for (ni, &steps) in step_counts.iter().enumerate() {
        let slice = &gaps[ni * cfg.n_seeds..(ni + 1) * cfg.n_seeds];
        for (scheme_name, pick) in [
            (Scheme::EulerMaruyama.id(), 0usize),
            (jet.id(), 1usize),
        ] {
            let kept: Vec<f64> = slice
                .iter()
                .filter_map(|pair| if pick == 0 { pair.0 } else { pair.1 })
                .collect();
            let n_divergent = cfg.n_seeds - kept.len();
            let (mean, sd) = if kept.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let n = kept.len() as f64;
                let mean = kept.iter().sum::<f64>() / n;
                let var = if kept.len() > 1 {
                    kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                (mean, var.sqrt())
            };
            cells.push(formats::TableCell {
                dt: horizon / steps as f64,
                steps,
                scheme: scheme_name.clone(),
                mean_abs_gap: mean,
                sd_abs_gap: sd,
                n_divergent,
                n_seeds: cfg.n_seeds,
            });
        }
    }

    std::fs::create_dir_all(&cfg.out)?;
    let base = format!("table1-seed{}-seeds{}", cfg.seed, cfg.n_seeds);
    let csv_file = cfg.out.join(format!("{}.csv", base));
    let json_file = cfg.out.join(format!("{}.json", base));
    formats::write_table_csv(&csv_file, &cells)?;
    formats::write_json(&json_file, &cells)?;
    let rendered = formats::render_table(&cells, target);
    Ok(Table1Outcome {
        cells,
        target,
        files: vec![csv_file, json_file],
        rendered,
    })
}

pub fn render_problem_list() -> String {
    let registry = ProblemRegistry::with_builtins();
    let mut out = String::new();
    out.push_str(&format!(
        "{:<20} {:>5} {:>7} {:>11} {:>11}\n",
        "name", "dim", "noise", "invariants", "exact flow"
    ));
    for name in registry.names() {
        let p = registry.build(&name).expect("listed name");
        out.push_str(&format!(
            "{:<20} {:>5} {:>7} {:>11} {:>11}\n",
            name,
            p.dim(),
            p.noise_dim(),
            p.invariant_count(),
            if p.has_exact_flow() { "yes" } else { "no" }
        ));
    }
    out
}

/// Resolve and run a command given pre-merged configuration layers.
pub fn run_experiment(
    layer: crate::config::ConfigLayer,
    cmd: CommandKind,
) -> Result<String, DriverError> {
    let cfg = ExperimentConfig::resolve(layer, cmd)?;
    match cmd {
        CommandKind::Simulate => {
            let outcome = cmd_simulate(&cfg)?;
            let mut text = String::new();
            let final_state = outcome.trajectory.final_state();
            text.push_str(&format!("final state: {:?}\n", final_state));
            let gs = outcome.trajectory.invariants().last().expect("nonempty");
            if !gs.is_empty() {
                text.push_str(&format!("final invariants: {:?}\n", gs));
            }
            for f in &outcome.files {
                text.push_str(&format!("wrote {}\n", f.display()));
            }
            Ok(text)
        }
        CommandKind::Convergence => {
            let outcome = cmd_convergence(&cfg)?;
            let mut text = outcome.rendered.clone();
            for f in &outcome.files {
                text.push_str(&format!("wrote {}\n", f.display()));
            }
            Ok(text)
        }
    }
}
