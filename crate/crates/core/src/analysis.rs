//! Convergence measurement for stepping schemes.
//!
//! Three study types share one shape. Each draws `n_paths` Brownian paths,
//! runs the scheme on a ladder of nested uniform grids driven by the *same*
//! underlying path (the coarse path is sampled once and conditionally
//! refined, so grid resolution is the only thing that varies), reduces each
//! path to one number per grid, and fits a log-log slope through the grid
//! errors:
//!
//! - [`StrongStudy`]: root mean square of the pathwise sup distance to a
//!   reference solution, analytic or finely resolved numeric,
//! - [`WeakStudy`]: bias of a scalar observable against its known
//!   expectation,
//! - [`DriftStudy`]: how far iterates wander off the problem's invariant
//!   level sets, normalized by the invariant gradients so the deviation
//!   reads as a distance.
//!
//! Sampling is decomposed per path index: `sample(j)` derives its own RNG
//! stream from the study seed and index `j` alone, so samples can be
//! computed in any order or in parallel and collected bitwise identically.
//!
//! Grid errors that sit at a measurement floor (reference accuracy, Monte
//! Carlo noise, or exact reproduction of the solution) carry no slope
//! information; such points are excluded from the fit and the report says
//! so via [`FitStatus`] instead of quietly fitting noise.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::brownian::{BrownianPath, TimeGrid};
use crate::flow::OdeMethod;
use crate::linalg;
use crate::model::{finite_difference_gradient, SdeProblem};
use crate::rng::{derive_stream, RNG_ID};
use crate::scheme::{simulate, JetVariant, Scheme, SimulateError, Trajectory};

/// Strong errors below this root mean square are considered unresolvable.
pub const STRONG_FLOOR: f64 = 1e-13;
/// A point must clear the floor by this factor to enter a fit.
pub const FLOOR_EXCLUSION: f64 = 10.0;
/// A bias must exceed this many standard errors to count as signal.
pub const WEAK_SIGNAL_SIGMAS: f64 = 3.0;
/// Abort when more than this fraction of paths diverges on some grid.
pub const MAX_DIVERGENT_FRACTION: f64 = 0.01;

const TAG_STRONG: u64 = 0x5354_524f_4e47;
const TAG_WEAK: u64 = 0x5745_414b;
const TAG_DRIFT: u64 = 0x4452_4946_54;

/// Errors from study construction or collection.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalysisError {
    /// The step ladder is empty.
    EmptySteps,
    /// A grid has zero steps.
    ZeroSteps,
    /// Step counts must strictly increase.
    StepsNotAscending { prev: usize, next: usize },
    /// Each step count must divide the next so the grids nest.
    StepsNotNested { prev: usize, next: usize },
    /// Grid times are not bitwise shared, so refinement cannot reuse them.
    GridsNotBitwiseNested,
    /// Horizon must be positive and finite.
    BadHorizon(f64),
    /// At least two paths are needed for a standard error.
    TooFewPaths(usize),
    /// Fewer than three usable points, no slope can be fitted.
    TooFewPoints { available: usize },
    /// Drift studies need at least one invariant.
    NoInvariants,
    /// A numeric reference must be strictly finer than the finest grid.
    BadRefineFactor(usize),
    /// The scheme asks for a closed-form flow the problem does not have.
    ExactFlowUnavailable,
    /// Too many paths diverged for the estimate to mean anything.
    ExcessiveDivergence {
        steps: usize,
        divergent: usize,
        total: usize,
    },
}

impl core::fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AnalysisError::EmptySteps => write!(f, "step ladder is empty"),
            AnalysisError::ZeroSteps => write!(f, "grids need at least one step"),
            AnalysisError::StepsNotAscending { prev, next } => {
                write!(f, "step counts must increase: {} then {}", prev, next)
            }
            AnalysisError::StepsNotNested { prev, next } => {
                write!(f, "{} does not divide {}, grids will not nest", prev, next)
            }
            AnalysisError::GridsNotBitwiseNested => {
                write!(f, "grid times are not bitwise shared between levels")
            }
            AnalysisError::BadHorizon(h) => write!(f, "horizon must be positive, got {}", h),
            AnalysisError::TooFewPaths(n) => {
                write!(f, "need at least two paths, got {}", n)
            }
            AnalysisError::TooFewPoints { available } => {
                write!(f, "need at least three points for a fit, have {}", available)
            }
            AnalysisError::NoInvariants => {
                write!(f, "drift studies need a problem with invariants")
            }
            AnalysisError::BadRefineFactor(k) => {
                write!(f, "reference refine factor must be at least two, got {}", k)
            }
            AnalysisError::ExactFlowUnavailable => {
                write!(f, "scheme requests an exact flow the problem does not provide")
            }
            AnalysisError::ExcessiveDivergence {
                steps,
                divergent,
                total,
            } => write!(
                f,
                "{} of {} paths diverged on the {}-step grid",
                divergent, total, steps
            ),
        }
    }
}

impl core::error::Error for AnalysisError {}

/// Grid ladder, horizon, path count, and seed shared by every study.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    /// Step counts per grid, ascending, each dividing the next.
    pub steps: Vec<usize>,
    /// Final time of every grid.
    pub horizon: f64,
    /// Number of Monte Carlo paths.
    pub n_paths: usize,
    /// Master seed; every path derives its own stream from it.
    pub seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.steps.is_empty() {
            return Err(AnalysisError::EmptySteps);
        }
        if self.steps.contains(&0) {
            return Err(AnalysisError::ZeroSteps);
        }
        for w in self.steps.windows(2) {
            if w[1] <= w[0] {
                return Err(AnalysisError::StepsNotAscending {
                    prev: w[0],
                    next: w[1],
                });
            }
            if w[1] % w[0] != 0 {
                return Err(AnalysisError::StepsNotNested {
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(AnalysisError::BadHorizon(self.horizon));
        }
        if self.n_paths < 2 {
            return Err(AnalysisError::TooFewPaths(self.n_paths));
        }
        Ok(())
    }

    /// Build the grid ladder and verify the times are bitwise shared.
    fn grids(&self) -> Result<Vec<TimeGrid>, AnalysisError> {
        self.validate()?;
        let grids: Vec<TimeGrid> = self
            .steps
            .iter()
            .map(|&n| TimeGrid::uniform(self.horizon, n).expect("validated above"))
            .collect();
        for w in grids.windows(2) {
            if !w[1].contains_grid(&w[0]) {
                return Err(AnalysisError::GridsNotBitwiseNested);
            }
        }
        Ok(grids)
    }
}

/// What a fit attempt concluded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitStatus {
    /// Enough clean points; the slope is meaningful.
    Fitted,
    /// Errors sat at a measurement floor, no slope is claimed.
    Floor,
    /// Too few signal-dominated points for any conclusion.
    Inconclusive,
}

impl core::fmt::Display for FitStatus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let name = match self {
            FitStatus::Fitted => "fitted",
            FitStatus::Floor => "floor",
            FitStatus::Inconclusive => "inconclusive",
        };
        write!(f, "{}", name)
    }
}

/// Error estimate on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub steps: usize,
    pub dt: f64,
    /// The study's error measure on this grid.
    pub error: f64,
    /// Standard error of `error` (delta method where the measure is a root).
    pub std_error: f64,
    /// Paths that diverged on this grid and were excluded.
    pub n_divergent: usize,
    /// Whether this point entered the slope fit.
    pub in_fit: bool,
}

/// Least-squares slope through `(ln dt, ln error)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    /// Root mean square residual in log space.
    pub residual: f64,
    pub points_used: usize,
}

/// Fit `error ~ C * dt^slope` by least squares in log space.
///
/// Non-positive or non-finite entries are skipped; at least three usable
/// pairs are required.
pub fn fit_order(dts: &[f64], errors: &[f64]) -> Result<OrderFit, AnalysisError> {
    assert_eq!(dts.len(), errors.len(), "paired inputs required");
    let pts: Vec<(f64, f64)> = dts
        .iter()
        .zip(errors)
        .filter(|(d, e)| **d > 0.0 && d.is_finite() && **e > 0.0 && e.is_finite())
        .map(|(d, e)| (libm::log(*d), libm::log(*e)))
        .collect();
    if pts.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            available: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let ss: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    Ok(OrderFit {
        slope,
        residual: libm::sqrt(ss / n),
        points_used: pts.len(),
    })
}

/// Everything a convergence run reports.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderReport {
    /// Which study produced this ("strong", "weak", or "drift").
    pub study: String,
    pub problem: String,
    pub scheme: String,
    /// Identifier of the random number generator, for reproducibility.
    pub rng: String,
    pub seed: u64,
    pub n_paths: usize,
    pub horizon: f64,
    pub points: Vec<GridPoint>,
    pub status: FitStatus,
    pub slope: Option<f64>,
    pub residual: Option<f64>,
}

struct StudyMeta {
    study: &'static str,
    problem: String,
    scheme: String,
    seed: u64,
    n_paths: usize,
    horizon: f64,
}

fn finish_report(meta: StudyMeta, points: Vec<GridPoint>, any_floored: bool) -> OrderReport {
    let dts: Vec<f64> = points.iter().filter(|p| p.in_fit).map(|p| p.dt).collect();
    let errs: Vec<f64> = points
        .iter()
        .filter(|p| p.in_fit)
        .map(|p| p.error)
        .collect();
    let (status, slope, residual) = if dts.len() >= 3 {
        let fit = fit_order(&dts, &errs).expect("three positive points are present");
        (FitStatus::Fitted, Some(fit.slope), Some(fit.residual))
    } else if any_floored {
        (FitStatus::Floor, None, None)
    } else {
        (FitStatus::Inconclusive, None, None)
    };
    OrderReport {
        study: String::from(meta.study),
        problem: meta.problem,
        scheme: meta.scheme,
        rng: String::from(RNG_ID),
        seed: meta.seed,
        n_paths: meta.n_paths,
        horizon: meta.horizon,
        points,
        status,
        slope,
        residual,
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var / n))
}

fn check_divergence(
    steps: usize,
    divergent: usize,
    total: usize,
) -> Result<(), AnalysisError> {
    if divergent as f64 > MAX_DIVERGENT_FRACTION * total as f64 {
        return Err(AnalysisError::ExcessiveDivergence {
            steps,
            divergent,
            total,
        });
    }
    Ok(())
}

fn validate_scheme(problem: &SdeProblem, scheme: &Scheme) -> Result<(), AnalysisError> {
    if let Scheme::Jet { variant, solver } = scheme {
        let is_expansion = matches!(variant, JetVariant::Expansion { .. });
        if !is_expansion && solver.method == OdeMethod::Exact && !problem.has_exact_flow() {
            return Err(AnalysisError::ExactFlowUnavailable);
        }
    }
    Ok(())
}

/// Sample the coarsest grid and conditionally refine through the ladder,
/// returning one path per grid, all describing the same Brownian motion.
fn sample_chain(grids: &[TimeGrid], noise_dim: usize, seed: u64) -> Vec<BrownianPath> {
    let mut out = Vec::with_capacity(grids.len());
    let mut path = BrownianPath::sample(&grids[0], noise_dim, seed);
    for finer in &grids[1..] {
        let next = path
            .refine(finer)
            .expect("grid nesting was verified at construction");
        out.push(path);
        path = next;
    }
    out.push(path);
    out
}

fn run_scheme(problem: &SdeProblem, scheme: &Scheme, path: &BrownianPath) -> Option<Trajectory> {
    match simulate(problem, scheme, path) {
        Ok(traj) => Some(traj),
        Err(SimulateError::Divergence { .. }) => None,
        Err(SimulateError::Scheme(e)) => {
            panic!("scheme/problem mismatch slipped past validation: {}", e)
        }
    }
}

/// Pathwise solution map `(t, W_t) -> X_t` for problems solvable from the
/// endpoint value of the driving noise alone.
pub type PathwiseSolution = Box<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Scalar observable of the final state.
pub type ObservableFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Reference solution for strong error measurement.
pub enum StrongReference {
    /// Closed-form pathwise solution.
    Analytic(PathwiseSolution),
    /// Simulate with this scheme on a grid `refine_factor` times finer than
    /// the finest study grid.
    Numeric { scheme: Scheme, refine_factor: usize },
}

/// Per-path output of a strong study: squared sup-distance per grid, `None`
/// where the path could not be measured.
pub type StrongSample = Vec<Option<f64>>;

/// Root mean square pathwise sup-error against a reference solution.
pub struct StrongStudy {
    config: StudyConfig,
    problem: SdeProblem,
    scheme: Scheme,
    reference: StrongReference,
    grids: Vec<TimeGrid>,
    ref_grid: Option<TimeGrid>,
}

impl StrongStudy {
    pub fn new(
        config: StudyConfig,
        problem: SdeProblem,
        scheme: Scheme,
        reference: StrongReference,
    ) -> Result<Self, AnalysisError> {
        let grids = config.grids()?;
        validate_scheme(&problem, &scheme)?;
        let ref_grid = match &reference {
            StrongReference::Analytic(_) => None,
            StrongReference::Numeric {
                scheme: ref_scheme,
                refine_factor,
            } => {
                if *refine_factor < 2 {
                    return Err(AnalysisError::BadRefineFactor(*refine_factor));
                }
                validate_scheme(&problem, ref_scheme)?;
                let finest = *config.steps.last().expect("validated non-empty");
                let grid = TimeGrid::uniform(config.horizon, finest * refine_factor)
                    .expect("config was validated");
                if !grid.contains_grid(grids.last().expect("non-empty")) {
                    return Err(AnalysisError::GridsNotBitwiseNested);
                }
                Some(grid)
            }
        };
        Ok(StrongStudy {
            config,
            problem,
            scheme,
            reference,
            grids,
            ref_grid,
        })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    /// Measure path `index` on every grid.
    pub fn sample(&self, index: usize) -> StrongSample {
        let seed = derive_stream(self.config.seed, &[TAG_STRONG, index as u64]);
        let k = self.problem.noise_dim();
        let mut chain_grids: Vec<TimeGrid> = self.grids.clone();
        if let Some(rg) = &self.ref_grid {
            chain_grids.push(rg.clone());
        }
        let paths = sample_chain(&chain_grids, k, seed);

        // Reference trajectory for the numeric case; if it diverges nothing
        // can be measured for this path.
        let ref_traj = match &self.reference {
            StrongReference::Analytic(_) => None,
            StrongReference::Numeric { scheme, .. } => {
                match run_scheme(&self.problem, scheme, paths.last().expect("non-empty")) {
                    Some(t) => Some(t),
                    None => return alloc::vec![None; self.grids.len()],
                }
            }
        };

        self.grids
            .iter()
            .enumerate()
            .map(|(gi, grid)| {
                let path = &paths[gi];
                let traj = run_scheme(&self.problem, &self.scheme, path)?;
                let mut sup = 0.0;
                for i in 0..grid.len() {
                    let reference = match &self.reference {
                        StrongReference::Analytic(sol) => sol(grid.time(i), path.value(i)),
                        StrongReference::Numeric { .. } => {
                            let rt = ref_traj.as_ref().expect("numeric reference present");
                            let stride = rt.grid().steps() / grid.steps();
                            rt.state(i * stride).to_vec()
                        }
                    };
                    let d = linalg::distance(traj.state(i), &reference);
                    if d > sup {
                        sup = d;
                    }
                }
                Some(sup * sup)
            })
            .collect()
    }

    /// Reduce per-path samples to a report.
    pub fn collect(&self, samples: &[StrongSample]) -> Result<OrderReport, AnalysisError> {
        let total = samples.len();
        let mut points = Vec::with_capacity(self.grids.len());
        let mut any_floored = false;
        for (gi, grid) in self.grids.iter().enumerate() {
            let vals: Vec<f64> = samples.iter().filter_map(|s| s[gi]).collect();
            let divergent = total - vals.len();
            check_divergence(grid.steps(), divergent, total)?;
            let (mean_sq, se_sq) = mean_and_se(&vals);
            let rms = libm::sqrt(mean_sq.max(0.0));
            let se = if rms > 0.0 { se_sq / (2.0 * rms) } else { 0.0 };
            let cleared_floor = rms > FLOOR_EXCLUSION * STRONG_FLOOR;
            any_floored |= !cleared_floor;
            points.push(GridPoint {
                steps: grid.steps(),
                dt: self.config.horizon / grid.steps() as f64,
                error: rms,
                std_error: se,
                n_divergent: divergent,
                in_fit: cleared_floor && rms > WEAK_SIGNAL_SIGMAS * se,
            });
        }
        Ok(finish_report(
            StudyMeta {
                study: "strong",
                problem: String::from(self.problem.label()),
                scheme: self.scheme.id(),
                seed: self.config.seed,
                n_paths: total,
                horizon: self.config.horizon,
            },
            points,
            any_floored,
        ))
    }

    /// Sequential end-to-end run.
    pub fn run(&self) -> Result<OrderReport, AnalysisError> {
        let samples: Vec<StrongSample> =
            (0..self.config.n_paths).map(|j| self.sample(j)).collect();
        self.collect(&samples)
    }
}

/// One weak observation: the observable's value and, when a pathwise
/// solution is available, the gap to the observable of the true solution on
/// the same path (used to detect schemes that are pathwise exact, whose
/// weak error is pure Monte Carlo noise).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakObservation {
    pub value: f64,
    pub path_gap: Option<f64>,
}

/// Per-path output of a weak study.
pub type WeakSample = Vec<Option<WeakObservation>>;

/// Observable, its exact expectation at the horizon, and optionally the
/// pathwise solution for floor detection.
pub struct WeakTarget {
    pub observable: ObservableFn,
    pub expectation: f64,
    pub pathwise: Option<PathwiseSolution>,
}

/// Bias of an observable's sample mean against its exact expectation.
pub struct WeakStudy {
    config: StudyConfig,
    problem: SdeProblem,
    scheme: Scheme,
    target: WeakTarget,
    grids: Vec<TimeGrid>,
}

impl WeakStudy {
    pub fn new(
        config: StudyConfig,
        problem: SdeProblem,
        scheme: Scheme,
        target: WeakTarget,
    ) -> Result<Self, AnalysisError> {
        let grids = config.grids()?;
        validate_scheme(&problem, &scheme)?;
        Ok(WeakStudy {
            config,
            problem,
            scheme,
            target,
            grids,
        })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    /// Observe path `index` on every grid.
    pub fn sample(&self, index: usize) -> WeakSample {
        let seed = derive_stream(self.config.seed, &[TAG_WEAK, index as u64]);
        let paths = sample_chain(&self.grids, self.problem.noise_dim(), seed);
        paths
            .iter()
            .map(|path| {
                let traj = run_scheme(&self.problem, &self.scheme, path)?;
                let value = (self.target.observable)(traj.final_state());
                let path_gap = self.target.pathwise.as_ref().map(|sol| {
                    let horizon = path.grid().horizon();
                    let truth = sol(horizon, path.value(path.grid().len() - 1));
                    (value - (self.target.observable)(&truth)).abs()
                });
                Some(WeakObservation { value, path_gap })
            })
            .collect()
    }

    pub fn collect(&self, samples: &[WeakSample]) -> Result<OrderReport, AnalysisError> {
        let total = samples.len();
        let mut points = Vec::with_capacity(self.grids.len());
        let mut any_floored = false;
        for (gi, grid) in self.grids.iter().enumerate() {
            let obs: Vec<WeakObservation> = samples.iter().filter_map(|s| s[gi]).collect();
            let divergent = total - obs.len();
            check_divergence(grid.steps(), divergent, total)?;
            let vals: Vec<f64> = obs.iter().map(|o| o.value).collect();
            let (mean, se) = mean_and_se(&vals);
            let bias = (mean - self.target.expectation).abs();

            // A scheme that reproduces the solution pathwise has no bias to
            // measure; the residual sample mean is Monte Carlo noise.
            let at_floor = match obs.iter().map(|o| o.path_gap).collect::<Option<Vec<f64>>>() {
                Some(gaps) if !gaps.is_empty() => {
                    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
                    mean_gap < 1e-12 * (1.0 + self.target.expectation.abs())
                }
                _ => false,
            };
            any_floored |= at_floor;
            points.push(GridPoint {
                steps: grid.steps(),
                dt: self.config.horizon / grid.steps() as f64,
                error: bias,
                std_error: se,
                n_divergent: divergent,
                in_fit: !at_floor && bias > WEAK_SIGNAL_SIGMAS * se,
            });
        }
        Ok(finish_report(
            StudyMeta {
                study: "weak",
                problem: String::from(self.problem.label()),
                scheme: self.scheme.id(),
                seed: self.config.seed,
                n_paths: total,
                horizon: self.config.horizon,
            },
            points,
            any_floored,
        ))
    }

    pub fn run(&self) -> Result<OrderReport, AnalysisError> {
        let samples: Vec<WeakSample> =
            (0..self.config.n_paths).map(|j| self.sample(j)).collect();
        self.collect(&samples)
    }
}

/// Per-path output of a drift study: the squared sup over the trajectory of
/// the normalized invariant deviation, per grid.
pub type DriftSample = Vec<Option<f64>>;

/// Normalized deviation of `x` from the invariant levels in `baseline`.
///
/// Each invariant's offset is divided by the larger of one and its gradient
/// norm at `x`, turning a value discrepancy into an approximate distance to
/// the level set; the worst invariant wins.
fn invariant_deviation(problem: &SdeProblem, x: &[f64], baseline: &[f64]) -> f64 {
    let mut worst = 0.0;
    for j in 0..problem.invariant_count() {
        let offset = (problem.invariant(j, x) - baseline[j]).abs();
        let grad = finite_difference_gradient(&|y| problem.invariant(j, y), x);
        let scale = linalg::norm(&grad).max(1.0);
        let dev = offset / scale;
        if dev > worst {
            worst = dev;
        }
    }
    worst
}

/// Mean squared sup-deviation of iterates from the initial invariant levels.
pub struct DriftStudy {
    config: StudyConfig,
    problem: SdeProblem,
    scheme: Scheme,
    grids: Vec<TimeGrid>,
    baseline: Vec<f64>,
}

impl DriftStudy {
    pub fn new(
        config: StudyConfig,
        problem: SdeProblem,
        scheme: Scheme,
    ) -> Result<Self, AnalysisError> {
        let grids = config.grids()?;
        validate_scheme(&problem, &scheme)?;
        if problem.invariant_count() == 0 {
            return Err(AnalysisError::NoInvariants);
        }
        let baseline = problem.invariant_values(problem.initial());
        Ok(DriftStudy {
            config,
            problem,
            scheme,
            grids,
            baseline,
        })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    /// Measure path `index` on every grid.
    pub fn sample(&self, index: usize) -> DriftSample {
        let seed = derive_stream(self.config.seed, &[TAG_DRIFT, index as u64]);
        let paths = sample_chain(&self.grids, self.problem.noise_dim(), seed);
        paths
            .iter()
            .map(|path| {
                let traj = run_scheme(&self.problem, &self.scheme, path)?;
                let mut sup = 0.0;
                for i in 1..traj.len() {
                    let dev = invariant_deviation(&self.problem, traj.state(i), &self.baseline);
                    if dev > sup {
                        sup = dev;
                    }
                }
                Some(sup * sup)
            })
            .collect()
    }

    pub fn collect(&self, samples: &[DriftSample]) -> Result<OrderReport, AnalysisError> {
        let total = samples.len();
        let floor = {
            let linear = FLOOR_EXCLUSION * STRONG_FLOOR;
            linear * linear
        };
        let mut points = Vec::with_capacity(self.grids.len());
        let mut any_floored = false;
        for (gi, grid) in self.grids.iter().enumerate() {
            let vals: Vec<f64> = samples.iter().filter_map(|s| s[gi]).collect();
            let divergent = total - vals.len();
            check_divergence(grid.steps(), divergent, total)?;
            let (mean, se) = mean_and_se(&vals);
            let cleared_floor = mean > floor;
            any_floored |= !cleared_floor;
            points.push(GridPoint {
                steps: grid.steps(),
                dt: self.config.horizon / grid.steps() as f64,
                error: mean,
                std_error: se,
                n_divergent: divergent,
                in_fit: cleared_floor && mean > WEAK_SIGNAL_SIGMAS * se,
            });
        }
        Ok(finish_report(
            StudyMeta {
                study: "drift",
                problem: String::from(self.problem.label()),
                scheme: self.scheme.id(),
                seed: self.config.seed,
                n_paths: total,
                horizon: self.config.horizon,
            },
            points,
            any_floored,
        ))
    }

    pub fn run(&self) -> Result<OrderReport, AnalysisError> {
        let samples: Vec<DriftSample> =
            (0..self.config.n_paths).map(|j| self.sample(j)).collect();
        self.collect(&samples)
    }
}
