//! Stepping rules and trajectory simulation.
//!
//! Every scheme maps `(x, t, dt, dW)` to the next state. Euler-Maruyama
//! moves along the chord `x + a dt + sum_a b_a dW^a`. The flow-based steps
//! instead build one vector field from the increments and follow its
//! unit-time flow:
//!
//! - `DtJet` uses `X = sum_a dW^a b_a + dt * abar`,
//! - `Dw2Jet` uses `X = sum_a dW^a b_a + (sum_a (dW^a)^2 / k) * abar`,
//!
//! where `abar` is the Stratonovich drift and `k` the number of noise
//! components. Both fields are tangent to any invariant manifold, so the
//! step inherits the manifold, up to the accuracy of the flow solver.
//!
//! The expansion variants replace the flow by its Taylor polynomial in the
//! increments: order two from closed-form first and second derivatives of
//! the flow map, order three adding a directional third derivative obtained
//! by finite differences of the (exact or high-accuracy) flow itself.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::brownian::BrownianPath;
use crate::flow::{flow, FlowError, FlowField, OdeSolverSpec};
use crate::linalg::{self, Mat};
use crate::model::{stratonovich_drift, SdeProblem};

/// Which combination of increments weights the Stratonovich drift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetBase {
    /// Drift weighted by `dt`.
    Dt,
    /// Drift weighted by `sum_a (dW^a)^2 / k`.
    Dw2,
}

/// Truncation order of an expansion step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpansionOrder {
    Two,
    Three,
}

impl ExpansionOrder {
    pub fn as_usize(self) -> usize {
        match self {
            ExpansionOrder::Two => 2,
            ExpansionOrder::Three => 3,
        }
    }
}

/// Flavour of flow-based step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetVariant {
    /// Follow the flow of the `dt`-weighted field.
    DtJet,
    /// Follow the flow of the squared-increment-weighted field.
    Dw2Jet,
    /// Taylor-expand the flow of the chosen base field in the increments.
    Expansion { base: JetBase, order: ExpansionOrder },
}

impl core::fmt::Display for JetVariant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            JetVariant::DtJet => write!(f, "jet-dt"),
            JetVariant::Dw2Jet => write!(f, "jet-dw2"),
            JetVariant::Expansion { base, order } => {
                let base_name = match base {
                    JetBase::Dt => "dt",
                    JetBase::Dw2 => "dw2",
                };
                write!(f, "expand{}-{}", order.as_usize(), base_name)
            }
        }
    }
}

/// A stepping scheme.
#[derive(Clone, Debug, PartialEq)]
pub enum Scheme {
    EulerMaruyama,
    Jet {
        variant: JetVariant,
        solver: OdeSolverSpec,
    },
}

impl Scheme {
    /// Short identifier embedded in report metadata and file names.
    pub fn id(&self) -> String {
        match self {
            Scheme::EulerMaruyama => String::from("em"),
            Scheme::Jet { variant, solver } => match variant {
                JetVariant::Expansion { .. } => format!("{}", variant),
                _ => format!("{}/{}", variant, solver),
            },
        }
    }
}

impl core::fmt::Display for Scheme {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// One step's worth of increments.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInput {
    pub t: f64,
    pub dt: f64,
    pub dw: Vec<f64>,
}

impl StepInput {
    /// Validate the increments: `dt` must be finite and non-negative (zero
    /// is allowed and gives a pure-noise step), `dw` finite.
    pub fn new(t: f64, dt: f64, dw: Vec<f64>) -> Result<Self, SchemeError> {
        if !(dt >= 0.0) || !dt.is_finite() || !t.is_finite() {
            return Err(SchemeError::BadStep { t, dt });
        }
        if !linalg::all_finite(&dw) {
            return Err(SchemeError::NonFiniteIncrement);
        }
        Ok(StepInput { t, dt, dw })
    }
}

/// Errors from stepping.
#[derive(Clone, Debug, PartialEq)]
pub enum SchemeError {
    /// Negative or non-finite time data.
    BadStep { t: f64, dt: f64 },
    /// A noise increment is NaN or infinite.
    NonFiniteIncrement,
    /// Increment count disagrees with the problem's noise dimension.
    NoiseDimension { expected: usize, got: usize },
    /// The expansion variant has no single driving field to hand out.
    ExpansionHasNoField,
    /// The flow solver failed.
    Flow(FlowError),
}

impl core::fmt::Display for SchemeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SchemeError::BadStep { t, dt } => {
                write!(f, "invalid step data: t = {}, dt = {}", t, dt)
            }
            SchemeError::NonFiniteIncrement => write!(f, "noise increments must be finite"),
            SchemeError::NoiseDimension { expected, got } => write!(
                f,
                "problem drives {} noise components, step carries {}",
                expected, got
            ),
            SchemeError::ExpansionHasNoField => write!(
                f,
                "expansion variants are polynomial updates, not flows of a single field"
            ),
            SchemeError::Flow(e) => write!(f, "flow solver: {}", e),
        }
    }
}

impl core::error::Error for SchemeError {}

impl From<FlowError> for SchemeError {
    fn from(e: FlowError) -> Self {
        SchemeError::Flow(e)
    }
}

fn check_noise_dim(problem: &SdeProblem, input: &StepInput) -> Result<(), SchemeError> {
    if input.dw.len() != problem.noise_dim() {
        return Err(SchemeError::NoiseDimension {
            expected: problem.noise_dim(),
            got: input.dw.len(),
        });
    }
    Ok(())
}

/// One Euler-Maruyama step.
pub fn euler_maruyama_step(
    problem: &SdeProblem,
    x: &[f64],
    input: &StepInput,
) -> Result<Vec<f64>, SchemeError> {
    check_noise_dim(problem, input)?;
    let mut next = x.to_vec();
    linalg::add_scaled(&mut next, input.dt, &problem.drift(x, input.t));
    for alpha in 0..problem.noise_dim() {
        linalg::add_scaled(
            &mut next,
            input.dw[alpha],
            &problem.diffusion(x, input.t, alpha),
        );
    }
    Ok(next)
}

/// Drift weight of the base field for the given increments.
fn drift_weight(base: JetBase, input: &StepInput) -> f64 {
    match base {
        JetBase::Dt => input.dt,
        JetBase::Dw2 => {
            input.dw.iter().map(|w| w * w).sum::<f64>() / input.dw.len() as f64
        }
    }
}

/// The weighted vector field a jet step flows along.
///
/// Evaluates `c * abar(x, t) + sum_a w_a b_a(x, t)` with the weights frozen
/// at step time `t`.
pub struct JetField<'a> {
    problem: &'a SdeProblem,
    t: f64,
    drift_weight: f64,
    noise_weights: Vec<f64>,
}

impl<'a> JetField<'a> {
    pub fn drift_weight(&self) -> f64 {
        self.drift_weight
    }

    pub fn noise_weights(&self) -> &[f64] {
        &self.noise_weights
    }

    /// Field value at `x`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let strat = stratonovich_drift(self.problem);
        let mut out = vec![0.0; self.problem.dim()];
        if self.drift_weight != 0.0 {
            linalg::add_scaled(&mut out, self.drift_weight, &strat.eval(x, self.t));
        }
        for alpha in 0..self.problem.noise_dim() {
            if self.noise_weights[alpha] != 0.0 {
                linalg::add_scaled(
                    &mut out,
                    self.noise_weights[alpha],
                    &self.problem.diffusion(x, self.t, alpha),
                );
            }
        }
        out
    }

    /// Closed-form flow `s -> Phi_s(x)` when the problem has one.
    ///
    /// Flowing a scaled field for unit time equals flowing the original for
    /// the scale, so `Phi_s` is the exact flow with all weights scaled by `s`.
    pub fn exact_flow(&self, x: &[f64], s: f64) -> Option<Vec<f64>> {
        let scaled: Vec<f64> = self.noise_weights.iter().map(|w| s * w).collect();
        self.problem.exact_flow(x, self.t, s * self.drift_weight, &scaled)
    }
}

/// Build the driving field for a flow-based jet variant.
///
/// The expansion variants are polynomial updates rather than flows of one
/// field, so they are rejected here.
pub fn jet_vector_field<'a>(
    problem: &'a SdeProblem,
    variant: JetVariant,
    input: &StepInput,
) -> Result<JetField<'a>, SchemeError> {
    check_noise_dim(problem, input)?;
    let base = match variant {
        JetVariant::DtJet => JetBase::Dt,
        JetVariant::Dw2Jet => JetBase::Dw2,
        JetVariant::Expansion { .. } => return Err(SchemeError::ExpansionHasNoField),
    };
    Ok(JetField {
        problem,
        t: input.t,
        drift_weight: drift_weight(base, input),
        noise_weights: input.dw.clone(),
    })
}

/// One flow-based jet step.
pub fn jet_step(
    problem: &SdeProblem,
    variant: JetVariant,
    x: &[f64],
    input: &StepInput,
    solver: &OdeSolverSpec,
) -> Result<Vec<f64>, SchemeError> {
    let jet = jet_vector_field(problem, variant, input)?;
    let eval = |y: &[f64]| jet.eval(y);
    let exact = |y: &[f64], s: f64| {
        jet.exact_flow(y, s)
            .expect("exact arm is only wired up when the problem has a flow")
    };
    let field = if problem.has_exact_flow() {
        FlowField {
            eval: &eval,
            exact: Some(&exact),
        }
    } else {
        FlowField::numeric(&eval)
    };
    Ok(flow(&field, x, solver)?)
}

/// Flow solver used for derivative probes of the flow map when the problem
/// has no closed form. Eighth order with 32 internal nodes leaves the probe
/// error far below the finite-difference truncation it feeds.
fn probe_solver() -> OdeSolverSpec {
    OdeSolverSpec::near_exact()
}

/// Evaluate the flow map at increments scaled by `s` (the expansion's
/// derivative probes need the flow along the ray `s -> s * v`).
fn flow_at_scaled(
    problem: &SdeProblem,
    base: JetBase,
    x: &[f64],
    input: &StepInput,
    s: f64,
) -> Result<Vec<f64>, SchemeError> {
    let scaled_input = StepInput {
        t: input.t,
        dt: input.dt,
        dw: input.dw.iter().map(|w| s * w).collect(),
    };
    // The drift weight scales linearly with s for the dt base but
    // quadratically for the squared-increment base; recomputing it from the
    // scaled increments gets both right, except that dt itself must be
    // scaled by hand.
    let c = match base {
        JetBase::Dt => s * input.dt,
        JetBase::Dw2 => drift_weight(JetBase::Dw2, &scaled_input),
    };
    if let Some(out) = problem.exact_flow(x, input.t, c, &scaled_input.dw) {
        return Ok(out);
    }
    let strat = stratonovich_drift(problem);
    let eval = |y: &[f64]| {
        let mut out = vec![0.0; problem.dim()];
        if c != 0.0 {
            linalg::add_scaled(&mut out, c, &strat.eval(y, input.t));
        }
        for alpha in 0..problem.noise_dim() {
            if scaled_input.dw[alpha] != 0.0 {
                linalg::add_scaled(
                    &mut out,
                    scaled_input.dw[alpha],
                    &problem.diffusion(y, input.t, alpha),
                );
            }
        }
        out
    };
    let field = FlowField::numeric(&eval);
    Ok(flow(&field, x, &probe_solver())?)
}

/// One expansion step: the degree-`order` Taylor polynomial in the
/// increments of the base field's unit-time flow.
///
/// Degree one and two come from closed forms. Writing `J_a` for the Jacobian
/// of `b_a`, `Ja` for the Jacobian of `abar`, `b_w = sum_a w_a b_a`, and
/// `J_w = sum_a w_a J_a`:
///
/// - both bases: `x + b_w + (1/2) J_w b_w`,
/// - dt base adds `dt abar + (dt/2)(Ja b_w + J_w abar) + (dt^2/2) Ja abar`,
/// - squared-increment base adds `(sum_a w_a^2 / k) abar`.
///
/// Degree three adds `(1/6)` of the directional third derivative of the flow
/// along the increment vector, estimated with the five-point stencil
/// `4 (gamma(v) - 2 gamma(v/2) + 2 gamma(-v/2) - gamma(-v))` where `gamma`
/// is the closed-form flow when available and a high-accuracy numeric flow
/// otherwise. Probing at full increment scale keeps the stencil's rounding
/// amplification to a small constant, and its truncation error enters at
/// degree five in the increments, below the degree-four accuracy this
/// truncation targets.
pub fn expansion_jet_step(
    problem: &SdeProblem,
    base: JetBase,
    order: ExpansionOrder,
    x: &[f64],
    input: &StepInput,
) -> Result<Vec<f64>, SchemeError> {
    check_noise_dim(problem, input)?;
    let t = input.t;
    let k = problem.noise_dim();
    let strat = stratonovich_drift(problem);
    let abar = strat.eval(x, t);

    let columns: Vec<Vec<f64>> = (0..k).map(|a| problem.diffusion(x, t, a)).collect();
    let jacobians: Vec<Mat> = (0..k).map(|a| problem.diffusion_jacobian(x, t, a)).collect();

    let mut b_w = vec![0.0; problem.dim()];
    for alpha in 0..k {
        linalg::add_scaled(&mut b_w, input.dw[alpha], &columns[alpha]);
    }
    // J_w b_w = sum_{a,b} w_a w_b J_a b_b, the symmetrized second-order
    // noise block collapsed into a single matrix-vector product.
    let mut jw_bw = vec![0.0; problem.dim()];
    for alpha in 0..k {
        if input.dw[alpha] != 0.0 {
            linalg::add_scaled(&mut jw_bw, input.dw[alpha], &jacobians[alpha].mul_vec(&b_w));
        }
    }

    let mut next = x.to_vec();
    linalg::add_scaled(&mut next, 1.0, &b_w);
    linalg::add_scaled(&mut next, 0.5, &jw_bw);
    match base {
        JetBase::Dt => {
            let dt = input.dt;
            let ja = strat.jacobian(x, t);
            linalg::add_scaled(&mut next, dt, &abar);
            linalg::add_scaled(&mut next, 0.5 * dt, &ja.mul_vec(&b_w));
            let mut jw_abar = vec![0.0; problem.dim()];
            for alpha in 0..k {
                if input.dw[alpha] != 0.0 {
                    linalg::add_scaled(
                        &mut jw_abar,
                        input.dw[alpha],
                        &jacobians[alpha].mul_vec(&abar),
                    );
                }
            }
            linalg::add_scaled(&mut next, 0.5 * dt, &jw_abar);
            linalg::add_scaled(&mut next, 0.5 * dt * dt, &ja.mul_vec(&abar));
        }
        JetBase::Dw2 => {
            let c = drift_weight(JetBase::Dw2, input);
            linalg::add_scaled(&mut next, c, &abar);
        }
    }

    if order == ExpansionOrder::Three {
        let plus_full = flow_at_scaled(problem, base, x, input, 1.0)?;
        let plus_half = flow_at_scaled(problem, base, x, input, 0.5)?;
        let minus_half = flow_at_scaled(problem, base, x, input, -0.5)?;
        let minus_full = flow_at_scaled(problem, base, x, input, -1.0)?;
        // Third directional derivative along v via the antisymmetric
        // five-point stencil at spacing 1/2.
        for i in 0..problem.dim() {
            let third =
                4.0 * (plus_full[i] - 2.0 * plus_half[i] + 2.0 * minus_half[i] - minus_full[i]);
            next[i] += third / 6.0;
        }
    }

    if linalg::all_finite(&next) {
        Ok(next)
    } else {
        Err(SchemeError::Flow(FlowError::NonFinite))
    }
}

/// Dispatch one step of any scheme.
pub fn step(
    problem: &SdeProblem,
    scheme: &Scheme,
    x: &[f64],
    input: &StepInput,
) -> Result<Vec<f64>, SchemeError> {
    match scheme {
        Scheme::EulerMaruyama => euler_maruyama_step(problem, x, input),
        Scheme::Jet { variant, solver } => match variant {
            JetVariant::Expansion { base, order } => {
                expansion_jet_step(problem, *base, *order, x, input)
            }
            _ => jet_step(problem, *variant, x, input, solver),
        },
    }
}

/// A simulated trajectory with invariants logged at every point.
#[derive(Clone, Debug)]
pub struct Trajectory {
    grid: crate::brownian::TimeGrid,
    states: Vec<Vec<f64>>,
    invariants: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn grid(&self) -> &crate::brownian::TimeGrid {
        &self.grid
    }

    /// States at the grid points actually reached (the full grid unless the
    /// run diverged part way).
    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectories hold the initial state")
    }

    /// Invariant values per reached grid point, one row per point.
    pub fn invariants(&self) -> &[Vec<f64>] {
        &self.invariants
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Errors from a whole simulation.
#[derive(Debug)]
pub enum SimulateError {
    /// A step failed for structural reasons (dimensions, missing flow).
    Scheme(SchemeError),
    /// The state left the finite floats; the partial trajectory covers
    /// everything up to the failing step.
    Divergence { step: usize, partial: Trajectory },
}

impl core::fmt::Display for SimulateError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimulateError::Scheme(e) => write!(f, "{}", e),
            SimulateError::Divergence { step, .. } => {
                write!(f, "state diverged at step {}", step)
            }
        }
    }
}

impl core::error::Error for SimulateError {}

/// Drive a scheme along a sampled path.
///
/// The path's grid supplies times and increments; invariants are evaluated
/// at every point. Divergence (a NaN or infinite coordinate, or a flow
/// solver blow-up) is reported together with the partial trajectory.
pub fn simulate(
    problem: &SdeProblem,
    scheme: &Scheme,
    path: &BrownianPath,
) -> Result<Trajectory, SimulateError> {
    let grid = path.grid().clone();
    let mut states = Vec::with_capacity(grid.len());
    let mut invariants = Vec::with_capacity(grid.len());
    let mut x = problem.initial().to_vec();
    states.push(x.clone());
    invariants.push(problem.invariant_values(&x));

    for i in 0..grid.steps() {
        let input = StepInput::new(grid.time(i), grid.step_width(i), path.increment(i))
            .map_err(SimulateError::Scheme)?;
        let next = match step(problem, scheme, &x, &input) {
            Ok(next) => next,
            Err(SchemeError::Flow(FlowError::NonFinite)) => {
                return Err(SimulateError::Divergence {
                    step: i,
                    partial: Trajectory {
                        grid,
                        states,
                        invariants,
                    },
                })
            }
            Err(e) => return Err(SimulateError::Scheme(e)),
        };
        if !linalg::all_finite(&next) {
            return Err(SimulateError::Divergence {
                step: i,
                partial: Trajectory {
                    grid,
                    states,
                    invariants,
                },
            });
        }
        x = next;
        states.push(x.clone());
        invariants.push(problem.invariant_values(&x));
    }
    Ok(Trajectory {
        grid,
        states,
        invariants,
    })
}
