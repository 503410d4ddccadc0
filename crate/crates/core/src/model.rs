//! Problem descriptions and drift conversions.
//!
//! An [`SdeProblem`] holds the Ito-form data of
//! `dX = a(X, t) dt + sum_a b_a(X, t) dW^a` as boxed closures: the drift `a`,
//! the diffusion columns `b_a`, optional analytic Jacobians, a list of scalar
//! invariants whose level sets the solution preserves, and optionally a
//! closed-form unit-time flow of weighted field combinations for schemes that
//! can exploit one.
//!
//! Flow-based steps need the Stratonovich-corrected drift
//! `abar = a - (1/2) sum_a (d b_a / dx) b_a`, because that is the vector
//! field that is actually tangent to the invariant manifolds. The conversion
//! lives here as [`stratonovich_drift`], with the inverse direction provided
//! for round trips, and falls back to finite-difference Jacobians when no
//! analytic ones were supplied.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{self, Mat};

/// State vector alias used across the crate.
pub type State = Vec<f64>;

/// Drift field `(x, t) -> a(x, t)`.
pub type DriftFn = Box<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
/// Diffusion column `(x, t, alpha) -> b_alpha(x, t)` for `alpha < noise_dim`.
pub type DiffusionFn = Box<dyn Fn(&[f64], f64, usize) -> Vec<f64> + Send + Sync>;
/// Analytic Jacobian of one diffusion column, `(x, t, alpha) -> d b_alpha / dx`.
pub type ColumnJacobianFn = Box<dyn Fn(&[f64], f64, usize) -> Mat + Send + Sync>;
/// Analytic Jacobian of the Stratonovich drift, `(x, t) -> d abar / dx`.
pub type DriftJacobianFn = Box<dyn Fn(&[f64], f64) -> Mat + Send + Sync>;
/// Scalar invariant of the dynamics.
pub type InvariantFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Closed-form unit-time flow of `c * abar + sum_a w_a * b_a`.
///
/// Arguments are `(x, t, c, w)` where `c` weights the Stratonovich drift and
/// `w` weights the diffusion columns. The coefficients are frozen at time `t`
/// while the flow parameter runs over the unit interval.
pub type ExactFlowFn = Box<dyn Fn(&[f64], f64, f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Errors from problem construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelError {
    /// State dimension or noise dimension was zero.
    ZeroDimension,
    /// Initial state length disagrees with the state dimension.
    InitialStateDimension { expected: usize, got: usize },
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::ZeroDimension => {
                write!(f, "state and noise dimensions must both be positive")
            }
            ModelError::InitialStateDimension { expected, got } => write!(
                f,
                "initial state has {} components, problem dimension is {}",
                got, expected
            ),
        }
    }
}

impl core::error::Error for ModelError {}

/// An SDE in Ito form together with its geometric side data.
pub struct SdeProblem {
    label: String,
    dim: usize,
    noise_dim: usize,
    initial: Vec<f64>,
    drift: DriftFn,
    diffusion: DiffusionFn,
    diffusion_jacobian: Option<ColumnJacobianFn>,
    strat_drift_jacobian: Option<DriftJacobianFn>,
    invariants: Vec<InvariantFn>,
    exact_flow: Option<ExactFlowFn>,
}

impl SdeProblem {
    /// Build a problem from its required pieces.
    ///
    /// Optional pieces (analytic Jacobians, invariants, a closed-form flow)
    /// are attached with the `with_*` methods.
    pub fn new(
        label: &str,
        dim: usize,
        noise_dim: usize,
        initial: Vec<f64>,
        drift: DriftFn,
        diffusion: DiffusionFn,
    ) -> Result<Self, ModelError> {
        if dim == 0 || noise_dim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        if initial.len() != dim {
            return Err(ModelError::InitialStateDimension {
                expected: dim,
                got: initial.len(),
            });
        }
        Ok(SdeProblem {
            label: String::from(label),
            dim,
            noise_dim,
            initial,
            drift,
            diffusion,
            diffusion_jacobian: None,
            strat_drift_jacobian: None,
            invariants: Vec::new(),
            exact_flow: None,
        })
    }

    /// Attach an analytic Jacobian for the diffusion columns.
    pub fn with_diffusion_jacobian(mut self, jac: ColumnJacobianFn) -> Self {
        self.diffusion_jacobian = Some(jac);
        self
    }

    /// Attach an analytic Jacobian for the Stratonovich drift.
    pub fn with_strat_drift_jacobian(mut self, jac: DriftJacobianFn) -> Self {
        self.strat_drift_jacobian = Some(jac);
        self
    }

    /// Register one scalar invariant.
    pub fn with_invariant(mut self, g: InvariantFn) -> Self {
        self.invariants.push(g);
        self
    }

    /// Attach a closed-form flow of weighted field combinations.
    pub fn with_exact_flow(mut self, flow: ExactFlowFn) -> Self {
        self.exact_flow = Some(flow);
        self
    }

    /// Replace the label (used in report metadata).
    pub fn with_label(mut self, label: &str) -> Self {
        self.label = String::from(label);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Ito drift `a(x, t)`.
    ///
    /// # Panics
    ///
    /// Panics if `x` or the closure's output has the wrong dimension.
    pub fn drift(&self, x: &[f64], t: f64) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "drift input dimension mismatch");
        let out = (self.drift)(x, t);
        assert_eq!(out.len(), self.dim, "drift output dimension mismatch");
        out
    }

    /// Diffusion column `b_alpha(x, t)`.
    ///
    /// # Panics
    ///
    /// Panics if `alpha >= noise_dim` or a dimension disagrees.
    pub fn diffusion(&self, x: &[f64], t: f64, alpha: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "diffusion input dimension mismatch");
        assert!(alpha < self.noise_dim, "diffusion column index out of range");
        let out = (self.diffusion)(x, t, alpha);
        assert_eq!(out.len(), self.dim, "diffusion output dimension mismatch");
        out
    }

    /// Jacobian of one diffusion column, analytic when supplied and central
    /// finite differences otherwise.
    pub fn diffusion_jacobian(&self, x: &[f64], t: f64, alpha: usize) -> Mat {
        assert!(alpha < self.noise_dim, "diffusion column index out of range");
        match &self.diffusion_jacobian {
            Some(jac) => jac(x, t, alpha),
            None => finite_difference_jacobian(&|y| self.diffusion(y, t, alpha), x),
        }
    }

    pub fn has_exact_flow(&self) -> bool {
        self.exact_flow.is_some()
    }

    /// Closed-form flow evaluation, if the problem carries one.
    pub fn exact_flow(&self, x: &[f64], t: f64, c: f64, w: &[f64]) -> Option<Vec<f64>> {
        self.exact_flow.as_ref().map(|flow| flow(x, t, c, w))
    }

    pub fn invariant_count(&self) -> usize {
        self.invariants.len()
    }

    /// Evaluate every registered invariant at `x`.
    pub fn invariant_values(&self, x: &[f64]) -> Vec<f64> {
        self.invariants.iter().map(|g| g(x)).collect()
    }

    /// Evaluate one invariant.
    pub fn invariant(&self, index: usize, x: &[f64]) -> f64 {
        (self.invariants[index])(x)
    }

    pub(crate) fn strat_drift_jacobian_fn(&self) -> Option<&DriftJacobianFn> {
        self.strat_drift_jacobian.as_ref()
    }
}

impl core::fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SdeProblem")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("initial", &self.initial)
            .field("invariants", &self.invariants.len())
            .field("exact_flow", &self.exact_flow.is_some())
            .finish()
    }
}

/// Cube root of machine epsilon, the standard central-difference step scale:
/// it balances O(h^2) truncation against O(eps/h) rounding.
pub(crate) fn fd_step(x: f64) -> f64 {
    const CBRT_EPS: f64 = 6.055_454_452_393_343e-6;
    CBRT_EPS * if x.abs() > 1.0 { x.abs() } else { 1.0 }
}

/// Central-difference derivative of a scalar function of one variable.
pub fn finite_difference_derivative(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let h = fd_step(x);
    let spacing = (x + h) - (x - h);
    (f(x + h) - f(x - h)) / spacing
}

/// Central-difference Jacobian of `f` at `x`.
///
/// The output is `m x n` for `f: R^n -> R^m`, with step
/// `cbrt(eps) * max(1, |x_j|)` per coordinate.
pub fn finite_difference_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Mat {
    let n = x.len();
    let m = f(x).len();
    let mut jac = Mat::zeros(m, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let plus = f(&probe);
        probe[j] = x[j] - h;
        let minus = f(&probe);
        probe[j] = x[j];
        // Use the realized spacing: (x+h) - (x-h) need not be exactly 2h.
        let spacing = (x[j] + h) - (x[j] - h);
        for i in 0..m {
            jac.set(i, j, (plus[i] - minus[i]) / spacing);
        }
    }
    jac
}

/// Central-difference gradient of a scalar function.
pub fn finite_difference_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let plus = f(&probe);
        probe[j] = x[j] - h;
        let minus = f(&probe);
        probe[j] = x[j];
        let spacing = (x[j] + h) - (x[j] - h);
        grad[j] = (plus - minus) / spacing;
    }
    grad
}

/// The Ito-to-Stratonovich correction `(1/2) sum_a (d b_a / dx) b_a`.
fn conversion_term(problem: &SdeProblem, x: &[f64], t: f64) -> Vec<f64> {
    let mut corr = vec![0.0; problem.dim()];
    for alpha in 0..problem.noise_dim() {
        let b = problem.diffusion(x, t, alpha);
        let jac = problem.diffusion_jacobian(x, t, alpha);
        linalg::add_scaled(&mut corr, 0.5, &jac.mul_vec(&b));
    }
    corr
}

/// The Stratonovich drift of a problem, evaluated lazily.
///
/// `abar(x, t) = a(x, t) - (1/2) sum_a (d b_a / dx)(x, t) b_a(x, t)`.
pub struct StratonovichDrift<'a> {
    problem: &'a SdeProblem,
}

impl<'a> StratonovichDrift<'a> {
    /// Drift value at `(x, t)`.
    pub fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut a = self.problem.drift(x, t);
        let corr = conversion_term(self.problem, x, t);
        linalg::add_scaled(&mut a, -1.0, &corr);
        a
    }

    /// Jacobian of the drift, analytic when the problem supplies one and
    /// central finite differences of [`Self::eval`] otherwise.
    pub fn jacobian(&self, x: &[f64], t: f64) -> Mat {
        match self.problem.strat_drift_jacobian_fn() {
            Some(jac) => jac(x, t),
            None => finite_difference_jacobian(&|y| self.eval(y, t), x),
        }
    }
}

/// Stratonovich drift of `problem`.
pub fn stratonovich_drift(problem: &SdeProblem) -> StratonovichDrift<'_> {
    StratonovichDrift { problem }
}

/// Recover the Ito drift from a Stratonovich drift function.
///
/// Only the diffusion data of `problem` is consulted; `strat_drift` supplies
/// the corrected drift. Composing this with [`stratonovich_drift`] returns
/// the original Ito drift up to the accuracy of the Jacobians involved.
pub fn ito_drift_from_stratonovich(
    problem: &SdeProblem,
    strat_drift: &dyn Fn(&[f64], f64) -> Vec<f64>,
    x: &[f64],
    t: f64,
) -> Vec<f64> {
    let mut a = strat_drift(x, t);
    assert_eq!(a.len(), problem.dim(), "drift dimension mismatch");
    let corr = conversion_term(problem, x, t);
    linalg::add_scaled(&mut a, 1.0, &corr);
    a
}
