//! Ready-made example systems and change-of-variable tooling.
//!
//! The builders here return fully wired [`SdeProblem`]s:
//!
//! - [`kepler_problem`]: a planar orbit in a central potential whose noise
//!   kicks the radius and the angle without touching the angular momentum,
//! - [`circle_problem`]: rotation noise on the unit circle, with a closed
//!   form for every weighted flow,
//! - [`gbm_problem`]: scalar multiplicative noise with its exponential flow,
//! - [`disguised_linear_problem`]: a warped coordinate in which the dynamics
//!   look nonlinear but a hidden chart makes them a straight line,
//! - [`linear_noise_problem`]: pure multiplicative noise with zero Ito drift,
//!   the smallest system where chord steps and flow steps disagree.
//!
//! [`Diffeomorphism`] and [`pushforward`] transplant a problem to new
//! coordinates with the second-order correction the Ito drift picks up, and
//! [`ProblemRegistry`] maps the builtin names used on the command line to
//! builders.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Mat;
use crate::model::{
    fd_step, finite_difference_derivative, finite_difference_jacobian, ColumnJacobianFn,
    DiffusionFn, DriftFn, DriftJacobianFn, ExactFlowFn, SdeProblem,
};

/// Shared scalar function of one variable.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coefficients of the orbital model.
///
/// The state is `(r, p, theta, phi)`: radius, radial velocity, angle,
/// angular velocity. Noise channel one rescales the radius with strength
/// `xi1(r)` while compensating the angular velocity so that `r^2 phi` is
/// untouched; channel two jitters the angle with strength `xi2(r)`.
/// Derivatives of the strengths are optional and are filled in by central
/// differences when absent.
#[derive(Clone)]
pub struct KeplerParams {
    pub xi1: ScalarFn,
    pub xi1_prime: Option<ScalarFn>,
    pub xi2: ScalarFn,
    pub xi2_prime: Option<ScalarFn>,
    /// Derivative `V'(r)` of the central potential.
    pub potential_prime: ScalarFn,
    pub initial: [f64; 4],
}

impl KeplerParams {
    /// Constant noise strengths 0.05 on both channels, the `1/r` potential,
    /// and a mildly eccentric start with angular momentum 1.2.
    pub fn constant_noise() -> Self {
        KeplerParams {
            xi1: Arc::new(|_| 0.05),
            xi1_prime: Some(Arc::new(|_| 0.0)),
            xi2: Arc::new(|_| 0.05),
            xi2_prime: Some(Arc::new(|_| 0.0)),
            potential_prime: Arc::new(|r| 1.0 / (r * r)),
            initial: [1.0, 0.2, 1.0, 1.2],
        }
    }

    /// Radius-dependent strength `0.05 (1 + sin^2 r)` on the radial channel,
    /// exercising the state-dependent Jacobian terms.
    pub fn modulated_noise() -> Self {
        KeplerParams {
            xi1: Arc::new(|r| {
                let s = libm::sin(r);
                0.05 * (1.0 + s * s)
            }),
            xi1_prime: Some(Arc::new(|r| 0.05 * libm::sin(2.0 * r))),
            xi2: Arc::new(|_| 0.05),
            xi2_prime: Some(Arc::new(|_| 0.0)),
            potential_prime: Arc::new(|r| 1.0 / (r * r)),
            initial: [1.0, 0.2, 1.0, 1.2],
        }
    }
}

fn materialize_derivative(f: &ScalarFn, prime: &Option<ScalarFn>) -> ScalarFn {
    match prime {
        Some(p) => p.clone(),
        None => {
            let f = f.clone();
            Arc::new(move |r| finite_difference_derivative(&*f, r))
        }
    }
}

/// Planar orbit `(r, p, theta, phi)` in a central potential with noise that
/// preserves the angular momentum `h = r^2 phi`.
///
/// Deterministically the motion obeys `r' = p`, `p' = -V'(r) + r phi^2`,
/// `theta' = phi`, `phi' = -2 p phi / r`. The radial channel carries
/// `b_1 = (xi1, 0, 0, -2 phi xi1 / r)`, whose last slot exactly cancels the
/// effect of the radius kick on `h`; the angular channel is
/// `b_2 = (0, 0, xi2, 0)`. The stored drift is the Ito one, so it includes
/// `(1/2) (d b_1 / dx) b_1`; the Stratonovich correction removes it again
/// and recovers a field tangent to the level sets of `h`.
///
/// States with `r <= 0` have fallen into the singularity; the coefficients
/// return NaN there so the simulation loop reports divergence instead of
/// continuing with garbage.
pub fn kepler_problem(params: KeplerParams) -> SdeProblem {
    let xi1 = params.xi1.clone();
    let xi1p = materialize_derivative(&params.xi1, &params.xi1_prime);
    let xi2 = params.xi2.clone();
    let xi2p = materialize_derivative(&params.xi2, &params.xi2_prime);
    let vp = params.potential_prime.clone();

    let drift: DriftFn = {
        let xi1 = xi1.clone();
        let xi1p = xi1p.clone();
        Box::new(move |x, _t| {
            let (r, p, phi) = (x[0], x[1], x[3]);
            if !(r > 0.0) || !r.is_finite() {
                return vec![f64::NAN; 4];
            }
            let xi = xi1(r);
            let xip = xi1p(r);
            vec![
                p + 0.5 * xi * xip,
                -vp(r) + r * phi * phi,
                phi,
                (-2.0 * phi * p - phi * xi * xip) / r + 3.0 * phi * xi * xi / (r * r),
            ]
        })
    };

    let diffusion: DiffusionFn = {
        let xi1 = xi1.clone();
        let xi2 = xi2.clone();
        Box::new(move |x, _t, alpha| {
            let (r, phi) = (x[0], x[3]);
            if !(r > 0.0) || !r.is_finite() {
                return vec![f64::NAN; 4];
            }
            if alpha == 0 {
                let xi = xi1(r);
                vec![xi, 0.0, 0.0, -2.0 * phi * xi / r]
            } else {
                vec![0.0, 0.0, xi2(r), 0.0]
            }
        })
    };

    let jacobian: ColumnJacobianFn = Box::new(move |x, _t, alpha| {
        let (r, phi) = (x[0], x[3]);
        let mut m = Mat::zeros(4, 4);
        if !(r > 0.0) || !r.is_finite() {
            return Mat::from_fn(4, 4, |_, _| f64::NAN);
        }
        if alpha == 0 {
            let xi = xi1(r);
            let xip = xi1p(r);
            m.set(0, 0, xip);
            m.set(3, 0, -2.0 * phi * xip / r + 2.0 * phi * xi / (r * r));
            m.set(3, 3, -2.0 * xi / r);
        } else {
            m.set(2, 0, xi2p(r));
        }
        m
    });

    SdeProblem::new("kepler", 4, 2, params.initial.to_vec(), drift, diffusion)
        .expect("dimensions are fixed")
        .with_diffusion_jacobian(jacobian)
        .with_invariant(Box::new(|x| x[0] * x[0] * x[3]))
}

/// Rotation noise on the unit circle.
///
/// `dX = -X/2 dt + J X dW` with `J` the quarter turn. The Ito drift exactly
/// cancels against the Stratonovich correction, so the corrected field is
/// zero and every weighted combination flows by a plain rotation through the
/// noise weight. The squared radius is invariant.
pub fn circle_problem() -> SdeProblem {
    let drift: DriftFn = Box::new(|x, _t| vec![-0.5 * x[0], -0.5 * x[1]]);
    let diffusion: DiffusionFn = Box::new(|x, _t, _alpha| vec![-x[1], x[0]]);
    let jacobian: ColumnJacobianFn = Box::new(|_x, _t, _alpha| {
        let mut m = Mat::zeros(2, 2);
        m.set(0, 1, -1.0);
        m.set(1, 0, 1.0);
        m
    });
    let strat_jacobian: DriftJacobianFn = Box::new(|_x, _t| Mat::zeros(2, 2));
    // The corrected drift vanishes, so the weighted field is w[0] J x
    // regardless of the drift weight and its unit-time flow is the rotation
    // through w[0].
    let flow: ExactFlowFn = Box::new(|x, _t, _c, w| {
        let (c, s) = (libm::cos(w[0]), libm::sin(w[0]));
        vec![c * x[0] - s * x[1], s * x[0] + c * x[1]]
    });
    SdeProblem::new("circle", 2, 1, vec![1.0, 0.0], drift, diffusion)
        .expect("dimensions are fixed")
        .with_diffusion_jacobian(jacobian)
        .with_strat_drift_jacobian(strat_jacobian)
        .with_exact_flow(flow)
        .with_invariant(Box::new(|x| x[0] * x[0] + x[1] * x[1]))
}

/// Scalar multiplicative noise `dX = mu' X dt + sigma X dW` in Ito form.
///
/// The corrected drift coefficient is `mu = mu' - sigma^2 / 2` and the
/// weighted field `(c mu + sigma w) x` flows by an exponential factor.
pub fn gbm_problem(mu_ito: f64, sigma: f64, x0: f64) -> SdeProblem {
    let mu = mu_ito - 0.5 * sigma * sigma;
    let drift: DriftFn = Box::new(move |x, _t| vec![mu_ito * x[0]]);
    let diffusion: DiffusionFn = Box::new(move |x, _t, _alpha| vec![sigma * x[0]]);
    let jacobian: ColumnJacobianFn =
        Box::new(move |_x, _t, _alpha| Mat::from_fn(1, 1, |_, _| sigma));
    let strat_jacobian: DriftJacobianFn = Box::new(move |_x, _t| Mat::from_fn(1, 1, |_, _| mu));
    let flow: ExactFlowFn =
        Box::new(move |x, _t, c, w| vec![x[0] * libm::exp(c * mu + sigma * w[0])]);
    SdeProblem::new("gbm", 1, 1, vec![x0], drift, diffusion)
        .expect("dimensions are fixed")
        .with_diffusion_jacobian(jacobian)
        .with_strat_drift_jacobian(strat_jacobian)
        .with_exact_flow(flow)
}

/// Pure multiplicative noise `dX = X dW`: zero Ito drift but a nonzero
/// corrected drift `-x/2`, so chord steps and flow steps genuinely differ.
pub fn linear_noise_problem(x0: f64) -> SdeProblem {
    let drift: DriftFn = Box::new(|x, _t| vec![0.0 * x[0]]);
    let diffusion: DiffusionFn = Box::new(|x, _t, _alpha| vec![x[0]]);
    let jacobian: ColumnJacobianFn = Box::new(|_x, _t, _alpha| Mat::from_fn(1, 1, |_, _| 1.0));
    let strat_jacobian: DriftJacobianFn = Box::new(|_x, _t| Mat::from_fn(1, 1, |_, _| -0.5));
    let flow: ExactFlowFn = Box::new(|x, _t, c, w| vec![x[0] * libm::exp(w[0] - 0.5 * c)]);
    SdeProblem::new("linear-noise", 1, 1, vec![x0], drift, diffusion)
        .expect("dimensions are fixed")
        .with_diffusion_jacobian(jacobian)
        .with_strat_drift_jacobian(strat_jacobian)
        .with_exact_flow(flow)
}

/// A smooth invertible change of scalar coordinate with its first two
/// derivatives.
#[derive(Clone)]
pub struct ScalarWarp {
    pub forward: ScalarFn,
    pub deriv1: ScalarFn,
    pub deriv2: ScalarFn,
    pub inverse: ScalarFn,
}

impl ScalarWarp {
    /// The hyperbolic sine warp, smooth and invertible on the whole line.
    pub fn sinh() -> Self {
        ScalarWarp {
            forward: Arc::new(libm::sinh),
            deriv1: Arc::new(libm::cosh),
            deriv2: Arc::new(libm::sinh),
            inverse: Arc::new(libm::asinh),
        }
    }
}

/// Brownian motion with drift, watched through a warped coordinate.
///
/// The latent variable follows `dX = mu dt + sigma o dW` (a straight line
/// plus noise, identical in both calculi), and the observed state is
/// `Y = F(X)`. In the warped chart the Ito coefficients look nonlinear:
///
/// - drift `mu F'(G(y)) + (sigma^2 / 2) F''(G(y))`,
/// - diffusion `sigma F'(G(y))`,
///
/// with `G` the inverse warp, yet the corrected drift is `mu F'(G(y))` and
/// every weighted field flows in closed form by sliding the latent variable:
/// `y -> F(G(y) + c mu + sigma w)`.
pub fn disguised_linear_problem(
    warp: &ScalarWarp,
    mu: f64,
    sigma: f64,
    latent_start: f64,
) -> SdeProblem {
    let f1 = warp.deriv1.clone();
    let f2 = warp.deriv2.clone();
    let g = warp.inverse.clone();
    let y0 = (warp.forward)(latent_start);

    let drift: DriftFn = {
        let (f1, f2, g) = (f1.clone(), f2.clone(), g.clone());
        Box::new(move |y, _t| {
            let x = g(y[0]);
            vec![mu * f1(x) + 0.5 * sigma * sigma * f2(x)]
        })
    };
    let diffusion: DiffusionFn = {
        let (f1, g) = (f1.clone(), g.clone());
        Box::new(move |y, _t, _alpha| vec![sigma * f1(g(y[0]))])
    };
    // d/dy F'(G(y)) = F''(G(y)) / F'(G(y)).
    let jacobian: ColumnJacobianFn = {
        let (f1, f2, g) = (f1.clone(), f2.clone(), g.clone());
        Box::new(move |y, _t, _alpha| {
            let x = g(y[0]);
            Mat::from_fn(1, 1, |_, _| sigma * f2(x) / f1(x))
        })
    };
    let strat_jacobian: DriftJacobianFn = {
        let (f1, f2, g) = (f1.clone(), f2.clone(), g.clone());
        Box::new(move |y, _t| {
            let x = g(y[0]);
            Mat::from_fn(1, 1, |_, _| mu * f2(x) / f1(x))
        })
    };
    let flow: ExactFlowFn = {
        let forward = warp.forward.clone();
        Box::new(move |y, _t, c, w| vec![forward(g(y[0]) + c * mu + sigma * w[0])])
    };
    SdeProblem::new("disguised-linear", 1, 1, vec![y0], drift, diffusion)
        .expect("dimensions are fixed")
        .with_diffusion_jacobian(jacobian)
        .with_strat_drift_jacobian(strat_jacobian)
        .with_exact_flow(flow)
}

/// Shared vector-valued map.
pub type VectorMapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Shared Jacobian of a vector-valued map.
pub type MapJacobianFn = Arc<dyn Fn(&[f64]) -> Mat + Send + Sync>;
/// Shared Hessian of one output component of a vector-valued map.
pub type MapHessianFn = Arc<dyn Fn(&[f64], usize) -> Mat + Send + Sync>;

/// A smooth invertible change of coordinates on the state space.
///
/// Analytic Jacobian and Hessians are optional; central differences fill in
/// for whichever is missing (differences of differences for the Hessians, so
/// supply them when accuracy matters).
#[derive(Clone)]
pub struct Diffeomorphism {
    dim: usize,
    forward: VectorMapFn,
    inverse: VectorMapFn,
    jacobian: Option<MapJacobianFn>,
    hessian: Option<MapHessianFn>,
}

impl Diffeomorphism {
    pub fn new(dim: usize, forward: VectorMapFn, inverse: VectorMapFn) -> Self {
        Diffeomorphism {
            dim,
            forward,
            inverse,
            jacobian: None,
            hessian: None,
        }
    }

    pub fn with_jacobian(mut self, jacobian: MapJacobianFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    /// Attach `(x, i) -> ` Hessian of output component `i`.
    pub fn with_hessian(mut self, hessian: MapHessianFn) -> Self {
        self.hessian = Some(hessian);
        self
    }

    /// The identity chart.
    pub fn identity(dim: usize) -> Self {
        Diffeomorphism::new(
            dim,
            Arc::new(|x: &[f64]| x.to_vec()),
            Arc::new(|x: &[f64]| x.to_vec()),
        )
        .with_jacobian(Arc::new(move |_x| {
            Mat::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { 0.0 })
        }))
        .with_hessian(Arc::new(move |_x, _i| Mat::zeros(dim, dim)))
    }

    /// The scalar chart `y = log x` on the positive half line.
    pub fn log_map() -> Self {
        Diffeomorphism::new(
            1,
            Arc::new(|x: &[f64]| vec![libm::log(x[0])]),
            Arc::new(|y: &[f64]| vec![libm::exp(y[0])]),
        )
        .with_jacobian(Arc::new(|x| Mat::from_fn(1, 1, |_, _| 1.0 / x[0])))
        .with_hessian(Arc::new(|x, _i| {
            Mat::from_fn(1, 1, |_, _| -1.0 / (x[0] * x[0]))
        }))
    }

    /// Lift a scalar warp to a one-dimensional chart.
    pub fn from_scalar_warp(warp: &ScalarWarp) -> Self {
        let (f, f1, f2, g) = (
            warp.forward.clone(),
            warp.deriv1.clone(),
            warp.deriv2.clone(),
            warp.inverse.clone(),
        );
        Diffeomorphism::new(
            1,
            Arc::new(move |x: &[f64]| vec![f(x[0])]),
            Arc::new(move |y: &[f64]| vec![g(y[0])]),
        )
        .with_jacobian(Arc::new(move |x| Mat::from_fn(1, 1, |_, _| f1(x[0]))))
        .with_hessian(Arc::new(move |x, _i| Mat::from_fn(1, 1, |_, _| f2(x[0]))))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "chart input dimension mismatch");
        (self.forward)(x)
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.dim, "chart input dimension mismatch");
        (self.inverse)(y)
    }

    /// Jacobian of the forward map, analytic when supplied.
    pub fn jacobian_at(&self, x: &[f64]) -> Mat {
        match &self.jacobian {
            Some(jac) => jac(x),
            None => finite_difference_jacobian(&|y| self.forward(y), x),
        }
    }

    /// Hessian of output component `i`, analytic when supplied and central
    /// differences of the Jacobian otherwise.
    pub fn hessian_at(&self, x: &[f64], i: usize) -> Mat {
        if let Some(hess) = &self.hessian {
            return hess(x, i);
        }
        let n = self.dim;
        let mut h = Mat::zeros(n, n);
        let mut probe = x.to_vec();
        for l in 0..n {
            let step = fd_step(x[l]);
            probe[l] = x[l] + step;
            let plus = self.jacobian_at(&probe);
            probe[l] = x[l] - step;
            let minus = self.jacobian_at(&probe);
            probe[l] = x[l];
            let spacing = (x[l] + step) - (x[l] - step);
            for j in 0..n {
                h.set(j, l, (plus.get(i, j) - minus.get(i, j)) / spacing);
            }
        }
        h
    }
}

/// Transplant a problem through a change of coordinates.
///
/// With `y = f(x)`, the transformed diffusion columns are `J_f b_a` and the
/// transformed Ito drift picks up the usual second-order term:
/// `J_f a + (1/2) sum_a b_a^T H_i b_a` in component `i`. Invariants, the
/// initial state, and any closed-form flow conjugate through the chart. The
/// corrected drift of the result is automatically the chart image of the
/// original corrected drift, which is what makes flow-based steps commute
/// with coordinate changes.
pub fn pushforward(problem: SdeProblem, map: Diffeomorphism) -> SdeProblem {
    assert_eq!(
        map.dim(),
        problem.dim(),
        "chart dimension must match the problem"
    );
    let problem = Arc::new(problem);
    let map = Arc::new(map);
    let n = problem.dim();
    let k = problem.noise_dim();
    let label = format!("{}-pushed", problem.label());
    let initial = map.forward(problem.initial());

    let drift: DriftFn = {
        let (problem, map) = (problem.clone(), map.clone());
        Box::new(move |y, t| {
            let x = map.inverse(y);
            let mut out = map.jacobian_at(&x).mul_vec(&problem.drift(&x, t));
            let columns: Vec<Vec<f64>> = (0..k).map(|a| problem.diffusion(&x, t, a)).collect();
            for (i, out_i) in out.iter_mut().enumerate() {
                let h = map.hessian_at(&x, i);
                for b in &columns {
                    *out_i += 0.5 * h.quad_form(b, b);
                }
            }
            out
        })
    };

    let diffusion: DiffusionFn = {
        let (problem, map) = (problem.clone(), map.clone());
        Box::new(move |y, t, alpha| {
            let x = map.inverse(y);
            map.jacobian_at(&x).mul_vec(&problem.diffusion(&x, t, alpha))
        })
    };

    let mut pushed = SdeProblem::new(&label, n, k, initial, drift, diffusion)
        .expect("dimensions carried over from a valid problem");

    for j in 0..problem.invariant_count() {
        let (problem, map) = (problem.clone(), map.clone());
        pushed = pushed.with_invariant(Box::new(move |y| problem.invariant(j, &map.inverse(y))));
    }

    if problem.has_exact_flow() {
        let (problem, map) = (problem.clone(), map.clone());
        pushed = pushed.with_exact_flow(Box::new(move |y, t, c, w| {
            let x = map.inverse(y);
            let moved = problem
                .exact_flow(&x, t, c, w)
                .expect("flow presence was checked");
            map.forward(&moved)
        }));
    }

    pushed
}

/// Builder for a named problem.
pub type ProblemBuilder = Box<dyn Fn() -> SdeProblem + Send + Sync>;

/// Name-to-builder map behind the command line's `--problem` flag.
pub struct ProblemRegistry {
    builders: BTreeMap<String, ProblemBuilder>,
}

impl ProblemRegistry {
    /// An empty registry.
    pub fn new() -> Self {
        ProblemRegistry {
            builders: BTreeMap::new(),
        }
    }

    /// The canonical examples: `circle`, `disguised-linear`, `gbm`,
    /// `kepler`, and `kepler-modulated`.
    pub fn with_builtins() -> Self {
        let mut reg = ProblemRegistry::new();
        reg.register(
            "kepler",
            Box::new(|| kepler_problem(KeplerParams::constant_noise())),
        );
        reg.register(
            "kepler-modulated",
            Box::new(|| {
                kepler_problem(KeplerParams::modulated_noise()).with_label("kepler-modulated")
            }),
        );
        reg.register("gbm", Box::new(|| gbm_problem(0.13125, 0.25, 1.0)));
        reg.register(
            "disguised-linear",
            Box::new(|| disguised_linear_problem(&ScalarWarp::sinh(), 0.1, 0.25, 0.0)),
        );
        reg.register("circle", Box::new(circle_problem));
        reg
    }

    /// Add or replace a builder.
    pub fn register(&mut self, name: &str, builder: ProblemBuilder) {
        self.builders.insert(String::from(name), builder);
    }

    /// Build a fresh problem by name.
    pub fn build(&self, name: &str) -> Option<SdeProblem> {
        self.builders.get(name).map(|b| b())
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> Vec<String> {
        self.builders.keys().cloned().collect()
    }
}

impl Default for ProblemRegistry {
    fn default() -> Self {
        ProblemRegistry::new()
    }
}
