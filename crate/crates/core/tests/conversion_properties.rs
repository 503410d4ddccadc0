//! Drift conversion contracts over randomized coefficient fields.

use jetflow_core::linalg::Mat;
use jetflow_core::model::ito_drift_from_stratonovich;
use jetflow_core::{stratonovich_drift, SdeProblem};
use proptest::prelude::*;

/// One-dimensional problem with polynomial drift and a smooth nonlinear
/// diffusion, Jacobians left to finite differences.
fn nonlinear_problem(p: [f64; 3], q: [f64; 3]) -> SdeProblem {
    SdeProblem::new(
        "random-nonlinear",
        1,
        1,
        vec![1.0],
        Box::new(move |x, _t| vec![p[0] + p[1] * x[0] + p[2] * x[0] * x[0]]),
        Box::new(move |x, _t, _alpha| vec![q[0] + q[1] * x[0] + q[2] * libm::sin(x[0])]),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Converting to the corrected drift and back recovers the original.
    #[test]
    fn ito_strat_ito_round_trip(
        p in prop::array::uniform3(-2.0..2.0f64),
        q in prop::array::uniform3(-2.0..2.0f64),
        x in -3.0..3.0f64,
    ) {
        let problem = nonlinear_problem(p, q);
        let strat = stratonovich_drift(&problem);
        let back = ito_drift_from_stratonovich(&problem, &|y, t| strat.eval(y, t), &[x], 0.0);
        let direct = problem.drift(&[x], 0.0);
        let scale = 1.0 + direct[0].abs();
        prop_assert!(
            (back[0] - direct[0]).abs() <= 1e-8 * scale,
            "round trip at {}: {} vs {}", x, back[0], direct[0]
        );
    }

    /// The finite-difference fallback for the conversion term agrees with an
    /// analytic Jacobian when one exists.
    #[test]
    fn fd_conversion_matches_analytic_jacobian(
        mu in -1.0..1.0f64,
        sigma in 0.05..1.0f64,
        x in 0.1..4.0f64,
    ) {
        let implicit = SdeProblem::new(
            "linear-fd",
            1,
            1,
            vec![1.0],
            Box::new(move |y, _t| vec![mu * y[0]]),
            Box::new(move |y, _t, _a| vec![sigma * y[0]]),
        )
        .unwrap();
        let explicit = SdeProblem::new(
            "linear-analytic",
            1,
            1,
            vec![1.0],
            Box::new(move |y, _t| vec![mu * y[0]]),
            Box::new(move |y, _t, _a| vec![sigma * y[0]]),
        )
        .unwrap()
        .with_diffusion_jacobian(Box::new(move |_y, _t, _a| Mat::from_fn(1, 1, |_, _| sigma)));

        let a = stratonovich_drift(&implicit).eval(&[x], 0.0);
        let b = stratonovich_drift(&explicit).eval(&[x], 0.0);
        prop_assert!(
            (a[0] - b[0]).abs() <= 1e-8 * (1.0 + b[0].abs()),
            "fd {} vs analytic {}", a[0], b[0]
        );
    }
}
