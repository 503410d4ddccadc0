//! The defining jet property of the flow-based and expansion steps, checked
//! by finite differences on every shipped problem.
//!
//! Viewing one step as a map `v -> step(x, t, dt=0, dw=v)` of the noise
//! increments, every variant must osculate the same second-order data at
//! `v = 0`:
//!
//! - value `x`,
//! - first derivatives `b_a`,
//! - diagonal second derivatives `(d b_a / dx) b_a`, plus `2/k` times the
//!   corrected drift for the squared-increment base,
//! - mixed second derivatives `((d b_a/dx) b_b + (d b_b/dx) b_a) / 2`,
//!
//! and for the `dt`-weighted base the derivative along `dt` at zero noise is
//! the corrected drift itself. The probes use central differences in the
//! noise directions and a Richardson-extrapolated forward difference in
//! `dt` (negative `dt` is not a valid step).

use jetflow_core::flow::OdeSolverSpec;
use jetflow_core::problems::{linear_noise_problem, ProblemRegistry};
use jetflow_core::rng::KeyedStream;
use jetflow_core::scheme::{step, ExpansionOrder, JetBase, JetVariant, StepInput};
use jetflow_core::{stratonovich_drift, Scheme, SdeProblem};

const H: f64 = 0.005;
const H_DT: f64 = 0.002;
const TOL: f64 = 1e-5;
const TOL_DT: f64 = 1e-4;
const STATES_PER_PROBLEM: usize = 20;

fn shipped_problems() -> Vec<SdeProblem> {
    let registry = ProblemRegistry::with_builtins();
    let mut problems: Vec<SdeProblem> = registry
        .names()
        .iter()
        .map(|n| registry.build(n).expect("builtin"))
        .collect();
    problems.push(linear_noise_problem(1.0));
    problems
}

/// Variants under test: `uses_dt` marks the dt-weighted base (so the drift
/// shows up along `dt`), `dw2` the squared-increment base (so the drift
/// shows up in the diagonal second differences).
fn variants_for(problem: &SdeProblem) -> Vec<(Scheme, bool, bool)> {
    let solver = if problem.has_exact_flow() {
        OdeSolverSpec::exact()
    } else {
        OdeSolverSpec::near_exact()
    };
    let expansion = |base, order| Scheme::Jet {
        variant: JetVariant::Expansion { base, order },
        solver: OdeSolverSpec::default_production(),
    };
    let mut out = vec![
        (
            Scheme::Jet {
                variant: JetVariant::DtJet,
                solver,
            },
            true,
            false,
        ),
        (
            Scheme::Jet {
                variant: JetVariant::Dw2Jet,
                solver,
            },
            false,
            true,
        ),
        (expansion(JetBase::Dt, ExpansionOrder::Two), true, false),
        (expansion(JetBase::Dt, ExpansionOrder::Three), true, false),
        (expansion(JetBase::Dw2, ExpansionOrder::Two), false, true),
        (expansion(JetBase::Dw2, ExpansionOrder::Three), false, true),
    ];
    if problem.has_exact_flow() {
        // The property must not depend on having a closed form; spot-check
        // the numeric flow path as well.
        out.push((
            Scheme::Jet {
                variant: JetVariant::DtJet,
                solver: OdeSolverSpec::near_exact(),
            },
            true,
            false,
        ));
    }
    out
}

fn random_state(problem: &SdeProblem, stream: &mut KeyedStream) -> Vec<f64> {
    let mut x = problem.initial().to_vec();
    for xi in x.iter_mut() {
        *xi += 0.05 * stream.next_normal();
    }
    // Keep orbital probes well away from the r = 0 singularity.
    if problem.label().starts_with("kepler") && x[0] < 0.3 {
        x[0] = 0.3;
    }
    x
}

fn step_at(problem: &SdeProblem, scheme: &Scheme, x: &[f64], dt: f64, dw: Vec<f64>) -> Vec<f64> {
    let input = StepInput::new(0.0, dt, dw).expect("probe increments are finite");
    step(problem, scheme, x, &input).expect("probe step failed")
}

fn assert_close(tag: &str, got: &[f64], want: &[f64], tol: f64) {
    for i in 0..got.len() {
        let scale = 1.0 + want[i].abs();
        assert!(
            (got[i] - want[i]).abs() <= tol * scale,
            "{}: component {}: got {}, want {}",
            tag,
            i,
            got[i],
            want[i]
        );
    }
}

fn unit(k: usize, alpha: usize, value: f64) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[alpha] = value;
    v
}

#[test]
fn all_step_variants_osculate_the_two_jet() {
    for (pi, problem) in shipped_problems().iter().enumerate() {
        let n = problem.dim();
        let k = problem.noise_dim();
        let strat = stratonovich_drift(problem);
        for (scheme, uses_dt, dw2) in variants_for(problem) {
            let mut stream = KeyedStream::new(9001, &[pi as u64]);
            for si in 0..STATES_PER_PROBLEM {
                let x = random_state(problem, &mut stream);
                let tag = format!("{} / {} / state {}", problem.label(), scheme, si);

                // Zero increments must be (numerically) a fixed point.
                let z0 = step_at(problem, &scheme, &x, 0.0, vec![0.0; k]);
                assert_close(&format!("{}: fixed point", tag), &z0, &x, 1e-12);

                let abar = strat.eval(&x, 0.0);
                for alpha in 0..k {
                    let plus = step_at(problem, &scheme, &x, 0.0, unit(k, alpha, H));
                    let minus = step_at(problem, &scheme, &x, 0.0, unit(k, alpha, -H));

                    let first: Vec<f64> = (0..n)
                        .map(|i| (plus[i] - minus[i]) / (2.0 * H))
                        .collect();
                    let b = problem.diffusion(&x, 0.0, alpha);
                    assert_close(&format!("{}: d/dv{}", tag, alpha), &first, &b, TOL);

                    let second: Vec<f64> = (0..n)
                        .map(|i| (plus[i] - 2.0 * z0[i] + minus[i]) / (H * H))
                        .collect();
                    let jac = problem.diffusion_jacobian(&x, 0.0, alpha);
                    let mut want = jac.mul_vec(&b);
                    if dw2 {
                        for i in 0..n {
                            want[i] += 2.0 / k as f64 * abar[i];
                        }
                    }
                    assert_close(&format!("{}: d2/dv{}2", tag, alpha), &second, &want, TOL);
                }

                for alpha in 0..k {
                    for beta in (alpha + 1)..k {
                        let mut pp = unit(k, alpha, H);
                        pp[beta] = H;
                        let mut pm = unit(k, alpha, H);
                        pm[beta] = -H;
                        let mut mp = unit(k, alpha, -H);
                        mp[beta] = H;
                        let mut mm = unit(k, alpha, -H);
                        mm[beta] = -H;
                        let spp = step_at(problem, &scheme, &x, 0.0, pp);
                        let spm = step_at(problem, &scheme, &x, 0.0, pm);
                        let smp = step_at(problem, &scheme, &x, 0.0, mp);
                        let smm = step_at(problem, &scheme, &x, 0.0, mm);
                        let mixed: Vec<f64> = (0..n)
                            .map(|i| (spp[i] - spm[i] - smp[i] + smm[i]) / (4.0 * H * H))
                            .collect();
                        let ja = problem.diffusion_jacobian(&x, 0.0, alpha);
                        let jb = problem.diffusion_jacobian(&x, 0.0, beta);
                        let ba = problem.diffusion(&x, 0.0, alpha);
                        let bb = problem.diffusion(&x, 0.0, beta);
                        let lhs = ja.mul_vec(&bb);
                        let rhs = jb.mul_vec(&ba);
                        let want: Vec<f64> =
                            (0..n).map(|i| 0.5 * (lhs[i] + rhs[i])).collect();
                        assert_close(
                            &format!("{}: d2/dv{}dv{}", tag, alpha, beta),
                            &mixed,
                            &want,
                            TOL,
                        );
                    }
                }

                if uses_dt {
                    let f1 = step_at(problem, &scheme, &x, H_DT, vec![0.0; k]);
                    let f2 = step_at(problem, &scheme, &x, 2.0 * H_DT, vec![0.0; k]);
                    let along_dt: Vec<f64> = (0..n)
                        .map(|i| (4.0 * f1[i] - f2[i] - 3.0 * z0[i]) / (2.0 * H_DT))
                        .collect();
                    assert_close(&format!("{}: d/d(dt)", tag), &along_dt, &abar, TOL_DT);
                } else {
                    // The squared-increment base must ignore dt entirely at
                    // zero noise.
                    let moved = step_at(problem, &scheme, &x, 0.25, vec![0.0; k]);
                    assert_close(&format!("{}: dt independence", tag), &moved, &z0, 1e-12);
                }
            }
        }
    }
}
