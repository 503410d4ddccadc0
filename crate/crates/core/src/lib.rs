//! Stochastic integrators built around ODE flows of the driving vector fields.
//!
//! The classical Euler-Maruyama update `x + a dt + sum_a b_a dW^a` moves along
//! a chord, so iterates leave any curved manifold that the exact solution
//! stays on. The schemes in this crate instead combine the increments into a
//! single vector field and follow its exact or numerically resolved flow for
//! unit time. Because a flow of tangent fields cannot leave the manifold,
//! conserved quantities survive even at large step sizes, and the update rule
//! is equivariant under smooth changes of coordinates.
//!
//! The crate is `no_std` (it allocates through `alloc`) and contains no IO.
//! Everything file- or thread-shaped lives in the companion `jetflow-cli`
//! crate.
//!
//! # Modules
//!
//! - [`model`]: problem descriptions (Ito drift, diffusion columns,
//!   invariants) and Ito/Stratonovich conversion.
//! - [`brownian`]: time grids and Brownian paths with keyed, order-independent
//!   sampling and bridge refinement.
//! - [`flow`]: fixed-step unit-time ODE flow solvers (euler, rk4, adams8) and
//!   closed-form flows where a problem supplies one.
//! - [`scheme`]: the stepping rules (Euler-Maruyama, flow-based jet steps,
//!   truncated expansion steps) and trajectory simulation.
//! - [`problems`]: ready-made systems (Kepler with noise, geometric Brownian
//!   motion, warped linear SDEs, the unit circle) plus coordinate-change
//!   utilities.
//! - [`analysis`]: strong/weak convergence and manifold-drift measurement
//!   with common random numbers and log-log order fits.
//! - [`rng`]: the counter-based keyed generator behind all sampling.
//!
//! # Example
//!
//! Simulate the noisy Kepler system and watch the angular-momentum style
//! invariant `r^2 phi` hold at a step size where Euler-Maruyama has already
//! lost it:
//!
//! ```
//! use jetflow_core::brownian::{BrownianPath, TimeGrid};
//! use jetflow_core::flow::OdeSolverSpec;
//! use jetflow_core::problems::{kepler_problem, KeplerParams};
//! use jetflow_core::scheme::{simulate, JetVariant, Scheme};
//!
//! let problem = kepler_problem(KeplerParams::constant_noise());
//! let grid = TimeGrid::uniform(10.0, 25).unwrap();
//! let path = BrownianPath::sample(&grid, problem.noise_dim(), 7);
//!
//! let jet = Scheme::Jet {
//!     variant: JetVariant::DtJet,
//!     solver: OdeSolverSpec::near_exact(),
//! };
//! let trajectory = simulate(&problem, &jet, &path).unwrap();
//! let h = trajectory.invariants().last().unwrap()[0];
//! assert!((h - 1.2).abs() < 1e-6);
//! ```

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod brownian;
pub mod flow;
pub mod linalg;
pub mod model;
pub mod problems;
pub mod rng;
pub mod scheme;

pub use brownian::{BrownianPath, TimeGrid};
pub use model::{stratonovich_drift, SdeProblem, State};
pub use scheme::{simulate, JetVariant, Scheme, StepInput, Trajectory};
