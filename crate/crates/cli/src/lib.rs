//! Experiment front end for the jetflow integrators.
//!
//! The binary exposes four subcommands: `simulate` runs one scheme on one
//! Brownian path and writes the trajectory, `convergence` measures strong,
//! weak, or invariant-drift error over a ladder of nested grids, `table1`
//! tabulates angular momentum conservation on the orbital problem, and
//! `list-problems` shows the registry.
//!
//! Monte Carlo work fans out across a rayon pool capped by the
//! `JETFLOW_THREADS` environment variable; results are reduced in path
//! order, so the same configuration and seed give identical output bytes at
//! any worker count.

pub mod config;
pub mod driver;
pub mod formats;
