//! Time grids and Brownian driving paths.
//!
//! Paths are sampled with keyed draws: the Gaussian behind a grid point is a
//! pure function of the path seed, the component index, and the bit pattern
//! of the time stamp. Refining a grid therefore never disturbs values at
//! existing points (they are copied verbatim), and newly inserted points are
//! filled from the Brownian bridge law conditioned on their neighbours. A
//! convergence study can refine one path through a whole chain of nested
//! grids and restrict back down, and every shared point stays bit-identical,
//! which is exactly the common-random-numbers coupling the error estimators
//! rely on.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::KeyedStream;

/// Key tag for fresh forward increments.
const KEY_INCREMENT: u64 = 0x494E43;
/// Key tag for bridge fills during refinement.
const KEY_BRIDGE: u64 = 0x425247;

/// Errors from grid or path construction.
#[derive(Clone, Debug, PartialEq)]
pub enum BrownianError {
    /// Fewer than two grid points.
    TooFewPoints,
    /// First grid point is not zero.
    NonzeroStart(f64),
    /// Times fail to increase strictly at the given index.
    NotIncreasing { index: usize },
    /// A time stamp is NaN or infinite.
    NonFiniteTime,
    /// Horizon or step count invalid for a uniform grid.
    BadUniformSpec,
    /// The target grid does not contain every point of the source grid.
    NotNested,
    /// Zero noise components requested.
    ZeroNoiseDim,
}

impl core::fmt::Display for BrownianError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            BrownianError::TooFewPoints => write!(f, "a time grid needs at least two points"),
            BrownianError::NonzeroStart(t) => write!(f, "time grids must start at 0, got {}", t),
            BrownianError::NotIncreasing { index } => {
                write!(f, "grid times must increase strictly (violation at index {})", index)
            }
            BrownianError::NonFiniteTime => write!(f, "grid times must be finite"),
            BrownianError::BadUniformSpec => {
                write!(f, "uniform grids need a positive horizon and at least one step")
            }
            BrownianError::NotNested => {
                write!(f, "target grid must contain every point of the source grid")
            }
            BrownianError::ZeroNoiseDim => write!(f, "paths need at least one noise component"),
        }
    }
}

impl core::error::Error for BrownianError {}

/// Strictly increasing times starting at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Validate and wrap an explicit list of times.
    pub fn new(times: Vec<f64>) -> Result<Self, BrownianError> {
        if times.len() < 2 {
            return Err(BrownianError::TooFewPoints);
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(BrownianError::NonFiniteTime);
        }
        if times[0] != 0.0 {
            return Err(BrownianError::NonzeroStart(times[0]));
        }
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                return Err(BrownianError::NotIncreasing { index: i });
            }
        }
        Ok(TimeGrid { times })
    }

    /// Uniform grid of `steps` intervals over `[0, horizon]`.
    ///
    /// Point `i` is computed as `horizon * i / steps`, which makes the grids
    /// for `steps` and `2 * steps` nest bitwise (both numerator and
    /// denominator scale by an exact power of two).
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self, BrownianError> {
        if !(horizon > 0.0) || !horizon.is_finite() || steps == 0 {
            return Err(BrownianError::BadUniformSpec);
        }
        let times = (0..=steps)
            .map(|i| horizon * i as f64 / steps as f64)
            .collect();
        TimeGrid::new(times)
    }

    /// Number of grid points (steps + 1).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of steps.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    /// Final time.
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Width of step `i`, between points `i` and `i + 1`.
    pub fn step_width(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    /// Largest step width.
    pub fn max_step(&self) -> f64 {
        (0..self.steps())
            .map(|i| self.step_width(i))
            .fold(0.0, f64::max)
    }

    /// True when every point of `coarser` occurs in `self` bit-identically.
    pub fn contains_grid(&self, coarser: &TimeGrid) -> bool {
        let mut j = 0;
        for &t in &coarser.times {
            while j < self.times.len() && self.times[j] < t {
                j += 1;
            }
            if j >= self.times.len() || self.times[j] != t {
                return false;
            }
        }
        true
    }

    /// Index of an exact (bitwise) time match.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
            .ok()
    }
}

/// A sampled Brownian path on a grid, one value per (point, component).
#[derive(Clone, Debug)]
pub struct BrownianPath {
    grid: TimeGrid,
    noise_dim: usize,
    /// Row-major values, `values[i * noise_dim + alpha] = W^alpha(t_i)`.
    values: Vec<f64>,
    seed: u64,
}

impl BrownianPath {
    /// Sample a fresh path on `grid`.
    ///
    /// Increments are drawn left to right; the Gaussian for the step ending
    /// at `t_i` is keyed by `(seed, component, bits of t_i)`, so the same
    /// seed and grid always reproduce the same path.
    ///
    /// # Panics
    ///
    /// Panics if `noise_dim` is zero.
    pub fn sample(grid: &TimeGrid, noise_dim: usize, seed: u64) -> Self {
        assert!(noise_dim > 0, "paths need at least one noise component");
        let n = grid.len();
        let mut values = vec![0.0; n * noise_dim];
        for i in 1..n {
            let t = grid.time(i);
            let sqrt_dt = libm::sqrt(grid.step_width(i - 1));
            for alpha in 0..noise_dim {
                let z = KeyedStream::new(seed, &[KEY_INCREMENT, alpha as u64, t.to_bits()])
                    .next_normal();
                values[i * noise_dim + alpha] =
                    values[(i - 1) * noise_dim + alpha] + sqrt_dt * z;
            }
        }
        BrownianPath {
            grid: grid.clone(),
            noise_dim,
            values,
            seed,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Path value `W(t_i)` as a slice of components.
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.noise_dim..(i + 1) * self.noise_dim]
    }

    /// Increment over step `i`, `W(t_{i+1}) - W(t_i)`.
    pub fn increment(&self, i: usize) -> Vec<f64> {
        let a = self.value(i).to_vec();
        self.value(i + 1)
            .iter()
            .zip(a)
            .map(|(next, prev)| next - prev)
            .collect()
    }

    /// Refine onto a finer grid.
    ///
    /// Every point of the current grid must appear in `finer` bit-identically
    /// and keeps its value exactly. New interior points are filled left to
    /// right from the Brownian bridge law, conditioning on the nearest known
    /// left neighbour and the nearest original point to the right; new points
    /// beyond the old horizon extend the path with fresh increments. All new
    /// draws are keyed by the new point's time, so the result depends only on
    /// `(path, finer)` and not on evaluation order.
    pub fn refine(&self, finer: &TimeGrid) -> Result<Self, BrownianError> {
        if !finer.contains_grid(&self.grid) {
            return Err(BrownianError::NotNested);
        }
        let k = self.noise_dim;
        let n = finer.len();
        let mut values = vec![0.0; n * k];

        // Positions of the new grid's points inside the old grid, if any.
        let old_index: Vec<Option<usize>> = finer
            .times()
            .iter()
            .map(|&t| self.grid.index_of(t))
            .collect();

        for i in 0..n {
            if let Some(j) = old_index[i] {
                values[i * k..(i + 1) * k].copy_from_slice(self.value(j));
                continue;
            }
            let t = finer.time(i);
            // Left neighbour in the refined grid is already filled (i > 0
            // because t = 0 is always an old point).
            let t_left = finer.time(i - 1);
            // Nearest original point strictly to the right, if one exists.
            let right = (i + 1..n).find_map(|m| old_index[m].map(|j| (finer.time(m), j)));
            for alpha in 0..k {
                let w_left = values[(i - 1) * k + alpha];
                let z = KeyedStream::new(self.seed, &[KEY_BRIDGE, alpha as u64, t.to_bits()])
                    .next_normal();
                values[i * k + alpha] = match right {
                    Some((t_right, j_right)) => {
                        let w_right = self.value(j_right)[alpha];
                        let span = t_right - t_left;
                        let mean = w_left + (t - t_left) / span * (w_right - w_left);
                        let var = (t - t_left) * (t_right - t) / span;
                        mean + libm::sqrt(var) * z
                    }
                    // Past the old horizon: plain forward increment.
                    None => w_left + libm::sqrt(t - t_left) * z,
                };
            }
        }
        Ok(BrownianPath {
            grid: finer.clone(),
            noise_dim: k,
            values,
            seed: self.seed,
        })
    }

    /// Restrict to a coarser grid whose points all occur in this path's grid.
    ///
    /// Values are copied bitwise, so restricting a refinement recovers the
    /// original path exactly.
    pub fn restrict(&self, coarser: &TimeGrid) -> Result<Self, BrownianError> {
        if !self.grid.contains_grid(coarser) {
            return Err(BrownianError::NotNested);
        }
        let k = self.noise_dim;
        let mut values = vec![0.0; coarser.len() * k];
        for (i, &t) in coarser.times().iter().enumerate() {
            let j = self.grid.index_of(t).expect("containment was checked");
            values[i * k..(i + 1) * k].copy_from_slice(self.value(j));
        }
        Ok(BrownianPath {
            grid: coarser.clone(),
            noise_dim: k,
            values,
            seed: self.seed,
        })
    }
}
