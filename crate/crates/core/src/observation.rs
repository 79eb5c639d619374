//! Sensing model and the grid-sampled observation process
//! `dZ = h(X) dt + σ_V(t) dV`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ctmc::{RateMatrix, StatePath};
use crate::error::{Error, Result};
use crate::rng;

/// Noise intensity `σ_V(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSchedule {
    Constant(f64),
    /// Piecewise-linear through `(times[i], values[i])`, held constant
    /// outside the table.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl SigmaSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            SigmaSchedule::Constant(s) => {
                if !(*s > 0.0) || !s.is_finite() {
                    return Err(Error::Domain(format!("sigma must be > 0, got {s}")));
                }
            }
            SigmaSchedule::Tabulated { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Domain(format!(
                        "sigma table needs matching non-empty columns ({} times, {} values)",
                        times.len(),
                        values.len()
                    )));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
                    return Err(Error::Domain("sigma table times must be strictly increasing".into()));
                }
                if values.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return Err(Error::Domain("sigma table values must be > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            SigmaSchedule::Constant(s) => *s,
            SigmaSchedule::Tabulated { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let k = times.partition_point(|&s| s <= t);
                let (t0, t1) = (times[k - 1], times[k]);
                let w = (t - t0) / (t1 - t0);
                values[k - 1] * (1.0 - w) + values[k] * w
            }
        }
    }

    /// Lower bound of `σ_V` over all time (the table is linear between knots).
    pub fn min_value(&self) -> f64 {
        match self {
            SigmaSchedule::Constant(s) => *s,
            SigmaSchedule::Tabulated { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Per-state sensing values `h(a_i)` and the noise schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    h_values: Vec<f64>,
    sigma: SigmaSchedule,
}

impl ObservationModel {
    pub fn new(h_values: Vec<f64>, sigma: SigmaSchedule) -> Result<Self> {
        if h_values.is_empty() {
            return Err(Error::Domain("sensing model needs at least one state".into()));
        }
        if h_values.iter().any(|h| !h.is_finite()) {
            return Err(Error::Domain("sensing values must be finite".into()));
        }
        for i in 0..h_values.len() {
            for j in (i + 1)..h_values.len() {
                if h_values[i] == h_values[j] {
                    return Err(Error::Domain(format!(
                        "sensing function is not injective: h(a_{i}) = h(a_{j}) = {}",
                        h_values[i]
                    )));
                }
            }
        }
        sigma.validate()?;
        Ok(ObservationModel { h_values, sigma })
    }

    /// `h(a) = gain * a`.
    pub fn linear(states: &[f64], gain: f64, sigma: SigmaSchedule) -> Result<Self> {
        Self::new(states.iter().map(|a| gain * a).collect(), sigma)
    }

    /// Skips the injectivity check so degenerate sensing can be exercised.
    #[cfg(test)]
    pub(crate) fn new_unchecked(h_values: Vec<f64>, sigma: SigmaSchedule) -> Self {
        ObservationModel { h_values, sigma }
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h_values
    }

    pub fn sigma(&self) -> &SigmaSchedule {
        &self.sigma
    }

    pub fn sigma_at(&self, t: f64) -> f64 {
        self.sigma.at(t)
    }

    pub fn dim(&self) -> usize {
        self.h_values.len()
    }
}

/// Uniform grid `t_k = k λ`, `k = 0..=k_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    lambda: f64,
    k_max: usize,
}

impl TimeGrid {
    pub fn new(lambda: f64, k_max: usize) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Grid(format!("step size must be > 0, got {lambda}")));
        }
        Ok(TimeGrid { lambda, k_max })
    }

    /// Grid covering `[0, t_final]`; `t_final` must be a multiple of `lambda`.
    pub fn covering(lambda: f64, t_final: f64) -> Result<Self> {
        if !(t_final >= 0.0) || !t_final.is_finite() {
            return Err(Error::Grid(format!("final time must be >= 0, got {t_final}")));
        }
        let ratio = t_final / lambda;
        let k_max = ratio.round();
        if (ratio - k_max).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Grid(format!(
                "step size {lambda} does not divide final time {t_final}"
            )));
        }
        Self::new(lambda, k_max as usize)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.lambda
    }

    pub fn end(&self) -> f64 {
        self.time(self.k_max)
    }

    /// `λ max|Q_ii| < 1`, required by the explicit prior steps.
    pub fn check_stability(&self, q: &RateMatrix) -> Result<()> {
        let product = self.lambda * q.max_exit_rate();
        if product >= 1.0 {
            return Err(Error::Unstable {
                lambda: self.lambda,
                product,
            });
        }
        Ok(())
    }
}

/// Samples `Z_0 … Z_{k_max}` of the observation process on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPath {
    z: Vec<f64>,
    grid: TimeGrid,
}

impl ObservationPath {
    pub fn new(z: Vec<f64>, grid: TimeGrid) -> Result<Self> {
        if z.len() != grid.k_max() + 1 {
            return Err(Error::Grid(format!(
                "observation path has {} samples, grid needs {}",
                z.len(),
                grid.k_max() + 1
            )));
        }
        Ok(ObservationPath { z, grid })
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `Z_k - Z_{k-1}` for `k = 1..=k_max`.
    pub fn dz(&self) -> Vec<f64> {
        self.z.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// `Y_{k-1} = (Z_k - Z_{k-1}) / λ` for `k = 1..=k_max`.
pub fn increments(path: &ObservationPath) -> Vec<f64> {
    let lambda = path.grid.lambda();
    path.z.windows(2).map(|w| (w[1] - w[0]) / lambda).collect()
}

/// i.i.d. `N(0, λ)` increments for every grid step, drawn from the noise
/// stream of `seed`.
pub fn brownian_increments(grid: &TimeGrid, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, rng::NOISE_STREAM);
    let sd = grid.lambda().sqrt();
    (0..grid.k_max())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Splits each increment over a step of length `coarse_dt` into `factor`
/// sub-increments by sequential Brownian-bridge sampling, so the refined
/// path passes through every coarse sample of the original.
pub fn refine_brownian<R: Rng + ?Sized>(
    coarse: &[f64],
    coarse_dt: f64,
    factor: usize,
    rng: &mut R,
) -> Vec<f64> {
    assert!(factor >= 1, "refinement factor must be >= 1");
    if factor == 1 {
        return coarse.to_vec();
    }
    let fine_dt = coarse_dt / factor as f64;
    let mut fine = Vec::with_capacity(coarse.len() * factor);
    for &total in coarse {
        let mut remaining = total;
        for s in 0..factor - 1 {
            let left = (factor - s) as f64 * fine_dt;
            let mean = remaining * fine_dt / left;
            let var = fine_dt * (left - fine_dt) / left;
            let x = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
            fine.push(x);
            remaining -= x;
        }
        fine.push(remaining);
    }
    fine
}

/// Euler–Maruyama sampling of `Z` along `path`, drift evaluated at the state
/// occupied at the left end of each step, `Z_0 = 0`.
pub fn simulate_observations(
    model: &ObservationModel,
    path: &StatePath,
    grid: &TimeGrid,
    seed: u64,
) -> Result<ObservationPath> {
    let dv = brownian_increments(grid, seed);
    simulate_observations_with_noise(model, path, grid, &dv)
}

/// As [`simulate_observations`] with caller-supplied Brownian increments
/// `V_r - V_{r-1}`.
pub fn simulate_observations_with_noise(
    model: &ObservationModel,
    path: &StatePath,
    grid: &TimeGrid,
    dv: &[f64],
) -> Result<ObservationPath> {
    if dv.len() != grid.k_max() {
        return Err(Error::Grid(format!(
            "{} noise increments for a grid of {} steps",
            dv.len(),
            grid.k_max()
        )));
    }
    if path.horizon() < grid.end() {
        return Err(Error::Grid(format!(
            "grid ends at {} beyond the state path horizon {}",
            grid.end(),
            path.horizon()
        )));
    }
    if let Some(&bad) = path.visited_states().iter().find(|&&s| s >= model.dim()) {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: bad + 1,
        });
    }
    let lambda = grid.lambda();
    let h = model.h_values();
    let mut z = Vec::with_capacity(grid.k_max() + 1);
    z.push(0.0);
    let mut current = 0.0;
    for (r, dv_r) in dv.iter().enumerate() {
        let t_prev = grid.time(r);
        let state = path.state_at(t_prev)?;
        current += h[state] * lambda + model.sigma_at(t_prev) * dv_r;
        z.push(current);
    }
    ObservationPath::new(z, *grid)
}
