//! Seeded experiments comparing the Wonham Euler–Maruyama reference with the
//! proximal recursion on one shared realization of the chain and the noise.

mod config;
pub mod csv;

use std::time::{Duration, Instant};

pub use config::{parse_list, parse_number, Experiment, ExperimentConfig, SensingSpec};

use crate::ctmc::{sample_path, StatePath};
use crate::error::{Error, Result};
use crate::observation::{
    brownian_increments, refine_brownian, simulate_observations_with_noise, ObservationPath,
    SigmaSchedule, TimeGrid,
};
use crate::proximal::{proximal_run, PriorMethod};
use crate::rng;
use crate::simplex::{check_dim, MetricMode, ProbabilityVector};
use crate::wonham::{wonham_em_run, PosteriorTrajectory};

const EXAMPLE1_Q: [f64; 9] = [-1.0, 0.5, 0.5, 2.0, -2.0, 0.0, 3.0, 0.0, -3.0];
const EXAMPLE2_Q: [f64; 9] = [-5.0, 3.0, 2.0, 4.0, -10.0, 6.0, 3.0, 4.0, -7.0];

/// The two three-state examples on `{-1, 0, 1}` with `h(a) = 0.01 a`,
/// `σ_V = 0.01`, `λ = 1e-3`, `t ∈ [0, 1]` and a uniform start. Example 1 is
/// reversible and uses the resolvent prior; example 2 is not and uses Euler.
pub fn builtin_example(id: u32) -> Result<ExperimentConfig> {
    let (q, prior_method) = match id {
        1 => (EXAMPLE1_Q, PriorMethod::Resolvent),
        2 => (EXAMPLE2_Q, PriorMethod::Euler),
        other => return Err(Error::Config(format!("unknown builtin example {other} (expected 1 or 2)"))),
    };
    Ok(ExperimentConfig {
        states: vec![-1.0, 0.0, 1.0],
        q: q.to_vec(),
        sensing: SensingSpec::Linear { gain: 0.01 },
        sigma: SigmaSchedule::Constant(0.01),
        lambda: 1e-3,
        t_final: 1.0,
        pi0: ProbabilityVector::uniform(3),
        prior_method,
        metric_mode: MetricMode::Inverse,
        seed: 1,
        output_path: None,
    })
}

/// `X̂ = Σ a_i p_i`.
pub fn conditional_expectation(p: &ProbabilityVector, states: &[f64]) -> Result<f64> {
    check_dim(states.len(), p.len())?;
    Ok(p.as_slice().iter().zip(states).map(|(pi, a)| pi * a).sum())
}

/// Reference-vs-proximal error summary; bitwise reproducible for a config.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// `max_k max_i |ref_k(i) - prox_k(i)|`
    pub sup_error: f64,
    /// `max_k |ref_k(i) - prox_k(i)|` per component
    pub component_max_error: Vec<f64>,
    /// `max_i |ref_K(i) - prox_K(i)|` at the last grid point
    pub final_error: f64,
    pub xhat_reference: Vec<f64>,
    pub xhat_proximal: Vec<f64>,
}

/// Wall-clock per phase; informational only.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub simulate: Duration,
    pub reference: Duration,
    pub proximal: Duration,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub states: Vec<f64>,
    pub state_path: StatePath,
    pub obs: ObservationPath,
    pub reference: PosteriorTrajectory,
    pub proximal: PosteriorTrajectory,
    pub metrics: RunMetrics,
    pub timings: PhaseTimings,
}

impl FilterRun {
    /// State value occupied at grid point `k`.
    pub fn state_value_at(&self, k: usize) -> Result<f64> {
        state_value_at(&self.states, &self.state_path, &self.obs, k)
    }
}

/// The chain path and observation path of a configuration, without filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub states: Vec<f64>,
    pub state_path: StatePath,
    pub obs: ObservationPath,
}

impl Simulation {
    pub fn state_value_at(&self, k: usize) -> Result<f64> {
        state_value_at(&self.states, &self.state_path, &self.obs, k)
    }
}

fn state_value_at(states: &[f64], path: &StatePath, obs: &ObservationPath, k: usize) -> Result<f64> {
    let t = obs.grid().time(k).min(path.horizon());
    Ok(states[path.state_at(t)?])
}

pub fn compute_metrics(
    reference: &PosteriorTrajectory,
    proximal: &PosteriorTrajectory,
    states: &[f64],
) -> Result<RunMetrics> {
    let m = states.len();
    let mut component_max_error = vec![0.0f64; m];
    for (a, b) in reference.probabilities.iter().zip(&proximal.probabilities) {
        for i in 0..m {
            component_max_error[i] = component_max_error[i].max((a[i] - b[i]).abs());
        }
    }
    let xhat = |t: &PosteriorTrajectory| -> Result<Vec<f64>> {
        t.probabilities
            .iter()
            .map(|p| conditional_expectation(p, states))
            .collect()
    };
    Ok(RunMetrics {
        sup_error: component_max_error.iter().copied().fold(0.0, f64::max),
        component_max_error,
        final_error: reference.last().sup_distance(proximal.last()),
        xhat_reference: xhat(reference)?,
        xhat_proximal: xhat(proximal)?,
    })
}

/// The chain path for `exp`, long enough to cover `horizon`.
fn simulate_chain(exp: &Experiment, horizon: f64) -> Result<StatePath> {
    // sample_path needs a positive horizon; a zero-length grid only reads X(0)
    let horizon = if horizon > 0.0 { horizon } else { exp.grid.lambda() };
    sample_path(&exp.chain, &exp.pi0, horizon, exp.seed)
}

struct Filtered {
    obs: ObservationPath,
    reference: PosteriorTrajectory,
    proximal: PosteriorTrajectory,
    timings: PhaseTimings,
}

fn filter_on(exp: &Experiment, grid: &TimeGrid, path: &StatePath, dv: &[f64]) -> Result<Filtered> {
    let start = Instant::now();
    let obs = simulate_observations_with_noise(&exp.sensing, path, grid, dv)
        .map_err(|e| Error::in_phase("simulate", e))?;
    let simulate = start.elapsed();

    let start = Instant::now();
    let reference = wonham_em_run(&exp.pi0, exp.chain.rate(), &exp.sensing, &obs)
        .map_err(|e| Error::in_phase("reference", e))?;
    let reference_time = start.elapsed();

    let start = Instant::now();
    let proximal = proximal_run(&exp.pi0, exp.chain.rate(), &exp.sensing, &obs, exp.prior_method, &exp.metric)
        .map_err(|e| Error::in_phase("proximal", e))?;
    let proximal_time = start.elapsed();

    Ok(Filtered {
        obs,
        reference,
        proximal,
        timings: PhaseTimings {
            simulate,
            reference: reference_time,
            proximal: proximal_time,
        },
    })
}

/// Simulates one chain path and one observation path from the seed and runs
/// both filters on the same increments.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<FilterRun> {
    let exp = cfg.build()?;
    run_built(&exp)
}

/// Draws the same chain and observation paths that [`run_experiment`] filters.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    let exp = cfg.build()?;
    let state_path = simulate_chain(&exp, exp.grid.end()).map_err(|e| Error::in_phase("simulate", e))?;
    let dv = brownian_increments(&exp.grid, exp.seed);
    let obs = simulate_observations_with_noise(&exp.sensing, &state_path, &exp.grid, &dv)
        .map_err(|e| Error::in_phase("simulate", e))?;
    Ok(Simulation {
        states: exp.chain.states().to_vec(),
        state_path,
        obs,
    })
}

pub fn run_built(exp: &Experiment) -> Result<FilterRun> {
    let start = Instant::now();
    let state_path = simulate_chain(exp, exp.grid.end()).map_err(|e| Error::in_phase("simulate", e))?;
    let dv = brownian_increments(&exp.grid, exp.seed);
    let chain_time = start.elapsed();

    let mut filtered = filter_on(exp, &exp.grid, &state_path, &dv)?;
    filtered.timings.simulate += chain_time;
    let metrics = compute_metrics(&filtered.reference, &filtered.proximal, exp.chain.states())?;
    Ok(FilterRun {
        states: exp.chain.states().to_vec(),
        state_path,
        obs: filtered.obs,
        reference: filtered.reference,
        proximal: filtered.proximal,
        metrics,
        timings: filtered.timings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub sup_error: f64,
}

/// Sup-error between reference and proximal trajectories for each step size
/// on one shared realization. See [`sweep_runs`] for the requirements on
/// `lambdas`.
pub fn lambda_sweep(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    Ok(sweep_runs(cfg, lambdas)?
        .iter()
        .map(|run| SweepRow {
            lambda: run.obs.grid().lambda(),
            sup_error: run.metrics.sup_error,
        })
        .collect())
}

/// One full run per step size, all on the same chain path and the same
/// continuous noise path.
///
/// `lambdas` must be strictly decreasing, each must divide `t_final`, and
/// each must divide the previous one. The first level uses the same noise as
/// [`run_experiment`] at that step size; finer levels are Brownian-bridge
/// refinements of it.
pub fn sweep_runs(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<FilterRun>> {
    if lambdas.is_empty() {
        return Err(Error::Grid("no step sizes given".into()));
    }
    let mut factors = Vec::with_capacity(lambdas.len());
    for w in lambdas.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Grid(format!("step sizes must be strictly decreasing ({} then {})", w[0], w[1])));
        }
        let ratio = w[0] / w[1];
        let factor = ratio.round();
        if (ratio - factor).abs() > 1e-9 * ratio {
            return Err(Error::Grid(format!("step size {} does not nest inside {}", w[1], w[0])));
        }
        factors.push(factor as usize);
    }

    let mut exps = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let level_cfg = ExperimentConfig {
            lambda,
            ..cfg.clone()
        };
        exps.push(level_cfg.build()?);
    }
    let horizon = exps.iter().map(|e| e.grid.end()).fold(0.0, f64::max);
    let path = simulate_chain(&exps[0], horizon).map_err(|e| Error::in_phase("simulate", e))?;

    let mut dv = brownian_increments(&exps[0].grid, cfg.seed);
    let mut runs = Vec::with_capacity(lambdas.len());
    for (level, exp) in exps.iter().enumerate() {
        if level > 0 {
            let mut bridge_rng = rng::stream(cfg.seed, rng::BRIDGE_STREAM_BASE + level as u64);
            dv = refine_brownian(&dv, lambdas[level - 1], factors[level - 1], &mut bridge_rng);
        }
        let filtered = filter_on(exp, &exp.grid, &path, &dv)?;
        let metrics = compute_metrics(&filtered.reference, &filtered.proximal, exp.chain.states())?;
        runs.push(FilterRun {
            states: exp.chain.states().to_vec(),
            state_path: path.clone(),
            obs: filtered.obs,
            reference: filtered.reference,
            proximal: filtered.proximal,
            metrics,
            timings: filtered.timings,
        });
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_examples() {
        let e1 = builtin_example(1).unwrap();
        assert_eq!(&e1.q[0..3], &[-1.0, 0.5, 0.5]);
        assert_eq!(e1.prior_method, PriorMethod::Resolvent);
        let e2 = builtin_example(2).unwrap();
        assert_eq!(&e2.q[3..6], &[4.0, -10.0, 6.0]);
        assert_eq!(e2.prior_method, PriorMethod::Euler);
        assert!(builtin_example(3).is_err());
        e1.build().unwrap();
        e2.build().unwrap();
    }

    #[test]
    fn conditional_expectation_examples() {
        let states = [-1.0, 0.0, 1.0];
        assert_eq!(conditional_expectation(&ProbabilityVector::vertex(3, 0), &states).unwrap(), -1.0);
        assert!(conditional_expectation(&ProbabilityVector::uniform(3), &states).unwrap().abs() < 1e-16);
        let p = ProbabilityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!((conditional_expectation(&p, &states).unwrap() - 0.3).abs() < 1e-16);
    }

    #[test]
    fn zero_horizon_run() {
        let cfg = ExperimentConfig {
            t_final: 0.0,
            ..builtin_example(1).unwrap()
        };
        let run = run_experiment(&cfg).unwrap();
        assert_eq!(run.reference.probabilities, vec![cfg.pi0.clone()]);
        assert_eq!(run.proximal.probabilities, vec![cfg.pi0.clone()]);
        assert_eq!(run.metrics.sup_error, 0.0);
        assert_eq!(run.metrics.final_error, 0.0);
    }

    #[test]
    fn sweep_rejects_bad_lambda_lists() {
        let cfg = builtin_example(1).unwrap();
        assert!(lambda_sweep(&cfg, &[]).is_err());
        assert!(lambda_sweep(&cfg, &[1e-3, 1e-2]).is_err());
        assert!(lambda_sweep(&cfg, &[1e-2, 4e-3]).is_err());
        assert!(lambda_sweep(&cfg, &[0.3]).is_err());
    }
}
