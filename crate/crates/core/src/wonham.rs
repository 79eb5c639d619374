//! Reference posterior computations: Euler–Maruyama integration of the
//! Wonham filtering SDE
//!
//! ```text
//! dπ = π Q dt + σ_V⁻² π (H - ĥ I) (dZ - ĥ dt),   ĥ = Σ h(a_i) π_i
//! ```
//!
//! and its closed-form solution when `Q = 0`.

use crate::ctmc::RateMatrix;
use crate::error::{Error, Result};
use crate::observation::{ObservationModel, ObservationPath, TimeGrid};
use crate::simplex::{check_dim, normalize, ProbabilityVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryMethod {
    WonhamEm,
    Proximal,
    ZeroDynamicsClosedForm,
}

/// Per-run numerical health record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunDiagnostics {
    /// Smallest entry seen before any clamping, over all steps.
    pub min_raw_entry: f64,
    /// Steps whose raw output had a negative entry that was clamped.
    pub clamped_steps: usize,
    /// Largest total negative mass removed by clamping in one step.
    pub max_clamp_deficit: f64,
}

impl Default for RunDiagnostics {
    fn default() -> Self {
        RunDiagnostics {
            min_raw_entry: f64::INFINITY,
            clamped_steps: 0,
            max_clamp_deficit: 0.0,
        }
    }
}

impl RunDiagnostics {
    pub(crate) fn record_raw(&mut self, raw: &[f64]) {
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        self.min_raw_entry = self.min_raw_entry.min(min);
        let deficit: f64 = raw.iter().filter(|x| **x < 0.0).map(|x| -x).sum();
        if deficit > 0.0 {
            self.clamped_steps += 1;
            self.max_clamp_deficit = self.max_clamp_deficit.max(deficit);
        }
    }
}

/// Posterior probabilities at every grid point, `probabilities[k]` at `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTrajectory {
    pub probabilities: Vec<ProbabilityVector>,
    pub grid: TimeGrid,
    pub method: TrajectoryMethod,
    pub diagnostics: RunDiagnostics,
}

impl PosteriorTrajectory {
    pub fn last(&self) -> &ProbabilityVector {
        self.probabilities.last().expect("trajectory holds at least p0")
    }

    /// `max_k max_i |self_k(i) - other_k(i)|`.
    pub fn sup_distance(&self, other: &PosteriorTrajectory) -> f64 {
        self.probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(a, b)| a.sup_distance(b))
            .fold(0.0, f64::max)
    }
}

/// `ĥ = Σ_i h(a_i) p_i`.
pub fn h_hat(p: &ProbabilityVector, model: &ObservationModel) -> Result<f64> {
    check_dim(model.dim(), p.len())?;
    Ok(p.as_slice().iter().zip(model.h_values()).map(|(pi, h)| pi * h).sum())
}

/// One Euler–Maruyama step of the Wonham SDE over `[t, t + λ]` with
/// observation increment `dz`. Negative entries are clamped and the result
/// renormalized.
pub fn wonham_em_step(
    p: &ProbabilityVector,
    q: &RateMatrix,
    model: &ObservationModel,
    dz: f64,
    t: f64,
    lambda: f64,
) -> Result<ProbabilityVector> {
    check_dim(q.dim(), p.len())?;
    check_dim(model.dim(), p.len())?;
    TimeGrid::new(lambda, 1)?.check_stability(q)?;
    em_step(p, q, model, dz, t, lambda, &mut RunDiagnostics::default())
}

fn em_step(
    p: &ProbabilityVector,
    q: &RateMatrix,
    model: &ObservationModel,
    dz: f64,
    t: f64,
    lambda: f64,
    diagnostics: &mut RunDiagnostics,
) -> Result<ProbabilityVector> {
    let hhat = h_hat(p, model)?;
    let sigma = model.sigma_at(t);
    let gain = (dz - hhat * lambda) / (sigma * sigma);
    let drift = q.left_mul(p.as_slice());
    let raw: Vec<f64> = p
        .as_slice()
        .iter()
        .zip(&drift)
        .zip(model.h_values())
        .map(|((pi, dpi), h)| pi + lambda * dpi + pi * (h - hhat) * gain)
        .collect();
    diagnostics.record_raw(&raw);

    let clamped: Vec<f64> = raw.iter().map(|x| x.max(0.0)).collect();
    let sum: f64 = clamped.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::StepFailure(format!(
            "Euler-Maruyama output has mass {sum} after clamping (raw {raw:?}, dz {dz:e}); step size too coarse for this noise realization"
        )));
    }
    normalize(&clamped)
}

/// Iterates [`wonham_em_step`] over every increment of `obs`, starting at `p0`.
pub fn wonham_em_run(
    p0: &ProbabilityVector,
    q: &RateMatrix,
    model: &ObservationModel,
    obs: &ObservationPath,
) -> Result<PosteriorTrajectory> {
    check_dim(q.dim(), p0.len())?;
    check_dim(model.dim(), p0.len())?;
    let grid = *obs.grid();
    grid.check_stability(q)?;
    let mut diagnostics = RunDiagnostics::default();
    let mut probabilities = Vec::with_capacity(grid.k_max() + 1);
    probabilities.push(p0.clone());
    for (r, dz) in obs.dz().into_iter().enumerate() {
        let prev = &probabilities[r];
        let next = em_step(prev, q, model, dz, grid.time(r), grid.lambda(), &mut diagnostics)
            .map_err(|e| Error::at_step(r + 1, e))?;
        probabilities.push(next);
    }
    Ok(PosteriorTrajectory {
        probabilities,
        grid,
        method: TrajectoryMethod::WonhamEm,
        diagnostics,
    })
}

/// Exact posterior for a frozen chain (`Q = 0`) from the sampled path:
///
/// ```text
/// p_k(i) ∝ p0(i) exp( h_i Σ_r ΔZ_r / σ²(t_{r-1}) - ½ h_i² Σ_r λ / σ²(t_{r-1}) )
/// ```
///
/// evaluated in the log domain.
pub fn zero_dynamics_closed_form(
    p0: &ProbabilityVector,
    model: &ObservationModel,
    obs: &ObservationPath,
) -> Result<PosteriorTrajectory> {
    check_dim(model.dim(), p0.len())?;
    let grid = *obs.grid();
    let log_p0: Vec<f64> = p0
        .as_slice()
        .iter()
        .map(|x| if *x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
        .collect();
    let mut probabilities = Vec::with_capacity(grid.k_max() + 1);
    probabilities.push(p0.clone());
    let mut dz_integral = 0.0;
    let mut dt_integral = 0.0;
    for (r, dz) in obs.dz().into_iter().enumerate() {
        let sigma = model.sigma_at(grid.time(r));
        let inv_var = 1.0 / (sigma * sigma);
        dz_integral += dz * inv_var;
        dt_integral += grid.lambda() * inv_var;
        let exponents: Vec<f64> = log_p0
            .iter()
            .zip(model.h_values())
            .map(|(lp, h)| lp + h * dz_integral - 0.5 * h * h * dt_integral)
            .collect();
        probabilities.push(softmax(&exponents)?);
    }
    Ok(PosteriorTrajectory {
        probabilities,
        grid,
        method: TrajectoryMethod::ZeroDynamicsClosedForm,
        diagnostics: RunDiagnostics::default(),
    })
}

/// Normalized `exp(x)` with max subtraction; `-∞` entries map to zero.
pub(crate) fn softmax(x: &[f64]) -> Result<ProbabilityVector> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Domain(format!("no finite exponent in {x:?}")));
    }
    let w: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    normalize(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::SigmaSchedule;

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    fn example1() -> RateMatrix {
        RateMatrix::from_row_major(3, &[-1.0, 0.5, 0.5, 2.0, -2.0, 0.0, 3.0, 0.0, -3.0]).unwrap()
    }

    fn example_sensing() -> ObservationModel {
        ObservationModel::linear(&[-1.0, 0.0, 1.0], 0.01, SigmaSchedule::Constant(0.01)).unwrap()
    }

    #[test]
    fn h_hat_examples() {
        let m = example_sensing();
        assert_eq!(h_hat(&ProbabilityVector::vertex(3, 2), &m).unwrap(), 0.01);
        assert!(h_hat(&ProbabilityVector::uniform(3), &m).unwrap().abs() < 1e-18);
        assert!((h_hat(&pv(&[0.2, 0.3, 0.5]), &m).unwrap() - 0.003).abs() < 1e-17);
    }

    #[test]
    fn single_state_posterior_is_trivial() {
        let m = ObservationModel::new(vec![0.3], SigmaSchedule::Constant(0.5)).unwrap();
        let p = ProbabilityVector::vertex(1, 0);
        let out = wonham_em_step(&p, &RateMatrix::zero(1), &m, 0.77, 0.0, 0.01).unwrap();
        assert_eq!(out.as_slice(), &[1.0]);
    }

    #[test]
    fn constant_sensing_without_dynamics_is_inert() {
        let m = ObservationModel::new_unchecked(vec![0.2, 0.2, 0.2], SigmaSchedule::Constant(0.1));
        let p = pv(&[0.2, 0.3, 0.5]);
        let out = wonham_em_step(&p, &RateMatrix::zero(3), &m, 0.05, 0.0, 0.01).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn zero_innovation_leaves_posterior_unchanged() {
        let m = example_sensing();
        let p = pv(&[0.2, 0.3, 0.5]);
        let lambda = 1e-3;
        let dz = h_hat(&p, &m).unwrap() * lambda;
        let out = wonham_em_step(&p, &RateMatrix::zero(3), &m, dz, 0.0, lambda).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn em_step_matches_componentwise_transcription() {
        // Second coding of the update, written term by term:
        // p_k(i) = p(i) + λ Σ_j p(j) Q(j,i) + p(i) (h_i - ĥ)(ΔZ - ĥ λ) / σ².
        let q = example1();
        let m = example_sensing();
        let p = [0.25, 0.35, 0.4];
        let (lambda, dz, sigma) = (1e-3, 4.2e-4, 0.01);
        let h = [-0.01, 0.0, 0.01];
        let qm = [[-1.0, 0.5, 0.5], [2.0, -2.0, 0.0], [3.0, 0.0, -3.0]];
        let hh = p[0] * h[0] + p[1] * h[1] + p[2] * h[2];
        let mut expected = [0.0; 3];
        for i in 0..3 {
            let mut flow = 0.0;
            for j in 0..3 {
                flow += p[j] * qm[j][i];
            }
            expected[i] = p[i] + lambda * flow + p[i] * (h[i] - hh) * (dz - hh * lambda) / (sigma * sigma);
        }
        let out = wonham_em_step(&pv(&p), &q, &m, dz, 0.0, lambda).unwrap();
        for i in 0..3 {
            assert!((out[i] - expected[i]).abs() < 1e-15, "{i}: {} vs {}", out[i], expected[i]);
        }
    }

    #[test]
    fn huge_innovation_is_clamped_or_fails() {
        let m = example_sensing();
        let p = pv(&[0.2, 0.3, 0.5]);
        // dz of 10 noise standard deviations drives state 0 negative
        let out = wonham_em_step(&p, &RateMatrix::zero(3), &m, 0.5, 0.0, 1e-3).unwrap();
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn em_run_on_empty_grid() {
        let grid = TimeGrid::new(1e-3, 0).unwrap();
        let obs = ObservationPath::new(vec![0.0], grid).unwrap();
        let p0 = pv(&[0.2, 0.3, 0.5]);
        let traj = wonham_em_run(&p0, &example1(), &example_sensing(), &obs).unwrap();
        assert_eq!(traj.probabilities, vec![p0]);
    }

    #[test]
    fn em_run_clamps_and_reports_failing_step() {
        let grid = TimeGrid::new(1e-3, 3).unwrap();
        let m = ObservationModel::new(vec![-1.0, 1.0], SigmaSchedule::Constant(0.01)).unwrap();
        let p0 = pv(&[0.5, 0.5]);

        let obs = ObservationPath::new(vec![0.0, 0.0, 1e3, 1e3], grid).unwrap();
        let traj = wonham_em_run(&p0, &RateMatrix::zero(2), &m, &obs).unwrap();
        assert_eq!(traj.diagnostics.clamped_steps, 1);
        assert!(traj.diagnostics.min_raw_entry < 0.0);

        let obs = ObservationPath::new(vec![0.0, 0.0, f64::INFINITY, 0.0], grid).unwrap();
        let err = wonham_em_run(&p0, &RateMatrix::zero(2), &m, &obs).unwrap_err();
        assert!(matches!(err, Error::AtStep { step: 2, .. }));
        assert_eq!(err.kind(), crate::ErrorKind::Numerical);
    }

    #[test]
    fn closed_form_trivial_cases() {
        let grid = TimeGrid::new(1e-2, 4).unwrap();
        let obs = ObservationPath::new(vec![0.0, 0.1, -0.2, 0.05, 0.3], grid).unwrap();
        let m1 = ObservationModel::new(vec![2.0], SigmaSchedule::Constant(0.3)).unwrap();
        let one = zero_dynamics_closed_form(&ProbabilityVector::vertex(1, 0), &m1, &obs).unwrap();
        assert!(one.probabilities.iter().all(|p| p.as_slice() == [1.0]));
        let p0 = pv(&[0.2, 0.3, 0.5]);
        let traj = zero_dynamics_closed_form(&p0, &example_sensing(), &obs).unwrap();
        assert_eq!(traj.probabilities[0], p0);
        assert_eq!(traj.probabilities.len(), 5);
    }

    #[test]
    fn closed_form_survives_large_exponents() {
        let grid = TimeGrid::new(1e-3, 2).unwrap();
        let obs = ObservationPath::new(vec![0.0, 50.0, 100.0], grid).unwrap();
        let traj = zero_dynamics_closed_form(&ProbabilityVector::uniform(3), &example_sensing(), &obs).unwrap();
        assert!((traj.last()[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let x = [0.3, -1.2, 2.5];
        let a = softmax(&x).unwrap();
        let b = softmax(&x.map(|v| v + 123.0)).unwrap();
        assert!(a.sup_distance(&b) < 1e-15);
    }
}
