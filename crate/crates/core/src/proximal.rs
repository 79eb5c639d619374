//! Proximal splitting of the Wonham filter.
//!
//! Each grid step composes two proximal maps on the simplex:
//!
//! * prior: `p⁻ = argmin ½‖p - p⁺_prev‖²_π∞ + λ Φ⁻(p)` with
//!   `Φ⁻(p) = -½ ⟨pQ, p⟩_π∞`, whose minimizer is the resolvent
//!   `p⁺_prev (I - λQ)^{-1}` when `Q` is reversible. The explicit Euler map
//!   `p⁺_prev (I + λQ)` and the exact semigroup `p⁺_prev exp(λQ)` are
//!   available as alternatives; Euler is the one to use for non-reversible
//!   chains.
//! * posterior: `p⁺ = argmin D_KL(p ‖ p⁻) + ⟨c, p⟩` with per-state cost
//!   `c(i) = λ (Y - h(a_i))² / (2σ²)`, solved in closed form as
//!   `p⁻ ⊙ exp(-c)` normalized.
//!
//! The `numeric_prox_oracle_*` functions minimize the same objectives
//! iteratively without using the closed forms; they exist to certify them.

use nalgebra::DMatrix;

use crate::ctmc::{detailed_balance_residual, RateMatrix};
use crate::error::{Error, Result};
use crate::linalg::{expm, row_times, RowSolver};
use crate::observation::{ObservationModel, ObservationPath, TimeGrid};
use crate::simplex::{
    check_dim, kl_divergence, normalize, weighted_inner, ProbabilityVector, WeightedMetric,
};
use crate::wonham::{PosteriorTrajectory, RunDiagnostics, TrajectoryMethod};

/// Detailed-balance tolerance for the resolvent prior, scaled by
/// `max(1, max|Q_ii|)`.
pub const REVERSIBILITY_TOL: f64 = 1e-10;

/// Nonnegative per-state cost of one posterior step.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if let Some(i) = c.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!(
                "cost entry {i} must be finite and >= 0, got {}",
                c[i]
            )));
        }
        Ok(CostVector(c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `c(i) = λ (y - h(a_i))² / (2 σ_V(t)²)`.
pub fn cost_vector(y: f64, model: &ObservationModel, t: f64, lambda: f64) -> Result<CostVector> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("step size must be > 0, got {lambda}")));
    }
    let sigma = model.sigma_at(t);
    let scale = lambda / (2.0 * sigma * sigma);
    CostVector::new(
        model
            .h_values()
            .iter()
            .map(|h| scale * (y - h) * (y - h))
            .collect(),
    )
}

/// `Φ⁺(p) = ⟨c, p⟩ / λ`, the expected squared innovation under `p`.
pub fn phi_plus(p: &ProbabilityVector, c: &CostVector, lambda: f64) -> Result<f64> {
    check_dim(c.len(), p.len())?;
    Ok(dot(p.as_slice(), c.as_slice()) / lambda)
}

/// Closed-form entropic proximal step `p⁻ ⊙ exp(-c) / ((p⁻ ⊙ exp(-c)) 1)`.
///
/// The smallest cost on the support of `p⁻` is subtracted first; the
/// normalized result is unchanged and the cheapest supported entry keeps
/// weight `p⁻_i > 0`, so the weights cannot all underflow.
pub fn posterior_prox_step(p_minus: &ProbabilityVector, c: &CostVector) -> Result<ProbabilityVector> {
    check_dim(c.len(), p_minus.len())?;
    let cmin = p_minus
        .as_slice()
        .iter()
        .zip(c.as_slice())
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, ci)| *ci)
        .fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = p_minus
        .as_slice()
        .iter()
        .zip(c.as_slice())
        .map(|(p, ci)| if *p > 0.0 { p * (cmin - ci).exp() } else { 0.0 })
        .collect();
    normalize(&w)
}

/// `D_KL(p ‖ p⁻) + ⟨c, p⟩`.
pub fn kl_prox_objective(p: &ProbabilityVector, p_minus: &ProbabilityVector, c: &CostVector) -> Result<f64> {
    check_dim(c.len(), p.len())?;
    Ok(kl_divergence(p, p_minus)? + dot(p.as_slice(), c.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorMethod {
    /// `p (I + λQ)`
    Euler,
    /// `p (I - λQ)^{-1}`, the exact minimizer of the quadratic prior problem
    Resolvent,
    /// `p exp(λQ)`
    Expm,
}

impl PriorMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorMethod::Euler => "euler",
            PriorMethod::Resolvent => "resolvent",
            PriorMethod::Expm => "expm",
        }
    }
}

impl std::str::FromStr for PriorMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "euler" => Ok(PriorMethod::Euler),
            "resolvent" => Ok(PriorMethod::Resolvent),
            "expm" => Ok(PriorMethod::Expm),
            other => Err(Error::Config(format!(
                "unknown prior method {other:?} (expected euler|resolvent|expm)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
enum PriorKind {
    Identity,
    Matrix(DMatrix<f64>),
    Solve(RowSolver),
}

/// A prior step prepared once for fixed `(Q, λ, method)` and applied at
/// every grid step.
#[derive(Debug, Clone)]
pub struct PriorOperator {
    kind: PriorKind,
    dim: usize,
}

impl PriorOperator {
    pub fn new(q: &RateMatrix, lambda: f64, method: PriorMethod, metric: &WeightedMetric) -> Result<Self> {
        let m = q.dim();
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("step size must be >= 0, got {lambda}")));
        }
        if lambda == 0.0 || q.is_zero() {
            return Ok(PriorOperator {
                kind: PriorKind::Identity,
                dim: m,
            });
        }
        let product = lambda * q.max_exit_rate();
        let stable = || -> Result<()> {
            if product >= 1.0 {
                return Err(Error::Unstable { lambda, product });
            }
            Ok(())
        };
        let eye = DMatrix::<f64>::identity(m, m);
        let kind = match method {
            PriorMethod::Euler => {
                stable()?;
                PriorKind::Matrix(&eye + q.matrix() * lambda)
            }
            PriorMethod::Resolvent => {
                stable()?;
                check_dim(m, metric.dim())?;
                let residual = detailed_balance_residual(q, metric.weights())?;
                if residual > REVERSIBILITY_TOL * q.max_exit_rate().max(1.0) {
                    return Err(Error::NonReversible { residual });
                }
                PriorKind::Solve(RowSolver::new(&(&eye - q.matrix() * lambda))?)
            }
            PriorMethod::Expm => PriorKind::Matrix(expm(&(q.matrix() * lambda))),
        };
        Ok(PriorOperator { kind, dim: m })
    }

    /// The one-step prior without any simplex validation.
    pub fn apply_raw(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, p.len())?;
        match &self.kind {
            PriorKind::Identity => Ok(p.to_vec()),
            PriorKind::Matrix(a) => Ok(row_times(p, a)),
            PriorKind::Solve(lu) => lu.solve(p),
        }
    }

    pub fn apply(&self, p: &ProbabilityVector) -> Result<ProbabilityVector> {
        let raw = self.apply_raw(p.as_slice())?;
        ProbabilityVector::new(raw).map_err(|e| Error::StepFailure(format!("prior step left the simplex: {e}")))
    }
}

/// One prior step `p⁺_{k-1} ↦ p⁻_k`.
pub fn prior_prox_step(
    p_plus_prev: &ProbabilityVector,
    q: &RateMatrix,
    lambda: f64,
    method: PriorMethod,
    metric: &WeightedMetric,
) -> Result<ProbabilityVector> {
    check_dim(q.dim(), p_plus_prev.len())?;
    PriorOperator::new(q, lambda, method, metric)?.apply(p_plus_prev)
}

/// `Φ⁻(p) = -½ ⟨pQ, p⟩_π∞`.
pub fn phi_minus(p: &ProbabilityVector, q: &RateMatrix, metric: &WeightedMetric) -> Result<f64> {
    check_dim(q.dim(), p.len())?;
    let pq = q.left_mul(p.as_slice());
    Ok(-0.5 * weighted_inner(&pq, p.as_slice(), metric)?)
}

/// `½‖p - p_prev‖²_π∞ + λ Φ⁻(p)` for any real row vector `p`.
pub fn quadratic_prox_objective(
    p: &[f64],
    p_prev: &ProbabilityVector,
    q: &RateMatrix,
    lambda: f64,
    metric: &WeightedMetric,
) -> Result<f64> {
    check_dim(q.dim(), p.len())?;
    check_dim(q.dim(), p_prev.len())?;
    let diff: Vec<f64> = p.iter().zip(p_prev.as_slice()).map(|(a, b)| a - b).collect();
    let pq = q.left_mul(p);
    Ok(0.5 * weighted_inner(&diff, &diff, metric)? - 0.5 * lambda * weighted_inner(&pq, p, metric)?)
}

/// `‖(p - p_prev) W - λ p Q W‖_∞` with `W` the metric's diagonal Gram
/// matrix; zero at the resolvent output for either metric mode.
pub fn resolvent_stationarity_residual(
    p: &ProbabilityVector,
    p_prev: &ProbabilityVector,
    q: &RateMatrix,
    lambda: f64,
    metric: &WeightedMetric,
) -> Result<f64> {
    check_dim(q.dim(), p.len())?;
    check_dim(q.dim(), p_prev.len())?;
    check_dim(q.dim(), metric.dim())?;
    let pq = q.left_mul(p.as_slice());
    Ok((0..p.len())
        .map(|i| ((p[i] - p_prev[i] - lambda * pq[i]) * metric.diag(i)).abs())
        .fold(0.0, f64::max))
}

/// Prior then posterior step over `[t, t + λ]`, returning `(p⁻, p⁺)`.
#[allow(clippy::too_many_arguments)]
pub fn composite_step(
    p_plus_prev: &ProbabilityVector,
    q: &RateMatrix,
    model: &ObservationModel,
    dz: f64,
    t: f64,
    lambda: f64,
    method: PriorMethod,
    metric: &WeightedMetric,
) -> Result<(ProbabilityVector, ProbabilityVector)> {
    check_dim(q.dim(), p_plus_prev.len())?;
    check_dim(model.dim(), p_plus_prev.len())?;
    let prior = PriorOperator::new(q, lambda, method, metric)?;
    let p_minus = prior.apply(p_plus_prev)?;
    let c = cost_vector(dz / lambda, model, t, lambda)?;
    let p_plus = posterior_prox_step(&p_minus, &c)?;
    Ok((p_minus, p_plus))
}

/// Iterates [`composite_step`] over every increment of `obs`, starting at `p0`.
pub fn proximal_run(
    p0: &ProbabilityVector,
    q: &RateMatrix,
    model: &ObservationModel,
    obs: &ObservationPath,
    method: PriorMethod,
    metric: &WeightedMetric,
) -> Result<PosteriorTrajectory> {
    check_dim(q.dim(), p0.len())?;
    check_dim(model.dim(), p0.len())?;
    let grid: TimeGrid = *obs.grid();
    let lambda = grid.lambda();
    let prior = PriorOperator::new(q, lambda, method, metric)?;
    let mut diagnostics = RunDiagnostics::default();
    let mut probabilities = Vec::with_capacity(grid.k_max() + 1);
    probabilities.push(p0.clone());
    for (r, dz) in obs.dz().into_iter().enumerate() {
        let mut step = || -> Result<ProbabilityVector> {
            let raw = prior.apply_raw(probabilities[r].as_slice())?;
            diagnostics.record_raw(&raw);
            let p_minus = ProbabilityVector::new(raw)
                .map_err(|e| Error::StepFailure(format!("prior step left the simplex: {e}")))?;
            let c = cost_vector(dz / lambda, model, grid.time(r), lambda)?;
            posterior_prox_step(&p_minus, &c)
        };
        let next = step().map_err(|e| Error::at_step(r + 1, e))?;
        probabilities.push(next);
    }
    Ok(PosteriorTrajectory {
        probabilities,
        grid,
        method: TrajectoryMethod::Proximal,
        diagnostics,
    })
}

const ORACLE_MAX_DIM: usize = 8;
const ORACLE_MAX_ITERS: usize = 100_000;

/// Minimizes `D_KL(p ‖ p⁻) + ⟨c, p⟩` by entropic mirror descent with step
/// halving, stopping once the Lagrangian gradient is constant on the support
/// to within `tol`.
pub fn numeric_prox_oracle_kl(p_minus: &ProbabilityVector, c: &CostVector, tol: f64) -> Result<ProbabilityVector> {
    let m = p_minus.len();
    check_dim(m, c.len())?;
    if m > ORACLE_MAX_DIM {
        return Err(Error::Domain(format!("oracle supports m <= {ORACLE_MAX_DIM}, got {m}")));
    }
    let support: Vec<usize> = (0..m).filter(|&i| p_minus[i] > 0.0).collect();
    let objective = |p: &[f64]| -> f64 {
        support
            .iter()
            .filter(|&&i| p[i] > 0.0)
            .map(|&i| p[i] * (p[i] / p_minus[i]).ln() + c.as_slice()[i] * p[i])
            .sum()
    };
    let gradient = |p: &[f64]| -> Vec<f64> {
        support
            .iter()
            .map(|&i| (p[i] / p_minus[i]).ln() + 1.0 + c.as_slice()[i])
            .collect()
    };

    let mut p = vec![0.0; m];
    for &i in &support {
        p[i] = 1.0 / support.len() as f64;
    }
    let mut eta = 0.5;
    let mut residual = f64::INFINITY;
    for _ in 0..ORACLE_MAX_ITERS {
        let g = gradient(&p);
        let mean: f64 = support.iter().zip(&g).map(|(&i, gi)| p[i] * gi).sum();
        residual = g.iter().map(|gi| (gi - mean).abs()).fold(0.0, f64::max);
        if residual <= tol {
            return ProbabilityVector::new(p);
        }
        let f_old = objective(&p);
        loop {
            let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
            let mut trial = vec![0.0; m];
            for (&i, gi) in support.iter().zip(&g) {
                trial[i] = p[i] * (-eta * (gi - gmin)).exp();
            }
            let s: f64 = trial.iter().sum();
            trial.iter_mut().for_each(|x| *x /= s);
            if objective(&trial) <= f_old + 1e-15 * f_old.abs().max(1.0) || eta < 1e-12 {
                p = trial;
                break;
            }
            eta *= 0.5;
        }
    }
    Err(Error::NonConvergence {
        iterations: ORACLE_MAX_ITERS,
        residual,
    })
}

/// Minimizes `½‖p - p_prev‖²_π∞ + λ Φ⁻(p)` over the affine hull `p 1 = 1`
/// by metric-preconditioned projected gradient with backtracking, then
/// checks the minimizer is interior. Works for either metric mode and never
/// forms `(I - λQ)^{-1}`.
pub fn numeric_prox_oracle_quadratic(
    p_prev: &ProbabilityVector,
    q: &RateMatrix,
    lambda: f64,
    metric: &WeightedMetric,
    tol: f64,
) -> Result<ProbabilityVector> {
    let m = q.dim();
    check_dim(m, p_prev.len())?;
    check_dim(m, metric.dim())?;
    if m > ORACLE_MAX_DIM {
        return Err(Error::Domain(format!("oracle supports m <= {ORACLE_MAX_DIM}, got {m}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("step size must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(p_prev.clone());
    }
    let w: Vec<f64> = (0..m).map(|i| metric.diag(i)).collect();
    let inv_w_sum: f64 = w.iter().map(|x| 1.0 / x).sum();
    let objective = |p: &[f64]| quadratic_prox_objective(p, p_prev, q, lambda, metric);

    let mut p = p_prev.as_slice().to_vec();
    let mut residual = f64::INFINITY;
    for _ in 0..ORACLE_MAX_ITERS {
        // Euclidean gradient: (p - p_prev) W - λ/2 (pQ W + p W Qᵀ)
        let pq = q.left_mul(&p);
        let grad: Vec<f64> = (0..m)
            .map(|i| {
                let pwqt: f64 = (0..m).map(|j| p[j] * w[j] * q.get(i, j)).sum();
                (p[i] - p_prev[i]) * w[i] - 0.5 * lambda * (pq[i] * w[i] + pwqt)
            })
            .collect();
        let mut dir: Vec<f64> = grad.iter().zip(&w).map(|(g, wi)| g / wi).collect();
        let alpha = dir.iter().sum::<f64>() / inv_w_sum;
        dir.iter_mut().zip(&w).for_each(|(d, wi)| *d -= alpha / wi);
        residual = dir.iter().map(|d| d.abs()).fold(0.0, f64::max);
        if residual <= tol {
            let min_entry = p.iter().copied().fold(f64::INFINITY, f64::min);
            if min_entry <= 0.0 {
                return Err(Error::NotInterior { min_entry });
            }
            let sum: f64 = p.iter().sum();
            return ProbabilityVector::new(p.iter().map(|x| x / sum).collect());
        }
        let f_old = objective(&p)?;
        let mut eta = 1.0;
        loop {
            let trial: Vec<f64> = p.iter().zip(&dir).map(|(x, d)| x - eta * d).collect();
            if objective(&trial)? <= f_old + 1e-15 * f_old.abs().max(1.0) || eta < 1e-12 {
                p = trial;
                break;
            }
            eta *= 0.5;
        }
    }
    Err(Error::NonConvergence {
        iterations: ORACLE_MAX_ITERS,
        residual,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
