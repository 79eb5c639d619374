//! Finite-state continuous-time Markov chains.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::linalg::{expm, row_times};
use crate::rng;
use crate::simplex::{check_dim, ProbabilityVector};

/// Row-sum tolerance, scaled by `max(1, max |Q_ij|)`.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Generator of a time-homogeneous chain: nonnegative off-diagonal rates and
/// zero row sums. The diagonal may be zero (a frozen chain is allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    q: DMatrix<f64>,
}

impl RateMatrix {
    pub fn validate(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::InvalidRateMatrix(format!(
                "matrix is {}x{}, not square",
                q.nrows(),
                q.ncols()
            )));
        }
        let m = q.nrows();
        if m == 0 {
            return Err(Error::InvalidRateMatrix("matrix is empty".into()));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidRateMatrix("non-finite entry".into()));
        }
        let tol = ROW_SUM_TOL * q.amax().max(1.0);
        for i in 0..m {
            for j in 0..m {
                if i != j && q[(i, j)] < 0.0 {
                    return Err(Error::InvalidRateMatrix(format!(
                        "negative off-diagonal rate Q[{i}][{j}] = {}",
                        q[(i, j)]
                    )));
                }
            }
            let row_sum: f64 = q.row(i).iter().sum();
            if row_sum.abs() > tol {
                return Err(Error::InvalidRateMatrix(format!(
                    "row {i} sums to {row_sum:e}, not 0"
                )));
            }
        }
        Ok(RateMatrix { q })
    }

    /// Builds and validates an `m x m` matrix from row-major entries.
    pub fn from_row_major(m: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != m * m {
            return Err(Error::Dimension {
                expected: m * m,
                found: entries.len(),
            });
        }
        Self::validate(DMatrix::from_row_slice(m, m, entries))
    }

    pub fn zero(m: usize) -> Self {
        RateMatrix {
            q: DMatrix::zeros(m, m),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[(i, j)]
    }

    /// `max_i |Q_ii|`, the fastest exit rate.
    pub fn max_exit_rate(&self) -> f64 {
        self.q.diagonal().iter().map(|d| d.abs()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.q.iter().all(|x| *x == 0.0)
    }

    /// `p Q` for a row vector `p`.
    pub fn left_mul(&self, p: &[f64]) -> Vec<f64> {
        row_times(p, &self.q)
    }
}

/// The stationary distribution of an irreducible chain.
///
/// Solves `[Qᵀ; 1ᵀ] πᵀ = [0; 1]` in the least-squares sense. Fails if the
/// null space of `Q` is not one-dimensional or if the solution has a
/// non-positive entry (transient states).
pub fn stationary_distribution(q: &RateMatrix) -> Result<ProbabilityVector> {
    let m = q.dim();
    if m == 1 {
        return Ok(ProbabilityVector::vertex(1, 0));
    }
    let svd = q.matrix().clone().svd(false, false);
    let smax = svd.singular_values.max();
    let null_dim = svd
        .singular_values
        .iter()
        .filter(|s| **s <= 1e-10 * smax.max(1.0))
        .count();
    if null_dim != 1 {
        return Err(Error::Reducible(format!(
            "null space of Q has dimension {null_dim}"
        )));
    }

    let mut a = DMatrix::<f64>::zeros(m + 1, m);
    a.view_mut((0, 0), (m, m)).copy_from(&q.matrix().transpose());
    a.row_mut(m).fill(1.0);
    let mut b = nalgebra::DVector::<f64>::zeros(m + 1);
    b[m] = 1.0;
    let pi = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Singular(e.to_string()))?;

    if let Some(i) = pi.iter().position(|x| *x <= 1e-14) {
        return Err(Error::Reducible(format!(
            "stationary mass of state {i} is {:e}; chain is not irreducible",
            pi[i]
        )));
    }
    let sum: f64 = pi.iter().sum();
    ProbabilityVector::new(pi.iter().map(|x| x / sum).collect())
}

/// `max_{i,j} |π_i Q_ij - π_j Q_ji|`.
pub fn detailed_balance_residual(q: &RateMatrix, pi: &ProbabilityVector) -> Result<f64> {
    check_dim(q.dim(), pi.len())?;
    let m = q.dim();
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in (i + 1)..m {
            let r = (pi[i] * q.get(i, j) - pi[j] * q.get(j, i)).abs();
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Detailed balance `π_i Q_ij = π_j Q_ji` within `tol` for every pair.
pub fn is_reversible(q: &RateMatrix, pi: &ProbabilityVector, tol: f64) -> Result<bool> {
    Ok(detailed_balance_residual(q, pi)? <= tol)
}

/// The prior after `dt` time units: `p exp(dt Q)`.
pub fn propagate_prior_exact(
    p: &ProbabilityVector,
    q: &RateMatrix,
    dt: f64,
) -> Result<ProbabilityVector> {
    check_dim(q.dim(), p.len())?;
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt must be finite and >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(p.clone());
    }
    let transition = expm(&(q.matrix() * dt));
    ProbabilityVector::new(row_times(p.as_slice(), &transition))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtmcModel {
    states: Vec<f64>,
    rate: RateMatrix,
}

impl CtmcModel {
    pub fn new(states: Vec<f64>, rate: RateMatrix) -> Result<Self> {
        check_dim(rate.dim(), states.len())?;
        if states.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain("state values must be finite".into()));
        }
        for i in 0..states.len() {
            for j in (i + 1)..states.len() {
                if states[i] == states[j] {
                    return Err(Error::Domain(format!(
                        "state values {i} and {j} coincide ({})",
                        states[i]
                    )));
                }
            }
        }
        Ok(CtmcModel { states, rate })
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn rate(&self) -> &RateMatrix {
        &self.rate
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }
}

/// A piecewise-constant, right-continuous realization of the chain on
/// `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    jump_times: Vec<f64>,
    visited_states: Vec<usize>,
    horizon: f64,
}

impl StatePath {
    /// `visited_states[0]` is the initial state; `visited_states[k + 1]` is
    /// entered at `jump_times[k]`.
    pub fn new(jump_times: Vec<f64>, visited_states: Vec<usize>, horizon: f64) -> Result<Self> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("invalid horizon {horizon}")));
        }
        if visited_states.len() != jump_times.len() + 1 {
            return Err(Error::Dimension {
                expected: jump_times.len() + 1,
                found: visited_states.len(),
            });
        }
        let mut prev = 0.0;
        for (k, &t) in jump_times.iter().enumerate() {
            if !(t >= 0.0 && t <= horizon) || (k > 0 && t <= prev) {
                return Err(Error::Domain(format!(
                    "jump time {k} = {t} is out of order or outside [0, {horizon}]"
                )));
            }
            prev = t;
        }
        if visited_states.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("consecutive visited states must differ".into()));
        }
        Ok(StatePath {
            jump_times,
            visited_states,
            horizon,
        })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn visited_states(&self) -> &[usize] {
        &self.visited_states
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.visited_states[0]
    }

    /// State index at time `t`; a jump at exactly `t` has already happened.
    pub fn state_at(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::Domain(format!(
                "time {t} outside path horizon [0, {}]",
                self.horizon
            )));
        }
        let jumps_done = self.jump_times.partition_point(|&s| s <= t);
        Ok(self.visited_states[jumps_done])
    }
}

/// Gillespie simulation of the chain on `[0, horizon]`, drawing from the
/// chain stream of `seed`.
pub fn sample_path(
    model: &CtmcModel,
    initial: &ProbabilityVector,
    horizon: f64,
    seed: u64,
) -> Result<StatePath> {
    let mut rng = rng::stream(seed, rng::CHAIN_STREAM);
    sample_path_with(model, initial, horizon, &mut rng)
}

pub fn sample_path_with<R: Rng + ?Sized>(
    model: &CtmcModel,
    initial: &ProbabilityVector,
    horizon: f64,
    rng: &mut R,
) -> Result<StatePath> {
    check_dim(model.dim(), initial.len())?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!("horizon must be > 0, got {horizon}")));
    }
    let q = model.rate();
    let mut state = draw_index(initial.as_slice(), 1.0, rng);
    let mut jump_times = Vec::new();
    let mut visited_states = vec![state];
    let mut t = 0.0;
    loop {
        let rate = -q.get(state, state);
        if rate <= 0.0 {
            break;
        }
        let hold: f64 = Exp::new(rate)
            .expect("exit rate is positive and finite")
            .sample(rng);
        t += hold;
        if t > horizon {
            break;
        }
        let weights: Vec<f64> = (0..q.dim())
            .map(|j| if j == state { 0.0 } else { q.get(state, j) })
            .collect();
        state = draw_index(&weights, rate, rng);
        jump_times.push(t);
        visited_states.push(state);
    }
    Ok(StatePath {
        jump_times,
        visited_states,
        horizon,
    })
}

/// Inverse-CDF draw from unnormalized weights with known total.
fn draw_index<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        last_positive = i;
        acc += w;
        if u < acc {
            return i;
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> RateMatrix {
        RateMatrix::from_row_major(3, &[-1.0, 0.5, 0.5, 2.0, -2.0, 0.0, 3.0, 0.0, -3.0]).unwrap()
    }

    fn example2() -> RateMatrix {
        RateMatrix::from_row_major(3, &[-5.0, 3.0, 2.0, 4.0, -10.0, 6.0, 3.0, 4.0, -7.0]).unwrap()
    }

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn validation() {
        example1();
        RateMatrix::from_row_major(2, &[0.0; 4]).unwrap();
        assert!(matches!(
            RateMatrix::from_row_major(2, &[-1.0, 2.0, 0.0, 0.0]),
            Err(Error::InvalidRateMatrix(_))
        ));
        assert!(matches!(
            RateMatrix::from_row_major(2, &[1.0, -1.0, 0.0, 0.0]),
            Err(Error::InvalidRateMatrix(_))
        ));
        assert!(RateMatrix::validate(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&example1()).unwrap();
        let expected = [12.0 / 17.0, 3.0 / 17.0, 2.0 / 17.0];
        for (a, b) in pi.as_slice().iter().zip(expected) {
            assert!((a - b).abs() <= 1e-12);
        }

        let sym = RateMatrix::from_row_major(2, &[-1.0, 1.0, 1.0, -1.0]).unwrap();
        let pi = stationary_distribution(&sym).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stationary_example2_matches_hand_elimination() {
        // Hand elimination of πQ = 0, π1 = 1 gives (46, 29, 38)/113; the
        // rational candidate is confirmed against Q by exact integer products.
        let num = [46i64, 29, 38];
        let qi = [[-5i64, 3, 2], [4, -10, 6], [3, 4, -7]];
        for j in 0..3 {
            assert_eq!((0..3).map(|i| num[i] * qi[i][j]).sum::<i64>(), 0);
        }
        let pi = stationary_distribution(&example2()).unwrap();
        for (a, n) in pi.as_slice().iter().zip(num) {
            assert!((a - n as f64 / 113.0).abs() <= 1e-12);
        }
        let residual = example2().left_mul(pi.as_slice());
        assert!(residual.iter().all(|r| r.abs() <= 1e-12));
    }

    #[test]
    fn stationary_rejects_reducible() {
        assert!(matches!(
            stationary_distribution(&RateMatrix::zero(3)),
            Err(Error::Reducible(_))
        ));
        // state 0 is transient, state 1 absorbing
        let absorbing = RateMatrix::from_row_major(2, &[-1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            stationary_distribution(&absorbing),
            Err(Error::Reducible(_))
        ));
        let single = stationary_distribution(&RateMatrix::zero(1)).unwrap();
        assert_eq!(single.as_slice(), &[1.0]);
    }

    #[test]
    fn reversibility_examples() {
        let pi1 = pv(&[12.0 / 17.0, 3.0 / 17.0, 2.0 / 17.0]);
        assert!(is_reversible(&example1(), &pi1, 1e-12).unwrap());
        let q2 = example2();
        let pi2 = stationary_distribution(&q2).unwrap();
        assert!(!is_reversible(&q2, &pi2, 1e-12).unwrap());
        assert!(detailed_balance_residual(&q2, &pi2).unwrap() > 1e-3);
        let sym =
            RateMatrix::from_row_major(3, &[-3.0, 1.0, 2.0, 1.0, -1.5, 0.5, 2.0, 0.5, -2.5]).unwrap();
        assert!(is_reversible(&sym, &ProbabilityVector::uniform(3), 1e-15).unwrap());
    }

    #[test]
    fn detailed_balance_residual_is_pair_symmetric() {
        let q = example2();
        let pi = stationary_distribution(&q).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let rij = pi[i] * q.get(i, j) - pi[j] * q.get(j, i);
                let rji = pi[j] * q.get(j, i) - pi[i] * q.get(i, j);
                assert_eq!(rij.abs(), rji.abs());
            }
        }
    }

    #[test]
    fn propagate_trivial_cases() {
        let q = example1();
        let p = pv(&[0.2, 0.3, 0.5]);
        assert_eq!(propagate_prior_exact(&p, &q, 0.0).unwrap(), p);
        let pi = pv(&[12.0 / 17.0, 3.0 / 17.0, 2.0 / 17.0]);
        let out = propagate_prior_exact(&pi, &q, 3.7).unwrap();
        assert!(out.sup_distance(&pi) < 1e-14);
        assert!(propagate_prior_exact(&p, &q, -1.0).is_err());
    }

    #[test]
    fn frozen_chain_never_jumps() {
        let model = CtmcModel::new(vec![-1.0, 0.0, 1.0], RateMatrix::zero(3)).unwrap();
        let path = sample_path(&model, &ProbabilityVector::vertex(3, 1), 5.0, 3).unwrap();
        assert!(path.jump_times().is_empty());
        assert_eq!(path.state_at(5.0).unwrap(), 1);
    }

    #[test]
    fn model_rejects_duplicate_states() {
        assert!(CtmcModel::new(vec![0.0, 0.0], RateMatrix::zero(2)).is_err());
        assert!(CtmcModel::new(vec![0.0], RateMatrix::zero(2)).is_err());
    }

    #[test]
    fn state_at_conventions() {
        let path = StatePath::new(vec![0.5, 1.25], vec![0, 2, 1], 2.0).unwrap();
        assert_eq!(path.state_at(0.0).unwrap(), 0);
        assert_eq!(path.state_at(0.5).unwrap(), 2);
        assert_eq!(path.state_at(0.49).unwrap(), 0);
        assert_eq!(path.state_at(1.25).unwrap(), 1);
        assert_eq!(path.state_at(2.0).unwrap(), 1);
        assert!(path.state_at(2.01).is_err());
        assert!(path.state_at(-0.1).is_err());
    }

    #[test]
    fn state_path_rejects_bad_records() {
        assert!(StatePath::new(vec![0.5, 0.4], vec![0, 1, 0], 1.0).is_err());
        assert!(StatePath::new(vec![0.5], vec![0, 0], 1.0).is_err());
        assert!(StatePath::new(vec![1.5], vec![0, 1], 1.0).is_err());
    }
}
