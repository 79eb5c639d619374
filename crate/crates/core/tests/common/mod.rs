#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wonham_prox::{ProbabilityVector, RateMatrix};

pub const EXAMPLE1_Q: [f64; 9] = [-1.0, 0.5, 0.5, 2.0, -2.0, 0.0, 3.0, 0.0, -3.0];
pub const EXAMPLE2_Q: [f64; 9] = [-5.0, 3.0, 2.0, 4.0, -10.0, 6.0, 3.0, 4.0, -7.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn example1() -> RateMatrix {
    RateMatrix::from_row_major(3, &EXAMPLE1_Q).unwrap()
}

pub fn example2() -> RateMatrix {
    RateMatrix::from_row_major(3, &EXAMPLE2_Q).unwrap()
}

/// Uniform on the simplex: normalized i.i.d. exponentials.
pub fn random_simplex<R: Rng>(rng: &mut R, m: usize) -> ProbabilityVector {
    let e: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    ProbabilityVector::new(e.iter().map(|x| x / s).collect()).unwrap()
}

/// Interior point with every entry at least `floor`.
pub fn random_interior<R: Rng>(rng: &mut R, m: usize, floor: f64) -> ProbabilityVector {
    let p = random_simplex(rng, m);
    let scale = 1.0 - floor * m as f64;
    ProbabilityVector::new(p.as_slice().iter().map(|x| floor + scale * x).collect()).unwrap()
}

/// A chain reversible with respect to `pi`: `Q_ij = S_ij / pi_i` for a
/// random symmetric `S` with entries in `[0.1, 1]`.
pub fn random_reversible<R: Rng>(rng: &mut R, m: usize) -> (RateMatrix, ProbabilityVector) {
    let pi = random_interior(rng, m, 0.05);
    let mut q = vec![0.0; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let s = rng.random_range(0.1..1.0);
            q[i * m + j] = s / pi[i];
            q[j * m + i] = s / pi[j];
        }
    }
    for i in 0..m {
        let exit: f64 = (0..m).filter(|&j| j != i).map(|j| q[i * m + j]).sum();
        q[i * m + i] = -exit;
    }
    (RateMatrix::from_row_major(m, &q).unwrap(), pi)
}

/// A general irreducible chain with off-diagonal rates in `[0.1, 5]`.
pub fn random_rate_matrix<R: Rng>(rng: &mut R, m: usize) -> RateMatrix {
    let mut q = vec![0.0; m * m];
    for i in 0..m {
        let mut exit = 0.0;
        for j in 0..m {
            if i != j {
                let r = rng.random_range(0.1..5.0);
                q[i * m + j] = r;
                exit += r;
            }
        }
        q[i * m + i] = -exit;
    }
    RateMatrix::from_row_major(m, &q).unwrap()
}

/// Classical fourth-order Runge-Kutta for `p' = pQ` with a fixed step.
pub fn rk4_forward(p: &[f64], q: &RateMatrix, dt: f64, h: f64) -> Vec<f64> {
    let m = p.len();
    let f = |x: &[f64]| -> Vec<f64> {
        (0..m).map(|j| (0..m).map(|i| x[i] * q.get(i, j)).sum()).collect()
    };
    let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(u, v)| u + a * v).collect() };
    let steps = (dt / h).round() as usize;
    let mut x = p.to_vec();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&axpy(&x, h / 2.0, &k1));
        let k3 = f(&axpy(&x, h / 2.0, &k2));
        let k4 = f(&axpy(&x, h, &k3));
        for i in 0..m {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

pub fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
