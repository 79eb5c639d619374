//! Probability-simplex primitives.
//!
//! Vectors are row vectors over the `m` chain states. All operations here are
//! pure; [`ProbabilityVector`] is the only validated type and every filter
//! recursion in the crate produces one.

use crate::error::{Error, Result};

/// Absolute tolerance on `|Σ p_i - 1|`.
pub const SUM_TOL: f64 = 1e-12;
/// Entries in `[NEG_TOL, 0)` are round-off and get clamped to zero; anything
/// more negative is rejected.
pub const NEG_TOL: f64 = -1e-15;

/// A point of the probability simplex `{p ≥ 0, Σ p_i = 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(mut entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Domain("probability vector must be non-empty".into()));
        }
        for (i, x) in entries.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::Domain(format!("entry {i} is not finite ({x})")));
            }
            if *x < 0.0 {
                if *x < NEG_TOL {
                    return Err(Error::Domain(format!("entry {i} is negative ({x:e})")));
                }
                *x = 0.0;
            }
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Domain(format!(
                "entries sum to {sum:.17} (off by {:e})",
                sum - 1.0
            )));
        }
        Ok(ProbabilityVector(entries))
    }

    pub fn uniform(m: usize) -> Self {
        assert!(m > 0, "uniform distribution needs at least one state");
        ProbabilityVector(vec![1.0 / m as f64; m])
    }

    /// The point mass on state `i`.
    pub fn vertex(m: usize, i: usize) -> Self {
        assert!(i < m, "vertex index {i} out of range for m = {m}");
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        ProbabilityVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Sup-norm distance to another vector of the same length.
    pub fn sup_distance(&self, other: &ProbabilityVector) -> f64 {
        sup_distance(&self.0, &other.0)
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for ProbabilityVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Which diagonal weighting the π∞ inner product uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricMode {
    /// `⟨p, q⟩ = Σ p_i q_i / π_i`
    #[default]
    Inverse,
    /// `⟨p, q⟩ = Σ p_i q_i π_i`
    Direct,
}

impl MetricMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricMode::Inverse => "inverse",
            MetricMode::Direct => "direct",
        }
    }
}

impl std::str::FromStr for MetricMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inverse" => Ok(MetricMode::Inverse),
            "direct" => Ok(MetricMode::Direct),
            other => Err(Error::Config(format!(
                "unknown metric mode {other:?} (expected inverse|direct)"
            ))),
        }
    }
}

/// Diagonal inner product weighted by a strictly positive distribution,
/// normally the stationary distribution of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMetric {
    weights: ProbabilityVector,
    mode: MetricMode,
}

impl WeightedMetric {
    pub fn new(weights: ProbabilityVector, mode: MetricMode) -> Result<Self> {
        if let Some(i) = weights.as_slice().iter().position(|&w| w <= 0.0) {
            return Err(Error::Domain(format!(
                "metric weight {i} is not strictly positive ({})",
                weights[i]
            )));
        }
        Ok(WeightedMetric { weights, mode })
    }

    pub fn inverse(weights: ProbabilityVector) -> Result<Self> {
        Self::new(weights, MetricMode::Inverse)
    }

    pub fn weights(&self) -> &ProbabilityVector {
        &self.weights
    }

    pub fn mode(&self) -> MetricMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Diagonal entry `i` of the Gram matrix (`1/π_i` or `π_i`).
    pub fn diag(&self, i: usize) -> f64 {
        match self.mode {
            MetricMode::Inverse => 1.0 / self.weights[i],
            MetricMode::Direct => self.weights[i],
        }
    }
}

/// `D(α ‖ β) = Σ α_i log(α_i / β_i)` with `0 log(0/x) = 0`.
pub fn kl_divergence(alpha: &ProbabilityVector, beta: &ProbabilityVector) -> Result<f64> {
    check_dim(beta.len(), alpha.len())?;
    let mut d = 0.0;
    for (i, (&a, &b)) in alpha.as_slice().iter().zip(beta.as_slice()).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::AbsoluteContinuity { index: i });
        }
        d += a * (a / b).ln();
    }
    Ok(d.max(0.0))
}

pub fn weighted_inner(p: &[f64], q: &[f64], metric: &WeightedMetric) -> Result<f64> {
    check_dim(metric.dim(), p.len())?;
    check_dim(metric.dim(), q.len())?;
    Ok(p
        .iter()
        .zip(q)
        .enumerate()
        .map(|(i, (a, b))| a * b * metric.diag(i))
        .sum())
}

pub fn weighted_norm_sq(p: &[f64], metric: &WeightedMetric) -> Result<f64> {
    weighted_inner(p, p, metric)
}

/// Divide a nonnegative vector by its sum (the KL projection onto the simplex).
pub fn normalize(v: &[f64]) -> Result<ProbabilityVector> {
    if v.is_empty() {
        return Err(Error::Domain("cannot normalize an empty vector".into()));
    }
    if let Some(i) = v.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!(
            "cannot normalize: entry {i} is {} (must be finite and >= 0)",
            v[i]
        )));
    }
    let sum: f64 = v.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::Domain(format!("cannot normalize: sum is {sum}")));
    }
    ProbabilityVector::new(v.iter().map(|x| x / sum).collect())
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension { expected, found });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    fn example1_metric() -> WeightedMetric {
        WeightedMetric::inverse(pv(&[12.0 / 17.0, 3.0 / 17.0, 2.0 / 17.0])).unwrap()
    }

    #[test]
    fn construction_clamps_roundoff_and_rejects_the_rest() {
        let p = ProbabilityVector::new(vec![-5e-16, 0.5, 0.5]).unwrap();
        assert_eq!(p[0], 0.0);
        assert!(ProbabilityVector::new(vec![-1e-12, 0.5, 0.5 + 1e-12]).is_err());
        assert!(ProbabilityVector::new(vec![0.5, 0.5 + 1e-11]).is_err());
        assert!(ProbabilityVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = pv(&[0.2, 0.3, 0.5]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);

        let d = kl_divergence(&pv(&[1.0, 0.0]), &pv(&[0.5, 0.5])).unwrap();
        assert!((d - 2f64.ln()).abs() < 1e-15);

        let d = kl_divergence(&pv(&[0.75, 0.25]), &pv(&[0.5, 0.5])).unwrap();
        let expected = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((d - expected).abs() < 1e-15);
    }

    #[test]
    fn kl_reports_offending_index() {
        let err = kl_divergence(&pv(&[0.5, 0.25, 0.25]), &pv(&[0.5, 0.5, 0.0])).unwrap_err();
        assert!(matches!(err, Error::AbsoluteContinuity { index: 2 }));
    }

    #[test]
    fn inner_product_examples() {
        let m = example1_metric();
        let pi = m.weights().as_slice().to_vec();
        assert!((weighted_inner(&pi, &pi, &m).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            weighted_inner(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &m).unwrap(),
            0.0
        );
        assert_eq!(weighted_norm_sq(&[0.0; 3], &m).unwrap(), 0.0);
        let e1 = weighted_norm_sq(&[1.0, 0.0, 0.0], &m).unwrap();
        assert!((e1 - 17.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn inner_product_direct_mode() {
        let w = pv(&[12.0 / 17.0, 3.0 / 17.0, 2.0 / 17.0]);
        let m = WeightedMetric::new(w, MetricMode::Direct).unwrap();
        let e1 = weighted_norm_sq(&[1.0, 0.0, 0.0], &m).unwrap();
        assert!((e1 - 12.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn inner_product_errors() {
        let m = example1_metric();
        assert!(matches!(
            weighted_inner(&[1.0, 0.0], &[0.0, 1.0, 0.0], &m),
            Err(Error::Dimension { .. })
        ));
        assert!(WeightedMetric::inverse(pv(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(
            normalize(&[1.0, 3.0, 4.0]).unwrap().as_slice(),
            &[0.125, 0.375, 0.5]
        );
        let p = [0.2, 0.3, 0.5];
        assert_eq!(normalize(&p).unwrap().as_slice(), &p);
        assert!(normalize(&[0.0, 0.0]).is_err());
        assert!(normalize(&[1.0, -1.0, 2.0]).is_err());
    }

    fn simplex_point(m: usize) -> impl Strategy<Value = ProbabilityVector> {
        prop::collection::vec(0.0f64..1.0, m)
            .prop_filter("nonzero", |v| v.iter().sum::<f64>() > 1e-3)
            .prop_map(|v| normalize(&v).unwrap())
    }

    proptest! {
        #[test]
        fn gibbs_inequality(a in simplex_point(4), b in simplex_point(4)) {
            let b = normalize(&b.as_slice().iter().map(|x| x + 1e-3).collect::<Vec<_>>()).unwrap();
            let d = kl_divergence(&a, &b).unwrap();
            prop_assert!(d >= 0.0);
            if a.sup_distance(&b) > 1e-6 {
                prop_assert!(d > 0.0);
            }
        }

        #[test]
        fn normalize_lands_on_simplex(v in prop::collection::vec(0.0f64..1e3, 1..8)) {
            prop_assume!(v.iter().sum::<f64>() > 0.0);
            let p = normalize(&v).unwrap();
            let s: f64 = p.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() <= SUM_TOL);
            prop_assert!(p.as_slice().iter().all(|x| *x >= 0.0));
            prop_assert_eq!(normalize(p.as_slice()).unwrap().as_slice().len(), p.len());
        }

        #[test]
        fn inner_product_is_exactly_symmetric(
            p in prop::collection::vec(-1.0f64..1.0, 3),
            q in prop::collection::vec(-1.0f64..1.0, 3),
            direct in any::<bool>(),
        ) {
            let mode = if direct { MetricMode::Direct } else { MetricMode::Inverse };
            let m = WeightedMetric::new(example1_metric().weights().clone(), mode).unwrap();
            prop_assert_eq!(weighted_inner(&p, &q, &m).unwrap(), weighted_inner(&q, &p, &m).unwrap());
        }
    }
}
