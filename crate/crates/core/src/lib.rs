//! Filtering for finite-state continuous-time Markov chains observed in
//! additive Gaussian white noise.
//!
//! Two posterior recursions are provided on a common time grid:
//!
//! * [`wonham`]: Euler–Maruyama integration of the Wonham filtering SDE,
//!   plus the closed-form posterior for a frozen chain (`Q = 0`).
//! * [`proximal`]: a prior/posterior splitting in which each half-step is a
//!   proximal map on the probability simplex. The posterior half is an
//!   entropic (KL) proximal step with a closed-form multiplicative solution;
//!   the prior half is either an explicit Euler step, the resolvent
//!   `p (I - λQ)^{-1}` (the minimizer of a π∞-weighted quadratic problem for
//!   reversible chains), or the exact semigroup `p exp(λQ)`.
//!
//! [`harness`] ties the pieces together into reproducible experiments and
//! emits CSV; the `wonham-prox` binary wraps it.

pub mod ctmc;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod observation;
pub mod proximal;
pub mod rng;
pub mod simplex;
pub mod wonham;

pub use ctmc::{CtmcModel, RateMatrix, StatePath};
pub use error::{Error, ErrorKind, Result};
pub use observation::{ObservationModel, ObservationPath, SigmaSchedule, TimeGrid};
pub use proximal::{CostVector, PriorMethod};
pub use simplex::{MetricMode, ProbabilityVector, WeightedMetric};
pub use wonham::{PosteriorTrajectory, TrajectoryMethod};
