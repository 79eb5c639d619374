//! Experiment configuration and its flat `key = value` text form.
//!
//! ```text
//! # comments run to end of line
//! states = -1, 0, 1
//! q = -1, 1/2, 1/2, 2, -2, 0, 3, 0, -3      # row-major
//! h_mode = linear                           # or: table
//! h_gain = 0.01                             # h_mode = linear
//! # h_values = -0.01, 0, 0.01               # h_mode = table
//! sigma = 0.01                              # or sigma_times + sigma_values
//! lambda = 0.001
//! t_final = 1
//! pi0 = 1/3, 1/3, 1/3
//! prior_method = resolvent                  # euler | resolvent | expm
//! metric_mode = inverse                     # inverse | direct
//! seed = 42
//! output_path = run.csv                     # optional
//! ```
//!
//! Numbers accept plain decimals or `a/b` fractions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::ctmc::{stationary_distribution, CtmcModel, RateMatrix};
use crate::error::{Error, Result};
use crate::observation::{ObservationModel, SigmaSchedule, TimeGrid};
use crate::proximal::PriorMethod;
use crate::simplex::{MetricMode, ProbabilityVector, WeightedMetric};

/// How `h(a_i)` is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum SensingSpec {
    /// `h(a) = gain * a`
    Linear { gain: f64 },
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub states: Vec<f64>,
    /// Row-major `m x m` rate matrix.
    pub q: Vec<f64>,
    pub sensing: SensingSpec,
    pub sigma: SigmaSchedule,
    pub lambda: f64,
    pub t_final: f64,
    pub pi0: ProbabilityVector,
    pub prior_method: PriorMethod,
    pub metric_mode: MetricMode,
    pub seed: u64,
    pub output_path: Option<String>,
}

/// A configuration with every model object constructed and validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub chain: CtmcModel,
    pub sensing: ObservationModel,
    pub grid: TimeGrid,
    pub pi0: ProbabilityVector,
    pub prior_method: PriorMethod,
    pub metric: WeightedMetric,
    /// `None` when the chain is reducible.
    pub stationary: Option<ProbabilityVector>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Validates the configuration and builds the model objects.
    pub fn build(&self) -> Result<Experiment> {
        let m = self.states.len();
        let rate = RateMatrix::from_row_major(m, &self.q)?;
        let chain = CtmcModel::new(self.states.clone(), rate)?;
        let sensing = match &self.sensing {
            SensingSpec::Linear { gain } => ObservationModel::linear(&self.states, *gain, self.sigma.clone())?,
            SensingSpec::Table(h) => {
                if h.len() != m {
                    return Err(Error::Config(format!("h_values has {} entries, expected {m}", h.len())));
                }
                ObservationModel::new(h.clone(), self.sigma.clone())?
            }
        };
        if self.pi0.len() != m {
            return Err(Error::Config(format!("pi0 has {} entries, expected {m}", self.pi0.len())));
        }
        let grid = TimeGrid::covering(self.lambda, self.t_final)?;
        grid.check_stability(chain.rate())?;

        let stationary = stationary_distribution(chain.rate()).ok();
        let metric = match (&stationary, self.prior_method) {
            (Some(pi), _) => WeightedMetric::new(pi.clone(), self.metric_mode)?,
            (None, PriorMethod::Resolvent) => {
                return Err(Error::Reducible(
                    "the resolvent prior needs an irreducible chain with a stationary distribution".into(),
                ))
            }
            (None, _) => WeightedMetric::new(ProbabilityVector::uniform(m), self.metric_mode)?,
        };
        if self.prior_method == PriorMethod::Resolvent {
            crate::proximal::PriorOperator::new(chain.rate(), self.lambda, self.prior_method, &metric)?;
        }
        Ok(Experiment {
            chain,
            sensing,
            grid,
            pi0: self.pi0.clone(),
            prior_method: self.prior_method,
            metric,
            stationary,
            seed: self.seed,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        let get = |key: &str| -> Result<&str> {
            entries
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Config(format!("missing key {key:?}")))
        };

        let states = parse_list(get("states")?, "states")?;
        let q = parse_list(get("q")?, "q")?;
        let h_mode = entries.get("h_mode").map(String::as_str).unwrap_or("linear");
        let sensing = match h_mode {
            "linear" => SensingSpec::Linear {
                gain: parse_number(get("h_gain")?, "h_gain")?,
            },
            "table" => SensingSpec::Table(parse_list(get("h_values")?, "h_values")?),
            other => return Err(Error::Config(format!("unknown h_mode {other:?} (expected linear|table)"))),
        };
        let sigma = match (entries.get("sigma"), entries.get("sigma_times"), entries.get("sigma_values")) {
            (Some(s), None, None) => SigmaSchedule::Constant(parse_number(s, "sigma")?),
            (None, Some(t), Some(v)) => SigmaSchedule::Tabulated {
                times: parse_list(t, "sigma_times")?,
                values: parse_list(v, "sigma_values")?,
            },
            _ => {
                return Err(Error::Config(
                    "give either `sigma` or both `sigma_times` and `sigma_values`".into(),
                ))
            }
        };
        let pi0 = ProbabilityVector::new(parse_list(get("pi0")?, "pi0")?)
            .map_err(|e| Error::Config(format!("pi0: {e}")))?;
        let prior_method = match entries.get("prior_method") {
            Some(s) => s.parse()?,
            None => PriorMethod::Euler,
        };
        let metric_mode = match entries.get("metric_mode") {
            Some(s) => s.parse()?,
            None => MetricMode::Inverse,
        };
        let seed = get("seed")?
            .parse::<u64>()
            .map_err(|e| Error::Config(format!("seed: {e}")))?;

        Ok(ExperimentConfig {
            states,
            q,
            sensing,
            sigma,
            lambda: parse_number(get("lambda")?, "lambda")?,
            t_final: parse_number(get("t_final")?, "t_final")?,
            pi0,
            prior_method,
            metric_mode,
            seed,
            output_path: entries.get("output_path").cloned(),
        })
    }

    /// Serializes to the text form; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "states = {}", list(&self.states));
        let _ = writeln!(out, "q = {}", list(&self.q));
        match &self.sensing {
            SensingSpec::Linear { gain } => {
                let _ = writeln!(out, "h_mode = linear");
                let _ = writeln!(out, "h_gain = {gain}");
            }
            SensingSpec::Table(h) => {
                let _ = writeln!(out, "h_mode = table");
                let _ = writeln!(out, "h_values = {}", list(h));
            }
        }
        match &self.sigma {
            SigmaSchedule::Constant(s) => {
                let _ = writeln!(out, "sigma = {s}");
            }
            SigmaSchedule::Tabulated { times, values } => {
                let _ = writeln!(out, "sigma_times = {}", list(times));
                let _ = writeln!(out, "sigma_values = {}", list(values));
            }
        }
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "t_final = {}", self.t_final);
        let _ = writeln!(out, "pi0 = {}", list(self.pi0.as_slice()));
        let _ = writeln!(out, "prior_method = {}", self.prior_method.as_str());
        let _ = writeln!(out, "metric_mode = {}", self.metric_mode.as_str());
        let _ = writeln!(out, "seed = {}", self.seed);
        if let Some(path) = &self.output_path {
            let _ = writeln!(out, "output_path = {path}");
        }
        out
    }
}

const KNOWN_KEYS: &[&str] = &[
    "states",
    "q",
    "h_mode",
    "h_gain",
    "h_values",
    "sigma",
    "sigma_times",
    "sigma_values",
    "lambda",
    "t_final",
    "pi0",
    "prior_method",
    "metric_mode",
    "seed",
    "output_path",
];

/// Parses a decimal or an `a/b` fraction.
pub fn parse_number(s: &str, key: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Config(format!("{key}: cannot parse number {s:?}"));
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0.0 {
                return Err(bad());
            }
            num / den
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if !value.is_finite() {
        return Err(bad());
    }
    Ok(value)
}

pub fn parse_list(s: &str, key: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    s.split(',').map(|item| parse_number(item, key)).collect()
}
