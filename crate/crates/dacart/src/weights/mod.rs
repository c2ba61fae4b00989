//! Importance-weight estimators and diagnostics.
//!
//! An importance weight is the density ratio between target and source
//! covariate distributions. Up to a constant it equals the propensity odds
//! `P(W=1|X) / (1 - P(W=1|X))`, where `W` indicates target-domain membership.
//! Propensities are truncated to `[0.05, 0.95]` by default before forming
//! odds, which bounds any single odds ratio to `[1/19, 19]`; the constant is
//! removed by normalizing the weights to sum to the source size `n`.

mod kliep;

pub use kliep::{kliep_weights, KliepParams, KliepResult};

use thiserror::Error;

/// Default propensity truncation interval.
pub const DEFAULT_TRUNC: (f64, f64) = (0.05, 0.95);

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("truncation interval must satisfy 0 < lo < hi < 1, got [{0}, {1}]")]
    InvalidTruncation(f64, f64),
    #[error("propensity at index {index} is {value}, outside [0, 1]")]
    InvalidPropensity { index: usize, value: f64 },
    #[error("raw weights must be finite, non-negative and not all zero")]
    DegenerateRawWeights,
    #[error("weight input is empty")]
    EmptyInput,
    #[error("datasets must share a schema")]
    SchemaMismatch,
    #[error("density-ratio optimizer failed: {0}")]
    Optimizer(String),
    #[error(
        "source-mean constraint violated: |mean - 1| = {residual:e} > {tolerance:e} \
         (sigma={sigma}, centers={centers}, iterations={iterations})"
    )]
    ConstraintViolation { residual: f64, tolerance: f64, sigma: f64, centers: usize, iterations: usize },
}

/// How a weight vector was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    PropensityOdds,
    Kliep,
    TrueMechanism,
    Unit,
}

impl std::fmt::Display for WeightSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightSource::PropensityOdds => write!(f, "propensity_odds"),
            WeightSource::Kliep => write!(f, "kliep"),
            WeightSource::TrueMechanism => write!(f, "true_mechanism"),
            WeightSource::Unit => write!(f, "unit"),
        }
    }
}

/// Normalized importance weights over source rows: non-negative, summing to
/// the number of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    trunc_interval: (f64, f64),
    source_estimator: WeightSource,
}

impl WeightVector {
    /// Normalize raw weights and tag their provenance.
    pub fn from_raw(
        raw: &[f64],
        source_estimator: WeightSource,
        trunc_interval: (f64, f64),
    ) -> Result<Self, WeightError> {
        let values = normalize_weights(raw)?;
        Ok(WeightVector { values, trunc_interval, source_estimator })
    }

    /// Unit weights: every row carries weight exactly 1.
    pub fn unit(n: usize) -> Self {
        WeightVector {
            values: vec![1.0; n],
            trunc_interval: DEFAULT_TRUNC,
            source_estimator: WeightSource::Unit,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn trunc_interval(&self) -> (f64, f64) {
        self.trunc_interval
    }

    pub fn source_estimator(&self) -> WeightSource {
        self.source_estimator
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_trunc(trunc: (f64, f64)) -> Result<(), WeightError> {
    let (lo, hi) = trunc;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(WeightError::InvalidTruncation(lo, hi));
    }
    Ok(())
}

/// Odds bounds implied by a propensity truncation interval.
pub fn odds_bounds(trunc: (f64, f64)) -> (f64, f64) {
    (trunc.0 / (1.0 - trunc.0), trunc.1 / (1.0 - trunc.1))
}

/// Clamp propensities into the truncation interval, then form odds
/// `p / (1 - p)` elementwise.
pub fn odds_from_propensity(p: &[f64], trunc: (f64, f64)) -> Result<Vec<f64>, WeightError> {
    check_trunc(trunc)?;
    for (index, &value) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(WeightError::InvalidPropensity { index, value });
        }
    }
    Ok(p.iter().map(|&pi| {
        let clamped = pi.clamp(trunc.0, trunc.1);
        clamped / (1.0 - clamped)
    }).collect())
}

/// Number of propensities falling outside the truncation interval.
pub fn count_truncated(p: &[f64], trunc: (f64, f64)) -> usize {
    p.iter().filter(|&&pi| pi < trunc.0 || pi > trunc.1).count()
}

/// Scale raw weights so they sum to their length: `n * raw_i / sum(raw)`.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>, WeightError> {
    if raw.is_empty() {
        return Err(WeightError::EmptyInput);
    }
    if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(WeightError::DegenerateRawWeights);
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(WeightError::DegenerateRawWeights);
    }
    let n = raw.len() as f64;
    Ok(raw.iter().map(|&w| n * w / sum).collect())
}

/// Covariate-shift mechanism used by the simulation study's true weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftMechanism {
    /// Target concentrates where the score is near its mean:
    /// `P(W=1) = sigmoid(-|score - mean| + 2)`.
    Restricted,
    /// Target shifts toward larger scores: `P(W=1) = sigmoid(score - mean)`.
    Shifted,
}

impl ShiftMechanism {
    /// The argument `z` of `P(W=1) = sigmoid(z)` for one score value.
    pub fn logit_argument(&self, score: f64, score_mean: f64) -> f64 {
        match self {
            ShiftMechanism::Restricted => -(score - score_mean).abs() + 2.0,
            ShiftMechanism::Shifted => score - score_mean,
        }
    }
}

/// Numerically stable `1 / (1 + exp(-z))`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Raw (un-normalized) true-mechanism odds. Since `p = sigmoid(z)` implies
/// `p/(1-p) = exp(z)`, the odds are `exp(z)` clamped to the bounds the
/// truncation interval would impose.
pub fn true_odds(
    score: &[f64],
    mechanism: ShiftMechanism,
    score_mean: f64,
    trunc: (f64, f64),
) -> Result<Vec<f64>, WeightError> {
    check_trunc(trunc)?;
    let (lo, hi) = odds_bounds(trunc);
    Ok(score
        .iter()
        .map(|&s| mechanism.logit_argument(s, score_mean).exp().clamp(lo, hi))
        .collect())
}

/// Normalized true-mechanism weights (simulation only: the mechanism must be
/// known).
pub fn true_weights(
    score: &[f64],
    mechanism: ShiftMechanism,
    score_mean: f64,
    trunc: (f64, f64),
) -> Result<WeightVector, WeightError> {
    let raw = true_odds(score, mechanism, score_mean, trunc)?;
    WeightVector::from_raw(&raw, WeightSource::TrueMechanism, trunc)
}

/// Kish effective sample size `(sum w)^2 / sum w^2`: the equivalent
/// unweighted sample size of a weighted sample. Always `<= n`, with equality
/// exactly when all weights are equal.
pub fn effective_sample_size(weights: &WeightVector) -> f64 {
    kish_ess(weights.values())
}

/// [`effective_sample_size`] on a plain slice.
pub fn kish_ess(values: &[f64]) -> f64 {
    let sum: f64 = values.iter().sum();
    let sum_sq: f64 = values.iter().map(|w| w * w).sum();
    if sum_sq <= 0.0 {
        0.0
    } else {
        sum * sum / sum_sq
    }
}
