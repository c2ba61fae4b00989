//! Scenario configuration files.
//!
//! Flat `key = value` text with dotted sections for nested knobs, e.g.:
//!
//! ```text
//! id = "restricted_x1"
//! mechanism = "restricted"     # restricted | shifted | uniform
//! score = "x1"                 # x1 | x1_plus_2x4
//! n_source = 5000
//! replications = 20
//! master_seed = 20250811
//! models = ["cart", "da-cart:ew1", "da-cart:tw", "target-cart"]
//! tree.min_node_weight = 10.0
//! boost.rounds = 100
//! ```
//!
//! Unknown keys are rejected with the offending field named, and command-line
//! overrides are applied after parsing.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::scenario::{EstimatorLabel, ModelSpec, Scenario};
use super::{GeneratorSpec, ScoreFormula, SelectionMechanism, SelectionSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario config: {0}")]
    Parse(String),
    #[error("unknown mechanism '{0}' (expected restricted, shifted, or uniform)")]
    UnknownMechanism(String),
    #[error("unknown score '{0}' (expected x1 or x1_plus_2x4)")]
    UnknownScore(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("unknown estimator '{0}' (expected ew, ew1, ew2, ew3, tw, or unit)")]
    UnknownEstimator(String),
    #[error("invalid scenario field {field}: {message}")]
    InvalidField { field: &'static str, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    id: String,
    mechanism: String,
    #[serde(default = "default_score")]
    score: String,
    n_source: usize,
    #[serde(default = "default_n_target_test")]
    n_target_test: usize,
    #[serde(default = "default_replications")]
    replications: usize,
    #[serde(default)]
    master_seed: u64,
    models: Vec<String>,
    #[serde(default = "default_n_trees")]
    n_trees: usize,
    #[serde(default = "default_trunc_lo")]
    trunc_lo: f64,
    #[serde(default = "default_trunc_hi")]
    trunc_hi: f64,
    #[serde(default = "default_selection_threshold")]
    selection_threshold: f64,
    #[serde(default)]
    tree: TreeSection,
    #[serde(default)]
    boost: BoostSection,
    #[serde(default)]
    kliep: KliepSection,
}

fn default_score() -> String {
    "x1".into()
}
fn default_n_target_test() -> usize {
    10_000
}
fn default_replications() -> usize {
    20
}
fn default_n_trees() -> usize {
    100
}
fn default_trunc_lo() -> f64 {
    0.05
}
fn default_trunc_hi() -> f64 {
    0.95
}
fn default_selection_threshold() -> f64 {
    0.85
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeSection {
    max_depth: Option<usize>,
    min_node_weight: Option<f64>,
    min_gain: Option<f64>,
    complexity: Option<f64>,
    cv_folds: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoostSection {
    rounds: Option<usize>,
    learning_rate: Option<f64>,
    max_depth: Option<usize>,
    min_node_weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct KliepSection {
    n_centers: Option<usize>,
    sigma: Option<f64>,
    cv_folds: Option<usize>,
    max_iter: Option<usize>,
}

/// Parse one model token: `cart`, `target-cart`, `bt`, `target-bt`, or a
/// domain-adaptive form `da-cart:<estimator>`, `da-bt-bootstrap:<estimator>`,
/// `da-bt-split:<estimator>`. The estimator defaults to `ew`.
pub fn parse_model_token(token: &str) -> Result<ModelSpec, ConfigError> {
    let (model, estimator) = match token.split_once(':') {
        Some((m, e)) => (m, Some(e)),
        None => (token, None),
    };
    let label = |e: Option<&str>| -> Result<EstimatorLabel, ConfigError> {
        match e.unwrap_or("ew") {
            "ew" => Ok(EstimatorLabel::Ew),
            "ew1" => Ok(EstimatorLabel::Ew1),
            "ew2" => Ok(EstimatorLabel::Ew2),
            "ew3" | "kliep" => Ok(EstimatorLabel::Ew3),
            "tw" | "true" => Ok(EstimatorLabel::Tw),
            "unit" => Ok(EstimatorLabel::Unit),
            other => Err(ConfigError::UnknownEstimator(other.into())),
        }
    };
    match model {
        "cart" => Ok(ModelSpec::Cart),
        "target-cart" => Ok(ModelSpec::TargetCart),
        "da-cart" => Ok(ModelSpec::DaCart(label(estimator)?)),
        "bt" => Ok(ModelSpec::Bt),
        "target-bt" => Ok(ModelSpec::TargetBt),
        "da-bt-bootstrap" => Ok(ModelSpec::DaBtBootstrap(label(estimator)?)),
        "da-bt-split" => Ok(ModelSpec::DaBtSplit(label(estimator)?)),
        other => Err(ConfigError::UnknownModel(other.into())),
    }
}

/// Parse a scenario config from text.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, ConfigError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;

    let mechanism = match file.mechanism.as_str() {
        "restricted" => SelectionMechanism::Restricted,
        "shifted" => SelectionMechanism::Shifted,
        "uniform" | "none" => SelectionMechanism::Uniform,
        other => return Err(ConfigError::UnknownMechanism(other.into())),
    };
    let score = match file.score.as_str() {
        "x1" => ScoreFormula::X1,
        "x1_plus_2x4" => ScoreFormula::X1Plus2X4,
        other => return Err(ConfigError::UnknownScore(other.into())),
    };
    if file.n_source == 0 {
        return Err(ConfigError::InvalidField { field: "n_source", message: "must be >= 1".into() });
    }
    if file.replications == 0 {
        return Err(ConfigError::InvalidField {
            field: "replications",
            message: "must be >= 1".into(),
        });
    }
    if file.models.is_empty() {
        return Err(ConfigError::InvalidField {
            field: "models",
            message: "at least one model required".into(),
        });
    }
    if !(0.0 < file.trunc_lo && file.trunc_lo < file.trunc_hi && file.trunc_hi < 1.0) {
        return Err(ConfigError::InvalidField {
            field: "trunc_lo/trunc_hi",
            message: "must satisfy 0 < lo < hi < 1".into(),
        });
    }
    let models = file
        .models
        .iter()
        .map(|t| parse_model_token(t))
        .collect::<Result<Vec<_>, _>>()?;

    let mut sc = Scenario::new(file.id, SelectionSpec { mechanism, score });
    sc.generator = GeneratorSpec::main_sim();
    sc.n_source = file.n_source;
    sc.n_target_test = file.n_target_test;
    sc.replications = file.replications;
    sc.master_seed = file.master_seed;
    sc.models = models;
    sc.n_trees = file.n_trees;
    sc.trunc = (file.trunc_lo, file.trunc_hi);
    sc.selection_threshold = file.selection_threshold;
    if let Some(v) = file.tree.max_depth {
        sc.tree.max_depth = v;
    }
    if let Some(v) = file.tree.min_node_weight {
        sc.tree.min_node_weight = v;
    }
    if let Some(v) = file.tree.min_gain {
        sc.tree.min_gain = v;
    }
    if let Some(v) = file.tree.complexity {
        sc.tree.complexity = v;
    }
    if let Some(v) = file.tree.cv_folds {
        sc.tree.cv_folds = v;
    }
    if let Some(v) = file.boost.rounds {
        sc.boost.rounds = v;
    }
    if let Some(v) = file.boost.learning_rate {
        sc.boost.learning_rate = v;
    }
    if let Some(v) = file.boost.max_depth {
        sc.boost.max_depth = v;
    }
    if let Some(v) = file.boost.min_node_weight {
        sc.boost.min_node_weight = v;
    }
    if let Some(v) = file.kliep.n_centers {
        sc.kliep.n_centers = v;
    }
    sc.kliep.sigma = file.kliep.sigma;
    if let Some(v) = file.kliep.cv_folds {
        sc.kliep.cv_folds = v;
    }
    if let Some(v) = file.kliep.max_iter {
        sc.kliep.max_iter = v;
    }
    Ok(sc)
}

/// Parse a scenario config file.
pub fn parse_scenario_file(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_scenario_str(&text)
}
