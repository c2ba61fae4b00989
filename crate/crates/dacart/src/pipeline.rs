//! The end-to-end domain-adaptive pipeline and the bagged-tree family.
//!
//! Fitting a DA-CART model proceeds in three steps:
//!
//! 1. **Variable selection** — fit a pruned CART with unit weights on the
//!    source domain and keep the top features by gain importance until their
//!    cumulative share reaches the threshold (default 0.85).
//! 2. **Importance weights** — estimate `P(W=1 | Z)` on the selected features
//!    (or an explicit override) and convert truncated propensity odds into
//!    normalized weights; alternatively use kernel density-ratio weights,
//!    known-mechanism weights, or unit weights.
//! 3. **Weighted tree** — grow and prune a CART on the selected features
//!    under the importance-weighted split criterion.
//!
//! Seeds are derived per step from the master seed with [`crate::seed::derive`]
//! using streams [`M1_SEED_STREAM`], [`WEIGHT_SEED_STREAM`], [`M3_SEED_STREAM`],
//! so every step is independently reproducible.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::boost::{fit_propensity, BoostError, BoostParams, BoostedClassifier};
use crate::data::{DataError, Dataset};
use crate::seed;
use crate::tree::{self, FitParams, TaskKind, Tree, TreeError};
use crate::weights::{
    kliep_weights, odds_from_propensity, true_weights, KliepParams, ShiftMechanism, WeightError,
    WeightSource, WeightVector,
};

/// Seed stream for the selection tree (step 1).
pub const M1_SEED_STREAM: u64 = 1;
/// Seed stream for the weight model (step 2).
pub const WEIGHT_SEED_STREAM: u64 = 2;
/// Seed stream for the weighted tree (step 3).
pub const M3_SEED_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no informative variables: the selection tree has no splits")]
    NoInformativeVariables,
    #[error("unknown feature '{0}'")]
    UnknownFeature(String),
    #[error("weight vector has length {found}, expected {expected}")]
    WeightLength { expected: usize, found: usize },
    #[error("variant requires importance weights")]
    MissingWeights,
    #[error("score vector has length {found}, expected {expected}")]
    ScoreLength { expected: usize, found: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Boost(#[from] BoostError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// Result of gain-based variable selection.
#[derive(Debug, Clone)]
pub struct VariableSelection {
    /// Selected feature indices, ordered by descending gain share.
    pub selected: Vec<usize>,
    /// Gain share of every feature of the source dataset.
    pub shares: Vec<f64>,
    pub cumulative_threshold: f64,
}

impl VariableSelection {
    /// Selection that keeps every feature (fallback when the selection tree
    /// is a single leaf).
    fn all_features(n_features: usize, threshold: f64) -> Self {
        VariableSelection {
            selected: (0..n_features).collect(),
            shares: vec![0.0; n_features],
            cumulative_threshold: threshold,
        }
    }
}

/// How step 2 obtains importance weights.
#[derive(Debug, Clone)]
pub enum WeightEstimator {
    /// All weights exactly 1; reduces DA-CART to a plain CART.
    Unit,
    /// Truncated propensity odds from a boosted domain classifier.
    Propensity,
    /// Kernel density-ratio estimation.
    Kliep,
    /// Known selection mechanism (simulation only): per-source-row scores and
    /// the population score mean.
    True { mechanism: ShiftMechanism, score: Vec<f64>, score_mean: f64 },
    /// Weights computed elsewhere (e.g. stitched across generation batches).
    Precomputed(WeightVector),
}

/// Every knob of the three-step fit.
#[derive(Debug, Clone)]
pub struct DaCartParams {
    pub tree: FitParams,
    pub task: TaskKind,
    pub trunc: (f64, f64),
    pub boost: BoostParams,
    pub kliep: KliepParams,
    /// Cumulative gain-share threshold for step 1.
    pub selection_threshold: f64,
    /// Explicit weight-model features (names); defaults to the step-1 selection.
    pub weight_features: Option<Vec<String>>,
    pub seed: u64,
}

impl Default for DaCartParams {
    fn default() -> Self {
        DaCartParams {
            tree: FitParams::default(),
            task: TaskKind::Regression,
            trunc: crate::weights::DEFAULT_TRUNC,
            boost: BoostParams::default(),
            kliep: KliepParams::default(),
            selection_threshold: 0.85,
            weight_features: None,
            seed: 0,
        }
    }
}

/// A fitted DA-CART model.
#[derive(Debug, Clone)]
pub struct DaCartModel {
    pub selection: VariableSelection,
    pub weights: WeightVector,
    /// The boosted domain classifier when the estimator was propensity-based.
    pub weight_model: Option<BoostedClassifier>,
    /// The weighted tree, grown only on selected features.
    pub tree: Tree,
    /// Set when selection found no splits and fell back to all features.
    pub used_all_features_fallback: bool,
}

impl DaCartModel {
    pub fn predict(&self, rows: &Dataset) -> Result<Vec<f64>, PipelineError> {
        Ok(self.tree.predict(rows)?)
    }
}

/// Step 1: fit a pruned unit-weight CART on all source features and keep the
/// shortest prefix of features (by descending gain share) whose cumulative
/// share reaches `threshold`.
///
/// The selection tree is grown without the complexity penalty (pruning alone
/// regularizes it): importance shares are read from the full gain structure,
/// not from whatever prefix of splits survives a complexity gate.
pub fn select_variables(
    d_source: &Dataset,
    params: &FitParams,
    task: TaskKind,
    threshold: f64,
) -> Result<VariableSelection, PipelineError> {
    let mut m1_params = *params;
    m1_params.prune = true;
    m1_params.complexity = 0.0;
    let unit = tree::unit_weights(d_source.n_rows());
    let candidates = tree::all_features(d_source);
    let m1 = tree::fit(d_source, &unit, &candidates, &m1_params, task)?;
    let shares = m1.gain_importance();
    if shares.iter().all(|&s| s == 0.0) {
        return Err(PipelineError::NoInformativeVariables);
    }
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        shares[b].partial_cmp(&shares[a]).expect("finite shares").then(a.cmp(&b))
    });
    let mut selected = Vec::new();
    let mut cumulative = 0.0;
    for j in order {
        if shares[j] == 0.0 {
            break;
        }
        selected.push(j);
        cumulative += shares[j];
        if cumulative >= threshold - 1e-12 {
            break;
        }
    }
    Ok(VariableSelection { selected, shares, cumulative_threshold: threshold })
}

/// Fit the full three-step model. `x_target` provides the unlabeled target
/// covariates; it is only consulted by the propensity and kernel estimators.
/// Deterministic given `params.seed`.
pub fn fit_da_cart(
    d_source: &Dataset,
    x_target: &Dataset,
    estimator: WeightEstimator,
    params: &DaCartParams,
) -> Result<DaCartModel, PipelineError> {
    // Step 1: variable selection, falling back to all features when the
    // selection tree has no splits.
    let mut m1_params = params.tree;
    m1_params.seed = seed::derive(params.seed, M1_SEED_STREAM);
    let (selection, fallback) =
        match select_variables(d_source, &m1_params, params.task, params.selection_threshold) {
            Ok(sel) => (sel, false),
            Err(PipelineError::NoInformativeVariables) => (
                VariableSelection::all_features(d_source.n_features(), params.selection_threshold),
                true,
            ),
            Err(other) => return Err(other),
        };

    // Step 2: importance weights on the selected features unless overridden.
    let weight_indices: Vec<usize> = match &params.weight_features {
        Some(names) => names
            .iter()
            .map(|n| d_source.feature_index(n).ok_or_else(|| PipelineError::UnknownFeature(n.clone())))
            .collect::<Result<_, _>>()?,
        None => selection.selected.clone(),
    };
    let weight_seed = seed::derive(params.seed, WEIGHT_SEED_STREAM);
    let (weights, weight_model) =
        estimate_weights(d_source, x_target, estimator, &weight_indices, params, weight_seed)?;

    // Step 3: weighted tree on the selected features.
    let d_selected = d_source.select_features(&selection.selected)?;
    let mut m3_params = params.tree;
    m3_params.seed = seed::derive(params.seed, M3_SEED_STREAM);
    let tree = tree::fit(
        &d_selected,
        weights.values(),
        &tree::all_features(&d_selected),
        &m3_params,
        params.task,
    )?;

    Ok(DaCartModel { selection, weights, weight_model, tree, used_all_features_fallback: fallback })
}

/// Step 2 on its own: turn an estimator choice into a normalized weight
/// vector over the source rows, using the given weight-model feature indices.
/// `seed` should already be derived for this step.
pub fn estimate_weights(
    d_source: &Dataset,
    x_target: &Dataset,
    estimator: WeightEstimator,
    weight_indices: &[usize],
    params: &DaCartParams,
    seed: u64,
) -> Result<(WeightVector, Option<BoostedClassifier>), PipelineError> {
    let n = d_source.n_rows();
    let weight_names: Vec<String> =
        weight_indices.iter().map(|&j| d_source.schema()[j].name.clone()).collect();
    match estimator {
        WeightEstimator::Unit => Ok((WeightVector::unit(n), None)),
        WeightEstimator::Propensity => {
            let z_s = d_source.select_features(weight_indices)?;
            let z_t = x_target.select_features_by_name(&weight_names)?;
            let mut boost_params = params.boost;
            boost_params.seed = seed;
            let model = fit_propensity(&z_s, &z_t, &boost_params)?;
            let p = model.predict_proba(&z_s)?;
            let odds = odds_from_propensity(&p, params.trunc)?;
            Ok((WeightVector::from_raw(&odds, WeightSource::PropensityOdds, params.trunc)?, Some(model)))
        }
        WeightEstimator::Kliep => {
            let z_s = d_source.select_features(weight_indices)?;
            let z_t = x_target.select_features_by_name(&weight_names)?;
            let mut kliep_params = params.kliep.clone();
            kliep_params.seed = seed;
            Ok((kliep_weights(&z_s, &z_t, &kliep_params)?.weights, None))
        }
        WeightEstimator::True { mechanism, score, score_mean } => {
            if score.len() != n {
                return Err(PipelineError::ScoreLength { expected: n, found: score.len() });
            }
            Ok((true_weights(&score, mechanism, score_mean, params.trunc)?, None))
        }
        WeightEstimator::Precomputed(wv) => {
            if wv.len() != n {
                return Err(PipelineError::WeightLength { expected: n, found: wv.len() });
            }
            Ok((wv, None))
        }
    }
}

/// Bagged-tree flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaggedVariant {
    /// Uniform bootstrap, unweighted splits.
    Naive,
    /// Bootstrap draws with probability proportional to importance weights,
    /// unweighted splits.
    DaBootstrap,
    /// Uniform bootstrap; every resampled row keeps its source-row importance
    /// weight in the split criterion.
    DaSplit,
}

impl std::fmt::Display for BaggedVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaggedVariant::Naive => write!(f, "naive"),
            BaggedVariant::DaBootstrap => write!(f, "da_bootstrap"),
            BaggedVariant::DaSplit => write!(f, "da_split"),
        }
    }
}

/// An ensemble of unpruned, depth-capped trees; the prediction is the
/// unweighted mean of member predictions.
#[derive(Debug, Clone)]
pub struct BaggedModel {
    pub trees: Vec<Tree>,
    pub variant: BaggedVariant,
    pub task: TaskKind,
    pub seed: u64,
}

impl BaggedModel {
    pub fn predict(&self, rows: &Dataset) -> Result<Vec<f64>, PipelineError> {
        let mut acc = vec![0.0; rows.n_rows()];
        for tree in &self.trees {
            let out = tree.predict(rows)?;
            for (a, o) in acc.iter_mut().zip(out) {
                *a += o;
            }
        }
        let k = self.trees.len() as f64;
        for a in &mut acc {
            *a /= k;
        }
        Ok(acc)
    }
}

/// Draw `draws` indices by inverting a cumulative weight array: one uniform
/// draw in `[0, total)` per index, located by binary search. Uniform and
/// weighted bootstraps share this code path, so equal weights reproduce the
/// uniform draws bit-exactly.
pub fn bootstrap_indices<R: Rng>(rng: &mut R, cumulative: &[f64], draws: usize) -> Vec<usize> {
    let total = *cumulative.last().expect("nonempty cumulative weights");
    (0..draws)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
        })
        .collect()
}

fn cumulative_sum(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Fit a bagged ensemble. Member trees are grown unpruned with the given
/// depth and weight limits; tree `k` draws its bootstrap sample from an RNG
/// seeded with `derive(params.seed, k)`, so results are identical for any
/// worker count.
pub fn fit_bagged(
    d_train: &Dataset,
    variant: BaggedVariant,
    weights: Option<&WeightVector>,
    n_trees: usize,
    params: &FitParams,
    task: TaskKind,
) -> Result<BaggedModel, PipelineError> {
    if n_trees == 0 {
        return Err(PipelineError::Tree(TreeError::InvalidParams("n_trees must be >= 1".into())));
    }
    let n = d_train.n_rows();
    if matches!(variant, BaggedVariant::DaBootstrap | BaggedVariant::DaSplit) {
        let wv = weights.ok_or(PipelineError::MissingWeights)?;
        if wv.len() != n {
            return Err(PipelineError::WeightLength { expected: n, found: wv.len() });
        }
    }
    let mut member_params = *params;
    member_params.prune = false;

    let draw_cumulative = match variant {
        BaggedVariant::DaBootstrap => {
            cumulative_sum(weights.expect("checked above").values().iter().copied())
        }
        _ => cumulative_sum(std::iter::repeat(1.0).take(n)),
    };

    let trees = (0..n_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::rng_for(params.seed, k as u64);
            let rows = bootstrap_indices(&mut rng, &draw_cumulative, n);
            let sample = d_train.take_rows(&rows);
            let member_weights = match variant {
                BaggedVariant::DaSplit => {
                    let wv = weights.expect("checked above");
                    rows.iter().map(|&i| wv.values()[i]).collect()
                }
                _ => tree::unit_weights(n),
            };
            tree::grow(&sample, &member_weights, &tree::all_features(&sample), &member_params, task)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(BaggedModel { trees, variant, task, seed: params.seed })
}
