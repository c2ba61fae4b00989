//! Minimal gradient-boosted trees with logistic loss.
//!
//! This is the ensemble model that estimates `P(W=1 | Z)`, the probability
//! that a row belongs to the target domain, from the pooled source and target
//! covariates. Plain gradient boosting: each round fits a depth-limited
//! regression tree to the residuals `w - p` (the negative gradient of the
//! logistic loss) with mean-of-residuals leaf values, no shrinkage tricks, no
//! subsampling, no early stopping. Fixed rounds keep runs deterministic and
//! comparable across scenarios; the weighting pipeline only consumes the
//! predicted probabilities.

use thiserror::Error;

use crate::data::{ColumnSchema, Dataset};
use crate::tree::{self, FitParams, TaskKind, Tree, TreeError};
use crate::weights::sigmoid;

#[derive(Debug, Error)]
pub enum BoostError {
    #[error("both domains must be nonempty")]
    EmptyDomain,
    #[error("source and target must share a schema")]
    SchemaMismatch,
    #[error("invalid boosting parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_node_weight: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams { rounds: 100, learning_rate: 0.1, max_depth: 3, min_node_weight: 10.0, seed: 0 }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<(), BoostError> {
        if self.rounds < 1 {
            return Err(BoostError::InvalidParams("rounds must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(BoostError::InvalidParams("learning_rate must lie in (0, 1]".into()));
        }
        if self.max_depth < 1 {
            return Err(BoostError::InvalidParams("max_depth must be >= 1".into()));
        }
        if !(self.min_node_weight > 0.0) {
            return Err(BoostError::InvalidParams("min_node_weight must be > 0".into()));
        }
        Ok(())
    }
}

/// A fitted domain-membership classifier.
#[derive(Debug, Clone)]
pub struct BoostedClassifier {
    base_score: f64,
    trees: Vec<Tree>,
    learning_rate: f64,
    schema: Vec<ColumnSchema>,
    /// Mean training logistic loss after each round, starting at round 0
    /// (base score only).
    loss_curve: Vec<f64>,
}

impl BoostedClassifier {
    /// A model with no trees that always predicts `sigmoid(base_score)`.
    pub fn constant(base_score: f64, schema: Vec<ColumnSchema>) -> Self {
        BoostedClassifier { base_score, trees: Vec::new(), learning_rate: 1.0, schema, loss_curve: Vec::new() }
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn loss_curve(&self) -> &[f64] {
        &self.loss_curve
    }

    /// `sigmoid(base_score + learning_rate * sum of tree outputs)` per row.
    /// Outputs lie strictly inside (0, 1).
    pub fn predict_proba(&self, rows: &Dataset) -> Result<Vec<f64>, BoostError> {
        for col in &self.schema {
            match rows.feature_index(&col.name) {
                Some(j) if rows.schema()[j].kind == col.kind => {}
                Some(_) => {
                    return Err(BoostError::SchemaMismatch);
                }
                None => return Err(BoostError::SchemaMismatch),
            }
        }
        let mut score = vec![self.base_score; rows.n_rows()];
        for tree in &self.trees {
            let out = tree.predict(rows)?;
            for (s, o) in score.iter_mut().zip(out) {
                *s += self.learning_rate * o;
            }
        }
        Ok(score.into_iter().map(sigmoid).collect())
    }
}

/// Fit the domain-membership model on pooled covariates: label 0 for source
/// rows, 1 for target rows.
///
/// The pooled rows are put into a canonical order (sorted by feature values,
/// then label) before fitting, so predictions are invariant to permuting
/// either domain's row order, bit for bit.
pub fn fit_propensity(
    z_source: &Dataset,
    z_target: &Dataset,
    params: &BoostParams,
) -> Result<BoostedClassifier, BoostError> {
    params.validate()?;
    let n = z_source.n_rows();
    let m = z_target.n_rows();
    if n == 0 || m == 0 {
        return Err(BoostError::EmptyDomain);
    }
    if z_source.schema() != z_target.schema() {
        return Err(BoostError::SchemaMismatch);
    }

    let features: Vec<usize> = (0..z_source.n_features()).collect();
    let pool = z_source
        .select_features(&features)
        .and_then(|s| {
            let t = z_target.select_features(&features)?;
            s.vstack(&t)
        })
        .map_err(|_| BoostError::SchemaMismatch)?;
    let mut labels: Vec<f64> = vec![0.0; n];
    labels.extend(std::iter::repeat(1.0).take(m));

    // Canonical pool order: lexicographic by features, then label.
    let mut order: Vec<usize> = (0..n + m).collect();
    order.sort_by(|&a, &b| {
        for j in 0..pool.n_features() {
            let col = pool.column(j);
            match col[a].partial_cmp(&col[b]).expect("finite values") {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        labels[a].partial_cmp(&labels[b]).expect("finite labels")
    });
    let pool = pool.take_rows(&order);
    let labels: Vec<f64> = order.iter().map(|&i| labels[i]).collect();
    let total = n + m;

    let base_score = (m as f64 / n as f64).ln();
    let mut score = vec![base_score; total];
    let tree_params = FitParams {
        max_depth: params.max_depth,
        min_node_weight: params.min_node_weight,
        min_gain: 0.0,
        complexity: 0.0,
        prune: false,
        cv_folds: 2,
        seed: params.seed,
        ..FitParams::default()
    };
    let unit = tree::unit_weights(total);
    let candidates = tree::all_features(&pool);

    let log_loss = |score: &[f64]| -> f64 {
        score
            .iter()
            .zip(&labels)
            .map(|(&f, &w)| {
                // -[w log p + (1-w) log(1-p)] in the stable log1p form
                let z = if w == 1.0 { -f } else { f };
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            })
            .sum::<f64>()
            / total as f64
    };

    let mut loss_curve = vec![log_loss(&score)];
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        let residuals: Vec<f64> =
            score.iter().zip(&labels).map(|(&f, &w)| w - sigmoid(f)).collect();
        let round_data = pool.with_response(residuals).map_err(|_| {
            BoostError::InvalidParams("residuals produced an invalid dataset".into())
        })?;
        let tree = tree::grow(&round_data, &unit, &candidates, &tree_params, TaskKind::Regression)?;
        let out = tree.predict(&pool)?;
        for (s, o) in score.iter_mut().zip(out) {
            *s += params.learning_rate * o;
        }
        loss_curve.push(log_loss(&score));
        trees.push(tree);
    }

    Ok(BoostedClassifier {
        base_score,
        trees,
        learning_rate: params.learning_rate,
        schema: z_source.schema().to_vec(),
        loss_curve,
    })
}
