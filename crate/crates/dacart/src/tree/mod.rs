//! Weighted CART: exhaustive split search under an importance-weighted
//! criterion, recursive growth, cost-complexity pruning, prediction, and
//! gain-based variable importance.
//!
//! The split criterion generalizes the classical one by carrying a
//! non-negative weight per row. For regression a split's gain is the drop in
//! weighted sum of squared errors; for binary classification it is the drop
//! in weight-mass-scaled Gini impurity. With unit weights both reduce exactly
//! to unweighted CART.
//!
//! Determinism contract (shared by the pruning cross-validation and by any
//! external re-implementation that wants to reproduce fits bit-exactly):
//!
//! * candidate thresholds are the midpoints of consecutive distinct sorted
//!   values of a feature within the node (0.5 for a binary column);
//! * candidates are scanned in (feature ascending, threshold ascending)
//!   order, and a candidate replaces the incumbent best only when its gain
//!   exceeds the incumbent's by more than 1e-12 relative — so among
//!   near-ties the smallest feature index, then smallest threshold, wins;
//! * gains below 1e-12 of the parent impurity are treated as zero;
//! * rows route left iff `x[feature] <= threshold`;
//! * leaf values are weighted means accumulated in row order.

mod prune;
mod text;

pub use prune::{prune, prune_with_report, PruneReport};
pub use text::{read_tree_document, write_tree_document};

use crate::data::{ColumnSchema, Dataset};
use thiserror::Error;

/// Relative tolerance for gain ties and floating-point zero gains.
pub(crate) const GAIN_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("dataset has no response column")]
    MissingResponse,
    #[error("weight vector has length {found}, expected {expected}")]
    WeightLength { expected: usize, found: usize },
    #[error("weights must be finite, non-negative, with positive sum")]
    InvalidWeights,
    #[error("classification requires response values in {{0, 1}}")]
    NonBinaryResponse,
    #[error("invalid fit parameter: {0}")]
    InvalidParams(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("tree text format: {0}")]
    Text(String),
}

/// Prediction task. Classification is binary with response values in {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Classification,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskKind::Regression => write!(f, "regression"),
            TaskKind::Classification => write!(f, "classification"),
        }
    }
}

/// Deterministic resolution of equal-gain splits. There is one rule; the
/// field exists so fits record the contract they were built under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Smallest feature index, then smallest threshold.
    #[default]
    LowestFeatureThenThreshold,
}

/// Hyperparameters for growing and pruning one tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    /// Maximum number of split levels below the root.
    pub max_depth: usize,
    /// Minimum weight mass required in each child of a split.
    pub min_node_weight: f64,
    /// Minimum absolute criterion gain required to accept a split.
    pub min_gain: f64,
    /// Complexity penalty: a split must reduce the tree's root impurity mass
    /// by at least this fraction. Relative to the weighted root impurity, so
    /// weighted and unweighted fits get comparable tree sizes.
    pub complexity: f64,
    /// Apply cost-complexity pruning after growth.
    pub prune: bool,
    /// Folds for the weighted cross-validation that selects the pruning level.
    pub cv_folds: usize,
    pub tie_break: TieBreak,
    pub seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            max_depth: 30,
            min_node_weight: 10.0,
            min_gain: 0.0,
            complexity: 0.01,
            prune: true,
            cv_folds: 5,
            tie_break: TieBreak::default(),
            seed: 0,
        }
    }
}

impl FitParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.max_depth < 1 {
            return Err(TreeError::InvalidParams("max_depth must be >= 1".into()));
        }
        if !(self.min_node_weight > 0.0) {
            return Err(TreeError::InvalidParams("min_node_weight must be > 0".into()));
        }
        if self.min_gain < 0.0 {
            return Err(TreeError::InvalidParams("min_gain must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.complexity) {
            return Err(TreeError::InvalidParams("complexity must lie in [0, 1)".into()));
        }
        if self.cv_folds < 2 {
            return Err(TreeError::InvalidParams("cv_folds must be >= 2".into()));
        }
        Ok(())
    }
}

/// A chosen split: feature index, threshold, and the weighted criterion gain
/// it achieved on its node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub criterion_gain: f64,
}

/// One tree node. Rows route left iff `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal { split: SplitChoice, left: Box<Node>, right: Box<Node> },
    Leaf { value: f64, weight_mass: f64, count: usize },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// A fitted tree: root node plus the schema and parameters it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub root: Node,
    pub task: TaskKind,
    pub schema: Vec<ColumnSchema>,
    pub params: FitParams,
    candidates: Vec<usize>,
}

impl Tree {
    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn n_leaves(&self) -> usize {
        self.root.n_leaves()
    }

    /// Route each row to its leaf. For regression the output is the leaf's
    /// weighted mean; for classification the weighted proportion of class 1.
    ///
    /// `rows` must contain every feature of the tree's schema (matched by
    /// name, kind must agree); extra columns are ignored.
    pub fn predict(&self, rows: &Dataset) -> Result<Vec<f64>, TreeError> {
        let map = self.column_map(rows)?;
        Ok((0..rows.n_rows()).map(|i| self.predict_mapped(rows, &map, i)).collect())
    }

    fn column_map(&self, rows: &Dataset) -> Result<Vec<usize>, TreeError> {
        self.schema
            .iter()
            .map(|col| {
                let j = rows
                    .feature_index(&col.name)
                    .ok_or_else(|| TreeError::SchemaMismatch(format!("missing column '{}'", col.name)))?;
                if rows.schema()[j].kind != col.kind {
                    return Err(TreeError::SchemaMismatch(format!(
                        "column '{}' is {} but the tree expects {}",
                        col.name,
                        rows.schema()[j].kind,
                        col.kind
                    )));
                }
                Ok(j)
            })
            .collect()
    }

    fn predict_mapped(&self, rows: &Dataset, map: &[usize], i: usize) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Internal { split, left, right } => {
                    node = if rows.column(map[split.feature])[i] <= split.threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Per-feature share of total criterion gain, normalized to sum 1.
    /// Features never split on get 0; a single-leaf tree yields all zeros.
    pub fn gain_importance(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.schema.len()];
        fn walk(node: &Node, sums: &mut [f64]) {
            if let Node::Internal { split, left, right } = node {
                sums[split.feature] += split.criterion_gain;
                walk(left, sums);
                walk(right, sums);
            }
        }
        walk(&self.root, &mut sums);
        let total: f64 = sums.iter().sum();
        if total > 0.0 {
            for s in &mut sums {
                *s /= total;
            }
        }
        sums
    }
}

/// Weighted impurity mass of a node from its sufficient statistics
/// (total weight, weighted response sum, weighted squared response sum).
///
/// Regression: weighted SSE around the weighted mean. Classification:
/// weight mass times Gini impurity `2p(1-p)`.
pub(crate) fn impurity_mass(task: TaskKind, w: f64, s1: f64, s2: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    match task {
        TaskKind::Regression => (s2 - s1 * s1 / w).max(0.0),
        TaskKind::Classification => (2.0 * s1 * (w - s1) / w).max(0.0),
    }
}

/// Squared-error resubstitution loss mass used by pruning; for a {0,1}
/// response this equals half the Gini mass, so it orders subtrees
/// consistently with the split criterion in both tasks.
pub(crate) fn sse_mass(w: f64, s1: f64, s2: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        (s2 - s1 * s1 / w).max(0.0)
    }
}

fn node_sums(rows: &[usize], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let mut sw = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &i in rows {
        sw += w[i];
        s1 += w[i] * y[i];
        s2 += w[i] * y[i] * y[i];
    }
    (sw, s1, s2)
}

/// Exhaustive search for the best split of a node.
///
/// Returns the `(feature, threshold)` maximizing weighted criterion gain over
/// all candidate features and all midpoint thresholds, or `None` when no
/// admissible split improves on `params.min_gain` (in particular when every
/// candidate feature is constant on the node).
pub fn best_split(
    rows: &[usize],
    data: &Dataset,
    weights: &[f64],
    candidates: &[usize],
    task: TaskKind,
    params: &FitParams,
) -> Option<SplitChoice> {
    let y = data.response()?;
    debug_assert!(!rows.is_empty());
    let (pw, ps1, ps2) = node_sums(rows, y, weights);
    if pw <= 0.0 {
        return None;
    }
    let parent = impurity_mass(task, pw, ps1, ps2);
    if parent <= 0.0 {
        return None;
    }

    let mut best: Option<SplitChoice> = None;
    let mut scratch: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
    for &j in candidates {
        let col = data.column(j);
        scratch.clear();
        scratch.extend(rows.iter().map(|&i| (col[i], weights[i], y[i])));
        // Stable sort keeps node-row order among equal values, so fits are
        // reproducible from the node's canonical row order alone.
        scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut tw = 0.0;
        let mut ts1 = 0.0;
        let mut ts2 = 0.0;
        for &(_, wi, yi) in scratch.iter() {
            tw += wi;
            ts1 += wi * yi;
            ts2 += wi * yi * yi;
        }

        let mut lw = 0.0;
        let mut ls1 = 0.0;
        let mut ls2 = 0.0;
        for k in 0..scratch.len().saturating_sub(1) {
            let (x, wi, yi) = scratch[k];
            lw += wi;
            ls1 += wi * yi;
            ls2 += wi * yi * yi;
            let x_next = scratch[k + 1].0;
            if x_next <= x {
                continue;
            }
            let mut threshold = x + (x_next - x) / 2.0;
            // Keep the midpoint strictly below the right block even when
            // rounding lands it on x_next.
            if threshold >= x_next {
                threshold = x;
            }
            let rw = tw - lw;
            if lw < params.min_node_weight || rw < params.min_node_weight {
                continue;
            }
            let left = impurity_mass(task, lw, ls1, ls2);
            let right = impurity_mass(task, rw, ts1 - ls1, ts2 - ls2);
            let mut gain = (parent - left - right).max(0.0);
            if gain <= GAIN_REL_TOL * parent {
                gain = 0.0;
            }
            if gain <= params.min_gain {
                continue;
            }
            let replaces = match &best {
                None => true,
                Some(b) => {
                    gain > b.criterion_gain
                        && gain - b.criterion_gain > GAIN_REL_TOL * gain.max(b.criterion_gain)
                }
            };
            if replaces {
                best = Some(SplitChoice { feature: j, threshold, criterion_gain: gain });
            }
        }
    }
    best
}

/// Grow a tree by recursive best-first splitting until the depth, weight,
/// or gain limits stop it. Does not prune; see [`fit`].
pub fn grow(
    data: &Dataset,
    weights: &[f64],
    candidates: &[usize],
    params: &FitParams,
    task: TaskKind,
) -> Result<Tree, TreeError> {
    params.validate()?;
    let n = data.n_rows();
    if n == 0 {
        return Err(TreeError::EmptyDataset);
    }
    let y = data.response().ok_or(TreeError::MissingResponse)?;
    if weights.len() != n {
        return Err(TreeError::WeightLength { expected: n, found: weights.len() });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(TreeError::InvalidWeights);
    }
    if task == TaskKind::Classification && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(TreeError::NonBinaryResponse);
    }
    for &j in candidates {
        if j >= data.n_features() {
            return Err(TreeError::SchemaMismatch(format!("candidate feature index {j} out of range")));
        }
    }

    let rows: Vec<usize> = (0..n).collect();
    // The complexity penalty is relative to this tree's own root impurity;
    // fold it into an absolute gain floor for the whole recursion.
    let (rw, rs1, rs2) = node_sums(&rows, y, weights);
    let root_impurity = impurity_mass(task, rw, rs1, rs2);
    let mut effective = *params;
    effective.min_gain = params.min_gain.max(params.complexity * root_impurity);
    let root = grow_node(&rows, 0, data, weights, candidates, &effective, task);
    Ok(Tree {
        root,
        task,
        schema: data.schema().to_vec(),
        params: *params,
        candidates: candidates.to_vec(),
    })
}

fn grow_node(
    rows: &[usize],
    depth: usize,
    data: &Dataset,
    weights: &[f64],
    candidates: &[usize],
    params: &FitParams,
    task: TaskKind,
) -> Node {
    let y = data.response().expect("checked in grow");
    let (w, s1, _) = node_sums(rows, y, weights);
    let leaf = Node::Leaf { value: s1 / w, weight_mass: w, count: rows.len() };
    if depth >= params.max_depth {
        return leaf;
    }
    let Some(split) = best_split(rows, data, weights, candidates, task, params) else {
        return leaf;
    };
    let col = data.column(split.feature);
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| col[i] <= split.threshold);
    Node::Internal {
        split,
        left: Box::new(grow_node(&left_rows, depth + 1, data, weights, candidates, params, task)),
        right: Box::new(grow_node(&right_rows, depth + 1, data, weights, candidates, params, task)),
    }
}

/// Grow and, when `params.prune` is set, prune with weighted cross-validation.
pub fn fit(
    data: &Dataset,
    weights: &[f64],
    candidates: &[usize],
    params: &FitParams,
    task: TaskKind,
) -> Result<Tree, TreeError> {
    let tree = grow(data, weights, candidates, params, task)?;
    if params.prune {
        prune(&tree, data, weights, params.cv_folds, params.seed)
    } else {
        Ok(tree)
    }
}

/// All feature indices of a dataset, the default candidate set.
pub fn all_features(data: &Dataset) -> Vec<usize> {
    (0..data.n_features()).collect()
}

/// Convenience: unit weight vector for unweighted fits.
pub fn unit_weights(n: usize) -> Vec<f64> {
    vec![1.0; n]
}
