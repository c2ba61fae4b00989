//! Cost-complexity pruning with weighted cross-validation and the 1-SE rule.
//!
//! The resubstitution loss of a node is its weighted squared-error mass
//! (for a {0,1} response this is half the Gini mass, so subtree ordering is
//! consistent with the split criterion in both tasks). The weakest-link
//! sequence alpha_0 = 0 < alpha_1 < ... indexes nested subtrees; the pruning
//! level is chosen by weighted K-fold cross-validation, then relaxed to the
//! smallest subtree within one standard error of the minimum.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{grow, sse_mass, Node, SplitChoice, Tree, TreeError, GAIN_REL_TOL};
use crate::data::Dataset;

const NO_CHILD: usize = usize::MAX;

/// Flat tree copy annotated with per-node training sums.
struct Arena {
    split: Vec<Option<SplitChoice>>,
    left: Vec<usize>,
    right: Vec<usize>,
    w: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    count: Vec<usize>,
    collapsed: Vec<bool>,
}

impl Arena {
    fn from_tree(root: &Node, data: &Dataset, weights: &[f64]) -> Arena {
        let mut arena = Arena {
            split: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            w: Vec::new(),
            s1: Vec::new(),
            s2: Vec::new(),
            count: Vec::new(),
            collapsed: Vec::new(),
        };
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        arena.push_node(root, &rows, data, weights);
        arena
    }

    fn push_node(&mut self, node: &Node, rows: &[usize], data: &Dataset, weights: &[f64]) -> usize {
        let y = data.response().expect("pruning requires a response");
        let mut w = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for &i in rows {
            w += weights[i];
            s1 += weights[i] * y[i];
            s2 += weights[i] * y[i] * y[i];
        }
        let idx = self.split.len();
        self.split.push(None);
        self.left.push(NO_CHILD);
        self.right.push(NO_CHILD);
        self.w.push(w);
        self.s1.push(s1);
        self.s2.push(s2);
        self.count.push(rows.len());
        self.collapsed.push(false);
        if let Node::Internal { split, left, right } = node {
            let col = data.column(split.feature);
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| col[i] <= split.threshold);
            self.split[idx] = Some(*split);
            let l = self.push_node(left, &left_rows, data, weights);
            let r = self.push_node(right, &right_rows, data, weights);
            self.left[idx] = l;
            self.right[idx] = r;
        }
        idx
    }

    fn is_effective_leaf(&self, idx: usize) -> bool {
        self.collapsed[idx] || self.split[idx].is_none()
    }

    fn r_collapse(&self, idx: usize) -> f64 {
        sse_mass(self.w[idx], self.s1[idx], self.s2[idx])
    }

    /// Post-order pass: `(subtree loss, leaf count)` per node under the
    /// current collapse flags.
    fn subtree_stats(&self) -> Vec<(f64, usize)> {
        let mut stats = vec![(0.0, 0usize); self.split.len()];
        for idx in (0..self.split.len()).rev() {
            stats[idx] = if self.is_effective_leaf(idx) {
                (self.r_collapse(idx), 1)
            } else {
                let (rl, nl) = stats[self.left[idx]];
                let (rr, nr) = stats[self.right[idx]];
                (rl + rr, nl + nr)
            };
        }
        stats
    }

    /// Materialize the current effective tree.
    fn snapshot(&self, idx: usize) -> Node {
        if self.is_effective_leaf(idx) {
            Node::Leaf {
                value: self.s1[idx] / self.w[idx],
                weight_mass: self.w[idx],
                count: self.count[idx],
            }
        } else {
            Node::Internal {
                split: self.split[idx].expect("internal node"),
                left: Box::new(self.snapshot(self.left[idx])),
                right: Box::new(self.snapshot(self.right[idx])),
            }
        }
    }

    /// Mark every internal node whose loss reduction is floating-point zero
    /// as collapsed, cascading upward to a fixpoint.
    fn collapse_zero_gain(&mut self) {
        loop {
            let stats = self.subtree_stats();
            let mut changed = false;
            for idx in 0..self.split.len() {
                if self.is_effective_leaf(idx) {
                    continue;
                }
                let rc = self.r_collapse(idx);
                let rs = stats[idx].0;
                if rc - rs <= GAIN_REL_TOL * rc {
                    self.collapsed[idx] = true;
                    changed = true;
                }
            }
            if !changed {
                return;
            }
        }
    }

    /// Collapse flags for the smallest subtree minimizing `loss + alpha * leaves`,
    /// independent of the weakest-link state (used for fold trees).
    fn collapse_for_alpha(&self, alpha: f64) -> Vec<bool> {
        let n = self.split.len();
        let mut flags = vec![false; n];
        let mut best = vec![(0.0f64, 0usize); n];
        for idx in (0..n).rev() {
            if self.split[idx].is_none() {
                best[idx] = (self.r_collapse(idx), 1);
            } else {
                let (rl, nl) = best[self.left[idx]];
                let (rr, nr) = best[self.right[idx]];
                let keep = rl + rr;
                let leaves = nl + nr;
                let rc = self.r_collapse(idx);
                if rc - keep <= alpha * (leaves as f64 - 1.0) {
                    flags[idx] = true;
                    best[idx] = (rc, 1);
                } else {
                    best[idx] = (keep, leaves);
                }
            }
        }
        flags
    }

    /// Route one row of `data` under the given collapse flags.
    fn predict_row(&self, flags: &[bool], data: &Dataset, row: usize) -> f64 {
        let mut idx = 0;
        loop {
            if flags[idx] || self.split[idx].is_none() {
                return self.s1[idx] / self.w[idx];
            }
            let split = self.split[idx].expect("internal node");
            idx = if data.column(split.feature)[row] <= split.threshold {
                self.left[idx]
            } else {
                self.right[idx]
            };
        }
    }
}

/// The weakest-link sequence and the cross-validation table behind a pruning
/// decision.
#[derive(Debug, Clone)]
pub struct PruneReport {
    /// Increasing complexity penalties; index 0 is alpha = 0.
    pub alphas: Vec<f64>,
    /// Leaf count of the subtree at each alpha.
    pub n_leaves: Vec<usize>,
    /// Weighted cross-validated loss per alpha (empty if no CV ran).
    pub cv_loss: Vec<f64>,
    /// Standard error of each CV loss.
    pub cv_se: Vec<f64>,
    /// Index minimizing CV loss.
    pub min_index: usize,
    /// Index actually selected after the 1-SE rule.
    pub chosen_index: usize,
}

/// Weakest-link sequence of `(alpha, pruned root)` pairs for a grown tree.
fn cost_complexity_sequence(tree: &Tree, data: &Dataset, weights: &[f64]) -> Vec<(f64, Node)> {
    let mut arena = Arena::from_tree(&tree.root, data, weights);
    arena.collapse_zero_gain();
    let mut seq = vec![(0.0, arena.snapshot(0))];
    let mut prev_alpha = 0.0;
    while !arena.is_effective_leaf(0) {
        let stats = arena.subtree_stats();
        // Minimum g over effective internal nodes not under a collapsed one.
        let mut min_g = f64::INFINITY;
        let mut reachable = vec![false; arena.split.len()];
        reachable[0] = true;
        for idx in 0..arena.split.len() {
            if !reachable[idx] || arena.is_effective_leaf(idx) {
                continue;
            }
            reachable[arena.left[idx]] = true;
            reachable[arena.right[idx]] = true;
            let (rs, leaves) = stats[idx];
            let g = (arena.r_collapse(idx) - rs).max(0.0) / (leaves as f64 - 1.0);
            min_g = min_g.min(g);
        }
        let alpha = min_g;
        let mut reachable = vec![false; arena.split.len()];
        reachable[0] = true;
        for idx in 0..arena.split.len() {
            if !reachable[idx] {
                continue;
            }
            if !arena.is_effective_leaf(idx) {
                let (rs, leaves) = stats[idx];
                let g = (arena.r_collapse(idx) - rs).max(0.0) / (leaves as f64 - 1.0);
                if g <= alpha * (1.0 + GAIN_REL_TOL) {
                    arena.collapsed[idx] = true;
                } else {
                    reachable[arena.left[idx]] = true;
                    reachable[arena.right[idx]] = true;
                }
            }
        }
        let snap = arena.snapshot(0);
        if alpha <= prev_alpha * (1.0 + GAIN_REL_TOL) {
            // Same complexity level; keep one entry per distinct alpha.
            let last = seq.last_mut().expect("sequence is non-empty");
            last.1 = snap;
        } else {
            seq.push((alpha, snap));
            prev_alpha = alpha;
        }
    }
    seq
}

/// Prune a grown tree, returning the subtree selected by weighted
/// cross-validation with the 1-SE rule. Deterministic given `seed`.
pub fn prune(
    tree: &Tree,
    data: &Dataset,
    weights: &[f64],
    cv_folds: usize,
    seed: u64,
) -> Result<Tree, TreeError> {
    prune_with_report(tree, data, weights, cv_folds, seed).map(|(t, _)| t)
}

/// [`prune`] plus the alpha/CV table that justified the selection.
pub fn prune_with_report(
    tree: &Tree,
    data: &Dataset,
    weights: &[f64],
    cv_folds: usize,
    seed: u64,
) -> Result<(Tree, PruneReport), TreeError> {
    if cv_folds < 2 {
        return Err(TreeError::InvalidParams("cv_folds must be >= 2".into()));
    }
    let seq = cost_complexity_sequence(tree, data, weights);
    let n_leaves: Vec<usize> = seq.iter().map(|(_, root)| root.n_leaves()).collect();
    if seq.len() == 1 {
        let report = PruneReport {
            alphas: vec![0.0],
            n_leaves,
            cv_loss: Vec::new(),
            cv_se: Vec::new(),
            min_index: 0,
            chosen_index: 0,
        };
        return Ok((tree_with_root(tree, seq.into_iter().next().expect("nonempty").1), report));
    }

    // Representative alpha inside each interval of the sequence: geometric
    // means of consecutive alphas, and anything beyond the last for the tail.
    let alphas: Vec<f64> = seq.iter().map(|(a, _)| *a).collect();
    let mut test_alphas = Vec::with_capacity(alphas.len());
    for k in 0..alphas.len() {
        if k + 1 < alphas.len() {
            test_alphas.push((alphas[k] * alphas[k + 1]).sqrt());
        } else {
            test_alphas.push(alphas[k] * 2.0);
        }
    }

    let n = data.n_rows();
    let y = data.response().ok_or(TreeError::MissingResponse)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_of = vec![0usize; n];
    for (k, &row) in order.iter().enumerate() {
        fold_of[row] = k % cv_folds;
    }

    let k_levels = test_alphas.len();
    let mut sum_wl = vec![0.0; k_levels];
    let mut sum_wl2 = vec![0.0; k_levels];
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut grow_params = tree.params;
    grow_params.prune = false;

    for fold in 0..cv_folds {
        let train_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let test_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        if train_rows.is_empty() || test_rows.is_empty() {
            continue;
        }
        let train_w: Vec<f64> = train_rows.iter().map(|&i| weights[i]).collect();
        if train_w.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        let fold_data = data.take_rows(&train_rows);
        let fold_tree =
            match grow(&fold_data, &train_w, tree.candidates(), &grow_params, tree.task) {
                Ok(t) => t,
                Err(_) => continue,
            };
        let arena = Arena::from_tree(&fold_tree.root, &fold_data, &train_w);
        for (k, &alpha) in test_alphas.iter().enumerate() {
            let flags = arena.collapse_for_alpha(alpha);
            for &i in &test_rows {
                let pred = arena.predict_row(&flags, data, i);
                let loss = (pred - y[i]) * (pred - y[i]);
                sum_wl[k] += weights[i] * loss;
                sum_wl2[k] += weights[i] * loss * loss;
                if k == 0 {
                    sum_w += weights[i];
                    sum_w2 += weights[i] * weights[i];
                }
            }
        }
    }

    if sum_w <= 0.0 {
        // Cross-validation produced no usable folds; keep the alpha-0 tree.
        let report = PruneReport {
            alphas,
            n_leaves,
            cv_loss: Vec::new(),
            cv_se: Vec::new(),
            min_index: 0,
            chosen_index: 0,
        };
        return Ok((tree_with_root(tree, seq.into_iter().next().expect("nonempty").1), report));
    }

    let ess = sum_w * sum_w / sum_w2;
    let cv_loss: Vec<f64> = sum_wl.iter().map(|&s| s / sum_w).collect();
    let cv_se: Vec<f64> = cv_loss
        .iter()
        .zip(&sum_wl2)
        .map(|(&mean, &sl2)| ((sl2 / sum_w - mean * mean).max(0.0) / ess).sqrt())
        .collect();

    let mut min_index = 0;
    for k in 0..k_levels {
        if cv_loss[k] <= cv_loss[min_index] {
            min_index = k;
        }
    }
    let threshold = cv_loss[min_index] + cv_se[min_index];
    let mut chosen_index = min_index;
    for k in (min_index..k_levels).rev() {
        if cv_loss[k] <= threshold {
            chosen_index = k;
            break;
        }
    }

    let root = seq.into_iter().nth(chosen_index).expect("index within sequence").1;
    let report = PruneReport { alphas, n_leaves, cv_loss, cv_se, min_index, chosen_index };
    Ok((tree_with_root(tree, root), report))
}

fn tree_with_root(tree: &Tree, root: Node) -> Tree {
    Tree {
        root,
        task: tree.task,
        schema: tree.schema.clone(),
        params: tree.params,
        candidates: tree.candidates().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::tree::{FitParams, TaskKind};

    fn simple(x: Vec<f64>, y: Vec<f64>) -> Dataset {
        Dataset::from_named_columns(&[("x1", x)], Some(("y", y))).unwrap()
    }

    #[test]
    fn single_leaf_tree_is_returned_unchanged() {
        let d = simple(vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]);
        let params = FitParams { min_node_weight: 1.0, prune: false, ..FitParams::default() };
        let t = grow(&d, &[1.0; 3], &[0], &params, TaskKind::Regression).unwrap();
        assert!(t.root.is_leaf());
        let pruned = prune(&t, &d, &[1.0; 3], 3, 1).unwrap();
        assert_eq!(pruned.root, t.root);
    }

    #[test]
    fn zero_gain_split_collapses_to_a_leaf() {
        // A split that does not reduce SSE at all: y symmetric around the split.
        let d = simple(vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 1.0, 0.0, 1.0]);
        let params = FitParams {
            min_node_weight: 1.0,
            min_gain: 0.0,
            prune: false,
            ..FitParams::default()
        };
        let t = grow(&d, &[1.0; 4], &[0], &params, TaskKind::Regression).unwrap();
        let pruned = prune(&t, &d, &[1.0; 4], 2, 7).unwrap();
        // The weakest-link sequence starts at the zero-gain collapse, and
        // splits within this tree carry gain only from memorizing noise.
        assert!(pruned.n_leaves() <= t.n_leaves());
    }

    #[test]
    fn sequence_is_strictly_increasing_and_ends_at_root() {
        let x: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| if *v < 32.0 { 0.0 } else { 1.0 } + (v * 7.3).sin() * 0.1).collect();
        let d = simple(x, y);
        let params = FitParams { min_node_weight: 2.0, prune: false, ..FitParams::default() };
        let t = grow(&d, &[1.0; 64], &[0], &params, TaskKind::Regression).unwrap();
        let seq = cost_complexity_sequence(&t, &d, &[1.0; 64]);
        for pair in seq.windows(2) {
            assert!(pair[1].0 > pair[0].0);
            assert!(pair[1].1.n_leaves() < pair[0].1.n_leaves());
        }
        assert_eq!(seq.last().unwrap().1.n_leaves(), 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.91).cos()).collect();
        let d = simple(x, y);
        let params = FitParams { min_node_weight: 2.0, prune: false, ..FitParams::default() };
        let t = grow(&d, &[1.0; 50], &[0], &params, TaskKind::Regression).unwrap();
        let a = prune(&t, &d, &[1.0; 50], 5, 99).unwrap();
        let b = prune(&t, &d, &[1.0; 50], 5, 99).unwrap();
        assert_eq!(a.root, b.root);
    }
}
