//! Property tests for the weighted tree: scale invariance, monotone-transform
//! invariance, leaf consistency, and agreement with an exhaustive oracle.

use dacart::data::Dataset;
use dacart::tree::{self, best_split, FitParams, Node, SplitChoice, TaskKind, Tree};
use proptest::prelude::*;

fn loose(min_node_weight: f64) -> FitParams {
    FitParams {
        min_node_weight,
        min_gain: 0.0,
        complexity: 0.0,
        prune: false,
        ..FitParams::default()
    }
}

fn dataset(columns: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
    let named: Vec<(String, Vec<f64>)> = columns
        .into_iter()
        .enumerate()
        .map(|(j, c)| (format!("x{}", j + 1), c))
        .collect();
    let refs: Vec<(&str, Vec<f64>)> =
        named.iter().map(|(n, c)| (n.as_str(), c.clone())).collect();
    Dataset::from_named_columns(&refs, Some(("y", y))).unwrap()
}

fn collect_leaves(node: &Node, out: &mut Vec<(f64, f64, usize)>) {
    match node {
        Node::Leaf { value, weight_mass, count } => out.push((*value, *weight_mass, *count)),
        Node::Internal { left, right, .. } => {
            collect_leaves(left, out);
            collect_leaves(right, out);
        }
    }
}

fn small_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (2usize..=10, 1usize..=3).prop_flat_map(|(n, p)| {
        let col = prop::collection::vec(-4.0f64..4.0, n);
        let cols = prop::collection::vec(col, p);
        let y = prop::collection::vec(-3.0f64..3.0, n);
        let w = prop::collection::vec(0.1f64..2.5, n);
        (cols, y, w)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_scaling_changes_gain_but_not_the_choice(
        (cols, y, w) in small_instance(),
        scale in 0.25f64..8.0,
    ) {
        let d = dataset(cols, y);
        let rows: Vec<usize> = (0..d.n_rows()).collect();
        let candidates = tree::all_features(&d);
        let params = loose(0.05);
        let base = best_split(&rows, &d, &w, &candidates, TaskKind::Regression, &params);
        let scaled_w: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let mut scaled_params = params;
        scaled_params.min_node_weight = params.min_node_weight * scale;
        let scaled = best_split(&rows, &d, &scaled_w, &candidates, TaskKind::Regression, &scaled_params);
        match (base, scaled) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                prop_assert_eq!(a.feature, b.feature);
                prop_assert_eq!(a.threshold, b.threshold);
                prop_assert!(
                    (b.criterion_gain - scale * a.criterion_gain).abs()
                        <= 1e-9 * (1.0 + scale * a.criterion_gain.abs())
                );
            }
            other => prop_assert!(false, "split presence changed under scaling: {other:?}"),
        }
    }

    #[test]
    fn monotone_transform_preserves_predictions_bit_exactly(
        (cols, y, w) in small_instance(),
    ) {
        let d = dataset(cols.clone(), y.clone());
        let candidates = tree::all_features(&d);
        let params = loose(0.05);
        let base = tree::grow(&d, &w, &candidates, &params, TaskKind::Regression).unwrap();
        let base_pred = base.predict(&d).unwrap();

        // x -> x^3 is strictly increasing and keeps binary columns binary-free
        // of concern (values in (-4, 4) are continuous here).
        let cubed: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| v * v * v).collect()).collect();
        let d3 = dataset(cubed, y);
        let transformed = tree::grow(&d3, &w, &candidates, &params, TaskKind::Regression).unwrap();
        prop_assert_eq!(transformed.predict(&d3).unwrap(), base_pred);
    }

    #[test]
    fn leaf_values_match_recomputed_weighted_means(
        (cols, y, w) in small_instance(),
    ) {
        let d = dataset(cols, y.clone());
        let candidates = tree::all_features(&d);
        let tree = tree::grow(&d, &w, &candidates, &loose(0.05), TaskKind::Regression).unwrap();
        let preds = tree.predict(&d).unwrap();
        // Group rows by their predicted leaf value and compare with the
        // weighted mean of the grouped responses.
        let mut leaves = Vec::new();
        collect_leaves(&tree.root, &mut leaves);
        for (value, weight_mass, _) in leaves {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..d.n_rows() {
                if preds[i] == value {
                    num += w[i] * y[i];
                    den += w[i];
                }
            }
            // Distinct leaves can share a value; then the pooled mean still
            // equals that value.
            if den > 0.0 {
                prop_assert!((num / den - value).abs() <= 1e-10 * value.abs().max(1.0));
            } else {
                prop_assert!(weight_mass >= 0.0);
            }
        }
    }

    #[test]
    fn classification_gain_is_never_negative(
        cols in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 8), 2),
        labels in prop::collection::vec(0u8..=1, 8),
        w in prop::collection::vec(0.05f64..3.0, 8),
    ) {
        let y: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
        let d = dataset(cols, y);
        let rows: Vec<usize> = (0..8).collect();
        if let Some(split) = best_split(&rows, &d, &w, &[0, 1], TaskKind::Classification, &loose(0.05)) {
            prop_assert!(split.criterion_gain >= 0.0);
        }
    }
}

// Exhaustive-search oracle implementing the documented split contract
// independently: every (feature, threshold) is evaluated from scratch.
mod oracle {
    use super::*;

    pub fn sums(rows: &[usize], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        for &i in rows {
            a += w[i];
            b += w[i] * y[i];
            c += w[i] * y[i] * y[i];
        }
        (a, b, c)
    }

    fn sse(rows: &[usize], y: &[f64], w: &[f64]) -> f64 {
        let (sw, s1, s2) = sums(rows, y, w);
        if sw <= 0.0 {
            0.0
        } else {
            (s2 - s1 * s1 / sw).max(0.0)
        }
    }

    pub fn best_split(
        rows: &[usize],
        d: &Dataset,
        w: &[f64],
        min_node_weight: f64,
    ) -> Option<SplitChoice> {
        let y = d.response().unwrap();
        let parent = sse(rows, y, w);
        if parent <= 0.0 {
            return None;
        }
        let mut best: Option<SplitChoice> = None;
        for j in 0..d.n_features() {
            let col = d.column(j);
            let mut values: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values.dedup();
            for pair in values.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                let left: Vec<usize> = rows.iter().copied().filter(|&i| col[i] <= threshold).collect();
                let right: Vec<usize> = rows.iter().copied().filter(|&i| col[i] > threshold).collect();
                let (lw, _, _) = sums(&left, y, w);
                let (rw, _, _) = sums(&right, y, w);
                if lw < min_node_weight || rw < min_node_weight {
                    continue;
                }
                let mut gain = (parent - sse(&left, y, w) - sse(&right, y, w)).max(0.0);
                if gain <= 1e-12 * parent {
                    gain = 0.0;
                }
                if gain <= 0.0 {
                    continue;
                }
                let replaces = match &best {
                    None => true,
                    Some(cur) => {
                        gain > cur.criterion_gain
                            && gain - cur.criterion_gain > 1e-12 * gain.max(cur.criterion_gain)
                    }
                };
                if replaces {
                    best = Some(SplitChoice { feature: j, threshold, criterion_gain: gain });
                }
            }
        }
        best
    }

    pub fn grow(d: &Dataset, w: &[f64], min_node_weight: f64, max_depth: usize) -> OracleNode {
        let rows: Vec<usize> = (0..d.n_rows()).collect();
        grow_node(&rows, d, w, min_node_weight, max_depth, 0)
    }

    #[derive(Debug, PartialEq)]
    pub enum OracleNode {
        Leaf { value: f64 },
        Split { feature: usize, threshold: f64, left: Box<OracleNode>, right: Box<OracleNode> },
    }

    fn grow_node(
        rows: &[usize],
        d: &Dataset,
        w: &[f64],
        min_node_weight: f64,
        max_depth: usize,
        depth: usize,
    ) -> OracleNode {
        let y = d.response().unwrap();
        let (sw, s1, _) = sums(rows, y, w);
        let leaf = OracleNode::Leaf { value: s1 / sw };
        if depth >= max_depth {
            return leaf;
        }
        match best_split(rows, d, w, min_node_weight) {
            None => leaf,
            Some(split) => {
                let col = d.column(split.feature);
                let left: Vec<usize> =
                    rows.iter().copied().filter(|&i| col[i] <= split.threshold).collect();
                let right: Vec<usize> =
                    rows.iter().copied().filter(|&i| col[i] > split.threshold).collect();
                OracleNode::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: Box::new(grow_node(&left, d, w, min_node_weight, max_depth, depth + 1)),
                    right: Box::new(grow_node(&right, d, w, min_node_weight, max_depth, depth + 1)),
                }
            }
        }
    }

    pub fn same_shape(tree: &Node, oracle: &OracleNode) -> bool {
        match (tree, oracle) {
            (Node::Leaf { value, .. }, OracleNode::Leaf { value: ov }) => value == ov,
            (
                Node::Internal { split, left, right },
                OracleNode::Split { feature, threshold, left: ol, right: or },
            ) => {
                split.feature == *feature
                    && split.threshold == *threshold
                    && same_shape(left, ol)
                    && same_shape(right, or)
            }
            _ => false,
        }
    }

    pub fn check_tree(tree: &Tree, oracle: &OracleNode) -> bool {
        same_shape(&tree.root, oracle)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn grow_matches_the_exhaustive_oracle(
        (cols, y, w) in small_instance(),
    ) {
        let d = dataset(cols, y);
        let candidates = tree::all_features(&d);
        let params = FitParams { max_depth: 2, ..loose(0.5) };
        let grown = tree::grow(&d, &w, &candidates, &params, TaskKind::Regression).unwrap();
        let reference = oracle::grow(&d, &w, 0.5, 2);
        prop_assert!(oracle::check_tree(&grown, &reference));
    }
}

#[test]
fn pruning_keeps_noise_trees_tiny() {
    // Pure-noise response: in at least 90% of seeded runs the pruned tree has
    // at most 3 leaves.
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    let mut small = 0;
    let runs = 50;
    for seed in 0..runs {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 500;
        let cols: Vec<Vec<f64>> =
            (0..3).map(|_| (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let d = dataset(cols, y);
        let params = FitParams { complexity: 0.0, seed, ..FitParams::default() };
        let tree = tree::fit(
            &d,
            &tree::unit_weights(n),
            &tree::all_features(&d),
            &params,
            TaskKind::Regression,
        )
        .unwrap();
        if tree.n_leaves() <= 3 {
            small += 1;
        }
    }
    assert!(small * 10 >= runs * 9, "only {small}/{runs} runs pruned to <= 3 leaves");
}

#[test]
fn cross_validated_loss_of_the_selected_level_respects_the_one_se_rule() {
    use dacart::tree::prune_with_report;

    let n = 400;
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.377).sin() * 3.0).collect();
    let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.abs() + (i as f64 * 0.7).cos() * 0.5).collect();
    let d = dataset(vec![x], y);
    let params = FitParams { complexity: 0.0, prune: false, min_node_weight: 4.0, ..FitParams::default() };
    let grown = tree::grow(&d, &tree::unit_weights(n), &[0], &params, TaskKind::Regression).unwrap();
    let (_, report) = prune_with_report(&grown, &d, &tree::unit_weights(n), 5, 9).unwrap();
    assert!(!report.cv_loss.is_empty());
    let min_loss = report.cv_loss[report.min_index];
    let budget = min_loss + report.cv_se[report.min_index];
    assert!(
        report.cv_loss[report.chosen_index] <= budget + 1e-12,
        "selected level exceeds the 1-SE budget"
    );
    // The selected level never has more leaves than the CV minimum.
    assert!(report.n_leaves[report.chosen_index] <= report.n_leaves[report.min_index]);
}
