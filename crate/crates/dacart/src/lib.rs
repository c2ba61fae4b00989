//! Domain-adaptive classification and regression trees.
//!
//! `dacart` fits CART-style trees whose split criterion is importance-weighted
//! to correct covariate shift between a labeled source domain and an unlabeled
//! target domain. The weights are density ratios estimated from truncated
//! propensity odds (via a small gradient-boosted classifier), from a kernel
//! density-ratio model, or supplied directly. The crate also ships the
//! simulation laboratory used to benchmark the method: scenario generators,
//! selection mechanisms, metrics, and a seeded replication runner that emits
//! long-format CSV.
//!
//! The guide in `book/` walks through the concepts chapter by chapter; every
//! code snippet there compiles as a doctest of this crate.
//!
//! # Quick start
//!
//! ```
//! use dacart::data::Dataset;
//! use dacart::pipeline::{DaCartParams, WeightEstimator, fit_da_cart};
//!
//! // Source rows are labeled, target rows are not.
//! let source = Dataset::from_named_columns(
//!     &[("x1", vec![-2.0, -1.5, -1.0, 0.0, 1.0, 1.5, 2.0, 3.0])],
//!     Some(("y", vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0])),
//! )
//! .unwrap();
//! let target = Dataset::from_named_columns(
//!     &[("x1", vec![0.4, 0.6, 0.8, 1.2, 1.4, 1.6, 1.8, 2.2])],
//!     None,
//! )
//! .unwrap();
//!
//! let mut params = DaCartParams::default();
//! params.tree.min_node_weight = 2.0;
//! params.seed = 7;
//! let model = fit_da_cart(&source, &target, WeightEstimator::Unit, &params).unwrap();
//! let preds = model.predict(&target).unwrap();
//! assert_eq!(preds.len(), target.n_rows());
//! ```

pub mod boost;
pub mod data;
pub mod pipeline;
pub mod seed;
pub mod simlab;
pub mod tree;
pub mod weights;

// Compile every snippet in the book as a doctest so the guide cannot drift
// from the API. https://github.com/rust-lang/mdBook/issues/706
#[cfg(doctest)]
mod booktest {
    macro_rules! booktest {
        ($name:ident, $path:expr) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    booktest!(introduction, "../../../book/src/introduction.md");
    booktest!(data_model, "../../../book/src/data-model.md");
    booktest!(weighted_trees, "../../../book/src/weighted-trees.md");
    booktest!(importance_weights, "../../../book/src/importance-weights.md");
    booktest!(da_pipeline, "../../../book/src/da-pipeline.md");
    booktest!(simulation_lab, "../../../book/src/simulation-lab.md");
}
