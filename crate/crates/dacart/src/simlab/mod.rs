//! The simulation laboratory: data generators, domain-selection mechanisms,
//! metrics, the replication runner, and the linear-vs-tree bias demonstration.
//!
//! Everything here is deterministic given a master seed. Replication `r`
//! derives its own seed, generation and domain assignment derive theirs from
//! that, so studies reproduce bit-exactly regardless of worker count.

pub mod config;
mod metrics;
mod scenario;

pub use config::{parse_scenario_file, parse_scenario_str, ConfigError};
pub use metrics::{auc, ks_two_sample, rmse, MetricError};
pub use scenario::{
    build_scenario_data, run_study, EstimatorLabel, ModelSpec, Scenario, ScenarioData, StudyRecord,
    StudyResult, SummaryRow,
};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::seed::derive;
use crate::tree::{self, FitParams, TaskKind, TreeError};
use crate::weights::sigmoid;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("domain assignment left the {0} partition empty")]
    EmptyPartition(&'static str),
    #[error("acceptance rate too low: generated {generated} rows, still missing {missing} after cap")]
    AcceptanceTooLow { generated: usize, missing: usize },
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("replications must be >= 1")]
    NoReplications,
    #[error("true weights are only defined for the restricted and shifted mechanisms")]
    TrueWeightsUnavailable,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
    #[error(transparent)]
    Weight(#[from] crate::weights::WeightError),
}

/// Which synthetic population to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Five predictors, three of them noise:
    /// `y = 5 sin(x1 x2) + x1 + x1^2 + x2 + x2^2 + eps`,
    /// `x1 ~ N(0, sd 3)`, `x2, x4 ~ N(0, 1)`, `x3 ~ U(0, 1)`,
    /// `x5 ~ Gamma(shape 2, rate 1)`.
    MainSim,
    /// Three standard-normal predictors with a linear response:
    /// `y = 3 x1 + 2 x2 + 0.5 x3 + eps`.
    BiasDemo,
}

/// Generator choice plus the noise level (standard deviation of `eps`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub noise_sd: f64,
}

impl GeneratorSpec {
    pub fn main_sim() -> Self {
        GeneratorSpec { kind: GeneratorKind::MainSim, noise_sd: 1.0 }
    }

    pub fn bias_demo() -> Self {
        GeneratorSpec { kind: GeneratorKind::BiasDemo, noise_sd: 1.0 }
    }
}

/// Draw `n` i.i.d. rows from the generator. Deterministic given `seed`.
pub fn generate_pool(spec: &GeneratorSpec, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sd).expect("valid noise sd");
    match spec.kind {
        GeneratorKind::MainSim => {
            let sd3 = Normal::new(0.0, 3.0f64.sqrt()).expect("valid");
            let std = Normal::new(0.0, 1.0).expect("valid");
            let unif = Uniform::new(0.0, 1.0).expect("valid");
            let gamma = Gamma::new(2.0, 1.0).expect("valid");
            let x1: Vec<f64> = (0..n).map(|_| sd3.sample(&mut rng)).collect();
            let x2: Vec<f64> = (0..n).map(|_| std.sample(&mut rng)).collect();
            let x3: Vec<f64> = (0..n).map(|_| unif.sample(&mut rng)).collect();
            let x4: Vec<f64> = (0..n).map(|_| std.sample(&mut rng)).collect();
            let x5: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    5.0 * (x1[i] * x2[i]).sin()
                        + x1[i]
                        + x1[i] * x1[i]
                        + x2[i]
                        + x2[i] * x2[i]
                        + noise.sample(&mut rng)
                })
                .collect();
            Dataset::from_named_columns(
                &[("x1", x1), ("x2", x2), ("x3", x3), ("x4", x4), ("x5", x5)],
                Some(("y", y)),
            )
            .expect("generated data is valid")
        }
        GeneratorKind::BiasDemo => {
            let std = Normal::new(0.0, 1.0).expect("valid");
            let x1: Vec<f64> = (0..n).map(|_| std.sample(&mut rng)).collect();
            let x2: Vec<f64> = (0..n).map(|_| std.sample(&mut rng)).collect();
            let x3: Vec<f64> = (0..n).map(|_| std.sample(&mut rng)).collect();
            let y: Vec<f64> = (0..n)
                .map(|i| 3.0 * x1[i] + 2.0 * x2[i] + 0.5 * x3[i] + noise.sample(&mut rng))
                .collect();
            Dataset::from_named_columns(&[("x1", x1), ("x2", x2), ("x3", x3)], Some(("y", y)))
                .expect("generated data is valid")
        }
    }
}

/// How rows are assigned to the target domain (`W = 1`) versus source (`W = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMechanism {
    /// `P(W=1) = sigmoid(-|score - mean(score)| + 2)`: the target
    /// concentrates near the score center.
    Restricted,
    /// `P(W=1) = sigmoid(score - mean(score))`: the target shifts toward
    /// larger scores.
    Shifted,
    /// `P(W=1) = sigmoid(2 x2)`; used by the bias demonstration.
    BiasDemoLogit,
    /// `P(W=1) = 1/2` independent of covariates: source and target share one
    /// distribution (the non-discrepancy check).
    Uniform,
}

/// Score formula feeding the restricted/shifted mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFormula {
    X1,
    X1Plus2X4,
}

impl ScoreFormula {
    pub fn column_names(&self) -> &'static [&'static str] {
        match self {
            ScoreFormula::X1 => &["x1"],
            ScoreFormula::X1Plus2X4 => &["x1", "x4"],
        }
    }

    fn evaluate(&self, d: &Dataset) -> Result<Vec<f64>, SimError> {
        let col = |name: &str| -> Result<&[f64], SimError> {
            d.feature_index(name)
                .map(|j| d.column(j))
                .ok_or_else(|| SimError::Data(DataError::UnknownColumn(name.into())))
        };
        match self {
            ScoreFormula::X1 => Ok(col("x1")?.to_vec()),
            ScoreFormula::X1Plus2X4 => {
                let x1 = col("x1")?;
                let x4 = col("x4")?;
                Ok(x1.iter().zip(x4).map(|(a, b)| a + 2.0 * b).collect())
            }
        }
    }
}

/// Full description of one domain-selection process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionSpec {
    pub mechanism: SelectionMechanism,
    pub score: ScoreFormula,
}

/// Output of one domain assignment over a pool.
#[derive(Debug, Clone)]
pub struct DomainAssignment {
    /// Rows with `W = 0`.
    pub source: Dataset,
    /// Rows with `W = 1`.
    pub target: Dataset,
    /// Score value per source row (empty for score-free mechanisms).
    pub source_scores: Vec<f64>,
    /// Empirical score mean over the whole pool (0 for score-free mechanisms).
    pub score_mean: f64,
}

/// Compute scores, draw `W ~ Bernoulli(P(W=1))` per row, and partition the
/// pool. Errors when either partition ends up empty.
pub fn assign_domains(
    pool: &Dataset,
    sel: &SelectionSpec,
    seed: u64,
) -> Result<DomainAssignment, SimError> {
    let n = pool.n_rows();
    let (scores, score_mean, z): (Vec<f64>, f64, Vec<f64>) = match sel.mechanism {
        SelectionMechanism::Restricted | SelectionMechanism::Shifted => {
            let scores = sel.score.evaluate(pool)?;
            let mean = scores.iter().sum::<f64>() / n as f64;
            let z = scores
                .iter()
                .map(|&s| match sel.mechanism {
                    SelectionMechanism::Restricted => -(s - mean).abs() + 2.0,
                    _ => s - mean,
                })
                .collect();
            (scores, mean, z)
        }
        SelectionMechanism::BiasDemoLogit => {
            let j = pool
                .feature_index("x2")
                .ok_or_else(|| SimError::Data(DataError::UnknownColumn("x2".into())))?;
            let z = pool.column(j).iter().map(|&v| 2.0 * v).collect();
            (Vec::new(), 0.0, z)
        }
        SelectionMechanism::Uniform => (Vec::new(), 0.0, vec![0.0; n]),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source_rows = Vec::new();
    let mut target_rows = Vec::new();
    for (i, &zi) in z.iter().enumerate() {
        let u: f64 = rng.random();
        if u < sigmoid(zi) {
            target_rows.push(i);
        } else {
            source_rows.push(i);
        }
    }
    if source_rows.is_empty() {
        return Err(SimError::EmptyPartition("source"));
    }
    if target_rows.is_empty() {
        return Err(SimError::EmptyPartition("target"));
    }
    let source_scores = if scores.is_empty() {
        Vec::new()
    } else {
        source_rows.iter().map(|&i| scores[i]).collect()
    };
    Ok(DomainAssignment {
        source: pool.take_rows(&source_rows),
        target: pool.take_rows(&target_rows),
        source_scores,
        score_mean,
    })
}

/// Ordinary least squares with an intercept, solved by the normal equations.
#[derive(Debug, Clone)]
pub struct OlsModel {
    /// Intercept followed by one coefficient per feature column.
    pub coefficients: Vec<f64>,
}

impl OlsModel {
    pub fn predict(&self, d: &Dataset) -> Vec<f64> {
        (0..d.n_rows())
            .map(|i| {
                self.coefficients[0]
                    + (0..d.n_features())
                        .map(|j| self.coefficients[j + 1] * d.column(j)[i])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Fit OLS on all feature columns of a labeled dataset.
pub fn ols_fit(d: &Dataset) -> Result<OlsModel, SimError> {
    let y = d.response().ok_or(SimError::Tree(TreeError::MissingResponse))?;
    let n = d.n_rows();
    let p = d.n_features() + 1;
    // X^T X and X^T y with an implicit leading column of ones.
    let x = |i: usize, j: usize| -> f64 {
        if j == 0 {
            1.0
        } else {
            d.column(j - 1)[i]
        }
    };
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for i in 0..n {
        for a in 0..p {
            let xa = x(i, a);
            xty[a] += xa * y[i];
            for b in a..p {
                xtx[a][b] += xa * x(i, b);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[a][b] = xtx[b][a];
        }
    }
    let coefficients = solve_linear(&mut xtx, &mut xty)?;
    Ok(OlsModel { coefficients })
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_linear(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>, SimError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))
            .expect("nonempty");
        if a[pivot][col].abs() < 1e-12 {
            return Err(SimError::SingularSystem);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

/// Result of the linear-model-versus-tree bias demonstration.
#[derive(Debug, Clone)]
pub struct BiasDemoSummary {
    pub replications: usize,
    pub mean_ols_mse: f64,
    pub mean_cart_mse: f64,
}

/// Train OLS and a pruned CART on one biased half of a linear population and
/// evaluate both on the other half; average the test MSEs over replications.
///
/// Each replication draws 2000 rows, assigns `W ~ Bernoulli(sigmoid(2 x2))`,
/// trains on the `W = 1` partition and evaluates on `W = 0`. OLS includes the
/// selection variable `x2`, so it stays essentially unbiased; the tree's
/// axis-aligned splits do not, which is the point of the exercise.
pub fn bias_demo(replications: usize, seed: u64) -> Result<BiasDemoSummary, SimError> {
    if replications == 0 {
        return Err(SimError::NoReplications);
    }
    let spec = GeneratorSpec::bias_demo();
    let sel = SelectionSpec { mechanism: SelectionMechanism::BiasDemoLogit, score: ScoreFormula::X1 };
    let mut sum_ols = 0.0;
    let mut sum_cart = 0.0;
    for r in 0..replications {
        let rep_seed = derive(seed, r as u64);
        let pool = generate_pool(&spec, 2000, derive(rep_seed, 0));
        let assignment = assign_domains(&pool, &sel, derive(rep_seed, 1))?;
        // The demonstration's convention: train on the W = 1 partition,
        // evaluate on W = 0.
        let train = &assignment.target;
        let eval = &assignment.source;
        let truth = eval.response().expect("generated response");

        let ols = ols_fit(train)?;
        let ols_rmse = rmse(&ols.predict(eval), truth)?;
        sum_ols += ols_rmse * ols_rmse;

        let params = FitParams { seed: derive(rep_seed, 2), ..FitParams::default() };
        let cart = tree::fit(
            train,
            &tree::unit_weights(train.n_rows()),
            &tree::all_features(train),
            &params,
            TaskKind::Regression,
        )?;
        let cart_rmse = rmse(&cart.predict(eval)?, truth)?;
        sum_cart += cart_rmse * cart_rmse;
    }
    Ok(BiasDemoSummary {
        replications,
        mean_ols_mse: sum_ols / replications as f64,
        mean_cart_mse: sum_cart / replications as f64,
    })
}
