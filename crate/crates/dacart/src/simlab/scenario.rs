//! Scenario descriptions and the seeded replication runner.
//!
//! A [`Scenario`] pins one simulation cell: the generating model, the
//! selection mechanism with its score, the source size, the model roster,
//! the replication count, and a master seed. [`run_study`] executes every
//! replication (concurrently; results are merged by replication index, so
//! worker count never changes the output) and emits long-format records.

use std::io::Write;

use rayon::prelude::*;

use super::{
    assign_domains, generate_pool, rmse, GeneratorSpec, ScoreFormula, SelectionMechanism,
    SelectionSpec, SimError,
};
use crate::boost::BoostParams;
use crate::data::{fmt_f64, Dataset};
use crate::pipeline::{
    estimate_weights, fit_bagged, fit_da_cart, select_variables, BaggedVariant, DaCartParams,
    PipelineError, VariableSelection, WeightEstimator, M1_SEED_STREAM, M3_SEED_STREAM,
    WEIGHT_SEED_STREAM,
};
use crate::seed::derive;
use crate::tree::{self, FitParams, TaskKind};
use crate::weights::{
    effective_sample_size, true_odds, KliepParams, ShiftMechanism, WeightSource, WeightVector,
    DEFAULT_TRUNC,
};

/// Which importance-weight estimator a domain-adaptive model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorLabel {
    /// Propensity odds on the step-1 selected features.
    Ew,
    /// Propensity odds on `x1` only.
    Ew1,
    /// Propensity odds on `x1` and `x4`.
    Ew2,
    /// Kernel density-ratio weights on the score variables.
    Ew3,
    /// True-mechanism weights (the selection process is known in simulation).
    Tw,
    /// Unit weights.
    Unit,
}

impl EstimatorLabel {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorLabel::Ew => "ew",
            EstimatorLabel::Ew1 => "ew1",
            EstimatorLabel::Ew2 => "ew2",
            EstimatorLabel::Ew3 => "ew3",
            EstimatorLabel::Tw => "tw",
            EstimatorLabel::Unit => "unit",
        }
    }

    fn index(&self) -> u64 {
        match self {
            EstimatorLabel::Ew => 0,
            EstimatorLabel::Ew1 => 1,
            EstimatorLabel::Ew2 => 2,
            EstimatorLabel::Ew3 => 3,
            EstimatorLabel::Tw => 4,
            EstimatorLabel::Unit => 5,
        }
    }

    /// Explicit weight-model features, when the label overrides the step-1
    /// selection.
    fn weight_features(&self, score: ScoreFormula) -> Option<Vec<String>> {
        match self {
            EstimatorLabel::Ew | EstimatorLabel::Tw | EstimatorLabel::Unit => None,
            EstimatorLabel::Ew1 => Some(vec!["x1".into()]),
            EstimatorLabel::Ew2 => Some(vec!["x1".into(), "x4".into()]),
            EstimatorLabel::Ew3 => {
                Some(score.column_names().iter().map(|s| s.to_string()).collect())
            }
        }
    }

    fn build(&self, data: &ScenarioData, trunc: (f64, f64)) -> Result<WeightEstimator, SimError> {
        Ok(match self {
            EstimatorLabel::Ew | EstimatorLabel::Ew1 | EstimatorLabel::Ew2 => {
                WeightEstimator::Propensity
            }
            EstimatorLabel::Ew3 => WeightEstimator::Kliep,
            EstimatorLabel::Unit => WeightEstimator::Unit,
            EstimatorLabel::Tw => {
                let odds = data
                    .true_odds
                    .as_ref()
                    .ok_or(SimError::TrueWeightsUnavailable)?;
                WeightEstimator::Precomputed(WeightVector::from_raw(
                    odds,
                    WeightSource::TrueMechanism,
                    trunc,
                )?)
            }
        })
    }
}

/// One model entry of a scenario's roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    /// Plain CART on the source domain, all features.
    Cart,
    /// CART trained on held-out target rows: the benchmark.
    TargetCart,
    /// The three-step domain-adaptive model.
    DaCart(EstimatorLabel),
    /// Bagged trees on the source domain, all features.
    Bt,
    /// Bagged trees trained on held-out target rows.
    TargetBt,
    /// Bagged trees with weight-proportional bootstrap draws.
    DaBtBootstrap(EstimatorLabel),
    /// Bagged trees with the weighted split criterion.
    DaBtSplit(EstimatorLabel),
}

impl ModelSpec {
    pub fn model_name(&self) -> &'static str {
        match self {
            ModelSpec::Cart => "cart",
            ModelSpec::TargetCart => "target-cart",
            ModelSpec::DaCart(_) => "da-cart",
            ModelSpec::Bt => "bt",
            ModelSpec::TargetBt => "target-bt",
            ModelSpec::DaBtBootstrap(_) => "da-bt-bootstrap",
            ModelSpec::DaBtSplit(_) => "da-bt-split",
        }
    }

    pub fn estimator_name(&self) -> &'static str {
        match self {
            ModelSpec::DaCart(label)
            | ModelSpec::DaBtBootstrap(label)
            | ModelSpec::DaBtSplit(label) => label.name(),
            _ => "",
        }
    }

    pub fn needs_target_train(&self) -> bool {
        matches!(self, ModelSpec::TargetCart | ModelSpec::TargetBt)
    }

    /// Stable per-model seed stream, independent of the roster order.
    fn seed_stream(&self) -> u64 {
        match self {
            ModelSpec::Cart => 10,
            ModelSpec::TargetCart => 11,
            ModelSpec::DaCart(label) => 20 + label.index(),
            ModelSpec::Bt => 30,
            ModelSpec::TargetBt => 31,
            ModelSpec::DaBtBootstrap(label) => 40 + label.index(),
            ModelSpec::DaBtSplit(label) => 50 + label.index(),
        }
    }
}

/// One simulation cell.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub generator: GeneratorSpec,
    pub selection: SelectionSpec,
    pub n_source: usize,
    pub n_target_test: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub models: Vec<ModelSpec>,
    /// Ensemble size for the bagged models.
    pub n_trees: usize,
    pub tree: FitParams,
    pub boost: BoostParams,
    pub kliep: KliepParams,
    pub trunc: (f64, f64),
    pub selection_threshold: f64,
}

impl Scenario {
    /// A scenario with the standard roster-independent defaults; callers fill
    /// in mechanism, sizes, and models.
    pub fn new(id: impl Into<String>, selection: SelectionSpec) -> Self {
        Scenario {
            id: id.into(),
            generator: GeneratorSpec::main_sim(),
            selection,
            n_source: 1000,
            n_target_test: 10_000,
            replications: 20,
            master_seed: 0,
            models: vec![ModelSpec::Cart],
            n_trees: 100,
            tree: FitParams::default(),
            boost: BoostParams::default(),
            kliep: KliepParams::default(),
            trunc: DEFAULT_TRUNC,
            selection_threshold: 0.85,
        }
    }
}

/// Data for one replication: labeled source training rows, the labeled
/// target test set, optional held-out target training rows, and the raw
/// true-mechanism odds for the source rows when the mechanism admits them.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub train_source: Dataset,
    pub test_target: Dataset,
    pub target_train: Option<Dataset>,
    pub true_odds: Option<Vec<f64>>,
}

fn shift_mechanism(m: SelectionMechanism) -> Option<ShiftMechanism> {
    match m {
        SelectionMechanism::Restricted => Some(ShiftMechanism::Restricted),
        SelectionMechanism::Shifted => Some(ShiftMechanism::Shifted),
        _ => None,
    }
}

/// Generate pools and assign domains until the source and target partitions
/// reach the sizes the scenario asks for, then truncate to exact sizes.
///
/// Each batch is assigned with its own empirical score mean; batches are
/// sized at four times the remaining need, so one batch almost always
/// suffices and per-batch means drift negligibly.
pub fn build_scenario_data(sc: &Scenario, replication: usize) -> Result<ScenarioData, SimError> {
    let rep_seed = derive(sc.master_seed, replication as u64);
    let need_target_train = sc.models.iter().any(ModelSpec::needs_target_train);
    let target_needed = sc.n_target_test + if need_target_train { sc.n_source } else { 0 };

    let mechanism = shift_mechanism(sc.selection.mechanism);
    let mut source_parts: Vec<Dataset> = Vec::new();
    let mut target_parts: Vec<Dataset> = Vec::new();
    let mut odds_parts: Vec<f64> = Vec::new();
    let mut source_have = 0usize;
    let mut target_have = 0usize;
    let mut generated = 0usize;
    let cap = 50 * (sc.n_source + target_needed);

    for batch in 0.. {
        if source_have >= sc.n_source && target_have >= target_needed {
            break;
        }
        if generated >= cap {
            return Err(SimError::AcceptanceTooLow {
                generated,
                missing: (sc.n_source.saturating_sub(source_have))
                    + target_needed.saturating_sub(target_have),
            });
        }
        let missing = (sc.n_source - source_have.min(sc.n_source))
            + (target_needed - target_have.min(target_needed));
        let batch_n = (4 * missing).max(1000);
        let pool = generate_pool(&sc.generator, batch_n, derive(rep_seed, 2 * batch));
        generated += batch_n;
        let assignment = match assign_domains(&pool, &sc.selection, derive(rep_seed, 2 * batch + 1)) {
            Ok(a) => a,
            // A batch with an empty partition contributes nothing; keep going
            // until the cap decides.
            Err(SimError::EmptyPartition(_)) => continue,
            Err(other) => return Err(other),
        };
        if let Some(mech) = mechanism {
            let batch_odds =
                true_odds(&assignment.source_scores, mech, assignment.score_mean, sc.trunc)?;
            odds_parts.extend(batch_odds);
        }
        source_have += assignment.source.n_rows();
        target_have += assignment.target.n_rows();
        source_parts.push(assignment.source);
        target_parts.push(assignment.target);
    }

    let source = concat(&source_parts)?;
    let target = concat(&target_parts)?;
    let take = |d: &Dataset, from: usize, len: usize| {
        let rows: Vec<usize> = (from..from + len).collect();
        d.take_rows(&rows)
    };
    let train_source = take(&source, 0, sc.n_source);
    let test_target = take(&target, 0, sc.n_target_test);
    let target_train =
        if need_target_train { Some(take(&target, sc.n_target_test, sc.n_source)) } else { None };
    let true_odds = mechanism.map(|_| odds_parts[..sc.n_source].to_vec());
    Ok(ScenarioData { train_source, test_target, target_train, true_odds })
}

fn concat(parts: &[Dataset]) -> Result<Dataset, SimError> {
    let mut iter = parts.iter();
    let first = iter.next().expect("at least one part").clone();
    let mut acc = first;
    for part in iter {
        acc = acc.vstack(part)?;
    }
    Ok(acc)
}

/// One long-format record.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub scenario: String,
    pub replication: usize,
    pub model: String,
    pub estimator: String,
    pub n_source: usize,
    pub metric: String,
    pub value: f64,
}

/// Per-model aggregate of one metric.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub model: String,
    pub estimator: String,
    pub metric: String,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// All records of a study plus any replications that failed.
#[derive(Debug, Clone, Default)]
pub struct StudyResult {
    pub records: Vec<StudyRecord>,
    pub failures: Vec<(usize, String)>,
}

impl StudyResult {
    /// Long-format CSV: `scenario,replication,model,estimator,n_source,metric,value`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "scenario,replication,model,estimator,n_source,metric,value")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.scenario,
                r.replication,
                r.model,
                r.estimator,
                r.n_source,
                r.metric,
                fmt_f64(r.value)
            )?;
        }
        Ok(())
    }

    /// Median and quartiles per `(model, estimator, metric)`, in first
    /// appearance order.
    pub fn summarize(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(String, String, String)> = Vec::new();
        for r in &self.records {
            let key = (r.model.clone(), r.estimator.clone(), r.metric.clone());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(model, estimator, metric)| {
                let mut values: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.model == model && r.estimator == estimator && r.metric == metric)
                    .map(|r| r.value)
                    .collect();
                values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
                SummaryRow {
                    model,
                    estimator,
                    metric,
                    count: values.len(),
                    median: quantile(&values, 0.5),
                    q1: quantile(&values, 0.25),
                    q3: quantile(&values, 0.75),
                }
            })
            .collect()
    }

    /// Median of one metric for one roster entry, if present.
    pub fn median(&self, model: &str, estimator: &str, metric: &str) -> Option<f64> {
        self.summarize()
            .into_iter()
            .find(|s| s.model == model && s.estimator == estimator && s.metric == metric)
            .map(|s| s.median)
    }
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Run every replication of a scenario. Failed replications are excluded
/// from the records and reported in `failures`.
pub fn run_study(sc: &Scenario) -> Result<StudyResult, SimError> {
    if sc.replications == 0 {
        return Err(SimError::NoReplications);
    }
    let outcomes: Vec<Result<Vec<StudyRecord>, String>> = (0..sc.replications)
        .into_par_iter()
        .map(|r| run_replication(sc, r).map_err(|e| e.to_string()))
        .collect();
    let mut result = StudyResult::default();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(mut records) => result.records.append(&mut records),
            Err(message) => result.failures.push((r, message)),
        }
    }
    Ok(result)
}

fn run_replication(sc: &Scenario, replication: usize) -> Result<Vec<StudyRecord>, SimError> {
    let data = build_scenario_data(sc, replication)?;
    let rep_seed = derive(sc.master_seed, replication as u64);
    let truth = data.test_target.response().expect("generated response");
    let mut records = Vec::new();
    for model in &sc.models {
        let seed = derive(rep_seed, model.seed_stream());
        let (pred, ess) = fit_and_predict(sc, &data, model, seed)?;
        let record = |metric: &str, value: f64| StudyRecord {
            scenario: sc.id.clone(),
            replication,
            model: model.model_name().into(),
            estimator: model.estimator_name().into(),
            n_source: sc.n_source,
            metric: metric.into(),
            value,
        };
        records.push(record("rmse", rmse(&pred, truth)?));
        if let Some(ess) = ess {
            records.push(record("ess", ess));
        }
    }
    Ok(records)
}

fn da_params(sc: &Scenario, weight_features: Option<Vec<String>>, seed: u64) -> DaCartParams {
    DaCartParams {
        tree: sc.tree,
        task: TaskKind::Regression,
        trunc: sc.trunc,
        boost: sc.boost,
        kliep: sc.kliep.clone(),
        selection_threshold: sc.selection_threshold,
        weight_features,
        seed,
    }
}

fn fit_and_predict(
    sc: &Scenario,
    data: &ScenarioData,
    model: &ModelSpec,
    seed: u64,
) -> Result<(Vec<f64>, Option<f64>), SimError> {
    let test = &data.test_target;
    match model {
        ModelSpec::Cart | ModelSpec::TargetCart => {
            let train = match model {
                ModelSpec::Cart => &data.train_source,
                _ => data.target_train.as_ref().expect("scenario provides target train rows"),
            };
            let params = FitParams { seed, ..sc.tree };
            let tree = tree::fit(
                train,
                &tree::unit_weights(train.n_rows()),
                &tree::all_features(train),
                &params,
                TaskKind::Regression,
            )?;
            Ok((tree.predict(test)?, None))
        }
        ModelSpec::DaCart(label) => {
            let estimator = label.build(data, sc.trunc)?;
            let params = da_params(sc, label.weight_features(sc.selection.score), seed);
            let fitted = fit_da_cart(&data.train_source, test, estimator, &params)?;
            let ess = effective_sample_size(&fitted.weights);
            Ok((fitted.predict(test)?, Some(ess)))
        }
        ModelSpec::Bt | ModelSpec::TargetBt => {
            let train = match model {
                ModelSpec::Bt => &data.train_source,
                _ => data.target_train.as_ref().expect("scenario provides target train rows"),
            };
            let params = FitParams { seed, ..sc.tree };
            let bag =
                fit_bagged(train, BaggedVariant::Naive, None, sc.n_trees, &params, TaskKind::Regression)?;
            Ok((bag.predict(test)?, None))
        }
        ModelSpec::DaBtBootstrap(label) | ModelSpec::DaBtSplit(label) => {
            let variant = match model {
                ModelSpec::DaBtBootstrap(_) => BaggedVariant::DaBootstrap,
                _ => BaggedVariant::DaSplit,
            };
            let train = &data.train_source;
            // Selection runs once, globally, exactly as for DA-CART.
            let mut m1_params = sc.tree;
            m1_params.seed = derive(seed, M1_SEED_STREAM);
            let selection = match select_variables(
                train,
                &m1_params,
                TaskKind::Regression,
                sc.selection_threshold,
            ) {
                Ok(sel) => sel,
                Err(PipelineError::NoInformativeVariables) => VariableSelection {
                    selected: tree::all_features(train),
                    shares: vec![0.0; train.n_features()],
                    cumulative_threshold: sc.selection_threshold,
                },
                Err(other) => return Err(other.into()),
            };
            let estimator = label.build(data, sc.trunc)?;
            let params = da_params(sc, label.weight_features(sc.selection.score), seed);
            let weight_indices: Vec<usize> = match &params.weight_features {
                Some(names) => names
                    .iter()
                    .map(|n| {
                        train
                            .feature_index(n)
                            .ok_or_else(|| PipelineError::UnknownFeature(n.clone()))
                    })
                    .collect::<Result<_, _>>()?,
                None => selection.selected.clone(),
            };
            let (weights, _) = estimate_weights(
                train,
                test,
                estimator,
                &weight_indices,
                &params,
                derive(seed, WEIGHT_SEED_STREAM),
            )?;
            let ess = effective_sample_size(&weights);
            let train_selected = train.select_features(&selection.selected)?;
            let bag_params = FitParams { seed: derive(seed, M3_SEED_STREAM), ..sc.tree };
            let bag = fit_bagged(
                &train_selected,
                variant,
                Some(&weights),
                sc.n_trees,
                &bag_params,
                TaskKind::Regression,
            )?;
            Ok((bag.predict(test)?, Some(ess)))
        }
    }
}
