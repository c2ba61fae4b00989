//! Implementations of the CLI subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use dacart::boost::{fit_propensity, BoostError, BoostParams};
use dacart::data::{fmt_f64, parse_dataset, DataError, Dataset, ParseOptions};
use dacart::pipeline::{
    estimate_weights, fit_bagged, fit_da_cart, select_variables, BaggedVariant, DaCartParams,
    PipelineError, VariableSelection, WeightEstimator, M1_SEED_STREAM, M3_SEED_STREAM,
    WEIGHT_SEED_STREAM,
};
use dacart::seed::derive;
use dacart::simlab::{bias_demo as run_bias_demo, parse_scenario_file, run_study, SimError};
use dacart::tree::{self, write_tree_document, FitParams, TaskKind, TreeError};
use dacart::weights::{
    count_truncated, effective_sample_size, kish_ess, kliep_weights, odds_bounds,
    odds_from_propensity, sigmoid, true_odds, KliepParams, ShiftMechanism, WeightError,
    WeightSource, WeightVector,
};

use crate::manifest::write_manifest;
use crate::model_file::ModelFile;
use crate::{
    BiasDemoArgs, EstimatorChoice, Failure, FitArgs, ImportanceArgs, MechanismChoice, ModelChoice,
    PredictArgs, SimulateArgs, TaskChoice, WeightFlags, WeightsArgs,
};

fn map_data(e: DataError) -> Failure {
    match e {
        DataError::Io { .. } => Failure::internal(e.to_string()),
        _ => Failure::usage(e.to_string()),
    }
}

fn map_tree(e: TreeError) -> Failure {
    match e {
        TreeError::InvalidWeights => Failure::degenerate(e.to_string()),
        _ => Failure::usage(e.to_string()),
    }
}

fn map_weight(e: WeightError) -> Failure {
    match e {
        WeightError::InvalidTruncation(..) | WeightError::EmptyInput | WeightError::SchemaMismatch => {
            Failure::usage(e.to_string())
        }
        _ => Failure::degenerate(e.to_string()),
    }
}

fn map_boost(e: BoostError) -> Failure {
    match e {
        BoostError::Tree(inner) => map_tree(inner),
        _ => Failure::usage(e.to_string()),
    }
}

fn map_pipeline(e: PipelineError) -> Failure {
    match e {
        PipelineError::NoInformativeVariables => Failure::degenerate(e.to_string()),
        PipelineError::Data(inner) => map_data(inner),
        PipelineError::Tree(inner) => map_tree(inner),
        PipelineError::Boost(inner) => map_boost(inner),
        PipelineError::Weight(inner) => map_weight(inner),
        _ => Failure::usage(e.to_string()),
    }
}

fn map_sim(e: SimError) -> Failure {
    match e {
        SimError::Data(inner) => map_data(inner),
        SimError::Tree(inner) => map_tree(inner),
        SimError::Pipeline(inner) => map_pipeline(inner),
        SimError::Weight(inner) => map_weight(inner),
        SimError::NoReplications | SimError::TrueWeightsUnavailable => Failure::usage(e.to_string()),
        _ => Failure::degenerate(e.to_string()),
    }
}

fn map_io(e: std::io::Error) -> Failure {
    Failure::internal(e.to_string())
}

fn resolve_task(choice: TaskChoice, d: &Dataset) -> TaskKind {
    match choice {
        TaskChoice::Regression => TaskKind::Regression,
        TaskChoice::Classification => TaskKind::Classification,
        TaskChoice::Auto => {
            let binary = d
                .response()
                .map(|y| y.iter().all(|&v| v == 0.0 || v == 1.0))
                .unwrap_or(false);
            if binary {
                TaskKind::Classification
            } else {
                TaskKind::Regression
            }
        }
    }
}

/// Parse a CSV of covariates, dropping the named response column when present.
fn parse_covariates(path: &Path, response: Option<&str>) -> Result<Dataset, Failure> {
    let d = parse_dataset(path, &ParseOptions::default()).map_err(map_data)?;
    match response {
        Some(name) if d.feature_index(name).is_some() => {
            let keep: Vec<usize> = (0..d.n_features())
                .filter(|&j| d.schema()[j].name != name)
                .collect();
            d.select_features(&keep).map_err(map_data)
        }
        _ => Ok(d),
    }
}

fn mechanism_of(choice: MechanismChoice) -> ShiftMechanism {
    match choice {
        MechanismChoice::Restricted => ShiftMechanism::Restricted,
        MechanismChoice::Shifted => ShiftMechanism::Shifted,
    }
}

fn boost_params(flags: &WeightFlags) -> BoostParams {
    BoostParams {
        rounds: flags.rounds,
        learning_rate: flags.learning_rate,
        max_depth: flags.boost_depth,
        min_node_weight: 10.0,
        seed: 0,
    }
}

fn kliep_params(flags: &WeightFlags) -> KliepParams {
    KliepParams {
        n_centers: flags.kliep_centers,
        sigma: flags.kliep_sigma,
        ..KliepParams::default()
    }
}

fn tree_params(flags: &crate::TreeFlags, seed: u64) -> Result<FitParams, Failure> {
    let params = FitParams {
        max_depth: flags.max_depth,
        min_node_weight: flags.min_node_weight,
        min_gain: flags.min_gain,
        complexity: flags.complexity,
        prune: !flags.no_prune,
        cv_folds: flags.cv_folds,
        seed,
        ..FitParams::default()
    };
    params.validate().map_err(map_tree)?;
    Ok(params)
}

/// Score vector and pooled mean for the known-mechanism estimator.
fn true_estimator(
    flags: &WeightFlags,
    d_source: &Dataset,
    x_target: Option<&Dataset>,
) -> Result<(ShiftMechanism, Vec<f64>, f64), Failure> {
    let column = flags
        .score_column
        .as_deref()
        .ok_or_else(|| Failure::usage("--estimator true requires --score-column"))?;
    let mechanism = flags
        .true_mechanism
        .ok_or_else(|| Failure::usage("--estimator true requires --true-mechanism"))?;
    let source_col = d_source
        .feature_index(column)
        .map(|j| d_source.column(j).to_vec())
        .ok_or_else(|| Failure::usage(format!("score column '{column}' not in source data")))?;
    let mut pooled = source_col.clone();
    if let Some(target) = x_target {
        let j = target
            .feature_index(column)
            .ok_or_else(|| Failure::usage(format!("score column '{column}' not in target data")))?;
        pooled.extend_from_slice(target.column(j));
    }
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    Ok((mechanism_of(mechanism), source_col, mean))
}

struct WeightReport {
    estimator: WeightSource,
    ess: f64,
    min: f64,
    max: f64,
    trunc_hits: usize,
}

impl WeightReport {
    fn from_vector(wv: &WeightVector, trunc_hits: usize) -> Self {
        WeightReport {
            estimator: wv.source_estimator(),
            ess: effective_sample_size(wv),
            min: wv.min(),
            max: wv.max(),
            trunc_hits,
        }
    }

    fn line(&self) -> String {
        format!(
            "weights estimator={} ess={} min={} max={} trunc_hits={}",
            self.estimator,
            fmt_f64(self.ess),
            fmt_f64(self.min),
            fmt_f64(self.max),
            self.trunc_hits
        )
    }
}

pub fn fit(args: FitArgs) -> Result<(), Failure> {
    let options = ParseOptions {
        response: Some(args.response.clone()),
        weights: args.weights_col.clone(),
        schema_hint: Vec::new(),
    };
    let mut d_source = parse_dataset(&args.source, &options).map_err(map_data)?;
    if let Some(names) = &args.features {
        let mut keep = names.clone();
        keep.dedup();
        d_source = d_source.select_features_by_name(&keep).map_err(map_data)?;
    }
    let task = resolve_task(args.task, &d_source);
    let is_da = matches!(
        args.model,
        ModelChoice::DaCart | ModelChoice::DaBtBootstrap | ModelChoice::DaBtSplit
    );
    if is_da && args.target.is_none() {
        return Err(Failure::usage("domain-adaptive models require --target"));
    }
    if args.weights_col.is_some() && args.model != ModelChoice::Cart {
        return Err(Failure::usage("--weights-col is only supported with --model cart"));
    }
    let x_target = match &args.target {
        Some(path) => Some(parse_covariates(path, Some(&args.response))?),
        None => None,
    };
    let trunc = (args.weights.trunc_lo, args.weights.trunc_hi);
    let params = tree_params(&args.tree, derive(args.seed, M3_SEED_STREAM))?;

    let mut report_lines: Vec<String> = vec![
        "dacart-fit-report v1".into(),
        format!("model {}", model_name(args.model)),
        format!("task {task}"),
        format!("seed {}", args.seed),
    ];

    let model_file = match args.model {
        ModelChoice::Cart => {
            let weights = match d_source.row_weights() {
                Some(w) => w.to_vec(),
                None => tree::unit_weights(d_source.n_rows()),
            };
            let tree = tree::fit(
                &d_source,
                &weights,
                &tree::all_features(&d_source),
                &params,
                task,
            )
            .map_err(map_tree)?;
            ModelFile {
                kind: "cart".into(),
                estimator: String::new(),
                selection: Vec::new(),
                fallback: false,
                trees: vec![tree],
            }
        }
        ModelChoice::Bt => {
            let bag = fit_bagged(&d_source, BaggedVariant::Naive, None, args.n_trees, &params, task)
                .map_err(map_pipeline)?;
            ModelFile {
                kind: "bt".into(),
                estimator: String::new(),
                selection: Vec::new(),
                fallback: false,
                trees: bag.trees,
            }
        }
        ModelChoice::DaCart => {
            let target = x_target.as_ref().expect("checked above");
            let estimator = match args.estimator {
                EstimatorChoice::Ew => WeightEstimator::Propensity,
                EstimatorChoice::Kliep => WeightEstimator::Kliep,
                EstimatorChoice::Unit => WeightEstimator::Unit,
                EstimatorChoice::True => {
                    let (mechanism, score, score_mean) =
                        true_estimator(&args.weights, &d_source, Some(target))?;
                    WeightEstimator::True { mechanism, score, score_mean }
                }
            };
            let da_params = DaCartParams {
                tree: FitParams { seed: 0, ..params },
                task,
                trunc,
                boost: boost_params(&args.weights),
                kliep: kliep_params(&args.weights),
                selection_threshold: args.threshold,
                weight_features: args.weights.weight_features.clone(),
                seed: args.seed,
            };
            let fitted = fit_da_cart(&d_source, target, estimator, &da_params).map_err(map_pipeline)?;
            if fitted.used_all_features_fallback {
                eprintln!("warning: selection tree had no splits; using all features");
            }
            push_selection_lines(&mut report_lines, &fitted.selection, &d_source);
            let trunc_hits = match &fitted.weight_model {
                Some(model) => {
                    let names = weight_feature_names(&args.weights, &fitted.selection, &d_source);
                    let z_s = d_source.select_features_by_name(&names).map_err(map_data)?;
                    let p = model.predict_proba(&z_s).map_err(map_boost)?;
                    count_truncated(&p, trunc)
                }
                None => 0,
            };
            report_lines.push(WeightReport::from_vector(&fitted.weights, trunc_hits).line());
            ModelFile {
                kind: "da-cart".into(),
                estimator: estimator_name(args.estimator).into(),
                selection: selection_pairs(&fitted.selection, &d_source),
                fallback: fitted.used_all_features_fallback,
                trees: vec![fitted.tree],
            }
        }
        ModelChoice::DaBtBootstrap | ModelChoice::DaBtSplit => {
            let target = x_target.as_ref().expect("checked above");
            let variant = if args.model == ModelChoice::DaBtBootstrap {
                BaggedVariant::DaBootstrap
            } else {
                BaggedVariant::DaSplit
            };
            let mut m1_params = FitParams { seed: derive(args.seed, M1_SEED_STREAM), ..params };
            m1_params.prune = true;
            let selection = match select_variables(&d_source, &m1_params, task, args.threshold) {
                Ok(sel) => sel,
                Err(PipelineError::NoInformativeVariables) => {
                    eprintln!("warning: selection tree had no splits; using all features");
                    VariableSelection {
                        selected: tree::all_features(&d_source),
                        shares: vec![0.0; d_source.n_features()],
                        cumulative_threshold: args.threshold,
                    }
                }
                Err(other) => return Err(map_pipeline(other)),
            };
            let estimator = match args.estimator {
                EstimatorChoice::Ew => WeightEstimator::Propensity,
                EstimatorChoice::Kliep => WeightEstimator::Kliep,
                EstimatorChoice::Unit => WeightEstimator::Unit,
                EstimatorChoice::True => {
                    let (mechanism, score, score_mean) =
                        true_estimator(&args.weights, &d_source, Some(target))?;
                    WeightEstimator::True { mechanism, score, score_mean }
                }
            };
            let da_params = DaCartParams {
                tree: FitParams { seed: 0, ..params },
                task,
                trunc,
                boost: boost_params(&args.weights),
                kliep: kliep_params(&args.weights),
                selection_threshold: args.threshold,
                weight_features: args.weights.weight_features.clone(),
                seed: args.seed,
            };
            let weight_indices: Vec<usize> = weight_feature_names(&args.weights, &selection, &d_source)
                .iter()
                .map(|n| {
                    d_source
                        .feature_index(n)
                        .ok_or_else(|| Failure::usage(format!("unknown feature '{n}'")))
                })
                .collect::<Result<_, _>>()?;
            let (weights, _) = estimate_weights(
                &d_source,
                target,
                estimator,
                &weight_indices,
                &da_params,
                derive(args.seed, WEIGHT_SEED_STREAM),
            )
            .map_err(map_pipeline)?;
            push_selection_lines(&mut report_lines, &selection, &d_source);
            report_lines.push(WeightReport::from_vector(&weights, 0).line());
            let d_selected = d_source.select_features(&selection.selected).map_err(map_data)?;
            let bag = fit_bagged(&d_selected, variant, Some(&weights), args.n_trees, &params, task)
                .map_err(map_pipeline)?;
            ModelFile {
                kind: model_name(args.model).into(),
                estimator: estimator_name(args.estimator).into(),
                selection: selection_pairs(&selection, &d_source),
                fallback: false,
                trees: bag.trees,
            }
        }
    };

    let mut out = BufWriter::new(File::create(&args.out).map_err(map_io)?);
    model_file.write(&mut out).map_err(map_io)?;
    out.flush().map_err(map_io)?;

    let mut outputs: Vec<&Path> = vec![&args.out];
    if let Some(report_path) = &args.report {
        let mut report = BufWriter::new(File::create(report_path).map_err(map_io)?);
        for line in &report_lines {
            writeln!(report, "{line}").map_err(map_io)?;
        }
        report.flush().map_err(map_io)?;
        outputs.push(report_path);
    }
    write_manifest(
        &outputs,
        Some(args.seed),
        &[
            ("model".into(), model_name(args.model).into()),
            ("task".into(), task.to_string()),
        ],
    )
    .map_err(map_io)?;

    println!("seed {}", args.seed);
    if args.dump_tree {
        let mut stdout = std::io::stdout().lock();
        for tree in &model_file.trees {
            write_tree_document(tree, &mut stdout).map_err(map_io)?;
        }
    }
    Ok(())
}

fn model_name(choice: ModelChoice) -> &'static str {
    match choice {
        ModelChoice::Cart => "cart",
        ModelChoice::DaCart => "da-cart",
        ModelChoice::Bt => "bt",
        ModelChoice::DaBtBootstrap => "da-bt-bootstrap",
        ModelChoice::DaBtSplit => "da-bt-split",
    }
}

fn estimator_name(choice: EstimatorChoice) -> &'static str {
    match choice {
        EstimatorChoice::Ew => "ew",
        EstimatorChoice::Kliep => "kliep",
        EstimatorChoice::True => "true",
        EstimatorChoice::Unit => "unit",
    }
}

fn weight_feature_names(
    flags: &WeightFlags,
    selection: &VariableSelection,
    d_source: &Dataset,
) -> Vec<String> {
    match &flags.weight_features {
        Some(names) => names.clone(),
        None => selection
            .selected
            .iter()
            .map(|&j| d_source.schema()[j].name.clone())
            .collect(),
    }
}

fn selection_pairs(selection: &VariableSelection, d: &Dataset) -> Vec<(String, f64)> {
    selection
        .selected
        .iter()
        .map(|&j| (d.schema()[j].name.clone(), selection.shares[j]))
        .collect()
}

fn push_selection_lines(lines: &mut Vec<String>, selection: &VariableSelection, d: &Dataset) {
    lines.push(format!(
        "selection threshold={} count={}",
        fmt_f64(selection.cumulative_threshold),
        selection.selected.len()
    ));
    let mut order: Vec<usize> = (0..selection.shares.len()).collect();
    order.sort_by(|&a, &b| {
        selection.shares[b].partial_cmp(&selection.shares[a]).expect("finite").then(a.cmp(&b))
    });
    for j in order {
        lines.push(format!(
            "feature {} share={} selected={}",
            d.schema()[j].name,
            fmt_f64(selection.shares[j]),
            selection.selected.contains(&j)
        ));
    }
}

pub fn predict(args: PredictArgs) -> Result<(), Failure> {
    let file = File::open(&args.model).map_err(|e| Failure::usage(format!("cannot open model: {e}")))?;
    let model = ModelFile::read(BufReader::new(file)).map_err(Failure::usage)?;

    let text = std::fs::read_to_string(&args.rows)
        .map_err(|e| Failure::usage(format!("cannot read rows file: {e}")))?;
    let has_data_rows = text.lines().skip(1).any(|l| !l.trim().is_empty());
    let mut out = BufWriter::new(File::create(&args.out).map_err(map_io)?);
    writeln!(out, "prediction").map_err(map_io)?;
    if has_data_rows {
        let mut options = ParseOptions::default();
        options.response = args
            .response
            .as_ref()
            .filter(|name| text.lines().next().is_some_and(|h| h.split(',').any(|c| c.trim() == name.as_str())))
            .cloned();
        let rows = parse_dataset(&args.rows, &options).map_err(map_data)?;
        let preds = model.predict(&rows).map_err(Failure::usage)?;
        for p in preds {
            writeln!(out, "{}", fmt_f64(p)).map_err(map_io)?;
        }
    }
    out.flush().map_err(map_io)?;
    write_manifest(&[&args.out], None, &[("model_file".into(), args.model.display().to_string())])
        .map_err(map_io)?;
    Ok(())
}

pub fn weights(args: WeightsArgs) -> Result<(), Failure> {
    let source = parse_covariates(&args.source, args.response.as_deref())?;
    let source = match &args.weights.weight_features {
        Some(names) => source.select_features_by_name(names).map_err(map_data)?,
        None => source,
    };
    let target = match &args.target {
        Some(path) => {
            let t = parse_covariates(path, args.response.as_deref())?;
            Some(match &args.weights.weight_features {
                Some(names) => t.select_features_by_name(names).map_err(map_data)?,
                None => t,
            })
        }
        None => None,
    };
    let trunc = (args.weights.trunc_lo, args.weights.trunc_hi);
    let n = source.n_rows();
    let weight_seed = derive(args.seed, WEIGHT_SEED_STREAM);

    // (propensity, raw odds, normalized weight) columns.
    let (propensity, raw, wv, trunc_hits): (Vec<Option<f64>>, Vec<f64>, WeightVector, usize) =
        match args.estimator {
            EstimatorChoice::Unit => {
                (vec![None; n], vec![1.0; n], WeightVector::unit(n), 0)
            }
            EstimatorChoice::Ew => {
                let target = target
                    .as_ref()
                    .ok_or_else(|| Failure::usage("--estimator ew requires --target"))?;
                let mut params = boost_params(&args.weights);
                params.seed = weight_seed;
                let model = fit_propensity(&source, target, &params).map_err(map_boost)?;
                let p = model.predict_proba(&source).map_err(map_boost)?;
                let odds = odds_from_propensity(&p, trunc).map_err(map_weight)?;
                let hits = count_truncated(&p, trunc);
                let wv = WeightVector::from_raw(&odds, WeightSource::PropensityOdds, trunc)
                    .map_err(map_weight)?;
                (p.into_iter().map(Some).collect(), odds, wv, hits)
            }
            EstimatorChoice::Kliep => {
                let target = target
                    .as_ref()
                    .ok_or_else(|| Failure::usage("--estimator kliep requires --target"))?;
                let mut params = kliep_params(&args.weights);
                params.seed = weight_seed;
                let result = kliep_weights(&source, target, &params).map_err(map_weight)?;
                (vec![None; n], result.raw_weights, result.weights, 0)
            }
            EstimatorChoice::True => {
                let (mechanism, score, score_mean) =
                    true_estimator(&args.weights, &source, target.as_ref())?;
                let odds = true_odds(&score, mechanism, score_mean, trunc).map_err(map_weight)?;
                let p: Vec<Option<f64>> = score
                    .iter()
                    .map(|&s| Some(sigmoid(mechanism.logit_argument(s, score_mean))))
                    .collect();
                let (lo, hi) = odds_bounds(trunc);
                let hits = score
                    .iter()
                    .map(|&s| mechanism.logit_argument(s, score_mean).exp())
                    .filter(|&o| o < lo || o > hi)
                    .count();
                let wv = WeightVector::from_raw(&odds, WeightSource::TrueMechanism, trunc)
                    .map_err(map_weight)?;
                (p, odds, wv, hits)
            }
        };

    let mut out = BufWriter::new(File::create(&args.out).map_err(map_io)?);
    writeln!(out, "row,propensity,raw_odds,weight").map_err(map_io)?;
    for i in 0..n {
        let p = propensity[i].map(fmt_f64).unwrap_or_default();
        writeln!(out, "{},{},{},{}", i + 1, p, fmt_f64(raw[i]), fmt_f64(wv.values()[i]))
            .map_err(map_io)?;
    }
    out.flush().map_err(map_io)?;
    write_manifest(
        &[&args.out],
        Some(args.seed),
        &[("estimator".into(), estimator_name(args.estimator).into())],
    )
    .map_err(map_io)?;

    println!("seed {}", args.seed);
    println!(
        "summary n={} ess={} min={} max={} trunc_hits={}",
        n,
        fmt_f64(kish_ess(wv.values())),
        fmt_f64(wv.min()),
        fmt_f64(wv.max()),
        trunc_hits
    );
    Ok(())
}

pub fn importance(args: ImportanceArgs) -> Result<(), Failure> {
    let options = ParseOptions { response: Some(args.response.clone()), ..ParseOptions::default() };
    let d = parse_dataset(&args.source, &options).map_err(map_data)?;
    let task = resolve_task(args.task, &d);
    let params = tree_params(&args.tree, derive(args.seed, M1_SEED_STREAM))?;
    let selection = select_variables(&d, &params, task, args.threshold).map_err(map_pipeline)?;

    let mut lines = vec![format!(
        "selection threshold={} count={}",
        fmt_f64(args.threshold),
        selection.selected.len()
    )];
    let mut order: Vec<usize> = (0..selection.shares.len()).collect();
    order.sort_by(|&a, &b| {
        selection.shares[b].partial_cmp(&selection.shares[a]).expect("finite").then(a.cmp(&b))
    });
    for j in order {
        lines.push(format!(
            "feature {} share={} selected={}",
            d.schema()[j].name,
            fmt_f64(selection.shares[j]),
            selection.selected.contains(&j)
        ));
    }
    println!("seed {}", args.seed);
    match &args.out {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path).map_err(map_io)?);
            for line in &lines {
                writeln!(out, "{line}").map_err(map_io)?;
            }
            out.flush().map_err(map_io)?;
            write_manifest(&[path], Some(args.seed), &[]).map_err(map_io)?;
        }
        None => {
            for line in &lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut sc = parse_scenario_file(&args.config).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(reps) = args.reps {
        sc.replications = reps;
    }
    if let Some(n) = args.n {
        sc.n_source = n;
    }
    if let Some(seed) = args.seed {
        sc.master_seed = seed;
    }
    if let Some(n_trees) = args.n_trees {
        sc.n_trees = n_trees;
    }

    let result = match args.workers {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build()
                .map_err(|e| Failure::internal(e.to_string()))?;
            pool.install(|| run_study(&sc))
        }
        None => run_study(&sc),
    }
    .map_err(map_sim)?;

    for (replication, message) in &result.failures {
        eprintln!("warning: replication {replication} failed: {message}");
    }
    if result.records.is_empty() {
        return Err(Failure::degenerate("every replication failed"));
    }

    let mut out = BufWriter::new(File::create(&args.out).map_err(map_io)?);
    result.write_csv(&mut out).map_err(map_io)?;
    out.flush().map_err(map_io)?;
    write_manifest(
        &[&args.out],
        Some(sc.master_seed),
        &[
            ("scenario".into(), sc.id.clone()),
            ("n_source".into(), sc.n_source.to_string()),
            ("replications".into(), sc.replications.to_string()),
            ("failures".into(), result.failures.len().to_string()),
        ],
    )
    .map_err(map_io)?;

    println!("seed {}", sc.master_seed);
    if args.summary {
        println!("model,estimator,metric,count,median,q1,q3");
        for row in result.summarize() {
            println!(
                "{},{},{},{},{},{},{}",
                row.model,
                row.estimator,
                row.metric,
                row.count,
                fmt_f64(row.median),
                fmt_f64(row.q1),
                fmt_f64(row.q3)
            );
        }
    }
    Ok(())
}

pub fn bias_demo(args: BiasDemoArgs) -> Result<(), Failure> {
    let summary = run_bias_demo(args.replications, args.seed).map_err(map_sim)?;
    let lines = [
        format!("replications {}", summary.replications),
        format!("mean_ols_mse {}", fmt_f64(summary.mean_ols_mse)),
        format!("mean_cart_mse {}", fmt_f64(summary.mean_cart_mse)),
        format!("mse_ratio {}", fmt_f64(summary.mean_cart_mse / summary.mean_ols_mse)),
    ];
    println!("seed {}", args.seed);
    for line in &lines {
        println!("{line}");
    }
    if let Some(path) = &args.out {
        let mut out = BufWriter::new(File::create(path).map_err(map_io)?);
        for line in &lines {
            writeln!(out, "{line}").map_err(map_io)?;
        }
        out.flush().map_err(map_io)?;
        write_manifest(&[path], Some(args.seed), &[]).map_err(map_io)?;
    }
    Ok(())
}
