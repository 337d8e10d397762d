//! The four workflows: synthetic validation, cross-validated training,
//! prediction and censoring-threshold sensitivity.

use std::path::{Path, PathBuf};

use weimix_core::dataio::{load_csv, make_folds, Dataset, FoldPlan, Schema};
use weimix_core::metrics::{concordance_index, horizon_cindex, mean_lifetimes, recensor, survival_probabilities, EvaluationResult};
use weimix_core::mixloss::{negative_log_likelihood, CensoringSpec};
use weimix_core::nn::{load_model, save_model, train_with_validation, EpochRecord, NetworkModel};
use weimix_core::synthgen::{generate, quantile, FunctionId, GeneratorSpec};
use weimix_core::Error;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{num, write_table, FoldReport};

pub const REPORT_FILE: &str = "report.csv";
pub const TRACE_FILE: &str = "loss_trace.csv";
pub const MODEL_FILE: &str = "model.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

pub fn load_dataset(data: &Path, schema: &Path) -> Result<Dataset, CliError> {
    let schema = Schema::from_file(schema)?;
    Ok(load_csv(data, &schema)?)
}

/// One fold's model, trained on the fold's training part with early
/// stopping on its validation part.
pub struct FoldRun {
    pub model: NetworkModel,
    pub trace: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub censoring: CensoringSpec,
    pub test: Dataset,
}

fn fold_seed(config: &RunConfig, fold: usize) -> u64 {
    config.seed.wrapping_add(fold as u64)
}

/// Trains fold `fold` of `plan`. `censoring` overrides the configured mode.
pub fn run_fold(
    dataset: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    config: &RunConfig,
    censoring: Option<CensoringSpec>,
) -> Result<FoldRun, CliError> {
    let split = plan.fold(fold);
    let train = dataset.select(&split.train);
    let val = dataset.select(&split.validation);
    if train.n_events() == 0 {
        return Err(CliError::data(format!("fold {}: no uncensored training records", fold + 1)));
    }
    let mut train_config = config.train_config();
    train_config.seed = fold_seed(config, fold);
    let censoring = match censoring {
        Some(c) => c,
        None => train_config.censoring.resolve(&train)?,
    };
    log::info!("fold {}: {} train / {} validation / {} test", fold + 1, train.n_rows(), val.n_rows(), split.test.len());
    let outcome = train_with_validation(&train, &val, &train_config, censoring, &mut |_| {})?;
    Ok(FoldRun {
        model: outcome.model,
        trace: outcome.trace,
        best_epoch: outcome.best_epoch,
        censoring: outcome.censoring,
        test: dataset.select(&split.test),
    })
}

fn trace_rows<'a>(prefix: &[String], trace: &'a [EpochRecord]) -> impl Iterator<Item = Vec<String>> + 'a {
    let prefix = prefix.to_vec();
    trace.iter().map(move |r| {
        let mut row = prefix.clone();
        row.extend([r.epoch.to_string(), num(r.train_nll), num(r.val_nll)]);
        row
    })
}

/// Held-out comparison of predicted and true likelihoods for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub function: FunctionId,
    pub p: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Mean per-record NLL on the test split at predicted parameters.
    pub nll_pred: f64,
    /// Mean per-record NLL on the test split at the true parameters.
    pub nll_real: f64,
    pub relative_gap: f64,
    pub best_epoch: usize,
    pub passed: bool,
}

pub fn synth_case(config: &RunConfig, function: FunctionId, p: usize) -> Result<(SynthCase, Vec<EpochRecord>), CliError> {
    let spec = GeneratorSpec {
        function,
        p,
        n: config.n_samples,
        censor_fraction: config.censor_fraction,
        seed: config.seed,
    };
    let (dataset, truth) = generate(&spec)?;
    let plan = make_folds(dataset.n_rows(), config.folds, config.val_fraction, config.seed)?;
    let mut run_config = config.clone();
    run_config.p = p;
    log::info!("synthetic {function} p={p}: n={}", dataset.n_rows());
    let run = run_fold(&dataset, &plan, 0, &run_config, Some(truth.censoring))?;

    let test_idx = &plan.fold(0).test;
    let test_truth = truth.subset(&dataset, test_idx)?;
    let x = run.model.standardize(run.test.features())?;
    let predicted = run.model.infer(&x)?;
    let n_test = run.test.n_rows() as f64;
    let nll_pred = negative_log_likelihood(&predicted, run.test.times(), run.test.events(), &truth.censoring)? / n_test;
    let nll_real = test_truth.nll / n_test;
    let relative_gap = (nll_pred - nll_real).abs() / nll_real.abs();
    let case = SynthCase {
        function,
        p,
        n_train: plan.fold(0).train.len(),
        n_test: test_idx.len(),
        nll_pred,
        nll_real,
        relative_gap,
        best_epoch: run.best_epoch,
        passed: relative_gap <= config.max_relative_gap,
    };
    Ok((case, run.trace))
}

pub fn cmd_synth_validate(
    config: &RunConfig,
    functions: &[FunctionId],
    ps: &[usize],
    out_dir: &Path,
) -> Result<Vec<SynthCase>, CliError> {
    ensure_dir(out_dir)?;
    let mut cases = Vec::new();
    let mut traces = Vec::new();
    for &function in functions {
        for &p in ps {
            let (case, trace) = synth_case(config, function, p)?;
            println!(
                "{function} p={p}: -LL_pred {:.6}  -LL_real {:.6}  gap {:.4}%{}",
                case.nll_pred,
                case.nll_real,
                100.0 * case.relative_gap,
                if case.passed { "" } else { "  (exceeds threshold)" }
            );
            traces.extend(trace_rows(&[function.to_string(), p.to_string()], &trace).collect::<Vec<_>>());
            cases.push(case);
        }
    }
    let rows: Vec<Vec<String>> = cases
        .iter()
        .map(|c| {
            vec![
                c.function.to_string(),
                c.p.to_string(),
                c.n_train.to_string(),
                c.n_test.to_string(),
                num(c.nll_pred),
                num(c.nll_real),
                num(c.relative_gap),
                c.best_epoch.to_string(),
                c.passed.to_string(),
            ]
        })
        .collect();
    let header = config.header_lines();
    write_table(
        &out_dir.join(REPORT_FILE),
        &header,
        &["function", "p", "n_train", "n_test", "nll_pred", "nll_real", "relative_gap", "best_epoch", "passed"],
        &rows,
    )?;
    write_table(&out_dir.join(TRACE_FILE), &header, &["function", "p", "epoch", "train_nll", "val_nll"], &traces)?;
    Ok(cases)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub folds: Vec<EvaluationResult>,
    pub summary: FoldReport,
    /// 0-based index of the fold whose model was saved.
    pub best_fold: usize,
}

/// k-fold cross-validation ranked by mean lifetime; saves the best fold's model.
pub fn cmd_train(config: &RunConfig, dataset: &Dataset, out_dir: &Path) -> Result<TrainReport, CliError> {
    ensure_dir(out_dir)?;
    let plan = make_folds(dataset.n_rows(), config.folds, config.val_fraction, config.seed)?;
    let mut folds = Vec::new();
    let mut traces = Vec::new();
    let mut best: Option<(f64, usize, NetworkModel)> = None;
    for fold in 0..plan.k() {
        let run = run_fold(dataset, &plan, fold, config, None)?;
        let x = run.model.standardize(run.test.features())?;
        let mu = mean_lifetimes(&run.model.infer(&x)?)?;
        let eval = concordance_index(run.test.times(), &mu, run.test.events())?;
        log::info!("fold {}: C-index {:.4}", fold + 1, eval.c_index);
        traces.extend(trace_rows(&[(fold + 1).to_string()], &run.trace).collect::<Vec<_>>());
        if best.as_ref().is_none_or(|(c, _, _)| eval.c_index > *c) {
            best = Some((eval.c_index, fold, run.model));
        }
        folds.push(eval);
    }
    let summary = FoldReport::new(folds.iter().map(|e| e.c_index).collect());
    let (_, best_fold, model) = best.expect("k >= 2 folds");
    save_model(&model, &out_dir.join(MODEL_FILE))?;

    let mut rows: Vec<Vec<String>> = folds
        .iter()
        .enumerate()
        .map(|(i, e)| {
            vec![(i + 1).to_string(), num(e.c_index), e.comparable_pairs.to_string(), e.concordant_pairs.to_string()]
        })
        .collect();
    for (label, v) in [("mean", summary.mean), ("ci95_lower", summary.lower), ("ci95_upper", summary.upper)] {
        rows.push(vec![label.into(), num(v), String::new(), String::new()]);
    }
    let header = config.header_lines();
    write_table(&out_dir.join(REPORT_FILE), &header, &["fold", "c_index", "comparable_pairs", "concordant_pairs"], &rows)?;
    write_table(&out_dir.join(TRACE_FILE), &header, &["fold", "epoch", "train_nll", "val_nll"], &traces)?;
    println!("C-index {} over {} folds; saved fold {} model", summary.display(), plan.k(), best_fold + 1);
    Ok(TrainReport { folds, summary, best_fold })
}

fn check_horizons(horizons: &[f64]) -> Result<(), CliError> {
    match horizons.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
        Some(h) => Err(CliError::config(format!("horizons must be > 0, got {h}"))),
        None => Ok(()),
    }
}

/// Writes `predictions.csv`: one row per record with the mean lifetime and
/// survival probabilities at each horizon.
pub fn cmd_predict(model_path: &Path, dataset: &Dataset, horizons: &[f64], out_dir: &Path) -> Result<PathBuf, CliError> {
    check_horizons(horizons)?;
    ensure_dir(out_dir)?;
    let model = load_model(model_path)?;
    let aligned = dataset.align_features(model.feature_names())?;
    let x = model.standardize(aligned.features())?;
    let params = model.infer(&x)?;
    let mu = mean_lifetimes(&params)?;
    let survival: Vec<Vec<f64>> = horizons
        .iter()
        .map(|&h| survival_probabilities(&params, h))
        .collect::<Result<_, Error>>()?;

    let mut header = vec!["row".to_string(), "mean_lifetime".to_string()];
    header.extend(horizons.iter().map(|h| format!("survival_at_{}", num(*h))));
    let rows: Vec<Vec<String>> = (0..mu.len())
        .map(|i| {
            let mut row = vec![(i + 1).to_string(), num(mu[i])];
            row.extend(survival.iter().map(|s| num(s[i])));
            row
        })
        .collect();
    let path = out_dir.join(PREDICTIONS_FILE);
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&path, &[], &header_refs, &rows)?;
    Ok(path)
}

/// Average horizon C-index at one (threshold, horizon) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub quantile: f64,
    pub threshold: f64,
    pub n_events: usize,
    pub horizon: f64,
    pub mean_c_index: f64,
    /// Folds where the C-index was defined.
    pub folds_used: usize,
}

/// Default horizon grid: deciles 0.1..0.9 of the observed times.
pub fn default_horizons(dataset: &Dataset) -> Vec<f64> {
    (1..=9).map(|k| quantile(dataset.times(), f64::from(k) / 10.0)).collect()
}

/// For each quantile `q`, recensors the data at the `q`-quantile of the
/// observed times (`q = 1` keeps the original indicators), runs k-fold
/// training and averages the horizon C-index across folds.
pub fn cmd_sensitivity(
    config: &RunConfig,
    dataset: &Dataset,
    quantiles: &[f64],
    horizons: &[f64],
    out_dir: &Path,
) -> Result<Vec<SensitivityRow>, CliError> {
    if quantiles.is_empty() {
        return Err(CliError::config("at least one quantile is required"));
    }
    if let Some(q) = quantiles.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
        return Err(CliError::config(format!("quantiles must be in (0, 1], got {q}")));
    }
    let horizons = if horizons.is_empty() { default_horizons(dataset) } else { horizons.to_vec() };
    check_horizons(&horizons)?;
    ensure_dir(out_dir)?;
    let plan = make_folds(dataset.n_rows(), config.folds, config.val_fraction, config.seed)?;

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for &q in quantiles {
        let (data, threshold, censoring) = if q < 1.0 {
            let t_c = quantile(dataset.times(), q);
            (recensor(dataset, t_c)?, t_c, Some(CensoringSpec::global(t_c)?))
        } else {
            (dataset.clone(), f64::INFINITY, None)
        };
        if data.n_events() == 0 {
            return Err(CliError::data(format!("recensoring at quantile {q} leaves no uncensored records")));
        }
        log::info!("quantile {q}: threshold {threshold}, {} events of {}", data.n_events(), data.n_rows());
        let mut sums = vec![0.0; horizons.len()];
        let mut used = vec![0usize; horizons.len()];
        for fold in 0..plan.k() {
            let run = run_fold(&data, &plan, fold, config, censoring)?;
            traces.extend(trace_rows(&[num(q), (fold + 1).to_string()], &run.trace).collect::<Vec<_>>());
            let x = run.model.standardize(run.test.features())?;
            for (h, &horizon) in horizons.iter().enumerate() {
                match horizon_cindex(&run.model, &x, run.test.times(), run.test.events(), horizon, config.ranking) {
                    Ok(e) => {
                        sums[h] += e.c_index;
                        used[h] += 1;
                    }
                    Err(Error::NoComparablePairs) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
        for (h, &horizon) in horizons.iter().enumerate() {
            rows.push(SensitivityRow {
                quantile: q,
                threshold,
                n_events: data.n_events(),
                horizon,
                mean_c_index: if used[h] > 0 { sums[h] / used[h] as f64 } else { f64::NAN },
                folds_used: used[h],
            });
        }
    }

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.quantile),
                num(r.threshold),
                r.n_events.to_string(),
                num(r.horizon),
                num(r.mean_c_index),
                r.folds_used.to_string(),
            ]
        })
        .collect();
    let header = config.header_lines();
    write_table(
        &out_dir.join(REPORT_FILE),
        &header,
        &["quantile", "threshold", "n_events", "horizon", "mean_c_index", "folds_used"],
        &table,
    )?;
    write_table(&out_dir.join(TRACE_FILE), &header, &["quantile", "fold", "epoch", "train_nll", "val_nll"], &traces)?;
    Ok(rows)
}

/// Mean over horizons of each quantile's average C-index, in input order.
pub fn threshold_averages(rows: &[SensitivityRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows.iter().filter(|r| r.mean_c_index.is_finite()) {
        match out.iter_mut().find(|(q, _, _)| *q == r.quantile) {
            Some(entry) => {
                entry.1 += r.mean_c_index;
                entry.2 += 1;
            }
            None => out.push((r.quantile, r.mean_c_index, 1)),
        }
    }
    out.into_iter().map(|(q, s, n)| (q, s / n as f64)).collect()
}
