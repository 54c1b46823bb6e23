use std::fmt::Write as _;
use std::path::Path;

use fredo_core::baseline::search_r;
use fredo_core::dataio::{chronological_split, load_csv, write_csv, Normalizer, TimeSeriesMatrix};
use fredo_core::dataio::{make_windows, ForecastWindow};
use fredo_core::dgpsim::{analytic_forecast_variance, monte_carlo_forecast_variance, ArProcess};
use fredo_core::eval::{paired_t_test, predictions_curve, univariate_compare, ErrorCurve};
use fredo_core::model::{
    self, param_count, predict_baseline, predict_dataset, Checkpoint, Predictions,
};
use fredo_core::spectral::estimate_period;
use fredo_core::synthetic::generate;
use fredo_core::AverageTileConfig;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::run::{Run, RunManifest};
use crate::Command;

pub const METRICS: &str = "metrics.json";
pub const ERROR_CURVE: &str = "error_curve.csv";
pub const BASELINE_CURVE: &str = "baseline_error_curve.csv";
pub const TTEST: &str = "ttest.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const PER_SERIES: &str = "per_series.csv";
pub const VARIANCE: &str = "variance.csv";
pub const SYNTHETIC: &str = "synthetic.csv";
pub const PERIODS: &str = "periods.json";

pub fn dispatch(cmd: &Command, cfg: RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    match cmd {
        Command::Baseline { .. } => baseline(cfg, out),
        Command::Train { .. } => train(cfg, out),
        Command::Eval { checkpoint, .. } => eval(cfg, checkpoint, out),
        Command::CompareDomains { .. } => compare_domains(cfg, out),
        Command::SimulateDgp { .. } => simulate_dgp(cfg, out),
        Command::GenSynthetic { .. } => gen_synthetic(cfg, out),
        Command::EstimatePeriod { max_period, .. } => estimate_periods(cfg, *max_period, out),
    }
}

/// Runs `body` inside a locked output directory; on error the partial
/// outputs are removed.
fn with_run(
    out: &Path,
    command: &str,
    cfg: &RunConfig,
    body: impl FnOnce(&mut Run) -> Result<(), CliError>,
) -> Result<RunManifest, CliError> {
    let mut run = Run::start(out, command)?;
    match body(&mut run) {
        Ok(()) => run.finish(cfg),
        Err(e) => {
            run.abort();
            Err(e)
        }
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<TimeSeriesMatrix, CliError> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| CliError::Config("data.path is required (set --data)".into()))?;
    Ok(load_csv(path, cfg.data.timestamp_col.as_deref())?)
}

struct Prepared {
    train: TimeSeriesMatrix,
    val: TimeSeriesMatrix,
    test: TimeSeriesMatrix,
}

/// Chronological split, then z-scoring with train-split statistics.
fn prepare(m: &TimeSeriesMatrix, cfg: &RunConfig) -> Result<Prepared, CliError> {
    let splits = chronological_split(m, cfg.split()?)?;
    let norm = Normalizer::fit(&splits.train)?;
    Ok(Prepared {
        train: norm.apply(&splits.train)?,
        val: norm.apply(&splits.val)?,
        test: norm.apply(&splits.test)?,
    })
}

fn split_windows(
    m: &TimeSeriesMatrix,
    input_len: usize,
    output_len: usize,
    stride: usize,
    split: &str,
) -> Result<Vec<ForecastWindow>, CliError> {
    make_windows(m, input_len, output_len, stride)
        .map_err(|e| CliError::Config(format!("{split} split: {e}")))
}

fn curve_csv(curve: &ErrorCurve) -> String {
    let mut s = String::from("horizon,mse,mae\n");
    for (h, (m, a)) in curve.horizon_mse.iter().zip(&curve.horizon_mae).enumerate() {
        let _ = writeln!(s, "{h},{m},{a}");
    }
    s
}

fn per_series_mse(p: &Predictions, n_series: usize) -> Result<Vec<f64>, CliError> {
    (0..n_series)
        .map(|n| {
            let (preds, targets) = p.for_series(n);
            Ok(fredo_core::eval::error_curve(&preds, &targets)?.aggregate_mse)
        })
        .collect()
}

fn baseline(cfg: RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let period = cfg.period()?;
    let output_len = cfg.output_len()?;
    let stride = cfg.stride()?;
    cfg.split()?;
    let fixed_r = cfg.r()?;
    AverageTileConfig::new(period, fixed_r)?;
    let m = load_dataset(&cfg)?;
    let data = prepare(&m, &cfg)?;

    let search = match &cfg.baseline.search_r {
        Some(cands) => Some(search_r(
            &data.val,
            period,
            cands,
            cfg.baseline.max_input_len,
            output_len,
            stride,
        )?),
        None => None,
    };
    let r = search.as_ref().map_or(fixed_r, |s| s.best_r);
    let at = AverageTileConfig::new(period, r)?;
    let preds = predict_baseline(at, output_len, &data.test, stride)?;
    let curve = predictions_curve(&preds)?;

    let metrics = json!({
        "model": "average_tile",
        "period": period,
        "r": r,
        "input_len": at.input_len(),
        "output_len": output_len,
        "n_series": m.n_series(),
        "n_windows": preds.len(),
        "test_mse": curve.aggregate_mse,
        "test_mae": curve.aggregate_mae,
        "r_search": search.as_ref().map(|s| &s.table),
    });
    with_run(out, "baseline", &cfg, |run| {
        run.write_json(METRICS, &metrics)?;
        run.write(ERROR_CURVE, curve_csv(&curve).as_bytes())?;
        run.detail("chosen_r", r);
        Ok(())
    })
}

fn train(cfg: RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let fc = cfg.forecaster()?;
    let stride = cfg.stride()?;
    cfg.split()?;
    let m = load_dataset(&cfg)?;
    let data = prepare(&m, &cfg)?;
    let train_w = split_windows(&data.train, fc.input_len, fc.output_len, stride, "train")?;
    let val_w = split_windows(&data.val, fc.input_len, fc.output_len, stride, "validation")?;
    let (params, report) = model::train(&fc, &train_w, &val_w)?;
    let checkpoint = Checkpoint::new(&fc, &params)?;

    let metrics = json!({
        "domain": fc.domain,
        "input_len": fc.input_len,
        "output_len": fc.output_len,
        "depth": fc.depth,
        "param_count": param_count(&fc)?,
        "n_train_windows": train_w.len(),
        "n_val_windows": val_w.len(),
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "initial_val_mse": report.initial_val_loss,
        "best_val_mse": report.best_val_loss,
        "train_loss": report.train_loss,
        "val_loss": report.val_loss,
    });
    with_run(out, "train", &cfg, |run| {
        run.write_json(CHECKPOINT, &checkpoint)?;
        run.write_json(METRICS, &metrics)?;
        run.detail("train_wall_time_secs", report.wall_time_secs);
        Ok(())
    })
}

fn eval(mut cfg: RunConfig, checkpoint: &Path, out: &Path) -> Result<RunManifest, CliError> {
    if !checkpoint.exists() {
        return Err(CliError::MissingFile(checkpoint.to_path_buf()));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let fc = ck.config;
    let params = ck.params()?;
    // The checkpoint fixes the shapes; flags may only repeat them.
    for (what, flag, have) in [
        ("period", cfg.model.period, fc.period),
        ("input_len", cfg.model.input_len, fc.input_len),
        ("output_len", cfg.model.output_len, fc.output_len),
    ] {
        if flag.is_some_and(|v| v != have) {
            return Err(CliError::Config(format!(
                "{what} = {} conflicts with the checkpoint ({have})",
                flag.unwrap()
            )));
        }
    }
    cfg.model.period = Some(fc.period);
    cfg.model.input_len = Some(fc.input_len);
    cfg.model.output_len = Some(fc.output_len);
    cfg.model.r = fc.r;
    cfg.model.depth = fc.depth;
    cfg.model.domain = fc.domain;
    let stride = cfg.stride()?;
    cfg.split()?;

    let m = load_dataset(&cfg)?;
    let data = prepare(&m, &cfg)?;
    split_windows(&data.test, fc.input_len, fc.output_len, stride, "test")?;
    let preds = predict_dataset(&params, &fc, &data.test, stride)?;
    let base = predict_baseline(fc.baseline(), fc.output_len, &data.test, stride)?;
    let curve = predictions_curve(&preds)?;
    let base_curve = predictions_curve(&base)?;

    let metrics = json!({
        "domain": fc.domain,
        "n_series": m.n_series(),
        "n_windows": preds.len(),
        "test_mse": curve.aggregate_mse,
        "test_mae": curve.aggregate_mae,
        "baseline_test_mse": base_curve.aggregate_mse,
        "baseline_test_mae": base_curve.aggregate_mae,
    });
    // Model against AverageTile across series.
    let ttest = if m.n_series() < 2 {
        json!({ "skipped": "needs at least 2 series" })
    } else {
        let a = per_series_mse(&preds, m.n_series())?;
        let b = per_series_mse(&base, m.n_series())?;
        match paired_t_test(&a, &b) {
            Ok(t) => json!({ "a": "model", "b": "average_tile", "mse": t }),
            Err(e) => json!({ "skipped": e.to_string() }),
        }
    };
    with_run(out, "eval", &cfg, |run| {
        run.write_json(METRICS, &metrics)?;
        run.write(ERROR_CURVE, curve_csv(&curve).as_bytes())?;
        run.write(BASELINE_CURVE, curve_csv(&base_curve).as_bytes())?;
        run.write_json(TTEST, &ttest)?;
        run.detail("checkpoint", checkpoint.display().to_string());
        Ok(())
    })
}

fn compare_domains(mut cfg: RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let synthetic = cfg.data.path.is_none();
    if synthetic && cfg.model.period.is_none() {
        cfg.model.period = Some(cfg.synthetic.period);
    }
    let template = cfg.forecaster()?;
    let stride = cfg.stride()?;
    let split = cfg.split()?;
    let m = if synthetic {
        generate(&cfg.synthetic)?
    } else {
        load_dataset(&cfg)?
    };
    let report = univariate_compare(&m, split, &template, stride, cfg.seed)?;

    let mut rows = String::from(
        "index,name,fredo_mse,timedo_mse,baseline_mse,fredo_mae,timedo_mae,baseline_mae,params,fredo_best_epoch,timedo_best_epoch\n",
    );
    for s in &report.per_series {
        let _ = writeln!(
            rows,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.index,
            s.name,
            s.a_mse,
            s.b_mse,
            s.baseline_mse,
            s.a_mae,
            s.b_mae,
            s.baseline_mae,
            s.a_params,
            s.a_best_epoch,
            s.b_best_epoch
        );
    }
    let metrics = json!({
        "n_series": report.per_series.len(),
        "param_count": param_count(&template)?,
        "mean_fredo_mse": report.mean_a_mse,
        "mean_timedo_mse": report.mean_b_mse,
        "mean_baseline_mse": report.mean_baseline_mse,
        "mean_fredo_mae": report.mean_a_mae,
        "mean_timedo_mae": report.mean_b_mae,
        "mean_baseline_mae": report.mean_baseline_mae,
    });
    let ttest = json!({
        "a": "fredo",
        "b": "timedo",
        "n": report.ttest_mse.n,
        "mse": report.ttest_mse,
        "mae": report.ttest_mae,
    });
    with_run(out, "compare-domains", &cfg, |run| {
        run.write_json(METRICS, &metrics)?;
        run.write(PER_SERIES, rows.as_bytes())?;
        run.write_json(TTEST, &ttest)?;
        run.detail("dataset", if synthetic { "synthetic" } else { "csv" });
        Ok(())
    })
}

fn simulate_dgp(cfg: RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let d = &cfg.dgp;
    if d.horizons == 0 {
        return Err(CliError::Config("dgp.horizons must be at least 1".into()));
    }
    let process = ArProcess::new(d.theta.clone(), d.c, d.sigma2)?;
    let k = d.horizons - 1;
    let analytic = analytic_forecast_variance(&process, k);
    let empirical = match d.trials {
        0 => None,
        n => Some(monte_carlo_forecast_variance(&process, k, n, cfg.seed)?),
    };
    let mut csv = String::from(match empirical {
        Some(_) => "horizon,analytic_var,empirical_var\n",
        None => "horizon,analytic_var\n",
    });
    for (h, a) in analytic.iter().enumerate() {
        let _ = match &empirical {
            Some(e) => writeln!(csv, "{h},{a},{}", e[h]),
            None => writeln!(csv, "{h},{a}"),
        };
    }
    let max_rel = empirical.as_ref().map(|e| {
        analytic
            .iter()
            .zip(e)
            .map(|(a, e)| ((e - a) / a).abs())
            .fold(0.0f64, f64::max)
    });
    with_run(out, "simulate-dgp", &cfg, |run| {
        run.write(VARIANCE, csv.as_bytes())?;
        run.detail("max_relative_error", max_rel);
        Ok(())
    })
}

fn gen_synthetic(cfg: RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let m = generate(&cfg.synthetic)?;
    let mut buf = Vec::new();
    write_csv(&m, &mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
    with_run(out, "gen-synthetic", &cfg, |run| {
        run.write(SYNTHETIC, &buf)?;
        run.detail("shape", [m.t_len(), m.n_series()]);
        Ok(())
    })
}

fn estimate_periods(
    cfg: RunConfig,
    max_period: Option<usize>,
    out: &Path,
) -> Result<RunManifest, CliError> {
    let m = load_dataset(&cfg)?;
    let cap = max_period.unwrap_or(m.t_len() / 2);
    let mut per: Vec<Value> = Vec::new();
    let mut found = Vec::new();
    for (name, col) in m.series_names().iter().zip(m.columns()) {
        let p = estimate_period(col, cap)?;
        found.push(p);
        per.push(json!({ "name": name, "period": p }));
    }
    // Most frequent estimate; ties go to the smaller period.
    let mut counts = std::collections::BTreeMap::new();
    for p in &found {
        *counts.entry(*p).or_insert(0usize) += 1;
    }
    let consensus = counts
        .iter()
        .fold(
            (0, 0),
            |best, (&p, &c)| if c > best.1 { (p, c) } else { best },
        )
        .0;
    let result = json!({ "max_period": cap, "consensus": consensus, "series": per });
    with_run(out, "estimate-period", &cfg, |run| {
        run.write_json(PERIODS, &result)?;
        Ok(())
    })
}
