//! Metrics, per-horizon error curves, and the per-series frequency-vs-time
//! comparison with a paired t-test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{
    chronological_split, make_windows, DataError, Normalizer, SplitSpec, TimeSeriesMatrix,
};
use crate::model::{
    self, param_count, predict_baseline, predict_dataset, DomainMode, ForecasterConfig, ModelError,
    Predictions,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    EmptyInput,
    #[error("prediction {index} has length {found}, expected {expected}")]
    ShapeMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("paired t-test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired samples have different lengths ({0} vs {1})")]
    UnequalLengths(usize, usize),
    #[error("paired differences have zero variance")]
    ZeroVarianceDifferences,
    #[error("domain comparison needs at least 2 series, got {0}")]
    TooFewSeries(usize),
    #[error("series {index} ({name}): {source}")]
    Series {
        index: usize,
        name: String,
        #[source]
        source: Box<ModelError>,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub horizon_mse: Vec<f64>,
    pub horizon_mae: Vec<f64>,
    pub aggregate_mse: f64,
    pub aggregate_mae: f64,
}

/// Per-horizon MSE/MAE averaged over all windows; aggregates are the means
/// of the curves.
pub fn error_curve<P: AsRef<[f64]>, T: AsRef<[f64]>>(
    preds: &[P],
    targets: &[T],
) -> Result<ErrorCurve> {
    let first = preds.first().ok_or(EvalError::EmptyInput)?.as_ref();
    let o = first.len();
    if o == 0 {
        return Err(EvalError::EmptyInput);
    }
    if targets.len() != preds.len() {
        return Err(EvalError::UnequalLengths(preds.len(), targets.len()));
    }
    let mut se = vec![0.0; o];
    let mut ae = vec![0.0; o];
    for (index, (p, t)) in preds.iter().zip(targets).enumerate() {
        let (p, t) = (p.as_ref(), t.as_ref());
        for found in [p.len(), t.len()] {
            if found != o {
                return Err(EvalError::ShapeMismatch {
                    index,
                    expected: o,
                    found,
                });
            }
        }
        for h in 0..o {
            let d = p[h] - t[h];
            se[h] += d * d;
            ae[h] += d.abs();
        }
    }
    let n = preds.len() as f64;
    let horizon_mse: Vec<f64> = se.into_iter().map(|v| v / n).collect();
    let horizon_mae: Vec<f64> = ae.into_iter().map(|v| v / n).collect();
    Ok(ErrorCurve {
        aggregate_mse: horizon_mse.iter().sum::<f64>() / o as f64,
        aggregate_mae: horizon_mae.iter().sum::<f64>() / o as f64,
        horizon_mse,
        horizon_mae,
    })
}

pub fn predictions_curve(p: &Predictions) -> Result<ErrorCurve> {
    error_curve(&p.preds, &p.targets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub n: usize,
    pub mean_diff: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub significant_at_5pct: bool,
}

/// Two-sided paired t-test on `a - b` with `n - 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(EvalError::UnequalLengths(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewPairs(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sd.is_nan() || sd <= 4.0 * f64::EPSILON * scale {
        return Err(EvalError::ZeroVarianceDifferences);
    }
    let t_stat = mean / (sd / nf.sqrt());
    let p_value = student_t_two_sided_p(t_stat, nf - 1.0);
    Ok(PairedTestResult {
        n,
        mean_diff: mean,
        t_stat,
        p_value,
        significant_at_5pct: p_value < 0.05,
    })
}

/// `P(|T| >= |t|)` for Student's t with `dof` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, dof: f64) -> f64 {
    let t2 = t * t;
    if t2.is_infinite() {
        return 0.0;
    }
    // x = dof / (dof + t^2); for small t use the complement directly.
    let x = dof / (dof + t2);
    let p = if x > 0.5 {
        1.0 - regularized_incomplete_beta(t2 / (dof + t2), 0.5, 0.5 * dof)
    } else {
        regularized_incomplete_beta(x, 0.5 * dof, 0.5)
    };
    p.clamp(0.0, 1.0)
}

/// CDF of Student's t.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided_p(t, dof);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via the modified Lentz continued
/// fraction, using the symmetry `I_x(a,b) = 1 - I_{1-x}(b,a)` where the
/// fraction converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Test metrics of one series under both arms and the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesComparison {
    pub index: usize,
    pub name: String,
    pub a_mse: f64,
    pub b_mse: f64,
    pub baseline_mse: f64,
    pub a_mae: f64,
    pub b_mae: f64,
    pub baseline_mae: f64,
    pub a_params: usize,
    pub b_params: usize,
    pub a_best_epoch: usize,
    pub b_best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a_domain: DomainMode,
    pub b_domain: DomainMode,
    pub per_series: Vec<SeriesComparison>,
    pub mean_a_mse: f64,
    pub mean_b_mse: f64,
    pub mean_baseline_mse: f64,
    pub mean_a_mae: f64,
    pub mean_b_mae: f64,
    pub mean_baseline_mae: f64,
    /// Paired test on per-series test MSE, arm a minus arm b.
    pub ttest_mse: PairedTestResult,
    /// Same on MAE; absent when those differences are degenerate.
    pub ttest_mae: Option<PairedTestResult>,
}

/// Seed used for series `index` by both arms.
pub fn series_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct ArmResult {
    mse: f64,
    mae: f64,
    params: usize,
    best_epoch: usize,
}

fn run_arm(
    cfg: &ForecasterConfig,
    train: &TimeSeriesMatrix,
    val: &TimeSeriesMatrix,
    test: &TimeSeriesMatrix,
    stride: usize,
) -> std::result::Result<ArmResult, ModelError> {
    let train_w = make_windows(train, cfg.input_len, cfg.output_len, stride)?;
    let val_w = make_windows(val, cfg.input_len, cfg.output_len, stride)?;
    let (params, report) = model::train(cfg, &train_w, &val_w)?;
    let preds = predict_dataset(&params, cfg, test, stride)?;
    let curve = predictions_curve(&preds).map_err(|e| ModelError::Config(e.to_string()))?;
    Ok(ArmResult {
        mse: curve.aggregate_mse,
        mae: curve.aggregate_mae,
        params: param_count(cfg)?,
        best_epoch: report.best_epoch,
    })
}

/// Trains arm `a` and arm `b` separately on every series (each series split
/// and z-scored on its own), scores them on that series' test split, and
/// runs a paired t-test across series.
pub fn compare_arms(
    dataset: &TimeSeriesMatrix,
    split: SplitSpec,
    cfg_a: &ForecasterConfig,
    cfg_b: &ForecasterConfig,
    stride: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    if dataset.n_series() < 2 {
        return Err(EvalError::TooFewSeries(dataset.n_series()));
    }
    cfg_a.validate()?;
    cfg_b.validate()?;
    let per_series = (0..dataset.n_series())
        .into_par_iter()
        .map(|n| {
            let name = dataset.series_names()[n].clone();
            let wrap = |e: ModelError| EvalError::Series {
                index: n,
                name: name.clone(),
                source: Box::new(e),
            };
            let column = dataset.column_matrix(n);
            let splits = chronological_split(&column, split).map_err(|e| wrap(e.into()))?;
            let norm = Normalizer::fit(&splits.train).map_err(|e| wrap(e.into()))?;
            let z = |m: &TimeSeriesMatrix| norm.apply(m).map_err(|e| wrap(e.into()));
            let (train, val, test) = (z(&splits.train)?, z(&splits.val)?, z(&splits.test)?);

            let s = series_seed(seed, n);
            let mut a = *cfg_a;
            a.train.seed = s;
            let mut b = *cfg_b;
            b.train.seed = s;
            let ra = run_arm(&a, &train, &val, &test, stride).map_err(wrap)?;
            let rb = run_arm(&b, &train, &val, &test, stride).map_err(wrap)?;
            let base = predict_baseline(cfg_a.baseline(), cfg_a.output_len, &test, stride)
                .map_err(wrap)?;
            let base_curve = predictions_curve(&base)?;
            Ok(SeriesComparison {
                index: n,
                name,
                a_mse: ra.mse,
                b_mse: rb.mse,
                baseline_mse: base_curve.aggregate_mse,
                a_mae: ra.mae,
                b_mae: rb.mae,
                baseline_mae: base_curve.aggregate_mae,
                a_params: ra.params,
                b_params: rb.params,
                a_best_epoch: ra.best_epoch,
                b_best_epoch: rb.best_epoch,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let col = |f: fn(&SeriesComparison) -> f64| per_series.iter().map(f).collect::<Vec<_>>();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a_mse, b_mse) = (col(|s| s.a_mse), col(|s| s.b_mse));
    let (a_mae, b_mae) = (col(|s| s.a_mae), col(|s| s.b_mae));
    let ttest_mse = paired_t_test(&a_mse, &b_mse)?;
    let ttest_mae = paired_t_test(&a_mae, &b_mae).ok();
    Ok(ComparisonReport {
        a_domain: cfg_a.domain,
        b_domain: cfg_b.domain,
        mean_a_mse: mean(&a_mse),
        mean_b_mse: mean(&b_mse),
        mean_baseline_mse: mean(&col(|s| s.baseline_mse)),
        mean_a_mae: mean(&a_mae),
        mean_b_mae: mean(&b_mae),
        mean_baseline_mae: mean(&col(|s| s.baseline_mae)),
        per_series,
        ttest_mse,
        ttest_mae,
    })
}

/// FreDo (arm a) against TimeDo (arm b) with otherwise identical configs.
pub fn univariate_compare(
    dataset: &TimeSeriesMatrix,
    split: SplitSpec,
    template: &ForecasterConfig,
    stride: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    compare_arms(
        dataset,
        split,
        &template.with_domain(DomainMode::Frequency),
        &template.with_domain(DomainMode::Time),
        stride,
        seed,
    )
}
