//! FreDo and TimeDo forecasters.
//!
//! Both start from the AverageTile forecast `b` and add a learned refinement
//! produced by `input projection -> Mixer stack`:
//!
//! * FreDo feeds the packed spectrum of the input to the network and adds
//!   its output to the packed spectrum of `b`; the sum is mapped back to the
//!   time domain, where the loss lives.
//! * TimeDo is the same graph with both spectral transforms removed.
//!
//! The two have identical parameter counts for identical shapes.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{average_tile, AverageTileConfig, BaselineError};
use crate::dataio::{make_windows, DataError, ForecastWindow, TimeSeriesMatrix};
use crate::nn::{adam_step, mse, AdamConfig, AdamState, ModelParams, NamedTensor, NnError, Tape};
use crate::spectral::{
    dft_extract, insert_idft, insert_idft_adjoint, SpectralError, SpectralVector,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid forecaster config: {0}")]
    Config(String),
    #[error("expected {what} of length {expected}, got {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainMode {
    Frequency,
    Time,
}

impl std::fmt::Display for DomainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DomainMode::Frequency => "frequency",
            DomainMode::Time => "time",
        })
    }
}

impl std::str::FromStr for DomainMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency" | "freq" | "fredo" => Ok(Self::Frequency),
            "time" | "timedo" => Ok(Self::Time),
            other => Err(ModelError::Config(format!("unknown domain mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 32,
            patience: 3,
            max_epochs: 10,
            seed: 2021,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecasterConfig {
    pub input_len: usize,
    pub output_len: usize,
    pub period: usize,
    pub r: usize,
    pub depth: usize,
    pub domain: DomainMode,
    pub train: TrainConfig,
}

impl ForecasterConfig {
    /// Config with `I = r * P` and default training settings.
    pub fn new(
        period: usize,
        r: usize,
        output_len: usize,
        depth: usize,
        domain: DomainMode,
    ) -> Self {
        Self {
            input_len: period * r,
            output_len,
            period,
            r,
            depth,
            domain,
            train: TrainConfig::default(),
        }
    }

    pub fn with_domain(mut self, domain: DomainMode) -> Self {
        self.domain = domain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.period == 0 || self.r == 0 {
            return bad(format!(
                "period ({}) and r ({}) must be >= 1",
                self.period, self.r
            ));
        }
        if self.input_len != self.period * self.r {
            return bad(format!(
                "input_len {} must equal r * period = {} * {}",
                self.input_len, self.r, self.period
            ));
        }
        if self.output_len == 0 {
            return bad("output_len must be >= 1".into());
        }
        if self.depth == 0 {
            return bad("depth must be >= 1".into());
        }
        if self.domain == DomainMode::Frequency && (self.input_len < 2 || self.output_len < 2) {
            return bad("frequency mode needs input_len >= 2 and output_len >= 2".into());
        }
        let t = &self.train;
        if !(t.lr >= 0.0 && t.lr.is_finite()) {
            return bad(format!("lr must be finite and >= 0, got {}", t.lr));
        }
        if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if t.eps.is_nan() || t.eps <= 0.0 {
            return bad("eps must be > 0".into());
        }
        if t.batch_size == 0 || t.max_epochs == 0 {
            return bad("batch_size and max_epochs must be >= 1".into());
        }
        Ok(())
    }

    pub fn baseline(&self) -> AverageTileConfig {
        AverageTileConfig::new(self.period, self.r).expect("validated config")
    }
}

/// Weights and biases of the projection plus `depth` Mixer blocks:
/// `(I*O + O) + depth * 2 * (O^2 + O)`. Independent of the domain mode.
pub fn param_count(cfg: &ForecasterConfig) -> Result<usize> {
    cfg.validate()?;
    let (i, o) = (cfg.input_len, cfg.output_len);
    Ok(i * o + o + cfg.depth * 2 * (o * o + o))
}

/// Fresh parameters for `cfg`, seeded from `cfg.train.seed`.
pub fn init_params(cfg: &ForecasterConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    Ok(ModelParams::init(
        cfg.input_len,
        cfg.output_len,
        cfg.depth,
        &mut rng,
    )?)
}

fn check_shapes(input: &[f64], params: &ModelParams, cfg: &ForecasterConfig) -> Result<()> {
    let checks = [
        ("input", cfg.input_len, input.len()),
        ("parameter input width", cfg.input_len, params.input_len()),
        (
            "parameter output width",
            cfg.output_len,
            params.output_len(),
        ),
        ("parameter depth", cfg.depth, params.depth()),
    ];
    for (what, expected, found) in checks {
        if expected != found {
            return Err(ModelError::LengthMismatch {
                what,
                expected,
                found,
            });
        }
    }
    Ok(())
}

/// Network input for one window: packed spectrum (frequency) or raw input (time).
fn features(input: &[f64], domain: DomainMode) -> Result<Vec<f64>> {
    Ok(match domain {
        DomainMode::Frequency => dft_extract(input)?.into_inner(),
        DomainMode::Time => input.to_vec(),
    })
}

/// `b + refinement`, where the refinement is the network output mapped to
/// the time domain. For FreDo this equals
/// `insert_idft(dft_extract(b) + h)` because both transforms are linear and
/// mutually inverse; adding in the time domain keeps `h = 0` exact.
fn combine(baseline: &[f64], h: &[f64], domain: DomainMode) -> Vec<f64> {
    match domain {
        DomainMode::Frequency => {
            let refinement = insert_idft(&SpectralVector::new(h.to_vec()).expect("O >= 2"));
            baseline
                .iter()
                .zip(&refinement)
                .map(|(b, r)| b + r)
                .collect()
        }
        DomainMode::Time => baseline.iter().zip(h).map(|(b, r)| b + r).collect(),
    }
}

fn forward_unchecked(
    input: &[f64],
    params: &ModelParams,
    cfg: &ForecasterConfig,
) -> Result<Vec<f64>> {
    let b = average_tile(input, cfg.baseline(), cfg.output_len)?;
    let h = params.forward(&features(input, cfg.domain)?)?;
    Ok(combine(&b, &h, cfg.domain))
}

pub fn fredo_forward(
    input: &[f64],
    params: &ModelParams,
    cfg: &ForecasterConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.domain != DomainMode::Frequency {
        return Err(ModelError::Config(
            "fredo_forward needs domain = frequency".into(),
        ));
    }
    check_shapes(input, params, cfg)?;
    forward_unchecked(input, params, cfg)
}

pub fn timedo_forward(
    input: &[f64],
    params: &ModelParams,
    cfg: &ForecasterConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.domain != DomainMode::Time {
        return Err(ModelError::Config(
            "timedo_forward needs domain = time".into(),
        ));
    }
    check_shapes(input, params, cfg)?;
    forward_unchecked(input, params, cfg)
}

/// Dispatches on `cfg.domain`.
pub fn forward(input: &[f64], params: &ModelParams, cfg: &ForecasterConfig) -> Result<Vec<f64>> {
    match cfg.domain {
        DomainMode::Frequency => fredo_forward(input, params, cfg),
        DomainMode::Time => timedo_forward(input, params, cfg),
    }
}

/// FreDo's refined forecast before the final inverse transform:
/// `dft_extract(b) + h`.
pub fn fredo_output_spectrum(
    input: &[f64],
    params: &ModelParams,
    cfg: &ForecasterConfig,
) -> Result<SpectralVector> {
    cfg.validate()?;
    check_shapes(input, params, cfg)?;
    let b = average_tile(input, cfg.baseline(), cfg.output_len)?;
    let h = params.forward(&dft_extract(input)?.into_inner())?;
    let mut z = dft_extract(&b)?.into_inner();
    z.iter_mut().zip(&h).for_each(|(a, v)| *a += v);
    Ok(SpectralVector::new(z)?)
}

/// Time-domain MSE of one window and its gradient with respect to every
/// parameter, accumulated into `grads`.
pub fn loss_and_grad(
    input: &[f64],
    target: &[f64],
    params: &ModelParams,
    cfg: &ForecasterConfig,
    weight: f64,
    grads: &mut ModelParams,
) -> Result<f64> {
    check_shapes(input, params, cfg)?;
    if target.len() != cfg.output_len {
        return Err(ModelError::LengthMismatch {
            what: "target",
            expected: cfg.output_len,
            found: target.len(),
        });
    }
    let prepared = Prepared::new(input, target, cfg)?;
    let mut tape = Tape::new();
    prepared.accumulate(params, cfg.domain, weight, &mut tape, grads)
}

/// A window with its network features and baseline precomputed; neither
/// depends on the parameters.
struct Prepared {
    features: Vec<f64>,
    baseline: Vec<f64>,
    target: Vec<f64>,
}

impl Prepared {
    fn new(input: &[f64], target: &[f64], cfg: &ForecasterConfig) -> Result<Self> {
        Ok(Self {
            features: features(input, cfg.domain)?,
            baseline: average_tile(input, cfg.baseline(), cfg.output_len)?,
            target: target.to_vec(),
        })
    }

    fn predict(&self, params: &ModelParams, domain: DomainMode) -> Result<Vec<f64>> {
        let h = params.forward(&self.features)?;
        Ok(combine(&self.baseline, &h, domain))
    }

    /// Adds `weight * d(mse)/d(params)` to `grads` and returns the mse.
    fn accumulate(
        &self,
        params: &ModelParams,
        domain: DomainMode,
        weight: f64,
        tape: &mut Tape,
        grads: &mut ModelParams,
    ) -> Result<f64> {
        let h = tape.forward(params, &self.features)?;
        let pred = combine(&self.baseline, &h, domain);
        let scale = 2.0 * weight / pred.len() as f64;
        let g_time: Vec<f64> = pred
            .iter()
            .zip(&self.target)
            .map(|(p, t)| scale * (p - t))
            .collect();
        let g_h = match domain {
            DomainMode::Frequency => insert_idft_adjoint(&g_time),
            DomainMode::Time => g_time,
        };
        tape.backward_into(params, &g_h, grads)?;
        Ok(mse(&pred, &self.target)?)
    }
}

fn prepare_all(windows: &[ForecastWindow], cfg: &ForecasterConfig) -> Result<Vec<Prepared>> {
    windows
        .par_iter()
        .map(|w| {
            if w.input.len() != cfg.input_len || w.target.len() != cfg.output_len {
                return Err(ModelError::LengthMismatch {
                    what: "window",
                    expected: cfg.input_len + cfg.output_len,
                    found: w.input.len() + w.target.len(),
                });
            }
            Prepared::new(&w.input, &w.target, cfg)
        })
        .collect()
}

fn mean_mse(prepared: &[Prepared], params: &ModelParams, domain: DomainMode) -> Result<f64> {
    let losses: Vec<f64> = prepared
        .par_iter()
        .map(|p| Ok(mse(&p.predict(params, domain)?, &p.target)?))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Mean mini-batch training loss, one entry per epoch.
    pub train_loss: Vec<f64>,
    /// Validation MSE after each epoch.
    pub val_loss: Vec<f64>,
    /// Validation MSE of the initial parameters.
    pub initial_val_loss: f64,
    /// 0 means the initial parameters were never improved upon.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_time_secs: f64,
}

/// Mini-batch Adam on time-domain MSE with early stopping on validation MSE.
///
/// Windows from all series are shuffled together every epoch; one parameter
/// set serves every series. Returns the parameters with the lowest
/// validation MSE seen, including the initial ones.
pub fn train(
    cfg: &ForecasterConfig,
    train_windows: &[ForecastWindow],
    val_windows: &[ForecastWindow],
) -> Result<(ModelParams, TrainReport)> {
    let params = init_params(cfg)?;
    train_from(cfg, params, train_windows, val_windows)
}

/// [`train`] starting from given parameters.
pub fn train_from(
    cfg: &ForecasterConfig,
    mut params: ModelParams,
    train_windows: &[ForecastWindow],
    val_windows: &[ForecastWindow],
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    if train_windows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if val_windows.is_empty() {
        return Err(ModelError::EmptyValidationSet);
    }
    check_shapes(&train_windows[0].input, &params, cfg)?;
    let start = Instant::now();
    let train_set = prepare_all(train_windows, cfg)?;
    let val_set = prepare_all(val_windows, cfg)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    shuffle_rng.set_stream(1);
    let mut state = AdamState::new(&params, cfg.train.adam());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut tape = Tape::new();
    let mut grads = params.zeros_like();

    let initial_val_loss = mean_mse(&val_set, &params, cfg.domain)?;
    let mut best = (0usize, initial_val_loss, params.clone());
    let mut report = TrainReport {
        epochs_run: 0,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        initial_val_loss,
        best_epoch: 0,
        best_val_loss: initial_val_loss,
        wall_time_secs: 0.0,
    };
    let mut since_best = 0;

    for epoch in 1..=cfg.train.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(cfg.train.batch_size).enumerate() {
            grads.scale(0.0);
            let weight = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss +=
                    train_set[i].accumulate(&params, cfg.domain, weight, &mut tape, &mut grads)?;
            }
            batch_loss *= weight;
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            adam_step(&mut params, &grads, &mut state)?;
            epoch_loss += batch_loss;
            batches += 1;
        }
        let val = mean_mse(&val_set, &params, cfg.domain)?;
        if !val.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch,
                batch: batches,
            });
        }
        report.epochs_run = epoch;
        report.train_loss.push(epoch_loss / batches as f64);
        report.val_loss.push(val);
        if val < best.1 {
            best = (epoch, val, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.train.patience {
                break;
            }
        }
    }

    report.best_epoch = best.0;
    report.best_val_loss = best.1;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((best.2, report))
}

/// Forecasts aligned with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// `(series_index, origin)` of every window, ordered by series then origin.
    pub keys: Vec<(usize, usize)>,
    pub preds: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    /// Predictions and targets of one series.
    pub fn for_series(&self, n: usize) -> (Vec<&[f64]>, Vec<&[f64]>) {
        self.keys
            .iter()
            .zip(self.preds.iter().zip(&self.targets))
            .filter(|(k, _)| k.0 == n)
            .map(|(_, (p, t))| (p.as_slice(), t.as_slice()))
            .unzip()
    }
}

/// Model forecasts for every window of every series of `matrix`.
pub fn predict_dataset(
    params: &ModelParams,
    cfg: &ForecasterConfig,
    matrix: &TimeSeriesMatrix,
    stride: usize,
) -> Result<Predictions> {
    cfg.validate()?;
    let windows = make_windows(matrix, cfg.input_len, cfg.output_len, stride)?;
    if let Some(w) = windows.first() {
        check_shapes(&w.input, params, cfg)?;
    }
    let preds = windows
        .par_iter()
        .map(|w| forward_unchecked(&w.input, params, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_predictions(windows, preds))
}

/// AverageTile forecasts over the same windows as [`predict_dataset`].
pub fn predict_baseline(
    baseline: AverageTileConfig,
    output_len: usize,
    matrix: &TimeSeriesMatrix,
    stride: usize,
) -> Result<Predictions> {
    let windows = make_windows(matrix, baseline.input_len(), output_len, stride)?;
    let preds = windows
        .iter()
        .map(|w| average_tile(&w.input, baseline, output_len))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(collect_predictions(windows, preds))
}

fn collect_predictions(windows: Vec<ForecastWindow>, preds: Vec<Vec<f64>>) -> Predictions {
    let mut keys = Vec::with_capacity(windows.len());
    let mut targets = Vec::with_capacity(windows.len());
    for w in windows {
        keys.push((w.series_index, w.origin));
        targets.push(w.target);
    }
    Predictions {
        keys,
        preds,
        targets,
    }
}

pub const CHECKPOINT_FORMAT: &str = "fredo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model: config plus named tensors, as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ForecasterConfig,
    pub param_count: usize,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(config: &ForecasterConfig, params: &ModelParams) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: *config,
            param_count: params.param_count(),
            tensors: params.named_tensors(),
        })
    }

    pub fn params(&self) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        self.config.validate()?;
        let c = &self.config;
        let params =
            ModelParams::from_named_tensors(c.input_len, c.output_len, c.depth, &self.tensors)?;
        if params.param_count() != self.param_count {
            return Err(ModelError::Checkpoint(
                "parameter count does not match tensors".into(),
            ));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}
