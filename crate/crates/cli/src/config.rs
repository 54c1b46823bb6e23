//! Run configuration: a TOML file with one table per concern, overlaid by
//! command-line flags. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use fredo_core::synthetic::SyntheticSpec;
use fredo_core::{DomainMode, ForecasterConfig, SplitSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds training and Monte-Carlo simulation.
    pub seed: u64,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub baseline: BaselineSection,
    pub synthetic: SyntheticSpec,
    pub dgp: DgpSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: TrainConfig::default().seed,
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            baseline: BaselineSection::default(),
            synthetic: SyntheticSpec::default(),
            dgp: DgpSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub timestamp_col: Option<String>,
    /// Train, validation and test fractions, e.g. `"0.7,0.1,0.2"`.
    pub split: String,
    pub stride: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            timestamp_col: None,
            split: "0.7,0.1,0.2".into(),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub period: Option<usize>,
    pub r: usize,
    /// When set, must be a multiple of `period`; it then determines `r`.
    pub input_len: Option<usize>,
    /// Defaults to twice the period.
    pub output_len: Option<usize>,
    pub depth: usize,
    pub domain: DomainMode,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            period: None,
            r: 1,
            input_len: None,
            output_len: None,
            depth: 2,
            domain: DomainMode::Frequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            batch_size: t.batch_size,
            patience: t.patience,
            max_epochs: t.max_epochs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// Candidate `r` values scored on the validation split.
    pub search_r: Option<Vec<usize>>,
    pub max_input_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpSection {
    pub theta: Vec<f64>,
    pub c: f64,
    pub sigma2: f64,
    /// Number of horizons, starting at 0.
    pub horizons: usize,
    pub trials: usize,
}

impl Default for DgpSection {
    fn default() -> Self {
        Self {
            theta: vec![0.5],
            c: 0.0,
            sigma2: 1.0,
            horizons: 51,
            trials: 100_000,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn split(&self) -> Result<SplitSpec, CliError> {
        self.data
            .split
            .parse()
            .map_err(|e: fredo_core::dataio::DataError| CliError::Config(e.to_string()))
    }

    pub fn stride(&self) -> Result<usize, CliError> {
        match self.data.stride {
            0 => Err(CliError::Config("data.stride must be at least 1".into())),
            s => Ok(s),
        }
    }

    pub fn period(&self) -> Result<usize, CliError> {
        match self.model.period {
            Some(p) if p >= 1 => Ok(p),
            Some(_) => Err(CliError::Config("model.period must be at least 1".into())),
            None => Err(CliError::Config(
                "model.period is required (set --period, or run estimate-period)".into(),
            )),
        }
    }

    pub fn output_len(&self) -> Result<usize, CliError> {
        Ok(self.model.output_len.unwrap_or(2 * self.period()?))
    }

    /// `r` after reconciling with an explicit input length.
    pub fn r(&self) -> Result<usize, CliError> {
        let p = self.period()?;
        match self.model.input_len {
            None => Ok(self.model.r),
            Some(i) if i >= p && i % p == 0 => Ok(i / p),
            Some(i) => Err(CliError::Config(format!(
                "model.input_len = {i} is not a positive multiple of period {p}"
            ))),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            batch_size: t.batch_size,
            patience: t.patience,
            max_epochs: t.max_epochs,
            seed: self.seed,
        }
    }

    pub fn forecaster(&self) -> Result<ForecasterConfig, CliError> {
        let mut cfg = ForecasterConfig::new(
            self.period()?,
            self.r()?,
            self.output_len()?,
            self.model.depth,
            self.model.domain,
        );
        cfg.train = self.train_config();
        validate_train(&cfg.train)?;
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn validate_train(t: &TrainConfig) -> Result<(), CliError> {
    let bad = |what: &str| Err(CliError::Config(format!("train.{what}")));
    if !(t.lr >= 0.0 && t.lr.is_finite()) {
        return bad("lr must be finite and non-negative");
    }
    if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) {
        return bad("beta1 and beta2 must lie in [0, 1)");
    }
    if t.eps.is_nan() || t.eps <= 0.0 {
        return bad("eps must be positive");
    }
    if t.batch_size == 0 {
        return bad("batch_size must be at least 1");
    }
    if t.max_epochs == 0 {
        return bad("max_epochs must be at least 1");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        assert!(RunConfig::from_toml("[model]\nperiod = 4\ndepht = 2").is_err());
        assert!(RunConfig::from_toml("[synthetic]\nseries = 2").is_err());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg =
            RunConfig::from_toml("seed = 9\n[model]\nperiod = 12\n[train]\nlr = 0.01").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.output_len().unwrap(), 24);
        assert_eq!(cfg.train.max_epochs, 10);
        assert_eq!(cfg.forecaster().unwrap().train.lr, 0.01);
    }

    #[test]
    fn input_len_sets_r() {
        let mut cfg = RunConfig::default();
        cfg.model.period = Some(24);
        cfg.model.input_len = Some(96);
        assert_eq!(cfg.r().unwrap(), 4);
        assert_eq!(cfg.forecaster().unwrap().input_len, 96);
        cfg.model.input_len = Some(36);
        assert!(matches!(cfg.r(), Err(CliError::Config(_))));
    }

    #[test]
    fn missing_period_is_config_error() {
        assert!(matches!(
            RunConfig::default().forecaster(),
            Err(CliError::Config(_))
        ));
    }
}
