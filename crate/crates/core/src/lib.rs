//! Long-horizon forecasting toolkit: the AverageTile periodicity baseline,
//! the FreDo (frequency-domain) and TimeDo (time-domain) refiners built on
//! it, AR(p) error-accumulation analysis, and the data/evaluation harness
//! around them.
//!
//! Module map:
//!
//! * [`dataio`]: CSV loading, chronological splits, z-scoring, windows
//! * [`spectral`]: DFT, packed real spectrum, period estimation
//! * [`baseline`]: AverageTile and the search over the number of cycles
//! * [`nn`]: linear/Mixer layers, exact gradients, Adam
//! * [`model`]: FreDo/TimeDo forward passes, training, checkpoints
//! * [`dgpsim`]: AR simulation and forecast-variance analysis
//! * [`eval`]: error curves, paired t-test, per-series domain comparison
//! * [`synthetic`]: seeded benchmark-like datasets

pub mod baseline;
pub mod dataio;
pub mod dgpsim;
pub mod eval;
pub mod model;
pub mod nn;
pub mod spectral;
pub mod synthetic;

pub use baseline::{average_tile, AverageTileConfig};
pub use dataio::{ForecastWindow, SplitSpec, TimeSeriesMatrix};
pub use model::{DomainMode, ForecasterConfig, TrainConfig};
pub use nn::ModelParams;
