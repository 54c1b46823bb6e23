//! Seeded multi-sinusoid + AR(1)-noise datasets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{DataError, TimeSeriesMatrix};

/// Each series is `level + sum_h a_h sin(2 pi h t / P + phi_h) + u_t` with
/// harmonics `h = 1..=harmonics` of the base period and
/// `u_t = theta u_{t-1} + e_t`. Per-series amplitudes, phases, level and
/// `theta` are drawn from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_series: usize,
    pub length: usize,
    pub period: usize,
    pub harmonics: usize,
    /// `theta` is drawn uniformly from this range per series.
    pub ar_theta: (f64, f64),
    /// Standard deviation of the AR innovations.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_series: 24,
            length: 2400,
            period: 24,
            harmonics: 3,
            ar_theta: (0.3, 0.8),
            noise_std: 0.5,
            seed: 7,
        }
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<TimeSeriesMatrix, DataError> {
    if spec.n_series == 0 || spec.length < 2 || spec.period == 0 {
        return Err(DataError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let innov = Normal::new(0.0, spec.noise_std.max(0.0)).map_err(|_| DataError::EmptyDataset)?;
    let mut columns = Vec::with_capacity(spec.n_series);
    for _ in 0..spec.n_series {
        let level = rng.random_range(-2.0..2.0);
        let waves: Vec<(f64, f64, f64)> = (1..=spec.harmonics.max(1))
            .map(|h| {
                let amp = rng.random_range(0.5..2.0) / h as f64;
                let phase = rng.random_range(0.0..2.0 * PI);
                (h as f64, amp, phase)
            })
            .collect();
        let (lo, hi) = spec.ar_theta;
        let theta = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        let mut u = 0.0;
        // burn-in so the noise starts near stationarity
        for _ in 0..200 {
            u = theta * u + innov.sample(&mut rng);
        }
        let col = (0..spec.length)
            .map(|t| {
                u = theta * u + innov.sample(&mut rng);
                let s: f64 = waves
                    .iter()
                    .map(|(h, a, ph)| a * (2.0 * PI * h * t as f64 / spec.period as f64 + ph).sin())
                    .sum();
                level + s + u
            })
            .collect();
        columns.push(col);
    }
    let names = (0..spec.n_series).map(|n| format!("series_{n}")).collect();
    TimeSeriesMatrix::from_columns(columns, names)
}
