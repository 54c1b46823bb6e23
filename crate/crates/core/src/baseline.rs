//! AverageTile: average the `r` most recent cycles of length `P` and repeat
//! the averaged cycle across the horizon. No trainable parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{window_origins, TimeSeriesMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("period and r must be at least 1 (got period={period}, r={r})")]
    InvalidConfig { period: usize, r: usize },
    #[error("input length {input_len} is not r*P = {r}*{period}")]
    LengthMismatch {
        input_len: usize,
        period: usize,
        r: usize,
    },
    #[error("no r candidates given")]
    NoCandidates,
    #[error(
        "no r candidate fits a validation split of length {val_len} (P={period}, O={output_len})"
    )]
    NoFeasibleCandidate {
        val_len: usize,
        period: usize,
        output_len: usize,
    },
}

pub type Result<T> = std::result::Result<T, BaselineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AverageTileConfig {
    period: usize,
    r: usize,
}

impl AverageTileConfig {
    pub fn new(period: usize, r: usize) -> Result<Self> {
        if period == 0 || r == 0 {
            return Err(BaselineError::InvalidConfig { period, r });
        }
        Ok(Self { period, r })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn input_len(&self) -> usize {
        self.period * self.r
    }
}

/// Averaged last-`r` cycle, oldest phase first.
pub fn average_cycle(input: &[f64], cfg: AverageTileConfig) -> Result<Vec<f64>> {
    let (p, r) = (cfg.period, cfg.r);
    let i_len = input.len();
    if i_len != p * r {
        return Err(BaselineError::LengthMismatch {
            input_len: i_len,
            period: p,
            r,
        });
    }
    Ok((0..p)
        .map(|phase| {
            // cycles summed most recent first
            let sum = (1..=r).fold(0.0, |acc, i| acc + input[i_len + phase - i * p]);
            sum / r as f64
        })
        .collect())
}

pub fn average_tile(input: &[f64], cfg: AverageTileConfig, output_len: usize) -> Result<Vec<f64>> {
    let cycle = average_cycle(input, cfg)?;
    Ok((0..output_len).map(|o| cycle[o % cfg.period]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RCandidateScore {
    pub r: usize,
    /// `None` when `r*P + O` exceeds the validation length or `I_max`.
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSearch {
    pub best_r: usize,
    pub best_val_mse: f64,
    pub table: Vec<RCandidateScore>,
}

/// Chooses `r` by mean validation MSE of AverageTile.
///
/// Windows are cut from `val` alone. Every feasible candidate is scored on
/// the same forecast origins, those available to the longest feasible input,
/// so the scores are directly comparable. Ties go to the smaller `r`.
pub fn search_r(
    val: &TimeSeriesMatrix,
    period: usize,
    candidates: &[usize],
    max_input_len: Option<usize>,
    output_len: usize,
    stride: usize,
) -> Result<RSearch> {
    if candidates.is_empty() {
        return Err(BaselineError::NoCandidates);
    }
    let val_len = val.t_len();
    let feasible = |r: usize| {
        r >= 1
            && r * period + output_len <= val_len
            && max_input_len.is_none_or(|cap| r * period <= cap)
    };
    let longest = candidates
        .iter()
        .copied()
        .filter(|&r| feasible(r))
        .map(|r| r * period)
        .max()
        .ok_or(BaselineError::NoFeasibleCandidate {
            val_len,
            period,
            output_len,
        })?;
    let origins = window_origins(val_len, longest, output_len, stride.max(1))
        .expect("feasibility checked above");

    let table: Vec<RCandidateScore> = candidates
        .par_iter()
        .map(|&r| {
            if !feasible(r) {
                return Ok(RCandidateScore { r, val_mse: None });
            }
            let cfg = AverageTileConfig::new(period, r)?;
            let i_len = cfg.input_len();
            let mut total = 0.0;
            let mut count = 0usize;
            for col in val.columns() {
                for &t in &origins {
                    let pred = average_tile(&col[t - i_len..t], cfg, output_len)?;
                    total += pred
                        .iter()
                        .zip(&col[t..t + output_len])
                        .map(|(p, y)| (p - y).powi(2))
                        .sum::<f64>();
                    count += output_len;
                }
            }
            Ok(RCandidateScore {
                r,
                val_mse: Some(total / count as f64),
            })
        })
        .collect::<Result<_>>()?;

    let (best_r, best_val_mse) = table
        .iter()
        .filter_map(|c| c.val_mse.map(|m| (c.r, m)))
        .fold(None, |best: Option<(usize, f64)>, (r, m)| match best {
            Some((br, bm)) if bm < m || (bm == m && br <= r) => Some((br, bm)),
            _ => Some((r, m)),
        })
        .expect("at least one feasible candidate");
    Ok(RSearch {
        best_r,
        best_val_mse,
        table,
    })
}
