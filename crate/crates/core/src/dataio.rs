//! CSV ingestion, chronological splits, per-series z-scoring and sliding
//! forecast windows.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset file not found: {0}")]
    MissingFile(PathBuf),
    #[error("could not read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(String),
    /// 1-based data row (header excluded) and 1-based column of the file.
    #[error("non-numeric cell at row {0}, column {1}")]
    ParseError(usize, usize),
    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("timestamp column {0:?} not present in header")]
    UnknownColumn(String),
    #[error("dataset needs at least 2 data rows and 1 value column")]
    EmptyDataset,
    #[error("non-finite value at time {t}, series {n}")]
    NonFinite { t: usize, n: usize },
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),
    #[error("split of {t_len} rows leaves an empty part (sizes {sizes:?})")]
    DegenerateSplit { t_len: usize, sizes: [usize; 3] },
    #[error("series {0} has zero variance in the training split")]
    ConstantSeries(usize),
    #[error("shape mismatch: expected {expected} series, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("series of length {t_len} is too short for input {input_len} + output {output_len}")]
    TooShort {
        t_len: usize,
        input_len: usize,
        output_len: usize,
    },
    #[error("window lengths and stride must be positive")]
    InvalidWindow,
}

pub type Result<T> = std::result::Result<T, DataError>;

/// T×N observation matrix, stored column-major (one contiguous column per
/// series).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    data: Vec<f64>,
    series_names: Vec<String>,
    t_len: usize,
    n_series: usize,
}

impl TimeSeriesMatrix {
    /// Builds a matrix from per-series columns. All columns must have the
    /// same length and contain only finite values.
    pub fn from_columns(columns: Vec<Vec<f64>>, series_names: Vec<String>) -> Result<Self> {
        let n_series = columns.len();
        if n_series == 0 || series_names.len() != n_series {
            return Err(DataError::ShapeMismatch {
                expected: series_names.len(),
                found: n_series,
            });
        }
        let t_len = columns[0].len();
        if t_len == 0 {
            return Err(DataError::EmptyDataset);
        }
        let mut data = Vec::with_capacity(t_len * n_series);
        for (n, col) in columns.into_iter().enumerate() {
            if col.len() != t_len {
                return Err(DataError::RaggedRow {
                    row: col.len().min(t_len) + 1,
                    expected: t_len,
                    found: col.len(),
                });
            }
            if let Some(t) = col.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { t, n });
            }
            data.extend(col);
        }
        Ok(Self {
            data,
            series_names,
            t_len,
            n_series,
        })
    }

    /// Convenience constructor with generated names `s0, s1, ...`.
    pub fn from_unnamed_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let names = (0..columns.len()).map(|n| format!("s{n}")).collect();
        Self::from_columns(columns, names)
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn n_series(&self) -> usize {
        self.n_series
    }

    pub fn series_names(&self) -> &[String] {
        &self.series_names
    }

    pub fn series(&self, n: usize) -> &[f64] {
        &self.data[n * self.t_len..(n + 1) * self.t_len]
    }

    pub fn get(&self, t: usize, n: usize) -> f64 {
        self.series(n)[t]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.t_len)
    }

    /// Rows `start..end` as a new matrix.
    pub fn rows(&self, start: usize, end: usize) -> Self {
        assert!(start < end && end <= self.t_len, "row range out of bounds");
        let mut data = Vec::with_capacity((end - start) * self.n_series);
        for col in self.columns() {
            data.extend_from_slice(&col[start..end]);
        }
        Self {
            data,
            series_names: self.series_names.clone(),
            t_len: end - start,
            n_series: self.n_series,
        }
    }

    /// Single-series matrix holding column `n`.
    pub fn column_matrix(&self, n: usize) -> Self {
        Self {
            data: self.series(n).to_vec(),
            series_names: vec![self.series_names[n].clone()],
            t_len: self.t_len,
            n_series: 1,
        }
    }

    /// Stacks matrices with identical series vertically (in time).
    pub fn concat_rows(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or(DataError::EmptyDataset)?;
        let mut columns = vec![Vec::new(); first.n_series];
        for part in parts {
            if part.n_series != first.n_series {
                return Err(DataError::ShapeMismatch {
                    expected: first.n_series,
                    found: part.n_series,
                });
            }
            for (n, col) in part.columns().enumerate() {
                columns[n].extend_from_slice(col);
            }
        }
        Self::from_columns(columns, first.series_names.clone())
    }

    fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for (n, col) in out.data.chunks_exact_mut(self.t_len).enumerate() {
            for v in col {
                *v = f(n, *v);
            }
        }
        out
    }
}

/// Loads a header-first CSV file. When `timestamp_column` names a header
/// field that column is dropped without parsing; every other cell must be a
/// real number.
pub fn load_csv(path: &Path, timestamp_column: Option<&str>) -> Result<TimeSeriesMatrix> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, timestamp_column)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    timestamp_column: Option<&str>,
) -> Result<TimeSeriesMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .clone();
    let skip = match timestamp_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::UnknownColumn(name.to_string()))?,
        ),
        None => None,
    };
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(_, h)| h.to_string())
        .collect();
    if names.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let mut columns = vec![Vec::new(); names.len()];
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut n = 0;
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == skip {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| DataError::ParseError(row, c + 1))?;
            if !v.is_finite() {
                return Err(DataError::ParseError(row, c + 1));
            }
            columns[n].push(v);
            n += 1;
        }
    }
    if columns[0].len() < 2 {
        return Err(DataError::EmptyDataset);
    }
    TimeSeriesMatrix::from_columns(columns, names)
}

/// Writes a matrix as CSV with a header of series names.
pub fn write_csv<W: std::io::Write>(m: &TimeSeriesMatrix, writer: W) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(m.series_names())?;
    for t in 0..m.t_len() {
        wtr.write_record((0..m.n_series()).map(|n| m.get(t, n).to_string()))?;
    }
    wtr.flush()
}

/// Train/validation/test proportions, held as exact integer weights so that
/// split sizes are computed without floating-point rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    weights: [u64; 3],
}

const SPLIT_DENOM: u64 = 1_000_000;

impl SplitSpec {
    /// 60/20/20, used for the ETT family.
    pub const ETT: SplitSpec = SplitSpec {
        weights: [600_000, 200_000, 200_000],
    };
    /// 70/10/20, used for every other benchmark.
    pub const STANDARD: SplitSpec = SplitSpec {
        weights: [700_000, 100_000, 200_000],
    };

    /// Fractions are snapped to multiples of 1e-6 and must sum to exactly one
    /// at that resolution.
    pub fn from_fractions(train: f64, val: f64, test: f64) -> Result<Self> {
        let mut weights = [0u64; 3];
        for (w, f) in weights.iter_mut().zip([train, val, test]) {
            if !(f > 0.0 && f < 1.0) {
                return Err(DataError::InvalidSplit(format!(
                    "fraction {f} outside (0, 1)"
                )));
            }
            *w = (f * SPLIT_DENOM as f64).round() as u64;
        }
        if weights.iter().sum::<u64>() != SPLIT_DENOM {
            return Err(DataError::InvalidSplit(format!(
                "{train} + {val} + {test} != 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn fractions(&self) -> [f64; 3] {
        self.weights.map(|w| w as f64 / SPLIT_DENOM as f64)
    }

    /// Row counts for a series of `t_len` rows: floor for train and val,
    /// remainder to test.
    pub fn sizes(&self, t_len: usize) -> [usize; 3] {
        let t = t_len as u64;
        let train = (t * self.weights[0] / SPLIT_DENOM) as usize;
        let val = (t * self.weights[1] / SPLIT_DENOM) as usize;
        [train, val, t_len - train - val]
    }
}

impl std::str::FromStr for SplitSpec {
    type Err = DataError;

    /// Parses `"0.7,0.1,0.2"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| DataError::InvalidSplit(format!("{s:?}: {e}")))?;
        match parts.as_slice() {
            [a, b, c] => Self::from_fractions(*a, *b, *c),
            _ => Err(DataError::InvalidSplit(format!(
                "{s:?}: expected three comma-separated fractions"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: TimeSeriesMatrix,
    pub val: TimeSeriesMatrix,
    pub test: TimeSeriesMatrix,
}

pub fn chronological_split(m: &TimeSeriesMatrix, spec: SplitSpec) -> Result<Splits> {
    let sizes = spec.sizes(m.t_len());
    if sizes.contains(&0) {
        return Err(DataError::DegenerateSplit {
            t_len: m.t_len(),
            sizes,
        });
    }
    let [a, b, _] = sizes;
    Ok(Splits {
        train: m.rows(0, a),
        val: m.rows(a, a + b),
        test: m.rows(a + b, m.t_len()),
    })
}

/// Per-series mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Normalizer {
    pub fn fit(train: &TimeSeriesMatrix) -> Result<Self> {
        let mut means = Vec::with_capacity(train.n_series());
        let mut stds = Vec::with_capacity(train.n_series());
        for (n, col) in train.columns().enumerate() {
            let len = col.len() as f64;
            let mean = col.iter().sum::<f64>() / len;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
            let std = var.sqrt();
            if std.is_nan() || std <= f64::EPSILON * mean.abs().max(1.0) {
                return Err(DataError::ConstantSeries(n));
            }
            means.push(mean);
            stds.push(std);
        }
        Ok(Self { means, stds })
    }

    fn check(&self, m: &TimeSeriesMatrix) -> Result<()> {
        if m.n_series() != self.means.len() {
            return Err(DataError::ShapeMismatch {
                expected: self.means.len(),
                found: m.n_series(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, m: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        self.check(m)?;
        Ok(m.map_columns(|n, v| (v - self.means[n]) / self.stds[n]))
    }

    pub fn invert(&self, m: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        self.check(m)?;
        Ok(m.map_columns(|n, v| v * self.stds[n] + self.means[n]))
    }

    /// Inverse transform of a single value belonging to series `n`.
    pub fn invert_value(&self, n: usize, v: f64) -> f64 {
        v * self.stds[n] + self.means[n]
    }
}

pub fn fit_normalizer(train: &TimeSeriesMatrix) -> Result<Normalizer> {
    Normalizer::fit(train)
}

/// One univariate (input, target) pair cut at `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastWindow {
    pub origin: usize,
    pub series_index: usize,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Valid origins `input_len, input_len + stride, ...` with
/// `origin + output_len <= t_len`.
pub fn window_origins(
    t_len: usize,
    input_len: usize,
    output_len: usize,
    stride: usize,
) -> Result<Vec<usize>> {
    if input_len == 0 || output_len == 0 || stride == 0 {
        return Err(DataError::InvalidWindow);
    }
    if t_len < input_len + output_len {
        return Err(DataError::TooShort {
            t_len,
            input_len,
            output_len,
        });
    }
    Ok((input_len..=t_len - output_len).step_by(stride).collect())
}

/// All windows ordered by (series, origin).
pub fn make_windows(
    m: &TimeSeriesMatrix,
    input_len: usize,
    output_len: usize,
    stride: usize,
) -> Result<Vec<ForecastWindow>> {
    let origins = window_origins(m.t_len(), input_len, output_len, stride)?;
    let mut out = Vec::with_capacity(origins.len() * m.n_series());
    for (n, col) in m.columns().enumerate() {
        for &t in &origins {
            out.push(ForecastWindow {
                origin: t,
                series_index: n,
                input: col[t - input_len..t].to_vec(),
                target: col[t..t + output_len].to_vec(),
            });
        }
    }
    Ok(out)
}
