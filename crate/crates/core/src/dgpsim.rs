//! AR(p) data-generating processes and forecast-error accumulation.
//!
//! With `x_t = c + sum_i theta_i x_{t-i} + e_t`, `e_t ~ N(0, sigma^2)`, and
//! `p` observed values, the forecast `k` steps past the prefix expands as
//! `x_{p+k} = const + sum_{j=0..k} psi_j e_{p+k-j}` with `psi_0 = 1` and
//! `psi_j = sum_{i=1..min(j,p)} theta_i psi_{j-i}`. Its variance, the best
//! MSE any forecaster can reach, is `sigma^2 sum_{j<=k} psi_j^2`.
//!
//! For a stationary process the f64 partial sums stop changing once
//! `psi_j^2` drops below half an ulp of the total, so
//! [`exact_forecast_variance`] also evaluates them in exact dyadic
//! arithmetic, where every nonzero `psi_j` gives a strict increase.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{Float, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DgpError {
    #[error("invalid AR process: {0}")]
    InvalidProcess(String),
    #[error("initial values must have length p = {expected}, got {found}")]
    InitLength { expected: usize, found: usize },
    #[error("need at least 2 Monte-Carlo trials, got {0}")]
    TooFewTrials(usize),
}

pub type Result<T> = std::result::Result<T, DgpError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArProcess {
    theta: Vec<f64>,
    c: f64,
    sigma2: f64,
}

impl ArProcess {
    pub fn new(theta: Vec<f64>, c: f64, sigma2: f64) -> Result<Self> {
        if theta.is_empty() {
            return Err(DgpError::InvalidProcess("order p must be >= 1".into()));
        }
        if theta.iter().any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(DgpError::InvalidProcess(
                "coefficients must be finite".into(),
            ));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(DgpError::InvalidProcess(format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        Ok(Self { theta, c, sigma2 })
    }

    pub fn order(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Noise-free one-step value given `history` (oldest first, at least p long).
    fn mean_next(&self, history: &[f64]) -> f64 {
        let n = history.len();
        self.theta
            .iter()
            .enumerate()
            .fold(self.c, |acc, (i, th)| acc + th * history[n - 1 - i])
    }

    fn noise(&self) -> Normal<f64> {
        Normal::new(0.0, self.sigma2.sqrt()).expect("positive variance")
    }
}

/// The `p` initial values followed by `t_len` generated values.
pub fn simulate_ar(proc: &ArProcess, t_len: usize, init: &[f64], seed: u64) -> Result<Vec<f64>> {
    if init.len() != proc.order() {
        return Err(DgpError::InitLength {
            expected: proc.order(),
            found: init.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = proc.noise();
    let mut x = Vec::with_capacity(init.len() + t_len);
    x.extend_from_slice(init);
    for _ in 0..t_len {
        let next = proc.mean_next(&x) + noise.sample(&mut rng);
        x.push(next);
    }
    Ok(x)
}

/// `psi_0..psi_k`.
pub fn psi_weights(proc: &ArProcess, k: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(k + 1);
    psi.push(1.0);
    for j in 1..=k {
        let v = (1..=j.min(proc.order())).fold(0.0, |acc, i| acc + proc.theta[i - 1] * psi[j - i]);
        psi.push(v);
    }
    psi
}

/// `Var[x_{p+j}] = sigma^2 sum_{i<=j} psi_i^2` for `j = 0..=k`.
pub fn analytic_forecast_variance(proc: &ArProcess, k: usize) -> Vec<f64> {
    let mut acc = 0.0;
    psi_weights(proc, k)
        .into_iter()
        .map(|p| {
            acc += p * p;
            proc.sigma2 * acc
        })
        .collect()
}

/// Exact binary rational `mantissa * 2^exp`. Every finite f64 is one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dyadic {
    mantissa: BigInt,
    exp: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Self {
            mantissa: BigInt::zero(),
            exp: 0,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite(), "dyadic from non-finite value");
        let (m, e, sign) = v.integer_decode();
        Self {
            mantissa: BigInt::from(m) * sign as i64,
            exp: e as i64,
        }
        .normalized()
    }

    fn normalized(mut self) -> Self {
        if self.mantissa.is_zero() {
            self.exp = 0;
            return self;
        }
        let tz = self.mantissa.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            self.mantissa >>= tz;
            self.exp += tz as i64;
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.mantissa.is_positive()
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            mantissa: &self.mantissa * &other.mantissa,
            exp: self.exp + other.exp,
        }
        .normalized()
    }

    pub fn add(&self, other: &Self) -> Self {
        let e = self.exp.min(other.exp);
        let a = &self.mantissa << (self.exp - e) as usize;
        let b = &other.mantissa << (other.exp - e) as usize;
        Self {
            mantissa: a + b,
            exp: e,
        }
        .normalized()
    }

    fn neg(&self) -> Self {
        Self {
            mantissa: -&self.mantissa,
            exp: self.exp,
        }
    }

    /// Nearest-ish f64 (truncated to 64 significant bits before rounding).
    pub fn to_f64(&self) -> f64 {
        let bits = self.mantissa.bits() as i64;
        let shift = (bits - 64).max(0);
        let head = (&self.mantissa >> shift as usize).to_f64().unwrap_or(0.0);
        let mut exp = self.exp + shift;
        let mut v = head;
        // scale in steps to avoid intermediate overflow/underflow
        while exp > 0 {
            let s = exp.min(1000);
            v *= 2f64.powi(s as i32);
            exp -= s;
        }
        while exp < 0 {
            let s = (-exp).min(1000);
            v /= 2f64.powi(s as i32);
            exp += s;
        }
        v
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let d = self.add(&other.neg());
        if d.mantissa.is_zero() {
            Ordering::Equal
        } else if d.mantissa.is_positive() {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }
}

/// [`psi_weights`] in exact arithmetic over the process coefficients as given.
pub fn exact_psi_weights(proc: &ArProcess, k: usize) -> Vec<Dyadic> {
    let theta: Vec<Dyadic> = proc.theta.iter().map(|&t| Dyadic::from_f64(t)).collect();
    let mut psi = Vec::with_capacity(k + 1);
    psi.push(Dyadic::from_f64(1.0));
    for j in 1..=k {
        let v = (1..=j.min(theta.len())).fold(Dyadic::zero(), |acc, i| {
            acc.add(&theta[i - 1].mul(&psi[j - i]))
        });
        psi.push(v);
    }
    psi
}

/// [`analytic_forecast_variance`] in exact arithmetic.
pub fn exact_forecast_variance(proc: &ArProcess, k: usize) -> Vec<Dyadic> {
    let sigma2 = Dyadic::from_f64(proc.sigma2);
    let mut acc = Dyadic::zero();
    exact_psi_weights(proc, k)
        .into_iter()
        .map(|p| {
            acc = acc.add(&p.mul(&p));
            acc.mul(&sigma2)
        })
        .collect()
}

const TRIAL_CHUNK: usize = 1024;

/// Per-horizon running moments for a block of trials.
#[derive(Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(h: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; h],
            m2: vec![0.0; h],
        }
    }

    fn push(&mut self, xs: &[f64]) {
        self.count += 1.0;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(xs) {
            let d = x - *m;
            *m += d / self.count;
            *s += d * (x - *m);
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        let n = self.count + other.count;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / n;
            self.mean[i] += d * other.count / n;
        }
        self.count = n;
        self
    }
}

/// Runs `n_trials` future paths of length `k + 1` after `prefix`, each trial
/// on its own ChaCha stream, and folds `f(path)` into per-horizon moments in
/// a fixed order.
fn simulate_paths(
    proc: &ArProcess,
    prefix: &[f64],
    k: usize,
    n_trials: usize,
    seed: u64,
    f: impl Fn(&mut [f64]) + Sync,
) -> Moments {
    let noise = proc.noise();
    let chunks: Vec<Moments> = (0..n_trials.div_ceil(TRIAL_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut mom = Moments::new(k + 1);
            let mut hist = Vec::with_capacity(prefix.len() + k + 1);
            for trial in c * TRIAL_CHUNK..((c + 1) * TRIAL_CHUNK).min(n_trials) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(trial as u64);
                hist.clear();
                hist.extend_from_slice(prefix);
                for _ in 0..=k {
                    let next = proc.mean_next(&hist) + noise.sample(&mut rng);
                    hist.push(next);
                }
                let path = &mut hist[prefix.len()..];
                f(path);
                mom.push(path);
            }
            mom
        })
        .collect();
    chunks
        .iter()
        .fold(Moments::new(k + 1), |acc, m| acc.merge(m))
}

/// Sample variance (n - 1 denominator) of `x_{p+j}`, `j = 0..=k`, across
/// `n_trials` simulated futures of an all-zero observed prefix. The prefix
/// only shifts the mean, not the variance.
pub fn monte_carlo_forecast_variance(
    proc: &ArProcess,
    k: usize,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_trials < 2 {
        return Err(DgpError::TooFewTrials(n_trials));
    }
    let prefix = vec![0.0; proc.order()];
    let mom = simulate_paths(proc, &prefix, k, n_trials, seed, |_| {});
    Ok(mom.m2.iter().map(|s| s / (mom.count - 1.0)).collect())
}

/// Noise-free continuation of `prefix`: the conditional mean of
/// `x_{p+j}`, `j = 0..=k`, i.e. the true-DGP forecast.
pub fn conditional_mean_forecast(proc: &ArProcess, prefix: &[f64], k: usize) -> Result<Vec<f64>> {
    if prefix.len() < proc.order() {
        return Err(DgpError::InitLength {
            expected: proc.order(),
            found: prefix.len(),
        });
    }
    let mut hist = prefix.to_vec();
    for _ in 0..=k {
        let next = proc.mean_next(&hist);
        hist.push(next);
    }
    Ok(hist.split_off(prefix.len()))
}

/// Per-horizon empirical MSE of the true-DGP forecast over `n_trials`
/// simulated futures of `prefix`.
pub fn monte_carlo_forecast_mse(
    proc: &ArProcess,
    prefix: &[f64],
    k: usize,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_trials < 2 {
        return Err(DgpError::TooFewTrials(n_trials));
    }
    let forecast = conditional_mean_forecast(proc, prefix, k)?;
    let mom = simulate_paths(proc, prefix, k, n_trials, seed, |path| {
        for (x, m) in path.iter_mut().zip(&forecast) {
            *x = (*x - m).powi(2);
        }
    });
    Ok(mom.mean)
}
