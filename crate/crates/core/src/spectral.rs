//! Discrete Fourier transform and the real-valued packing of a real signal's
//! spectrum.
//!
//! A real signal of length `L` has a conjugate-symmetric spectrum, so only
//! `L` real numbers in it are free: the real parts of bins `0..=L/2` and the
//! imaginary parts of bins `1..=(L-1)/2`. [`dft_extract`] lays those out as
//!
//! ```text
//! [Re z0, Re z1, ..., Re z_{L/2}, Im z1, ..., Im z_{(L-1)/2}]
//! ```
//!
//! and [`insert_idft`] rebuilds the full spectrum from that layout and
//! inverts it. Forward transform is unnormalized, inverse carries `1/L`.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("empty input")]
    EmptyInput,
    #[error("signal of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(SpectralError::EmptyInput);
    }
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SpectralError::NonFinite(i)),
        None => Ok(()),
    }
}

/// In-place forward transform of a complex buffer.
pub fn fft_in_place(buf: &mut [Complex64]) {
    if buf.len() > 1 {
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
        fft.process(buf);
    }
}

/// In-place inverse transform, including the `1/L` factor.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    for v in buf.iter_mut() {
        *v = v.conj();
    }
    fft_in_place(buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v = v.conj() * scale;
    }
}

/// Unnormalized forward DFT of a real signal.
pub fn dft(x: &[f64]) -> Result<Vec<Complex64>> {
    check_finite(x)?;
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    Ok(buf)
}

/// Inverse DFT (with `1/L`) of a complex spectrum.
pub fn idft(spectrum: &[Complex64]) -> Vec<Complex64> {
    let mut buf = spectrum.to_vec();
    ifft_in_place(&mut buf);
    buf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Packed real spectrum of a real signal; same length as the signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVector {
    packed: Vec<f64>,
}

impl SpectralVector {
    pub fn new(packed: Vec<f64>) -> Result<Self> {
        if packed.len() < 2 {
            return Err(SpectralError::TooShort {
                len: packed.len(),
                min: 2,
            });
        }
        Ok(Self { packed })
    }

    pub fn len(&self) -> usize {
        self.packed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packed.is_empty()
    }

    pub fn parity(&self) -> Parity {
        if self.packed.len().is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// Number of real-part slots: bins `0..=L/2`.
    pub fn real_slots(&self) -> usize {
        self.packed.len() / 2 + 1
    }

    /// Number of imaginary-part slots: bins `1..=(L-1)/2`.
    pub fn imag_slots(&self) -> usize {
        self.packed.len() - self.real_slots()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.packed
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.packed
    }

    /// Rebuilds the full conjugate-symmetric spectrum.
    pub fn to_spectrum(&self) -> Vec<Complex64> {
        let l = self.packed.len();
        let half = l / 2;
        let mut z = vec![Complex64::new(0.0, 0.0); l];
        z[0] = Complex64::new(self.packed[0], 0.0);
        for k in 1..=(l - 1) / 2 {
            let v = Complex64::new(self.packed[k], self.packed[half + k]);
            z[k] = v;
            z[l - k] = v.conj();
        }
        if l.is_multiple_of(2) {
            z[half] = Complex64::new(self.packed[half], 0.0);
        }
        z
    }
}

fn pack(spectrum: &[Complex64]) -> Vec<f64> {
    let l = spectrum.len();
    let half = l / 2;
    let mut packed = vec![0.0; l];
    for k in 0..=half {
        packed[k] = spectrum[k].re;
    }
    for k in 1..=(l - 1) / 2 {
        packed[half + k] = spectrum[k].im;
    }
    packed
}

/// "DFT and extract": forward transform followed by packing.
pub fn dft_extract(x: &[f64]) -> Result<SpectralVector> {
    if x.len() < 2 {
        return Err(if x.is_empty() {
            SpectralError::EmptyInput
        } else {
            SpectralError::TooShort { len: 1, min: 2 }
        });
    }
    Ok(SpectralVector {
        packed: pack(&dft(x)?),
    })
}

/// "Insert and inverse DFT": unpack, invert, keep the real part.
pub fn insert_idft(s: &SpectralVector) -> Vec<f64> {
    idft(&s.to_spectrum()).into_iter().map(|z| z.re).collect()
}

/// Like [`insert_idft`] but also returns the largest imaginary residue of the
/// reconstruction, which is zero up to rounding for a valid packing.
pub fn insert_idft_with_residue(s: &SpectralVector) -> (Vec<f64>, f64) {
    let z = idft(&s.to_spectrum());
    let residue = z.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    (z.into_iter().map(|v| v.re).collect(), residue)
}

/// Transpose of the linear map `packed -> insert_idft(packed)`, applied to a
/// time-domain vector. This is the gradient of a loss with respect to the
/// packed spectrum given its gradient in the time domain.
pub fn insert_idft_adjoint(grad_time: &[f64]) -> Vec<f64> {
    let l = grad_time.len();
    let mut g = pack(&dft(grad_time).expect("finite gradient"));
    let half = l / 2;
    let inv = 1.0 / l as f64;
    for (k, v) in g.iter_mut().enumerate() {
        let self_conjugate = k == 0 || (l.is_multiple_of(2) && k == half);
        *v *= if self_conjugate { inv } else { 2.0 * inv };
    }
    g
}

/// Dominant period from the amplitude spectrum.
///
/// The peak over bins `1..=L/2` (smallest bin on ties) gives
/// `round(L / k)`, clamped to `[2, max_period]`. The series counts as
/// non-periodic (period 1) when the peak does not clear
/// [`periodicity_threshold`] times the median amplitude.
pub fn estimate_period(x: &[f64], max_period: usize) -> Result<usize> {
    check_finite(x)?;
    let max_period = max_period.max(2);
    if x.len() < 2 * max_period {
        return Err(SpectralError::TooShort {
            len: x.len(),
            min: 2 * max_period,
        });
    }
    let l = x.len();
    let z = dft(x)?;
    let amps: Vec<f64> = (1..=l / 2).map(|k| z[k].norm()).collect();
    let (peak_idx, peak) = amps
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &a)| {
            if a > best.1 {
                (i, a)
            } else {
                best
            }
        });
    let mut sorted = amps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if peak <= 1e-9 * scale * l as f64 || peak < periodicity_threshold(amps.len()) * median {
        return Ok(1);
    }
    let k = peak_idx + 1;
    let period = (l as f64 / k as f64).round() as usize;
    Ok(period.clamp(2, max_period))
}

/// Peak-to-median amplitude ratio a series must exceed to be called
/// periodic, for `n_bins` candidate bins.
///
/// For white noise the bin amplitudes are Rayleigh distributed, so the chance
/// that a single bin exceeds `c` times the median is `2^(-c^2)`. Requiring
/// the family-wise false-alarm rate over all bins to stay below 1% gives
/// `c = sqrt(log2(n_bins / 0.01))`; the ratio never drops below 3.
pub fn periodicity_threshold(n_bins: usize) -> f64 {
    const FALSE_ALARM: f64 = 0.01;
    (n_bins.max(1) as f64 / FALSE_ALARM).log2().sqrt().max(3.0)
}
