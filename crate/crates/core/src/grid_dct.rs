//! Uniform binning of raw samples and the Type-II / Type-III cosine
//! transforms used by the spectral density machinery.
//!
//! Transform convention (unnormalized, no orthonormal scaling):
//!
//! ```text
//! dct2:  y_k = 2 * sum_j x_j cos(pi k (2j+1) / 2N)
//! dct3:  x_j = (1/N) * (y_0 / 2 + sum_{k>=1} y_k cos(pi k (2j+1) / 2N))
//! ```
//!
//! so `dct3(dct2(x)) == x`. Both are computed with a single length-N complex
//! FFT using the even/odd reordering trick.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative bin frequencies on a uniform grid covering `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedData {
    pub lo: f64,
    pub hi: f64,
    pub n_grid: usize,
    pub counts: Vec<f64>,
    pub n_samples: usize,
}

impl BinnedData {
    /// Data range `R = hi - lo`.
    pub fn range(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn bin_width(&self) -> f64 {
        self.range() / self.n_grid as f64
    }

    /// Bin centers in data units.
    pub fn centers(&self) -> Vec<f64> {
        let dx = self.bin_width();
        (0..self.n_grid)
            .map(|i| self.lo + (i as f64 + 0.5) * dx)
            .collect()
    }
}

fn check_pow2(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::invalid(format!(
            "transform length must be a power of two >= 2, got {n}"
        )));
    }
    Ok(())
}

/// Histogram `samples` onto `n_grid` equal-width bins spanning the sample
/// range padded by `pad_fraction * range` on each side.
///
/// Bins are left-closed; the last bin is also right-closed. A degenerate
/// range (all samples equal) is treated as a range of 1.
pub fn bin_samples(samples: &[f64], n_grid: usize, pad_fraction: f64) -> Result<BinnedData> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot bin an empty sample"));
    }
    check_pow2(n_grid)?;
    if !(pad_fraction >= 0.0 && pad_fraction.is_finite()) {
        return Err(Error::invalid(format!(
            "pad_fraction must be finite and >= 0, got {pad_fraction}"
        )));
    }
    if let Some((i, x)) = samples.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(Error::invalid(format!("sample {i} is not finite ({x})")));
    }

    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let range = if max > min { max - min } else { 1.0 };
    let (mut lo, mut hi) = (min - pad_fraction * range, max + pad_fraction * range);
    if hi <= lo {
        // unpadded degenerate sample
        lo = min - 0.5;
        hi = max + 0.5;
    }

    let scale = n_grid as f64 / (hi - lo);
    let mut tally = vec![0u64; n_grid];
    for &x in samples {
        let idx = ((x - lo) * scale).floor();
        let idx = if idx < 0.0 { 0 } else { (idx as usize).min(n_grid - 1) };
        tally[idx] += 1;
    }
    let n = samples.len() as f64;
    let counts = tally.into_iter().map(|c| c as f64 / n).collect();

    Ok(BinnedData {
        lo,
        hi,
        n_grid,
        counts,
        n_samples: samples.len(),
    })
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex<f64>], inverse: bool) {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let fft = if inverse {
            planner.plan_fft_inverse(buf.len())
        } else {
            planner.plan_fft_forward(buf.len())
        };
        fft.process(buf);
    });
}

/// Type-II DCT, `y_k = 2 sum_j x_j cos(pi k (2j+1) / 2N)`.
pub fn dct2(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    check_pow2(n)?;
    let half = n / 2;
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for j in 0..half {
        buf[j].re = x[2 * j];
        buf[n - 1 - j].re = x[2 * j + 1];
    }
    fft_in_place(&mut buf, false);
    Ok(buf
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = Complex::from_polar(1.0, -PI * k as f64 / (2 * n) as f64);
            2.0 * (w * v).re
        })
        .collect())
}

/// Type-III DCT scaled to be the exact inverse of [`dct2`].
pub fn dct3(y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    check_pow2(n)?;
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|k| {
            let mirror = if k == 0 { 0.0 } else { y[n - k] };
            let z = Complex::new(y[k], -mirror) * 0.5;
            z * Complex::from_polar(1.0, PI * k as f64 / (2 * n) as f64)
        })
        .collect();
    fft_in_place(&mut buf, true);
    let scale = 1.0 / n as f64;
    let mut x = vec![0.0; n];
    for j in 0..n / 2 {
        x[2 * j] = buf[j].re * scale;
        x[2 * j + 1] = buf[n - 1 - j].re * scale;
    }
    Ok(x)
}
