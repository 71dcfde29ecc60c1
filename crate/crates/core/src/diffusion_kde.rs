//! Diffusion kernel density estimation on a binned grid.
//!
//! All bandwidth arithmetic happens in coordinates where the grid `[lo, hi]`
//! is mapped onto `[0, 1]`; a squared bandwidth `t` there corresponds to
//! `t * R^2` in data units, `R = hi - lo`.
//!
//! Bandwidth selection is the `l`-stage plug-in fixed point: for a candidate
//! `t` the functional `||f^(l)||^2` is evaluated at `t`, then each lower
//! order `s = l-1, ..., 2` gets its own AMISE-optimal time `t_s` and its
//! functional is re-evaluated there. The selected `*t` is the root of
//! `t - (2 n sqrt(pi) ||f''||^2)^(-2/5)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_dct::{dct2, dct3, BinnedData};

/// Order of the highest derivative functional in the stage chain.
pub const INITIAL_ORDER: u32 = 7;

/// Minimum sample count accepted by [`select_bandwidth`].
pub const MIN_SAMPLES: usize = 10;

const BISECTION_TOL: f64 = 1e-12;
const BRACKET_HI: f64 = 0.1;

/// Below this exponent every remaining term underflows to zero.
const EXP_CUTOFF: f64 = -745.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthResult {
    /// Squared bandwidth for the density, rescaled coordinates.
    pub t_star: f64,
    /// Squared bandwidth for the distribution function, rescaled coordinates.
    pub t_cdf: f64,
    /// `(s, t_s)` for `s = l-1 down to 2`, evaluated at the selected `t_star`.
    pub stages: Vec<(u32, f64)>,
    pub converged: bool,
    /// Grid range `R`; multiply a rescaled `t` by `R^2` for data units.
    pub range: f64,
}

impl BandwidthResult {
    /// Kernel standard deviation of the density smoother, in data units.
    pub fn h(&self) -> f64 {
        self.t_star.sqrt() * self.range
    }

    pub fn h_cdf(&self) -> f64 {
        self.t_cdf.sqrt() * self.range
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    /// Bin centers.
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// `cdf[i]` is the estimated probability mass up to the right edge of bin `i`.
    pub cdf: Vec<f64>,
    pub bandwidth: BandwidthResult,
}

impl DensityEstimate {
    pub fn bin_width(&self) -> f64 {
        if self.grid.len() > 1 {
            self.grid[1] - self.grid[0]
        } else {
            self.bandwidth.range
        }
    }

    /// Piecewise-linear CDF knots `(x, F(x))`, starting at `(lo, 0)` and then
    /// one knot per right bin edge.
    pub fn cdf_knots(&self) -> (Vec<f64>, Vec<f64>) {
        cdf_knots(&self.grid, &self.cdf, self.bin_width())
    }

    /// Linear interpolation of the density; zero outside the grid.
    pub fn evaluate(&self, x: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() || x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let i = g.partition_point(|v| *v <= x);
        if i >= g.len() {
            return self.density[g.len() - 1];
        }
        if i == 0 {
            return self.density[0];
        }
        let w = (x - g[i - 1]) / (g[i] - g[i - 1]);
        self.density[i - 1] * (1.0 - w) + self.density[i] * w
    }
}

pub(crate) fn cdf_knots(centers: &[f64], cdf: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(centers.len() + 1);
    let mut fs = Vec::with_capacity(cdf.len() + 1);
    if let Some(first) = centers.first() {
        xs.push(first - dx / 2.0);
        fs.push(0.0);
    }
    xs.extend(centers.iter().map(|c| c + dx / 2.0));
    fs.extend_from_slice(cdf);
    (xs, fs)
}

/// Squared half-coefficients `a_k = (v_k / 2)^2` of the binned data.
pub fn squared_coefficients(binned: &BinnedData) -> Result<Vec<f64>> {
    Ok(dct2(&binned.counts)?
        .into_iter()
        .map(|v| (v / 2.0).powi(2))
        .collect())
}

/// `sum_{k>=1} k^(2j) a_k exp(-k^2 pi^2 t)`; `a[0]` is ignored.
fn spectral_sum(a: &[f64], j: u32, t: f64) -> f64 {
    let mut acc = 0.0;
    let pi2t = PI * PI * t;
    for (k, ak) in a.iter().enumerate().skip(1) {
        let ik = (k * k) as f64;
        let e = -ik * pi2t;
        if e < EXP_CUTOFF {
            break;
        }
        acc += ik.powi(j as i32) * ak * e.exp();
    }
    acc
}

/// Spectral approximation of `||f^(j)||^2` at squared bandwidth `t_j`:
/// `2 pi^(2j) sum_{k>=1} k^(2j) a_k exp(-k^2 pi^2 t_j)`.
///
/// `a` is indexed by frequency `k` (entry 0 is the constant term and does not
/// contribute); `t_j` is in rescaled coordinates.
pub fn l2_norm_derivative_spectral(a: &[f64], j: u32, t_j: f64) -> Result<f64> {
    if j < 1 {
        return Err(Error::invalid("derivative order must be >= 1"));
    }
    if !(t_j > 0.0 && t_j.is_finite()) {
        return Err(Error::invalid(format!("t_j must be positive, got {t_j}")));
    }
    Ok(2.0 * PI.powi(2 * j as i32) * spectral_sum(a, j, t_j))
}

fn odd_product(s: u32) -> f64 {
    (1..=s).map(|j| (2 * j - 1) as f64).product()
}

/// Runs the stage chain from order `l` at candidate `t` and returns
/// `(||f''||^2 estimate, stages)`.
fn stage_chain(a: &[f64], n: f64, t: f64) -> (f64, Vec<(u32, f64)>) {
    let l = INITIAL_ORDER;
    let mut f = 2.0 * PI.powi(2 * l as i32) * spectral_sum(a, l, t);
    let mut stages = Vec::with_capacity(l as usize - 2);
    for s in (2..l).rev() {
        let m0 = odd_product(s) / (2.0 * PI).sqrt();
        let c = (1.0 + 0.5f64.powf(s as f64 + 0.5)) / 3.0;
        let t_s = (2.0 * c * m0 / (n * f)).powf(2.0 / (3.0 + 2.0 * s as f64));
        f = 2.0 * PI.powi(2 * s as i32) * spectral_sum(a, s, t_s);
        stages.push((s, t_s));
    }
    (f, stages)
}

fn fixed_point_gap(a: &[f64], n: f64, t: f64) -> f64 {
    let (f, _) = stage_chain(a, n, t);
    t - (2.0 * n * PI.sqrt() * f).powf(-0.4)
}

/// Fallback squared bandwidth when the fixed point cannot be bracketed.
pub fn fallback_t(n: usize) -> f64 {
    0.28 * (n as f64).powf(-0.4)
}

fn cdf_time(a: &[f64], n: f64, t_star: f64) -> Result<f64> {
    let norm1 = l2_norm_derivative_spectral(a, 1, t_star)?;
    Ok((PI.sqrt() * n * norm1).powf(-2.0 / 3.0))
}

/// Plug-in fixed-point bandwidth selection on rescaled binned data.
///
/// The root is bracketed on `[n^-2, 0.1]` and found by bisection. When the
/// bracket holds no sign change, [`fallback_t`] is used and `converged` is
/// false.
pub fn select_bandwidth(binned: &BinnedData) -> Result<BandwidthResult> {
    if binned.n_samples < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "bandwidth selection needs at least {MIN_SAMPLES} samples, got {}",
            binned.n_samples
        )));
    }
    let a = squared_coefficients(binned)?;
    let n = binned.n_samples as f64;

    let mut lo = n.powi(-2);
    let mut hi = BRACKET_HI;
    let g_lo = fixed_point_gap(&a, n, lo);
    let g_hi = fixed_point_gap(&a, n, hi);

    let root = if g_lo.is_finite() && g_hi.is_finite() && g_lo.signum() != g_hi.signum() {
        let lo_sign = g_lo.signum();
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            let g = fixed_point_gap(&a, n, mid);
            if !g.is_finite() {
                break;
            }
            if g.signum() == lo_sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        (t.is_finite() && t > 0.0).then_some(t)
    } else {
        None
    };

    let (t_star, converged) = match root {
        Some(t) => (t, true),
        None => (fallback_t(binned.n_samples), false),
    };
    let (_, stages) = stage_chain(&a, n, t_star);
    let mut t_cdf = cdf_time(&a, n, t_star)?;
    if !(t_cdf.is_finite() && t_cdf > 0.0) {
        // flat spectrum: no curvature information, smooth like the density
        t_cdf = t_star;
    }

    Ok(BandwidthResult {
        t_star,
        t_cdf,
        stages,
        converged,
        range: binned.range(),
    })
}

fn smoothed_masses(binned: &BinnedData, t: f64) -> Result<Vec<f64>> {
    let mut v = dct2(&binned.counts)?;
    for (k, vk) in v.iter_mut().enumerate() {
        let w = PI * k as f64;
        *vk *= (-t * w * w / 2.0).exp();
    }
    dct3(&v)
}

fn trapezoid(y: &[f64], dx: f64) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => dx * (y[1..n - 1].iter().sum::<f64>() + 0.5 * (y[0] + y[n - 1])),
    }
}

/// Smoothed density on the bin centers, clipped at zero and renormalized to
/// unit trapezoidal integral.
pub fn estimate_density(binned: &BinnedData, bw: &BandwidthResult) -> Result<Vec<f64>> {
    let dx = binned.bin_width();
    let mut density: Vec<f64> = smoothed_masses(binned, bw.t_star)?
        .into_iter()
        .map(|m| (m / dx).max(0.0))
        .collect();
    let total = trapezoid(&density, dx);
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numerical("density integrates to zero".into()));
    }
    density.iter_mut().for_each(|d| *d /= total);
    Ok(density)
}

/// Distribution function at the right edge of every bin, smoothed with
/// `t_cdf`; nondecreasing, in `[0, 1]`, last value exactly 1.
pub fn estimate_cdf(binned: &BinnedData, bw: &BandwidthResult) -> Result<Vec<f64>> {
    let masses = smoothed_masses(binned, bw.t_cdf)?;
    let denom = (binned.n_grid - 1) as f64;
    let mut acc = 0.0;
    let partial: Vec<f64> = masses
        .iter()
        .map(|m| {
            acc += m;
            acc / denom
        })
        .collect();
    let last = *partial.last().expect("grid is nonempty");
    if !(last > 0.0 && last.is_finite()) {
        return Err(Error::Numerical("cumulative mass is not positive".into()));
    }
    let mut running = 0.0f64;
    let mut cdf: Vec<f64> = partial
        .iter()
        .map(|p| {
            running = running.max(p / last);
            running.min(1.0)
        })
        .collect();
    *cdf.last_mut().expect("grid is nonempty") = 1.0;
    Ok(cdf)
}

/// Full estimate: bandwidth, density and CDF.
pub fn estimate(binned: &BinnedData) -> Result<DensityEstimate> {
    let bandwidth = select_bandwidth(binned)?;
    let density = estimate_density(binned, &bandwidth)?;
    let cdf = estimate_cdf(binned, &bandwidth)?;
    Ok(DensityEstimate {
        grid: binned.centers(),
        density,
        cdf,
        bandwidth,
    })
}
