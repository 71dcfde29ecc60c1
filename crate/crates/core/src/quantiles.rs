//! Quantile functions on the shared level grid and the monotone refit.

use serde::{Deserialize, Serialize};

use crate::diffusion_kde::{self, BandwidthResult};
use crate::error::{Error, Result};
use crate::grid_dct::bin_samples;

/// Number of intervals in the quantile level grid (spacing `1/1024`).
pub const LEVEL_DIVISIONS: usize = 1024;
/// Number of quantile levels, `0, 1/1024, ..., 1`.
pub const N_LEVELS: usize = LEVEL_DIVISIONS + 1;

/// The shared quantile level grid `{0, 1/1024, ..., 1}`.
pub fn standard_levels() -> Vec<f64> {
    (0..N_LEVELS)
        .map(|j| j as f64 / LEVEL_DIVISIONS as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFunction {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantileFunction {
    /// Wraps values on the standard level grid.
    pub fn on_standard_grid(values: Vec<f64>) -> Result<Self> {
        if values.len() != N_LEVELS {
            return Err(Error::invalid(format!(
                "expected {N_LEVELS} quantile values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            levels: standard_levels(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn same_grid(&self, other: &QuantileFunction) -> bool {
        self.levels == other.levels
    }
}

/// Weights for the monotone refit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitWeights {
    /// `w_j = 1`: the plain L2 projection.
    #[default]
    Uniform,
    /// `w_j = t_j^2`, the squared quantile level.
    LevelSquared,
}

impl RefitWeights {
    pub fn weights(self, levels: &[f64]) -> Vec<f64> {
        match self {
            RefitWeights::Uniform => vec![1.0; levels.len()],
            RefitWeights::LevelSquared => levels.iter().map(|t| t * t).collect(),
        }
    }
}

/// Inverts a nondecreasing CDF tabulated at `grid` by linear interpolation.
///
/// Levels at or below `cdf[0]` map to `grid[0]`; levels `>= 1` map to the
/// last grid point.
pub fn invert_cdf(grid: &[f64], cdf: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    if grid.len() != cdf.len() || grid.is_empty() {
        return Err(Error::invalid(format!(
            "grid ({}) and cdf ({}) must have equal nonzero length",
            grid.len(),
            cdf.len()
        )));
    }
    if let Some(i) = cdf.windows(2).position(|w| !(w[1] >= w[0])) {
        return Err(Error::invalid(format!("cdf decreases at index {}", i + 1)));
    }
    if let Some(t) = levels.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("level {t} outside [0, 1]")));
    }
    let last = grid.len() - 1;
    Ok(levels
        .iter()
        .map(|&t| {
            if t >= 1.0 {
                return grid[last];
            }
            let i = cdf.partition_point(|c| *c < t);
            if i == 0 {
                grid[0]
            } else if i > last {
                grid[last]
            } else {
                let w = (t - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
                grid[i - 1] + w * (grid[i] - grid[i - 1])
            }
        })
        .collect())
}

/// Weighted least-squares projection of `q` onto nondecreasing sequences
/// (pool adjacent violators).
///
/// A pooled block with zero total weight takes the unweighted mean of its
/// members.
pub fn monotone_refit(q: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if q.len() != weights.len() {
        return Err(Error::invalid("values and weights differ in length"));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }

    struct Block {
        wsum: f64,
        wy: f64,
        ysum: f64,
        len: usize,
        value: f64,
    }
    impl Block {
        fn absorb(&mut self, other: Block) {
            self.wsum += other.wsum;
            self.wy += other.wy;
            self.ysum += other.ysum;
            self.len += other.len;
            self.value = if self.wsum > 0.0 {
                self.wy / self.wsum
            } else {
                self.ysum / self.len as f64
            };
        }
    }

    let mut blocks: Vec<Block> = Vec::with_capacity(q.len());
    for (&y, &w) in q.iter().zip(weights) {
        blocks.push(Block {
            wsum: w,
            wy: w * y,
            ysum: y,
            len: 1,
            value: y,
        });
        while blocks.len() > 1 {
            let n = blocks.len();
            if blocks[n - 2].value <= blocks[n - 1].value {
                break;
            }
            let top = blocks.pop().expect("len > 1");
            blocks.last_mut().expect("len > 1").absorb(top);
        }
    }

    let mut out = Vec::with_capacity(q.len());
    for b in &blocks {
        out.extend(std::iter::repeat_n(b.value, b.len));
    }
    // pooled means can break ties by an ulp; the output must be exactly monotone
    for i in 1..out.len() {
        if out[i] < out[i - 1] {
            out[i] = out[i - 1];
        }
    }
    Ok(out)
}

/// Projects a quantile function back into the nondecreasing cone.
pub fn refit_quantile(q: &QuantileFunction, weights: RefitWeights) -> Result<QuantileFunction> {
    let w = weights.weights(&q.levels);
    Ok(QuantileFunction {
        levels: q.levels.clone(),
        values: monotone_refit(&q.values, &w)?,
    })
}

/// Settings for turning one subject's raw samples into a quantile function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantileSettings {
    pub n_grid: usize,
    pub pad_fraction: f64,
    pub refit: RefitWeights,
}

impl Default for QuantileSettings {
    fn default() -> Self {
        Self {
            n_grid: 4096,
            pad_fraction: 0.1,
            refit: RefitWeights::Uniform,
        }
    }
}

/// Diffusion KDE, CDF inversion on the standard levels and monotone refit.
pub fn estimate_quantile_function(
    samples: &[f64],
    settings: &QuantileSettings,
) -> Result<(QuantileFunction, BandwidthResult)> {
    let binned = bin_samples(samples, settings.n_grid, settings.pad_fraction)?;
    let bw = diffusion_kde::select_bandwidth(&binned)?;
    let cdf = diffusion_kde::estimate_cdf(&binned, &bw)?;
    let (knots, fs) = diffusion_kde::cdf_knots(&binned.centers(), &cdf, binned.bin_width());
    let levels = standard_levels();
    let raw = invert_cdf(&knots, &fs, &levels)?;
    let q = refit_quantile(
        &QuantileFunction {
            levels,
            values: raw,
        },
        settings.refit,
    )?;
    Ok((q, bw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wsse(q: &[f64], r: &[f64], w: &[f64]) -> f64 {
        q.iter()
            .zip(r)
            .zip(w)
            .map(|((a, b), w)| w * (a - b) * (a - b))
            .sum()
    }

    #[test]
    fn levels_grid() {
        let l = standard_levels();
        assert_eq!(l.len(), 1025);
        assert_eq!(l[0], 0.0);
        assert_eq!(l[1024], 1.0);
        assert_eq!(l[512], 0.5);
    }

    #[test]
    fn uniform_cdf_gives_linear_quantiles() {
        let (lo, hi) = (2.0, 6.0);
        let grid: Vec<f64> = (0..=100).map(|i| lo + (hi - lo) * i as f64 / 100.0).collect();
        let cdf: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let levels = standard_levels();
        let q = invert_cdf(&grid, &cdf, &levels).unwrap();
        for (t, v) in levels.iter().zip(&q) {
            assert!((v - (lo + t * (hi - lo))).abs() < 1e-12);
        }
    }

    #[test]
    fn median_of_symmetric_cdf() {
        let grid: Vec<f64> = (0..201).map(|i| -1.0 + i as f64 * 0.01).collect();
        let cdf: Vec<f64> = grid
            .iter()
            .map(|x| 0.5 * (1.0 + (x * 3.0f64).tanh() / 3.0f64.tanh()))
            .collect();
        let q = invert_cdf(&grid, &cdf, &[0.5]).unwrap();
        assert!(q[0].abs() <= 0.01);
    }

    #[test]
    fn invert_rejects_decreasing_cdf() {
        let r = invert_cdf(&[0.0, 1.0, 2.0], &[0.0, 0.6, 0.5], &[0.5]);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn endpoint_levels_clamp_to_grid() {
        let grid = [0.0, 1.0, 2.0, 3.0];
        let cdf = [0.1, 0.5, 1.0, 1.0];
        let q = invert_cdf(&grid, &cdf, &[0.0, 0.05, 1.0]).unwrap();
        assert_eq!(q, vec![0.0, 0.0, 3.0]);
    }

    #[test]
    fn gaussian_upper_quantile() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (q, _) = estimate_quantile_function(&xs, &QuantileSettings::default()).unwrap();
        let j = (0.975 * 1024.0) as usize; // 998.4 -> interpolate
        let frac = 0.975 * 1024.0 - j as f64;
        let v = q.values[j] * (1.0 - frac) + q.values[j + 1] * frac;
        assert!((v - 1.959964).abs() < 0.05, "q(0.975)={v}");
        assert!(q.is_nondecreasing());
    }

    #[test]
    fn refit_examples() {
        let u = [1.0; 3];
        assert_eq!(monotone_refit(&[1.0, 2.0, 2.0], &u).unwrap(), vec![1.0, 2.0, 2.0]);
        assert_eq!(monotone_refit(&[1.0, 3.0, 2.0], &u).unwrap(), vec![1.0, 2.5, 2.5]);
        assert_eq!(monotone_refit(&[3.0, 2.0, 1.0], &u).unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn refit_weighted_pool_uses_weights() {
        let r = monotone_refit(&[3.0, 1.0], &[3.0, 1.0]).unwrap();
        assert_eq!(r, vec![2.5, 2.5]);
        // zero-weight level joins its neighbour's value
        let r = monotone_refit(&[5.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(r, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn refit_rejects_mismatch() {
        assert!(monotone_refit(&[1.0, 2.0], &[1.0]).is_err());
        assert!(monotone_refit(&[1.0], &[-1.0]).is_err());
    }

    proptest! {
        #[test]
        fn refit_is_monotone_idempotent_projection(
            (q, w, r) in (1usize..40).prop_flat_map(|n| (
                proptest::collection::vec(-100.0f64..100.0, n),
                proptest::collection::vec(0.01f64..10.0, n),
                proptest::collection::vec(-100.0f64..100.0, n),
            ))
        ) {
            let fit = monotone_refit(&q, &w).unwrap();
            prop_assert!(fit.windows(2).all(|p| p[1] >= p[0]));
            let again = monotone_refit(&fit, &w).unwrap();
            prop_assert_eq!(&again, &fit);
            let mut r = r;
            r.sort_by(f64::total_cmp);
            prop_assert!(wsse(&q, &fit, &w) <= wsse(&q, &r, &w) + 1e-9);
        }
    }
}
