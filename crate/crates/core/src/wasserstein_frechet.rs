//! 2-Wasserstein geometry on quantile functions and global Fréchet
//! regression with Euclidean covariates.
//!
//! In one dimension `d_W(f, g)` is the L2 distance between quantile
//! functions, so Fréchet means are pointwise averages of quantile functions
//! and the covariate-conditioned mean is a weighted average with weights
//! `s_i(z) = 1 + (Z_i - Zbar)^T Sigma^-1 (z - Zbar)`, projected back onto the
//! nondecreasing cone.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantiles::{monotone_refit, QuantileFunction, RefitWeights};

/// Covariates of one subject, e.g. `[age, gender]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariateVector(pub Vec<f64>);

impl CovariateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariates must be finite"));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for CovariateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Ridge added to the sample covariance before inversion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Ridge {
    /// `1e-8 * trace(Sigma) / p`, or `1e-8` when the trace is zero.
    #[default]
    Auto,
    Fixed(f64),
}

fn trapezoid_weights(levels: &[f64]) -> Vec<f64> {
    let m = levels.len();
    let mut w = vec![0.0; m];
    for j in 1..m {
        let h = levels[j] - levels[j - 1];
        w[j - 1] += h / 2.0;
        w[j] += h / 2.0;
    }
    w
}

fn squared_distance_on(levels: &[f64], a: &[f64], b: &[f64]) -> f64 {
    trapezoid_weights(levels)
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum()
}

/// `d_W(qa, qb) = (int_0^1 (Q_a - Q_b)^2 dt)^(1/2)`, trapezoidal rule on the
/// shared level grid.
pub fn wasserstein_distance(qa: &QuantileFunction, qb: &QuantileFunction) -> Result<f64> {
    if !qa.same_grid(qb) || qa.values.len() != qa.levels.len() || qb.values.len() != qb.levels.len()
    {
        return Err(Error::invalid("quantile functions are on different level grids"));
    }
    Ok(squared_distance_on(&qa.levels, &qa.values, &qb.values)
        .max(0.0)
        .sqrt())
}

fn check_rows(levels: &[f64], rows: &[Vec<f64>]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("need at least one quantile function"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != levels.len()) {
        return Err(Error::invalid(format!(
            "row {i} has {} values, expected {}",
            rows[i].len(),
            levels.len()
        )));
    }
    Ok(())
}

fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; rows[0].len()];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Pointwise average of the rows, projected onto nondecreasing functions.
pub fn frechet_mean(levels: &[f64], rows: &[Vec<f64>]) -> Result<QuantileFunction> {
    check_rows(levels, rows)?;
    let mean = column_mean(rows);
    let values = monotone_refit(&mean, &RefitWeights::Uniform.weights(levels))?;
    Ok(QuantileFunction {
        levels: levels.to_vec(),
        values,
    })
}

/// `(1/n) sum_i d_W^2(Q_i, mean)`.
pub fn frechet_variance(levels: &[f64], rows: &[Vec<f64>]) -> Result<f64> {
    let mean = frechet_mean(levels, rows)?;
    Ok(rows
        .iter()
        .map(|r| squared_distance_on(levels, r, &mean.values))
        .sum::<f64>()
        / rows.len() as f64)
}

/// One group's training quantile functions and covariate moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetModel {
    pub group_tag: String,
    pub levels: Vec<f64>,
    /// `n x m`, row `i` is `Q_i` on `levels`.
    pub quantile_matrix: Vec<Vec<f64>>,
    /// `n x p`.
    pub covariates: Vec<Vec<f64>>,
    pub z_bar: Vec<f64>,
    /// Sample covariance with `1/n` normalization, before the ridge.
    pub sigma_hat: Vec<Vec<f64>>,
    pub ridge: f64,
}

impl FrechetModel {
    pub fn fit(
        group_tag: impl Into<String>,
        levels: Vec<f64>,
        quantile_matrix: Vec<Vec<f64>>,
        covariates: Vec<Vec<f64>>,
        ridge: Ridge,
    ) -> Result<Self> {
        check_rows(&levels, &quantile_matrix)?;
        if covariates.len() != quantile_matrix.len() {
            return Err(Error::invalid(format!(
                "{} covariate rows for {} quantile functions",
                covariates.len(),
                quantile_matrix.len()
            )));
        }
        let p = covariates[0].len();
        if p == 0 || covariates.iter().any(|c| c.len() != p) {
            return Err(Error::invalid("covariate rows must share a positive dimension"));
        }
        if covariates.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariates must be finite"));
        }
        if let Some(i) = quantile_matrix
            .iter()
            .position(|r| r.windows(2).any(|w| !(w[1] >= w[0])))
        {
            return Err(Error::invalid(format!("quantile row {i} is not nondecreasing")));
        }

        let n = covariates.len() as f64;
        let z_bar = column_mean(&covariates);
        let mut sigma_hat = vec![vec![0.0; p]; p];
        for c in &covariates {
            for a in 0..p {
                for b in 0..p {
                    sigma_hat[a][b] += (c[a] - z_bar[a]) * (c[b] - z_bar[b]);
                }
            }
        }
        sigma_hat.iter_mut().flatten().for_each(|v| *v /= n);

        let ridge = match ridge {
            Ridge::Fixed(r) if r >= 0.0 && r.is_finite() => r,
            Ridge::Fixed(r) => return Err(Error::invalid(format!("invalid ridge {r}"))),
            Ridge::Auto => {
                let trace: f64 = (0..p).map(|a| sigma_hat[a][a]).sum();
                if trace > 0.0 {
                    1e-8 * trace / p as f64
                } else {
                    1e-8
                }
            }
        };

        let model = Self {
            group_tag: group_tag.into(),
            levels,
            quantile_matrix,
            covariates,
            z_bar,
            sigma_hat,
            ridge,
        };
        model.regularized_cholesky()?;
        Ok(model)
    }

    pub fn n_subjects(&self) -> usize {
        self.quantile_matrix.len()
    }

    pub fn dim(&self) -> usize {
        self.z_bar.len()
    }

    fn regularized_cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let p = self.dim();
        let m = DMatrix::from_fn(p, p, |a, b| {
            self.sigma_hat[a][b] + if a == b { self.ridge } else { 0.0 }
        });
        m.cholesky().ok_or(Error::SingularCovariance)
    }

    /// `s_i(z)` for every training subject.
    pub fn empirical_weights(&self, z: &CovariateVector) -> Result<Vec<f64>> {
        if z.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "covariate dimension {} does not match model dimension {}",
                z.dim(),
                self.dim()
            )));
        }
        let chol = self.regularized_cholesky()?;
        let dz = DVector::from_iterator(
            self.dim(),
            z.0.iter().zip(&self.z_bar).map(|(a, b)| a - b),
        );
        let u = chol.solve(&dz);
        Ok(self
            .covariates
            .iter()
            .map(|c| {
                1.0 + c
                    .iter()
                    .zip(&self.z_bar)
                    .zip(u.iter())
                    .map(|((ci, mi), ui)| (ci - mi) * ui)
                    .sum::<f64>()
            })
            .collect())
    }

    /// The unconstrained weighted mean `(1/n) sum_i s_i(z) Q_i`.
    pub fn weighted_mean(&self, z: &CovariateVector) -> Result<Vec<f64>> {
        let s = self.empirical_weights(z)?;
        let n = self.n_subjects() as f64;
        let mut out = vec![0.0; self.levels.len()];
        for (w, row) in s.iter().zip(&self.quantile_matrix) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
        out.iter_mut().for_each(|o| *o /= n);
        Ok(out)
    }

    /// Covariate-conditioned prototype quantile function at `z`.
    pub fn prototype_quantile(&self, z: &CovariateVector) -> Result<QuantileFunction> {
        let raw = self.weighted_mean(z)?;
        let values = monotone_refit(&raw, &RefitWeights::Uniform.weights(&self.levels))?;
        Ok(QuantileFunction {
            levels: self.levels.clone(),
            values,
        })
    }

    pub fn frechet_mean(&self) -> Result<QuantileFunction> {
        frechet_mean(&self.levels, &self.quantile_matrix)
    }

    pub fn frechet_variance(&self) -> Result<f64> {
        frechet_variance(&self.levels, &self.quantile_matrix)
    }

    /// `(1/n) sum_i d_W^2(Q_i, prototype(Z_i))`.
    pub fn residual_variance(&self) -> Result<f64> {
        let mut acc = 0.0;
        for (row, z) in self.quantile_matrix.iter().zip(&self.covariates) {
            let proto = self.prototype_quantile(&CovariateVector(z.clone()))?;
            acc += squared_distance_on(&self.levels, row, &proto.values);
        }
        Ok(acc / self.n_subjects() as f64)
    }
}
