//! Persisted model: both group regressions, the selected threshold and an
//! optional channel forest.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{classify, Decision};
use crate::ensemble::ForestModel;
use crate::error::{Error, Result};
use crate::quantiles::{QuantileFunction, QuantileSettings, LEVEL_DIVISIONS, N_LEVELS};
use crate::wasserstein_frechet::{CovariateVector, FrechetModel};

use super::io::{json_bytes, write_atomic};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub m: usize,
    pub spacing: f64,
}

impl Default for GridDescriptor {
    fn default() -> Self {
        Self {
            m: N_LEVELS,
            spacing: 1.0 / LEVEL_DIVISIONS as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Hex SHA-256 of the canonical JSON of the fitting configuration.
    pub config_hash: String,
    pub n_control: usize,
    pub n_mtbi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub grid: GridDescriptor,
    pub covariates: Vec<String>,
    pub quantile_settings: QuantileSettings,
    pub control: FrechetModel,
    pub mtbi: FrechetModel,
    pub k: f64,
    /// `(k, mean balanced F1)` over the searched grid.
    pub k_scores: Vec<(f64, f64)>,
    pub forest: Option<ForestModel>,
    pub provenance: Provenance,
}

pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "model schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let grid = GridDescriptor::default();
        if self.grid != grid || self.control.levels.len() != grid.m {
            return Err(Error::invalid("model quantile grid does not match 1025 levels"));
        }
        if self.control.levels != self.mtbi.levels {
            return Err(Error::invalid("group models use different quantile grids"));
        }
        if self.control.dim() != self.mtbi.dim() || self.control.dim() != self.covariates.len() {
            return Err(Error::invalid("group models disagree on covariate dimension"));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::invalid(format!("model threshold k={} is invalid", self.k)));
        }
        Ok(())
    }

    pub fn classify(&self, q0: &QuantileFunction, z0: &CovariateVector) -> Result<Decision> {
        classify(&self.control, &self.mtbi, q0, z0, self.k)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        json_bytes(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let b: Self = serde_json::from_slice(bytes)
            .map_err(|e| Error::invalid(format!("model file is not a valid bundle: {e}")))?;
        b.validate()?;
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&bytes)
    }
}
