//! Covariate-matched two-prototype classification, threshold selection,
//! the per-group OLS baseline and classification metrics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantiles::QuantileFunction;
use crate::wasserstein_frechet::{wasserstein_distance, CovariateVector, FrechetModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Control,
    Mtbi,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Control => "control",
            Label::Mtbi => "mtbi",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "control" | "ctl" | "0" => Ok(Label::Control),
            "mtbi" | "1" => Ok(Label::Mtbi),
            other => Err(Error::invalid(format!(
                "unknown label {other:?} (expected control or mtbi)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: Label,
    /// Distance to the control prototype.
    pub d1: f64,
    /// Distance to the mTBI prototype.
    pub d2: f64,
    pub k: f64,
}

/// The decision rule: control iff `d1 <= k * d2`.
pub fn decide(d1: f64, d2: f64, k: f64) -> Label {
    if d1 <= k * d2 {
        Label::Control
    } else {
        Label::Mtbi
    }
}

/// Distances from `q0` to both group prototypes at `z0`.
pub fn prototype_distances(
    ctl: &FrechetModel,
    mtbi: &FrechetModel,
    q0: &QuantileFunction,
    z0: &CovariateVector,
) -> Result<(f64, f64)> {
    let p1 = ctl.prototype_quantile(z0)?;
    let p2 = mtbi.prototype_quantile(z0)?;
    Ok((wasserstein_distance(q0, &p1)?, wasserstein_distance(q0, &p2)?))
}

pub fn classify(
    ctl: &FrechetModel,
    mtbi: &FrechetModel,
    q0: &QuantileFunction,
    z0: &CovariateVector,
    k: f64,
) -> Result<Decision> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!("threshold k must be positive, got {k}")));
    }
    let (d1, d2) = prototype_distances(ctl, mtbi, q0, z0)?;
    Ok(Decision {
        label: decide(d1, d2, k),
        d1,
        d2,
        k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    /// Unweighted mean of the per-class F1 scores.
    pub f1: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn f1_from(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        // class absent from both truth and predictions
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Confusion counts with mTBI as the positive class, accuracy and balanced F1.
pub fn compute_metrics(predicted: &[Label], actual: &[Label]) -> Result<Metrics> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (p, a) in predicted.iter().zip(actual) {
        match (p, a) {
            (Label::Mtbi, Label::Mtbi) => tp += 1,
            (Label::Control, Label::Control) => tn += 1,
            (Label::Mtbi, Label::Control) => fp += 1,
            (Label::Control, Label::Mtbi) => fn_ += 1,
        }
    }
    let acc = (tp + tn) as f64 / predicted.len() as f64;
    let f1 = 0.5 * (f1_from(tp, fp, fn_) + f1_from(tn, fn_, fp));
    Ok(Metrics {
        acc,
        f1,
        tp,
        tn,
        fp,
        fn_,
    })
}

/// `0.50, 0.55, ..., 2.00`.
pub fn default_k_grid() -> Vec<f64> {
    (50..=200).step_by(5).map(|c| c as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdSearch {
    pub folds: usize,
    pub k_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for ThresholdSearch {
    fn default() -> Self {
        Self {
            folds: 5,
            k_grid: default_k_grid(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub k: f64,
    /// Mean balanced F1 across folds at `k`.
    pub score: f64,
    /// `(k, mean balanced F1)` for every grid point.
    pub scores: Vec<(f64, f64)>,
}

/// Stratified fold assignment: each class is shuffled with the seeded
/// generator and dealt round-robin into `folds` folds.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    for class in [Label::Control, Label::Mtbi] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    assignment
}

/// A labeled training subject.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSubject {
    pub quantile: QuantileFunction,
    pub covariates: CovariateVector,
    pub label: Label,
}

/// Picks `k` from the grid maximizing the fold-averaged balanced F1 of the
/// rule applied to precomputed `(d1, d2)` pairs. Ties go to the `k` closest
/// to 1, then to the smaller `k`.
pub fn select_threshold_from_distances(
    distances: &[(f64, f64)],
    labels: &[Label],
    search: &ThresholdSearch,
) -> Result<ThresholdSelection> {
    if distances.len() != labels.len() {
        return Err(Error::invalid("distances and labels differ in length"));
    }
    if !(labels.contains(&Label::Control) && labels.contains(&Label::Mtbi)) {
        return Err(Error::invalid("threshold selection needs both classes"));
    }
    if search.folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if search.k_grid.is_empty() || search.k_grid.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(Error::invalid("k grid must be nonempty and positive"));
    }

    let fold_of = stratified_folds(labels, search.folds, search.seed);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); search.folds];
    for (i, f) in fold_of.iter().enumerate() {
        members[*f].push(i);
    }
    members.retain(|m| !m.is_empty());

    let mut scores = Vec::with_capacity(search.k_grid.len());
    for &k in &search.k_grid {
        let mut total = 0.0;
        for fold in &members {
            let pred: Vec<Label> = fold
                .iter()
                .map(|&i| decide(distances[i].0, distances[i].1, k))
                .collect();
            let truth: Vec<Label> = fold.iter().map(|&i| labels[i]).collect();
            total += compute_metrics(&pred, &truth)?.f1;
        }
        scores.push((k, total / members.len() as f64));
    }

    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let (k, score) = scores
        .iter()
        .copied()
        .filter(|s| s.1 >= best - 1e-12)
        .min_by(|a, b| {
            (a.0 - 1.0)
                .abs()
                .total_cmp(&(b.0 - 1.0).abs())
                .then(a.0.total_cmp(&b.0))
        })
        .expect("grid is nonempty");
    Ok(ThresholdSelection { k, score, scores })
}

/// Cross-validated threshold for fixed group models.
pub fn select_threshold(
    ctl: &FrechetModel,
    mtbi: &FrechetModel,
    subjects: &[LabeledSubject],
    search: &ThresholdSearch,
) -> Result<ThresholdSelection> {
    let distances = subjects
        .iter()
        .map(|s| prototype_distances(ctl, mtbi, &s.quantile, &s.covariates))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Label> = subjects.iter().map(|s| s.label).collect();
    select_threshold_from_distances(&distances, &labels, search)
}

/// Per-group OLS coefficients `[intercept, covariate...]` for the
/// subject-level mean response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBaselineModel {
    pub control: Vec<f64>,
    pub mtbi: Vec<f64>,
}

fn ols(y: &[f64], x: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = y.len();
    let p = x.first().map_or(0, |r| r.len()) + 1;
    if n < p {
        return Err(Error::RankDeficient);
    }
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= smax * 1e-10 {
        return Err(Error::RankDeficient);
    }
    let beta = svd
        .solve(&DVector::from_column_slice(y), 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(beta.iter().copied().collect())
}

fn dot_affine(beta: &[f64], z: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(z).map(|(b, v)| b * v).sum::<f64>()
}

pub fn fit_linear_baseline(
    subject_means: &[f64],
    covariates: &[Vec<f64>],
    labels: &[Label],
) -> Result<LinearBaselineModel> {
    if subject_means.len() != covariates.len() || covariates.len() != labels.len() {
        return Err(Error::invalid("means, covariates and labels differ in length"));
    }
    let group = |g: Label| -> Result<Vec<f64>> {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
        let y: Vec<f64> = idx.iter().map(|&i| subject_means[i]).collect();
        let x: Vec<Vec<f64>> = idx.iter().map(|&i| covariates[i].clone()).collect();
        ols(&y, &x)
    };
    Ok(LinearBaselineModel {
        control: group(Label::Control)?,
        mtbi: group(Label::Mtbi)?,
    })
}

impl LinearBaselineModel {
    /// Predicted subject means `(control, mtbi)` at `z`.
    pub fn predict(&self, z: &[f64]) -> Result<(f64, f64)> {
        if z.len() + 1 != self.control.len() {
            return Err(Error::invalid("covariate dimension mismatch"));
        }
        Ok((dot_affine(&self.control, z), dot_affine(&self.mtbi, z)))
    }

    /// Control iff the control prediction is at least as close to `ybar0`.
    pub fn classify(&self, z: &[f64], ybar0: f64) -> Result<Label> {
        let (y1, y2) = self.predict(z)?;
        Ok(if (y1 - ybar0).abs() <= (y2 - ybar0).abs() {
            Label::Control
        } else {
            Label::Mtbi
        })
    }
}

pub fn classify_linear(model: &LinearBaselineModel, z0: &[f64], ybar0: f64) -> Result<Label> {
    model.classify(z0, ybar0)
}
