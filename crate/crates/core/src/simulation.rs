//! Synthetic data: the three-component mixture benchmark for the density
//! estimator and the two-group covariate-dependent cohort experiment.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    compute_metrics, decide, fit_linear_baseline, prototype_distances,
    select_threshold_from_distances, Label, ThresholdSearch,
};
use crate::diffusion_kde;
use crate::error::{Error, Result};
use crate::grid_dct::bin_samples;
use crate::quantiles::{
    estimate_quantile_function, standard_levels, QuantileFunction, QuantileSettings,
};
use crate::wasserstein_frechet::{CovariateVector, FrechetModel, Ridge};

/// SplitMix64 finalizer folded over `parts`; used to give every cell,
/// group and replicate its own independent stream.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    let e: f64 = rng.sample(StandardNormal);
    mean + sd * e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensity {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Default for MixtureDensity {
    fn default() -> Self {
        Self {
            weights: vec![0.3, 0.6, 0.1],
            means: vec![6.0, 9.5, 12.0],
            sds: vec![1.0, 0.7, 0.5],
        }
    }
}

impl MixtureDensity {
    pub fn pdf(&self, x: f64) -> f64 {
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, m), s)| {
                let u = (x - m) / s;
                w * c / s * (-0.5 * u * u).exp()
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut c = self.weights.len() - 1;
                for (j, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        c = j;
                        break;
                    }
                }
                normal(rng, self.means[c], self.sds[c])
            })
            .collect()
    }
}

pub fn sample_mixture(n: usize, seed: u64) -> Vec<f64> {
    MixtureDensity::default().sample(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn mixture_pdf(x: f64) -> f64 {
    MixtureDensity::default().pdf(x)
}

/// `(1/2) * integral |p - q|` by the trapezoidal rule, clamped to [0, 1].
pub fn total_variation(p: &[f64], q: &[f64], grid: &[f64]) -> Result<f64> {
    if p.len() != grid.len() || q.len() != grid.len() {
        return Err(Error::invalid("densities and grid differ in length"));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("grid must be strictly increasing with 2+ points"));
    }
    let mut acc = 0.0;
    for i in 1..grid.len() {
        let a = (p[i - 1] - q[i - 1]).abs();
        let b = (p[i] - q[i]).abs();
        acc += 0.5 * (a + b) * (grid[i] - grid[i - 1]);
    }
    Ok((0.5 * acc).clamp(0.0, 1.0))
}

/// Evaluation grid for the mixture benchmark; carries all but ~1e-9 of the mass.
pub fn benchmark_grid() -> Vec<f64> {
    (0..=3600).map(|i| i as f64 * 0.005).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeBenchRow {
    pub n: usize,
    pub rep: usize,
    pub tv: f64,
}

/// Total variation between the mixture and its diffusion estimate from `n`
/// draws, for every `n` in `n_list` and `reps` replicates.
pub fn kde_benchmark(
    n_list: &[usize],
    reps: usize,
    seed: u64,
    settings: &QuantileSettings,
) -> Result<Vec<KdeBenchRow>> {
    if n_list.contains(&0) {
        return Err(Error::invalid("sample sizes must be positive"));
    }
    let mix = MixtureDensity::default();
    let grid = benchmark_grid();
    let truth: Vec<f64> = grid.iter().map(|&x| mix.pdf(x)).collect();
    let jobs: Vec<(usize, usize)> = n_list
        .iter()
        .flat_map(|&n| (0..reps).map(move |r| (n, r)))
        .collect();
    jobs.par_iter()
        .map(|&(n, rep)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[n as u64, rep as u64]));
            let xs = mix.sample(n, &mut rng);
            let binned = bin_samples(&xs, settings.n_grid, settings.pad_fraction)?;
            let est = diffusion_kde::estimate(&binned)?;
            let g: Vec<f64> = grid.iter().map(|&x| est.evaluate(x)).collect();
            Ok(KdeBenchRow {
                n,
                rep,
                tv: total_variation(&truth, &g, &grid)?,
            })
        })
        .collect()
}

/// Median `tv` per `n`, in first-appearance order of `n`.
pub fn median_tv_by_n(rows: &[KdeBenchRow]) -> Vec<(usize, f64)> {
    let mut ns: Vec<usize> = Vec::new();
    for r in rows {
        if !ns.contains(&r.n) {
            ns.push(r.n);
        }
    }
    ns.into_iter()
        .map(|n| {
            let mut v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.tv).collect();
            v.sort_by(f64::total_cmp);
            let m = v.len();
            let med = if m % 2 == 1 {
                v[m / 2]
            } else {
                0.5 * (v[m / 2 - 1] + v[m / 2])
            };
            (n, med)
        })
        .collect()
}

/// Generator for one group. Each subject draws an age, a gender and its own
/// coefficients; observations are Gaussian around the subject's mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupConfig {
    pub nu1: f64,
    pub nu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Standard deviation of the subject intercept.
    pub beta0_sd: f64,
    pub n_subjects: usize,
    pub n_obs_per_subject: usize,
    pub age_range: (f64, f64),
    pub seed: u64,
}

impl Default for GroupConfig {
    /// Control-group parameters at desk scale.
    fn default() -> Self {
        Self {
            nu1: 0.1,
            nu2: 2.0,
            sigma1: 0.1,
            sigma2: 0.5,
            beta0_sd: 0.5,
            n_subjects: 400,
            n_obs_per_subject: 500,
            age_range: (18.0, 90.0),
            seed: 0,
        }
    }
}

impl GroupConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.nu1, self.nu2, self.sigma1, self.sigma2, self.beta0_sd]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.sigma1 < 0.0 || self.sigma2 < 0.0 || self.beta0_sd < 0.0 {
            return Err(Error::invalid("group parameters must be finite, spreads nonnegative"));
        }
        if self.n_obs_per_subject == 0 {
            return Err(Error::invalid("n_obs_per_subject must be positive"));
        }
        let (lo, hi) = self.age_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid("age_range must be an ordered finite pair"));
        }
        Ok(())
    }

    /// Conditional mean and standard deviation of one subject's observations.
    pub fn draw_subject_params(&self, age: f64, gender: u8, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let g = gender as f64;
        let b0 = normal(rng, 0.0, self.beta0_sd);
        let b1 = normal(rng, self.nu1, self.sigma1);
        let b2 = normal(rng, self.nu2, self.sigma2);
        let mu = b0 + b1 * age + b2 * g;
        let var = self.beta0_sd.powi(2) + (self.sigma1 * age).powi(2) + (self.sigma2 * g).powi(2);
        (mu, var.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub subject_id: usize,
    pub age: f64,
    pub gender: u8,
    pub mu: f64,
    pub sd: f64,
    pub samples: Vec<f64>,
}

impl SampleSet {
    pub fn covariates(&self) -> Vec<f64> {
        vec![self.age, self.gender as f64]
    }

    pub fn sample_mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

pub fn generate_group(config: &GroupConfig) -> Result<Vec<SampleSet>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.age_range;
    Ok((0..config.n_subjects)
        .map(|subject_id| {
            let age = lo + (hi - lo) * rng.random::<f64>();
            let gender = rng.random_range(0..2u8);
            let (mu, sd) = config.draw_subject_params(age, gender, &mut rng);
            let samples = (0..config.n_obs_per_subject)
                .map(|_| normal(&mut rng, mu, sd))
                .collect();
            SampleSet {
                subject_id,
                age,
                gender,
                mu,
                sd,
                samples,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Control group; the case group copies it with `nu1`, `sigma1` from the grid.
    pub control: GroupConfig,
    pub nu1_grid: Vec<f64>,
    pub sigma1_grid: Vec<f64>,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub threshold: ThresholdSearch,
    pub quantile: QuantileSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            control: GroupConfig::default(),
            nu1_grid: vec![0.1, 0.3, 0.5, 0.7],
            sigma1_grid: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            train_fraction: 0.7,
            seeds: vec![0],
            threshold: ThresholdSearch::default(),
            quantile: QuantileSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// 2000 subjects per group with 1000 observations each.
    pub fn full_scale() -> Self {
        Self {
            control: GroupConfig {
                n_subjects: 2000,
                n_obs_per_subject: 1000,
                ..GroupConfig::default()
            },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub nu1: f64,
    pub sigma1: f64,
    pub acc_wf: f64,
    pub acc_linear: f64,
    pub k_selected: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub n_cells: usize,
    pub mean_acc_wf: f64,
    pub mean_acc_linear: f64,
    /// Subjects whose bandwidth fell back to the rule of thumb.
    pub nonconverged_bandwidths: usize,
    pub total_subjects: usize,
    pub config: ExperimentConfig,
}

struct Processed {
    quantile: Vec<f64>,
    mean: f64,
    covariates: Vec<f64>,
    converged: bool,
}

fn process(sets: &[SampleSet], settings: &QuantileSettings) -> Result<Vec<Processed>> {
    sets.par_iter()
        .map(|s| {
            let (q, bw) = estimate_quantile_function(&s.samples, settings)?;
            Ok(Processed {
                quantile: q.values,
                mean: s.sample_mean(),
                covariates: s.covariates(),
                converged: bw.converged,
            })
        })
        .collect()
}

fn split(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_train = ((n as f64) * fraction).round() as usize;
    let test = idx.split_off(n_train.min(n));
    (idx, test)
}

/// One grid cell: both groups, the 70/30 style split, the distributional
/// classifier with a cross-validated threshold and the linear baseline.
/// Returns the row and the count of non-converged bandwidths.
pub fn run_cell(config: &ExperimentConfig, nu1: f64, sigma1: f64, seed: u64) -> Result<(ExperimentRow, usize)> {
    let cell = derive_seed(seed, &[nu1.to_bits(), sigma1.to_bits()]);
    let ctl_cfg = GroupConfig {
        seed: derive_seed(cell, &[0]),
        ..config.control.clone()
    };
    let case_cfg = GroupConfig {
        nu1,
        sigma1,
        seed: derive_seed(cell, &[1]),
        ..config.control.clone()
    };
    let ctl = process(&generate_group(&ctl_cfg)?, &config.quantile)?;
    let case = process(&generate_group(&case_cfg)?, &config.quantile)?;
    let nonconverged = ctl.iter().chain(&case).filter(|p| !p.converged).count();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cell, &[2]));
    let (ctl_train, ctl_test) = split(ctl.len(), config.train_fraction, &mut rng);
    let (case_train, case_test) = split(case.len(), config.train_fraction, &mut rng);
    if ctl_test.is_empty() || case_test.is_empty() {
        return Err(Error::InsufficientData("test split is empty for a group".into()));
    }

    let fit = |tag: &str, group: &[Processed], idx: &[usize]| {
        FrechetModel::fit(
            tag,
            standard_levels(),
            idx.iter().map(|&i| group[i].quantile.clone()).collect(),
            idx.iter().map(|&i| group[i].covariates.clone()).collect(),
            Ridge::Auto,
        )
    };
    let m_ctl = fit("control", &ctl, &ctl_train)?;
    let m_case = fit("mtbi", &case, &case_train)?;

    let labeled = |ci: &[usize], mi: &[usize]| -> Vec<(&Processed, Label)> {
        ci.iter()
            .map(|&i| (&ctl[i], Label::Control))
            .chain(mi.iter().map(|&i| (&case[i], Label::Mtbi)))
            .collect()
    };
    let train = labeled(&ctl_train, &case_train);
    let test = labeled(&ctl_test, &case_test);

    let levels = standard_levels();
    let distances = |set: &[(&Processed, Label)]| -> Result<Vec<(f64, f64)>> {
        set.par_iter()
            .map(|(p, _)| {
                let q = QuantileFunction {
                    levels: levels.clone(),
                    values: p.quantile.clone(),
                };
                prototype_distances(&m_ctl, &m_case, &q, &CovariateVector(p.covariates.clone()))
            })
            .collect()
    };
    let train_labels: Vec<Label> = train.iter().map(|t| t.1).collect();
    let test_labels: Vec<Label> = test.iter().map(|t| t.1).collect();

    let search = ThresholdSearch {
        seed: derive_seed(cell, &[3]),
        ..config.threshold.clone()
    };
    let sel = select_threshold_from_distances(&distances(&train)?, &train_labels, &search)?;
    let pred_wf: Vec<Label> = distances(&test)?
        .iter()
        .map(|&(d1, d2)| decide(d1, d2, sel.k))
        .collect();

    let lin = fit_linear_baseline(
        &train.iter().map(|t| t.0.mean).collect::<Vec<_>>(),
        &train.iter().map(|t| t.0.covariates.clone()).collect::<Vec<_>>(),
        &train_labels,
    )?;
    let pred_lin = test
        .iter()
        .map(|(p, _)| lin.classify(&p.covariates, p.mean))
        .collect::<Result<Vec<_>>>()?;

    Ok((
        ExperimentRow {
            nu1,
            sigma1,
            acc_wf: compute_metrics(&pred_wf, &test_labels)?.acc,
            acc_linear: compute_metrics(&pred_lin, &test_labels)?.acc,
            k_selected: sel.k,
            seed,
        },
        nonconverged,
    ))
}

/// Every `(seed, nu1, sigma1)` cell, rows ordered by seed, then `nu1`, then `sigma1`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(Vec<ExperimentRow>, ExperimentSummary)> {
    config.control.validate()?;
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction must lie in (0, 1)"));
    }
    if config.nu1_grid.is_empty() || config.sigma1_grid.is_empty() || config.seeds.is_empty() {
        return Err(Error::invalid("experiment grid and seed list must be nonempty"));
    }
    if config.sigma1_grid.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid("sigma1 values must be nonnegative"));
    }
    let mut rows = Vec::new();
    let mut nonconverged = 0;
    for &seed in &config.seeds {
        for &nu1 in &config.nu1_grid {
            for &sigma1 in &config.sigma1_grid {
                let (row, nc) = run_cell(config, nu1, sigma1, seed)?;
                rows.push(row);
                nonconverged += nc;
            }
        }
    }
    let n = rows.len() as f64;
    let summary = ExperimentSummary {
        n_cells: rows.len(),
        mean_acc_wf: rows.iter().map(|r| r.acc_wf).sum::<f64>() / n,
        mean_acc_linear: rows.iter().map(|r| r.acc_linear).sum::<f64>() / n,
        nonconverged_bandwidths: nonconverged,
        total_subjects: rows.len() * 2 * config.control.n_subjects,
        config: config.clone(),
    };
    Ok((rows, summary))
}
