//! Command-line surface of the `neurowf` binary.
//!
//! Exit codes: 0 success, 2 input error, 3 insufficient data,
//! 4 numerical failure.

pub mod bundle;
pub mod io;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{compute_metrics, select_threshold, Label, LabeledSubject, ThresholdSearch};
use crate::diffusion_kde::{self, BandwidthResult};
use crate::ensemble::{fit_forest, predict_forest, ForestConfig, ForestModel};
use crate::error::{Error, Result};
use crate::grid_dct::bin_samples;
use crate::quantiles::{
    estimate_quantile_function, invert_cdf, refit_quantile, standard_levels, QuantileFunction,
    QuantileSettings, RefitWeights,
};
use crate::simulation::{kde_benchmark, run_experiment, ExperimentConfig};
use crate::wasserstein_frechet::{CovariateVector, FrechetModel, Ridge};

use bundle::{config_hash, GridDescriptor, ModelBundle, Provenance, SCHEMA_VERSION};
use io::{csv_bytes, json_bytes, read_channels, read_labels, read_samples, read_subjects, read_values, write_atomic};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INSUFFICIENT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::Io { .. } | Error::Json(_) | Error::Csv(_) => EXIT_INPUT,
        Error::InsufficientData(_) | Error::SingularCovariance | Error::RankDeficient => {
            EXIT_INSUFFICIENT
        }
        Error::Numerical(_) => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "neurowf", version, about = "Distributional regression and classification of per-subject samples")]
pub struct Cli {
    /// Seed for every random choice made by the command (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Diffusion density estimate of one sample column.
    Kde(KdeArgs),
    /// Total-variation benchmark of the estimator on the three-component mixture.
    KdeBench(KdeBenchArgs),
    /// Fit both group regressions and the decision threshold.
    Fit(FitArgs),
    /// Classify subjects with a fitted model.
    Predict(PredictArgs),
    /// Run the two-group simulation grid.
    Sim(SimArgs),
    /// Fit a random forest on binary per-channel decisions.
    Ensemble(EnsembleArgs),
    /// Apply a fitted channel forest.
    EnsemblePredict(EnsemblePredictArgs),
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Number of histogram bins (power of two).
    #[arg(long, default_value_t = 4096)]
    pub grid: usize,
    /// Padding added on each side, as a fraction of the sample range.
    #[arg(long, default_value_t = 0.1)]
    pub pad: f64,
}

impl GridArgs {
    fn settings(&self) -> QuantileSettings {
        QuantileSettings {
            n_grid: self.grid,
            pad_fraction: self.pad,
            refit: RefitWeights::Uniform,
        }
    }
}

#[derive(Debug, Args)]
pub struct KdeArgs {
    /// CSV with a numeric column `value`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct KdeBenchArgs {
    #[arg(long, default_value = "50,100,200,400", value_parser = parse_n_list)]
    pub n_list: NList,
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct NList(pub Vec<usize>);

fn parse_n_list(s: &str) -> std::result::Result<NList, String> {
    let v = s
        .split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("{t:?} is not a positive integer")),
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(NList(v))
}

#[derive(Debug, Clone)]
pub struct KGrid(pub Vec<f64>);

/// `start:stop:step`, inclusive of `stop`.
pub fn parse_k_grid(s: &str) -> std::result::Result<KGrid, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("{t:?} is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    let [start, stop, step] = parts[..] else {
        return Err("expected start:stop:step".into());
    };
    if !(start > 0.0 && stop >= start && step > 0.0 && stop.is_finite()) {
        return Err("need 0 < start <= stop and step > 0".into());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok(KGrid(
        (0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect(),
    ))
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Long-format CSV `subject_id,value`.
    #[arg(long)]
    pub samples: PathBuf,
    /// CSV `subject_id,age,gender,label` with label in {control, mtbi}.
    #[arg(long)]
    pub subjects: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub kfolds: usize,
    #[arg(long, default_value = "0.5:2.0:0.05", value_parser = parse_k_grid)]
    pub kgrid: KGrid,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    /// CSV `subject_id,age,gender[,label]`.
    #[arg(long)]
    pub subjects: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// JSON experiment configuration; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// 2000 subjects per group and 1000 observations per subject.
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Wide CSV `subject_id,<channel>...` with 0/1 entries.
    #[arg(long)]
    pub channels: PathBuf,
    /// CSV `subject_id,label`.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Existing model bundle to attach the forest to.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
    /// Defaults to ceil(sqrt(channels)).
    #[arg(long)]
    pub features_per_split: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EnsemblePredictArgs {
    /// Forest file or model bundle holding a forest.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub channels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional `subject_id,label` file; accuracy is reported when given.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("NEUROWF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid(format!("NEUROWF_THREADS={raw:?} is not a positive integer")))?;
    // a pool may already exist when embedded; that is not an error
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Kde(a) => cmd_kde(a),
        Command::KdeBench(a) => cmd_kde_bench(a, seed),
        Command::Fit(a) => cmd_fit(a, seed),
        Command::Predict(a) => cmd_predict(a),
        Command::Sim(a) => cmd_sim(a, cli.seed),
        Command::Ensemble(a) => cmd_ensemble(a, seed),
        Command::EnsemblePredict(a) => cmd_ensemble_predict(a),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KdeOutput {
    pub n_samples: usize,
    pub lo: f64,
    pub hi: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// CDF at the right edge of each bin.
    pub cdf: Vec<f64>,
    pub levels: Vec<f64>,
    pub quantiles: Vec<f64>,
    pub h: f64,
    pub h_cdf: f64,
    pub bandwidth: BandwidthResult,
}

fn cmd_kde(a: &KdeArgs) -> Result<()> {
    let xs = read_values(&a.input)?;
    let binned = bin_samples(&xs, a.grid.grid, a.grid.pad)?;
    let est = diffusion_kde::estimate(&binned)?;
    let (knots, fs) = est.cdf_knots();
    let levels = standard_levels();
    let raw = invert_cdf(&knots, &fs, &levels)?;
    let q = refit_quantile(
        &QuantileFunction {
            levels: levels.clone(),
            values: raw,
        },
        RefitWeights::Uniform,
    )?;
    let out = KdeOutput {
        n_samples: xs.len(),
        lo: binned.lo,
        hi: binned.hi,
        h: est.bandwidth.h(),
        h_cdf: est.bandwidth.h_cdf(),
        grid: est.grid,
        density: est.density,
        cdf: est.cdf,
        levels,
        quantiles: q.values,
        bandwidth: est.bandwidth,
    };
    write_atomic(&a.out, &json_bytes(&out)?)?;
    println!(
        "n={} h={:.6} converged={}",
        out.n_samples, out.h, out.bandwidth.converged
    );
    Ok(())
}

fn cmd_kde_bench(a: &KdeBenchArgs, seed: u64) -> Result<()> {
    let rows = kde_benchmark(&a.n_list.0, a.reps, seed, &QuantileSettings::default())?;
    write_atomic(&a.out, &csv_bytes(&rows)?)?;
    for (n, med) in crate::simulation::median_tv_by_n(&rows) {
        println!("n={n} median_tv={med:.4}");
    }
    Ok(())
}

struct Cohort {
    ids: Vec<String>,
    quantiles: Vec<QuantileFunction>,
    covariates: Vec<Vec<f64>>,
    labels: Vec<Option<Label>>,
}

fn subject_error(id: &str, e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("subject {id:?}: {m}")),
        Error::InsufficientData(m) => Error::InsufficientData(format!("subject {id:?}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("subject {id:?}: {m}")),
        other => other,
    }
}

/// Joins samples to subjects in subject-id order and estimates every
/// quantile function. Fails when more than half the bandwidths fell back.
fn load_cohort(samples: &Path, subjects: &Path, require_label: bool, settings: &QuantileSettings) -> Result<Cohort> {
    let subj = read_subjects(subjects, require_label)?;
    let samp = read_samples(samples)?;
    if let Some(id) = samp.keys().find(|id| !subj.contains_key(*id)) {
        return Err(Error::invalid(format!(
            "subject {id:?} in {} is missing from {}",
            samples.display(),
            subjects.display()
        )));
    }
    if let Some(id) = subj.keys().find(|id| !samp.contains_key(*id)) {
        return Err(Error::invalid(format!(
            "subject {id:?} in {} has no samples in {}",
            subjects.display(),
            samples.display()
        )));
    }
    let joined: Vec<(&String, &Vec<f64>)> = samp.iter().collect();
    let est: Vec<(QuantileFunction, bool)> = joined
        .par_iter()
        .map(|(id, xs)| {
            estimate_quantile_function(xs, settings)
                .map(|(q, bw)| (q, bw.converged))
                .map_err(|e| subject_error(id, e))
        })
        .collect::<Result<_>>()?;
    let failed = est.iter().filter(|(_, c)| !c).count();
    if 2 * failed > est.len() {
        return Err(Error::Numerical(format!(
            "bandwidth selection did not converge for {failed} of {} subjects",
            est.len()
        )));
    }
    let ids: Vec<String> = joined.iter().map(|(id, _)| (*id).clone()).collect();
    Ok(Cohort {
        covariates: ids.iter().map(|id| subj[id].covariates()).collect(),
        labels: ids.iter().map(|id| subj[id].label).collect(),
        quantiles: est.into_iter().map(|(q, _)| q).collect(),
        ids,
    })
}

#[derive(Serialize)]
struct FitConfig<'a> {
    quantile: &'a QuantileSettings,
    search: &'a ThresholdSearch,
    ridge: Ridge,
}

fn cmd_fit(a: &FitArgs, seed: u64) -> Result<()> {
    let settings = a.grid.settings();
    let cohort = load_cohort(&a.samples, &a.subjects, true, &settings)?;
    let labels: Vec<Label> = cohort.labels.iter().map(|l| l.expect("labels required")).collect();
    let group = |g: Label| -> Vec<usize> { (0..labels.len()).filter(|&i| labels[i] == g).collect() };
    let (ci, mi) = (group(Label::Control), group(Label::Mtbi));
    if ci.is_empty() || mi.is_empty() {
        return Err(Error::InsufficientData(
            "cohort must contain both control and mtbi subjects".into(),
        ));
    }
    let fit = |tag: &str, idx: &[usize]| {
        FrechetModel::fit(
            tag,
            standard_levels(),
            idx.iter().map(|&i| cohort.quantiles[i].values.clone()).collect(),
            idx.iter().map(|&i| cohort.covariates[i].clone()).collect(),
            Ridge::Auto,
        )
    };
    let control = fit("control", &ci)?;
    let mtbi = fit("mtbi", &mi)?;

    let search = ThresholdSearch {
        folds: a.kfolds,
        k_grid: a.kgrid.0.clone(),
        seed,
    };
    let subjects: Vec<LabeledSubject> = (0..labels.len())
        .map(|i| LabeledSubject {
            quantile: cohort.quantiles[i].clone(),
            covariates: CovariateVector(cohort.covariates[i].clone()),
            label: labels[i],
        })
        .collect();
    let sel = select_threshold(&control, &mtbi, &subjects, &search)?;

    let bundle = ModelBundle {
        schema_version: SCHEMA_VERSION,
        grid: GridDescriptor::default(),
        covariates: vec!["age".into(), "gender".into()],
        quantile_settings: settings,
        control,
        mtbi,
        k: sel.k,
        k_scores: sel.scores,
        forest: None,
        provenance: Provenance {
            seed,
            config_hash: config_hash(&FitConfig {
                quantile: &settings,
                search: &search,
                ridge: Ridge::Auto,
            })?,
            n_control: ci.len(),
            n_mtbi: mi.len(),
        },
    };
    bundle.save(&a.out)?;
    println!(
        "control={} mtbi={} k={} cv_f1={:.4}",
        ci.len(),
        mi.len(),
        bundle.k,
        sel.score
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PredictionRow {
    pub subject_id: String,
    pub d1: f64,
    pub d2: f64,
    pub k: f64,
    pub label: Label,
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let bundle = ModelBundle::load(&a.model)?;
    let cohort = load_cohort(&a.samples, &a.subjects, false, &bundle.quantile_settings)?;
    let rows = (0..cohort.ids.len())
        .into_par_iter()
        .map(|i| {
            let d = bundle
                .classify(&cohort.quantiles[i], &CovariateVector(cohort.covariates[i].clone()))
                .map_err(|e| subject_error(&cohort.ids[i], e))?;
            Ok(PredictionRow {
                subject_id: cohort.ids[i].clone(),
                d1: d.d1,
                d2: d.d2,
                k: d.k,
                label: d.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_atomic(&a.out, &csv_bytes(&rows)?)?;
    report_accuracy(
        rows.iter().zip(&cohort.labels).filter_map(|(r, l)| l.map(|l| (r.label, l))),
        rows.len(),
    )
}

fn report_accuracy(pairs: impl Iterator<Item = (Label, Label)>, total: usize) -> Result<()> {
    let (pred, truth): (Vec<Label>, Vec<Label>) = pairs.unzip();
    if pred.is_empty() {
        println!("predicted {total} subjects");
    } else {
        let m = compute_metrics(&pred, &truth)?;
        println!("predicted {total} subjects acc={:.4} f1={:.4}", m.acc, m.f1);
    }
    Ok(())
}

fn cmd_sim(a: &SimArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            serde_json::from_slice::<ExperimentConfig>(&bytes)
                .map_err(|e| Error::invalid(format!("{}: {e}", p.display())))?
        }
        None if a.full_scale => ExperimentConfig::full_scale(),
        None => ExperimentConfig::default(),
    };
    if a.full_scale {
        let full = ExperimentConfig::full_scale().control;
        cfg.control.n_subjects = full.n_subjects;
        cfg.control.n_obs_per_subject = full.n_obs_per_subject;
    }
    // an explicit seed replaces the configured replicate seeds
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    let (rows, summary) = run_experiment(&cfg)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.display().to_string(),
        source: e,
    })?;
    write_atomic(&a.out_dir.join("results.csv"), &csv_bytes(&rows)?)?;
    write_atomic(&a.out_dir.join("summary.json"), &json_bytes(&summary)?)?;
    println!(
        "cells={} mean_acc_wf={:.4} mean_acc_linear={:.4}",
        summary.n_cells, summary.mean_acc_wf, summary.mean_acc_linear
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ForestFile {
    pub schema_version: u32,
    pub forest: ForestModel,
}

fn joined_labels(ids: &[String], labels: &BTreeMap<String, Label>, path: &Path) -> Result<Vec<Label>> {
    ids.iter()
        .map(|id| {
            labels.get(id).copied().ok_or_else(|| {
                Error::invalid(format!("subject {id:?} has no label in {}", path.display()))
            })
        })
        .collect()
}

fn cmd_ensemble(a: &EnsembleArgs, seed: u64) -> Result<()> {
    let (ids, z) = read_channels(&a.channels)?;
    let y = joined_labels(&ids, &read_labels(&a.labels)?, &a.labels)?;
    let cfg = ForestConfig {
        n_trees: a.n_trees,
        max_depth: a.max_depth,
        features_per_split: a.features_per_split,
        seed,
    };
    let forest = fit_forest(&z, &y, &cfg)?;
    let oob = forest.oob_accuracy;
    match &a.bundle {
        Some(p) => {
            let mut b = ModelBundle::load(p)?;
            b.forest = Some(forest);
            b.save(&a.out)?;
        }
        None => write_atomic(
            &a.out,
            &json_bytes(&ForestFile {
                schema_version: SCHEMA_VERSION,
                forest,
            })?,
        )?,
    }
    match oob {
        Some(acc) => println!("subjects={} channels={} oob_acc={acc:.4}", ids.len(), z.n_cols()),
        None => println!("subjects={} channels={}", ids.len(), z.n_cols()),
    }
    Ok(())
}

fn load_forest(path: &Path) -> Result<ForestModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    if let Ok(f) = serde_json::from_slice::<ForestFile>(&bytes) {
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid("unsupported forest schema_version"));
        }
        return Ok(f.forest);
    }
    ModelBundle::from_json(&bytes)?
        .forest
        .ok_or_else(|| Error::invalid(format!("{} holds no forest", path.display())))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EnsembleRow {
    pub subject_id: String,
    pub label: Label,
}

fn cmd_ensemble_predict(a: &EnsemblePredictArgs) -> Result<()> {
    let forest = load_forest(&a.model)?;
    let (ids, z) = read_channels(&a.channels)?;
    if z.column_names() != forest.column_names.as_slice() {
        return Err(Error::invalid("channel columns differ from the fitted forest"));
    }
    let pred = predict_forest(&forest, &z)?;
    let rows: Vec<EnsembleRow> = ids
        .iter()
        .zip(&pred)
        .map(|(id, l)| EnsembleRow {
            subject_id: id.clone(),
            label: *l,
        })
        .collect();
    write_atomic(&a.out, &csv_bytes(&rows)?)?;
    match &a.labels {
        Some(p) => {
            let truth = joined_labels(&ids, &read_labels(p)?, p)?;
            report_accuracy(pred.iter().copied().zip(truth), ids.len())
        }
        None => report_accuracy(std::iter::empty(), ids.len()),
    }
}
