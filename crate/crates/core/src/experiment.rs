//! Run configuration, orchestration of clustering and semi-supervised runs,
//! and machine-readable reports.
//!
//! Reports are JSON; per-iteration history is a flat CSV with columns
//! `iteration,objective,eig_sum,gamma,components`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, synthesize, DataFormat, Dataset, SynthSpec};
use crate::error::{Result, SglError};
use crate::kernel::{build_kernel_bank, pairwise_sq_dist, BankSpec, KernelKind};
use crate::metrics::{clustering_accuracy, nmi, purity};
use crate::mkl::sgmk_fit;
use crate::sgsk::{sgsk_fit, HistoryRecord, SgskConfig};
use crate::ssl::{sgmk_ssl_fit, LabelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cluster,
    Ssl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum InputSource {
    File {
        path: PathBuf,
        format: DataFormat,
        labels: Option<PathBuf>,
    },
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub input: InputSource,
    /// Kernel list; `None` picks the default bank (or `gaussian:1` for a single-kernel run).
    pub kernels: Option<BankSpec>,
    pub multi_kernel: bool,
    pub c: usize,
    pub k: usize,
    pub gamma0: Option<f64>,
    pub gamma_adapt: bool,
    pub seed: u64,
    pub max_outer: usize,
    pub outer_tol: f64,
    pub eps_rank: f64,
    pub local_weight: f64,
    /// Per-class share of labeled samples (ssl mode).
    pub label_fraction: Option<f64>,
    pub label_seed: u64,
    pub repeats: usize,
    pub zscore: bool,
    pub emit_history: bool,
    pub output: Option<PathBuf>,
    pub history_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(mode: Mode, input: InputSource, c: usize, k: usize) -> Self {
        let defaults = SgskConfig::new(c, k);
        Self {
            mode,
            input,
            kernels: None,
            multi_kernel: mode == Mode::Ssl,
            c,
            k,
            gamma0: None,
            gamma_adapt: true,
            seed: 0,
            max_outer: defaults.max_outer,
            outer_tol: defaults.outer_tol,
            eps_rank: defaults.eps_rank,
            local_weight: 1.0,
            label_fraction: None,
            label_seed: 0,
            repeats: 1,
            zscore: false,
            emit_history: false,
            output: None,
            history_path: None,
        }
    }

    fn learner_config(&self, seed: u64) -> SgskConfig {
        SgskConfig {
            gamma0: self.gamma0,
            gamma_adapt: self.gamma_adapt,
            eps_rank: self.eps_rank,
            outer_tol: self.outer_tol,
            max_outer: self.max_outer,
            seed,
            local_weight: self.local_weight,
            ..SgskConfig::new(self.c, self.k)
        }
    }

    fn bank(&self) -> Result<BankSpec> {
        let spec = match (&self.kernels, self.mode, self.multi_kernel) {
            (Some(spec), _, _) => spec.clone(),
            (None, Mode::Ssl, _) => BankSpec::default_ssl(),
            (None, Mode::Cluster, true) => BankSpec::default_clustering(),
            (None, Mode::Cluster, false) => BankSpec(vec![KernelKind::Gaussian { t: 1.0 }]),
        };
        if self.mode == Mode::Cluster && !self.multi_kernel && spec.len() != 1 {
            return Err(SglError::Config(format!(
                "single-kernel clustering takes exactly one kernel, got {}; pass --multi-kernel for a bank",
                spec.len()
            )));
        }
        Ok(spec)
    }

    fn load(&self) -> Result<Dataset> {
        let ds = match &self.input {
            InputSource::File {
                path,
                format,
                labels,
            } => load_dataset(path, *format, labels.as_deref())?,
            InputSource::Synthetic(spec) => synthesize(spec)?,
        };
        Ok(if self.zscore {
            Dataset {
                x: ds.x.zscore(),
                ..ds
            }
        } else {
            ds
        })
    }

    fn check_sizes(&self, n: usize) -> Result<()> {
        self.learner_config(self.seed).validate(n)?;
        if self.repeats == 0 {
            return Err(SglError::Config("repeats must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
}

impl Metrics {
    pub fn score(pred: &[usize], truth: &[usize]) -> Result<Self> {
        Ok(Self {
            acc: clustering_accuracy(pred, truth)?,
            nmi: nmi(pred, truth)?,
            purity: purity(pred, truth)?,
        })
    }
}

/// One semi-supervised repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub seed: u64,
    pub label_seed: u64,
    pub labeled: usize,
    pub unlabeled: usize,
    /// Accuracy on unlabeled samples; absent when every sample is labeled.
    pub accuracy: Option<f64>,
    /// Samples cut off from every labeled sample in the final graph.
    pub unreached: usize,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SslSummary {
    pub labeled_per_class: Vec<usize>,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub repeats: Vec<RepeatSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub n_samples: usize,
    pub n_features: usize,
    pub kernels: Vec<String>,
    /// Clustering scores against ground truth, when it is available.
    pub metrics: Option<Metrics>,
    pub components: usize,
    pub converged: bool,
    /// Cluster labels came from k-means on the embedding.
    pub fallback: bool,
    pub alpha: f64,
    pub final_gamma: f64,
    pub weights: Option<Vec<f64>>,
    pub labels: Vec<usize>,
    pub iterations: usize,
    pub wall_time_secs: f64,
    pub ssl: Option<SslSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<HistoryRecord>>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn finish(report: RunReport, cfg: &RunConfig) -> Result<RunReport> {
    if let Some(path) = &cfg.output {
        std::fs::write(path, report.to_json()?)?;
    }
    if let Some(path) = &cfg.history_path {
        emit_history(&report, path)?;
    }
    Ok(report)
}

/// Learns a graph on the configured data and scores its labels when truth is present.
pub fn run_cluster(cfg: &RunConfig) -> Result<RunReport> {
    if cfg.mode != Mode::Cluster {
        return Err(SglError::Config("run_cluster needs cluster mode".into()));
    }
    let start = Instant::now();
    let ds = cfg.load()?;
    let n = ds.x.n_samples();
    cfg.check_sizes(n)?;
    let bank = cfg.bank()?;
    let kernels = build_kernel_bank(&ds.x, &bank)?;
    let dx = pairwise_sq_dist(&ds.x);
    let learner = cfg.learner_config(cfg.seed);

    let (fit, weights) = if cfg.multi_kernel {
        let r = sgmk_fit(&kernels, &dx, &learner)?;
        (r.fit, Some(r.weights.as_slice().to_vec()))
    } else {
        (sgsk_fit(&kernels[0], &dx, &learner)?, None)
    };
    let metrics = ds
        .truth
        .as_deref()
        .map(|t| Metrics::score(&fit.labels, t))
        .transpose()?;

    let report = RunReport {
        config: cfg.clone(),
        n_samples: n,
        n_features: ds.x.n_features(),
        kernels: bank.0.iter().map(ToString::to_string).collect(),
        metrics,
        components: fit.components,
        converged: fit.converged,
        fallback: fit.fallback,
        alpha: fit.alpha,
        final_gamma: fit.gamma,
        weights,
        labels: fit.labels,
        iterations: fit.history.len(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        ssl: None,
        history: cfg.emit_history.then_some(fit.history),
    };
    finish(report, cfg)
}

/// Draws `⌈fraction · n_class⌉` labeled samples from every class.
pub fn stratified_labels(truth: &[usize], c: usize, fraction: f64, seed: u64) -> Result<LabelSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SglError::Config(format!(
            "label fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = Vec::new();
    let mut classes = Vec::new();
    for class in 0..c {
        let mut members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        let take = (fraction * members.len() as f64).ceil() as usize;
        if take == 0 {
            return Err(SglError::Config(format!(
                "class {class} receives no labeled samples"
            )));
        }
        members.shuffle(&mut rng);
        members.truncate(take);
        members.sort_unstable();
        classes.extend(std::iter::repeat_n(class, members.len()));
        indices.extend(members);
    }
    LabelSet::new(indices, classes, c)
}

/// Repeats stratified label sampling and semi-supervised fitting; scores unlabeled samples only.
pub fn run_ssl(cfg: &RunConfig) -> Result<RunReport> {
    if cfg.mode != Mode::Ssl {
        return Err(SglError::Config("run_ssl needs ssl mode".into()));
    }
    let start = Instant::now();
    let ds = cfg.load()?;
    let n = ds.x.n_samples();
    cfg.check_sizes(n)?;
    let truth = ds
        .truth
        .clone()
        .ok_or_else(|| SglError::Config("ssl mode needs ground-truth labels".into()))?;
    let classes = truth.iter().max().map_or(0, |m| m + 1);
    if classes != cfg.c {
        return Err(SglError::Config(format!(
            "c = {} but the data has {classes} classes",
            cfg.c
        )));
    }
    let fraction = cfg
        .label_fraction
        .ok_or_else(|| SglError::Config("ssl mode needs a label fraction".into()))?;
    let bank = cfg.bank()?;
    let kernels = build_kernel_bank(&ds.x, &bank)?;
    let dx = pairwise_sq_dist(&ds.x);

    let runs: Vec<_> = (0..cfg.repeats as u64)
        .into_par_iter()
        .map(|r| {
            let labels = stratified_labels(&truth, cfg.c, fraction, cfg.label_seed + r)?;
            let fit = sgmk_ssl_fit(&kernels, &dx, &labels, &cfg.learner_config(cfg.seed + r))?;
            let mut is_labeled = vec![false; n];
            labels.indices().iter().for_each(|&i| is_labeled[i] = true);
            let unlabeled: Vec<usize> = (0..n).filter(|&i| !is_labeled[i]).collect();
            let correct = unlabeled
                .iter()
                .filter(|&&i| fit.predicted_labels[i] == truth[i])
                .count();
            let accuracy = (!unlabeled.is_empty()).then(|| correct as f64 / unlabeled.len() as f64);
            let summary = RepeatSummary {
                seed: cfg.seed + r,
                label_seed: cfg.label_seed + r,
                labeled: labels.len(),
                unlabeled: unlabeled.len(),
                accuracy,
                unreached: fit.unreached.len(),
                converged: fit.converged,
                iterations: fit.history.len(),
            };
            Ok((summary, labels, fit))
        })
        .collect::<Result<_>>()?;

    let accs: Vec<f64> = runs.iter().filter_map(|(s, _, _)| s.accuracy).collect();
    let (mean, std) = mean_std(&accs);
    let (_, first_labels, first) = &runs[0];
    let labeled_per_class = (0..cfg.c)
        .map(|k| first_labels.classes().iter().filter(|&&x| x == k).count())
        .collect();
    let components = crate::metrics::connected_components(&first.z, cfg.eps_rank).1;

    let report = RunReport {
        config: cfg.clone(),
        n_samples: n,
        n_features: ds.x.n_features(),
        kernels: bank.0.iter().map(ToString::to_string).collect(),
        metrics: None,
        components,
        converged: first.converged,
        fallback: false,
        alpha: first.alpha,
        final_gamma: first.gamma,
        weights: Some(first.weights.as_slice().to_vec()),
        labels: first.predicted_labels.clone(),
        iterations: first.history.len(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        ssl: Some(SslSummary {
            labeled_per_class,
            accuracy_mean: mean,
            accuracy_std: std,
            repeats: runs.iter().map(|(s, _, _)| s.clone()).collect(),
        }),
        history: cfg.emit_history.then(|| first.history.clone()),
    };
    finish(report, cfg)
}

/// Sample mean and standard deviation (n − 1 denominator); `None` for no values.
fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

pub const HISTORY_HEADER: &str = "iteration,objective,eig_sum,gamma,components";

/// Writes the report's history as CSV; a report without history yields the header only.
///
/// Floats use the shortest representation that parses back to the same value.
pub fn emit_history(report: &RunReport, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{HISTORY_HEADER}")?;
    for h in report.history.iter().flatten() {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{}",
            h.iteration, h.objective, h.eig_sum, h.gamma, h.components
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        if idx == 0 {
            if line.trim() != HISTORY_HEADER {
                return Err(SglError::Format {
                    line: 1,
                    message: "unexpected history header".into(),
                });
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |m: &str| SglError::Format {
            line: lineno,
            message: m.to_string(),
        };
        if f.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        out.push(HistoryRecord {
            iteration: f[0].parse().map_err(|_| bad("bad iteration"))?,
            objective: f[1].parse().map_err(|_| bad("bad objective"))?,
            eig_sum: f[2].parse().map_err(|_| bad("bad eig_sum"))?,
            gamma: f[3].parse().map_err(|_| bad("bad gamma"))?,
            components: f[4].parse().map_err(|_| bad("bad components"))?,
        });
    }
    Ok(out)
}
