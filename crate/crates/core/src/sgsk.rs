//! Single-kernel structured graph learning.
//!
//! The learner minimizes
//!
//! ```text
//! Tr(K − 2KZ + ZᵀKZ) + λ·Tr(ZᵀDˣ) + α‖Z‖²_F + γ·Tr(PᵀLP)
//!     s.t. Zᵀ1 = 1, 0 ≤ Z ≤ 1, PᵀP = I
//! ```
//!
//! by alternating an eigen step for `P` with independent per-column
//! simplex QPs for `Z`. With `γ` large enough, the `c` smallest Laplacian
//! eigenvalues are driven to zero and the graph splits into exactly `c`
//! connected components. `λ` (the local-structure weight) defaults to 1.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SglError};
use crate::graph::{build_laplacian, smallest_eigpairs, AffinityGraph, SpectralEmbedding};
use crate::kernel::{sq_dist_rows, DistanceMatrix, KernelMatrix};
use crate::metrics::{connected_components, labels_from_graph};
use crate::mkl::{combine_kernels, compute_h, update_weights, KernelWeights};
use crate::qp::{gershgorin_bound, project_simplex_into, solve_column_qp, QpOptions, QpProblem};

/// Floor applied to per-point α values that come out nonpositive (duplicate samples).
pub const ALPHA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgskConfig {
    /// Number of clusters (target component count).
    pub c: usize,
    /// Neighborhood size used to derive α.
    pub k: usize,
    /// Initial γ; `None` starts from the estimated α.
    pub gamma0: Option<f64>,
    /// Double or halve γ until the graph has exactly `c` components.
    pub gamma_adapt: bool,
    pub eps_rank: f64,
    /// Relative objective change below which the outer loop may stop.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub seed: u64,
    /// Weight of the local distance term `Tr(ZᵀDˣ)`.
    pub local_weight: f64,
    #[serde(skip, default)]
    pub qp: QpOptions,
}

impl SgskConfig {
    pub fn new(c: usize, k: usize) -> Self {
        Self {
            c,
            k,
            gamma0: None,
            gamma_adapt: true,
            eps_rank: 1e-8,
            outer_tol: 1e-6,
            max_outer: 50,
            seed: 0,
            local_weight: 1.0,
            qp: QpOptions::default(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.c < 2 {
            return Err(SglError::Config(format!("c must be >= 2, got {}", self.c)));
        }
        if self.c >= n {
            return Err(SglError::Config(format!(
                "c = {} must be smaller than n = {n}",
                self.c
            )));
        }
        if self.k < 1 || self.k + 2 > n {
            return Err(SglError::Config(format!(
                "k = {} must satisfy 1 <= k <= n - 2 = {}",
                self.k,
                n as i64 - 2
            )));
        }
        if let Some(g) = self.gamma0 {
            if !(g > 0.0 && g.is_finite()) {
                return Err(SglError::Config(format!("gamma0 must be > 0, got {g}")));
            }
        }
        if !(self.eps_rank >= 0.0) || !(self.outer_tol >= 0.0) || self.max_outer == 0 {
            return Err(SglError::Config(
                "eps_rank, outer_tol must be >= 0 and max_outer >= 1".into(),
            ));
        }
        if !(self.local_weight >= 0.0 && self.local_weight.is_finite()) {
            return Err(SglError::Config(
                "local_weight must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// One outer iteration of the alternating optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    /// Full objective after the graph (and weight) update of this iteration.
    pub objective: f64,
    /// Sum of the `c` smallest Laplacian eigenvalues used for this iteration's `P`.
    pub eig_sum: f64,
    pub gamma: f64,
    /// Connected components of the updated graph.
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgskResult {
    pub z: AffinityGraph,
    /// Eigenpairs of the final graph's Laplacian.
    pub embedding: SpectralEmbedding,
    pub labels: Vec<usize>,
    pub components: usize,
    /// Labels came from k-means because the component count differed from `c`.
    pub fallback: bool,
    pub history: Vec<HistoryRecord>,
    pub converged: bool,
    pub alpha: f64,
    /// γ after the last adaptation.
    pub gamma: f64,
}

/// α from the `k`-neighbor bound, averaged over samples.
///
/// For each sample the distances to the other samples are sorted ascending
/// as `d̂₁ ≤ d̂₂ ≤ …` and `αᵢ = (k/2)·d̂ₖ₊₁ − (1/2)·Σⱼ≤ₖ d̂ⱼ`, which is the
/// largest value keeping exactly `k` nonzeros in the local-only solution.
pub fn estimate_alpha(dx: &DistanceMatrix, k: usize) -> Result<(f64, Array1<f64>)> {
    let n = dx.n();
    if k < 1 || k + 2 > n {
        return Err(SglError::Config(format!(
            "k = {k} must satisfy 1 <= k <= n - 2 (n = {n})"
        )));
    }
    let d = dx.values();
    let per_point: Array1<f64> = (0..n)
        .map(|i| {
            let sorted = sorted_others(d, i);
            let head: f64 = sorted[..k].iter().sum();
            let a = 0.5 * k as f64 * sorted[k] - 0.5 * head;
            if a > 0.0 {
                a
            } else {
                ALPHA_FLOOR
            }
        })
        .collect();
    let alpha = per_point.mean().unwrap_or(ALPHA_FLOOR).max(ALPHA_FLOOR);
    Ok((alpha, per_point))
}

fn sorted_others(d: &Array2<f64>, i: usize) -> Vec<f64> {
    let mut v: Vec<f64> = d
        .row(i)
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, x)| *x)
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Closed-form solution of the local-only problem with per-point α.
///
/// Column `i` is `zᵢⱼ = ((β − dᵢⱼ) / 2αᵢ)₊` over the `k` nearest `j ≠ i`,
/// with `β` fixed by the unit-sum constraint. With `αᵢ` from
/// [`estimate_alpha`] the formula vanishes at the `(k+1)`-th neighbor, so
/// entries outside the `k` nearest are set to exactly zero instead of
/// being left to round-off.
pub fn local_neighbor_weights(
    dx: &DistanceMatrix,
    k: usize,
    alpha_per_point: &Array1<f64>,
) -> Result<Array2<f64>> {
    let n = dx.n();
    if alpha_per_point.len() != n {
        return Err(SglError::Input("alpha vector length mismatch".into()));
    }
    if k < 1 || k + 2 > n {
        return Err(SglError::Config(format!(
            "k = {k} must satisfy 1 <= k <= n - 2 (n = {n})"
        )));
    }
    let d = dx.values();
    let mut z = Array2::zeros((n, n));
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d[[i, a]].total_cmp(&d[[i, b]]));
        let a = alpha_per_point[i];
        let beta = (2.0 * a + order[..k].iter().map(|&j| d[[i, j]]).sum::<f64>()) / k as f64;
        for &j in &order[..k] {
            z[[j, i]] = ((beta - d[[i, j]]) / (2.0 * a)).max(0.0);
        }
    }
    Ok(z)
}

/// Draws each column i.i.d. uniform and projects it onto the simplex.
pub fn random_affinity(n: usize, seed: u64) -> AffinityGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Array2::zeros((n, n));
    let mut scratch = Vec::with_capacity(n);
    let mut out = vec![0.0; n];
    for i in 0..n {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        project_simplex_into(&v, &mut out, &mut scratch);
        z.column_mut(i).assign(&Array1::from(out.clone()));
    }
    AffinityGraph::from_raw(z)
}

/// Settings for one graph update beyond `α` and `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStep {
    pub alpha: f64,
    pub gamma: f64,
    pub local_weight: f64,
    pub qp: QpOptions,
}

impl GraphStep {
    pub fn new(alpha: f64, gamma: f64) -> Self {
        Self {
            alpha,
            gamma,
            local_weight: 1.0,
            qp: QpOptions::default(),
        }
    }
}

/// Solves every column problem with `P` fixed and default solver settings.
pub fn update_graph(
    kernel: &KernelMatrix,
    dx: &DistanceMatrix,
    p: ArrayView2<'_, f64>,
    alpha: f64,
    gamma: f64,
) -> Result<AffinityGraph> {
    update_graph_with(kernel, dx, p, &GraphStep::new(alpha, gamma), None)
}

/// Column `i` minimizes `zᵀ(αI + K)z + (λdᵢˣ + (γ/2)dᵢᵖ − 2Kᵢ)ᵀz` on the simplex,
/// with `dᵢⱼᵖ = ‖Pᵢ − Pⱼ‖²`. Columns of `warm` seed the solver.
pub fn update_graph_with(
    kernel: &KernelMatrix,
    dx: &DistanceMatrix,
    p: ArrayView2<'_, f64>,
    step: &GraphStep,
    warm: Option<&AffinityGraph>,
) -> Result<AffinityGraph> {
    let n = kernel.n();
    if dx.n() != n || p.nrows() != n || warm.is_some_and(|w| w.n() != n) {
        return Err(SglError::Input(
            "graph update inputs have inconsistent sizes".into(),
        ));
    }
    if !(step.alpha > 0.0) || !(step.gamma >= 0.0) {
        return Err(SglError::Config(format!(
            "need alpha > 0 and gamma >= 0, got alpha = {}, gamma = {}",
            step.alpha, step.gamma
        )));
    }
    let k = kernel.values();
    let d = dx.values();
    let dp = sq_dist_rows(p);
    let bound = gershgorin_bound(k.view(), step.alpha);
    if step.qp.validate {
        QpProblem::with_bound(k.view(), step.alpha, Array1::zeros(n), bound)
            .check_positive_definite()?;
    }
    let qp_opts = QpOptions {
        validate: false,
        record_trace: false,
        ..step.qp
    };

    let columns: Vec<(Array1<f64>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let linear: Array1<f64> = (0..n)
                .map(|j| {
                    step.local_weight * d[[i, j]] + 0.5 * step.gamma * dp[[i, j]] - 2.0 * k[[j, i]]
                })
                .collect();
            let problem = QpProblem::with_bound(k.view(), step.alpha, linear, bound);
            let sol = solve_column_qp(&problem, &qp_opts, warm.map(|w| w.values().column(i)))?;
            Ok((sol.z, sol.truncated))
        })
        .collect::<Result<_>>()?;

    let truncated = columns.iter().filter(|c| c.1).count();
    if truncated > 0 {
        log::debug!("{truncated} of {n} column QPs hit the iteration cap");
    }
    let mut z = Array2::zeros((n, n));
    for (i, (col, _)) in columns.into_iter().enumerate() {
        z.column_mut(i).assign(&col);
    }
    Ok(AffinityGraph::from_raw(z))
}

/// `Tr(K − 2KZ + ZᵀKZ)`, the kernel-space self-expression residual.
pub fn self_expression_residual(k: &Array2<f64>, z: &Array2<f64>) -> f64 {
    let kz = k.dot(z);
    let tr_k = k.diag().sum();
    let tr_kz = kz.diag().sum();
    let tr_zkz = (z * &kz).sum();
    tr_k - 2.0 * tr_kz + tr_zkz
}

/// The full objective with unit local weight.
pub fn objective_value(
    kernel: &KernelMatrix,
    dx: &DistanceMatrix,
    z: &AffinityGraph,
    p: ArrayView2<'_, f64>,
    alpha: f64,
    gamma: f64,
) -> f64 {
    objective_value_weighted(kernel, dx, z, p, alpha, gamma, 1.0)
}

pub fn objective_value_weighted(
    kernel: &KernelMatrix,
    dx: &DistanceMatrix,
    z: &AffinityGraph,
    p: ArrayView2<'_, f64>,
    alpha: f64,
    gamma: f64,
    local_weight: f64,
) -> f64 {
    let zv = z.values();
    let global = self_expression_residual(kernel.values(), zv);
    let local = (zv * dx.values()).sum();
    let ridge = zv.iter().map(|v| v * v).sum::<f64>();
    let spectral = if gamma != 0.0 {
        build_laplacian(z).quadratic_trace(p)
    } else {
        0.0
    };
    global + local_weight * local + alpha * ridge + gamma * spectral
}

/// Doubles γ with fewer than `c` zero eigenvalues among the leading `c + 1`, halves it with more.
fn zero_count(eigenvalues: &[f64], c: usize, eps_rank: f64) -> usize {
    eigenvalues
        .iter()
        .take(c + 1)
        .filter(|&&s| s <= eps_rank)
        .count()
}

pub fn adapt_gamma(eigenvalues: &[f64], c: usize, gamma: f64, eps_rank: f64) -> f64 {
    match zero_count(eigenvalues, c, eps_rank).cmp(&c) {
        std::cmp::Ordering::Less => 2.0 * gamma,
        std::cmp::Ordering::Greater => gamma / 2.0,
        std::cmp::Ordering::Equal => gamma,
    }
}

pub fn sgsk_fit(
    kernel: &KernelMatrix,
    dx: &DistanceMatrix,
    cfg: &SgskConfig,
) -> Result<SgskResult> {
    let run = alternate(KernelSource::Single(kernel), dx, cfg)?;
    Ok(run.result)
}

pub(crate) enum KernelSource<'a> {
    Single(&'a KernelMatrix),
    Multiple(&'a [KernelMatrix]),
}

pub(crate) struct Run {
    pub result: SgskResult,
    pub weights: Option<KernelWeights>,
    pub weight_history: Vec<KernelWeights>,
}

pub(crate) fn alternate(
    source: KernelSource<'_>,
    dx: &DistanceMatrix,
    cfg: &SgskConfig,
) -> Result<Run> {
    let n = dx.n();
    cfg.validate(n)?;
    let (mut weights, mut kernel) = match source {
        KernelSource::Single(k) => {
            if k.n() != n {
                return Err(SglError::Input(format!(
                    "kernel is {}x{0} but there are {n} samples",
                    k.n()
                )));
            }
            (None, k.clone())
        }
        KernelSource::Multiple(ks) => {
            if ks.is_empty() {
                return Err(SglError::Input("need at least one kernel".into()));
            }
            let w = KernelWeights::uniform(ks.len());
            let k = combine_kernels(ks, &w)?;
            if k.n() != n {
                return Err(SglError::Input(format!(
                    "kernels are {}x{0} but there are {n} samples",
                    k.n()
                )));
            }
            (Some(w), k)
        }
    };

    let (alpha, _) = estimate_alpha(dx, cfg.k)?;
    let mut gamma = cfg.gamma0.unwrap_or(alpha);
    let mut z = random_affinity(n, cfg.seed);
    let mut history = Vec::with_capacity(cfg.max_outer);
    let mut weight_history = Vec::new();
    let mut converged = false;
    let mut embedding = smallest_eigpairs(&build_laplacian(&z), cfg.c)?;

    for iteration in 0..cfg.max_outer {
        let step = GraphStep {
            alpha,
            gamma,
            local_weight: cfg.local_weight,
            qp: cfg.qp,
        };
        let eig_sum = embedding.eigen_sum();
        z = update_graph_with(&kernel, dx, embedding.p.view(), &step, Some(&z))?;

        if let (KernelSource::Multiple(ks), Some(w)) = (&source, weights.as_mut()) {
            let h = compute_h(ks, &z);
            *w = update_weights(&h)?;
            kernel = combine_kernels(ks, w)?;
            weight_history.push(w.clone());
        }

        let objective = objective_value_weighted(
            &kernel,
            dx,
            &z,
            embedding.p.view(),
            alpha,
            gamma,
            cfg.local_weight,
        );
        let components = connected_components(&z, cfg.eps_rank).1;
        history.push(HistoryRecord {
            iteration,
            objective,
            eig_sum,
            gamma,
            components,
        });
        log::debug!("iter {iteration}: objective {objective:.6e}, eig_sum {eig_sum:.3e}, gamma {gamma:.3e}, components {components}");

        embedding = smallest_eigpairs(&build_laplacian(&z), cfg.c)?;
        // exactly c zero eigenvalues: the c smallest vanish and the next one does not
        let spectrum = embedding.leading_spectrum();
        let rank_ok = embedding.eigen_sum() < cfg.eps_rank
            && zero_count(&spectrum, cfg.c, cfg.eps_rank) == cfg.c;
        if history.len() >= 2 {
            let prev = history[history.len() - 2].objective;
            let rel = (prev - objective).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rank_ok && rel < cfg.outer_tol {
                converged = true;
                break;
            }
        }
        if cfg.gamma_adapt {
            gamma = adapt_gamma(&spectrum, cfg.c, gamma, cfg.eps_rank);
        }
    }

    let read = labels_from_graph(&z, &embedding, cfg.c, cfg.eps_rank, cfg.seed);
    Ok(Run {
        result: SgskResult {
            z,
            embedding,
            labels: read.labels,
            components: read.components,
            fallback: read.fallback,
            history,
            converged,
            alpha,
            gamma,
        },
        weights,
        weight_history,
    })
}
