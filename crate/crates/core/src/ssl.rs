//! Semi-supervised classification on a learned graph.
//!
//! Labeled rows of the label matrix `P` are clamped to their one-hot
//! targets and the unlabeled block solves `L_uu P_u = −L_ul Y_l`, the
//! harmonic extension. Samples are never reordered; labeled and unlabeled
//! blocks are gathered by index.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SglError};
use crate::graph::{build_laplacian, smallest_eigpairs, AffinityGraph, GraphLaplacian};
use crate::kernel::{DistanceMatrix, KernelMatrix};
use crate::metrics::{components_of, connected_components};
use crate::mkl::{combine_kernels, compute_h, update_weights, KernelWeights};
use crate::sgsk::{
    estimate_alpha, objective_value_weighted, random_affinity, update_graph_with, GraphStep,
    HistoryRecord, SgskConfig,
};

/// Relative ridge added to `L_uu` before factorization.
pub const HARMONIC_RIDGE: f64 = 1e-10;

/// Known labels: sample indices with their class in `0..c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    indices: Vec<usize>,
    classes: Vec<usize>,
    c: usize,
}

impl LabelSet {
    /// Requires distinct indices, classes below `c`, and every class present.
    pub fn new(indices: Vec<usize>, classes: Vec<usize>, c: usize) -> Result<Self> {
        if indices.len() != classes.len() {
            return Err(SglError::Input(
                "label indices and classes differ in length".into(),
            ));
        }
        if c < 1 {
            return Err(SglError::Config("need at least one class".into()));
        }
        let mut seen_idx = std::collections::HashSet::new();
        if !indices.iter().all(|i| seen_idx.insert(*i)) {
            return Err(SglError::Input("duplicate labeled index".into()));
        }
        if let Some(bad) = classes.iter().find(|&&k| k >= c) {
            return Err(SglError::Input(format!(
                "class {bad} out of range for c = {c}"
            )));
        }
        for k in 0..c {
            if !classes.contains(&k) {
                return Err(SglError::Config(format!("class {k} has no labeled sample")));
            }
        }
        Ok(Self {
            indices,
            classes,
            c,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// One-hot `l × c` matrix in the order of `indices`.
    pub fn one_hot(&self) -> Array2<f64> {
        let mut y = Array2::zeros((self.len(), self.c));
        for (r, &k) in self.classes.iter().enumerate() {
            y[[r, k]] = 1.0;
        }
        y
    }

    fn mask(&self, n: usize) -> Result<Vec<Option<usize>>> {
        let mut mask = vec![None; n];
        for (&i, &k) in self.indices.iter().zip(&self.classes) {
            if i >= n {
                return Err(SglError::Input(format!(
                    "labeled index {i} out of range for n = {n}"
                )));
            }
            mask[i] = Some(k);
        }
        Ok(mask)
    }
}

/// `P` with `P_l = Y_l` and `P_u = −L_uu⁻¹ L_ul Y_l`.
pub fn harmonic_labels(lap: &GraphLaplacian, labels: &LabelSet) -> Result<Array2<f64>> {
    let n = lap.n();
    let c = labels.c();
    let mask = labels.mask(n)?;
    let mut p = Array2::zeros((n, c));
    for (i, k) in mask.iter().enumerate() {
        if let Some(k) = k {
            p[[i, *k]] = 1.0;
        }
    }
    let unlabeled: Vec<usize> = (0..n).filter(|&i| mask[i].is_none()).collect();
    let u = unlabeled.len();
    if u == 0 {
        return Ok(p);
    }

    let l = &lap.l;
    let trace: f64 = unlabeled.iter().map(|&i| l[[i, i]]).sum();
    let ridge = HARMONIC_RIDGE * trace / u as f64;
    let luu = DMatrix::from_fn(u, u, |a, b| {
        l[[unlabeled[a], unlabeled[b]]] + if a == b { ridge } else { 0.0 }
    });
    // rhs = −L_ul Y_l, accumulated over labeled columns
    let mut rhs = DMatrix::zeros(u, c);
    for (a, &i) in unlabeled.iter().enumerate() {
        for (j, k) in mask.iter().enumerate() {
            if let Some(k) = k {
                rhs[(a, *k)] -= l[[i, j]];
            }
        }
    }
    let chol = match luu.cholesky() {
        Some(ch) if ridge > 0.0 => ch,
        _ => return Err(unlabeled_component_error(l.view(), &mask)),
    };
    let sol = chol.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(unlabeled_component_error(l.view(), &mask));
    }
    for (a, &i) in unlabeled.iter().enumerate() {
        for k in 0..c {
            p[[i, k]] = sol[(a, k)];
        }
    }
    Ok(p)
}

fn unlabeled_component_error(l: ArrayView2<'_, f64>, mask: &[Option<usize>]) -> SglError {
    let w = l.mapv(|v| (-v).max(0.0));
    let (comp, count) = components_of(w.view(), 0.0);
    let component = (0..count)
        .map(|k| {
            (0..mask.len())
                .filter(|&i| comp[i] == k)
                .collect::<Vec<_>>()
        })
        .find(|members| members.iter().all(|&i| mask[i].is_none()))
        .unwrap_or_default();
    SglError::SingularSystem { component }
}

/// Row-wise argmax; ties go to the smallest class index.
pub fn decide_labels(p: ArrayView2<'_, f64>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                    if v > best.1 {
                        (k, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SslResult {
    pub z: AffinityGraph,
    /// Label matrix for the final graph; labeled rows equal their one-hot targets.
    pub p: Array2<f64>,
    pub predicted_labels: Vec<usize>,
    /// Samples whose component of the final graph (edges above `eps_rank`)
    /// holds no labeled sample.
    ///
    /// Their rows of `P` are near zero, so their predictions fall to the
    /// tie rule and carry no information.
    pub unreached: Vec<usize>,
    pub weights: KernelWeights,
    pub history: Vec<HistoryRecord>,
    pub converged: bool,
    pub alpha: f64,
    pub gamma: f64,
}

/// Multiple-kernel graph learning with the eigen step replaced by the harmonic solve.
///
/// `cfg.c` is taken from the labels, and `γ` stays at `cfg.gamma0` (or α).
pub fn sgmk_ssl_fit(
    kernels: &[KernelMatrix],
    dx: &DistanceMatrix,
    labels: &LabelSet,
    cfg: &SgskConfig,
) -> Result<SslResult> {
    let n = dx.n();
    let cfg = SgskConfig {
        c: labels.c(),
        ..cfg.clone()
    };
    if cfg.k < 1 || cfg.k + 2 > n {
        return Err(SglError::Config(format!(
            "k = {} must satisfy 1 <= k <= n - 2 (n = {n})",
            cfg.k
        )));
    }
    if cfg.max_outer == 0 {
        return Err(SglError::Config("max_outer must be >= 1".into()));
    }
    if kernels.is_empty() {
        return Err(SglError::Input("need at least one kernel".into()));
    }
    let mut weights = KernelWeights::uniform(kernels.len());
    let mut kernel = combine_kernels(kernels, &weights)?;
    if kernel.n() != n {
        return Err(SglError::Input(format!(
            "kernels are {}x{0} but there are {n} samples",
            kernel.n()
        )));
    }

    let (alpha, _) = estimate_alpha(dx, cfg.k)?;
    let gamma = cfg.gamma0.unwrap_or(alpha);
    let step = GraphStep {
        alpha,
        gamma,
        local_weight: cfg.local_weight,
        qp: cfg.qp,
    };
    let mut z = random_affinity(n, cfg.seed);
    let mut history: Vec<HistoryRecord> = Vec::with_capacity(cfg.max_outer);
    let mut converged = false;

    for iteration in 0..cfg.max_outer {
        let lap = build_laplacian(&z);
        let p = harmonic_labels(&lap, labels)?;
        let eig_sum = if labels.c() < n {
            smallest_eigpairs(&lap, labels.c())?.eigen_sum()
        } else {
            0.0
        };
        z = update_graph_with(&kernel, dx, p.view(), &step, Some(&z))?;
        let h = compute_h(kernels, &z);
        weights = update_weights(&h)?;
        kernel = combine_kernels(kernels, &weights)?;

        let objective =
            objective_value_weighted(&kernel, dx, &z, p.view(), alpha, gamma, cfg.local_weight);
        let components = connected_components(&z, cfg.eps_rank).1;
        history.push(HistoryRecord {
            iteration,
            objective,
            eig_sum,
            gamma,
            components,
        });
        if let [.., prev, last] = history.as_slice() {
            let rel = (prev.objective - last.objective).abs()
                / prev.objective.abs().max(f64::MIN_POSITIVE);
            if rel < cfg.outer_tol {
                converged = true;
                break;
            }
        }
    }

    let p = harmonic_labels(&build_laplacian(&z), labels)?;
    let predicted_labels = decide_labels(p.view());
    let unreached = unreached_samples(&z, labels, cfg.eps_rank);
    if !unreached.is_empty() {
        log::warn!(
            "{} samples lie in graph components without labels",
            unreached.len()
        );
    }
    Ok(SslResult {
        z,
        p,
        predicted_labels,
        unreached,
        weights,
        history,
        converged,
        alpha,
        gamma,
    })
}

fn unreached_samples(z: &AffinityGraph, labels: &LabelSet, eps: f64) -> Vec<usize> {
    let (comp, count) = connected_components(z, eps);
    let mut reached = vec![false; count];
    labels
        .indices()
        .iter()
        .for_each(|&i| reached[comp[i]] = true);
    (0..z.n()).filter(|&i| !reached[comp[i]]).collect()
}
