//! Multiple-kernel graph learning: a consensus kernel `K_w = Σ wᵢKⁱ` whose
//! weights live on `{w ≥ 0, Σ√wᵢ = 1}` and are refit in closed form after
//! every graph update.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SglError};
use crate::graph::AffinityGraph;
use crate::kernel::{DistanceMatrix, KernelKind, KernelMatrix};
use crate::sgsk::{alternate, self_expression_residual, KernelSource, SgskConfig, SgskResult};

/// Floor applied to self-expression residuals before the weight update.
pub const H_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KernelWeights(Vec<f64>);

impl KernelWeights {
    /// Checks nonnegativity and `Σ√wᵢ = 1` within 1e-8.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SglError::Input(
                "kernel weights must be finite and nonnegative".into(),
            ));
        }
        let s: f64 = w.iter().map(|v| v.sqrt()).sum();
        if (s - 1.0).abs() > 1e-8 {
            return Err(SglError::Input(format!(
                "square roots of kernel weights sum to {s}, expected 1"
            )));
        }
        Ok(Self(w))
    }

    /// `wᵢ = 1/r`, the starting point of the alternating loop.
    ///
    /// This does not satisfy `Σ√wᵢ = 1` for `r > 1`; the first weight update
    /// moves onto the constraint surface.
    pub fn uniform(r: usize) -> Self {
        Self(vec![1.0 / r as f64; r])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sqrt_sum(&self) -> f64 {
        self.0.iter().map(|v| v.sqrt()).sum()
    }
}

pub fn combine_kernels(kernels: &[KernelMatrix], w: &KernelWeights) -> Result<KernelMatrix> {
    if kernels.is_empty() || kernels.len() != w.len() {
        return Err(SglError::Input(format!(
            "{} kernels but {} weights",
            kernels.len(),
            w.len()
        )));
    }
    let n = kernels[0].n();
    if kernels.iter().any(|k| k.n() != n) {
        return Err(SglError::Input("kernels have different sizes".into()));
    }
    let mut acc = Array2::zeros((n, n));
    for (k, &wi) in kernels.iter().zip(w.as_slice()) {
        if wi != 0.0 {
            acc.scaled_add(wi, k.values());
        }
    }
    if kernels.len() == 1 {
        return KernelMatrix::from_array(acc, kernels[0].kind());
    }
    KernelMatrix::from_array(acc, KernelKind::Custom)
}

/// `hᵢ = Tr(Kⁱ − 2KⁱZ + ZᵀKⁱZ)` per kernel.
pub fn compute_h(kernels: &[KernelMatrix], z: &AffinityGraph) -> Vec<f64> {
    kernels
        .par_iter()
        .map(|k| self_expression_residual(k.values(), z.values()))
        .collect()
}

/// `wᵢ = (hᵢ · Σⱼ 1/hⱼ)⁻²`, the minimizer of `Σ wᵢhᵢ` on `Σ√wᵢ = 1`.
///
/// Residuals are floored at [`H_FLOOR`] first.
pub fn update_weights(h: &[f64]) -> Result<KernelWeights> {
    if h.is_empty() {
        return Err(SglError::Input("no residuals to weight".into()));
    }
    let h: Vec<f64> = h
        .iter()
        .map(|v| if v.is_nan() { *v } else { v.max(H_FLOOR) })
        .collect();
    if h.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(SglError::Numerical(format!(
            "kernel residuals must be positive and finite: {h:?}"
        )));
    }
    // (gᵢ / Σg)² with g = 1/h is the same quantity; it is exact for r = 1
    let g: Vec<f64> = h.iter().map(|v| 1.0 / v).collect();
    let total: f64 = g.iter().sum();
    Ok(KernelWeights(
        g.iter().map(|v| (v / total).powi(2)).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgmkResult {
    pub fit: SgskResult,
    pub weights: KernelWeights,
    /// Weights after each outer iteration.
    pub weight_history: Vec<KernelWeights>,
}

/// Alternates consensus kernel, eigen step, graph step and weight update.
pub fn sgmk_fit(
    kernels: &[KernelMatrix],
    dx: &DistanceMatrix,
    cfg: &SgskConfig,
) -> Result<SgmkResult> {
    let run = alternate(KernelSource::Multiple(kernels), dx, cfg)?;
    Ok(SgmkResult {
        fit: run.result,
        weights: run.weights.expect("multiple-kernel run keeps weights"),
        weight_history: run.weight_history,
    })
}
