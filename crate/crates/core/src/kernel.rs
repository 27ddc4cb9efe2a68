//! Feature matrices, squared-distance matrices and the candidate kernel pool.
//!
//! Every kernel is symmetrized as `(K + Kᵀ) / 2` after construction and then
//! rescaled by its largest absolute entry, so normalized kernels built from
//! nonnegative similarities live in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SglError};

/// Row-per-sample feature data with at least two samples and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, m) = data.dim();
        if n < 2 {
            return Err(SglError::Input(format!("need at least 2 samples, got {n}")));
        }
        if m < 1 {
            return Err(SglError::Input("need at least 1 feature".into()));
        }
        if let Some(((i, j), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(SglError::Input(format!(
                "non-finite feature at row {i}, column {j}"
            )));
        }
        Ok(Self(data))
    }

    pub fn n_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Per-feature z-score standardization. Constant columns are only centered.
    pub fn zscore(&self) -> FeatureMatrix {
        let mut data = self.0.clone();
        let n = data.nrows() as f64;
        for mut col in data.axis_iter_mut(Axis(1)) {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { v - mean });
        }
        FeatureMatrix(data)
    }
}

/// Squared Euclidean distances between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(Array2<f64>);

impl DistanceMatrix {
    /// Wraps a precomputed matrix after checking symmetry, zero diagonal and nonnegativity.
    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(SglError::Input("distance matrix must be square".into()));
        }
        for i in 0..n {
            if values[[i, i]] != 0.0 {
                return Err(SglError::Input(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[[i, j]];
                if !v.is_finite() || v < 0.0 || v != values[[j, i]] {
                    return Err(SglError::Input(format!(
                        "invalid distance entry ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    /// Largest entry, i.e. the squared maximal pairwise distance.
    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(0.0, f64::max)
    }
}

/// Which family a kernel matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian {
        t: f64,
    },
    Linear,
    Polynomial {
        a: f64,
        b: u32,
    },
    /// Supplied directly by the caller.
    Custom,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::Gaussian { t } => write!(f, "gaussian:{t}"),
            KernelKind::Linear => write!(f, "linear"),
            KernelKind::Polynomial { a, b } => write!(f, "poly:{a}:{b}"),
            KernelKind::Custom => write!(f, "custom"),
        }
    }
}

impl FromStr for KernelKind {
    type Err = SglError;

    /// Parses `gaussian:<t>`, `linear`, or `poly:<a>:<b>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || SglError::Config(format!("unrecognized kernel descriptor '{s}'"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["linear"] => Ok(KernelKind::Linear),
            ["gaussian", t] => {
                let t: f64 = t.parse().map_err(|_| bad())?;
                if !(t > 0.0 && t.is_finite()) {
                    return Err(SglError::Config(format!(
                        "gaussian bandwidth must be > 0, got {t}"
                    )));
                }
                Ok(KernelKind::Gaussian { t })
            }
            ["poly", a, b] | ["polynomial", a, b] => {
                let a: f64 = a.parse().map_err(|_| bad())?;
                let b: u32 = b.parse().map_err(|_| bad())?;
                if b == 0 {
                    return Err(SglError::Config("polynomial degree must be >= 1".into()));
                }
                Ok(KernelKind::Polynomial { a, b })
            }
            _ => Err(bad()),
        }
    }
}

/// A symmetric n×n similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
    kind: KernelKind,
}

impl KernelMatrix {
    /// Wraps a caller-supplied matrix; it is symmetrized and checked for finiteness.
    pub fn from_array(values: Array2<f64>, kind: KernelKind) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(SglError::Input("kernel matrix must be square".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SglError::Input(
                "kernel matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            values: symmetrize(values),
            kind,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

fn symmetrize(mut k: Array2<f64>) -> Array2<f64> {
    let n = k.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (k[[i, j]] + k[[j, i]]);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Squared Euclidean distances `‖xᵢ − xⱼ‖²` for all rows of `x`.
///
/// Uses the Gram expansion; round-off below zero is clamped and the diagonal is exactly zero.
pub fn sq_dist_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = x.nrows();
    let gram = x.dot(&x.t());
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]]).max(0.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

pub fn pairwise_sq_dist(x: &FeatureMatrix) -> DistanceMatrix {
    DistanceMatrix(sq_dist_rows(x.view()))
}

/// `exp(−‖xᵢ−xⱼ‖² / (t·d²max))` with `dmax` the largest pairwise distance.
pub fn gaussian_kernel(x: &FeatureMatrix, t: f64) -> Result<KernelMatrix> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(SglError::Config(format!(
            "gaussian bandwidth must be > 0, got {t}"
        )));
    }
    let d = pairwise_sq_dist(x);
    gaussian_from_distances(&d, t)
}

fn gaussian_from_distances(d: &DistanceMatrix, t: f64) -> Result<KernelMatrix> {
    let dmax_sq = d.max();
    if dmax_sq <= 0.0 {
        return Err(SglError::DegenerateData("all samples are identical".into()));
    }
    let scale = t * dmax_sq;
    let values = d.values().mapv(|v| (-v / scale).exp());
    Ok(KernelMatrix {
        values: symmetrize(values),
        kind: KernelKind::Gaussian { t },
    })
}

pub fn linear_kernel(x: &FeatureMatrix) -> KernelMatrix {
    let g = x.view().dot(&x.view().t());
    KernelMatrix {
        values: symmetrize(g),
        kind: KernelKind::Linear,
    }
}

/// `(a + xᵢᵀxⱼ)ᵇ`.
pub fn polynomial_kernel(x: &FeatureMatrix, a: f64, b: u32) -> Result<KernelMatrix> {
    if b == 0 {
        return Err(SglError::Config("polynomial degree must be >= 1".into()));
    }
    let g = x.view().dot(&x.view().t());
    let values = g.mapv(|v| (a + v).powi(b as i32));
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SglError::Numerical("polynomial kernel overflowed".into()));
    }
    Ok(KernelMatrix {
        values: symmetrize(values),
        kind: KernelKind::Polynomial { a, b },
    })
}

/// Divides every entry by the largest absolute entry.
pub fn normalize_kernel(k: &KernelMatrix) -> Result<KernelMatrix> {
    let max = k.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Err(SglError::DegenerateData(format!(
            "kernel {} is identically zero",
            k.kind
        )));
    }
    Ok(KernelMatrix {
        values: k.values.mapv(|v| v / max),
        kind: k.kind,
    })
}

/// An ordered list of kernels to construct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSpec(pub Vec<KernelKind>);

impl BankSpec {
    /// Seven Gaussian bandwidths, a linear kernel and four polynomial kernels.
    pub fn default_clustering() -> Self {
        let mut kinds: Vec<KernelKind> = [0.01, 0.05, 0.1, 1.0, 10.0, 50.0, 100.0]
            .into_iter()
            .map(|t| KernelKind::Gaussian { t })
            .collect();
        kinds.push(KernelKind::Linear);
        for a in [0.0, 1.0] {
            for b in [2, 4] {
                kinds.push(KernelKind::Polynomial { a, b });
            }
        }
        BankSpec(kinds)
    }

    /// Four Gaussian bandwidths, a linear kernel and two quadratic kernels.
    pub fn default_ssl() -> Self {
        let mut kinds: Vec<KernelKind> = [0.1, 1.0, 10.0, 100.0]
            .into_iter()
            .map(|t| KernelKind::Gaussian { t })
            .collect();
        kinds.push(KernelKind::Linear);
        kinds.push(KernelKind::Polynomial { a: 0.0, b: 2 });
        kinds.push(KernelKind::Polynomial { a: 1.0, b: 2 });
        BankSpec(kinds)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for BankSpec {
    type Err = SglError;

    /// Comma-separated kernel descriptors, e.g. `gaussian:1,linear,poly:1:2`.
    fn from_str(s: &str) -> Result<Self> {
        let kinds = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        if kinds.is_empty() {
            return Err(SglError::Config("empty kernel list".into()));
        }
        Ok(BankSpec(kinds))
    }
}

/// Builds and normalizes every kernel in `spec`, in order.
pub fn build_kernel_bank(x: &FeatureMatrix, spec: &BankSpec) -> Result<Vec<KernelMatrix>> {
    if spec.is_empty() {
        return Err(SglError::Config("kernel bank spec is empty".into()));
    }
    let dist = pairwise_sq_dist(x);
    spec.0
        .par_iter()
        .map(|kind| {
            let raw = match *kind {
                KernelKind::Gaussian { t } => gaussian_from_distances(&dist, t)?,
                KernelKind::Linear => linear_kernel(x),
                KernelKind::Polynomial { a, b } => polynomial_kernel(x, a, b)?,
                KernelKind::Custom => {
                    return Err(SglError::Config(
                        "custom kernels cannot be built from features".into(),
                    ))
                }
            };
            normalize_kernel(&raw)
        })
        .collect()
}
