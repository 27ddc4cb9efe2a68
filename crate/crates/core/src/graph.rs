//! Affinity graphs, their Laplacians, and the smallest Laplacian eigenpairs.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Result, SglError};

/// Column-stochastic affinity matrix: column `i` holds the weights of sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph(Array2<f64>);

impl AffinityGraph {
    /// Validates entries in `[0, 1]` and unit column sums (1e-8).
    pub fn new(z: Array2<f64>) -> Result<Self> {
        let n = z.nrows();
        if z.ncols() != n || n == 0 {
            return Err(SglError::Input(format!(
                "affinity graph must be square, got {:?}",
                z.dim()
            )));
        }
        if z.iter()
            .any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0 + 1e-12)
        {
            return Err(SglError::Input(
                "affinity entries must lie in [0, 1]".into(),
            ));
        }
        for (i, col) in z.columns().into_iter().enumerate() {
            if (col.sum() - 1.0).abs() > 1e-8 {
                return Err(SglError::Input(format!("column {i} sums to {}", col.sum())));
            }
        }
        Ok(Self(z))
    }

    pub(crate) fn from_raw(z: Array2<f64>) -> Self {
        Self(z)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Symmetrized weights `(Z + Zᵀ) / 2`.
    pub fn symmetric_weights(&self) -> Array2<f64> {
        let z = &self.0;
        (z + &z.t()) * 0.5
    }
}

/// `L = D − W` for `W = (Z + Zᵀ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    pub l: Array2<f64>,
    pub degree: Array1<f64>,
}

impl GraphLaplacian {
    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    /// `Tr(Pᵀ L P)`.
    pub fn quadratic_trace(&self, p: ArrayView2<'_, f64>) -> f64 {
        let lp = self.l.dot(&p);
        (&p * &lp).sum()
    }
}

pub fn build_laplacian(z: &AffinityGraph) -> GraphLaplacian {
    laplacian_from_weights(z.symmetric_weights())
}

pub(crate) fn laplacian_from_weights(w: Array2<f64>) -> GraphLaplacian {
    let degree: Array1<f64> = w.rows().into_iter().map(|r| r.sum()).collect();
    let mut l = -w;
    for (i, d) in degree.iter().enumerate() {
        l[[i, i]] += d;
    }
    GraphLaplacian { l, degree }
}

/// The `c` eigenvectors of the smallest eigenvalues, as orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    pub p: Array2<f64>,
    /// The `c` smallest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue `c + 1`, when the graph has more than `c` vertices.
    pub next_eigenvalue: Option<f64>,
}

impl SpectralEmbedding {
    pub fn c(&self) -> usize {
        self.p.ncols()
    }

    pub fn eigen_sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// The `c` smallest eigenvalues followed by the next one if known.
    pub fn leading_spectrum(&self) -> Vec<f64> {
        let mut v = self.eigenvalues.clone();
        v.extend(self.next_eigenvalue);
        v
    }
}

/// Full symmetric eigendecomposition, keeping the `c` smallest pairs.
pub fn smallest_eigpairs(lap: &GraphLaplacian, c: usize) -> Result<SpectralEmbedding> {
    let n = lap.n();
    if c == 0 || c >= n {
        return Err(SglError::Config(format!(
            "need 1 <= c < n, got c = {c}, n = {n}"
        )));
    }
    let m = DMatrix::from_fn(n, n, |i, j| lap.l[[i, j]]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SglError::Numerical(
            "laplacian has non-finite entries".into(),
        ));
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| SglError::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });

    let mut p = Array2::zeros((n, c));
    for (col, &idx) in order.iter().take(c).enumerate() {
        let v = eig.eigenvectors.column(idx);
        // deterministic sign: largest-magnitude entry positive
        let pivot = v
            .iter()
            .cloned()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for row in 0..n {
            p[[row, col]] = sign * v[row];
        }
    }
    let eigenvalues = order.iter().take(c).map(|&i| eig.eigenvalues[i]).collect();
    let next_eigenvalue = order.get(c).map(|&i| eig.eigenvalues[i]);
    Ok(SpectralEmbedding {
        p,
        eigenvalues,
        next_eigenvalue,
    })
}
