//! Label read-out from learned graphs and clustering quality scores.
//!
//! Labels are plain `usize` ids. Scores only depend on the partition the ids
//! induce, so neither argument has to use contiguous or matching ids.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use petgraph::unionfind::UnionFind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SglError};
use crate::graph::{AffinityGraph, SpectralEmbedding};

/// Components of the graph with an edge `(i, j)` whenever `(zᵢⱼ + zⱼᵢ)/2 > eps`.
///
/// Component ids are assigned in order of first appearance.
pub fn connected_components(z: &AffinityGraph, eps: f64) -> (Vec<usize>, usize) {
    components_of(z.view(), eps)
}

pub(crate) fn components_of(z: ArrayView2<'_, f64>, eps: f64) -> (Vec<usize>, usize) {
    let n = z.nrows();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if 0.5 * (z[[i, j]] + z[[j, i]]) > eps {
                uf.union(i, j);
            }
        }
    }
    relabel_first_appearance(&(0..n).map(|i| uf.find(i)).collect::<Vec<_>>())
}

/// Renumbers ids to `0..k` in order of first appearance.
pub fn relabel_first_appearance(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(SglError::Input(format!(
            "label length mismatch: {} predicted vs {} true",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(SglError::Input("empty labeling".into()));
    }
    Ok(())
}

/// Contingency counts: rows index predicted clusters, columns true classes.
fn contingency(pred: &[usize], truth: &[usize]) -> Array2<usize> {
    let (p, kp) = relabel_first_appearance(pred);
    let (t, kt) = relabel_first_appearance(truth);
    let mut table = Array2::zeros((kp, kt));
    for (a, b) in p.iter().zip(&t) {
        table[[*a, *b]] += 1;
    }
    table
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method with potentials).
///
/// Returns `assignment[row] = column`.
pub fn hungarian_min_cost(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is a sentinel column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of_col[j] - 1] = j - 1;
    }
    assignment
}

/// Fraction of samples correctly labeled under the best one-to-one matching of ids.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let table = contingency(pred, truth);
    let size = table.nrows().max(table.ncols());
    let max = *table.iter().max().unwrap_or(&0) as f64;
    let mut cost = Array2::from_elem((size, size), max);
    for ((i, j), &c) in table.indexed_iter() {
        cost[[i, j]] = max - c as f64;
    }
    let assignment = hungarian_min_cost(&cost);
    let matched: usize = assignment
        .iter()
        .enumerate()
        .filter(|(i, j)| *i < table.nrows() && **j < table.ncols())
        .map(|(i, &j)| table[[i, j]])
        .sum();
    Ok(matched as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNormalization {
    /// `I / sqrt(H(pred)·H(truth))`.
    #[default]
    Sqrt,
    /// `I / max(H(pred), H(truth))`.
    Max,
}

/// Normalized mutual information with natural logarithms.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    nmi_with(pred, truth, NmiNormalization::Sqrt)
}

pub fn nmi_with(pred: &[usize], truth: &[usize], norm: NmiNormalization) -> Result<f64> {
    check_lengths(pred, truth)?;
    let table = contingency(pred, truth);
    let n = pred.len() as f64;
    let row: Vec<f64> = table.rows().into_iter().map(|r| r.sum() as f64).collect();
    let col: Vec<f64> = table
        .columns()
        .into_iter()
        .map(|c| c.sum() as f64)
        .collect();
    let entropy = |m: &[f64]| -> f64 {
        m.iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let hp = entropy(&row);
    let ht = entropy(&col);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for ((i, j), &c) in table.indexed_iter() {
        if c > 0 {
            let c = c as f64;
            mi += (c / n) * ((n * c) / (row[i] * col[j])).ln();
        }
    }
    let denom = match norm {
        NmiNormalization::Sqrt => (hp * ht).sqrt(),
        NmiNormalization::Max => hp.max(ht),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Share of samples belonging to the majority true class of their predicted cluster.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let table = contingency(pred, truth);
    let majority: usize = table
        .rows()
        .into_iter()
        .map(|r| *r.iter().max().unwrap())
        .sum();
    Ok(majority as f64 / pred.len() as f64)
}

/// Cluster labels read from a learned graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLabels {
    pub labels: Vec<usize>,
    pub components: usize,
    /// The component count differed from `c`, so labels came from k-means on the embedding.
    pub fallback: bool,
}

/// Component labels when the graph has exactly `c` components, k-means on the rows of `P` otherwise.
pub fn labels_from_graph(
    z: &AffinityGraph,
    p: &SpectralEmbedding,
    c: usize,
    eps: f64,
    seed: u64,
) -> GraphLabels {
    let (labels, components) = connected_components(z, eps);
    if components == c {
        return GraphLabels {
            labels,
            components,
            fallback: false,
        };
    }
    log::warn!("graph has {components} components but c = {c}; using k-means on the embedding");
    let km = kmeans(p.p.view(), c, 10, 300, seed);
    let (labels, _) = relabel_first_appearance(&km);
    GraphLabels {
        labels,
        components,
        fallback: true,
    }
}

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` by inertia.
pub fn kmeans(
    data: ArrayView2<'_, f64>,
    k: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> Vec<usize> {
    let n = data.nrows();
    if n == 0 || k == 0 {
        return vec![0; n];
    }
    let k = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let (inertia, labels) = lloyd(data, k, max_iter, &mut rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.unwrap().1
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd(
    data: ArrayView2<'_, f64>,
    k: usize,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, Vec<usize>) {
    let n = data.nrows();
    let dim = data.ncols();
    let mut centers = Array2::zeros((k, dim));
    centers.row_mut(0).assign(&data.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), centers.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&data.row(pick));
        for i in 0..n {
            nearest[i] = nearest[i].min(sq_dist(data.row(i), centers.row(c)));
        }
    }

    let mut labels = vec![0usize; n];
    for iter in 0..max_iter {
        let mut changed = false;
        for i in 0..n {
            let (best, _) = (0..k)
                .map(|c| (c, sq_dist(data.row(i), centers.row(c))))
                .fold(
                    (0, f64::INFINITY),
                    |acc, x| if x.1 < acc.1 { x } else { acc },
                );
            if labels[i] != best || iter == 0 {
                changed |= labels[i] != best;
                labels[i] = best;
            }
        }
        if !changed && iter > 0 {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums.row_mut(labels[i]).scaled_add(1.0, &data.row(i));
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers
                    .row_mut(c)
                    .assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(data.row(i), centers.row(labels[i])))
        .sum();
    (inertia, labels)
}
