//! Independent reference implementations used by the integration tests.
//!
//! None of these call into the solver paths they check; they trade speed
//! for obviousness (subset enumeration, bisection, exhaustive search).
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// Random symmetric PSD matrix with entries scaled into roughly [-1, 1].
pub fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let b = gaussian_matrix(n, n + 2, rng);
    let k = b.dot(&b.t());
    let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let k = k / scale;
    (&k + &k.t()) * 0.5
}

/// Projection onto the simplex by enumerating every support set.
///
/// For support `S`, the stationarity condition gives `z_S = v_S − τ` with
/// `τ = (Σ v_S − 1)/|S|`; the projection is the feasible candidate closest to `v`.
pub fn simplex_projection_enumerate(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    assert!(n <= 16, "enumeration oracle is exponential");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let tau = (members.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / members.len() as f64;
        let mut z = vec![0.0; n];
        let mut ok = true;
        for &i in &members {
            z[i] = v[i] - tau;
            ok &= z[i] >= -1e-14;
        }
        for i in (0..n).filter(|i| mask >> i & 1 == 0) {
            ok &= v[i] - tau <= 1e-14;
        }
        if !ok {
            continue;
        }
        let dist: f64 = z.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, z.iter().map(|x| x.max(0.0)).collect()));
        }
    }
    best.expect("some support is always feasible").1
}

/// Projection onto the simplex by bisection on the threshold `τ` solving `Σ (vᵢ − τ)₊ = 1`.
pub fn simplex_projection_bisect(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (max - 1.0, max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s: f64 = v.iter().map(|x| (x - mid).max(0.0)).sum();
        if s > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Minimizer of `zᵀAz + bᵀz` on the simplex by support enumeration.
///
/// Each support solves the equality-constrained KKT system
/// `[2A_SS 1; 1ᵀ 0][z_S; −μ] = [−b_S; 1]`; the lowest-objective candidate
/// with `z_S ≥ 0` is the global minimizer of the convex problem.
pub fn qp_enumerate(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    assert!(n <= 12);
    let objective = |z: &Array1<f64>| z.dot(&a.dot(z)) + b.dot(z);
    let mut best: Option<(f64, Array1<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let m = s.len();
        let mut kkt = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (r, &i) in s.iter().enumerate() {
            for (c, &j) in s.iter().enumerate() {
                kkt[(r, c)] = 2.0 * a[[i, j]];
            }
            kkt[(r, m)] = 1.0;
            kkt[(m, r)] = 1.0;
            rhs[r] = -b[i];
        }
        rhs[m] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        if (0..m).any(|r| sol[r] < -1e-12) {
            continue;
        }
        let mut z = Array1::zeros(n);
        for (r, &i) in s.iter().enumerate() {
            z[i] = sol[r].max(0.0);
        }
        z /= z.sum();
        let f = objective(&z);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, z));
        }
    }
    best.expect("a vertex is always feasible").1
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Accuracy maximized over every injective relabeling of the predicted ids.
pub fn accuracy_exhaustive(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let size = kp.max(kt);
    let mut best = 0usize;
    for perm in permutations(size) {
        let hits = pred
            .iter()
            .zip(truth)
            .filter(|(p, t)| perm[**p] == **t)
            .count();
        best = best.max(hits);
    }
    best as f64 / pred.len() as f64
}

/// Mutual information and entropies from the joint histogram, natural logs.
pub fn nmi_reference(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let mut joint = vec![vec![0usize; kt]; kp];
    for (&p, &t) in pred.iter().zip(truth) {
        joint[p][t] += 1;
    }
    let cp: Vec<usize> = joint.iter().map(|r| r.iter().sum()).collect();
    let ct: Vec<usize> = (0..kt).map(|t| joint.iter().map(|r| r[t]).sum()).collect();
    let h = |v: &[usize]| {
        -v.iter()
            .filter(|&&x| x > 0)
            .map(|&x| x as f64 / n * (x as f64 / n).ln())
            .sum::<f64>()
    };
    let mut mi = 0.0;
    for a in 0..kp {
        for b in 0..kt {
            let nab = joint[a][b] as f64;
            if nab > 0.0 {
                mi += nab / n * (nab * n / (cp[a] as f64 * ct[b] as f64)).ln();
            }
        }
    }
    let single = |v: &[usize]| v.iter().filter(|&&x| x > 0).count() == 1;
    match (single(&cp), single(&ct)) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => mi / (h(&cp) * h(&ct)).sqrt(),
    }
}

/// Minimum of `Σ wᵢhᵢ` over `{w ≥ 0, Σ√wᵢ = 1}` on a grid of step `res` in `sᵢ = √wᵢ`.
///
/// The last coordinate absorbs the remainder so every grid point lies on the surface.
pub fn weight_grid_min(h: &[f64], res: f64) -> f64 {
    fn go(h: &[f64], res: f64, left: f64, acc: f64, best: &mut f64) {
        if h.len() == 1 {
            let v = acc + left.max(0.0).powi(2) * h[0];
            if v < *best {
                *best = v;
            }
            return;
        }
        let steps = (left / res).round() as usize;
        for i in 0..=steps {
            let s = (i as f64 * res).min(left);
            go(&h[1..], res, left - s, acc + s * s * h[0], best);
        }
    }
    let mut best = f64::INFINITY;
    go(h, res, 1.0, 0.0, &mut best);
    best
}

/// Uniform random labeling with ids in `0..c`.
pub fn random_labels(n: usize, c: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..c)).collect()
}

/// Two well-separated Gaussian clouds in the plane, `per` points each.
pub fn two_blobs(per: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let mut x = Array2::zeros((2 * per, 2));
    let mut truth = Vec::with_capacity(2 * per);
    for i in 0..2 * per {
        let class = i / per;
        let cx = if class == 0 { 0.0 } else { 6.0 };
        let (dx, dy): (f64, f64) = (StandardNormal.sample(&mut r), StandardNormal.sample(&mut r));
        x[[i, 0]] = cx + 0.2 * dx;
        x[[i, 1]] = 0.2 * dy;
        truth.push(class);
    }
    (x, truth)
}
