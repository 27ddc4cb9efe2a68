//! Acceptance suite: ten end-to-end criteria with tolerances and time limits.
//!
//! Runs as a single test so the criteria execute one after another and their
//! timings are not skewed by sibling tests. Each criterion prints one
//! `PASS`/`FAIL` line to stderr (uncaptured) and the test fails if any does.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use sgl_core::metrics::hungarian_min_cost;
use sgl_core::sgsk::{local_neighbor_weights, random_affinity};
use sgl_core::{
    build_kernel_bank, build_laplacian, clustering_accuracy, connected_components, decide_labels,
    estimate_alpha, harmonic_labels, nmi, objective_value, pairwise_sq_dist, purity, run_ssl,
    sgmk_fit, sgsk_fit, smallest_eigpairs, solve_column_qp, synthesize, update_graph,
    update_weights, AffinityGraph, BankSpec, FeatureMatrix, InputSource, KernelMatrix, LabelSet,
    Mode, QpOptions, QpProblem, RunConfig, SgskConfig, SgskResult, SynthKind, SynthSpec,
};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs(a: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn random_features(seed: u64, n: usize, m: usize) -> FeatureMatrix {
    let mut rng = common::rng(seed);
    FeatureMatrix::new(common::gaussian_matrix(n, m, &mut rng)).unwrap()
}

fn kernel(x: &FeatureMatrix, spec: &str) -> KernelMatrix {
    build_kernel_bank(x, &spec.parse().unwrap())
        .unwrap()
        .remove(0)
}

fn qp_oracle() -> Check {
    let mut worst = 0.0f64;
    for case in 0..500u64 {
        let n = 1 + (case % 6) as usize;
        let mut rng = common::rng(1000 + case);
        let k = common::random_psd(n, &mut rng);
        let shift = 0.1 + rng.random::<f64>();
        let b = common::gaussian_matrix(n, 1, &mut rng).column(0).to_owned();
        let p = QpProblem::new(k.view(), shift, b.clone()).map_err(|e| e.to_string())?;
        let sol = solve_column_qp(&p, &QpOptions::default(), None).map_err(|e| e.to_string())?;
        let want = common::qp_enumerate(&(&k + &(Array2::<f64>::eye(n) * shift)), &b);
        let err = max_abs((&sol.z - &want).iter().copied());
        worst = worst.max(err);
        ensure(err <= 1e-6, || {
            format!("case {case} (n = {n}): error {err:.3e}")
        })?;
    }
    Ok(format!("500 problems, worst ∞-error {worst:.2e}"))
}

fn exact_k() -> Check {
    for case in 0..100u64 {
        let k = [3, 5, 10][case as usize % 3];
        let dx = pairwise_sq_dist(&random_features(2000 + case, 50, 3));
        let (_, per_point) = estimate_alpha(&dx, k).map_err(|e| e.to_string())?;
        let z = local_neighbor_weights(&dx, k, &per_point).map_err(|e| e.to_string())?;
        for (i, col) in z.columns().into_iter().enumerate() {
            let nnz = col.iter().filter(|v| **v > 0.0).count();
            ensure(nnz == k, || {
                format!("instance {case}, column {i}: {nnz} nonzeros, expected {k}")
            })?;
            // the simplex projection of the local-only linear term must agree
            let others: Vec<usize> = (0..50).filter(|&j| j != i).collect();
            let v: Vec<f64> = others
                .iter()
                .map(|&j| -dx.values()[[i, j]] / (2.0 * per_point[i]))
                .collect();
            let oracle = common::simplex_projection_bisect(&v);
            let err = max_abs(oracle.iter().zip(&others).map(|(o, &j)| o - col[j]));
            ensure(err < 1e-9, || {
                format!("instance {case}, column {i}: oracle mismatch {err:.2e}")
            })?;
        }
    }
    Ok("100 instances, every column has exactly k nonzeros".into())
}

fn monotone_descent() -> Check {
    let mut records = 0;
    for seed in 0..20u64 {
        let x = random_features(3000 + seed, 100, 5);
        let cfg = SgskConfig {
            gamma_adapt: false,
            seed,
            ..SgskConfig::new(3, 9)
        };
        let fit = sgsk_fit(&kernel(&x, "gaussian:1"), &pairwise_sq_dist(&x), &cfg)
            .map_err(|e| e.to_string())?;
        for w in fit.history.windows(2) {
            let (a, b) = (w[0].objective, w[1].objective);
            ensure(b <= a + 1e-8 * a.abs(), || {
                format!("seed {seed}: objective rose {a} -> {b}")
            })?;
        }
        records += fit.history.len();
    }
    Ok(format!(
        "20 seeds, {records} history records, none increasing"
    ))
}

/// One run of the synthetic suite.
struct SuiteRun {
    name: String,
    c: usize,
    fit: SgskResult,
}

fn synthetic_suite() -> Vec<SuiteRun> {
    let mut runs = Vec::new();
    let mut push = |name: String, c: usize, fit: SgskResult| runs.push(SuiteRun { name, c, fit });
    for seed in 1..=5 {
        let ds = synthesize(&SynthSpec::new(SynthKind::Blobs, 90, seed)).unwrap();
        let fit = sgsk_fit(
            &kernel(&ds.x, "linear"),
            &pairwise_sq_dist(&ds.x),
            &SgskConfig::new(3, 9),
        )
        .unwrap();
        push(format!("blobs/linear seed {seed}"), 3, fit);
    }
    for seed in 1..=2 {
        let ds = synthesize(&SynthSpec::new(SynthKind::Blobs, 90, seed)).unwrap();
        let bank = build_kernel_bank(&ds.x, &BankSpec::default_clustering()).unwrap();
        let fit = sgmk_fit(&bank, &pairwise_sq_dist(&ds.x), &SgskConfig::new(3, 9))
            .unwrap()
            .fit;
        push(format!("blobs/bank seed {seed}"), 3, fit);
    }
    for seed in 1..=2 {
        let ds = synthesize(&SynthSpec::new(SynthKind::Rings, 200, seed)).unwrap();
        let bank = build_kernel_bank(&ds.x, &BankSpec::default_clustering()).unwrap();
        let fit = sgmk_fit(&bank, &pairwise_sq_dist(&ds.x), &SgskConfig::new(2, 10))
            .unwrap()
            .fit;
        push(format!("rings/bank seed {seed}"), 2, fit);
    }
    for seed in 1..=2 {
        let ds = synthesize(&SynthSpec::new(SynthKind::Moons, 100, seed)).unwrap();
        let bank = build_kernel_bank(&ds.x, &BankSpec::default_clustering()).unwrap();
        let fit = sgmk_fit(&bank, &pairwise_sq_dist(&ds.x), &SgskConfig::new(2, 9))
            .unwrap()
            .fit;
        push(format!("moons/bank seed {seed}"), 2, fit);
    }
    runs
}

fn rank_components(suite: &[SuiteRun]) -> Check {
    let mut converged = 0;
    for run in suite.iter().filter(|r| r.fit.converged) {
        converged += 1;
        let eig_sum = run.fit.embedding.eigen_sum();
        let (_, count) = connected_components(&run.fit.z, 1e-8);
        if eig_sum < 1e-8 {
            ensure(count == run.c, || {
                format!(
                    "{}: eigen sum {eig_sum:.1e} but {count} components",
                    run.name
                )
            })?;
        }
    }
    ensure(converged > 0, || "no converged run in the suite".into())?;
    Ok(format!(
        "{converged} of {} suite runs converged, all with exactly c components",
        suite.len()
    ))
}

fn end_to_end_clustering() -> Check {
    let start = Instant::now();
    let ds = synthesize(&SynthSpec::new(SynthKind::Blobs, 90, 1)).unwrap();
    let truth = ds.truth.unwrap();
    let fit = sgsk_fit(
        &kernel(&ds.x, "linear"),
        &pairwise_sq_dist(&ds.x),
        &SgskConfig::new(3, 9),
    )
    .map_err(|e| e.to_string())?;
    let blobs_time = start.elapsed();
    let acc = clustering_accuracy(&fit.labels, &truth).unwrap();
    let score = nmi(&fit.labels, &truth).unwrap();
    ensure(acc == 1.0 && score == 1.0 && fit.components == 3, || {
        format!(
            "blobs: acc {acc}, nmi {score}, {} components",
            fit.components
        )
    })?;
    ensure(blobs_time < Duration::from_secs(10), || {
        format!("blobs took {blobs_time:?}")
    })?;

    let start = Instant::now();
    let ds = synthesize(&SynthSpec::new(SynthKind::Rings, 200, 1)).unwrap();
    let truth = ds.truth.unwrap();
    let bank = build_kernel_bank(&ds.x, &BankSpec::default_clustering()).unwrap();
    let fit = sgmk_fit(&bank, &pairwise_sq_dist(&ds.x), &SgskConfig::new(2, 10))
        .map_err(|e| e.to_string())?;
    let rings_time = start.elapsed();
    let rings_acc = clustering_accuracy(&fit.fit.labels, &truth).unwrap();
    ensure(rings_acc >= 0.95, || format!("rings: acc {rings_acc}"))?;
    ensure(rings_time < Duration::from_secs(60), || {
        format!("rings took {rings_time:?}")
    })?;
    Ok(format!(
        "blobs acc 1, nmi 1, 3 components in {blobs_time:.2?}; rings acc {rings_acc:.3} in {rings_time:.2?}"
    ))
}

fn mkl_kkt() -> Check {
    let w = update_weights(&[1.0, 1.0]).map_err(|e| e.to_string())?;
    ensure(w.as_slice() == [0.25, 0.25], || {
        format!("h = [1, 1] gave {w:?}")
    })?;
    let w = update_weights(&[1.0, 3.0]).map_err(|e| e.to_string())?;
    ensure(w.as_slice() == [9.0 / 16.0, 1.0 / 16.0], || {
        format!("h = [1, 3] gave {w:?}")
    })?;

    let mut rng = common::rng(6000);
    let mut cases = 0;
    for (r, reps) in [(1usize, 5), (2, 10), (3, 5), (4, 2)] {
        for _ in 0..reps {
            let h: Vec<f64> = (0..r).map(|_| rng.random_range(0.05..5.0)).collect();
            let w = update_weights(&h).map_err(|e| e.to_string())?;
            let value: f64 = w.as_slice().iter().zip(&h).map(|(a, b)| a * b).sum();
            let grid = common::weight_grid_min(&h, 1e-3);
            ensure(value <= grid + 1e-6, || {
                format!("h = {h:?}: closed form {value}, grid {grid}")
            })?;
            cases += 1;
        }
    }
    Ok(format!(
        "hand cases exact; {cases} random cases at or below the 1e-3 grid minimum"
    ))
}

fn harmonic_exactness() -> Check {
    // components with labels of a single class each
    let mut rng = common::rng(7000);
    for case in 0..100 {
        let sizes: Vec<usize> = (0..rng.random_range(2..5))
            .map(|_| rng.random_range(2..7))
            .collect();
        let c = 2;
        let n: usize = sizes.iter().sum();
        let mut block_of = Vec::new();
        for (b, &s) in sizes.iter().enumerate() {
            block_of.extend(std::iter::repeat_n(b, s));
        }
        let mut z = Array2::zeros((n, n));
        for i in 0..n {
            let members: Vec<usize> = (0..n).filter(|&j| block_of[j] == block_of[i]).collect();
            let w: Vec<f64> = members.iter().map(|_| 0.05 + rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            for (&j, wj) in members.iter().zip(&w) {
                z[[j, i]] = wj / s;
            }
        }
        let lap = build_laplacian(&AffinityGraph::new(z).unwrap());
        let mut indices = Vec::new();
        for b in 0..sizes.len() {
            let mut members: Vec<usize> = (0..n).filter(|&i| block_of[i] == b).collect();
            members.shuffle(&mut rng);
            indices.extend_from_slice(&members[..rng.random_range(1..members.len())]);
        }
        let classes: Vec<usize> = indices.iter().map(|&i| block_of[i] % c).collect();
        let labels = LabelSet::new(indices.clone(), classes, c).map_err(|e| e.to_string())?;
        let p = harmonic_labels(&lap, &labels).map_err(|e| e.to_string())?;
        let lp = lap.l.dot(&p);
        let pred = decide_labels(p.view());
        for i in (0..n).filter(|i| !indices.contains(i)) {
            ensure(pred[i] == block_of[i] % c, || {
                format!("case {case}: sample {i} mislabeled")
            })?;
            let res = max_abs(lp.row(i).iter().copied());
            ensure(res <= 1e-6, || format!("case {case}: |(LP)_u| = {res:.2e}"))?;
        }
    }

    let start = Instant::now();
    let spec = SynthSpec {
        classes: 2,
        ..SynthSpec::new(SynthKind::Blobs, 100, 1)
    };
    let mut cfg = RunConfig::new(Mode::Ssl, InputSource::Synthetic(spec), 2, 9);
    cfg.label_fraction = Some(0.1);
    cfg.repeats = 20;
    cfg.label_seed = 7;
    let report = run_ssl(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let ssl = report.ssl.unwrap();
    let (mean, std) = (ssl.accuracy_mean.unwrap(), ssl.accuracy_std.unwrap());
    ensure(mean == 1.0 && std == 0.0, || {
        format!("two blobs: mean {mean}, std {std}")
    })?;
    ensure(elapsed < Duration::from_secs(30), || {
        format!("two blobs took {elapsed:?}")
    })?;
    Ok(format!(
        "100 component graphs exact; two blobs 20 repeats mean 1, std 0 in {elapsed:.2?}"
    ))
}

fn block_optimality() -> Check {
    let mut rng = common::rng(8000);
    let mut x = common::gaussian_matrix(8, 2, &mut rng) * 0.1;
    for i in 4..8 {
        x[[i, 0]] += 5.0;
    }
    let x = FeatureMatrix::new(x).unwrap();
    let k = kernel(&x, "linear");
    let dx = pairwise_sq_dist(&x);
    let block = Array2::from_shape_fn((8, 8), |(i, j)| if i / 4 == j / 4 { 0.25 } else { 0.0 });
    let block = AffinityGraph::new(block).unwrap();
    let p = Array2::zeros((8, 2));
    let alpha = 1e6;
    let base = objective_value(&k, &dx, &block, p.view(), alpha, 0.0);
    let mut margin = f64::INFINITY;
    for trial in 0..200 {
        let t: f64 = rng.random_range(0.01..1.0);
        let mut z = block.values().clone();
        for i in 0..8 {
            let first = (i / 4) * 4;
            let r: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let s: f64 = r.iter().sum();
            for (o, rv) in r.iter().enumerate() {
                z[[first + o, i]] = (1.0 - t) * 0.25 + t * rv / s;
            }
        }
        let value = objective_value(
            &k,
            &dx,
            &AffinityGraph::new(z).unwrap(),
            p.view(),
            alpha,
            0.0,
        );
        ensure(value > base, || {
            format!("perturbation {trial} reached {value} <= {base}")
        })?;
        margin = margin.min(value - base);
    }
    Ok(format!(
        "block-uniform graph beats 200 perturbations, smallest gap {margin:.3e}"
    ))
}

fn metric_correctness() -> Check {
    let truth = [0, 0, 1, 1];
    let acc = clustering_accuracy(&[0, 1, 1, 1], &truth).unwrap();
    let pur = purity(&[0, 1, 1, 1], &truth).unwrap();
    let independent = nmi(&[0, 1, 0, 1], &truth).unwrap();
    ensure(
        acc == 0.75 && pur == 0.75 && independent.abs() < 1e-12,
        || format!("tabulated values: acc {acc}, purity {pur}, nmi {independent}"),
    )?;
    let lumped = purity(&[0, 0, 0, 0], &truth).unwrap();
    let both_single = nmi(&[0, 0, 0], &[0, 0, 0]).unwrap();
    let one_single = nmi(&[0, 0, 0], &[0, 1, 1]).unwrap();
    ensure(
        lumped == 0.5 && both_single == 1.0 && one_single == 0.0,
        || format!("tabulated values: purity {lumped}, nmi {both_single} and {one_single}"),
    )?;
    let mut rng = common::rng(9000);
    for case in 0..200 {
        let c = rng.random_range(2..=6);
        let n = rng.random_range(c..40);
        let pred = common::random_labels(n, c, &mut rng);
        let truth = common::random_labels(n, c, &mut rng);
        let acc = clustering_accuracy(&pred, &truth).unwrap();
        let exhaustive = common::accuracy_exhaustive(&pred, &truth);
        ensure((acc - exhaustive).abs() < 1e-12, || {
            format!("case {case}: hungarian {acc}, exhaustive {exhaustive}")
        })?;
        let reference = common::nmi_reference(&pred, &truth);
        let got = nmi(&pred, &truth).unwrap();
        ensure((got - reference).abs() < 1e-12, || {
            format!("case {case}: nmi {got}, reference {reference}")
        })?;

        let mut perm: Vec<usize> = (0..c).collect();
        perm.shuffle(&mut rng);
        let renamed: Vec<usize> = pred.iter().map(|&l| perm[l]).collect();
        ensure(
            clustering_accuracy(&renamed, &truth).unwrap() == acc
                && purity(&renamed, &truth).unwrap() == purity(&pred, &truth).unwrap()
                && (nmi(&renamed, &truth).unwrap() - got).abs() < 1e-12,
            || format!("case {case}: scores changed under relabeling"),
        )?;
    }
    // assignment solver against brute force on a fixed 3×3 instance
    let cost = ndarray::array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
    let assign = hungarian_min_cost(&cost);
    let total: f64 = assign.iter().enumerate().map(|(r, &c)| cost[[r, c]]).sum();
    ensure(total == 5.0, || format!("3×3 assignment cost {total}"))?;
    Ok("tabulated values exact; 200 random labelings match exhaustive search and are relabeling invariant".into())
}

fn numerical_identities() -> Check {
    let mut worst_center = 0.0f64;
    for seed in 0..20 {
        let x = random_features(10_000 + seed, 30, 4);
        let n = 30;
        let h = Array2::<f64>::eye(n) - Array2::from_elem((n, n), 1.0 / n as f64);
        let d = pairwise_sq_dist(&x);
        let lhs = h.dot(d.values()).dot(&h);
        let rhs = h.dot(&x.view().dot(&x.view().t())).dot(&h) * -2.0;
        let err = max_abs((&lhs - &rhs).iter().copied());
        worst_center = worst_center.max(err);
        ensure(err <= 1e-8, || {
            format!("seed {seed}: centering identity off by {err:.2e}")
        })?;
    }

    // replay the alternating loop and check Ky Fan at every iteration
    let ds = synthesize(&SynthSpec::new(SynthKind::Blobs, 90, 1)).unwrap();
    let dx = pairwise_sq_dist(&ds.x);
    let k = kernel(&ds.x, "linear");
    let (alpha, _) = estimate_alpha(&dx, 9).map_err(|e| e.to_string())?;
    let mut z = random_affinity(90, 0);
    let mut worst_ky_fan = 0.0f64;
    for iteration in 0..10 {
        let lap = build_laplacian(&z);
        let emb = smallest_eigpairs(&lap, 3).map_err(|e| e.to_string())?;
        let gap = (lap.quadratic_trace(emb.p.view()) - emb.eigen_sum()).abs();
        worst_ky_fan = worst_ky_fan.max(gap);
        ensure(gap <= 1e-8, || {
            format!("iteration {iteration}: Tr(PᵀLP) off by {gap:.2e}")
        })?;
        z = update_graph(&k, &dx, emb.p.view(), alpha, alpha).map_err(|e| e.to_string())?;
    }
    Ok(format!(
        "centering worst {worst_center:.1e}; Ky Fan worst {worst_ky_fan:.1e} over 10 iterations"
    ))
}

#[test]
fn acceptance_suite() {
    let suite_start = Instant::now();
    let suite = synthetic_suite();
    let suite_time = suite_start.elapsed();

    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Check + '_>)> = vec![
        (
            "simplex QP matches support enumeration",
            Duration::from_secs(30),
            Box::new(qp_oracle),
        ),
        (
            "local solution has exactly k neighbors",
            Duration::from_secs(10),
            Box::new(exact_k),
        ),
        (
            "objective never increases with fixed gamma",
            Duration::from_secs(60),
            Box::new(monotone_descent),
        ),
        (
            "zero eigenvalue mass means exactly c components",
            Duration::MAX,
            Box::new(|| rank_components(&suite)),
        ),
        (
            "blobs and rings clustering",
            Duration::from_secs(70),
            Box::new(end_to_end_clustering),
        ),
        (
            "kernel weights are optimal",
            Duration::from_secs(20),
            Box::new(mkl_kkt),
        ),
        (
            "harmonic labels are exact",
            Duration::from_secs(30),
            Box::new(harmonic_exactness),
        ),
        (
            "block-uniform graph is optimal for huge alpha",
            Duration::from_secs(10),
            Box::new(block_optimality),
        ),
        (
            "metrics match exhaustive references",
            Duration::from_secs(10),
            Box::new(metric_correctness),
        ),
        (
            "centering and Ky Fan identities",
            Duration::MAX,
            Box::new(numerical_identities),
        ),
    ];

    let mut failures = Vec::new();
    let mut err = std::io::stderr().lock();
    writeln!(
        err,
        "\nacceptance (synthetic suite built in {suite_time:.2?})"
    )
    .unwrap();
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *limit => {
                Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"))
            }
            other => other,
        };
        let line = match &outcome {
            Ok(detail) => format!("PASS {:>2}. {name} ({elapsed:.2?}): {detail}", i + 1),
            Err(why) => format!("FAIL {:>2}. {name} ({elapsed:.2?}): {why}", i + 1),
        };
        writeln!(err, "{line}").unwrap();
        if outcome.is_err() {
            failures.push(line);
        }
    }
    assert!(
        failures.is_empty(),
        "{} criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
