//! Acceptance suite: one PASS / FAIL / SKIP line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when all
//! criteria pass. Criteria 9–12 need the MNIST IDX files under
//! `$SLNP_DATA_DIR/mnist` (default `<workspace>/data/mnist`) and are skipped
//! when they are missing. The process exits non-zero if any criterion fails.

mod common;

use std::time::Instant;

use rand::Rng;
use slnp_core::baselines::{class_scatters, class_scatters_pairwise};
use slnp_core::data_io::{subsample_per_class, synth_two_feature_toy};
use slnp_core::eigensolve::{generalized_eig, total_scatter};
use slnp_core::eval::{fit_method, knn_classify, recognition_rate, run_experiment, sweep};
use slnp_core::nalgebra::DMatrix;
use slnp_core::similarity::{
    gamma_bounds, gamma_star, s_step, similarity_row, simplex_project_oracle, NeighborRow,
};
use slnp_core::slnp::{embedding_term, fit, objective, w_step_with};
use slnp_core::{
    ExperimentConfig, LabeledDataset, Method, SimilarityBlocks, SweepAxis, TrainConfig,
};

use common::*;

enum Outcome {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: u32,
    title: &'static str,
    outcome: Outcome,
    detail: String,
}

fn judge(id: u32, title: &'static str, ok: bool, detail: String) -> Line {
    Line {
        id,
        title,
        outcome: if ok { Outcome::Pass } else { Outcome::Fail },
        detail,
    }
}

fn skip(id: u32, title: &'static str, why: &str) -> Line {
    Line {
        id,
        title,
        outcome: Outcome::Skip,
        detail: why.to_string(),
    }
}

fn s_step_feasibility() -> Line {
    let started = Instant::now();
    let mut rng = rng(1);
    let mut worst_sum: f64 = 0.0;
    let mut bad = 0;
    for _ in 0..1000 {
        let (d, k) = random_row(&mut rng);
        let n = d.len();
        let s = similarity_row(&NeighborRow::from_sorted(d), k, n);
        let sum: f64 = s.iter().sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        if s.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-10 || s[k..].iter().any(|v| *v != 0.0) {
            bad += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    judge(
        1,
        "S-step feasibility",
        bad == 0 && secs < 5.0,
        format!("1000 rows, {bad} infeasible, max |sum-1| = {worst_sum:.1e}, {secs:.2} s"),
    )
}

fn oracle_equivalence() -> Line {
    let mut rng = rng(2);
    let (mut eligible, mut excluded, mut attempts) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    while eligible < 500 && attempts < 100_000 {
        attempts += 1;
        let (d, k) = random_row(&mut rng);
        let row = NeighborRow::from_sorted(d.clone());
        let g = gamma_star(&row, k);
        if g == 0.0 {
            continue;
        }
        let q: Vec<f64> = d.iter().map(|v| v / (2.0 * g)).collect();
        let oracle = simplex_project_oracle(&q);
        if oracle[k..].iter().any(|v| *v > 0.0) {
            excluded += 1;
            continue;
        }
        eligible += 1;
        let s = similarity_row(&row, k, d.len());
        for (a, b) in s.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    judge(
        2,
        "closed form matches simplex projection",
        eligible == 500 && worst <= 1e-9,
        format!("{eligible} eligible rows ({excluded} with wider oracle support skipped), max diff {worst:.1e}"),
    )
}

fn gamma_formula() -> Line {
    let mut rng = rng(3);
    let (mut worst_rel, mut worst_low): (f64, f64) = (0.0, f64::INFINITY);
    for _ in 0..1000 {
        let (d, k) = random_row(&mut rng);
        let row = NeighborRow::from_sorted(d);
        let g = gamma_star(&row, k);
        let reference = gamma_star_dd(row.nearest(k), k);
        if reference > 0.0 {
            worst_rel = worst_rel.max((g - reference).abs() / reference);
        } else {
            worst_rel = worst_rel.max(g.abs());
        }
        let (low, _) = gamma_bounds(&row, k);
        worst_low = worst_low.min(g - low);
    }
    judge(
        3,
        "gamma* formula and lower bound",
        worst_rel <= 1e-12 && worst_low >= -1e-12,
        format!("1000 rows, max rel err {worst_rel:.1e}, min(gamma* - low) = {worst_low:.3e}"),
    )
}

fn eigen_correctness() -> Line {
    let mut rng = rng(4);
    let (mut worst_res, mut worst_orth): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let n = rng.random_range(1..=60);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let h = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let a = &g * g.transpose();
        let b = &h * h.transpose() + DMatrix::identity(n, n) * (0.1 * n as f64);
        let eig = generalized_eig(&a, &b).unwrap();
        let scale = a.norm() + b.norm();
        for i in 0..n {
            let w = eig.vectors.column(i);
            let r = (&a * w - &b * w * eig.values[i]).norm();
            worst_res = worst_res.max(r / scale);
        }
        let gram = eig.vectors.transpose() * &b * &eig.vectors - DMatrix::identity(n, n);
        worst_orth = worst_orth.max(gram.amax());
    }
    judge(
        4,
        "generalized eigenpairs",
        worst_res <= 1e-8 && worst_orth <= 1e-8,
        format!("200 SPD pairs, max residual/(|A|+|B|) {worst_res:.1e}, max |W^T B W - I| {worst_orth:.1e}"),
    )
}

/// Tolerances are relative to `max(|J|, d)`: with `W^T S_t W = I` the
/// embedded squared distances live on the scale of `d`, and a bare relative
/// test is meaningless once the objective itself is rounding noise.
fn descent_checks() -> Line {
    let mut rng = rng(5);
    let (mut s_bad, mut w_bad, mut s_checks, mut w_checks) = (0, 0, 0, 0);
    let (mut s_worst, mut w_worst): (f64, f64) = (0.0, 0.0);
    let mut first_iter_only = true;
    for _ in 0..100 {
        let classes = rng.random_range(2..=4);
        let dim = rng.random_range(2..=10);
        let ds = random_dataset(&mut rng, classes, 3, 12, dim);
        let k = rng.random_range(2..=ds.min_class_size().min(6));
        let d = rng.random_range(1..=dim);
        let scatter = total_scatter(&ds, 1e-8).unwrap();
        let mut s = SimilarityBlocks::uniform(&ds.class_sizes());
        let mut w_prev: Option<DMatrix<f64>> = None;
        for iter in 0..6 {
            let (w, _) = w_step_with(&ds, &s, d, &scatter).unwrap();
            if let Some(wp) = &w_prev {
                let new = embedding_term(&s, &w, &ds).unwrap();
                let old = embedding_term(&s, wp, &ds).unwrap();
                let excess = (new - old) / old.abs().max(new.abs()).max(d as f64);
                w_checks += 1;
                w_worst = w_worst.max(excess);
                if excess > 1e-9 {
                    w_bad += 1;
                }
            }
            let y: Vec<_> = (0..ds.n_classes()).map(|c| w.tr_mul(&ds.class_features(c))).collect();
            let (s_new, r) = s_step(&y, k, true).unwrap();
            let new = objective(&s_new, &w, &r, &ds).unwrap().total;
            let old = objective(&s, &w, &r, &ds).unwrap().total;
            let excess = (new - old) / old.abs().max(new.abs()).max(d as f64);
            s_checks += 1;
            s_worst = s_worst.max(excess);
            if excess > 1e-9 {
                s_bad += 1;
                first_iter_only &= iter == 0;
            }
            s = s_new;
            w_prev = Some(w);
        }
    }
    let where_ = if s_bad > 0 && first_iter_only { " (all at the uniform start)" } else { "" };
    judge(
        5,
        "coordinate descent monotonicity",
        s_bad == 0 && w_bad == 0,
        format!(
            "S-step: {s_bad}/{s_checks} increases{where_}, worst rel {s_worst:.2e}; W-step: {w_bad}/{w_checks} increases, worst rel {w_worst:.2e}"
        ),
    )
}

fn predictions(train: &LabeledDataset, test: &LabeledDataset, cfg: &TrainConfig) -> Vec<usize> {
    let model = fit(train, cfg).unwrap().model;
    let tr = model.transform(train.features()).unwrap();
    let te = model.transform(test.features()).unwrap();
    knn_classify(&tr, train.labels(), &te).unwrap()
}

fn whitening_and_scale() -> Line {
    let mut rng = rng(6);
    let mut worst: f64 = 0.0;
    let mut changed = 0;
    let fixtures = 20;
    for i in 0..fixtures {
        let dim = rng.random_range(3..=8);
        let ds = random_dataset(&mut rng, 3, 8, 12, dim);
        let split = subsample_per_class(&ds, 6, i).unwrap();
        let cfg = TrainConfig {
            k: 3,
            d: 2,
            d_pca: (i % 2 == 1).then_some(dim - 1),
            max_iters: 10,
            ..TrainConfig::default()
        };
        let res = fit(&split.train, &cfg).unwrap();
        let w = &res.model.w_slnp;
        let gram = w.transpose() * &res.scatter.matrix * w - DMatrix::identity(w.ncols(), w.ncols());
        worst = worst.max(gram.amax());

        let scaled = |d: &LabeledDataset| d.with_features(d.features() * 3.0).unwrap();
        let base = predictions(&split.train, &split.test, &cfg);
        let tripled = predictions(&scaled(&split.train), &scaled(&split.test), &cfg);
        if base != tripled {
            changed += 1;
        }
    }
    judge(
        6,
        "whitening and scale invariance",
        worst <= 1e-8 && changed == 0,
        format!("{fixtures} fixtures, max |W^T S_t W - I| {worst:.1e}, {changed} changed prediction sets after x3"),
    )
}

fn scatter_duality() -> Line {
    let mut rng = rng(7);
    let (mut w_err, mut b_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let classes = rng.random_range(1..=5);
        let dim = rng.random_range(1..=8);
        let ds = random_dataset(&mut rng, classes, 1, 10, dim);
        let (sw, sb) = class_scatters(&ds);
        let (pw, pb) = class_scatters_pairwise(&ds).unwrap();
        w_err = w_err.max((sw - pw).amax());
        b_err = b_err.max((sb - pb).amax());
    }
    judge(
        7,
        "pairwise / scatter duality",
        w_err <= 1e-9 && b_err <= 1e-9,
        format!("100 datasets, within-class max diff {w_err:.1e}, between-class max diff {b_err:.1e}"),
    )
}

fn toy_separation() -> Line {
    let cfg = ExperimentConfig {
        train: TrainConfig {
            k: 2,
            d: 1,
            ..TrainConfig::default()
        },
        ..Default::default()
    };
    let no_self = ExperimentConfig {
        train: TrainConfig {
            include_self: false,
            ..cfg.train.clone()
        },
        ..Default::default()
    };
    let mut slnp_perfect = 0;
    let mut no_self_perfect = 0;
    let mut pca_imperfect = 0;
    for seed in 0..10u64 {
        let ds = synth_two_feature_toy(50, 1.0, seed).unwrap();
        let split = subsample_per_class(&ds, 5, seed).unwrap();
        let rate = |m: Method, cfg: &ExperimentConfig| {
            let (model, _) = fit_method(&split.train, m, cfg).unwrap();
            let tr = model.transform(split.train.features()).unwrap();
            let te = model.transform(split.test.features()).unwrap();
            let pred = knn_classify(&tr, split.train.labels(), &te).unwrap();
            recognition_rate(&pred, split.test.labels()).unwrap()
        };
        if rate(Method::Slnp, &cfg) == 100.0 {
            slnp_perfect += 1;
        }
        if rate(Method::Slnp, &no_self) == 100.0 {
            no_self_perfect += 1;
        }
        if rate(Method::Pca, &cfg) < 100.0 {
            pca_imperfect += 1;
        }
    }
    judge(
        8,
        "two-feature toy",
        slnp_perfect == 10 && pca_imperfect >= 7,
        format!(
            "SLNP 100% on {slnp_perfect}/10 seeds, PCA below 100% on {pca_imperfect}/10 seeds \
             [diagnostic: self excluded from candidates, SLNP 100% on {no_self_perfect}/10]"
        ),
    )
}

fn mnist_cfg(n_per_class: usize) -> ExperimentConfig {
    let (d_pca, k) = if n_per_class == 5 { (34, 5) } else { (32, 6) };
    ExperimentConfig {
        train: TrainConfig {
            k,
            d: 18,
            d_pca: Some(d_pca),
            max_iters: 30,
            rel_tol: 1e-6,
            ..TrainConfig::default()
        },
        ..Default::default()
    }
}

const MNIST_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn mnist_criteria(ds: Option<&LabeledDataset>) -> Vec<Line> {
    const T9: &str = "MNIST recognition band";
    const T10: &str = "MNIST paired ordering vs LDA / LFDA";
    const T11: &str = "MNIST convergence within 15 iterations";
    const T12: &str = "MNIST robustness to K";
    let Some(ds) = ds else {
        let why = "MNIST IDX files not found (set SLNP_DATA_DIR)";
        return vec![skip(9, T9, why), skip(10, T10, why), skip(11, T11, why), skip(12, T12, why)];
    };
    let mut lines = Vec::new();

    let started = Instant::now();
    let slnp10 = run_experiment(ds, Method::Slnp, &mnist_cfg(10), 10, &MNIST_SEEDS).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let in_band = (slnp10.mean_rate - 76.34).abs() <= 4.0;
    lines.push(judge(
        9,
        T9,
        in_band && secs < 300.0,
        format!(
            "N_i=10: mean {:.2} +- {:.2} over {} seeds (band 72.34..80.34), {secs:.1} s",
            slnp10.mean_rate,
            slnp10.std_rate,
            MNIST_SEEDS.len()
        ),
    ));

    let mut ok = true;
    let mut parts = Vec::new();
    for n in [5usize, 10] {
        let cfg = mnist_cfg(n);
        let slnp = if n == 10 {
            slnp10.clone()
        } else {
            run_experiment(ds, Method::Slnp, &cfg, n, &MNIST_SEEDS).unwrap()
        };
        let lda = run_experiment(ds, Method::Lda, &cfg, n, &MNIST_SEEDS).unwrap();
        let lfda = run_experiment(ds, Method::Lfda, &cfg, n, &MNIST_SEEDS).unwrap();
        assert_eq!(slnp.train_indices, lda.train_indices);
        assert_eq!(slnp.train_indices, lfda.train_indices);
        ok &= slnp.mean_rate >= lda.mean_rate + 1.0 && slnp.mean_rate >= lfda.mean_rate + 1.0;
        parts.push(format!(
            "N_i={n}: SLNP {:.2}, LDA {:.2}, LFDA {:.2}",
            slnp.mean_rate, lda.mean_rate, lfda.mean_rate
        ));
    }
    lines.push(judge(10, T10, ok, parts.join("; ")));

    let split = subsample_per_class(ds, 10, 0).unwrap();
    let mut cfg = mnist_cfg(10).train;
    cfg.max_iters = 15;
    cfg.rel_tol = 1e-4;
    let trace = fit(&split.train, &cfg).unwrap().trace;
    let changes = trace.relative_changes();
    let last = changes.last().copied().unwrap_or(f64::NAN);
    lines.push(judge(
        11,
        T11,
        trace.converged,
        format!(
            "seed 0: {} iterations, converged = {}, last relative change {last:.2e}",
            trace.iterations(),
            trace.converged
        ),
    ));

    let values: Vec<usize> = (2..=9).collect();
    let reports = sweep(ds, Method::Slnp, &mnist_cfg(10), 10, SweepAxis::K, &values, &[0]).unwrap();
    let rates: Vec<f64> = reports.iter().map(|r| r.mean_rate).collect();
    let spread = rates.iter().cloned().fold(f64::MIN, f64::max) - rates.iter().cloned().fold(f64::MAX, f64::min);
    let rest = &rates[1..];
    let spread_k3 = rest.iter().cloned().fold(f64::MIN, f64::max) - rest.iter().cloned().fold(f64::MAX, f64::min);
    let listed: Vec<String> = values.iter().zip(&rates).map(|(k, r)| format!("K={k}:{r:.2}")).collect();
    lines.push(judge(
        12,
        T12,
        spread <= 4.0,
        format!(
            "seed 0, spread {spread:.2} points ({}) [diagnostic: K=3..9 spread {spread_k3:.2}]",
            listed.join(" ")
        ),
    ));
    lines
}

fn main() {
    let mut lines = vec![
        s_step_feasibility(),
        oracle_equivalence(),
        gamma_formula(),
        eigen_correctness(),
        descent_checks(),
        whitening_and_scale(),
        scatter_duality(),
        toy_separation(),
    ];
    let mnist = mnist_subset();
    lines.extend(mnist_criteria(mnist.as_ref()));

    let mut failed = 0;
    for l in &lines {
        let tag = match l.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => {
                failed += 1;
                "FAIL"
            }
            Outcome::Skip => "SKIP",
        };
        println!("criterion {:>2} {tag}  {} -- {}", l.id, l.title, l.detail);
    }
    println!("acceptance: {} of {} criteria failed", failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
