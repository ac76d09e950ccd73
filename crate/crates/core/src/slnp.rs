//! The alternating fit: projection step, regularization step and similarity
//! step repeated until the objective
//!
//! ```text
//! J(S, W, R) = Σ_c Σ_j Σ_k ( s_cjk ‖Wᵀx_cj − Wᵀx_ck‖² + γ_cj s_cjk² )
//! ```
//!
//! stops changing, under `Wᵀ S_t W = I` and simplex-constrained rows of `S`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::baselines::{heat_kernel_affinity, AffinityParams};
use crate::eigensolve::{generalized_eig_smallest, pca_of, total_scatter, ScatterMatrix};
use crate::error::{Error, Result};
use crate::similarity::{pairwise_sq_dists, s_step};
use crate::types::{
    relative_change, validate_dataset, IterationRecord, LabeledDataset, Method, ProjectionModel,
    RegularizationMatrix, SimilarityBlocks, TrainConfig, TrainTrace, WatchedSample,
};

/// Per-class graph Laplacians of the symmetrized similarity blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianBundle {
    pub sym_blocks: Vec<DMatrix<f64>>,
    pub degree: Vec<DVector<f64>>,
    pub laplacian: Vec<DMatrix<f64>>,
}

impl LaplacianBundle {
    /// Block-diagonal Laplacian over all samples in class-sorted order.
    pub fn global(&self) -> DMatrix<f64> {
        let n: usize = self.laplacian.iter().map(|l| l.nrows()).sum();
        let mut out = DMatrix::zeros(n, n);
        let mut offset = 0;
        for l in &self.laplacian {
            let m = l.nrows();
            out.view_mut((offset, offset), (m, m)).copy_from(l);
            offset += m;
        }
        out
    }
}

/// `L_c = Deg_c − (S_c + S_cᵀ)/2` for every class; positive semidefinite
/// with zero row sums.
pub fn build_laplacian(s: &SimilarityBlocks) -> LaplacianBundle {
    let mut sym_blocks = Vec::with_capacity(s.blocks.len());
    let mut degree = Vec::with_capacity(s.blocks.len());
    let mut laplacian = Vec::with_capacity(s.blocks.len());
    for block in &s.blocks {
        let sym = (block + block.transpose()) * 0.5;
        let deg = DVector::from_iterator(sym.nrows(), sym.row_iter().map(|r| r.sum()));
        let mut lap = -sym.clone();
        for i in 0..lap.nrows() {
            lap[(i, i)] += deg[i];
        }
        sym_blocks.push(sym);
        degree.push(deg);
        laplacian.push(lap);
    }
    LaplacianBundle {
        sym_blocks,
        degree,
        laplacian,
    }
}

/// The two parts of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub total: f64,
    pub embed: f64,
    pub penalty: f64,
}

fn check_shapes(s: &SimilarityBlocks, w: &DMatrix<f64>, ds: &LabeledDataset) -> Result<()> {
    if w.nrows() != ds.dim() {
        return Err(Error::ShapeMismatch(format!(
            "projection has {} rows for {}-dimensional data",
            w.nrows(),
            ds.dim()
        )));
    }
    if s.blocks.len() != ds.n_classes() {
        return Err(Error::ShapeMismatch(format!(
            "{} similarity blocks for {} classes",
            s.blocks.len(),
            ds.n_classes()
        )));
    }
    for (c, (b, members)) in s.blocks.iter().zip(ds.class_index()).enumerate() {
        if b.nrows() != members.len() || b.ncols() != members.len() {
            return Err(Error::ShapeMismatch(format!(
                "block {c} is {}x{}, class has {} samples",
                b.nrows(),
                b.ncols(),
                members.len()
            )));
        }
    }
    Ok(())
}

/// Evaluates the objective by its explicit triple sum.
pub fn objective(
    s: &SimilarityBlocks,
    w: &DMatrix<f64>,
    r: &RegularizationMatrix,
    ds: &LabeledDataset,
) -> Result<ObjectiveTerms> {
    check_shapes(s, w, ds)?;
    if r.gammas.len() != ds.n_classes()
        || r.gammas
            .iter()
            .zip(ds.class_index())
            .any(|(g, m)| g.len() != m.len())
    {
        return Err(Error::ShapeMismatch(
            "regularization matrix does not match class sizes".into(),
        ));
    }
    let mut embed = 0.0;
    let mut penalty = 0.0;
    for (c, block) in s.blocks.iter().enumerate() {
        let y = w.tr_mul(&ds.class_features(c));
        let dists = pairwise_sq_dists(&y)?;
        for j in 0..block.nrows() {
            let gamma = r.gammas[c][j];
            for k in 0..block.ncols() {
                let sv = block[(j, k)];
                embed += sv * dists[(j, k)];
                penalty += gamma * sv * sv;
            }
        }
    }
    Ok(ObjectiveTerms {
        total: embed + penalty,
        embed,
        penalty,
    })
}

/// `Σ_c Σ_jk s_cjk ‖Wᵀx_cj − Wᵀx_ck‖²` alone.
pub fn embedding_term(s: &SimilarityBlocks, w: &DMatrix<f64>, ds: &LabeledDataset) -> Result<f64> {
    let zero = RegularizationMatrix::zeros(&ds.class_sizes());
    Ok(objective(s, w, &zero, ds)?.embed)
}

/// `Σ_c X_c L_c X_cᵀ`.
pub fn laplacian_scatter(ds: &LabeledDataset, s: &SimilarityBlocks) -> Result<DMatrix<f64>> {
    let dim = ds.dim();
    check_shapes(s, &DMatrix::zeros(dim, 0), ds)?;
    let lap = build_laplacian(s);
    let mut a = DMatrix::zeros(dim, dim);
    for (c, l) in lap.laplacian.iter().enumerate() {
        let xc = ds.class_features(c);
        a += &xc * l * xc.transpose();
    }
    crate::eigensolve::symmetrize(&mut a);
    Ok(a)
}

/// Projection for fixed similarities: the `d` smallest generalized
/// eigenvectors of `(X L Xᵀ, S_t)`, normalized so `Wᵀ S_t W = I`.
/// `ridge` is relative to `tr(S_t)/dim`.
pub fn w_step(
    ds: &LabeledDataset,
    s: &SimilarityBlocks,
    d: usize,
    ridge: f64,
) -> Result<DMatrix<f64>> {
    let scatter = total_scatter(ds, ridge)?;
    Ok(w_step_with(ds, s, d, &scatter)?.0)
}

/// As [`w_step`], against a precomputed total scatter; also returns the
/// selected eigenvalues.
pub fn w_step_with(
    ds: &LabeledDataset,
    s: &SimilarityBlocks,
    d: usize,
    scatter: &ScatterMatrix,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if d == 0 {
        return Err(Error::InvalidConfig("d must be at least 1".into()));
    }
    let a = laplacian_scatter(ds, s)?;
    let eig = generalized_eig_smallest(&a, &scatter.matrix, d)?;
    Ok((eig.vectors, eig.values.iter().copied().collect()))
}

/// Everything produced by [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ProjectionModel,
    pub similarities: SimilarityBlocks,
    pub gammas: RegularizationMatrix,
    pub trace: TrainTrace,
    /// Total scatter (ridge included) of the data the projection step saw.
    pub scatter: ScatterMatrix,
    /// Training data after the optional PCA stage.
    pub reduced: LabeledDataset,
}

/// Runs the alternating fit.
///
/// Similarities start uniform over each class (self included). Each
/// iteration performs the projection step against the current similarities,
/// then recomputes regularization parameters and similarities in the new
/// embedding, and records the objective. Iteration stops after
/// `cfg.max_iters`, when the relative objective change drops below
/// `cfg.rel_tol`, or when the objective reaches zero.
pub fn fit(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<FitResult> {
    let ds = validate_dataset(ds.clone())?;
    cfg.validate_for(&ds)?;

    let (work, w_pca, mean) = match cfg.d_pca {
        Some(p) => {
            let pca = pca_of(ds.features(), p)?;
            let reduced = pca.transform(ds.features())?;
            (ds.with_features(reduced)?, Some(pca.w_slnp), pca.mean)
        }
        None => (ds.clone(), None, None),
    };
    let scatter = total_scatter(&work, cfg.ridge)?;
    let sizes = work.class_sizes();
    let mut similarities = SimilarityBlocks::uniform(&sizes);
    let mut gammas = RegularizationMatrix::zeros(&sizes);

    let mut watched = match cfg.watch {
        Some((c, j)) => {
            let heat = heat_kernel_affinity(&ds.class_features(c), &AffinityParams::default())?;
            Some(WatchedSample {
                class: c,
                sample: j,
                snapshots: vec![similarities.blocks[c].row(j).iter().copied().collect()],
                heat_kernel: heat.row(j).iter().copied().collect(),
            })
        }
        None => None,
    };

    let mut trace = TrainTrace::default();
    let mut w = DMatrix::zeros(work.dim(), cfg.d);
    let mut eigenvalues = Vec::new();
    let mut prev: Option<f64> = None;
    for iter in 1..=cfg.max_iters {
        let started = Instant::now();
        let (w_new, values) = w_step_with(&work, &similarities, cfg.d, &scatter)?;
        w = w_new;
        eigenvalues = values;
        let embedded: Vec<DMatrix<f64>> = (0..work.n_classes())
            .map(|c| w.tr_mul(&work.class_features(c)))
            .collect();
        let (s_new, r_new) = s_step(&embedded, cfg.k, cfg.include_self)?;
        similarities = s_new;
        gammas = r_new;
        let terms = objective(&similarities, &w, &gammas, &work)?;
        let (gamma_mean, gamma_min, gamma_max) = gammas.stats();
        trace.records.push(IterationRecord {
            iter,
            objective: terms.total,
            embed_term: terms.embed,
            penalty_term: terms.penalty,
            gamma_mean,
            gamma_min,
            gamma_max,
            seconds: started.elapsed().as_secs_f64(),
        });
        if let Some(ws) = watched.as_mut() {
            ws.snapshots.push(
                similarities.blocks[ws.class]
                    .row(ws.sample)
                    .iter()
                    .copied()
                    .collect(),
            );
        }
        let done = terms.total == 0.0
            || prev.is_some_and(|p| relative_change(p, terms.total) < cfg.rel_tol);
        prev = Some(terms.total);
        if done {
            trace.converged = true;
            break;
        }
    }
    trace.watched = watched;

    let mut model = ProjectionModel::new(Method::Slnp, w_pca, mean, w, eigenvalues)?;
    model.config = Some(cfg.clone());
    Ok(FitResult {
        model,
        similarities,
        gammas,
        trace,
        scatter,
        reduced: work,
    })
}

/// Embeds the columns of `x` with a fitted model.
pub fn transform(model: &ProjectionModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.transform(x)
}
