//! Comparison methods with fixed, precomputed similarities: LDA (label
//! weights), LPP (heat-kernel weights) and LFDA (both combined).
//!
//! Every scatter matrix here has the pairwise form
//! `½ Σ_ij w_ij (x_i − x_j)(x_i − x_j)^T = X (Deg − W) X^T` for symmetric `W`.
//! Note that the between-class weight of a same-class pair,
//! `1/N − 1/N_l`, is negative; the sign is kept because the scatter
//! identities need it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigensolve::{generalized_eig, scatter_of, symmetrize, trace_scale, EigenResult};
use crate::error::{Error, Result};
use crate::similarity::pairwise_sq_dists;
use crate::types::{LabeledDataset, Method, ProjectionModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AffinityMode {
    #[default]
    Dense,
    /// Keep `s_ij` only when `i` and `j` are among each other's `k` nearest.
    Knn(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AffinityParams {
    /// Heat-kernel bandwidth; the median pairwise squared distance when unset.
    pub heat_t: Option<f64>,
    pub mode: AffinityMode,
}

impl AffinityParams {
    pub fn with_t(heat_t: f64) -> Self {
        Self {
            heat_t: Some(heat_t),
            mode: AffinityMode::Dense,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(t) = self.heat_t {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig(format!("heat_t = {t} must be positive")));
            }
        }
        if self.mode == AffinityMode::Knn(0) {
            return Err(Error::InvalidConfig("knn_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Median of the off-diagonal squared distances (1 if they are all zero).
pub fn median_sq_distance(sq: &DMatrix<f64>) -> f64 {
    let n = sq.nrows();
    let mut vals: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| sq[(i, j)])
        .collect();
    if vals.is_empty() {
        return 1.0;
    }
    vals.sort_by(f64::total_cmp);
    let m = vals.len();
    let med = if m % 2 == 1 {
        vals[m / 2]
    } else {
        0.5 * (vals[m / 2 - 1] + vals[m / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// `exp(−‖x_i − x_j‖² / t)` between all columns of `x`, optionally
/// sparsified to mutual nearest neighbors. The diagonal is 1.
pub fn heat_kernel_affinity(x: &DMatrix<f64>, params: &AffinityParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    let sq = pairwise_sq_dists(x)?;
    let t = params.heat_t.unwrap_or_else(|| median_sq_distance(&sq));
    let mut s = sq.map(|d| (-d / t).exp());
    if let AffinityMode::Knn(k) = params.mode {
        let n = sq.nrows();
        let mut near = vec![vec![false; n]; n];
        for i in 0..n {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| sq[(i, a)].total_cmp(&sq[(i, b)]).then(a.cmp(&b)));
            for &j in order.iter().take(k) {
                near[i][j] = true;
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !(near[i][j] && near[j][i]) {
                    s[(i, j)] = 0.0;
                }
            }
        }
    }
    Ok(s)
}

/// `½ Σ_ij w_ij (x_i − x_j)(x_i − x_j)^T` for an arbitrary weight matrix.
pub fn pairwise_scatter(x: &DMatrix<f64>, weights: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.ncols();
    if weights.nrows() != n || weights.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} weights for {} samples",
            weights.nrows(),
            weights.ncols(),
            n
        )));
    }
    let mut sym = weights + weights.transpose();
    sym *= 0.5;
    let mut lap = -sym.clone();
    for i in 0..n {
        lap[(i, i)] += sym.row(i).sum();
    }
    let mut s = x * lap * x.transpose();
    symmetrize(&mut s);
    Ok(s)
}

/// Label-only pair weights: within `1/N_l` for same-class pairs, between
/// `1/N − 1/N_l` (same class) or `1/N` (different classes).
pub fn lda_pair_weights(ds: &LabeledDataset) -> (DMatrix<f64>, DMatrix<f64>) {
    label_pair_weights(ds, None)
}

fn label_pair_weights(
    ds: &LabeledDataset,
    affinity: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ds.len();
    let nf = n as f64;
    let sizes = ds.class_sizes();
    let labels = ds.labels();
    let mut within = DMatrix::zeros(n, n);
    let mut between = DMatrix::zeros(n, n);
    for i in 0..n {
        let nl = sizes[labels[i]] as f64;
        for j in 0..n {
            let a = affinity.map_or(1.0, |s| s[(i, j)]);
            if labels[i] == labels[j] {
                within[(i, j)] = a / nl;
                between[(i, j)] = a * (1.0 / nf - 1.0 / nl);
            } else {
                between[(i, j)] = 1.0 / nf;
            }
        }
    }
    (within, between)
}

/// Within- and between-class scatter from class means:
/// `S_w = Σ_c Σ_{i ∈ c} (x_i − m_c)(x_i − m_c)^T` and
/// `S_b = Σ_c N_c (m_c − m)(m_c − m)^T`.
pub fn class_scatters(ds: &LabeledDataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let dim = ds.dim();
    let mean = ds.features().column_mean();
    let mut sw = DMatrix::zeros(dim, dim);
    let mut sb = DMatrix::zeros(dim, dim);
    for c in 0..ds.n_classes() {
        let xc = ds.class_features(c);
        if xc.ncols() == 0 {
            continue;
        }
        let mc = xc.column_mean();
        let mut centered = xc.clone();
        for mut col in centered.column_iter_mut() {
            col -= &mc;
        }
        sw += &centered * centered.transpose();
        let diff = &mc - &mean;
        sb += (&diff * diff.transpose()) * xc.ncols() as f64;
    }
    symmetrize(&mut sw);
    symmetrize(&mut sb);
    (sw, sb)
}

/// The same two matrices assembled from label pair weights.
pub fn class_scatters_pairwise(ds: &LabeledDataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (w, b) = lda_pair_weights(ds);
    Ok((
        pairwise_scatter(ds.features(), &w)?,
        pairwise_scatter(ds.features(), &b)?,
    ))
}

fn require_classes(ds: &LabeledDataset, what: &str) -> Result<()> {
    if ds.n_classes() < 2 {
        return Err(Error::InvalidConfig(format!("{what} needs at least two classes")));
    }
    Ok(())
}

fn ridged(mut m: DMatrix<f64>, ridge: f64, scale: f64) -> DMatrix<f64> {
    let r = ridge * scale;
    for i in 0..m.nrows() {
        m[(i, i)] += r;
    }
    m
}

/// Largest `d` generalized eigenvectors, rescaled to unit length.
fn top_unit_columns(eig: &EigenResult, d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let (values, mut w) = eig.top(d);
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    (values, w)
}

fn check_dim(ds: &LabeledDataset, d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidConfig("d must be at least 1".into()));
    }
    if d > ds.dim() {
        return Err(Error::DimensionTooLarge {
            requested: d,
            available: ds.dim(),
        });
    }
    Ok(())
}

/// Top-`d` generalized eigenvectors of `(S_b, S_w + ridge)`; unit columns.
/// The ridge is relative to `tr(S_t)/dim`.
pub fn lda_fit(ds: &LabeledDataset, d: usize, ridge: f64) -> Result<ProjectionModel> {
    check_dim(ds, d)?;
    require_classes(ds, "LDA")?;
    let (sw, sb) = class_scatters(ds);
    let scale = trace_scale(&(&sw + &sb));
    let eig = generalized_eig(&sb, &ridged(sw, ridge, scale))?;
    let (values, w) = top_unit_columns(&eig, d);
    ProjectionModel::new(Method::Lda, None, None, w, values)
}

/// Smallest `d` generalized eigenvectors of `(X L X^T, X Deg X^T + ridge)`
/// for the heat-kernel graph; columns satisfy the degree constraint.
pub fn lpp_fit(
    ds: &LabeledDataset,
    d: usize,
    params: &AffinityParams,
    ridge: f64,
) -> Result<ProjectionModel> {
    check_dim(ds, d)?;
    let x = ds.features();
    let s = heat_kernel_affinity(x, params)?;
    let n = x.ncols();
    let mut degree = DMatrix::zeros(n, n);
    for i in 0..n {
        degree[(i, i)] = s.row(i).sum();
    }
    let a = pairwise_scatter(x, &s)?;
    let mut b = x * degree * x.transpose();
    symmetrize(&mut b);
    let scale = trace_scale(&b);
    let eig = generalized_eig(&a, &ridged(b, ridge, scale))?;
    let values = eig.values.rows(0, d).iter().copied().collect();
    let w = eig.vectors.columns(0, d).into_owned();
    ProjectionModel::new(Method::Lpp, None, None, w, values)
}

/// LFDA scatter pair: label weights multiplied by heat-kernel affinities on
/// same-class pairs.
pub fn lfda_scatters(
    ds: &LabeledDataset,
    params: &AffinityParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = heat_kernel_affinity(ds.features(), params)?;
    let (w, b) = label_pair_weights(ds, Some(&s));
    Ok((
        pairwise_scatter(ds.features(), &w)?,
        pairwise_scatter(ds.features(), &b)?,
    ))
}

/// Top-`d` generalized eigenvectors of `(S_b^lfda, S_w^lfda + ridge)`.
pub fn lfda_fit(
    ds: &LabeledDataset,
    d: usize,
    params: &AffinityParams,
    ridge: f64,
) -> Result<ProjectionModel> {
    check_dim(ds, d)?;
    require_classes(ds, "LFDA")?;
    let (sw, sb) = lfda_scatters(ds, params)?;
    let scale = trace_scale(&scatter_of(ds.features(), 0.0)?.matrix);
    let eig = generalized_eig(&sb, &ridged(sw, ridge, scale))?;
    let (values, w) = top_unit_columns(&eig, d);
    ProjectionModel::new(Method::Lfda, None, None, w, values)
}
