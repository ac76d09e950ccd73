//! Adaptive neighbor similarities in the embedded space.
//!
//! For each training sample the squared embedded distances to the members of
//! its class are sorted, the regularization parameter is set to
//! `½ (K − 1) · sqrt(Σ_{k ≤ K} d_k²)` and the similarity row is the affine
//! function `s_k = η − d_k / (2γ)` on the `K` nearest candidates, zero
//! elsewhere, with `η` fixed by the sum-to-one constraint.
//!
//! The regularization parameter is never below the lower bound
//! `(K/2) d_K − ½ Σ_{k ≤ K} d_k`, so the closed form is non-negative up to
//! rounding; any tiny negative value is clamped and the row renormalized.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{RegularizationMatrix, SimilarityBlocks};

/// Sorted squared distances from one sample to its candidate neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRow {
    /// Ascending; ties ordered by ascending source index.
    pub sorted_sq_dists: Vec<f64>,
    /// Within-class index of each entry of `sorted_sq_dists`.
    pub source_indices: Vec<usize>,
    /// Position of the sample itself, when it is a candidate.
    pub self_position: Option<usize>,
}

impl NeighborRow {
    pub fn len(&self) -> usize {
        self.sorted_sq_dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_sq_dists.is_empty()
    }

    /// The `k` smallest distances.
    pub fn nearest(&self, k: usize) -> &[f64] {
        &self.sorted_sq_dists[..k.min(self.len())]
    }

    /// A row whose candidates are labelled `0..n` in the order given.
    /// Used where distances are already sorted (tests, benchmarks).
    pub fn from_sorted(sorted_sq_dists: Vec<f64>) -> Self {
        let n = sorted_sq_dists.len();
        Self {
            sorted_sq_dists,
            source_indices: (0..n).collect(),
            self_position: None,
        }
    }
}

/// Squared Euclidean distances between the columns of `y`.
pub fn pairwise_sq_dists(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some((idx, _)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            row: idx % y.nrows(),
            col: idx / y.nrows(),
        });
    }
    let n = y.ncols();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in (j + 1)..n {
            let d = y
                .column(j)
                .iter()
                .zip(y.column(k).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            out[(j, k)] = d;
            out[(k, j)] = d;
        }
    }
    Ok(out)
}

/// Sorts the candidate distances of sample `self_index`.
pub fn neighbor_row(
    dist_row: &[f64],
    self_index: usize,
    k: usize,
    include_self: bool,
) -> Result<NeighborRow> {
    let mut order: Vec<usize> = (0..dist_row.len())
        .filter(|&i| include_self || i != self_index)
        .collect();
    if k > order.len() {
        return Err(Error::KTooLarge {
            k,
            candidates: order.len(),
            class: None,
            sample: None,
        });
    }
    order.sort_by(|&a, &b| dist_row[a].total_cmp(&dist_row[b]).then(a.cmp(&b)));
    let self_position = order.iter().position(|&i| i == self_index);
    Ok(NeighborRow {
        sorted_sq_dists: order.iter().map(|&i| dist_row[i]).collect(),
        source_indices: order,
        self_position,
    })
}

/// Optimal regularization parameter `½ (K − 1) · sqrt(Σ_{k ≤ K} d_k²)`.
pub fn gamma_star(row: &NeighborRow, k: usize) -> f64 {
    let near = row.nearest(k);
    // Scale before squaring so tiny or huge distances neither underflow nor overflow.
    let scale = near.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let sum_sq: f64 = near.iter().map(|d| (d / scale) * (d / scale)).sum();
    0.5 * (k as f64 - 1.0) * scale * sum_sq.sqrt()
}

/// Interval of regularization parameters for which exactly the `K` nearest
/// candidates keep a non-negative weight. The upper end is `+∞` when there
/// is no `(K+1)`-th candidate.
pub fn gamma_bounds(row: &NeighborRow, k: usize) -> (f64, f64) {
    let near = row.nearest(k);
    let half_sum = 0.5 * near.iter().sum::<f64>();
    let kf = k as f64;
    let low = 0.5 * kf * near[near.len() - 1] - half_sum;
    let high = match row.sorted_sq_dists.get(k) {
        Some(&next) => 0.5 * kf * next - half_sum,
        None => f64::INFINITY,
    };
    (low, high)
}

/// Lagrange multiplier of the sum-to-one constraint for a given `gamma`.
pub fn eta(row: &NeighborRow, k: usize, gamma: f64) -> Result<f64> {
    if gamma == 0.0 {
        return Err(Error::GammaZero);
    }
    let sum: f64 = row.nearest(k).iter().sum();
    Ok((sum / (2.0 * gamma) + 1.0) / k as f64)
}

/// Closed-form similarity row, scattered back to within-class positions.
///
/// `class_size` is the length of the returned vector. When every one of the
/// `K` nearest distances is zero the row is uniform over them.
pub fn similarity_row(row: &NeighborRow, k: usize, class_size: usize) -> Vec<f64> {
    let gamma = gamma_star(row, k);
    let weights = truncated_weights(row.nearest(k), gamma);
    let mut out = vec![0.0; class_size];
    for (w, &src) in weights.iter().zip(&row.source_indices) {
        out[src] = *w;
    }
    out
}

fn truncated_weights(near: &[f64], gamma: f64) -> Vec<f64> {
    let k = near.len();
    if gamma == 0.0 {
        return vec![1.0 / k as f64; k];
    }
    let inv = 1.0 / (2.0 * gamma);
    let eta = (near.iter().sum::<f64>() * inv + 1.0) / k as f64;
    let mut w: Vec<f64> = near.iter().map(|d| (eta - d * inv).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|v| *v /= total);
    } else {
        w.fill(1.0 / k as f64);
    }
    w
}

/// Euclidean projection of `-q` onto the probability simplex
/// (sort-and-threshold). Kept independent of the closed form above.
pub fn simplex_project_oracle(q: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = q.iter().map(|x| -x).collect();
    let mut sorted = v.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Recomputes every regularization parameter and similarity row from the
/// embedded class matrices (one column per sample).
pub fn s_step(
    y_by_class: &[DMatrix<f64>],
    k: usize,
    include_self: bool,
) -> Result<(SimilarityBlocks, RegularizationMatrix)> {
    let mut blocks = Vec::with_capacity(y_by_class.len());
    let mut gammas = Vec::with_capacity(y_by_class.len());
    for (c, y) in y_by_class.iter().enumerate() {
        let n = y.ncols();
        let dists = pairwise_sq_dists(y)?;
        let mut block = DMatrix::zeros(n, n);
        let mut class_gammas = Vec::with_capacity(n);
        for j in 0..n {
            let dist_row: Vec<f64> = dists.row(j).iter().copied().collect();
            let row = neighbor_row(&dist_row, j, k, include_self).map_err(|e| match e {
                Error::KTooLarge { k, candidates, .. } => Error::KTooLarge {
                    k,
                    candidates,
                    class: Some(c),
                    sample: Some(j),
                },
                other => other,
            })?;
            let gamma = gamma_star(&row, k);
            let weights = truncated_weights(row.nearest(k), gamma);
            for (w, &src) in weights.iter().zip(&row.source_indices) {
                block[(j, src)] = *w;
            }
            class_gammas.push(gamma);
        }
        blocks.push(block);
        gammas.push(class_gammas);
    }
    Ok((SimilarityBlocks { blocks }, RegularizationMatrix { gammas }))
}
