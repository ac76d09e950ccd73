//! Shared data model: labeled datasets, similarity blocks, regularization
//! parameters, projection models, training configuration and traces.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples stored column-wise (`dim × len`) with dense labels `0..n_classes`.
///
/// `class_index[c]` lists the columns of class `c` in ascending order.
/// Subsets produced by [`LabeledDataset::select`] may contain empty classes;
/// everything that trains on a dataset runs [`validate_dataset`] first.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    class_index: Vec<Vec<usize>>,
}

impl LabeledDataset {
    /// Builds and validates a dataset; the class count is the number of
    /// distinct labels, so labels must already be dense.
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        Self::with_classes(features, labels, distinct.len())
    }

    pub fn with_classes(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if features.ncols() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.ncols(),
                right: labels.len(),
            });
        }
        for (index, &label) in labels.iter().enumerate() {
            if label >= n_classes {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    classes: n_classes,
                });
            }
        }
        let class_index = partition(&labels, n_classes);
        validate_dataset(Self {
            features,
            labels,
            class_index,
        })
    }

    /// Assembles a dataset without checking any invariant.
    pub fn from_parts(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        class_index: Vec<Vec<usize>>,
    ) -> Self {
        Self {
            features,
            labels,
            class_index,
        }
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_index(&self) -> &[Vec<usize>] {
        &self.class_index
    }

    pub fn n_classes(&self) -> usize {
        self.class_index.len()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.class_index.iter().map(Vec::len).collect()
    }

    pub fn min_class_size(&self) -> usize {
        self.class_index.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Columns of class `c`, in class-index order.
    pub fn class_features(&self, c: usize) -> DMatrix<f64> {
        self.features.select_columns(&self.class_index[c])
    }

    /// All samples reordered class by class.
    pub fn class_sorted_features(&self) -> DMatrix<f64> {
        let order: Vec<usize> = self.class_index.iter().flatten().copied().collect();
        self.features.select_columns(&order)
    }

    /// Subset of samples, keeping the label space. Classes may end up empty.
    pub fn select(&self, indices: &[usize]) -> Self {
        let features = self.features.select_columns(indices);
        let labels: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
        let class_index = partition(&labels, self.n_classes());
        Self {
            features,
            labels,
            class_index,
        }
    }

    /// Same labels, new features (one column per sample).
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Self> {
        if features.ncols() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature columns for {} samples",
                features.ncols(),
                self.len()
            )));
        }
        Ok(Self {
            features,
            labels: self.labels.clone(),
            class_index: self.class_index.clone(),
        })
    }
}

fn partition(labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut index = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l < n_classes {
            index[l].push(i);
        }
    }
    index
}

/// Checks every structural invariant of a dataset, returning it unchanged.
pub fn validate_dataset(ds: LabeledDataset) -> Result<LabeledDataset> {
    let n_classes = ds.class_index.len();
    if ds.features.ncols() != ds.labels.len() {
        return Err(Error::LengthMismatch {
            left: ds.features.ncols(),
            right: ds.labels.len(),
        });
    }
    for (index, &label) in ds.labels.iter().enumerate() {
        if label >= n_classes {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes: n_classes,
            });
        }
    }
    let mut seen = vec![false; ds.labels.len()];
    for (c, members) in ds.class_index.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyClass { class: c });
        }
        let mut prev = None;
        for &i in members {
            if i >= ds.labels.len() || seen[i] || ds.labels[i] != c || prev.is_some_and(|p| p >= i)
            {
                return Err(Error::PartitionMismatch { index: i });
            }
            seen[i] = true;
            prev = Some(i);
        }
    }
    if let Some(index) = seen.iter().position(|s| !s) {
        return Err(Error::PartitionMismatch { index });
    }
    for sample in 0..ds.features.ncols() {
        for row in 0..ds.features.nrows() {
            if !ds.features[(row, sample)].is_finite() {
                return Err(Error::NonFiniteFeature { row, sample });
            }
        }
    }
    Ok(ds)
}

/// Per-class square similarity matrices; row `j` of block `c` holds the
/// similarities of sample `j` of class `c` to the other members of its class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBlocks {
    pub blocks: Vec<DMatrix<f64>>,
}

impl SimilarityBlocks {
    /// Every row uniform over its class, self included.
    pub fn uniform(class_sizes: &[usize]) -> Self {
        let blocks = class_sizes
            .iter()
            .map(|&n| DMatrix::from_element(n, n, 1.0 / n as f64))
            .collect();
        Self { blocks }
    }

    pub fn n_classes(&self) -> usize {
        self.blocks.len()
    }

    /// Entries in `[0, 1]`, rows summing to one within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.blocks.iter().all(|b| {
            b.is_square()
                && b.iter().all(|&v| (0.0..=1.0).contains(&v))
                && b.row_iter().all(|r| (r.sum() - 1.0).abs() <= tol)
        })
    }

    /// Largest number of strictly positive entries in any row.
    pub fn max_row_support(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| b.row_iter().map(|r| r.iter().filter(|&&v| v > 0.0).count()))
            .max()
            .unwrap_or(0)
    }
}

/// One regularization parameter per training sample, grouped by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationMatrix {
    pub gammas: Vec<Vec<f64>>,
}

impl RegularizationMatrix {
    pub fn zeros(class_sizes: &[usize]) -> Self {
        Self {
            gammas: class_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.gammas.iter().flatten().all(|g| g.is_finite() && *g >= 0.0)
    }

    /// `(mean, min, max)` over all samples; zeros when empty.
    pub fn stats(&self) -> (f64, f64, f64) {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &g in self.gammas.iter().flatten() {
            n += 1;
            sum += g;
            lo = lo.min(g);
            hi = hi.max(g);
        }
        if n == 0 {
            (0.0, 0.0, 0.0)
        } else {
            (sum / n as f64, lo, hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Slnp,
    Pca,
    Lda,
    Lpp,
    Lfda,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Slnp,
        Method::Pca,
        Method::Lda,
        Method::Lpp,
        Method::Lfda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Slnp => "slnp",
            Method::Pca => "pca",
            Method::Lda => "lda",
            Method::Lpp => "lpp",
            Method::Lfda => "lfda",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// A fitted linear map. `composed = w_pca * w_slnp` when a PCA stage is
/// present; `mean` is subtracted before projecting when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub method: Method,
    pub w_pca: Option<DMatrix<f64>>,
    pub mean: Option<DVector<f64>>,
    pub w_slnp: DMatrix<f64>,
    pub composed: DMatrix<f64>,
    /// Eigenvalues paired with the columns of `w_slnp`.
    pub eigenvalues: Vec<f64>,
    pub config: Option<TrainConfig>,
}

impl ProjectionModel {
    pub fn new(
        method: Method,
        w_pca: Option<DMatrix<f64>>,
        mean: Option<DVector<f64>>,
        w_slnp: DMatrix<f64>,
        eigenvalues: Vec<f64>,
    ) -> Result<Self> {
        let composed = match &w_pca {
            Some(p) => {
                if p.ncols() != w_slnp.nrows() {
                    return Err(Error::ShapeMismatch(format!(
                        "PCA stage has {} columns, projection expects {} rows",
                        p.ncols(),
                        w_slnp.nrows()
                    )));
                }
                p * &w_slnp
            }
            None => w_slnp.clone(),
        };
        if let Some(m) = &mean {
            if m.len() != composed.nrows() {
                return Err(Error::ShapeMismatch(format!(
                    "mean has {} entries for input dimension {}",
                    m.len(),
                    composed.nrows()
                )));
            }
        }
        Ok(Self {
            method,
            w_pca,
            mean,
            w_slnp,
            composed,
            eigenvalues,
            config: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.composed.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.composed.ncols()
    }

    /// Embeds the columns of `x`: `composed^T (x - mean)`.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} rows, model expects {}",
                x.nrows(),
                self.input_dim()
            )));
        }
        let y = self.composed.tr_mul(x);
        Ok(match &self.mean {
            Some(m) => {
                let shift = self.composed.tr_mul(m);
                let mut y = y;
                for mut col in y.column_iter_mut() {
                    col -= &shift;
                }
                y
            }
            None => y,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Neighbor count.
    pub k: usize,
    /// Target dimension.
    pub d: usize,
    /// Optional PCA pre-reduction dimension.
    pub d_pca: Option<usize>,
    pub max_iters: usize,
    /// Stop when the relative change of the objective falls below this.
    pub rel_tol: f64,
    /// Scatter ridge, relative to `trace / dim`.
    pub ridge: f64,
    /// Whether a sample competes as its own neighbor.
    pub include_self: bool,
    pub seed: u64,
    /// `(class, sample)` whose similarity row is recorded every iteration.
    pub watch: Option<(usize, usize)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 5,
            d: 2,
            d_pca: None,
            max_iters: 30,
            rel_tol: 1e-6,
            ridge: 1e-8,
            include_self: true,
            seed: 0,
            watch: None,
        }
    }
}

impl TrainConfig {
    /// Checks the configuration against a dataset it will be trained on.
    pub fn validate_for(&self, ds: &LabeledDataset) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::NoIterations);
        }
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("k = {} < 2", self.k)));
        }
        if self.d == 0 {
            return Err(Error::InvalidConfig("d must be at least 1".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidConfig(format!("ridge {} < 0", self.ridge)));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!("rel_tol {}", self.rel_tol)));
        }
        let work_dim = match self.d_pca {
            Some(p) if p > ds.dim() => {
                return Err(Error::DimensionTooLarge {
                    requested: p,
                    available: ds.dim(),
                })
            }
            Some(p) => p,
            None => ds.dim(),
        };
        if self.d > work_dim {
            return Err(Error::DimensionTooLarge {
                requested: self.d,
                available: work_dim,
            });
        }
        let candidates = ds.min_class_size() - usize::from(!self.include_self);
        if self.k > candidates {
            return Err(Error::KTooLarge {
                k: self.k,
                candidates,
                class: None,
                sample: None,
            });
        }
        if let Some((c, j)) = self.watch {
            if c >= ds.n_classes() || j >= ds.class_index()[c].len() {
                return Err(Error::InvalidConfig(format!(
                    "watched sample ({c}, {j}) does not exist"
                )));
            }
        }
        Ok(())
    }
}

/// One completed iteration of the alternating fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "J")]
    pub objective: f64,
    pub embed_term: f64,
    pub penalty_term: f64,
    pub gamma_mean: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub seconds: f64,
}

/// Similarity row of one sample, recorded before the first and after each
/// iteration. `heat_kernel` holds its fixed input-space affinities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatchedSample {
    pub class: usize,
    pub sample: usize,
    pub snapshots: Vec<Vec<f64>>,
    pub heat_kernel: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<IterationRecord>,
    pub watched: Option<WatchedSample>,
    pub converged: bool,
}

impl TrainTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// `|J_p - J_{p-1}| / |J_{p-1}|` for every iteration after the first.
    pub fn relative_changes(&self) -> Vec<f64> {
        self.records
            .windows(2)
            .map(|w| relative_change(w[0].objective, w[1].objective))
            .collect()
    }

    /// Columns: iter, J, embed_term, penalty_term, gamma_mean, gamma_min,
    /// gamma_max, seconds.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.records.is_empty() {
            w.write_record([
                "iter",
                "J",
                "embed_term",
                "penalty_term",
                "gamma_mean",
                "gamma_min",
                "gamma_max",
                "seconds",
            ])?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<trace csv>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn relative_change(prev: f64, next: f64) -> f64 {
    let diff = (next - prev).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / prev.abs().max(f64::MIN_POSITIVE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_dataset_is_valid() {
        let ds = LabeledDataset::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), vec![0, 1]);
        assert!(ds.is_ok());
    }

    #[test]
    fn gap_in_labels_is_out_of_range() {
        let err = LabeledDataset::new(DMatrix::zeros(1, 2), vec![0, 2]).unwrap_err();
        assert!(matches!(
            err,
            Error::LabelOutOfRange {
                index: 1,
                label: 2,
                classes: 2
            }
        ));
    }

    #[test]
    fn nan_feature_is_rejected() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, f64::NAN, 2.0]);
        let err = LabeledDataset::new(x, vec![0, 1]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteFeature { row: 1, sample: 0 }));
    }

    #[test]
    fn declared_class_without_samples() {
        let err = LabeledDataset::with_classes(DMatrix::zeros(1, 2), vec![0, 0], 2).unwrap_err();
        assert!(matches!(err, Error::EmptyClass { class: 1 }));
    }

    #[test]
    fn inconsistent_partition_is_caught() {
        let ds = LabeledDataset::from_parts(
            DMatrix::zeros(1, 3),
            vec![0, 1, 0],
            vec![vec![0, 1], vec![2]],
        );
        assert!(matches!(
            validate_dataset(ds).unwrap_err(),
            Error::PartitionMismatch { index: 1 }
        ));
        let missing =
            LabeledDataset::from_parts(DMatrix::zeros(1, 3), vec![0, 1, 0], vec![vec![0], vec![1]]);
        assert!(matches!(
            validate_dataset(missing).unwrap_err(),
            Error::PartitionMismatch { index: 2 }
        ));
    }

    #[test]
    fn validation_is_idempotent() {
        let x = DMatrix::from_fn(3, 6, |i, j| (i * 7 + j) as f64 * 0.5);
        let ds = LabeledDataset::new(x, vec![2, 0, 1, 0, 2, 1]).unwrap();
        let again = validate_dataset(ds.clone()).unwrap();
        assert_eq!(ds, again);
        assert_eq!(ds.class_index(), &[vec![1, 3], vec![2, 5], vec![0, 4]]);
    }

    #[test]
    fn uniform_blocks_are_valid() {
        let s = SimilarityBlocks::uniform(&[3, 10]);
        assert!(s.is_valid(1e-12));
        assert_eq!(s.blocks[1][(4, 7)], 0.1);
        assert_eq!(s.max_row_support(), 10);
    }

    #[test]
    fn composed_projection_and_transform() {
        let p = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let w = DMatrix::from_row_slice(2, 1, &[2.0, -1.0]);
        let mean = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let model = ProjectionModel::new(Method::Slnp, Some(p), Some(mean), w, vec![0.0]).unwrap();
        assert_eq!(model.composed, DMatrix::from_row_slice(3, 1, &[2.0, -1.0, 0.0]));
        let x = DMatrix::from_row_slice(3, 1, &[3.0, 2.0, 9.0]);
        let y = model.transform(&x).unwrap();
        assert_eq!(y[(0, 0)], 2.0 * 2.0 - 1.0);
        assert!(model.transform(&DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn config_checks() {
        let ds = LabeledDataset::new(DMatrix::zeros(4, 6), vec![0, 0, 0, 1, 1, 1]).unwrap();
        let mut cfg = TrainConfig {
            k: 3,
            d: 2,
            ..TrainConfig::default()
        };
        assert!(cfg.validate_for(&ds).is_ok());
        cfg.include_self = false;
        assert!(matches!(cfg.validate_for(&ds), Err(Error::KTooLarge { .. })));
        cfg.include_self = true;
        cfg.d = 0;
        assert!(cfg.validate_for(&ds).is_err());
        cfg.d = 3;
        cfg.d_pca = Some(2);
        assert!(matches!(
            cfg.validate_for(&ds),
            Err(Error::DimensionTooLarge { .. })
        ));
        cfg.d_pca = None;
        cfg.max_iters = 0;
        assert!(matches!(cfg.validate_for(&ds), Err(Error::NoIterations)));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("mfa".parse::<Method>().is_err());
    }
}
