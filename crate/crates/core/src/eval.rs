//! Train/test experiments: 1-NN classification, recognition rates,
//! multi-seed aggregation and parameter sweeps.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{lda_fit, lfda_fit, lpp_fit, AffinityParams};
use crate::data_io::subsample_per_class;
use crate::eigensolve::{pca_fit, pca_of};
use crate::error::{Error, Result};
use crate::slnp;
use crate::types::{LabeledDataset, Method, ProjectionModel, RegularizationMatrix, TrainConfig, TrainTrace};

fn check_dims(train: &DMatrix<f64>, query: &DMatrix<f64>) -> Result<()> {
    if train.nrows() != query.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "training embedding has {} rows, queries have {}",
            train.nrows(),
            query.nrows()
        )));
    }
    Ok(())
}

fn nearest(train: &DMatrix<f64>, q: nalgebra::DVectorView<'_, f64>, skip: Option<usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, col) in train.column_iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let d = (col - q).norm_squared();
        // strict comparison keeps the lowest index on ties
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// 1-NN labels of the columns of `query_emb` by Euclidean distance; ties go
/// to the lower training index.
pub fn knn_classify(
    train_emb: &DMatrix<f64>,
    train_labels: &[usize],
    query_emb: &DMatrix<f64>,
) -> Result<Vec<usize>> {
    if train_emb.ncols() == 0 {
        return Err(Error::EmptyTrainSet);
    }
    if train_labels.len() != train_emb.ncols() {
        return Err(Error::LengthMismatch {
            left: train_emb.ncols(),
            right: train_labels.len(),
        });
    }
    check_dims(train_emb, query_emb)?;
    Ok((0..query_emb.ncols())
        .into_par_iter()
        .map(|j| train_labels[nearest(train_emb, query_emb.column(j), None).unwrap_or(0)])
        .collect())
}

/// Leave-one-out 1-NN: every column is classified against all others.
pub fn knn_classify_loo(emb: &DMatrix<f64>, labels: &[usize]) -> Result<Vec<usize>> {
    if emb.ncols() < 2 {
        return Err(Error::EmptyTrainSet);
    }
    if labels.len() != emb.ncols() {
        return Err(Error::LengthMismatch {
            left: emb.ncols(),
            right: labels.len(),
        });
    }
    Ok((0..emb.ncols())
        .into_par_iter()
        .map(|j| labels[nearest(emb, emb.column(j), Some(j)).unwrap_or(0)])
        .collect())
}

/// Percentage of matching entries.
pub fn recognition_rate(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / pred.len() as f64)
}

/// Mean regularization parameter of one class.
pub fn average_gamma(r: &RegularizationMatrix, class_id: usize) -> Result<f64> {
    let g = r.gammas.get(class_id).ok_or(Error::UnknownClass(class_id))?;
    if g.is_empty() {
        return Err(Error::Empty);
    }
    Ok(g.iter().sum::<f64>() / g.len() as f64)
}

/// Settings shared by every method of an experiment. `train.d_pca`, when
/// set, pre-reduces the input of the supervised methods; PCA itself always
/// projects straight to `train.d`. LDA uses at most `C − 1` dimensions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    /// Heat-kernel graph of LPP and LFDA.
    pub affinity: AffinityParams,
}

/// Fits one method on a training set. The trace is present for SLNP only.
pub fn fit_method(
    train: &LabeledDataset,
    method: Method,
    cfg: &ExperimentConfig,
) -> Result<(ProjectionModel, Option<TrainTrace>)> {
    let t = &cfg.train;
    if method == Method::Slnp {
        let fit = slnp::fit(train, t)?;
        return Ok((fit.model, Some(fit.trace)));
    }
    if method == Method::Pca {
        return Ok((pca_fit(train, t.d)?, None));
    }
    let (work, pca) = match t.d_pca {
        Some(p) => {
            let pca = pca_of(train.features(), p)?;
            (train.with_features(pca.transform(train.features())?)?, Some(pca))
        }
        None => (train.clone(), None),
    };
    let base = match method {
        Method::Lda => lda_fit(&work, t.d.min(work.n_classes().saturating_sub(1)).max(1), t.ridge)?,
        Method::Lpp => lpp_fit(&work, t.d, &cfg.affinity, t.ridge)?,
        Method::Lfda => lfda_fit(&work, t.d, &cfg.affinity, t.ridge)?,
        Method::Slnp | Method::Pca => unreachable!(),
    };
    let model = match pca {
        Some(p) => ProjectionModel::new(method, Some(p.w_slnp), p.mean, base.w_slnp, base.eigenvalues)?,
        None => base,
    };
    Ok((model, None))
}

/// Aggregated result of one method over several seeded splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: Method,
    pub config: ExperimentConfig,
    pub n_per_class: usize,
    pub seeds: Vec<u64>,
    /// Recognition rate (percent) per seed, in seed order.
    pub rates: Vec<f64>,
    pub mean_rate: f64,
    /// Sample standard deviation (`n − 1`); 0 for a single seed.
    pub std_rate: f64,
    /// Per-class rate averaged over seeds; `None` for classes that never
    /// appear in a test split.
    pub per_class_rates: Vec<Option<f64>>,
    /// Wall-clock time of the whole experiment.
    pub seconds: f64,
    /// Training indices per seed.
    pub train_indices: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<TrainTrace>,
}

/// Column order of [`ExperimentReport::csv_row`].
pub const REPORT_CSV_HEADER: [&str; 9] = [
    "method",
    "n_per_class",
    "K",
    "d_pca",
    "d",
    "seed_count",
    "mean_rate",
    "std_rate",
    "seconds",
];

impl ExperimentReport {
    /// `d_pca` is empty when no pre-reduction ran.
    pub fn csv_row(&self) -> [String; 9] {
        let t = &self.config.train;
        [
            self.method.to_string(),
            self.n_per_class.to_string(),
            t.k.to_string(),
            t.d_pca.map(|p| p.to_string()).unwrap_or_default(),
            t.d.to_string(),
            self.seeds.len().to_string(),
            self.mean_rate.to_string(),
            self.std_rate.to_string(),
            self.seconds.to_string(),
        ]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Writes reports as CSV rows under [`REPORT_CSV_HEADER`].
pub fn write_reports_csv<W: std::io::Write>(reports: &[ExperimentReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_row())?;
    }
    w.flush().map_err(|e| Error::io("<report csv>", e))?;
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

struct SeedOutcome {
    rate: f64,
    class_hits: Vec<(usize, usize)>,
    train_indices: Vec<usize>,
    trace: Option<TrainTrace>,
}

fn run_seed(
    ds: &LabeledDataset,
    method: Method,
    cfg: &ExperimentConfig,
    n_per_class: usize,
    seed: u64,
) -> Result<SeedOutcome> {
    let split = subsample_per_class(ds, n_per_class, seed)?;
    let mut cfg = cfg.clone();
    cfg.train.seed = seed;
    let (model, trace) = fit_method(&split.train, method, &cfg)?;
    let train_emb = model.transform(split.train.features())?;
    let test_emb = model.transform(split.test.features())?;
    let pred = knn_classify(&train_emb, split.train.labels(), &test_emb)?;
    let truth = split.test.labels();
    let rate = recognition_rate(&pred, truth)?;
    let mut class_hits = vec![(0, 0); ds.n_classes()];
    for (p, t) in pred.iter().zip(truth) {
        class_hits[*t].1 += 1;
        if p == t {
            class_hits[*t].0 += 1;
        }
    }
    Ok(SeedOutcome {
        rate,
        class_hits,
        train_indices: split.train_indices,
        trace,
    })
}

/// Repeats subsample → fit → embed → 1-NN for each seed (in parallel) and
/// aggregates. A failing seed aborts the experiment with the seed attached.
pub fn run_experiment(
    ds: &LabeledDataset,
    method: Method,
    cfg: &ExperimentConfig,
    n_per_class: usize,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let started = Instant::now();
    let outcomes: Vec<Result<SeedOutcome>> = seeds
        .par_iter()
        .map(|&seed| run_seed(ds, method, cfg, n_per_class, seed))
        .collect();
    let mut done = Vec::with_capacity(seeds.len());
    for (seed, o) in seeds.iter().zip(outcomes) {
        done.push(o.map_err(|e| Error::Seed {
            seed: *seed,
            source: Box::new(e),
        })?);
    }
    let rates: Vec<f64> = done.iter().map(|o| o.rate).collect();
    let (mean_rate, std_rate) = mean_std(&rates);
    let per_class_rates = (0..ds.n_classes())
        .map(|c| {
            let seen: Vec<f64> = done
                .iter()
                .filter(|o| o.class_hits[c].1 > 0)
                .map(|o| 100.0 * o.class_hits[c].0 as f64 / o.class_hits[c].1 as f64)
                .collect();
            (!seen.is_empty()).then(|| seen.iter().sum::<f64>() / seen.len() as f64)
        })
        .collect();
    let mut train_indices = Vec::with_capacity(done.len());
    let mut traces = Vec::new();
    for o in done {
        train_indices.push(o.train_indices);
        traces.extend(o.trace);
    }
    Ok(ExperimentReport {
        method,
        config: cfg.clone(),
        n_per_class,
        seeds: seeds.to_vec(),
        rates,
        mean_rate,
        std_rate,
        per_class_rates,
        seconds: started.elapsed().as_secs_f64(),
        train_indices,
        traces,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    K,
    D,
    NPerClass,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "k" => Ok(Self::K),
            "d" => Ok(Self::D),
            "n_per_class" | "n-per-class" | "n" => Ok(Self::NPerClass),
            _ => Err(Error::InvalidConfig(format!("unknown sweep axis {s:?}"))),
        }
    }
}

/// One experiment per value of `axis`, all on the same seeds (hence the
/// same splits whenever `n_per_class` is fixed).
pub fn sweep(
    ds: &LabeledDataset,
    method: Method,
    template: &ExperimentConfig,
    n_per_class: usize,
    axis: SweepAxis,
    values: &[usize],
    seeds: &[u64],
) -> Result<Vec<ExperimentReport>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    values
        .par_iter()
        .map(|&v| {
            let mut cfg = template.clone();
            let mut n = n_per_class;
            match axis {
                SweepAxis::K => cfg.train.k = v,
                SweepAxis::D => cfg.train.d = v,
                SweepAxis::NPerClass => n = v,
            }
            run_experiment(ds, method, &cfg, n, seeds)
        })
        .collect()
}
