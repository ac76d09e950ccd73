//! Supervised linear dimensionality reduction with learned within-class
//! neighborhoods (SLNP), plus the PCA/LDA/LPP/LFDA baselines, dataset
//! loaders and the 1-NN evaluation harness.
//!
//! Samples are always stored column-wise: a `D × N` matrix holds `N`
//! samples of dimension `D`.

pub mod baselines;
pub mod data_io;
pub mod eigensolve;
pub mod error;
pub mod eval;
pub mod similarity;
pub mod slnp;
pub mod types;

pub use error::{Error, ErrorKind, Result};
pub use eval::{ExperimentConfig, ExperimentReport, SweepAxis};
pub use types::{
    IterationRecord, LabeledDataset, Method, ProjectionModel, RegularizationMatrix,
    SimilarityBlocks, TrainConfig, TrainTrace, WatchedSample,
};

pub use nalgebra;
