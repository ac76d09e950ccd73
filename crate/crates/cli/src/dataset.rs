use std::path::{Path, PathBuf};

use slnp_core::data_io::{
    downsample_dataset, load_csv, load_idx_dir, load_pgm_manifest, random_subset,
    synth_two_feature_toy, DatasetManifest,
};
use slnp_core::LabeledDataset;

use crate::CliError;

/// Samples per class of the synthetic toy when `toy` carries no count.
pub const TOY_DEFAULT_PER_CLASS: usize = 50;

/// Parsed `--dataset` value.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Directory holding an `*images*idx3*` / `*labels*idx1*` pair.
    Idx(PathBuf),
    Csv { path: PathBuf, label: String },
    /// Tab-separated list of PGM images and labels.
    Manifest(PathBuf),
    Toy { per_class: usize },
}

impl DatasetSpec {
    /// Accepts `idx:DIR`, `csv:FILE[:LABEL]`, `manifest:FILE` and `toy[:N]`.
    /// Relative paths resolve against `data_root` when given.
    pub fn parse(s: &str, data_root: Option<&Path>) -> Result<Self, CliError> {
        let resolve = |p: &str| -> Result<PathBuf, CliError> {
            if p.is_empty() {
                return Err(CliError::Usage(format!("dataset {s:?} has no path")));
            }
            let p = Path::new(p);
            Ok(match data_root {
                Some(root) if p.is_relative() => root.join(p),
                _ => p.to_path_buf(),
            })
        };
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "idx" => Ok(DatasetSpec::Idx(resolve(rest)?)),
            "manifest" => Ok(DatasetSpec::Manifest(resolve(rest)?)),
            "csv" => {
                let (path, label) = match rest.rsplit_once(':') {
                    Some((p, l)) if !l.contains(['/', '\\']) && !p.is_empty() => (p, l),
                    _ => (rest, "label"),
                };
                Ok(DatasetSpec::Csv {
                    path: resolve(path)?,
                    label: label.to_string(),
                })
            }
            "toy" => {
                let per_class = if rest.is_empty() {
                    TOY_DEFAULT_PER_CLASS
                } else {
                    rest.parse()
                        .map_err(|_| CliError::Usage(format!("bad toy sample count {rest:?}")))?
                };
                Ok(DatasetSpec::Toy { per_class })
            }
            _ => Err(CliError::Usage(format!(
                "unknown dataset kind {kind:?} (expected idx:, csv:, manifest: or toy)"
            ))),
        }
    }
}

/// Parses `WxH`.
pub fn parse_geometry(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("bad size {s:?}, expected WxH"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// Loads the dataset, then applies the optional resize and seeded subset.
/// Non-manifest images are taken to be square when resizing.
pub fn load(
    spec: &DatasetSpec,
    resize: Option<(usize, usize)>,
    subset: Option<usize>,
    toy_noise: f64,
) -> Result<LabeledDataset, CliError> {
    let ds = match spec {
        DatasetSpec::Idx(dir) => load_idx_dir(dir)?,
        DatasetSpec::Csv { path, label } => load_csv(path, label)?,
        DatasetSpec::Manifest(path) => {
            let m = DatasetManifest::from_file(path)?;
            return finish(load_pgm_manifest(&m, resize)?, subset);
        }
        DatasetSpec::Toy { per_class } => synth_two_feature_toy(*per_class, toy_noise, 0)?,
    };
    let ds = match resize {
        Some(to) => {
            let side = (ds.dim() as f64).sqrt().round() as usize;
            if side * side != ds.dim() {
                return Err(slnp_core::Error::ShapeMismatch(format!(
                    "cannot resize {} features as a square image",
                    ds.dim()
                ))
                .into());
            }
            downsample_dataset(&ds, (side, side), to)?
        }
        None => ds,
    };
    finish(ds, subset)
}

fn finish(ds: LabeledDataset, subset: Option<usize>) -> Result<LabeledDataset, CliError> {
    Ok(match subset {
        Some(n) => random_subset(&ds, n, 0)?,
        None => ds,
    })
}
