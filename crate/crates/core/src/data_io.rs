//! Dataset loading (IDX, CSV, binary PGM listed in a manifest), image
//! down-sampling, seeded splits and the two-feature toy generator.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::types::LabeledDataset;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Maps arbitrary ordered labels to `0..C` in ascending order.
pub fn dense_labels<T: Ord + Clone>(raw: &[T]) -> (Vec<usize>, Vec<T>) {
    let mut map = BTreeMap::new();
    for l in raw {
        map.entry(l.clone()).or_insert(0usize);
    }
    for (i, v) in map.values_mut().enumerate() {
        *v = i;
    }
    let labels = raw.iter().map(|l| map[l]).collect();
    (labels, map.into_keys().collect())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile {
            path: path.to_path_buf(),
        })
}

/// Raw unsigned-byte images from an IDX file.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let len = count * rows * cols;
    let pixels = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::TruncatedFile {
            path: path.to_path_buf(),
        })?
        .to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    Ok(bytes
        .get(8..8 + count)
        .ok_or_else(|| Error::TruncatedFile {
            path: path.to_path_buf(),
        })?
        .to_vec())
}

/// Writes an IDX image file (magic 0x803, count, rows, cols, bytes).
pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads an IDX image/label pair; pixels scaled to `[0, 1]`, one column per
/// image (row-major pixels), labels remapped densely.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = read_idx_images(images_path)?;
    let raw_labels = read_idx_labels(labels_path)?;
    if images.count != raw_labels.len() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: raw_labels.len(),
        });
    }
    let dim = images.rows * images.cols;
    let features = DMatrix::from_iterator(
        dim,
        images.count,
        images.pixels.iter().map(|&p| f64::from(p) / 255.0),
    );
    let (labels, _) = dense_labels(&raw_labels);
    LabeledDataset::new(features, labels)
}

/// Finds the `*images*idx3*` / `*labels*idx1*` pair inside `dir`.
pub fn find_idx_pair(dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let mut images = None;
    let mut labels = None;
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    names.sort();
    for p in names {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.contains("images") && name.contains("idx3") && images.is_none() {
            images = Some(p);
        } else if name.contains("labels") && name.contains("idx1") && labels.is_none() {
            labels = Some(p);
        }
    }
    match (images, labels) {
        (Some(i), Some(l)) => Ok((i, l)),
        _ => Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no *images*idx3* / *labels*idx1* pair"),
        )),
    }
}

/// [`load_idx`] on the pair found by [`find_idx_pair`].
pub fn load_idx_dir(dir: &Path) -> Result<LabeledDataset> {
    let (i, l) = find_idx_pair(dir)?;
    load_idx(&i, &l)
}

/// Area-average resampling of a row-major `width × height` image.
pub fn resize_area(
    pixels: &[f64],
    (width, height): (usize, usize),
    (new_w, new_h): (usize, usize),
) -> Vec<f64> {
    let sx = width as f64 / new_w as f64;
    let sy = height as f64 / new_h as f64;
    let mut out = Vec::with_capacity(new_w * new_h);
    for oy in 0..new_h {
        let (y0, y1) = (oy as f64 * sy, (oy + 1) as f64 * sy);
        for ox in 0..new_w {
            let (x0, x1) = (ox as f64 * sx, (ox + 1) as f64 * sx);
            let mut acc = 0.0;
            for iy in (y0.floor() as usize)..(y1.ceil() as usize).min(height) {
                let wy = (y1.min(iy as f64 + 1.0) - y0.max(iy as f64)).max(0.0);
                if wy == 0.0 {
                    continue;
                }
                for ix in (x0.floor() as usize)..(x1.ceil() as usize).min(width) {
                    let wx = (x1.min(ix as f64 + 1.0) - x0.max(ix as f64)).max(0.0);
                    acc += wx * wy * pixels[iy * width + ix];
                }
            }
            out.push(acc / (sx * sy));
        }
    }
    out
}

/// Down-samples every column of an image dataset by area averaging.
pub fn downsample_dataset(
    ds: &LabeledDataset,
    from: (usize, usize),
    to: (usize, usize),
) -> Result<LabeledDataset> {
    if from.0 * from.1 != ds.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} images but {} features",
            from.0,
            from.1,
            ds.dim()
        )));
    }
    if to.0 == 0 || to.1 == 0 {
        return Err(Error::InvalidConfig("target size must be positive".into()));
    }
    let mut out = DMatrix::zeros(to.0 * to.1, ds.len());
    for (j, col) in ds.features().column_iter().enumerate() {
        let src: Vec<f64> = col.iter().copied().collect();
        let dst = resize_area(&src, from, to);
        out.column_mut(j).copy_from_slice(&dst);
    }
    ds.with_features(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum LabelKey {
    Int(i64),
    Text(String),
}

/// Loads a numeric CSV with a header row. `label_column` holds the class
/// label (any text; remapped densely), every other column is a feature.
pub fn load_csv(path: &Path, label_column: &str) -> Result<LabeledDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let width = headers.len();
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::RaggedRow {
                line,
                expected: width,
                found: record.len(),
            });
        }
        for (i, cell) in record.iter().enumerate() {
            if i == label_idx {
                raw_labels.push(match cell.parse::<i64>() {
                    Ok(v) => LabelKey::Int(v),
                    Err(_) => LabelKey::Text(cell.to_string()),
                });
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                    line,
                    column: headers[i].to_string(),
                    value: cell.to_string(),
                })?;
                values.push(v);
            }
        }
    }
    let n = raw_labels.len();
    let features = DMatrix::from_vec(width - 1, n, values);
    let (labels, _) = dense_labels(&raw_labels);
    LabeledDataset::new(features, labels)
}

/// Image list for folder-style datasets: one `path<TAB>label` per line,
/// `#` starts a comment, paths relative to `root`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<(PathBuf, i64)>,
    /// Expected `(width, height)`; `None` accepts any size.
    pub geometry: Option<(usize, usize)>,
}

impl DatasetManifest {
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(p), Some(l), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::BadManifest {
                    line: i + 1,
                    reason: "expected `path<TAB>label`".into(),
                });
            };
            let label: i64 = l.trim().parse().map_err(|_| Error::BadManifest {
                line: i + 1,
                reason: format!("label {l:?} is not an integer"),
            })?;
            let path = PathBuf::from(p.trim());
            if !seen.insert(path.clone()) {
                return Err(Error::BadManifest {
                    line: i + 1,
                    reason: format!("duplicate path {}", path.display()),
                });
            }
            entries.push((path, label));
        }
        Ok(Self {
            root: root.into(),
            entries,
            geometry: None,
        })
    }

    /// Reads a manifest file; entries are relative to its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }
}

/// Decoded binary PGM (P5): width, height and pixels scaled to `[0, 1]`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = read_file(path)?;
    let bad = |reason: &str| Error::BadPgmHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("header ended early"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(bad("not a binary (P5) PGM"));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|v| *v > 0)
            .ok_or_else(|| bad(&format!("invalid {what} {s:?}")))
    };
    let width = parse(&tokens[1], "width")?;
    let height = parse(&tokens[2], "height")?;
    let maxval = parse(&tokens[3], "maxval")?;
    if maxval > 65535 {
        return Err(bad("maxval above 65535"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let raster = bytes
        .get(pos..pos + n * bytes_per)
        .ok_or_else(|| Error::TruncatedFile {
            path: path.to_path_buf(),
        })?;
    let scale = maxval as f64;
    let pixels = if bytes_per == 1 {
        raster.iter().map(|&b| f64::from(b) / scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / scale)
            .collect()
    };
    Ok((width, height, pixels))
}

/// Writes an 8-bit binary PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(f, "P5\n{width} {height}\n255\n").map_err(|e| Error::io(path, e))?;
    f.write_all(pixels).map_err(|e| Error::io(path, e))
}

/// Loads every image of a manifest, optionally resized by area averaging.
/// Without a target size all images must share one geometry.
pub fn load_pgm_manifest(
    manifest: &DatasetManifest,
    resize_to: Option<(usize, usize)>,
) -> Result<LabeledDataset> {
    if manifest.entries.is_empty() {
        return Err(Error::Empty);
    }
    let mut expected = manifest.geometry;
    let mut columns = Vec::with_capacity(manifest.entries.len());
    for (rel, _) in &manifest.entries {
        let path = manifest.root.join(rel);
        let (w, h, pixels) = read_pgm(&path)?;
        let pixels = match resize_to {
            Some(target) => {
                if let Some(g) = manifest.geometry {
                    if g != (w, h) {
                        return Err(Error::GeometryMismatch {
                            path,
                            expected: g,
                            found: (w, h),
                        });
                    }
                }
                resize_area(&pixels, (w, h), target)
            }
            None => {
                match expected {
                    Some(g) if g != (w, h) => {
                        return Err(Error::GeometryMismatch {
                            path,
                            expected: g,
                            found: (w, h),
                        })
                    }
                    _ => expected = Some((w, h)),
                }
                pixels
            }
        };
        columns.push(pixels);
    }
    let dim = columns[0].len();
    let features = DMatrix::from_iterator(dim, columns.len(), columns.into_iter().flatten());
    let raw: Vec<i64> = manifest.entries.iter().map(|(_, l)| *l).collect();
    let (labels, _) = dense_labels(&raw);
    LabeledDataset::new(features, labels)
}

/// Seeded random subset of `n` samples (indices kept in ascending order).
pub fn random_subset(ds: &LabeledDataset, n: usize, seed: u64) -> Result<LabeledDataset> {
    if n > ds.len() {
        return Err(Error::DimensionTooLarge {
            requested: n,
            available: ds.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, ds.len(), n).into_vec();
    idx.sort_unstable();
    Ok(ds.select(&idx))
}

/// A train/test partition; the index vectors refer to the source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Draws `n_per_class` training samples from every class without
/// replacement; everything else is the test set. The test set keeps the
/// full label space and may have empty classes.
pub fn subsample_per_class(ds: &LabeledDataset, n_per_class: usize, seed: u64) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; ds.len()];
    for (c, members) in ds.class_index().iter().enumerate() {
        if n_per_class > members.len() {
            return Err(Error::NotEnoughSamples {
                class: c,
                available: members.len(),
                requested: n_per_class,
            });
        }
        for pick in sample(&mut rng, members.len(), n_per_class) {
            in_train[members[pick]] = true;
        }
    }
    let train_indices: Vec<usize> = (0..ds.len()).filter(|&i| in_train[i]).collect();
    let test_indices: Vec<usize> = (0..ds.len()).filter(|&i| !in_train[i]).collect();
    Ok(Split {
        train: ds.select(&train_indices),
        test: ds.select(&test_indices),
        train_indices,
        test_indices,
    })
}

/// Two classes in two features. Row 0 is a shared high-variance nuisance
/// feature (normal, sd `10 · noise_scale`); row 1 separates the classes:
/// uniform on `[0, 1]` for class 0 and `[5, 6]` for class 1.
pub fn synth_two_feature_toy(n_per_class: usize, noise_scale: f64, seed: u64) -> Result<LabeledDataset> {
    if n_per_class < 2 {
        return Err(Error::InvalidConfig("toy data needs at least 2 samples per class".into()));
    }
    let sd = 10.0 * noise_scale;
    let nuisance = Normal::new(0.0, sd)
        .map_err(|e| Error::InvalidConfig(format!("noise scale {noise_scale}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * n_per_class;
    let mut x = DMatrix::zeros(2, n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let class = j / n_per_class;
        x[(0, j)] = nuisance.sample(&mut rng);
        x[(1, j)] = 5.0 * class as f64 + rng.random::<f64>();
        labels.push(class);
    }
    LabeledDataset::new(x, labels)
}
