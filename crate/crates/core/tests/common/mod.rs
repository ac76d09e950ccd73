#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slnp_core::data_io::{downsample_dataset, load_idx_dir, random_subset};
use slnp_core::nalgebra::DMatrix;
use slnp_core::LabeledDataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sorted candidate distances plus a neighbor count. Half of the rows get a
/// gap after the K-th entry, the rest are plain uniform draws; a few
/// contain duplicate or zero distances.
pub fn random_row(rng: &mut ChaCha8Rng) -> (Vec<f64>, usize) {
    let n = rng.random_range(3..=50);
    let k = rng.random_range(2..=9usize.min(n));
    let scale = [0.01, 1.0, 10.0][rng.random_range(0..3)];
    let mut d: Vec<f64> = (0..n).map(|_| scale * rng.random::<f64>()).collect();
    if rng.random_bool(0.2) {
        d[0] = 0.0;
    }
    if rng.random_bool(0.1) && n > 2 {
        d[2] = d[1];
    }
    d.sort_by(f64::total_cmp);
    if rng.random_bool(0.5) {
        let gap = scale * rng.random_range(1.0..50.0);
        d.iter_mut().skip(k).for_each(|v| *v += gap);
    }
    (d, k)
}

/// Error-free transformation `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `½ (K − 1) sqrt(Σ d²)` in double-double arithmetic.
pub fn gamma_star_dd(near: &[f64], k: usize) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for &d in near {
        let p = d * d;
        let pe = d.mul_add(d, -p);
        let (s, e) = two_sum(hi, p);
        hi = s;
        lo += e + pe;
    }
    let (hi, lo) = two_sum(hi, lo);
    if hi == 0.0 {
        return 0.0;
    }
    let r = hi.sqrt();
    let r = r + (hi - r * r + lo) / (2.0 * r);
    0.5 * (k as f64 - 1.0) * r
}

/// Euclidean projection of `-q` onto the simplex by trying every support
/// set and keeping the closest feasible point.
pub fn brute_force_simplex(q: &[f64]) -> Vec<f64> {
    let n = q.len();
    assert!(n <= 16);
    let v: Vec<f64> = q.iter().map(|x| -x).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let theta = (members.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / members.len() as f64;
        let mut s = vec![0.0; n];
        let mut ok = true;
        for &i in &members {
            s[i] = v[i] - theta;
            ok &= s[i] >= -1e-15;
        }
        if !ok {
            continue;
        }
        let dist: f64 = s.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
            best = Some((dist, s));
        }
    }
    best.unwrap().1
}

/// `½ Σ_ij w_ij (x_i − x_j)(x_i − x_j)^T` by explicit double loop.
pub fn double_loop_scatter(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = x.nrows();
    let mut out = DMatrix::zeros(dim, dim);
    for i in 0..x.ncols() {
        for j in 0..x.ncols() {
            let diff = x.column(i) - x.column(j);
            out += &diff * diff.transpose() * (0.5 * w[(i, j)]);
        }
    }
    out
}

pub fn brute_sq_dists(y: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(y.ncols(), y.ncols(), |i, j| (y.column(i) - y.column(j)).norm_squared())
}

/// Random dataset with `classes` classes of random sizes in
/// `min_n..=max_n`, each class shifted along its own random direction.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    classes: usize,
    min_n: usize,
    max_n: usize,
    dim: usize,
) -> LabeledDataset {
    let sizes: Vec<usize> = (0..classes).map(|_| rng.random_range(min_n..=max_n)).collect();
    let n: usize = sizes.iter().sum();
    let mut x = DMatrix::zeros(dim, n);
    let mut labels = Vec::with_capacity(n);
    let mut col = 0;
    for (c, &size) in sizes.iter().enumerate() {
        let centre: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        for _ in 0..size {
            for r in 0..dim {
                x[(r, col)] = centre[r] + rng.random_range(-1.0..1.0);
            }
            labels.push(c);
            col += 1;
        }
    }
    // shuffle columns so classes are interleaved
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let xs = DMatrix::from_fn(dim, n, |r, j| x[(r, perm[j])]);
    let ls = perm.iter().map(|&p| labels[p]).collect();
    LabeledDataset::with_classes(xs, ls, classes).unwrap()
}

/// Directory holding `mnist/`: `SLNP_DATA_DIR` or `<workspace>/data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os("SLNP_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// 6000 random MNIST digits down-sampled to 14×14, or `None` when the IDX
/// files are absent.
pub fn mnist_subset() -> Option<LabeledDataset> {
    let full = load_idx_dir(&data_dir().join("mnist")).ok()?;
    let subset = random_subset(&full, 6000.min(full.len()), 0).ok()?;
    Some(downsample_dataset(&subset, (28, 28), (14, 14)).unwrap())
}
