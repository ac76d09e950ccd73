//! Dense symmetric eigen decomposition, the generalized symmetric-definite
//! problem `A w = λ B w`, total scatter and PCA.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::types::{LabeledDataset, Method, ProjectionModel};

/// A symmetric scatter matrix plus the absolute ridge added to its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterMatrix {
    pub matrix: DMatrix<f64>,
    pub ridge_applied: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    UnitNorm,
    /// `V^T B V = I` for the `B` of the generalized problem.
    BOrthonormal,
}

/// Eigenpairs with ascending values; column `i` of `vectors` pairs with
/// `values[i]`. Each vector's largest-magnitude component is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
    pub normalization: Normalization,
}

impl EigenResult {
    /// Keeps the `d` largest eigenpairs, largest first.
    pub fn top(&self, d: usize) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.values.len();
        let idx: Vec<usize> = (n - d.min(n)..n).rev().collect();
        (
            idx.iter().map(|&i| self.values[i]).collect(),
            self.vectors.select_columns(&idx),
        )
    }
}

const SYM_TOL: f64 = 1e-10;
const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITERS: usize = 10_000;

/// Sum of centered outer products of the columns of `x`, plus
/// `ridge · tr/dim` on the diagonal (`ridge · 1` when the trace is zero).
pub fn scatter_of(x: &DMatrix<f64>, ridge: f64) -> Result<ScatterMatrix> {
    if x.ncols() < 2 {
        return Err(Error::SingleSample);
    }
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut s = &centered * centered.transpose();
    symmetrize(&mut s);
    let ridge_applied = ridge * trace_scale(&s);
    for i in 0..s.nrows() {
        s[(i, i)] += ridge_applied;
    }
    Ok(ScatterMatrix {
        matrix: s,
        ridge_applied,
    })
}

/// Total scatter of a dataset's samples.
pub fn total_scatter(ds: &LabeledDataset, ridge: f64) -> Result<ScatterMatrix> {
    scatter_of(ds.features(), ridge)
}

/// `tr(m)/dim`, or 1 when that is not positive.
pub(crate) fn trace_scale(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().max(1);
    let t = m.trace() / n as f64;
    if t > 0.0 && t.is_finite() {
        t
    } else {
        1.0
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} matrix is not square",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = asymmetry(a);
    let scale = a.amax().max(1.0);
    if asym > SYM_TOL * scale || !asym.is_finite() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full spectrum of a symmetric matrix, ascending, orthonormal vectors.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<EigenResult> {
    check_symmetric(a)?;
    let mut sym = a.clone();
    symmetrize(&mut sym);
    let n = sym.nrows();
    let eig = SymmetricEigen::try_new(sym, EIG_EPS, EIG_MAX_ITERS).ok_or(Error::NoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(&order);
    fix_signs(&mut vectors);
    Ok(EigenResult {
        values,
        vectors,
        normalization: Normalization::UnitNorm,
    })
}

/// All eigenpairs of `A w = λ B w` for symmetric `A` and symmetric positive
/// definite `B`, via `B = L L^T` and the symmetric problem
/// `L^{-1} A L^{-T}`. Vectors are `B`-orthonormal, values ascending.
pub fn generalized_eig(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<EigenResult> {
    check_symmetric(a)?;
    check_symmetric(b)?;
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "A is {0}x{0}, B is {1}x{1}",
            a.nrows(),
            b.nrows()
        )));
    }
    let mut bs = b.clone();
    symmetrize(&mut bs);
    let chol = Cholesky::new(bs).ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let mut a_sym = a.clone();
    symmetrize(&mut a_sym);
    // C = L^{-1} A L^{-T}
    let left = l
        .solve_lower_triangular(&a_sym)
        .ok_or(Error::NotPositiveDefinite)?;
    let mut c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::NotPositiveDefinite)?;
    symmetrize(&mut c);
    let inner = sym_eig(&c)?;
    let mut vectors = l
        .tr_solve_lower_triangular(&inner.vectors)
        .ok_or(Error::NotPositiveDefinite)?;
    fix_signs(&mut vectors);
    Ok(EigenResult {
        values: inner.values,
        vectors,
        normalization: Normalization::BOrthonormal,
    })
}

/// The `d` smallest generalized eigenpairs, ascending.
pub fn generalized_eig_smallest(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    d: usize,
) -> Result<EigenResult> {
    if d > a.nrows() {
        return Err(Error::DimensionTooLarge {
            requested: d,
            available: a.nrows(),
        });
    }
    let full = generalized_eig(a, b)?;
    Ok(EigenResult {
        values: full.values.rows(0, d).into_owned(),
        vectors: full.vectors.columns(0, d).into_owned(),
        normalization: Normalization::BOrthonormal,
    })
}

/// Principal components: the `d_pca` leading eigenvectors of the sample
/// covariance, in descending variance order. The model stores the mean.
pub fn pca_fit(ds: &LabeledDataset, d_pca: usize) -> Result<ProjectionModel> {
    pca_of(ds.features(), d_pca)
}

pub(crate) fn pca_of(x: &DMatrix<f64>, d_pca: usize) -> Result<ProjectionModel> {
    if d_pca > x.nrows() {
        return Err(Error::DimensionTooLarge {
            requested: d_pca,
            available: x.nrows(),
        });
    }
    let n = x.ncols();
    let scatter = scatter_of(x, 0.0)?;
    let cov = scatter.matrix / n as f64;
    let eig = sym_eig(&cov)?;
    let (values, vectors) = eig.top(d_pca);
    ProjectionModel::new(Method::Pca, None, Some(x.column_mean()), vectors, values)
}
