//! Numerical linear algebra: symmetric eigendecomposition (dense and
//! iterative), spectral embeddings, Kronecker products, the matrix absolute
//! value, and minimum-cost assignment.

pub mod assignment;
mod dense;
mod lanczos;

pub use assignment::{solve_assignment, Assignment};

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};

/// Above this dimension, embeddings switch from the dense O(n^3) solver to
/// the iterative one (which only touches the d requested pairs). Kept low:
/// the iterative path is orders of magnitude cheaper and accurate to the
/// residual tolerance, and everything in the fit pipeline only ever needs a
/// handful of extreme pairs.
const DENSE_EIG_MAX_N: usize = 256;

/// Relative tolerance below which an eigenvalue counts as zero (for ranks
/// and signatures).
pub(crate) const EIG_ZERO_REL_TOL: f64 = 1e-10;

/// A symmetric linear operator given by matrix-vector products. Lets the
/// embedding run on an adjacency structure without densifying it.
pub trait MatVec {
    fn dim(&self) -> usize;
    /// out = A x (A symmetric). `x` and `out` have length `dim()`.
    fn matvec(&self, x: &[f64], out: &mut [f64]);
    /// Dense form, used for small operators. The default reconstructs
    /// column-by-column through `matvec`.
    fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        let mut a = Array2::zeros((n, n));
        let mut e = vec![0.0f64; n];
        let mut col = vec![0.0f64; n];
        for j in 0..n {
            e[j] = 1.0;
            self.matvec(&e, &mut col);
            e[j] = 0.0;
            for (i, &v) in col.iter().enumerate() {
                a[[i, j]] = v;
            }
        }
        a
    }
}

impl MatVec for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
    fn to_dense(&self) -> Array2<f64> {
        self.clone()
    }
}

/// Full eigendecomposition of a symmetric matrix.
pub struct SymmetricEigen {
    /// Eigenvalues sorted descending (signed).
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, aligned with `values`. Each
    /// column is sign-normalized so its first nonzero coordinate is positive.
    pub vectors: Array2<f64>,
}

fn normalize_column_signs(vectors: &mut Array2<f64>) {
    let (n, m) = vectors.dim();
    for j in 0..m {
        let mut flip = false;
        for i in 0..n {
            let v = vectors[[i, j]];
            if v.abs() > 1e-12 {
                flip = v < 0.0;
                break;
            }
        }
        if flip {
            for i in 0..n {
                vectors[[i, j]] = -vectors[[i, j]];
            }
        }
    }
}

fn validate_symmetric(a: &ArrayView2<f64>) -> Result<usize> {
    let (n, m) = a.dim();
    if n != m {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {n} x {m}"
        )));
    }
    let mut max_abs = 0.0f64;
    for &v in a.iter() {
        if !v.is_finite() {
            return Err(Error::Domain("matrix contains a non-finite entry".into()));
        }
        max_abs = max_abs.max(v.abs());
    }
    let tol = 1e-8 * (1.0 + max_abs);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[[i, j]] - a[[j, i]]).abs() > tol {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    a[[i, j]],
                    a[[j, i]]
                )));
            }
        }
    }
    Ok(n)
}

/// Dense symmetric eigendecomposition with values sorted descending.
pub fn sym_eig(a: &ArrayView2<f64>) -> Result<SymmetricEigen> {
    let n = validate_symmetric(a)?;
    if n == 0 {
        return Err(Error::Dimension("eigendecomposition of an empty matrix".into()));
    }
    // column-major copy, symmetrized to scrub representation noise
    let mut col = vec![0.0f64; n * n];
    for c in 0..n {
        for r in 0..n {
            col[c * n + r] = 0.5 * (a[[r, c]] + a[[c, r]]);
        }
    }
    let (vals, q) = dense::sym_eig_raw(col, n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap().then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (out_col, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors[[r, out_col]] = q[i * n + r];
        }
    }
    normalize_column_signs(&mut vectors);
    Ok(SymmetricEigen { values, vectors })
}

/// Kronecker product.
pub fn kron(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::<f64>::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[[i, j]];
            if aij == 0.0 {
                continue;
            }
            for s in 0..rb {
                for t in 0..cb {
                    out[[i * rb + s, j * cb + t]] = aij * b[[s, t]];
                }
            }
        }
    }
    out
}

/// Matrix absolute value |A| = (A^T A)^{1/2} of a symmetric matrix, computed
/// spectrally as U |Lambda| U^T.
pub fn matrix_abs(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let eig = sym_eig(a)?;
    let n = eig.values.len();
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        let w = eig.values[j].abs();
        for i in 0..n {
            scaled[[i, j]] *= w;
        }
    }
    Ok(scaled.dot(&eig.vectors.t()))
}

/// A truncated spectral embedding X = U |Lambda|^{1/2} built from the d
/// largest-magnitude eigenpairs.
pub struct Embedding {
    /// n x d coordinate matrix; row i is the embedded position of index i.
    pub coords: Array2<f64>,
    /// The d retained eigenvalues, signed, ordered by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
    /// (positive, negative) counts among the retained eigenvalues, ignoring
    /// those within the zero tolerance.
    pub signature: (usize, usize),
}

/// Signature of a list of eigenvalues under the relative zero tolerance.
pub(crate) fn spectrum_signature(values: &[f64]) -> (usize, usize) {
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = EIG_ZERO_REL_TOL * max_abs;
    let p = values.iter().filter(|&&v| v > tol).count();
    let q = values.iter().filter(|&&v| v < -tol).count();
    (p, q)
}

/// Embeds a symmetric operator into R^d via its d largest-magnitude
/// eigenpairs. Small operators go through the dense solver; large ones
/// through the iterative solver.
pub fn spectral_embedding<O: MatVec + ?Sized>(op: &O, d: usize) -> Result<Embedding> {
    let n = op.dim();
    if d == 0 || d > n {
        return Err(Error::Dimension(format!(
            "embedding dimension {d} is out of range for an operator of dimension {n}"
        )));
    }
    let (values, mut vectors) = if n <= DENSE_EIG_MAX_N {
        let a = op.to_dense();
        let eig = sym_eig(&a.view())?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            eig.values[j]
                .abs()
                .partial_cmp(&eig.values[i].abs())
                .unwrap()
                .then(eig.values[j].partial_cmp(&eig.values[i]).unwrap())
                .then(i.cmp(&j))
        });
        let values: Vec<f64> = order[..d].iter().map(|&i| eig.values[i]).collect();
        let mut vectors = Array2::<f64>::zeros((n, d));
        for (c, &i) in order[..d].iter().enumerate() {
            for r in 0..n {
                vectors[[r, c]] = eig.vectors[[r, i]];
            }
        }
        (values, vectors)
    } else {
        lanczos::extreme_pairs(op, d, &lanczos::LanczosOptions::default())?
    };
    normalize_column_signs(&mut vectors);
    let signature = spectrum_signature(&values);
    // scale columns by sqrt(|lambda|)
    for (j, &v) in values.iter().enumerate() {
        let w = v.abs().sqrt();
        for i in 0..n {
            vectors[[i, j]] *= w;
        }
    }
    Ok(Embedding {
        coords: vectors,
        eigenvalues: values,
        signature,
    })
}
