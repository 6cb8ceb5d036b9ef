//! Lanczos iteration with full reorthogonalization.
//!
//! Finds the d largest-magnitude eigenpairs of a symmetric operator given
//! only by matrix-vector products. Full reorthogonalization keeps the basis
//! orthonormal to machine precision, which costs O(n m^2) for a basis of
//! size m but removes the ghost-eigenvalue pathologies of plain Lanczos;
//! for the modest d used here m stays small. Exact breakdown (an invariant
//! subspace) is handled by restarting the recurrence with a fresh random
//! direction orthogonal to everything found so far.

use super::dense::tridiag_eig;
use super::MatVec;
use crate::error::{Error, Result};
use crate::rng;
use ndarray::Array2;
use rand::Rng;

pub(crate) struct LanczosOptions {
    /// Hard cap on the basis size before giving up.
    pub max_basis: usize,
    /// Relative residual tolerance: |beta_m s_mi| <= tol * max|theta|.
    pub tol: f64,
    /// Seed for the start vector and any breakdown restarts.
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            max_basis: 5000,
            tol: 1e-8,
            seed: 0x51ac_3b17_9e0d_44c1,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Remove the components of `w` along every basis vector (two passes of
/// classical Gram-Schmidt, which is enough once the basis is orthonormal).
fn reorthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(w, b);
            if c != 0.0 {
                axpy(w, -c, b);
            }
        }
    }
}

fn random_unit_orthogonal(
    n: usize,
    basis: &[Vec<f64>],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0f64..1.0)).collect();
        reorthogonalize(&mut v, basis);
        let nv = norm(&v);
        if nv > 1e-8 * (n as f64).sqrt() {
            for x in v.iter_mut() {
                *x /= nv;
            }
            return Ok(v);
        }
    }
    Err(Error::Numerical(
        "could not generate a direction orthogonal to the Krylov basis".into(),
    ))
}

/// Top-`d` eigenpairs by magnitude of a symmetric operator.
/// Returns signed eigenvalues and an n x d matrix of vectors (columns),
/// ordered by decreasing |eigenvalue|.
pub(crate) fn extreme_pairs<O: MatVec + ?Sized>(
    op: &O,
    d: usize,
    opts: &LanczosOptions,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = op.dim();
    if d == 0 || d > n {
        return Err(Error::Dimension(format!(
            "requested {d} eigenpairs from an operator of dimension {n}"
        )));
    }
    let max_basis = opts.max_basis.min(n);
    let mut rng = rng::rng_from_seed(opts.seed);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut offdiag: Vec<f64> = Vec::new(); // offdiag[i] couples v_i, v_{i+1}

    // start vector
    let v0 = {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0f64..1.0)).collect();
        let nv = norm(&v);
        for x in v.iter_mut() {
            *x /= nv;
        }
        v
    };
    basis.push(v0);

    let mut w = vec![0.0f64; n];
    // one Lanczos step for the newest basis vector: fills alpha, leaves the
    // residual in `w` and returns its norm
    let step = |basis: &[Vec<f64>],
                    alpha: &mut Vec<f64>,
                    offdiag: &[f64],
                    w: &mut Vec<f64>|
     -> f64 {
        let j = basis.len() - 1;
        op.matvec(&basis[j], w);
        let a = dot(w, &basis[j]);
        alpha.push(a);
        axpy(w, -a, &basis[j]);
        if j > 0 {
            axpy(w, -offdiag[j - 1], &basis[j - 1]);
        }
        reorthogonalize(w, basis);
        norm(w)
    };

    let mut resid_norm = step(&basis, &mut alpha, &offdiag, &mut w);

    let mut checkpoint = (2 * d + 15).min(max_basis);
    loop {
        // grow the basis to the next checkpoint
        while basis.len() < checkpoint {
            let scale = alpha
                .iter()
                .chain(offdiag.iter())
                .fold(0.0f64, |m, x| m.max(x.abs()))
                .max(1e-300);
            if resid_norm <= 1e-12 * scale.max(1.0) {
                if basis.len() == n {
                    break;
                }
                // invariant subspace: restart with an orthogonal direction
                let v = random_unit_orthogonal(n, &basis, &mut rng)?;
                offdiag.push(0.0);
                basis.push(v);
            } else {
                let v: Vec<f64> = w.iter().map(|x| x / resid_norm).collect();
                offdiag.push(resid_norm);
                basis.push(v);
            }
            resid_norm = step(&basis, &mut alpha, &offdiag, &mut w);
        }

        let m = basis.len();
        let (theta, s) = tridiag_eig(&alpha, &offdiag)?;
        // rank Ritz values by magnitude, ties broken toward the positive one
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| {
            theta[j]
                .abs()
                .partial_cmp(&theta[i].abs())
                .unwrap()
                .then(theta[j].partial_cmp(&theta[i]).unwrap())
                .then(i.cmp(&j))
        });
        let top = &order[..d.min(m)];
        let anorm = theta.iter().fold(0.0f64, |mx, x| mx.max(x.abs()));
        let exact = m == n;
        let converged = exact
            || top.len() == d
                && top
                    .iter()
                    .all(|&i| resid_norm * s[(m - 1) + i * m].abs() <= opts.tol * anorm.max(1e-300));

        if converged || m >= max_basis {
            if !converged {
                return Err(Error::Numerical(format!(
                    "eigenpair iteration did not converge with a basis of {m} vectors"
                )));
            }
            // assemble Ritz vectors for the selected pairs
            let dd = d.min(m);
            let mut values = Vec::with_capacity(dd);
            let mut vectors = Array2::<f64>::zeros((n, dd));
            for (out_col, &i) in top.iter().enumerate() {
                values.push(theta[i]);
                let coeffs = &s[i * m..(i + 1) * m];
                let mut col = vec![0.0f64; n];
                for (bj, &cj) in basis.iter().zip(coeffs) {
                    if cj != 0.0 {
                        axpy(&mut col, cj, bj);
                    }
                }
                for (r, &x) in col.iter().enumerate() {
                    vectors[[r, out_col]] = x;
                }
            }
            return Ok((values, vectors));
        }
        checkpoint = ((m as f64 * 1.6) as usize + 5).min(max_basis);
    }
}
