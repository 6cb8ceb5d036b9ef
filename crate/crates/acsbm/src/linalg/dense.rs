//! Dense symmetric eigendecomposition.
//!
//! Householder reduction to tridiagonal form followed by implicit-shift QL
//! with eigenvector accumulation (the classic EISPACK tred2/tql2 pair).
//! Vectors are stored column-major so the QL rotations sweep contiguous
//! memory. Used directly for small matrices and for the projected
//! tridiagonal problems inside the iterative solver.

use crate::error::{Error, Result};

/// Householder reduction of a symmetric matrix to tridiagonal form.
/// `q` holds the matrix column-major on input and the accumulated
/// transformation on output; `d` receives the diagonal, `e` the
/// subdiagonal (with `e[0]` unused).
fn tred2(q: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    let v = |q: &[f64], r: usize, c: usize| q[c * n + r];

    for j in 0..n {
        d[j] = v(q, n - 1, j);
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v(q, i - 1, j);
                q[j * n + i] = 0.0;
                q[i * n + j] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }
            // apply the Householder transformation
            for j in 0..i {
                f = d[j];
                q[i * n + j] = f;
                g = e[j] + v(q, j, j) * f;
                let col_j = &q[j * n..j * n + i];
                for k in (j + 1)..i {
                    g += col_j[k] * d[k];
                    e[k] += col_j[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col_j = &mut q[j * n..j * n + i];
                for k in j..i {
                    col_j[k] -= f * e[k] + g * d[k];
                }
                d[j] = q[j * n + i - 1];
                q[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }

    // accumulate transformations
    for i in 0..n.saturating_sub(1) {
        q[i * n + n - 1] = v(q, i, i);
        q[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v(q, k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v(q, k, i + 1) * v(q, k, j);
                }
                let col_j = &mut q[j * n..j * n + i + 1];
                for (k, dk) in d.iter().enumerate().take(i + 1) {
                    col_j[k] -= g * dk;
                }
            }
        }
        for k in 0..=i {
            q[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v(q, n - 1, j);
        q[j * n + n - 1] = 0.0;
    }
    q[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix, rotating
/// the columns of `q` along. On entry `e[0]` is ignored and `e[i]` couples
/// rows i-1 and i; on exit `d` holds the eigenvalues (unsorted) and the
/// columns of `q` the corresponding vectors.
fn tql2(d: &mut [f64], e: &mut [f64], q: &mut [f64], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = 2f64.powi(-52);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 80 {
                    return Err(Error::Numerical(
                        "QL iteration failed to converge on a tridiagonal block".into(),
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    // rotate eigenvector columns i and i+1 (contiguous)
                    let (col_i, col_ip1) = q[i * n..(i + 2) * n].split_at_mut(n);
                    for (a, b) in col_i.iter_mut().zip(col_ip1.iter_mut()) {
                        let hh = *b;
                        *b = s * *a + c * hh;
                        *a = c * *a - s * hh;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Full eigendecomposition of a dense symmetric matrix given column-major.
/// Returns unsorted eigenvalues and column-major eigenvectors.
pub(crate) fn sym_eig_raw(a_colmajor: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut q = a_colmajor;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 1 {
        let v = q[0];
        return Ok((vec![v], vec![1.0]));
    }
    tred2(&mut q, &mut d, &mut e, n);
    tql2(&mut d, &mut e, &mut q, n)?;
    Ok((d, q))
}

/// Eigendecomposition of a symmetric tridiagonal matrix with diagonal `diag`
/// and off-diagonal `off` (off[i] couples i and i+1). Returns unsorted
/// eigenvalues and column-major eigenvectors.
pub(crate) fn tridiag_eig(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    assert_eq!(off.len() + 1, n, "off-diagonal length must be n-1");
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    for (i, &o) in off.iter().enumerate() {
        e[i + 1] = o;
    }
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    if n == 1 {
        return Ok((d, q));
    }
    tql2(&mut d, &mut e, &mut q, n)?;
    Ok((d, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &[Vec<f64>], vals: &[f64], q: &[f64], n: usize) -> f64 {
        // max_j || A v_j - lambda_j v_j ||_inf
        let mut worst = 0.0f64;
        for j in 0..n {
            for r in 0..n {
                let mut av = 0.0;
                for c in 0..n {
                    av += a[r][c] * q[j * n + c];
                }
                worst = worst.max((av - vals[j] * q[j * n + r]).abs());
            }
        }
        worst
    }

    #[test]
    fn solves_a_known_two_by_two() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let a = vec![2.0, 1.0, 1.0, 2.0];
        let (mut vals, _q) = sym_eig_raw(a, 2).unwrap();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_random_symmetric_matrices() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(11);
        for n in [1usize, 2, 3, 5, 8, 20, 40] {
            let mut a = vec![vec![0.0f64; n]; n];
            for i in 0..n {
                for j in 0..=i {
                    let v = rng.random_range(-1.0..1.0);
                    a[i][j] = v;
                    a[j][i] = v;
                }
            }
            let mut col = vec![0.0; n * n];
            for c in 0..n {
                for r in 0..n {
                    col[c * n + r] = a[r][c];
                }
            }
            let (vals, q) = sym_eig_raw(col, n).unwrap();
            assert!(
                residual(&a, &vals, &q, n) < 1e-10 * (n as f64),
                "residual too large at n={n}"
            );
            // orthonormality
            for j1 in 0..n {
                for j2 in 0..n {
                    let dot: f64 = (0..n).map(|r| q[j1 * n + r] * q[j2 * n + r]).sum();
                    let want = if j1 == j2 { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-11, "orthonormality at n={n}");
                }
            }
        }
    }

    #[test]
    fn tridiagonal_matches_dense_path() {
        let diag = [1.0, -2.0, 0.5, 3.0, 0.0];
        let off = [0.7, -0.3, 0.9, 0.2];
        let n = diag.len();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = diag[i];
        }
        for i in 0..n - 1 {
            dense[i][i + 1] = off[i];
            dense[i + 1][i] = off[i];
        }
        let mut col = vec![0.0; n * n];
        for c in 0..n {
            for r in 0..n {
                col[c * n + r] = dense[r][c];
            }
        }
        let (mut v1, _) = sym_eig_raw(col, n).unwrap();
        let (mut v2, q2) = tridiag_eig(&diag, &off).unwrap();
        v1.sort_by(|x, y| x.partial_cmp(y).unwrap());
        v2.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (a, b) in v1.iter().zip(v2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let (vals, _) = tridiag_eig(&diag, &off).unwrap();
        assert!(residual(&dense, &vals, &q2, n) < 1e-11);
    }

    #[test]
    fn handles_repeated_eigenvalues() {
        // A = I + 0.75 * ones: eigenvalues 1 (multiplicity 3) and 4
        let n = 4;
        let mut a = vec![vec![0.0f64; n]; n];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { 1.75 } else { 0.75 };
            }
        }
        let mut col = vec![0.0; n * n];
        for c in 0..n {
            for r in 0..n {
                col[c * n + r] = a[r][c];
            }
        }
        let (mut vals, _) = sym_eig_raw(col, n).unwrap();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for v in &vals[..3] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!((vals[3] - 4.0).abs() < 1e-12);
    }
}
