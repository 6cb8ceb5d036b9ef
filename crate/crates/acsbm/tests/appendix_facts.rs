//! Numerical checks of the matrix identities the label-alignment theory
//! rests on: properties of the matrix absolute value |A| = (A^T A)^{1/2},
//! its interaction with Kronecker products and the boxplus expansion, and
//! the permutation optimality of the diagonal of a positive semi-definite
//! matrix. Each identity is exercised on batches of random inputs and must
//! hold to 1e-9 (or exactly, where exactness is structural).

mod common;

use acsbm::linalg::{kron, matrix_abs, solve_assignment, sym_eig};
use acsbm::model::boxplus;
use common::{all_permutations, max_abs_diff, psd_sqrt, random_orthogonal, rng};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array2<f64> {
    common::random_symmetric(rng, n, -scale, scale)
}

#[test]
fn absolute_value_is_the_unique_psd_square_root() {
    let mut rng = rng(101);
    for trial in 0..50 {
        let n = rng.random_range(2..=8usize);
        let a = random_symmetric(&mut rng, n, 2.0);
        let abs_a = matrix_abs(&a.view()).unwrap();

        // positive semi-definite
        let eig = sym_eig(&abs_a.view()).unwrap();
        let max = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(
            eig.values.iter().all(|&v| v >= -TOL * (1.0 + max)),
            "trial {trial}: |A| has a negative eigenvalue"
        );

        // squares to A^T A
        let sq = abs_a.dot(&abs_a);
        let ata = a.t().dot(&a);
        assert!(max_abs_diff(&sq, &ata) <= TOL, "trial {trial}: |A|^2 != A^T A");

        // agrees with the square root taken on A^T A directly
        let oracle = psd_sqrt(&ata);
        assert!(
            max_abs_diff(&abs_a, &oracle) <= TOL,
            "trial {trial}: |A| disagrees with the A^T A route"
        );
    }
}

#[test]
fn absolute_value_from_a_singular_value_decomposition() {
    // for symmetric A = U Sigma V^T, |A| = U Sigma U^T; built here from the
    // eigendecomposition, whose singular form has Sigma = |Lambda|
    let mut rng = rng(102);
    for _ in 0..50 {
        let n = rng.random_range(2..=8usize);
        let a = random_symmetric(&mut rng, n, 2.0);
        let eig = sym_eig(&a.view()).unwrap();
        let mut u_sigma_ut = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let s = eig.values[j].abs();
            for r in 0..n {
                for c in 0..n {
                    u_sigma_ut[[r, c]] += s * eig.vectors[[r, j]] * eig.vectors[[c, j]];
                }
            }
        }
        let abs_a = matrix_abs(&a.view()).unwrap();
        assert!(max_abs_diff(&abs_a, &u_sigma_ut) <= TOL);
    }
}

#[test]
fn gram_matrix_recovers_the_absolute_value_of_a_signed_factorization() {
    // A = X D X^T with X^T X diagonal and D = diag(+-1) implies |A| = X X^T
    let mut rng = rng(103);
    for _ in 0..50 {
        let n = rng.random_range(2..=8usize);
        let d = rng.random_range(1..=n);
        let u = random_orthogonal(&mut rng, n);
        let mut x = Array2::<f64>::zeros((n, d));
        for j in 0..d {
            let w: f64 = rng.random_range(0.2..2.0);
            for r in 0..n {
                x[[r, j]] = u[[r, j]] * w;
            }
        }
        let signs: Vec<f64> = (0..d)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let mut a = Array2::<f64>::zeros((n, n));
        for j in 0..d {
            for r in 0..n {
                for c in 0..n {
                    a[[r, c]] += signs[j] * x[[r, j]] * x[[c, j]];
                }
            }
        }
        let gram = x.dot(&x.t());
        let abs_a = matrix_abs(&a.view()).unwrap();
        assert!(max_abs_diff(&abs_a, &gram) <= TOL);
    }
}

#[test]
fn absolute_value_commutes_with_orthogonal_conjugation() {
    let mut rng = rng(104);
    for _ in 0..50 {
        let n = rng.random_range(2..=8usize);
        let a = random_symmetric(&mut rng, n, 2.0);
        let u = random_orthogonal(&mut rng, n);
        let conj = u.dot(&a).dot(&u.t());
        let lhs = matrix_abs(&conj.view()).unwrap();
        let rhs = u.dot(&matrix_abs(&a.view()).unwrap()).dot(&u.t());
        assert!(max_abs_diff(&lhs, &rhs) <= TOL);
    }
}

#[test]
fn rank_one_plus_identity_has_the_closed_form_absolute_value() {
    let mut rng = rng(105);
    for _ in 0..200 {
        let n = rng.random_range(1..=8usize);
        let c: f64 = rng.random_range(-2.0..2.0);
        let d: f64 = rng.random_range(-2.0..2.0);
        let mut a = Array2::<f64>::from_elem((n, n), c);
        for i in 0..n {
            a[[i, i]] += d;
        }
        let c_prime = ((c * n as f64 + d).abs() - d.abs()) / n as f64;
        let d_prime = d.abs();
        let mut expected = Array2::<f64>::from_elem((n, n), c_prime);
        for i in 0..n {
            expected[[i, i]] += d_prime;
        }
        let abs_a = matrix_abs(&a.view()).unwrap();
        assert!(
            max_abs_diff(&abs_a, &expected) <= TOL,
            "n={n} c={c} d={d}"
        );
    }
}

#[test]
fn positive_rank_one_plus_identity_keeps_positive_entries() {
    let mut rng = rng(106);
    for _ in 0..200 {
        let n = rng.random_range(1..=8usize);
        // entries: off-diagonal c, diagonal c + d; both must be positive
        let c: f64 = rng.random_range(0.05..2.0);
        let d: f64 = rng.random_range((-c + 0.01)..2.0);
        let mut a = Array2::<f64>::from_elem((n, n), c);
        for i in 0..n {
            a[[i, i]] += d;
        }
        let abs_a = matrix_abs(&a.view()).unwrap();
        assert!(
            abs_a.iter().all(|&v| v > 0.0),
            "n={n} c={c} d={d}: |A| lost positivity"
        );
    }
}

#[test]
fn absolute_value_is_frobenius_lipschitz_with_constant_sqrt_two() {
    let mut rng = rng(107);
    for _ in 0..100 {
        let n = rng.random_range(2..=8usize);
        let a = random_symmetric(&mut rng, n, 2.0);
        let mut b = a.clone();
        let scale: f64 = rng.random_range(0.01..1.0);
        for i in 0..n {
            for j in i..n {
                let bump: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
                b[[i, j]] += bump;
                b[[j, i]] = b[[i, j]];
            }
        }
        let diff_abs = {
            let x = matrix_abs(&a.view()).unwrap() - matrix_abs(&b.view()).unwrap();
            common::frobenius(&x)
        };
        let diff = common::frobenius(&(&a - &b));
        assert!(
            diff_abs <= 2.0f64.sqrt() * diff + 1e-12,
            "perturbation bound violated: {diff_abs} vs sqrt(2) * {diff}"
        );
    }
}

#[test]
fn elementwise_exponential_turns_boxplus_into_kronecker() {
    let mut rng = rng(108);
    for _ in 0..100 {
        let m = rng.random_range(1..=4usize);
        let n = rng.random_range(1..=4usize);
        let a = random_symmetric(&mut rng, m, 1.0);
        let b = random_symmetric(&mut rng, n, 1.0);
        let combined = boxplus(&a.view(), &b.view()).unwrap().mapv(f64::exp);
        let split = kron(&a.mapv(f64::exp).view(), &b.mapv(f64::exp).view());
        assert!(max_abs_diff(&combined, &split) <= TOL);
    }
}

#[test]
fn kronecker_product_of_symmetric_factors_is_symmetric() {
    let mut rng = rng(109);
    for _ in 0..100 {
        let m = rng.random_range(1..=4usize);
        let n = rng.random_range(1..=4usize);
        let a = random_symmetric(&mut rng, m, 2.0);
        let b = random_symmetric(&mut rng, n, 2.0);
        let c = kron(&a.view(), &b.view());
        // entries of C and C^T are the same products of the same floats
        for r in 0..c.nrows() {
            for s in 0..c.ncols() {
                assert_eq!(c[[r, s]], c[[s, r]]);
            }
        }
    }
}

#[test]
fn absolute_value_distributes_over_kronecker_products() {
    let mut rng = rng(110);
    for _ in 0..60 {
        let m = rng.random_range(2..=4usize);
        let n = rng.random_range(2..=4usize);
        let a = random_symmetric(&mut rng, m, 2.0);
        let b = random_symmetric(&mut rng, n, 2.0);
        let lhs = matrix_abs(&kron(&a.view(), &b.view()).view()).unwrap();
        let rhs = kron(
            &matrix_abs(&a.view()).unwrap().view(),
            &matrix_abs(&b.view()).unwrap().view(),
        );
        assert!(max_abs_diff(&lhs, &rhs) <= TOL);
    }
}

#[test]
fn permuted_self_products_never_beat_the_sum_of_squares() {
    let mut rng = rng(111);
    for _ in 0..200 {
        let n = rng.random_range(1..=12usize);
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        // random permutation by sorting random keys
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let permuted: f64 = (0..n).map(|i| x[i] * x[perm[i]]).sum();
        let squares: f64 = x.iter().map(|v| v * v).sum();
        assert!(permuted <= squares + 1e-12);
    }
}

#[test]
fn psd_diagonal_dominates_every_permutation_and_assignment_finds_it() {
    let mut rng = rng(112);
    for trial in 0..200 {
        let n = rng.random_range(2..=6usize);
        // full-rank PSD: Gram matrix of n independent Gaussian vectors in
        // dimension n + 2
        let mut x = Array2::<f64>::zeros((n, n + 2));
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let a = x.dot(&x.t());

        let diag: f64 = (0..n).map(|i| a[[i, i]]).sum();
        for perm in all_permutations(n) {
            let s: f64 = (0..n).map(|i| a[[i, perm[i]]]).sum();
            if perm.iter().enumerate().all(|(i, &p)| i == p) {
                assert!((s - diag).abs() <= 1e-12);
            } else {
                assert!(
                    s < diag + 1e-12,
                    "trial {trial}: permutation {perm:?} matches the diagonal"
                );
            }
        }

        // the assignment solver maximizing the diagonal picks the identity
        let cost = a.mapv(|v| -v);
        let sol = solve_assignment(&cost.view()).unwrap();
        assert!(
            sol.perm.iter().enumerate().all(|(i, &p)| i == p),
            "trial {trial}: assignment returned {:?}",
            sol.perm
        );
    }
}
