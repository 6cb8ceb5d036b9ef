//! Shared generators for the integration suites: random models whose
//! expanded edge probabilities stay strictly inside (0, 1) for each link,
//! plus small matrix helpers.
#![allow(dead_code)]

use acsbm::link::LinkFunction;
use acsbm::model::{CellProbabilities, ModelSpec, SparsitySchedule};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    acsbm::rng::rng_from_seed(seed)
}

/// Symmetric K x K matrix with entries drawn uniformly from [lo, hi].
pub fn random_symmetric(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64) -> Array2<f64> {
    let mut b = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            let v = rng.random_range(lo..hi);
            b[[i, j]] = v;
            b[[j, i]] = v;
        }
    }
    b
}

/// Random model for the given link. Coefficient ranges are chosen per link
/// so that every expanded probability lies in (0, 1) at any network size:
/// the identity link gets a tight band around 0.4, the log link keeps
/// B + sum(beta) below zero, and logit/probit map any finite value inside
/// the unit interval.
pub fn random_spec(rng: &mut ChaCha8Rng, link: LinkFunction) -> ModelSpec {
    let k = rng.random_range(2..=4usize);
    let m = rng.random_range(1..=2usize);
    let levels: Vec<usize> = (0..m).map(|_| rng.random_range(2..=3usize)).collect();
    let (b_lo, b_hi, beta_max) = match link {
        LinkFunction::Identity => (0.3, 0.5, 0.05),
        LinkFunction::Log => (-1.6, -0.8, 0.3),
        LinkFunction::Logit | LinkFunction::Probit => (-1.5, 0.0, 0.5),
    };
    let b = random_symmetric(rng, k, b_lo, b_hi);
    let beta: Vec<f64> = (0..m)
        .map(|_| rng.random_range(-beta_max..beta_max))
        .collect();
    let exponent = if rng.random_bool(0.5) {
        0.0
    } else {
        rng.random_range(0.0..0.9)
    };
    ModelSpec::new(
        k,
        levels,
        b,
        beta,
        link,
        SparsitySchedule::new(exponent).unwrap(),
        CellProbabilities::Uniform,
    )
    .unwrap()
}

/// Random log-link model whose elementwise exp(B) is comfortably full
/// rank, so cross-configuration matching is identified. Resamples until
/// the smallest eigenvalue magnitude clears a relative threshold.
pub fn random_log_spec_full_rank(rng: &mut ChaCha8Rng) -> ModelSpec {
    loop {
        let spec = random_spec(rng, LinkFunction::Log);
        let expb = spec.b.mapv(f64::exp);
        let eig = acsbm::linalg::sym_eig(&expb.view()).unwrap();
        let max = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = eig.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if min > 1e-3 * max {
            return spec;
        }
    }
}

/// Random orthogonal matrix: the eigenvectors of a random symmetric matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let a = random_symmetric(rng, n, -1.0, 1.0);
    acsbm::linalg::sym_eig(&a.view()).unwrap().vectors
}

/// Positive semi-definite square root through the eigendecomposition of
/// the argument itself — an oracle route independent of `matrix_abs`,
/// which factors A rather than A^T A.
pub fn psd_sqrt(m: &Array2<f64>) -> Array2<f64> {
    let eig = acsbm::linalg::sym_eig(&m.view()).unwrap();
    let n = eig.values.len();
    let mut out = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let w = eig.values[j].max(0.0).sqrt();
        for r in 0..n {
            for c in 0..n {
                out[[r, c]] += w * eig.vectors[[r, j]] * eig.vectors[[c, j]];
            }
        }
    }
    out
}

/// Every permutation of 0..n, via Heap's algorithm.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    fn heap(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(cur.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, cur, out);
            if k % 2 == 0 {
                cur.swap(i, k - 1);
            } else {
                cur.swap(0, k - 1);
            }
        }
    }
    heap(n, &mut cur, &mut out);
    out
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
