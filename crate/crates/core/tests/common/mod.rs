#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use dln_lasso::QuadraticProblem;

/// A feasible PSD LCP `(M, q)` with `M = BᵀB`, `q = −Bᵀy + λ𝟙`, `λ > 0`.
/// `B` has between 1 and `d + 2` rows, so `M` is often singular.
pub fn random_psd_lcp(seed: u64, max_d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=max_d);
    let k = rng.random_range(1..=d + 2);
    let b = DMatrix::from_fn(k, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = b.tr_mul(&b);
    let m = (&m + m.transpose()) * 0.5;
    let r = b.tr_mul(&y);
    let lambda = rng.random_range(0.05..1.2) * r.amax().max(1e-3);
    let q = DVector::from_element(d, lambda) - r;
    (m, q)
}

/// A random design instance with `d ∈ [2, max_d]` and `n ∈ [1, d + 1]`.
pub fn random_problem(seed: u64, max_d: usize) -> QuadraticProblem {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let d = rng.random_range(2..=max_d);
    let n = rng.random_range(1..=d + 1);
    dln_lasso::random_instance(seed, n, d).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
