#![allow(dead_code)]

use crq_core::crq::CrqProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Intercept plus `p - 1` standard normal columns.
pub fn design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { normal(rng) })
}

/// Small quantile regression instance with `n <= 12`, `p <= 2`.
pub fn qr_instance(seed: u64) -> (DMatrix<f64>, DVector<f64>, f64) {
    let mut r = rng(seed);
    let p = 1 + (seed % 2) as usize;
    let n = r.random_range(p + 2..=12);
    let x = design(&mut r, n, p);
    let y = DVector::from_fn(n, |i, _| 0.5 + x[(i, p - 1)] + normal(&mut r));
    let tau = [0.25, 0.5, 0.75][(seed / 2 % 3) as usize];
    (x, y, tau)
}

/// CRQ instance with two predictors and `q` responses that share a signal.
pub fn crq_instance(seed: u64, n: usize, q: usize) -> CrqProblem {
    let mut r = rng(seed);
    let x = design(&mut r, n, 2);
    let load: Vec<f64> = (0..q).map(|_| normal(&mut r)).collect();
    let y = DMatrix::from_fn(n, q, |i, j| load[j] * x[(i, 1)] + normal(&mut r));
    CrqProblem::new(x, y, 0.5).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Standard normal CDF from the Taylor series of erf. Cancellation keeps
/// it near 1e-14 accuracy for |x| <= 3.
pub fn series_normal_cdf(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    let mut term = z;
    let mut sum = z;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -z * z / k;
        let add = term / (2.0 * k + 1.0);
        sum += add;
        if add.abs() < 1e-18 * sum.abs().max(1e-300) && k > 5.0 {
            break;
        }
        if k > 400.0 {
            break;
        }
    }
    0.5 + sum / std::f64::consts::PI.sqrt()
}
