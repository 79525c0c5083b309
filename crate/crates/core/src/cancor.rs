//! Leading classical canonical correlation pair.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_sqrt_spd, jacobi_eigen};

const RIDGE_FRACTION: f64 = 1e-10;
const SINGULAR_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancorFit {
    pub x_weights: Vec<f64>,
    pub y_weights: Vec<f64>,
    pub correlation: f64,
    /// Training column means; scores are `(x - x_means)'x_weights`.
    pub x_means: Vec<f64>,
    pub y_means: Vec<f64>,
}

/// Covariance of two centred, weight-scaled blocks with denominator `dof`.
fn cross_cov(a: &DMatrix<f64>, b: &DMatrix<f64>, dof: f64) -> DMatrix<f64> {
    (a.transpose() * b) / dof
}

/// Columns centred at their weighted means, rows scaled by `sqrt(w_i)`.
fn weighted_center(m: &DMatrix<f64>, w: &[f64], total: f64) -> (DMatrix<f64>, Vec<f64>) {
    let means: Vec<f64> = (0..m.ncols())
        .map(|j| m.column(j).iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / total)
        .collect();
    let c = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - means[j]) * w[i].sqrt());
    (c, means)
}

/// Ridge-guarded covariance; refuses numerically singular blocks.
fn guarded_cov(c: &DMatrix<f64>, dof: f64, what: &str) -> Result<DMatrix<f64>> {
    let s = cross_cov(c, c, dof);
    let dim = s.nrows() as f64;
    let scale = s.trace() / dim;
    if !(scale > 0.0) {
        return Err(Error::Rank(format!("{what} covariance is zero")));
    }
    let eig = jacobi_eigen(&s)?;
    let smallest = *eig.values.last().unwrap();
    if smallest < SINGULAR_FRACTION * scale {
        return Err(Error::Rank(format!(
            "{what} covariance is singular (smallest eigenvalue {smallest:.3e}, mean {scale:.3e})"
        )));
    }
    let mut guarded = s;
    for i in 0..guarded.nrows() {
        guarded[(i, i)] += RIDGE_FRACTION * scale;
    }
    Ok(guarded)
}

/// Leading canonical pair of the column spaces of `x` and `y`.
///
/// Columns are centred internally, so an intercept column makes the X
/// covariance singular and is refused; drop constant columns first.
pub fn fit_cancor(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<CancorFit> {
    fit_cancor_weighted(x, y, &vec![1.0; x.nrows()])
}

/// Canonical pair under observation weights (frequency-weight moments,
/// denominator `sum(w) - 1`). Unit weights reproduce [`fit_cancor`].
pub fn fit_cancor_weighted(x: &DMatrix<f64>, y: &DMatrix<f64>, weights: &[f64]) -> Result<CancorFit> {
    let (n, p) = x.shape();
    let q = y.ncols();
    if y.nrows() != n {
        return Err(Error::domain("X and Y row counts differ"));
    }
    if p == 0 || q == 0 {
        return Err(Error::domain("X and Y need at least one column each"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("canonical correlation data must be finite"));
    }
    if n <= p + q {
        return Err(Error::InsufficientData { n, p: p + q });
    }
    if weights.len() != n || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::domain("weights must be finite, nonnegative, one per row"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 1.0) {
        return Err(Error::domain("weights must sum to more than 1"));
    }
    let (xc, x_means) = weighted_center(x, weights, total);
    let (yc, y_means) = weighted_center(y, weights, total);
    let dof = total - 1.0;
    let sxx = guarded_cov(&xc, dof, "X")?;
    let syy = guarded_cov(&yc, dof, "Y")?;
    let sxy = cross_cov(&xc, &yc, dof);

    let sxx_isqrt = inverse_sqrt_spd(&sxx)?;
    let syy_inv = syy
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Rank("Y covariance is not invertible".into()))?;
    let m = &sxx_isqrt * &sxy * &syy_inv * sxy.transpose() * &sxx_isqrt;
    let m = (&m + m.transpose()) * 0.5;
    let eig = jacobi_eigen(&m)?;
    let rho2 = eig.values[0].max(0.0);
    let u = eig.vectors.column(0).into_owned();

    let mut a = &sxx_isqrt * u;
    let var_a = (a.transpose() * &sxx * &a)[(0, 0)];
    a /= var_a.sqrt();
    let mut b = &syy_inv * sxy.transpose() * &a;
    let var_b = (b.transpose() * &syy * &b)[(0, 0)];
    if !(var_b > 0.0) {
        return Err(Error::Rank("canonical Y weights vanish (zero cross-covariance)".into()));
    }
    b /= var_b.sqrt();

    let lead = b
        .iter()
        .enumerate()
        .fold((0usize, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc })
        .0;
    if b[lead] < 0.0 {
        a = -a;
        b = -b;
    }
    Ok(CancorFit {
        x_weights: a.iter().copied().collect(),
        y_weights: b.iter().copied().collect(),
        correlation: rho2.sqrt().min(1.0),
        x_means,
        y_means,
    })
}

impl CancorFit {
    /// Canonical score of an X row (centred at the training means).
    pub fn x_score(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.x_means)
            .zip(&self.x_weights)
            .map(|((v, m), w)| (v - m) * w)
            .sum()
    }
}
