//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotation method for a symmetric matrix.
///
/// Only the upper triangle is read. Sweeps continue until the off-diagonal
/// mass falls below `1e-30` of the total squared Frobenius norm.
pub fn jacobi_eigen(matrix: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::domain("jacobi_eigen needs a square matrix"));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("jacobi_eigen input has non-finite entries"));
    }
    let mut a = DMatrix::from_fn(n, n, |i, j| {
        if i <= j {
            matrix[(i, j)]
        } else {
            matrix[(j, i)]
        }
    });
    let mut v = DMatrix::<f64>::identity(n, n);
    let total: f64 = a.iter().map(|x| x * x).sum();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off <= 1e-30 * total || off == 0.0 {
            return Ok(sorted(a, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::SolverFailure(format!(
        "Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps"
    )))
}

fn sorted(a: DMatrix<f64>, v: DMatrix<f64>) -> SymmetricEigen {
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymmetricEigen { values, vectors }
}

/// Column-centred copy of `m` together with the column means.
pub fn center_columns(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = m.nrows() as f64;
    let means = DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / n);
    let centered = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - means[j]);
    (centered, means)
}

/// Numerical rank of `m` from its singular values.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = smax * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON * 16.0;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Fails with a rank error unless `m` has full column rank.
pub fn require_full_column_rank(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let r = rank(m);
    if r < m.ncols() {
        return Err(Error::Rank(format!(
            "{what} has rank {r} but {} columns",
            m.ncols()
        )));
    }
    Ok(())
}

/// Ordinary least squares coefficients of `y` on the columns of `x`.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::domain("least_squares: row count mismatch"));
    }
    if x.nrows() < x.ncols() {
        return Err(Error::InsufficientData {
            n: x.nrows(),
            p: x.ncols(),
        });
    }
    require_full_column_rank(x, "least-squares design")?;
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Rank("least-squares triangular factor is singular".into()))
}

/// Symmetric inverse square root `S^{-1/2}` via the Jacobi decomposition.
pub fn inverse_sqrt_spd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = jacobi_eigen(s)?;
    let n = s.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda <= 0.0 {
            return Err(Error::Rank("matrix is not positive definite".into()));
        }
        let col = eig.vectors.column(k);
        out += (col * col.transpose()) / lambda.sqrt();
    }
    Ok(out)
}
