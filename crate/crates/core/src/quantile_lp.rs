//! Check loss, sample quantiles, and exact quantile regression.
//!
//! Quantile regression minimises `sum_i rho_tau(y_i - x_i'b)` with
//! `rho_tau(u) = u (tau - 1{u < 0})`. In LP form this is
//!
//! ```text
//! min  tau * sum(u) + (1 - tau) * sum(v)
//! s.t. X b + u - v = y,   u, v >= 0,   b free
//! ```
//!
//! [`fit_quantile_regression`] runs the primal simplex on this program in
//! reduced form: the free coefficients are always basic, so a basis is fully
//! described by the `p` observations whose `u_i` and `v_i` are both nonbasic
//! (the interpolated rows). Each pivot then costs a `p x p` solve plus
//! `O(N p)` work instead of a full tableau update. Variable ordering, pricing
//! and ratio-test tie-breaks follow the dense tableau in [`crate::simplex`],
//! which [`fit_quantile_regression_dense`] uses directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{self, LinearProgram, OPTIMALITY_TOL};

/// Quantile level of the check loss, strictly between 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckLossParams {
    tau: f64,
}

impl CheckLossParams {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::domain(format!("tau must lie in (0, 1), got {tau}")));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn loss(&self, u: f64) -> f64 {
        if u < 0.0 {
            (self.tau - 1.0) * u
        } else {
            self.tau * u
        }
    }

    pub fn total_loss<'a>(&self, residuals: impl IntoIterator<Item = &'a f64>) -> f64 {
        residuals.into_iter().map(|&r| self.loss(r)).sum()
    }
}

/// `rho_tau(u)`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::domain(format!("check loss argument must be finite, got {u}")));
    }
    Ok(CheckLossParams::new(tau)?.loss(u))
}

/// A minimiser of `sum_i rho_tau(x_i - theta)`.
///
/// Returns the order statistic `x_(k)` with `k` the smallest integer such that
/// `k >= n tau`. When the minimiser is an interval this is its lower endpoint.
pub fn sample_quantile(xs: &[f64], tau: f64) -> Result<f64> {
    let params = CheckLossParams::new(tau)?;
    if xs.is_empty() {
        return Err(Error::domain("sample_quantile of an empty sample"));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("sample_quantile input must be finite"));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // fma gives k - n*tau with a single rounding, so its sign is exact.
    let mut k = (n * params.tau()).ceil().max(1.0);
    while k > 1.0 && f64::mul_add(-n, params.tau(), k - 1.0) >= 0.0 {
        k -= 1.0;
    }
    while f64::mul_add(-n, params.tau(), k) < 0.0 {
        k += 1.0;
    }
    Ok(sorted[(k as usize).min(sorted.len()) - 1])
}

/// A quantile regression instance.
#[derive(Debug, Clone)]
pub struct QrProblem {
    design: DMatrix<f64>,
    response: DVector<f64>,
    params: CheckLossParams,
}

impl QrProblem {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>, tau: f64) -> Result<Self> {
        let params = CheckLossParams::new(tau)?;
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::domain("design must have at least one row and one column"));
        }
        if design.nrows() != response.len() {
            return Err(Error::domain(format!(
                "design has {} rows but response has {} entries",
                design.nrows(),
                response.len()
            )));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("quantile regression data must be finite"));
        }
        Ok(Self {
            design,
            response,
            params,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], response: &[f64], tau: f64) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::domain("design rows have unequal lengths"));
        }
        let design = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(design, DVector::from_column_slice(response), tau)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn tau(&self) -> f64 {
        self.params.tau()
    }

    pub fn params(&self) -> CheckLossParams {
        self.params
    }

    /// Problem whose objective is `sum_i w_i rho_tau(y_i - x_i'b)`.
    ///
    /// Positive homogeneity of the check loss lets weights be folded into the
    /// rows. Weights must be finite and nonnegative.
    pub fn weighted(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.response.len() {
            return Err(Error::domain("weight vector length differs from observation count"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("weights must be finite and nonnegative"));
        }
        let design =
            DMatrix::from_fn(self.design.nrows(), self.design.ncols(), |i, j| {
                self.design[(i, j)] * weights[i]
            });
        let response = DVector::from_fn(self.response.len(), |i, _| self.response[i] * weights[i]);
        Self::new(design, response, self.tau())
    }

    pub fn objective_at(&self, beta: &[f64]) -> Result<f64> {
        if beta.len() != self.design.ncols() {
            return Err(Error::domain("coefficient length differs from design columns"));
        }
        let b = DVector::from_column_slice(beta);
        let r = &self.response - &self.design * b;
        Ok(self.params.total_loss(r.iter()))
    }
}

/// Solution of a quantile regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrFit {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub residuals: Vec<f64>,
    /// The `p` interpolated observations, ascending.
    pub vertex_basis: Vec<usize>,
    pub pivots: usize,
}

const DEGENERATE_RUN_BEFORE_BLAND: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Upper,
    Lower,
}

/// Exact quantile regression by the reduced-form primal simplex.
pub fn fit_quantile_regression(problem: &QrProblem) -> Result<QrFit> {
    fit_quantile_regression_from(problem, &[])
}

/// As [`fit_quantile_regression`], starting from the vertex that
/// interpolates the rows in `start` when they are `p` independent rows.
///
/// Any other `start` (for instance an empty slice) falls back to the
/// lexicographically first independent rows. Refits of a slightly perturbed
/// problem converge in far fewer pivots from the previous optimal vertex.
pub fn fit_quantile_regression_from(problem: &QrProblem, start: &[usize]) -> Result<QrFit> {
    let x = problem.design();
    let y = problem.response();
    let tau = problem.tau();
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::InsufficientData { n, p });
    }

    let mut h = if usable_start(x, start) { start.to_vec() } else { initial_basis(x)? };
    let mut in_h: Vec<Option<usize>> = vec![None; n];
    for (pos, &i) in h.iter().enumerate() {
        in_h[i] = Some(pos);
    }

    let yscale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let ztol = simplex::FEASIBILITY_TOL * yscale;
    let row_norms: Vec<f64> = (0..n).map(|i| x.row(i).norm()).collect();

    let mut side: Vec<Side> = vec![Side::Upper; n];
    let mut pivots = 0usize;
    let max_pivots = 50 * (n + p) + 1000;
    let mut degenerate_run = 0usize;
    let var_index = |i: usize, s: Side| match s {
        Side::Upper => 2 * p + i,
        Side::Lower => 2 * p + n + i,
    };

    loop {
        let xh = DMatrix::from_fn(p, p, |r, c| x[(h[r], c)]);
        let lu = xh.clone().lu();
        let yh = DVector::from_fn(p, |r, _| y[h[r]]);
        let beta = lu
            .solve(&yh)
            .ok_or_else(|| Error::Rank("interpolation basis became singular".into()))?;
        let mut resid = y - x * &beta;
        for &i in &h {
            resid[i] = 0.0;
        }
        if pivots == 0 {
            for i in 0..n {
                side[i] = if resid[i] < 0.0 { Side::Lower } else { Side::Upper };
            }
        }

        let psi = DVector::from_fn(n, |i, _| match (in_h[i], side[i]) {
            (Some(_), _) => 0.0,
            (None, Side::Upper) => tau,
            (None, Side::Lower) => tau - 1.0,
        });
        let w = x.tr_mul(&psi);
        let c = xh
            .transpose()
            .lu()
            .solve(&w)
            .ok_or_else(|| Error::Rank("interpolation basis became singular".into()))?;

        // Entering candidates: u_k (sigma = -1) and v_k (sigma = +1) for k in h.
        let bland = degenerate_run >= DEGENERATE_RUN_BEFORE_BLAND;
        let mut entering: Option<(usize, f64, f64, usize)> = None; // (var, rc, sigma, pos)
        let mut candidates: Vec<(usize, f64, f64, usize)> = Vec::with_capacity(2 * p);
        for (pos, &k) in h.iter().enumerate() {
            candidates.push((var_index(k, Side::Upper), tau + c[pos], -1.0, pos));
            candidates.push((var_index(k, Side::Lower), (1.0 - tau) - c[pos], 1.0, pos));
        }
        candidates.sort_by_key(|c| c.0);
        for cand in candidates {
            if cand.1 < -OPTIMALITY_TOL {
                match entering {
                    None => entering = Some(cand),
                    Some(best) if !bland && cand.1 < best.1 => entering = Some(cand),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
        }

        let Some((_, _, sigma, pos)) = entering else {
            let objective = problem.params().total_loss(resid.iter());
            let mut vertex_basis = h.clone();
            vertex_basis.sort_unstable();
            return Ok(QrFit {
                coefficients: beta.iter().copied().collect(),
                objective,
                residuals: resid.iter().copied().collect(),
                vertex_basis,
                pivots,
            });
        };

        let mut e = DVector::zeros(p);
        e[pos] = sigma;
        let dir = lu
            .solve(&e)
            .ok_or_else(|| Error::Rank("interpolation basis became singular".into()))?;
        let dir_norm = dir.norm();
        let zs = x * &dir;

        // Ratio test over basic u_i / v_i.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..n {
            if in_h[i].is_some() {
                continue;
            }
            let z = zs[i];
            let ptol = 1e-11 * row_norms[i] * dir_norm;
            let ratio = match side[i] {
                Side::Upper if z > ptol => resid[i].max(0.0) / z,
                Side::Lower if z < -ptol => (-resid[i]).max(0.0) / -z,
                _ => continue,
            };
            match leave {
                None => leave = Some((i, ratio)),
                Some((r, best)) => {
                    let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                    if (ratio < best && !tie)
                        || (tie && var_index(i, side[i]) < var_index(r, side[r]))
                    {
                        leave = Some((i, ratio));
                    }
                }
            }
        }
        let Some((leaving, step)) = leave else {
            return Err(Error::SolverFailure(
                "quantile regression LP reported unbounded".into(),
            ));
        };

        let z_leave = zs[leaving].abs();
        if step * z_leave <= ztol {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }

        let k = h[pos];
        in_h[k] = None;
        side[k] = if sigma < 0.0 { Side::Upper } else { Side::Lower };
        h[pos] = leaving;
        in_h[leaving] = Some(pos);

        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::SolverFailure(format!(
                "quantile regression exceeded {max_pivots} pivots"
            )));
        }
    }
}

fn usable_start(x: &DMatrix<f64>, start: &[usize]) -> bool {
    let (n, p) = x.shape();
    if start.len() != p || start.iter().any(|&i| i >= n) {
        return false;
    }
    let mut seen = vec![false; n];
    if start.iter().any(|&i| std::mem::replace(&mut seen[i], true)) {
        return false;
    }
    independent_rows(x, start.iter().copied()).len() == p
}

/// Lexicographically first set of `p` linearly independent rows.
fn initial_basis(x: &DMatrix<f64>) -> Result<Vec<usize>> {
    let p = x.ncols();
    let chosen = independent_rows(x, 0..x.nrows());
    if chosen.len() == p {
        return Ok(chosen);
    }
    Err(Error::Rank(format!(
        "design has rank {} but {} columns",
        chosen.len(),
        p
    )))
}

/// Greedy Gram-Schmidt selection of independent rows, in the given order.
fn independent_rows(x: &DMatrix<f64>, order: impl Iterator<Item = usize>) -> Vec<usize> {
    let p = x.ncols();
    let mut chosen = Vec::with_capacity(p);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(p);
    for i in order {
        let row = x.row(i).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            continue;
        }
        let mut r = row.clone();
        for q in &ortho {
            let proj = q.dot(&r);
            r.axpy(-proj, q, 1.0);
        }
        for q in &ortho {
            let proj = q.dot(&r);
            r.axpy(-proj, q, 1.0);
        }
        let rn = r.norm();
        if rn > 1e-9 * norm {
            ortho.push(r / rn);
            chosen.push(i);
            if chosen.len() == p {
                break;
            }
        }
    }
    chosen
}

/// Quantile regression through the full dense tableau of [`crate::simplex`].
///
/// Same optimum as [`fit_quantile_regression`] at a higher cost; kept as an
/// independent route for cross-checking.
pub fn fit_quantile_regression_dense(problem: &QrProblem) -> Result<QrFit> {
    let x = problem.design();
    let y = problem.response();
    let tau = problem.tau();
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::InsufficientData { n, p });
    }
    crate::linalg::require_full_column_rank(x, "quantile regression design")?;

    let nv = 2 * p + 2 * n;
    let mut cost = vec![0.0; nv];
    for i in 0..n {
        cost[2 * p + i] = tau;
        cost[2 * p + n + i] = 1.0 - tau;
    }
    let mut lp = LinearProgram::new(cost, vec![false; nv]);
    for i in 0..n {
        let mut row = vec![0.0; nv];
        for j in 0..p {
            row[j] = x[(i, j)];
            row[p + j] = -x[(i, j)];
        }
        row[2 * p + i] = 1.0;
        row[2 * p + n + i] = -1.0;
        lp.add_constraint(row, y[i]);
    }
    let sol = simplex::solve(&lp)?;
    let beta: Vec<f64> = (0..p).map(|j| sol.x[j] - sol.x[p + j]).collect();
    let bvec = DVector::from_column_slice(&beta);
    let resid = y - x * &bvec;
    let yscale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut vertex_basis: Vec<usize> = (0..n)
        .filter(|&i| !sol.basis.contains(&(2 * p + i)) && !sol.basis.contains(&(2 * p + n + i)))
        .collect();
    if vertex_basis.is_empty() {
        vertex_basis = (0..n).filter(|&i| resid[i].abs() <= 1e-9 * yscale).collect();
    }
    Ok(QrFit {
        coefficients: beta,
        objective: problem.params().total_loss(resid.iter()),
        residuals: resid.iter().copied().collect(),
        vertex_basis,
        pivots: sol.pivots,
    })
}
