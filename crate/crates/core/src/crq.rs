//! First canonical regression quantile pair.
//!
//! Finds `(alpha, beta)` minimising `sum_i rho_tau(x_i'beta - y_i'alpha)`
//! subject to `sum_j |alpha_j| = 1`. Inside a fixed sign orthant
//! `s_j alpha_j >= 0` the constraint is linear, so each orthant is one LP;
//! all `2^q` orthants are solved and the smallest objective wins.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::quantile_lp::{fit_quantile_regression, CheckLossParams, QrFit, QrProblem};
use crate::simplex::{self, LinearProgram};

/// Largest response count accepted; orthant enumeration is `2^q` LPs.
pub const MAX_RESPONSES: usize = 12;

#[derive(Debug, Clone)]
pub struct CrqProblem {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    params: CheckLossParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrqFit {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub objective: f64,
    /// Orthant that produced the solution (`+1` / `-1` per response).
    pub sign_pattern: Vec<i8>,
    pub tau: f64,
}

impl CrqProblem {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, tau: f64) -> Result<Self> {
        let params = CheckLossParams::new(tau)?;
        let (n, p) = x.shape();
        let q = y.ncols();
        if y.nrows() != n {
            return Err(Error::domain(format!(
                "X has {n} rows but Y has {}",
                y.nrows()
            )));
        }
        if q == 0 || p == 0 {
            return Err(Error::domain("X and Y need at least one column each"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("canonical regression data must be finite"));
        }
        if n <= p + q {
            return Err(Error::InsufficientData { n, p: p + q });
        }
        Ok(Self { x, y, params })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn tau(&self) -> f64 {
        self.params.tau()
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    /// Rows scaled by nonnegative observation weights.
    pub fn weighted(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.n_obs() {
            return Err(Error::domain("weight vector length differs from observation count"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("weights must be finite and nonnegative"));
        }
        let x = DMatrix::from_fn(self.x.nrows(), self.x.ncols(), |i, j| self.x[(i, j)] * weights[i]);
        let y = DMatrix::from_fn(self.y.nrows(), self.y.ncols(), |i, j| self.y[(i, j)] * weights[i]);
        Ok(Self {
            x,
            y,
            params: self.params,
        })
    }
}

/// `sum_i rho_tau(x_i'beta - y_i'alpha)`.
pub fn crq_objective(problem: &CrqProblem, alpha: &[f64], beta: &[f64]) -> Result<f64> {
    if alpha.len() != problem.y.ncols() || beta.len() != problem.x.ncols() {
        return Err(Error::domain(format!(
            "expected alpha of length {} and beta of length {}, got {} and {}",
            problem.y.ncols(),
            problem.x.ncols(),
            alpha.len(),
            beta.len()
        )));
    }
    let a = DVector::from_column_slice(alpha);
    let b = DVector::from_column_slice(beta);
    let r = &problem.x * b - &problem.y * a;
    Ok(problem.params.total_loss(r.iter()))
}

/// Sign pattern number `index` in lexicographic order, `+1` before `-1`.
pub fn sign_pattern(q: usize, index: usize) -> Vec<i8> {
    (0..q)
        .map(|j| if (index >> (q - 1 - j)) & 1 == 1 { -1 } else { 1 })
        .collect()
}

/// Global minimiser over all sign orthants.
pub fn fit_crq(problem: &CrqProblem) -> Result<CrqFit> {
    let q = problem.y.ncols();
    if q > MAX_RESPONSES {
        return Err(Error::domain(format!(
            "{q} responses exceed the orthant enumeration cap of {MAX_RESPONSES}"
        )));
    }
    linalg::require_full_column_rank(&problem.x, "explanatory matrix")?;
    let starts = StartFits::new(problem)?;
    let mut best: Option<CrqFit> = None;
    for index in 0..(1usize << q) {
        let fit = solve_orthant(problem, &sign_pattern(q, index), &starts)?;
        best = match best {
            None => Some(fit),
            Some(b) => {
                let margin = 1e-12 * (1.0 + b.objective.abs());
                if fit.objective < b.objective - margin {
                    Some(fit)
                } else {
                    Some(b)
                }
            }
        };
    }
    Ok(best.expect("at least one orthant"))
}

/// Minimiser restricted to the orthant `signs[j] * alpha_j >= 0`.
pub fn fit_crq_orthant(problem: &CrqProblem, signs: &[i8]) -> Result<CrqFit> {
    if signs.len() != problem.y.ncols() || signs.iter().any(|s| *s != 1 && *s != -1) {
        return Err(Error::domain("sign pattern must hold one +1/-1 per response"));
    }
    linalg::require_full_column_rank(&problem.x, "explanatory matrix")?;
    solve_orthant(problem, signs, &StartFits::new(problem)?)
}

/// Single-response quantile regressions of `+y_j` and `-y_j`, used as
/// starting vertices: `alpha = s_j e_j` with the matching coefficients is
/// feasible in every orthant whose `j`-th sign is `s_j`.
struct StartFits {
    /// `fits[j][0]` for sign `+1`, `fits[j][1]` for `-1`.
    fits: Vec<[QrFit; 2]>,
}

impl StartFits {
    fn new(problem: &CrqProblem) -> Result<Self> {
        let q = problem.y.ncols();
        // rho_tau(x'b - s y) is the level 1 - tau check loss of s y - x'b
        let level = 1.0 - problem.tau();
        let fits = (0..q)
            .map(|j| {
                let fit = |s: f64| {
                    let r = DVector::from_fn(problem.n_obs(), |i, _| s * problem.y[(i, j)]);
                    fit_quantile_regression(&QrProblem::new(problem.x.clone(), r, level)?)
                };
                Ok([fit(1.0)?, fit(-1.0)?])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { fits })
    }

    /// Basis columns for the orthant `signs` in the orthant LP's layout.
    fn basis(&self, signs: &[i8], n: usize, p: usize) -> Vec<usize> {
        let q = signs.len();
        let (j, fit) = (0..q)
            .map(|j| (j, &self.fits[j][usize::from(signs[j] < 0)]))
            .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective))
            .expect("q >= 1");
        let mut cols: Vec<usize> = (0..p).collect();
        cols.push(p + j);
        let mut vertex = vec![false; n];
        for &i in &fit.vertex_basis {
            vertex[i] = true;
        }
        for i in (0..n).filter(|&i| !vertex[i]) {
            // residual of the orthant row is -(s y_j - x'b)
            if fit.residuals[i] <= 0.0 {
                cols.push(p + q + i);
            } else {
                cols.push(p + q + n + i);
            }
        }
        cols
    }
}

fn solve_orthant(problem: &CrqProblem, signs: &[i8], starts: &StartFits) -> Result<CrqFit> {
    let (n, p) = problem.x.shape();
    let q = problem.y.ncols();
    let tau = problem.tau();
    let a0 = p;
    let u0 = p + q;
    let v0 = p + q + n;
    let nv = p + q + 2 * n;

    let mut cost = vec![0.0; nv];
    for i in 0..n {
        cost[u0 + i] = tau;
        cost[v0 + i] = 1.0 - tau;
    }
    let mut free = vec![false; nv];
    free[..p].iter_mut().for_each(|f| *f = true);
    let mut lp = LinearProgram::new(cost, free);
    for i in 0..n {
        let mut row = vec![0.0; nv];
        for j in 0..p {
            row[j] = problem.x[(i, j)];
        }
        for j in 0..q {
            row[a0 + j] = -f64::from(signs[j]) * problem.y[(i, j)];
        }
        row[u0 + i] = -1.0;
        row[v0 + i] = 1.0;
        lp.add_constraint(row, 0.0);
    }
    let mut norm = vec![0.0; nv];
    norm[a0..a0 + q].iter_mut().for_each(|v| *v = 1.0);
    lp.add_constraint(norm, 1.0);

    let sol = simplex::solve_from(&lp, &starts.basis(signs, n, p))?;
    let mut alpha: Vec<f64> = (0..q)
        .map(|j| f64::from(signs[j]) * sol.x[a0 + j].max(0.0))
        .collect();
    let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
    if l1 <= 0.0 {
        return Err(Error::SolverFailure("orthant LP returned alpha = 0".into()));
    }
    alpha.iter_mut().for_each(|a| *a /= l1);
    let beta: Vec<f64> = sol.x[..p].to_vec();
    let objective = crq_objective(problem, &alpha, &beta)?;
    Ok(CrqFit {
        alpha,
        beta,
        objective,
        sign_pattern: signs.to_vec(),
        tau,
    })
}
