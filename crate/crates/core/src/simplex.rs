//! Dense two-phase primal simplex for small linear programs in equality form.
//!
//! Solves `min c'x  s.t.  A x = b,  x_j >= 0` for every `j` not flagged free.
//! Pricing is Dantzig (most negative reduced cost) with ties broken by the
//! smallest index; after a run of degenerate pivots the solver switches to
//! Bland's rule until the next non-degenerate step, which rules out cycling.
//! Free variables enter in whichever direction improves the objective and
//! never leave the basis once they are in it.

use crate::error::{Error, Result};

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_RUN_BEFORE_BLAND: usize = 20;

/// A linear program in equality form.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    /// Constraint rows, each of length `cost.len()`.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    /// `free[j]` marks an unrestricted variable.
    pub free: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic structural variables, ascending.
    pub basis: Vec<usize>,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(cost: Vec<f64>, free: Vec<bool>) -> Self {
        Self {
            cost,
            rows: Vec::new(),
            rhs: Vec::new(),
            free,
        }
    }

    pub fn add_constraint(&mut self, row: Vec<f64>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    fn validate(&self) -> Result<()> {
        let n = self.cost.len();
        if self.free.len() != n {
            return Err(Error::domain("free-flag length differs from cost length"));
        }
        if self.rows.len() != self.rhs.len() {
            return Err(Error::domain("row count differs from rhs length"));
        }
        if self.rows.iter().any(|r| r.len() != n) {
            return Err(Error::domain("constraint row has the wrong length"));
        }
        let finite = self.cost.iter().all(|v| v.is_finite())
            && self.rhs.iter().all(|v| v.is_finite())
            && self.rows.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("linear program has non-finite coefficients"));
        }
        Ok(())
    }
}

struct Tableau {
    m: usize,
    /// structural + artificial columns
    ncols: usize,
    n_struct: usize,
    width: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
    free: Vec<bool>,
    sign: Vec<f64>,
    pivots: usize,
    max_pivots: usize,
}

enum Pricing {
    Phase1,
    Phase2,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.t[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, row: usize, col: usize, d: &mut [f64]) {
        let w = self.width;
        let p = self.t[row * w + col];
        let inv = 1.0 / p;
        for v in &mut self.t[row * w..(row + 1) * w] {
            *v *= inv;
        }
        self.t[row * w + col] = 1.0;
        let (before, rest) = self.t.split_at_mut(row * w);
        let (prow, after) = rest.split_at_mut(w);
        for chunk in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = chunk[col];
            if f != 0.0 {
                for (v, pv) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                chunk[col] = 0.0;
            }
        }
        let f = d[col];
        if f != 0.0 {
            for (v, pv) in d.iter_mut().zip(prow.iter()) {
                *v -= f * pv;
            }
            d[col] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    fn negate_column(&mut self, col: usize, d: &mut [f64]) {
        for i in 0..self.m {
            self.t[i * self.width + col] = -self.t[i * self.width + col];
        }
        d[col] = -d[col];
        self.sign[col] = -self.sign[col];
    }

    /// Runs simplex iterations against the reduced-cost row `d`
    /// (last entry holds minus the objective).
    fn iterate(&mut self, d: &mut [f64], pricing: Pricing) -> Result<()> {
        let mut is_basic = vec![false; self.ncols];
        for &b in &self.basis {
            is_basic[b] = true;
        }
        let eligible_cols = match pricing {
            Pricing::Phase1 => self.ncols,
            Pricing::Phase2 => self.n_struct,
        };
        let mut degenerate_run = 0usize;
        loop {
            let bland = degenerate_run >= DEGENERATE_RUN_BEFORE_BLAND;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..eligible_cols {
                if is_basic[j] {
                    continue;
                }
                let score = if self.free[j] { -d[j].abs() } else { d[j] };
                if score < -OPTIMALITY_TOL {
                    match entering {
                        None => entering = Some((j, score)),
                        Some((_, best)) if !bland && score < best => entering = Some((j, score)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((col, _)) = entering else {
                return Ok(());
            };
            if self.free[col] && d[col] > 0.0 {
                self.negate_column(col, d);
            }

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if self.free[self.basis[i]] {
                    continue;
                }
                let a = self.at(i, col);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((r, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                            if (ratio < best && !tie)
                                || (tie && self.basis[i] < self.basis[r])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, step)) = leave else {
                return Err(Error::SolverFailure("linear program is unbounded".into()));
            };
            if step <= FEASIBILITY_TOL {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            is_basic[self.basis[row]] = false;
            self.pivot(row, col, d);
            is_basic[col] = true;
            if self.pivots > self.max_pivots {
                return Err(Error::SolverFailure(format!(
                    "simplex exceeded {} pivots",
                    self.max_pivots
                )));
            }
        }
    }
}

/// Rows scaled to unit max-norm with nonnegative rhs; empty rows dropped.
fn scaled_rows(lp: &LinearProgram) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(lp.rows.len());
    for (row, &b) in lp.rows.iter().zip(&lp.rhs) {
        let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            if b.abs() > FEASIBILITY_TOL {
                return Err(Error::SolverFailure(
                    "linear program is infeasible (empty row with nonzero rhs)".into(),
                ));
            }
            continue;
        }
        let flip = if b < 0.0 { -1.0 } else { 1.0 };
        let f = flip / scale;
        rows.push((row.iter().map(|v| v * f).collect(), b * f));
    }
    Ok(rows)
}

/// Solves starting from the basis spanned by the columns in `start`.
///
/// The columns must form a nonsingular basis of the (non-empty) rows whose
/// basic solution is feasible; free columns may be included. When either
/// condition fails the two-phase method is used instead.
pub fn solve_from(lp: &LinearProgram, start: &[usize]) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.cost.len();
    let rows = scaled_rows(lp)?;
    let m = rows.len();
    if start.len() != m || start.iter().any(|&j| j >= n) {
        return solve(lp);
    }
    let width = n + 1;
    let mut t = vec![0.0; m * width];
    for (i, (r, b)) in rows.iter().enumerate() {
        t[i * width..i * width + n].copy_from_slice(r);
        t[i * width + n] = *b;
    }
    let mut tab = Tableau {
        m,
        ncols: n,
        n_struct: n,
        width,
        t,
        basis: vec![usize::MAX; m],
        free: lp.free.clone(),
        sign: vec![1.0; n],
        pivots: 0,
        max_pivots: 50 * (m + n) + 1000,
    };
    let mut dummy = vec![0.0; width];
    let mut assigned = vec![false; m];
    for &col in start {
        let row = (0..m)
            .filter(|&i| !assigned[i])
            .max_by(|&a, &b| tab.at(a, col).abs().total_cmp(&tab.at(b, col).abs()));
        match row {
            Some(i) if tab.at(i, col).abs() > 1e-9 => {
                tab.pivot(i, col, &mut dummy);
                assigned[i] = true;
            }
            _ => return solve(lp),
        }
    }
    for i in 0..m {
        let b = tab.basis[i];
        if !tab.free[b] && tab.rhs(i) < -FEASIBILITY_TOL {
            return solve(lp);
        }
    }
    tab.pivots = 0;
    phase_two(tab, lp)
}

/// Solves the program; fails on infeasibility, unboundedness, or the pivot cap.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.cost.len();

    let rows = scaled_rows(lp)?;
    let m = rows.len();

    // A nonnegative column with a single positive entry gives a starting basic variable.
    let mut basis: Vec<Option<usize>> = vec![None; m];
    for j in 0..n {
        if lp.free[j] {
            continue;
        }
        let mut hit = None;
        let mut count = 0;
        for (i, (r, _)) in rows.iter().enumerate() {
            if r[j] != 0.0 {
                count += 1;
                hit = Some(i);
            }
        }
        if count == 1 {
            let i = hit.unwrap();
            if rows[i].0[j] > 0.0 && basis[i].is_none() {
                basis[i] = Some(j);
            }
        }
    }
    let art_rows: Vec<usize> = (0..m).filter(|&i| basis[i].is_none()).collect();
    let n_art = art_rows.len();
    let ncols = n + n_art;
    let width = ncols + 1;

    let mut t = vec![0.0; m * width];
    for (i, (r, b)) in rows.iter().enumerate() {
        t[i * width..i * width + n].copy_from_slice(r);
        t[i * width + width - 1] = *b;
    }
    for (k, &i) in art_rows.iter().enumerate() {
        t[i * width + n + k] = 1.0;
        basis[i] = Some(n + k);
    }
    let mut free = lp.free.clone();
    free.extend(std::iter::repeat_n(false, n_art));

    let mut tab = Tableau {
        m,
        ncols,
        n_struct: n,
        width,
        t,
        basis: basis.into_iter().map(|b| b.unwrap()).collect(),
        free,
        sign: vec![1.0; ncols],
        pivots: 0,
        max_pivots: 50 * (m + ncols) + 1000,
    };

    // Unit columns picked as starting basics may need their row normalised.
    for i in 0..m {
        let b = tab.basis[i];
        let p = tab.at(i, b);
        if p != 1.0 {
            for v in &mut tab.t[i * width..(i + 1) * width] {
                *v /= p;
            }
        }
    }

    if n_art > 0 {
        let mut d = vec![0.0; width];
        for &i in &art_rows {
            for j in 0..width {
                d[j] -= tab.at(i, j);
            }
        }
        for k in 0..n_art {
            d[n + k] = 0.0;
        }
        tab.iterate(&mut d, Pricing::Phase1)?;
        let infeasibility = -d[width - 1];
        if infeasibility > FEASIBILITY_TOL * (1 + m) as f64 {
            return Err(Error::SolverFailure(format!(
                "linear program is infeasible (phase-one residual {infeasibility:.3e})"
            )));
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut keep = vec![true; m];
        for i in 0..m {
            if tab.basis[i] >= n {
                let col = (0..n).find(|&j| tab.at(i, j).abs() > 1e-9);
                match col {
                    Some(j) => {
                        let mut dummy = vec![0.0; width];
                        tab.pivot(i, j, &mut dummy);
                    }
                    None => keep[i] = false,
                }
            }
        }
        if keep.iter().any(|k| !k) {
            let mut t2 = Vec::with_capacity(tab.t.len());
            let mut b2 = Vec::new();
            for i in 0..m {
                if keep[i] {
                    t2.extend_from_slice(&tab.t[i * width..(i + 1) * width]);
                    b2.push(tab.basis[i]);
                }
            }
            tab.t = t2;
            tab.basis = b2;
            tab.m = tab.basis.len();
        }
    }

    phase_two(tab, lp)
}

fn phase_two(mut tab: Tableau, lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.cost.len();
    let width = tab.width;
    let mut d = vec![0.0; width];
    for j in 0..n {
        d[j] = lp.cost[j] * tab.sign[j];
    }
    for i in 0..tab.m {
        let b = tab.basis[i];
        let cb = if b < n { lp.cost[b] * tab.sign[b] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                d[j] -= cb * tab.at(i, j);
            }
        }
    }
    tab.iterate(&mut d, Pricing::Phase2)?;

    let mut x = vec![0.0; n];
    for i in 0..tab.m {
        let b = tab.basis[i];
        if b < n {
            let v = tab.rhs(i);
            x[b] = if tab.free[b] { v } else { v.max(0.0) } * tab.sign[b];
        }
    }
    let objective = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    let mut basis: Vec<usize> = tab.basis.iter().copied().filter(|&b| b < n).collect();
    basis.sort_unstable();
    Ok(LpSolution {
        x,
        objective,
        basis,
        pivots: tab.pivots,
    })
}
