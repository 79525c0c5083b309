//! Synthetic panels with known ground truth, plus brute-force oracles.
//!
//! Responses are simulated in signed-log space and stored as
//! `sign(z) exp(|z|)`, so the signed-log transform returns `z` up to
//! rounding. For every year with a full window behind it the composite
//! `alpha'y` equals the index `x*'beta` of the window `horizon` years
//! earlier plus noise from the configured family.
//!
//! Company `i` draws from the ChaCha20 stream `(seed, i)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::crq::{crq_objective, CrqFit, CrqProblem};
use crate::error::{Error, Result};
use crate::features::{company_features, design_column_names, AggregationSpec, Transform};
use crate::panel_io::{Company, PanelDataset, Variable, NUM_VARIABLES};
use crate::quantile_lp::{fit_quantile_regression, QrFit, QrProblem};

const INDUSTRY_NAMES: [&str; 6] = ["basic", "consum", "energy", "health", "indust", "tech"];
/// Mean transformed level of each response.
const RESPONSE_LEVELS: [f64; 5] = [20.0, 18.0, 17.0, 21.0, 3.0];
/// Largest `|z|` stored; keeps `exp(|z|)` finite under heavy tails.
const MAX_LOG_MAGNITUDE: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    StudentT2,
    /// Standard normal, replaced by a 10x wider normal with probability 0.05.
    Contaminated,
}

impl NoiseFamily {
    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::StudentT2 => "student_t2",
            NoiseFamily::Contaminated => "contaminated",
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseFamily::Gaussian => rng.sample(StandardNormal),
            NoiseFamily::StudentT2 => StudentT::new(2.0).expect("valid dof").sample(rng),
            NoiseFamily::Contaminated => {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<f64>() < 0.05 {
                    10.0 * z
                } else {
                    z
                }
            }
        }
    }
}

impl std::str::FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "student_t2" | "t2" => Ok(NoiseFamily::StudentT2),
            "contaminated" => Ok(NoiseFamily::Contaminated),
            other => Err(Error::domain(format!("unknown noise family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub num_companies: usize,
    pub num_years: usize,
    pub num_industries: usize,
    pub first_year: i32,
    /// Over the design columns with CEO pay included; `None` uses [`default_beta`].
    pub true_beta: Option<Vec<f64>>,
    pub true_alpha: Vec<f64>,
    pub noise: NoiseFamily,
    /// Scale of the composite noise `alpha'y - index`.
    pub noise_scale: f64,
    /// Scale of the per-response noise that keeps `alpha` identifiable.
    pub idiosyncratic_scale: f64,
    pub aggregation: AggregationSpec,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            num_companies: 100,
            num_years: 10,
            num_industries: 6,
            first_year: 2009,
            true_beta: None,
            true_alpha: vec![0.9, 0.05, 0.0, 0.05, 0.0],
            noise: NoiseFamily::Gaussian,
            noise_scale: 0.2,
            idiosyncratic_scale: 1.0,
            aggregation: AggregationSpec::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub true_beta: Vec<f64>,
    pub true_alpha: Vec<f64>,
    pub column_names: Vec<String>,
    pub response_names: Vec<String>,
    pub industries: Vec<String>,
    /// First year whose responses follow the index relation.
    pub signal_start_year: i32,
    pub noise: NoiseFamily,
    pub noise_scale: f64,
    pub idiosyncratic_scale: f64,
    pub seed: u64,
}

/// Industry labels used for `k` industries, sorted.
pub fn industry_labels(k: usize) -> Vec<String> {
    if k <= INDUSTRY_NAMES.len() {
        INDUSTRY_NAMES[..k].iter().map(|s| s.to_string()).collect()
    } else {
        (0..k).map(|i| format!("ind{i:02}")).collect()
    }
}

/// Ground-truth coefficients used when the spec leaves `true_beta` unset.
pub fn default_beta(column_names: &[String]) -> Vec<f64> {
    let mut dummy = 0usize;
    column_names
        .iter()
        .map(|name| match name.as_str() {
            "intercept" => 2.0,
            "REV_wt" => 0.9,
            "REV_minD" => 0.1,
            "IR_wt" => 0.5,
            "EQ_wt" => -0.3,
            "MG_wt" => 0.4,
            "EPS_wt" => 0.02,
            n if n.contains('_') => 0.0,
            _ => {
                dummy += 1;
                [0.15, -0.1, 0.2, -0.05, 0.1][(dummy - 1) % 5]
            }
        })
        .collect()
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        self.aggregation.validate()?;
        if self.aggregation.transform != Transform::SignedLog {
            return Err(Error::domain("the generator works in signed-log space"));
        }
        if self.num_companies == 0 || self.num_industries == 0 {
            return Err(Error::domain("need at least one company and one industry"));
        }
        if self.num_industries > self.num_companies {
            return Err(Error::domain(format!(
                "{} industries cannot all be populated by {} companies",
                self.num_industries, self.num_companies
            )));
        }
        let needed = self.aggregation.window_years + self.aggregation.horizon_years;
        if self.num_years < needed {
            return Err(Error::domain(format!(
                "{} years leave no year with a full window and horizon (need {needed})",
                self.num_years
            )));
        }
        if self.true_alpha.len() != Variable::RESPONSES.len() {
            return Err(Error::domain(format!(
                "true_alpha needs {} entries",
                Variable::RESPONSES.len()
            )));
        }
        let l1: f64 = self.true_alpha.iter().map(|a| a.abs()).sum();
        if !((l1 - 1.0).abs() <= 1e-12) {
            return Err(Error::domain(format!("true_alpha must have unit L1 norm, got {l1}")));
        }
        if let Some(b) = &self.true_beta {
            let k = self.column_names().len();
            if b.len() != k {
                return Err(Error::domain(format!("true_beta needs {k} entries, got {}", b.len())));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("true_beta must be finite"));
            }
        }
        for s in [self.noise_scale, self.idiosyncratic_scale] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::domain("noise scales must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    /// Design columns (CEO pay included) the ground-truth beta is defined over.
    pub fn column_names(&self) -> Vec<String> {
        design_column_names(&industry_labels(self.num_industries)[1..], true)
    }
}

fn pivot(alpha: &[f64]) -> usize {
    alpha
        .iter()
        .enumerate()
        .fold((0, -1.0), |acc, (j, a)| if a.abs() > acc.1 { (j, a.abs()) } else { acc })
        .0
}

fn to_raw(z: f64) -> f64 {
    let z = z.clamp(-MAX_LOG_MAGNITUDE, MAX_LOG_MAGNITUDE);
    if z == 0.0 {
        0.0
    } else {
        z.signum() * z.abs().exp()
    }
}

fn normal(rng: &mut ChaCha20Rng, mean: f64, sd: f64) -> f64 {
    mean + sd * rng.sample::<f64, _>(StandardNormal)
}

/// Simulates a panel and returns it with the coefficients that drive it.
pub fn generate(spec: &GeneratorSpec) -> Result<(PanelDataset, GroundTruth)> {
    spec.validate()?;
    let columns = spec.column_names();
    let beta = spec.true_beta.clone().unwrap_or_else(|| default_beta(&columns));
    let alpha = &spec.true_alpha;
    let p = pivot(alpha);
    let industries = industry_labels(spec.num_industries);
    let num_dummies = industries.len() - 1;
    let agg = &spec.aggregation;
    let signal_offset = agg.window_years + agg.horizon_years - 1;

    let mut companies = Vec::with_capacity(spec.num_companies);
    for i in 0..spec.num_companies {
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let industry = i % spec.num_industries;
        let ratio_means = [
            normal(&mut rng, 0.3, 0.1),
            normal(&mut rng, 0.05, 0.03),
            normal(&mut rng, 0.1, 0.05),
            normal(&mut rng, 3.0, 1.5),
        ];
        let ratio_sd = [0.05, 0.02, 0.03, 0.5];
        let ceo_level = normal(&mut rng, 15.5, 0.5);
        let company_level = normal(&mut rng, 0.0, 1.0);

        let mut values: Vec<[f64; NUM_VARIABLES]> = Vec::with_capacity(spec.num_years);
        for t in 0..spec.num_years {
            let mut row = [0.0; NUM_VARIABLES];
            for (k, v) in Variable::EXPLANATORY.iter().enumerate() {
                row[v.index()] = normal(&mut rng, ratio_means[k], ratio_sd[k]);
            }
            row[Variable::CEOt.index()] = normal(&mut rng, ceo_level, 0.3).exp();

            let mut z = [0.0; 5];
            if t < signal_offset {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj = RESPONSE_LEVELS[j]
                        + company_level
                        + spec.idiosyncratic_scale * spec.noise.sample(&mut rng);
                }
            } else {
                let dummy = industry.checked_sub(1);
                let x = company_features(&values[..=t - agg.horizon_years], dummy, num_dummies, agg, true)?;
                let index: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
                for j in 0..5 {
                    let e = spec.idiosyncratic_scale * spec.noise.sample(&mut rng);
                    if j != p {
                        z[j] = RESPONSE_LEVELS[j] - RESPONSE_LEVELS[p] + index + e;
                    }
                }
                let eps = spec.noise_scale * spec.noise.sample(&mut rng);
                let rest: f64 = (0..5).filter(|&j| j != p).map(|j| alpha[j] * z[j]).sum();
                z[p] = (index + eps - rest) / alpha[p];
            }
            for (j, v) in Variable::RESPONSES.iter().enumerate() {
                row[v.index()] = to_raw(z[j]);
            }
            values.push(row);
        }
        companies.push(Company {
            id: format!("C{i:03}"),
            industry: industries[industry].clone(),
            values,
        });
    }
    let panel = PanelDataset::new(spec.first_year, companies)?;
    let truth = GroundTruth {
        true_beta: beta,
        true_alpha: alpha.clone(),
        column_names: columns,
        response_names: Variable::RESPONSES.iter().map(|v| v.name().to_string()).collect(),
        industries,
        signal_start_year: spec.first_year + signal_offset as i32,
        noise: spec.noise,
        noise_scale: spec.noise_scale,
        idiosyncratic_scale: spec.idiosyncratic_scale,
        seed: spec.seed,
    };
    Ok((panel, truth))
}

/// Largest problem [`brute_force_qr`] accepts.
pub const BRUTE_FORCE_MAX_N: usize = 15;
pub const BRUTE_FORCE_MAX_P: usize = 3;

fn next_subset(idx: &mut [usize], n: usize) -> bool {
    let p = idx.len();
    for k in (0..p).rev() {
        if idx[k] < n - p + k {
            idx[k] += 1;
            for m in k + 1..p {
                idx[m] = idx[m - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact quantile regression by enumerating every interpolating subset.
///
/// Subsets come in lexicographic order and a later subset wins only when its
/// objective is smaller by more than a relative `1e-12`.
pub fn brute_force_qr(design: &DMatrix<f64>, response: &DVector<f64>, tau: f64) -> Result<QrFit> {
    let problem = QrProblem::new(design.clone(), response.clone(), tau)?;
    let (n, p) = design.shape();
    if n > BRUTE_FORCE_MAX_N || p > BRUTE_FORCE_MAX_P {
        return Err(Error::domain(format!(
            "brute force is limited to N <= {BRUTE_FORCE_MAX_N}, p <= {BRUTE_FORCE_MAX_P}; got N = {n}, p = {p}"
        )));
    }
    if n < p {
        return Err(Error::InsufficientData { n, p });
    }
    let scale = design.amax().max(f64::MIN_POSITIVE);
    let mut idx: Vec<usize> = (0..p).collect();
    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    loop {
        let a = DMatrix::from_fn(p, p, |r, c| design[(idx[r], c)]);
        let b = DVector::from_fn(p, |r, _| response[idx[r]]);
        let lu = a.clone().lu();
        let det = lu.determinant();
        if det.abs() > 1e-12 * scale.powi(p as i32) {
            if let Some(beta) = lu.solve(&b) {
                let beta: Vec<f64> = beta.iter().copied().collect();
                let obj = problem.objective_at(&beta)?;
                let better = match &best {
                    None => true,
                    Some((o, _, _)) => obj < o - 1e-12 * (1.0 + o.abs()),
                };
                if better {
                    best = Some((obj, beta, idx.clone()));
                }
            }
        }
        if !next_subset(&mut idx, n) {
            break;
        }
    }
    let (objective, coefficients, vertex_basis) =
        best.ok_or_else(|| Error::Rank("every interpolating subset is singular".into()))?;
    let fitted = design * DVector::from_column_slice(&coefficients);
    let residuals = (response - fitted).iter().copied().collect();
    Ok(QrFit {
        coefficients,
        objective,
        residuals,
        vertex_basis,
        pivots: 0,
    })
}

/// Approximate two-response CRQ by scanning `alpha` on a grid.
///
/// Candidate weights are `(s1 a, s2 (1 - a))` with `a = k / m`,
/// `m = round(1 / step)`, over all sign pairs. For each candidate the
/// coefficients solve a quantile regression of `y'alpha` at level `1 - tau`.
pub fn grid_search_crq(problem: &CrqProblem, step: f64) -> Result<CrqFit> {
    let y = problem.y();
    if y.ncols() != 2 {
        return Err(Error::domain(format!(
            "grid search handles exactly 2 responses, got {}",
            y.ncols()
        )));
    }
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::domain(format!("grid step must lie in (0, 0.01], got {step}")));
    }
    let m = (1.0 / step).round() as usize;
    let tau = problem.tau();
    let mut best: Option<CrqFit> = None;
    for signs in [[1i8, 1], [1, -1], [-1, 1], [-1, -1]] {
        for k in 0..=m {
            let a = k as f64 / m as f64;
            let alpha = [f64::from(signs[0]) * a, f64::from(signs[1]) * (1.0 - a)];
            let r = DVector::from_fn(y.nrows(), |i, _| y[(i, 0)] * alpha[0] + y[(i, 1)] * alpha[1]);
            let qr = fit_quantile_regression(&QrProblem::new(problem.x().clone(), r, 1.0 - tau)?)?;
            let objective = crq_objective(problem, &alpha, &qr.coefficients)?;
            if best.as_ref().is_none_or(|b| objective < b.objective) {
                best = Some(CrqFit {
                    alpha: alpha.to_vec(),
                    beta: qr.coefficients,
                    objective,
                    sign_pattern: signs.to_vec(),
                    tau,
                });
            }
        }
    }
    Ok(best.expect("grid is nonempty"))
}
