//! Index application, two-year-ahead calibration, error summaries, and the
//! CEO pay residual analysis.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cancor::{fit_cancor, fit_cancor_weighted};
use crate::crq::{fit_crq, CrqProblem};
use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::inference::{
    bonferroni_critical, bootstrap_replicates, p_values, replication_weights, BootstrapScheme, BootstrapSpec, WarmQr,
};
use crate::linalg;
use crate::panel_io::{PanelDataset, Variable};
use crate::quantile_lp::{fit_quantile_regression, QrProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMethod {
    Crq,
    Cancor,
}

impl IndexMethod {
    pub fn name(self) -> &'static str {
        match self {
            IndexMethod::Crq => "crq",
            IndexMethod::Cancor => "cancor",
        }
    }

    /// Label used in evaluation tables.
    pub fn label(self) -> &'static str {
        match self {
            IndexMethod::Crq => "rq.can",
            IndexMethod::Cancor => "cancor",
        }
    }

    /// Regression paired with the index when forecasting.
    pub fn regression(self) -> Regression {
        match self {
            IndexMethod::Crq => Regression::Median,
            IndexMethod::Cancor => Regression::LeastSquares,
        }
    }
}

impl std::str::FromStr for IndexMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crq" => Ok(IndexMethod::Crq),
            "cancor" => Ok(IndexMethod::Cancor),
            other => Err(Error::domain(format!("unknown index method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regression {
    Median,
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexModel {
    pub method: IndexMethod,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub column_names: Vec<String>,
    pub response_names: Vec<String>,
    pub train_window_end: i32,
    pub horizon: usize,
    pub tau: f64,
    /// CRQ check-loss objective or canonical correlation of the training fit.
    pub criterion: f64,
}

/// Fits the index on a training design.
///
/// For the canonical correlation route the intercept column is dropped
/// before fitting and the centring is folded back into its coefficient, so
/// `beta` always spans the full design.
pub fn fit_index_model(design: &DesignMatrix, method: IndexMethod, tau: f64) -> Result<IndexModel> {
    fit_index_model_weighted(design, method, tau, None)
}

/// [`fit_index_model`] under observation weights, for bootstrap refits.
pub fn fit_index_model_weighted(
    design: &DesignMatrix,
    method: IndexMethod,
    tau: f64,
    weights: Option<&[f64]>,
) -> Result<IndexModel> {
    let (beta, alpha, criterion) = match method {
        IndexMethod::Crq => {
            let mut problem = CrqProblem::new(design.x_star.clone(), design.y_star.clone(), tau)?;
            if let Some(w) = weights {
                problem = problem.weighted(w)?;
            }
            let fit = fit_crq(&problem)?;
            (fit.beta, fit.alpha, fit.objective)
        }
        IndexMethod::Cancor => {
            let keep: Vec<usize> = (0..design.x_star.ncols())
                .filter(|&j| design.column_names[j] != "intercept")
                .collect();
            let x = design.x_star.select_columns(&keep);
            let fit = match weights {
                Some(w) => fit_cancor_weighted(&x, &design.y_star, w)?,
                None => fit_cancor(&x, &design.y_star)?,
            };
            let mut beta = vec![0.0; design.x_star.ncols()];
            for (k, &j) in keep.iter().enumerate() {
                beta[j] = fit.x_weights[k];
            }
            if let Some(c) = design.column_index("intercept") {
                beta[c] = -fit.x_means.iter().zip(&fit.x_weights).map(|(m, w)| m * w).sum::<f64>();
            }
            (beta, fit.y_weights, fit.correlation)
        }
    };
    Ok(IndexModel {
        method,
        beta,
        alpha,
        column_names: design.column_names.clone(),
        response_names: design.response_names.clone(),
        train_window_end: design.base_year,
        horizon: (design.target_year - design.base_year) as usize,
        tau,
        criterion,
    })
}

/// `x*'beta` for every design row.
pub fn apply_index(model: &IndexModel, design: &DesignMatrix) -> Result<Vec<f64>> {
    if model.column_names != design.column_names {
        return Err(Error::Schema(format!(
            "design columns [{}] differ from the model's training columns [{}]",
            design.column_names.join(", "),
            model.column_names.join(", ")
        )));
    }
    if model.beta.len() != design.x_star.ncols() {
        return Err(Error::Schema("model beta length differs from design width".into()));
    }
    let b = DVector::from_column_slice(&model.beta);
    Ok((&design.x_star * b).iter().copied().collect())
}

/// `Y alpha` row by row.
pub fn composite(responses: &DMatrix<f64>, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != responses.ncols() {
        return Err(Error::domain("alpha length differs from response count"));
    }
    Ok((responses * DVector::from_column_slice(alpha)).iter().copied().collect())
}

/// Straight-line calibration `response ~ intercept + slope * index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub regression: Regression,
    pub intercept: f64,
    pub slope: f64,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl Calibration {
    pub fn predict(&self, index: &[f64]) -> Vec<f64> {
        index.iter().map(|x| self.intercept + self.slope * x).collect()
    }
}

fn line_design(x: &[f64]) -> Result<DMatrix<f64>> {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if x.len() < 2 || !(hi - lo > 1e-12 * hi.abs().max(lo.abs())) {
        return Err(Error::Rank("predictor is constant; slope is not identified".into()));
    }
    Ok(DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] }))
}

/// Fits one calibration line by median (quantile `tau`) or least squares.
pub fn fit_calibration(index: &[f64], response: &[f64], regression: Regression, tau: f64) -> Result<Calibration> {
    if index.len() != response.len() {
        return Err(Error::domain("index and response lengths differ"));
    }
    let design = line_design(index)?;
    let y = DVector::from_column_slice(response);
    let (coef, residuals): (Vec<f64>, Vec<f64>) = match regression {
        Regression::Median => {
            let fit = fit_quantile_regression(&QrProblem::new(design, y, tau)?)?;
            (fit.coefficients, fit.residuals)
        }
        Regression::LeastSquares => {
            let b = linalg::least_squares(&design, &y)?;
            let r = &y - &design * &b;
            (b.iter().copied().collect(), r.iter().copied().collect())
        }
    };
    let fitted = response.iter().zip(&residuals).map(|(y, r)| y - r).collect();
    Ok(Calibration {
        regression,
        intercept: coef[0],
        slope: coef[1],
        fitted,
        residuals,
    })
}

/// One calibration per response column.
pub fn predict_ahead(
    index: &[f64],
    responses: &DMatrix<f64>,
    regression: Regression,
    tau: f64,
) -> Result<Vec<Calibration>> {
    if responses.nrows() != index.len() {
        return Err(Error::domain("index and responses are not row-aligned"));
    }
    (0..responses.ncols())
        .map(|j| {
            let col: Vec<f64> = responses.column(j).iter().copied().collect();
            fit_calibration(index, &col, regression, tau)
        })
        .collect()
}

/// Predictions and outcomes for one method, response and year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSeries {
    pub method: String,
    pub response: String,
    pub year: i32,
    pub predicted: Vec<f64>,
    pub observed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub method: String,
    pub response: String,
    pub n: usize,
    pub mae: f64,
    pub mae_sd: f64,
    pub rmse: f64,
    pub rmse_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<EvalCell>,
    pub years: Vec<i32>,
    pub replications: usize,
    pub seed: u64,
    pub scheme: BootstrapScheme,
}

impl EvalReport {
    pub fn cell(&self, method: &str, response: &str) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.method == method && c.response == response)
    }

    /// Mean of the method's cell MAEs over the listed responses.
    pub fn pooled_mae(&self, method: &str, responses: &[&str]) -> Option<f64> {
        let maes: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.method == method && responses.contains(&c.response.as_str()))
            .map(|c| c.mae)
            .collect();
        (!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64)
    }
}

fn weighted_errors(errors: &[Vec<f64>], w: &[f64]) -> Option<(f64, f64)> {
    let (mut abs, mut sq, mut total) = (0.0, 0.0, 0.0);
    for year in errors {
        for (e, wi) in year.iter().zip(w) {
            abs += wi * e.abs();
            sq += wi * e * e;
            total += wi;
        }
    }
    if total <= 0.0 {
        return None;
    }
    let mae = abs / total;
    // the square root can round just below the mean absolute error
    let rmse = (sq / total).sqrt().max(mae);
    Some((mae, rmse))
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// MAE and RMSE per (method, response), pooled over years.
///
/// Bootstrap weights are drawn per company and shared across years, so
/// every series of a cell must list the same companies in the same order.
pub fn evaluate(series: &[EvalSeries], spec: &BootstrapSpec) -> Result<EvalReport> {
    spec.validate()?;
    if series.is_empty() {
        return Err(Error::domain("nothing to evaluate"));
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&EvalSeries>> = BTreeMap::new();
    for s in series {
        if s.predicted.len() != s.observed.len() || s.predicted.is_empty() {
            return Err(Error::domain(format!(
                "{}/{} {}: predicted and observed must be nonempty and aligned",
                s.method, s.response, s.year
            )));
        }
        let key = (s.method.clone(), s.response.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(s);
    }
    let mut cells = Vec::with_capacity(order.len());
    for key in order {
        let group = &groups[&key];
        let n = group[0].observed.len();
        if group.iter().any(|s| s.observed.len() != n) {
            return Err(Error::domain(format!(
                "{}/{}: evaluation years cover different company counts",
                key.0, key.1
            )));
        }
        let errors: Vec<Vec<f64>> = group
            .iter()
            .map(|s| s.observed.iter().zip(&s.predicted).map(|(o, p)| o - p).collect())
            .collect();
        if errors.iter().flatten().any(|e| !e.is_finite()) {
            return Err(Error::domain(format!("{}/{}: non-finite error", key.0, key.1)));
        }
        let (mae, rmse) = weighted_errors(&errors, &vec![1.0; n]).expect("positive weights");
        let mut maes = Vec::with_capacity(spec.replications);
        let mut rmses = Vec::with_capacity(spec.replications);
        for r in 0..spec.replications {
            if let Some((a, b)) = weighted_errors(&errors, &replication_weights(spec, n, r)) {
                maes.push(a);
                rmses.push(b);
            }
        }
        if maes.len() < 2 {
            return Err(Error::Inference("fewer than 2 usable bootstrap replications".into()));
        }
        cells.push(EvalCell {
            method: key.0,
            response: key.1,
            n: n * group.len(),
            mae,
            mae_sd: sample_sd(&maes),
            rmse,
            rmse_sd: sample_sd(&rmses),
        });
    }
    let mut years: Vec<i32> = series.iter().map(|s| s.year).collect();
    years.sort_unstable();
    years.dedup();
    Ok(EvalReport {
        cells,
        years,
        replications: spec.replications,
        seed: spec.seed,
        scheme: spec.scheme,
    })
}

/// Coefficient table row with bootstrap inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_one_sided: f64,
    pub p_two_sided: f64,
}

/// `estimate / se`, taking an exact zero over a zero spread as 0.
pub fn t_ratio(estimate: f64, se: f64) -> f64 {
    if se == 0.0 && estimate == 0.0 {
        0.0
    } else {
        estimate / se
    }
}

pub fn coefficient_rows(names: &[&str], estimates: &[f64], ses: &[f64]) -> Vec<CoefficientRow> {
    names
        .iter()
        .zip(estimates.iter().zip(ses))
        .map(|(name, (&e, &s))| {
            let t = t_ratio(e, s);
            let (p1, p2) = p_values(t);
            CoefficientRow {
                name: name.to_string(),
                estimate: e,
                std_error: s,
                t_stat: t,
                p_one_sided: p1,
                p_two_sided: p2,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRegression {
    /// Rows for `intercept`, `CEOtot`, `index`.
    pub coefficients: Vec<CoefficientRow>,
    /// `|t_index / t_ceo|`.
    pub t_ratio: f64,
    pub replications: usize,
    pub failed_replications: usize,
}

/// Median regression of a response on CEO pay and the index.
pub fn joint_regression(
    response: &[f64],
    ceo_tot: &[f64],
    index: &[f64],
    spec: &BootstrapSpec,
) -> Result<JointRegression> {
    let n = response.len();
    if ceo_tot.len() != n || index.len() != n {
        return Err(Error::domain("response, CEO pay and index must be aligned"));
    }
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => ceo_tot[i],
        _ => index[i],
    });
    linalg::require_full_column_rank(&x, "joint regression design [1, CEOtot, index]")?;
    let problem = QrProblem::new(x, DVector::from_column_slice(response), 0.5)?;
    let reps = bootstrap_replicates(&WarmQr::new(problem)?, spec)?;
    let ses = reps.std_errors();
    let coefficients = coefficient_rows(&["intercept", "CEOtot", "index"], &reps.estimates, &ses);
    let t_ratio = (coefficients[2].t_stat / coefficients[1].t_stat).abs();
    Ok(JointRegression {
        coefficients,
        t_ratio,
        replications: reps.draws.len(),
        failed_replications: reps.failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayClass {
    Overpaid,
    Underpaid,
    /// Residual exactly zero: the company is an interpolation point of the fit.
    OnIndex,
}

impl PayClass {
    pub fn name(self) -> &'static str {
        match self {
            PayClass::Overpaid => "overpaid",
            PayClass::Underpaid => "underpaid",
            PayClass::OnIndex => "on_index",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualStatus {
    Ok,
    /// Every residual vanished; over/under-paid is undefined.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyResidual {
    pub company_id: String,
    pub actual: f64,
    pub predicted: f64,
    pub residual: f64,
    /// `None` when the prediction is too close to zero for a percentage.
    pub percent: Option<f64>,
    pub class: PayClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeoResidualReport {
    pub status: ResidualStatus,
    pub intercept: f64,
    pub slope: f64,
    pub companies: Vec<CompanyResidual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTest {
    pub label: String,
    pub coefficient: CoefficientRow,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeoResidualAnalysis {
    pub report: CeoResidualReport,
    pub tests: Vec<ResidualTest>,
    pub critical_value: f64,
    pub level: f64,
}

impl CeoResidualAnalysis {
    pub fn num_significant(&self) -> usize {
        self.tests.iter().filter(|t| t.significant).count()
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Residuals of CEO pay against the index, and classification.
pub fn ceo_residuals(company_ids: &[String], ceo_tot: &[f64], index: &[f64]) -> Result<CeoResidualReport> {
    let n = ceo_tot.len();
    if index.len() != n || company_ids.len() != n {
        return Err(Error::domain("CEO pay, index and company ids must be aligned"));
    }
    let cal = fit_calibration(index, ceo_tot, Regression::Median, 0.5)?;
    let scale = ceo_tot.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let degenerate = cal.residuals.iter().all(|r| r.abs() <= 1e-12 * scale);
    let predicted: Vec<f64> = (0..n)
        .map(|i| {
            if cal.residuals[i] == 0.0 || degenerate {
                ceo_tot[i]
            } else {
                cal.intercept + cal.slope * index[i]
            }
        })
        .collect();
    let guard = 1e-9 * median(&predicted).abs();
    let companies = (0..n)
        .map(|i| {
            let residual = ceo_tot[i] - predicted[i];
            let percent = (predicted[i].abs() >= guard && predicted[i] != 0.0)
                .then(|| 100.0 * residual / predicted[i].abs());
            let class = if residual > 0.0 {
                PayClass::Overpaid
            } else if residual < 0.0 {
                PayClass::Underpaid
            } else {
                PayClass::OnIndex
            };
            CompanyResidual {
                company_id: company_ids[i].clone(),
                actual: ceo_tot[i],
                predicted: predicted[i],
                residual,
                percent,
                class,
            }
        })
        .collect();
    Ok(CeoResidualReport {
        status: if degenerate { ResidualStatus::Degenerate } else { ResidualStatus::Ok },
        intercept: cal.intercept,
        slope: cal.slope,
        companies,
    })
}

/// CEO pay residuals against a pay-free index, then bootstrap tests of
/// whether each future response loads on them.
///
/// Each column of `future_responses` is one test; significance uses the
/// Bonferroni threshold for the number of columns at `level`.
pub fn ceo_residual_analysis(
    model: &IndexModel,
    design: &DesignMatrix,
    ceo_tot: &[f64],
    future_responses: &DMatrix<f64>,
    labels: &[String],
    spec: &BootstrapSpec,
    level: f64,
) -> Result<CeoResidualAnalysis> {
    let ceo_cols = [format!("{}_wt", Variable::CEOt.name()), format!("{}_minD", Variable::CEOt.name())];
    if design.column_names.iter().any(|c| ceo_cols.contains(c)) {
        return Err(Error::Schema("the residual analysis needs a design built without CEO pay".into()));
    }
    if labels.len() != future_responses.ncols() || future_responses.nrows() != ceo_tot.len() {
        return Err(Error::domain("future responses, labels and CEO pay are not aligned"));
    }
    let index = apply_index(model, design)?;
    let report = ceo_residuals(&design.company_ids, ceo_tot, &index)?;
    let m = future_responses.ncols().max(1);
    let critical_value = bonferroni_critical(m, level)?;
    let mut tests = Vec::new();
    if report.status == ResidualStatus::Ok {
        let res: Vec<f64> = report.companies.iter().map(|c| c.residual).collect();
        let x = line_design(&res)?;
        for (j, label) in labels.iter().enumerate() {
            let y = future_responses.column(j).into_owned();
            let reps = bootstrap_replicates(&WarmQr::new(QrProblem::new(x.clone(), y, 0.5)?)?, spec)?;
            let ses = reps.std_errors();
            let row = coefficient_rows(&["CEOres"], &reps.estimates[1..], &ses[1..]).remove(0);
            tests.push(ResidualTest {
                label: label.clone(),
                significant: row.t_stat.abs() > critical_value,
                coefficient: row,
            });
        }
    }
    Ok(CeoResidualAnalysis {
        report,
        tests,
        critical_value,
        level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub intercept: f64,
    pub slope: f64,
}

impl Line {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub years: Vec<i32>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub mean_line: Line,
    pub upper_line: Line,
    pub lower_line: Line,
}

fn ols_line(x: &[f64], y: &[f64]) -> Line {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Line {
        intercept: my - slope * mx,
        slope,
    }
}

/// Yearly cross-company mean and SD of raw CEO pay with fitted bands.
pub fn trend_summary(panel: &PanelDataset) -> Result<TrendSummary> {
    let n = panel.num_companies();
    if n < 2 {
        return Err(Error::domain("a standard deviation needs at least two companies"));
    }
    let years: Vec<i32> = panel.years().collect();
    if years.len() < 2 {
        return Err(Error::domain("a trend needs at least two years"));
    }
    let mut mean = Vec::with_capacity(years.len());
    let mut sd = Vec::with_capacity(years.len());
    for &year in &years {
        let v: Vec<f64> = (0..n).map(|i| panel.value(i, year, Variable::CEOt)).collect::<Result<_>>()?;
        mean.push(v.iter().sum::<f64>() / n as f64);
        sd.push(sample_sd(&v));
    }
    let x: Vec<f64> = years.iter().map(|&y| f64::from(y)).collect();
    let upper: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m + s).collect();
    let lower: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m - s).collect();
    Ok(TrendSummary {
        mean_line: ols_line(&x, &mean),
        upper_line: ols_line(&x, &upper),
        lower_line: ols_line(&x, &lower),
        years,
        mean,
        sd,
    })
}

/// Sorted observed values paired with sorted fitted values.
pub fn qq_data(observed: &[f64], fitted: &[f64]) -> Result<Vec<(f64, f64)>> {
    if observed.len() != fitted.len() {
        return Err(Error::domain(format!(
            "observed has {} values but fitted has {}",
            observed.len(),
            fitted.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::domain("Q-Q data needs at least one point"));
    }
    let mut o = observed.to_vec();
    let mut f = fitted.to_vec();
    o.sort_by(f64::total_cmp);
    f.sort_by(f64::total_cmp);
    Ok(o.into_iter().zip(f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_design(x: Vec<f64>, names: &[&str]) -> DesignMatrix {
        let k = names.len();
        let n = x.len() / k;
        DesignMatrix {
            x_star: DMatrix::from_row_slice(n, k, &x),
            y_star: DMatrix::zeros(n, 1),
            column_names: names.iter().map(|s| s.to_string()).collect(),
            response_names: vec!["REV".into()],
            company_ids: (0..n).map(|i| format!("c{i}")).collect(),
            base_year: 2013,
            target_year: 2015,
        }
    }

    fn model(beta: Vec<f64>, names: &[&str]) -> IndexModel {
        IndexModel {
            method: IndexMethod::Crq,
            beta,
            alpha: vec![1.0],
            column_names: names.iter().map(|s| s.to_string()).collect(),
            response_names: vec!["REV".into()],
            train_window_end: 2013,
            horizon: 2,
            tau: 0.5,
            criterion: 0.0,
        }
    }

    #[test]
    fn apply_index_examples() {
        let names = ["intercept", "a", "b"];
        let d = tiny_design(vec![1.0, 2.0, 3.0, 1.0, -1.0, 0.5], &names);
        assert_eq!(apply_index(&model(vec![1.0, 0.0, 0.0], &names), &d).unwrap(), vec![1.0, 1.0]);
        assert_eq!(
            apply_index(&model(vec![0.5, 2.0, -1.0], &names), &d).unwrap(),
            vec![0.5 + 4.0 - 3.0, 0.5 - 2.0 - 0.5]
        );
        let swapped = model(vec![1.0, 0.0, 0.0], &["intercept", "b", "a"]);
        assert!(matches!(apply_index(&swapped, &d), Err(Error::Schema(_))));
    }

    #[test]
    fn exact_linear_response_both_regressions() {
        let idx: Vec<f64> = (0..8).map(|i| i as f64 * 0.7).collect();
        let y = DMatrix::from_fn(8, 1, |i, _| 3.0 - 2.0 * idx[i]);
        for reg in [Regression::Median, Regression::LeastSquares] {
            let cal = predict_ahead(&idx, &y, reg, 0.5).unwrap().remove(0);
            assert!(cal.residuals.iter().all(|r| r.abs() < 1e-12));
            assert!((cal.slope + 2.0).abs() < 1e-12);
        }
        let flat = vec![1.0; 8];
        assert!(matches!(predict_ahead(&flat, &y, Regression::Median, 0.5), Err(Error::Rank(_))));
    }

    #[test]
    fn median_calibration_ignores_outlier_distance() {
        let idx: Vec<f64> = (0..9).map(f64::from).collect();
        let mut y: Vec<f64> = idx.iter().map(|x| 1.0 + x + if (*x as i32) % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let at_median = |y: &[f64], reg| fit_calibration(&idx, y, reg, 0.5).unwrap().predict(&[4.0])[0];
        y[8] = 50.0;
        let (m1, l1) = (at_median(&y, Regression::Median), at_median(&y, Regression::LeastSquares));
        y[8] = 500.0;
        let (m2, l2) = (at_median(&y, Regression::Median), at_median(&y, Regression::LeastSquares));
        assert_eq!(m1, m2);
        assert!((l1 - l2).abs() > 1.0);
    }

    fn series(errors: &[f64]) -> EvalSeries {
        EvalSeries {
            method: "m".into(),
            response: "r".into(),
            year: 2017,
            predicted: vec![0.0; errors.len()],
            observed: errors.to_vec(),
        }
    }

    #[test]
    fn evaluate_examples() {
        let spec = BootstrapSpec::new(50, 1, BootstrapScheme::Weighted).unwrap();
        let perfect = evaluate(&[series(&[0.0, 0.0, 0.0])], &spec).unwrap();
        assert_eq!((perfect.cells[0].mae, perfect.cells[0].rmse), (0.0, 0.0));
        let pm = evaluate(&[series(&[1.0, -1.0])], &spec).unwrap();
        assert_eq!((pm.cells[0].mae, pm.cells[0].rmse), (1.0, 1.0));
        let c = &evaluate(&[series(&[0.0, 2.0])], &spec).unwrap().cells[0];
        assert_eq!(c.mae, 1.0);
        assert!((c.rmse - 2f64.sqrt()).abs() < 1e-15);
        assert!(evaluate(&[], &spec).is_err());
    }

    #[test]
    fn evaluate_pools_years() {
        let spec = BootstrapSpec::new(20, 1, BootstrapScheme::Weighted).unwrap();
        let mut a = series(&[1.0, 3.0]);
        let mut b = series(&[2.0, 2.0]);
        b.year = 2018;
        let r = evaluate(&[a.clone(), b.clone()], &spec).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.cells[0].n, 4);
        assert_eq!(r.cells[0].mae, 2.0);
        assert_eq!(r.years, vec![2017, 2018]);
        a.observed.push(0.0);
        a.predicted.push(0.0);
        assert!(evaluate(&[a, b], &spec).is_err());
    }

    #[test]
    fn joint_regression_exact_cases() {
        let n = 30;
        let index: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let ceo: Vec<f64> = (0..n).map(|i| (i as f64 * 1.91).cos() * 2.0 + 15.0).collect();
        let spec = BootstrapSpec::new(30, 2, BootstrapScheme::Weighted).unwrap();
        let on_index = joint_regression(&index, &ceo, &index, &spec).unwrap();
        assert!((on_index.coefficients[2].estimate - 1.0).abs() < 1e-9);
        assert!(on_index.coefficients[1].estimate.abs() < 1e-9);
        assert!(on_index.t_ratio > 1e3);
        let on_ceo = joint_regression(&ceo, &ceo, &index, &spec).unwrap();
        assert!(on_ceo.t_ratio < 1e-3);
        assert!(matches!(joint_regression(&index, &index, &index, &spec), Err(Error::Rank(_))));
    }

    #[test]
    fn residual_signs_and_vertices() {
        let ids: Vec<String> = (0..5).map(|i| format!("c{i}")).collect();
        let index = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ceo = [10.0, 12.5, 12.0, 15.0, 15.5];
        let r = ceo_residuals(&ids, &ceo, &index).unwrap();
        assert_eq!(r.status, ResidualStatus::Ok);
        let zeros = r.companies.iter().filter(|c| c.residual == 0.0).count();
        assert!(zeros >= 2);
        for c in &r.companies {
            assert_eq!(c.residual, c.actual - c.predicted);
            let expect = if c.residual > 0.0 {
                PayClass::Overpaid
            } else if c.residual < 0.0 {
                PayClass::Underpaid
            } else {
                PayClass::OnIndex
            };
            assert_eq!(c.class, expect);
        }
        let scaled: Vec<f64> = ceo.iter().map(|v| v * 3.5).collect();
        let s = ceo_residuals(&ids, &scaled, &index).unwrap();
        let classes = |r: &CeoResidualReport| r.companies.iter().map(|c| c.class).collect::<Vec<_>>();
        assert_eq!(classes(&r), classes(&s));
    }

    #[test]
    fn exact_pay_is_degenerate() {
        let ids: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
        let index = [0.3, 1.0, 2.0, 3.5, 4.0, 5.0];
        let ceo: Vec<f64> = index.iter().map(|x| 14.0 + 0.5 * x).collect();
        let r = ceo_residuals(&ids, &ceo, &index).unwrap();
        assert_eq!(r.status, ResidualStatus::Degenerate);
    }

    #[test]
    fn trend_examples() {
        use crate::panel_io::{Company, NUM_VARIABLES};
        let company = |id: &str, level: f64, spread: f64| Company {
            id: id.into(),
            industry: "a".into(),
            values: (0..5)
                .map(|t| {
                    let mut row = [1.0; NUM_VARIABLES];
                    row[Variable::CEOt.index()] = level + 2.0 * t as f64 + spread * (5 - t) as f64;
                    row
                })
                .collect(),
        };
        let same = PanelDataset::new(2010, vec![company("a", 5.0, 0.0), company("b", 5.0, 0.0)]).unwrap();
        let t = trend_summary(&same).unwrap();
        assert!(t.sd.iter().all(|s| *s == 0.0));
        assert_eq!(t.mean_line, t.upper_line);
        let shrinking =
            PanelDataset::new(2010, vec![company("a", 5.0, 1.0), company("b", 5.0, -1.0)]).unwrap();
        let t = trend_summary(&shrinking).unwrap();
        assert!(t.lower_line.slope > t.upper_line.slope);
        let one = PanelDataset::new(2010, vec![company("a", 5.0, 0.0)]).unwrap();
        assert!(trend_summary(&one).is_err());
    }

    #[test]
    fn qq_examples() {
        let o = [3.0, 1.0, 2.0];
        assert_eq!(qq_data(&o, &o).unwrap(), vec![(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        let shifted: Vec<f64> = o.iter().map(|v| v + 1.0).collect();
        assert!(qq_data(&o, &shifted).unwrap().iter().all(|(a, b)| b - a == 1.0));
        assert!(qq_data(&o, &[1.0]).is_err());
    }
}
