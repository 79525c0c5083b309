//! Window aggregates and the explanatory/response design matrices.
//!
//! Every panel variable is reduced over a window of years to two numbers: a
//! discounted average (weights `(1 - d)^lag`, normalised to sum to one) and
//! the minimum of successive year-over-year differences. Monetary variables
//! (CEO pay and the five responses) are transformed before aggregation; the
//! four ratio variables are aggregated as they are.
//!
//! Column layout of `x_star`: intercept, one dummy per non-baseline industry,
//! then `<var>_wt`, `<var>_minD` for IR, EQ, MG, EPS, CEOt (optional), REV,
//! Earn, Eprof, MCap, TSR.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel_io::{PanelDataset, Variable, NUM_VARIABLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    SignedLog,
    LogMax1,
    None,
}

impl Transform {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Transform::SignedLog => signed_log(y),
            Transform::LogMax1 => log_max1(y),
            Transform::None => y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::SignedLog => "signed_log",
            Transform::LogMax1 => "log_max1",
            Transform::None => "none",
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed_log" | "signed-log" => Ok(Transform::SignedLog),
            "log_max1" | "log-max1" => Ok(Transform::LogMax1),
            "none" => Ok(Transform::None),
            other => Err(Error::domain(format!("unknown transform {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationSpec {
    pub window_years: usize,
    pub discount_rate: f64,
    pub horizon_years: usize,
    pub transform: Transform,
    /// Industry encoded as all-zero dummies; `None` picks the smallest label.
    pub baseline_industry: Option<String>,
}

impl Default for AggregationSpec {
    fn default() -> Self {
        Self {
            window_years: 5,
            discount_rate: 0.05,
            horizon_years: 2,
            transform: Transform::SignedLog,
            baseline_industry: None,
        }
    }
}

impl AggregationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window_years < 2 {
            return Err(Error::domain("window_years must be at least 2"));
        }
        if !(self.discount_rate >= 0.0 && self.discount_rate < 1.0) {
            return Err(Error::domain("discount_rate must lie in [0, 1)"));
        }
        if self.horizon_years < 1 {
            return Err(Error::domain("horizon_years must be at least 1"));
        }
        Ok(())
    }

    /// First year of the window ending at `end`.
    pub fn window_start(&self, end: i32) -> i32 {
        end - self.window_years as i32 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub x_star: DMatrix<f64>,
    /// Transformed responses `horizon_years` after `base_year`.
    pub y_star: DMatrix<f64>,
    pub column_names: Vec<String>,
    pub response_names: Vec<String>,
    pub company_ids: Vec<String>,
    /// Final calendar year of the aggregation window.
    pub base_year: i32,
    pub target_year: i32,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x_star.nrows()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }
}

/// Discount-weighted mean of a series ordered oldest to newest.
pub fn discounted_average(series: &[f64], rate: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::domain("discounted_average of an empty series"));
    }
    if !(rate >= 0.0 && rate < 1.0) {
        return Err(Error::domain("discount rate must lie in [0, 1)"));
    }
    let keep = 1.0 - rate;
    let mut weight = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for &s in series.iter().rev() {
        num += weight * s;
        den += weight;
        weight *= keep;
    }
    Ok(num / den)
}

/// Smallest year-over-year change `s[k+1] - s[k]`.
pub fn min_successive_diff(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::domain("min_successive_diff needs at least two values"));
    }
    Ok(series
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min))
}

/// `sign(y) ln(max(1, |y|))`.
pub fn signed_log(y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    y.signum() * y.abs().max(1.0).ln()
}

/// `ln(max(1, y))`.
pub fn log_max1(y: f64) -> f64 {
    y.max(1.0).ln()
}

fn aggregated_variables(include_ceo: bool) -> Vec<Variable> {
    Variable::ALL
        .into_iter()
        .filter(|v| include_ceo || *v != Variable::CEOt)
        .collect()
}

/// Column names of the design for a given set of dummy labels.
pub fn design_column_names(dummies: &[String], include_ceo: bool) -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    names.extend(dummies.iter().cloned());
    for v in aggregated_variables(include_ceo) {
        names.push(format!("{}_wt", v.name()));
        names.push(format!("{}_minD", v.name()));
    }
    names
}

/// Non-baseline industry labels, sorted.
pub fn dummy_industries(panel: &PanelDataset, spec: &AggregationSpec) -> Result<Vec<String>> {
    let industries = panel.industries();
    let baseline = match &spec.baseline_industry {
        Some(b) => {
            if !industries.contains(b) {
                return Err(Error::Schema(format!(
                    "baseline industry {b:?} does not occur in the panel"
                )));
            }
            b.clone()
        }
        None => industries[0].clone(),
    };
    Ok(industries.into_iter().filter(|i| *i != baseline).collect())
}

/// One design row from a company history whose last entry is the window end.
///
/// `dummy` is the position of the company's industry among the non-baseline
/// labels, `None` for the baseline industry.
pub fn company_features(
    history: &[[f64; NUM_VARIABLES]],
    dummy: Option<usize>,
    num_dummies: usize,
    spec: &AggregationSpec,
    include_ceo: bool,
) -> Result<Vec<f64>> {
    let w = spec.window_years;
    if history.len() < w {
        return Err(Error::domain(format!(
            "history of {} years is shorter than the {w}-year window",
            history.len()
        )));
    }
    let window = &history[history.len() - w..];
    let mut row = vec![0.0; 1 + num_dummies];
    row[0] = 1.0;
    if let Some(d) = dummy {
        row[1 + d] = 1.0;
    }
    for v in aggregated_variables(include_ceo) {
        let mut series: Vec<f64> = window.iter().map(|r| r[v.index()]).collect();
        if v.is_transformed() {
            series.iter_mut().for_each(|s| *s = spec.transform.apply(*s));
        }
        row.push(discounted_average(&series, spec.discount_rate)?);
        row.push(min_successive_diff(&series)?);
    }
    Ok(row)
}

/// Explanatory rows for the window ending at `window_end_year`.
pub fn build_features(
    panel: &PanelDataset,
    spec: &AggregationSpec,
    window_end_year: i32,
    include_ceo: bool,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    spec.validate()?;
    let dummies = dummy_industries(panel, spec)?;
    let names = design_column_names(&dummies, include_ceo);
    let start = spec.window_start(window_end_year);
    // range check with a located error
    if panel.num_companies() > 0 {
        panel.series(0, Variable::IR, start, window_end_year)?;
    }
    let offset = (window_end_year - panel.first_year()) as usize;
    let n = panel.num_companies();
    let mut x = DMatrix::zeros(n, names.len());
    for (row, company) in panel.companies().iter().enumerate() {
        let dummy = dummies.iter().position(|d| *d == company.industry);
        let values = company_features(&company.values[..=offset], dummy, dummies.len(), spec, include_ceo)?;
        for (j, v) in values.into_iter().enumerate() {
            x[(row, j)] = v;
        }
    }
    Ok((x, names))
}

/// Transformed values of the given variables in `year`, one row per company.
pub fn transformed_values(
    panel: &PanelDataset,
    vars: &[Variable],
    year: i32,
    transform: Transform,
) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(panel.num_companies(), vars.len());
    for row in 0..panel.num_companies() {
        for (j, &v) in vars.iter().enumerate() {
            let raw = panel.value(row, year, v)?;
            m[(row, j)] = if v.is_transformed() { transform.apply(raw) } else { raw };
        }
    }
    Ok(m)
}

/// Window aggregates plus responses `horizon_years` after the window end.
pub fn build_design_matrix(
    panel: &PanelDataset,
    spec: &AggregationSpec,
    window_end_year: i32,
    include_ceo: bool,
) -> Result<DesignMatrix> {
    let (x_star, column_names) = build_features(panel, spec, window_end_year, include_ceo)?;
    let target_year = window_end_year + spec.horizon_years as i32;
    let y_star = transformed_values(panel, &Variable::RESPONSES, target_year, spec.transform)?;
    Ok(DesignMatrix {
        x_star,
        y_star,
        column_names,
        response_names: Variable::RESPONSES.iter().map(|v| v.name().to_string()).collect(),
        company_ids: panel.company_ids().into_iter().map(str::to_string).collect(),
        base_year: window_end_year,
        target_year,
    })
}
