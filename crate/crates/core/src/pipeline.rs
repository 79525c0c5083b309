//! Rolling-window protocol: fit on one window, forecast from a later one.
//!
//! Round `k` trains on the window ending `first + W - 1 + k` against
//! responses `h` years later, then applies the coefficients to the window
//! ending `h` years after that and predicts `h` years further still. Rounds
//! continue while the prediction year stays inside the panel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_design_matrix, transformed_values, AggregationSpec};
use crate::forecast::{
    apply_index, composite, fit_calibration, fit_index_model, EvalSeries, IndexMethod, IndexModel, Regression,
};
use crate::panel_io::{PanelDataset, Variable};

/// Label of the composite `alpha'y` response.
pub const COMPOSITE: &str = "Y-index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub round: usize,
    pub train_start: i32,
    pub train_end: i32,
    pub train_target: i32,
    pub apply_start: i32,
    pub apply_end: i32,
    pub predict_year: i32,
}

/// Every round that fits inside `[first_year, last_year]`.
pub fn protocol_rounds(first_year: i32, last_year: i32, spec: &AggregationSpec) -> Result<Vec<Round>> {
    spec.validate()?;
    let w = spec.window_years as i32;
    let h = spec.horizon_years as i32;
    let mut rounds = Vec::new();
    let mut train_end = first_year + w - 1;
    while train_end + 2 * h <= last_year {
        rounds.push(Round {
            round: rounds.len(),
            train_start: train_end - w + 1,
            train_end,
            train_target: train_end + h,
            apply_start: train_end + h - w + 1,
            apply_end: train_end + h,
            predict_year: train_end + 2 * h,
        });
        train_end += 1;
    }
    if rounds.is_empty() {
        return Err(Error::domain(format!(
            "years {first_year}-{last_year} cannot hold a {w}-year window plus two {h}-year horizons"
        )));
    }
    Ok(rounds)
}

/// Index model trained on the round's training window.
pub fn fit_round(
    panel: &PanelDataset,
    round: &Round,
    spec: &AggregationSpec,
    method: IndexMethod,
    tau: f64,
    include_ceo: bool,
) -> Result<IndexModel> {
    let design = build_design_matrix(panel, spec, round.train_end, include_ceo)?;
    fit_index_model(&design, method, tau)
}

/// One forecast for one company.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub round: usize,
    pub target_year: i32,
    pub company: String,
    pub method: String,
    pub response: String,
    /// Predictor value at the apply window (index or CEO pay).
    pub index: f64,
    pub ceo_tot: f64,
    pub observed: f64,
    pub predicted: f64,
}

fn column(m: &nalgebra::DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

/// Forecasts from a trained index: each response plus the composite.
///
/// Calibration lines are fit on the training window's index against the
/// training targets, then evaluated at the apply window's index.
pub fn index_predictions(
    panel: &PanelDataset,
    round: &Round,
    model: &IndexModel,
    spec: &AggregationSpec,
    include_ceo: bool,
) -> Result<Vec<PredictionRecord>> {
    let train = build_design_matrix(panel, spec, round.train_end, include_ceo)?;
    let apply = build_design_matrix(panel, spec, round.apply_end, include_ceo)?;
    let idx_train = apply_index(model, &train)?;
    let idx_apply = apply_index(model, &apply)?;
    let ceo = column(&transformed_values(panel, &[Variable::CEOt], round.apply_end, spec.transform)?, 0);
    let regression = model.method.regression();

    let mut targets: Vec<(String, Vec<f64>, Vec<f64>)> = (0..train.y_star.ncols())
        .map(|j| (train.response_names[j].clone(), column(&train.y_star, j), column(&apply.y_star, j)))
        .collect();
    targets.push((
        COMPOSITE.to_string(),
        composite(&train.y_star, &model.alpha)?,
        composite(&apply.y_star, &model.alpha)?,
    ));

    let mut out = Vec::new();
    for (name, y_train, y_obs) in targets {
        let cal = fit_calibration(&idx_train, &y_train, regression, model.tau)?;
        let pred = cal.predict(&idx_apply);
        for i in 0..apply.n_rows() {
            out.push(PredictionRecord {
                round: round.round,
                target_year: round.predict_year,
                company: apply.company_ids[i].clone(),
                method: model.method.label().to_string(),
                response: name.clone(),
                index: idx_apply[i],
                ceo_tot: ceo[i],
                observed: y_obs[i],
                predicted: pred[i],
            });
        }
    }
    Ok(out)
}

/// Forecasts using current CEO pay as the only predictor, by median
/// regression (`CEOrq`) and least squares (`CEOls`).
pub fn ceo_baseline_predictions(
    panel: &PanelDataset,
    round: &Round,
    spec: &AggregationSpec,
    tau: f64,
) -> Result<Vec<PredictionRecord>> {
    let ceo_train = column(&transformed_values(panel, &[Variable::CEOt], round.train_end, spec.transform)?, 0);
    let ceo_apply = column(&transformed_values(panel, &[Variable::CEOt], round.apply_end, spec.transform)?, 0);
    let y_train = transformed_values(panel, &Variable::RESPONSES, round.train_target, spec.transform)?;
    let y_obs = transformed_values(panel, &Variable::RESPONSES, round.predict_year, spec.transform)?;
    let ids = panel.company_ids();
    let mut out = Vec::new();
    for (label, regression) in [("CEOrq", Regression::Median), ("CEOls", Regression::LeastSquares)] {
        for (j, v) in Variable::RESPONSES.iter().enumerate() {
            let cal = fit_calibration(&ceo_train, &column(&y_train, j), regression, tau)?;
            let pred = cal.predict(&ceo_apply);
            for i in 0..ids.len() {
                out.push(PredictionRecord {
                    round: round.round,
                    target_year: round.predict_year,
                    company: ids[i].to_string(),
                    method: label.to_string(),
                    response: v.name().to_string(),
                    index: ceo_apply[i],
                    ceo_tot: ceo_apply[i],
                    observed: y_obs[(i, j)],
                    predicted: pred[i],
                });
            }
        }
    }
    Ok(out)
}

/// Groups records into per-(method, response, year) evaluation series,
/// keeping first-appearance order.
pub fn eval_series(records: &[PredictionRecord]) -> Vec<EvalSeries> {
    let mut out: Vec<EvalSeries> = Vec::new();
    for r in records {
        let pos = out
            .iter()
            .position(|s| s.method == r.method && s.response == r.response && s.year == r.target_year);
        let s = match pos {
            Some(p) => &mut out[p],
            None => {
                out.push(EvalSeries {
                    method: r.method.clone(),
                    response: r.response.clone(),
                    year: r.target_year,
                    predicted: Vec::new(),
                    observed: Vec::new(),
                });
                out.last_mut().unwrap()
            }
        };
        s.predicted.push(r.predicted);
        s.observed.push(r.observed);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_year_panel_gives_two_rounds() {
        let r = protocol_rounds(2009, 2018, &AggregationSpec::default()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(
            (r[0].train_start, r[0].train_end, r[0].train_target),
            (2009, 2013, 2015)
        );
        assert_eq!((r[0].apply_start, r[0].apply_end, r[0].predict_year), (2011, 2015, 2017));
        assert_eq!((r[1].train_start, r[1].train_end, r[1].predict_year), (2010, 2014, 2018));
        assert!(protocol_rounds(2009, 2016, &AggregationSpec::default()).is_err());
    }
}
