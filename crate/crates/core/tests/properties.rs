mod common;

use common::{crq_instance, rel_diff};
use crq_core::cancor::fit_cancor;
use crq_core::crq::{fit_crq, CrqProblem};
use crq_core::features::{discounted_average, signed_log, AggregationSpec};
use crq_core::forecast::{evaluate, EvalSeries};
use crq_core::inference::{replication_weights, BootstrapScheme, BootstrapSpec};
use crq_core::pipeline::protocol_rounds;
use crq_core::quantile_lp::{check_loss, fit_quantile_regression, QrProblem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

fn matrix(n: usize, p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-5.0f64..5.0, n * p).prop_map(move |v| {
        let mut m = DMatrix::from_vec(n, p, v);
        m.column_mut(0).fill(1.0);
        m
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn check_loss_is_nonnegative_and_homogeneous(u in -1e3f64..1e3, tau in 0.01f64..0.99, c in 0.01f64..100.0) {
        let l = check_loss(u, tau).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert!(rel_diff(check_loss(c * u, tau).unwrap(), c * l) < 1e-12 || l == 0.0);
    }

    #[test]
    fn qr_beats_perturbed_coefficients(
        x in matrix(15, 2),
        y in prop::collection::vec(-10.0f64..10.0, 15),
        tau in 0.1f64..0.9,
        d in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let problem = QrProblem::new(x, DVector::from_vec(y), tau).unwrap();
        let fit = match fit_quantile_regression(&problem) {
            Ok(f) => f,
            Err(e) => { prop_assert!(e.is_numerical()); return Ok(()); }
        };
        let moved: Vec<f64> = fit.coefficients.iter().zip(&d).map(|(b, e)| b + e).collect();
        prop_assert!(fit.objective <= problem.objective_at(&moved).unwrap() + 1e-9);
    }

    #[test]
    fn qr_shift_equivariance(
        x in matrix(12, 2),
        y in prop::collection::vec(-10.0f64..10.0, 12),
        shift in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let y = DVector::from_vec(y);
        let a = QrProblem::new(x.clone(), y.clone(), 0.5).unwrap();
        let shifted = &y + &x * DVector::from_column_slice(&shift);
        let b = QrProblem::new(x, shifted, 0.5).unwrap();
        if let (Ok(fa), Ok(fb)) = (fit_quantile_regression(&a), fit_quantile_regression(&b)) {
            prop_assert!((fa.objective - fb.objective).abs() <= 1e-9 * (1.0 + fa.objective));
        }
    }

    #[test]
    fn crq_uniform_rescaling(seed in 0u64..1000, c in prop::sample::select(vec![0.1, 10.0])) {
        let problem = crq_instance(seed, 20, 2);
        let fit = fit_crq(&problem).unwrap();
        let scaled = CrqProblem::new(problem.x().clone(), problem.y() * c, 0.5).unwrap();
        let refit = fit_crq(&scaled).unwrap();
        prop_assert!(rel_diff(refit.objective, c * fit.objective) < 1e-9);
        let s: f64 = refit.alpha.iter().map(|a| a.abs()).sum();
        prop_assert!((s - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mae_never_exceeds_rmse(
        pred in prop::collection::vec(-5.0f64..5.0, 10),
        obs in prop::collection::vec(-5.0f64..5.0, 10),
        seed in 0u64..100,
    ) {
        let series = vec![EvalSeries {
            method: "m".into(),
            response: "r".into(),
            year: 2017,
            predicted: pred,
            observed: obs,
        }];
        let spec = BootstrapSpec::new(20, seed, BootstrapScheme::Weighted).unwrap();
        let report = evaluate(&series, &spec).unwrap();
        let c = &report.cells[0];
        prop_assert!(c.mae <= c.rmse + 1e-12);
        prop_assert!(c.mae_sd >= 0.0 && c.rmse_sd >= 0.0);
    }

    #[test]
    fn constant_series_average_to_themselves(v in -1e6f64..1e6, n in 1usize..10, rate in 0.0f64..0.5) {
        let avg = discounted_average(&vec![v; n], rate).unwrap();
        prop_assert!((avg - v).abs() <= 1e-9 * (1.0 + v.abs()));
    }

    #[test]
    fn signed_log_is_odd_and_monotone(a in -1e12f64..1e12, b in -1e12f64..1e12) {
        prop_assert_eq!(signed_log(-a), -signed_log(a));
        if a < b { prop_assert!(signed_log(a) <= signed_log(b)); }
    }

    #[test]
    fn rounds_compose_windows(first in 1990i32..2020, len in 5i32..20, w in 2usize..6, h in 1usize..4) {
        let spec = AggregationSpec { window_years: w, horizon_years: h, ..AggregationSpec::default() };
        let last = first + len - 1;
        match protocol_rounds(first, last, &spec) {
            Ok(rounds) => {
                for r in &rounds {
                    prop_assert_eq!(r.train_end - r.train_start + 1, w as i32);
                    prop_assert_eq!(r.apply_end - r.apply_start + 1, w as i32);
                    prop_assert_eq!(r.train_target, r.train_end + h as i32);
                    prop_assert_eq!(r.apply_end, r.train_target);
                    prop_assert_eq!(r.predict_year, r.apply_end + h as i32);
                    prop_assert!(r.train_start >= first && r.predict_year <= last);
                }
                prop_assert_eq!(rounds.last().unwrap().predict_year, last);
            }
            Err(_) => prop_assert!(first + w as i32 - 1 + 2 * h as i32 > last),
        }
    }

    #[test]
    fn replication_weights_are_reproducible(seed in any::<u64>(), r in 0usize..1000, n in 1usize..50) {
        for scheme in [BootstrapScheme::Weighted, BootstrapScheme::Resample] {
            let spec = BootstrapSpec::new(10, seed, scheme).unwrap();
            let w = replication_weights(&spec, n, r);
            prop_assert_eq!(&w, &replication_weights(&spec, n, r));
            prop_assert!(w.iter().all(|v| *v >= 0.0));
            if scheme == BootstrapScheme::Resample {
                prop_assert_eq!(w.iter().sum::<f64>(), n as f64);
            }
        }
    }

    #[test]
    fn cancor_is_affine_invariant(
        seed in 0u64..500,
        scale in prop::collection::vec(0.1f64..10.0, 3),
        shift in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let mut r = common::rng(seed);
        let x = DMatrix::from_fn(40, 2, |_, _| common::normal(&mut r));
        let y = DMatrix::from_fn(40, 2, |i, j| x[(i, j)] + common::normal(&mut r));
        let base = fit_cancor(&x, &y).unwrap();
        let mut x2 = x.clone();
        for j in 0..2 {
            x2.column_mut(j).apply(|v| *v = *v * scale[j] + shift[j]);
        }
        let mut y2 = y.clone();
        y2.column_mut(0).apply(|v| *v = *v * scale[2] + shift[2]);
        let moved = fit_cancor(&x2, &y2).unwrap();
        prop_assert!(base.correlation <= 1.0 + 1e-12);
        // The ridge guard scales with the trace, so rescaling moves it slightly.
        prop_assert!((base.correlation - moved.correlation).abs() < 1e-6);
    }
}
