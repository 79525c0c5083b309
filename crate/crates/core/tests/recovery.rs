use crq_core::features::{build_design_matrix, AggregationSpec};
use crq_core::forecast::{apply_index, fit_index_model, IndexMethod};
use crq_core::synth::{generate, GeneratorSpec};

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn crq_index_tracks_the_true_index() {
    let agg = AggregationSpec::default();
    for seed in 0..20 {
        let (panel, truth) = generate(&GeneratorSpec { seed, ..GeneratorSpec::default() }).unwrap();
        let design = build_design_matrix(&panel, &agg, 2013, true).unwrap();
        assert_eq!(design.column_names, truth.column_names);
        let model = fit_index_model(&design, IndexMethod::Crq, 0.5).unwrap();
        let fitted = apply_index(&model, &design).unwrap();
        let x = &design.x_star;
        let true_index: Vec<f64> = (0..x.nrows())
            .map(|i| (0..x.ncols()).map(|j| x[(i, j)] * truth.true_beta[j]).sum())
            .collect();
        let r = correlation(&fitted, &true_index);
        assert!(r > 0.9, "seed {seed}: correlation {r}");
        assert!(model.alpha[0] > 0.5, "seed {seed}: alpha {:?}", model.alpha);
    }
}
