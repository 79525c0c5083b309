use std::fs;
use std::path::Path;

use crq_core::cli::{self, read_model_file};

fn crq(args: &[&str]) -> i32 {
    let mut argv = vec!["crq"];
    argv.extend_from_slice(args);
    cli::run(argv)
}

fn synth(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec!["synth", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    assert_eq!(crq(&args), 0);
    dir.join("panel.csv").to_str().unwrap().to_string()
}

fn header(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(crq(&["--help"]), 0);
    assert_eq!(crq(&["--version"]), 0);
    assert_eq!(crq(&["fit", "--help"]), 0);
}

#[test]
fn usage_and_validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(crq(&["frobnicate"]), 1);
    assert_eq!(crq(&["fit"]), 1);
    assert_eq!(crq(&["validate", "/nonexistent/panel.csv"]), 1);
    let panel = synth(dir.path(), &[]);
    assert_eq!(crq(&["fit", &panel, "--tau", "1.5", "--out-dir", d]), 1);
    assert_eq!(crq(&["fit", &panel, "--method", "ceo-baseline", "--out-dir", d]), 1);
    assert_eq!(crq(&["predict", &panel, "--out-dir", d]), 1);

    let bad = dir.path().join("bad.csv");
    let text = fs::read_to_string(&panel).unwrap().replacen("basic", "basic,extra", 1);
    fs::write(&bad, text).unwrap();
    assert_eq!(crq(&["validate", bad.to_str().unwrap()]), 1);
}

#[test]
fn numerical_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.csv");
    let mut text = String::from("round,target_year,company,method,response,index,ceo_tot,observed,predicted\n");
    for i in 0..20 {
        text += &format!("0,2017,C{i:03},rq.can,REV,1.0,{i}.5,{i}.0,{i}.1\n");
    }
    fs::write(&preds, text).unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(crq(&["evaluate", preds.to_str().unwrap(), "--replications", "10", "--out-dir", out]), 2);
}

#[test]
fn validate_emits_json() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth(dir.path(), &["--companies", "30", "--years", "9"]);
    let d = dir.path().to_str().unwrap();
    assert_eq!(crq(&["validate", &panel, "--emit-json", "--out-dir", d]), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("panel.json")).unwrap()).unwrap();
    assert_eq!(v["metadata"]["command"], "validate");
    assert_eq!(v["metadata"]["inputs"][0]["name"], "panel.csv");
}

#[test]
fn fit_predict_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let panel = synth(dir.path(), &["--seed", "4", "--noise", "t2"]);
    let model = dir.path().join("model.json");
    assert_eq!(crq(&["fit", &panel, "--replications", "10", "--out-dir", d]), 0);
    let m = read_model_file(&model).unwrap();
    assert_eq!(m.rounds.len(), 2);
    for r in &m.rounds {
        assert!((r.model.alpha.iter().map(|a| a.abs()).sum::<f64>() - 1.0).abs() < 1e-8);
        assert_eq!(r.model.beta.len(), 26);
        assert!(r.alpha_std_errors.iter().all(|s| s.is_finite()));
    }
    let alpha = header(&dir.path().join("alpha.csv"));
    assert!(alpha.iter().any(|l| l.starts_with("# toolkit: crq ")));
    assert!(alpha.iter().any(|l| l.starts_with("# input: panel.csv sha256=")));
    assert!(alpha.iter().any(|l| l == "# seed: 0"));

    assert_eq!(crq(&["predict", &panel, "--model", model.to_str().unwrap(), "--out-dir", d]), 0);
    let base = dir.path().join("base");
    let b = base.to_str().unwrap();
    assert_eq!(crq(&["predict", &panel, "--method", "ceo-baseline", "--out-dir", b]), 0);
    let preds = dir.path().join("predictions.csv");
    let base_preds = base.join("predictions.csv");
    assert_eq!(
        crq(&[
            "evaluate",
            preds.to_str().unwrap(),
            base_preds.to_str().unwrap(),
            "--replications",
            "10",
            "--out-dir",
            d
        ]),
        0
    );
    let table = fs::read_to_string(dir.path().join("mae_table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "method,REV,Earn,Eprof,MCap,TSR,Y-index");
    assert!(rows[1].starts_with("rq.can,"));
    assert!(rows.iter().any(|r| r.starts_with("CEOls,")));
    assert!(dir.path().join("joint.csv").exists());

    let q = dir.path().join("qq");
    assert_eq!(crq(&["qq", preds.to_str().unwrap(), "--target-year", "2017", "--out-dir", q.to_str().unwrap()]), 0);
    let qq = fs::read_to_string(q.join("qq.csv")).unwrap();
    assert_eq!(qq.lines().filter(|l| !l.starts_with('#')).count(), 101);
    assert_eq!(crq(&["qq", preds.to_str().unwrap(), "--method", "nope", "--out-dir", d]), 1);
}

#[test]
fn ceo_residuals_and_trend() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let panel = synth(dir.path(), &["--seed", "2"]);
    assert_eq!(crq(&["ceo-residuals", &panel, "--replications", "50", "--out-dir", d]), 0);
    let meta = header(&dir.path().join("residual_tests.csv"));
    assert!(meta.iter().any(|l| l.starts_with("# critical_value: 3.09")));
    assert!(meta.iter().any(|l| l == "# num_tests: 25"));
    let tests = fs::read_to_string(dir.path().join("residual_tests.csv")).unwrap();
    assert_eq!(tests.lines().filter(|l| !l.starts_with('#')).count(), 26);

    assert_eq!(crq(&["trend", &panel, "--format", "json", "--out-dir", d]), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("trend.json")).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 10);
    assert_eq!(v["rows"][0]["year"], 2009);
    assert_eq!(v["columns"][0], "year");
}
