//! The `crq` command line: pipeline stages as subcommands.
//!
//! Exit status is 0 on success, 1 for usage and data validation errors,
//! and 2 when a solver or the bootstrap fails. Table artifacts start with
//! `# key: value` metadata lines (or a `metadata` object in JSON output)
//! naming the toolkit version, seed, parameters and input digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{build_design_matrix, transformed_values, AggregationSpec, Transform};
use crate::forecast::{
    ceo_residual_analysis, coefficient_rows, evaluate, fit_index_model, fit_index_model_weighted,
    joint_regression, qq_data, trend_summary, IndexMethod, IndexModel,
};
use crate::inference::{bootstrap_replicates, BootstrapScheme, BootstrapSpec, FnEstimator};
use crate::panel_io::{PanelDataset, SchemaConfig, Variable};
use crate::pipeline::{
    ceo_baseline_predictions, eval_series, fit_round, index_predictions, protocol_rounds, PredictionRecord, Round,
    COMPOSITE,
};
use crate::synth::{generate, GeneratorSpec, NoiseFamily};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "crq", version, about = "Canonical regression quantile indices for company panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a panel file against the data contract.
    Validate(ValidateArgs),
    /// Write a synthetic panel and its ground truth.
    Synth(SynthArgs),
    /// Fit index coefficients for every protocol round.
    Fit(FitArgs),
    /// Forecast responses two horizons ahead.
    Predict(PredictArgs),
    /// MAE/RMSE tables and joint regressions from prediction files.
    Evaluate(EvaluateArgs),
    /// CEO pay residuals against a pay-free index, with t-tests.
    CeoResiduals(CeoArgs),
    /// Yearly mean and SD of CEO pay with fitted bands.
    Trend(TrendArgs),
    /// Sorted observed/predicted pairs for a Q-Q plot.
    Qq(QqArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Crq,
    Cancor,
    CeoBaseline,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, env = "CRQ_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct PanelArgs {
    /// Panel CSV.
    panel: PathBuf,
    /// Largest number of distinct industries accepted.
    #[arg(long, default_value_t = 6)]
    max_industries: usize,
}

#[derive(Args, Debug)]
struct AggArgs {
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 2)]
    horizon: usize,
    #[arg(long, default_value_t = 0.05)]
    discount: f64,
    #[arg(long, default_value = "signed_log", value_parser = parse_from_str::<Transform>)]
    transform: Transform,
    /// Industry left out of the dummies (default: first label).
    #[arg(long)]
    baseline_industry: Option<String>,
}

#[derive(Args, Debug)]
struct BootArgs {
    /// Bootstrap replications (default 200; 600 for ceo-residuals).
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// weighted or resample (default weighted; resample for ceo-residuals).
    #[arg(long, value_parser = parse_from_str::<BootstrapScheme>)]
    scheme: Option<BootstrapScheme>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Also write the validated panel as JSON.
    #[arg(long)]
    emit_json: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    companies: usize,
    #[arg(long, default_value_t = 10)]
    years: usize,
    #[arg(long, default_value_t = 6)]
    industries: usize,
    #[arg(long, default_value_t = 2009)]
    first_year: i32,
    #[arg(long, default_value = "gaussian", value_parser = parse_from_str::<NoiseFamily>)]
    noise: NoiseFamily,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    idiosyncratic_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Crq)]
    method: MethodArg,
    #[command(flatten)]
    agg: AggArgs,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[command(flatten)]
    boot: BootArgs,
    /// Include CEO pay aggregates among the explanatory columns.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    include_ceo: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// model.json written by `fit` (not needed for ceo-baseline).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[command(flatten)]
    agg: AggArgs,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Prediction CSV files written by `predict`.
    #[arg(required = true)]
    predictions: Vec<PathBuf>,
    #[command(flatten)]
    boot: BootArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct CeoArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Crq)]
    method: MethodArg,
    #[command(flatten)]
    agg: AggArgs,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[command(flatten)]
    boot: BootArgs,
    /// Family-wise significance level.
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct TrendArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct QqArgs {
    /// Prediction CSV written by `predict`.
    predictions: PathBuf,
    #[arg(long, default_value = "rq.can")]
    method: String,
    #[arg(long, default_value = COMPOSITE)]
    response: String,
    #[arg(long)]
    target_year: Option<i32>,
    #[command(flatten)]
    out: OutputArgs,
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|e| e.to_string())
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Validate(a) => cmd_validate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::CeoResiduals(a) => cmd_ceo(a),
        Command::Trend(a) => cmd_trend(a),
        Command::Qq(a) => cmd_qq(a),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub toolkit: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub parameters: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
    pub notes: BTreeMap<String, String>,
}

impl Metadata {
    fn new(command: &str, seed: Option<u64>) -> Self {
        Self {
            toolkit: "crq".into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
            parameters: BTreeMap::new(),
            inputs: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.insert(key.into(), value.to_string());
        self
    }

    fn agg(self, agg: &AggregationSpec) -> Self {
        self.param("window", agg.window_years)
            .param("horizon", agg.horizon_years)
            .param("discount", agg.discount_rate)
            .param("transform", agg.transform.name())
            .param(
                "baseline_industry",
                agg.baseline_industry.clone().unwrap_or_else(|| "(first)".into()),
            )
    }

    fn boot(self, spec: &BootstrapSpec) -> Self {
        self.param("replications", spec.replications)
            .param("scheme", spec.scheme.name())
    }

    fn input(mut self, path: &Path, bytes: &[u8]) -> Self {
        self.inputs.push(InputDigest {
            name: path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into()),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        self
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.insert(key.into(), value.to_string());
    }

    fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("# toolkit: {} {}", self.toolkit, self.version),
            format!("# command: {}", self.command),
        ];
        if let Some(s) = self.seed {
            lines.push(format!("# seed: {s}"));
        }
        let params: Vec<String> = self.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
        lines.push(format!("# parameters: {}", params.join(" ")));
        for i in &self.inputs {
            lines.push(format!("# input: {} sha256={}", i.name, i.sha256));
        }
        for (k, v) in &self.notes {
            lines.push(format!("# {k}: {v}"));
        }
        lines
    }
}

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Table cell in the `mean (SD)` layout.
pub fn mean_sd_cell(mean: f64, sd: f64) -> String {
    format!("{mean:.3} ({sd:.3})")
}

fn json_cell(s: &str) -> serde_json::Value {
    if let Ok(v) = s.parse::<i64>() {
        return serde_json::json!(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => serde_json::json!(v),
        _ => serde_json::Value::String(s.to_string()),
    }
}

struct Output {
    dir: PathBuf,
    format: Format,
}

impl Output {
    fn new(args: &OutputArgs) -> Result<Self> {
        fs::create_dir_all(&args.out_dir)?;
        Ok(Self {
            dir: args.out_dir.clone(),
            format: args.format,
        })
    }

    fn table(&self, stem: &str, meta: &Metadata, table: &Table) -> Result<PathBuf> {
        match self.format {
            Format::Csv => {
                let path = self.dir.join(format!("{stem}.csv"));
                let mut buf: Vec<u8> = Vec::new();
                for line in meta.header_lines() {
                    buf.extend_from_slice(line.as_bytes());
                    buf.push(b'\n');
                }
                {
                    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
                    w.write_record(&table.columns)?;
                    for r in &table.rows {
                        w.write_record(r)?;
                    }
                    w.flush()?;
                }
                fs::write(&path, buf)?;
                Ok(path)
            }
            Format::Json => {
                let rows: Vec<serde_json::Value> = table
                    .rows
                    .iter()
                    .map(|r| {
                        let obj: serde_json::Map<String, serde_json::Value> = table
                            .columns
                            .iter()
                            .zip(r)
                            .map(|(c, v)| (c.clone(), json_cell(v)))
                            .collect();
                        serde_json::Value::Object(obj)
                    })
                    .collect();
                self.json(stem, &serde_json::json!({ "metadata": meta, "columns": table.columns, "rows": rows }))
            }
        }
    }

    fn json<T: Serialize>(&self, stem: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(format!("{stem}.json"));
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        fs::write(&path, s)?;
        Ok(path)
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load(args: &PanelArgs) -> Result<(PanelDataset, Vec<u8>)> {
    let bytes = read_input(&args.panel)?;
    let schema = SchemaConfig {
        max_industries: args.max_industries,
        ..SchemaConfig::default()
    };
    let panel = crate::panel_io::read_panel(bytes.as_slice(), &schema)?;
    Ok((panel, bytes))
}

fn agg_spec(a: &AggArgs) -> Result<AggregationSpec> {
    let spec = AggregationSpec {
        window_years: a.window,
        discount_rate: a.discount,
        horizon_years: a.horizon,
        transform: a.transform,
        baseline_industry: a.baseline_industry.clone(),
    };
    spec.validate()?;
    Ok(spec)
}

fn boot_spec(a: &BootArgs, replications: usize, scheme: BootstrapScheme) -> Result<BootstrapSpec> {
    BootstrapSpec::new(a.replications.unwrap_or(replications), a.seed, a.scheme.unwrap_or(scheme))
}

fn index_method(m: MethodArg) -> Result<IndexMethod> {
    match m {
        MethodArg::Crq => Ok(IndexMethod::Crq),
        MethodArg::Cancor => Ok(IndexMethod::Cancor),
        MethodArg::CeoBaseline => Err(Error::domain(
            "ceo-baseline has no index coefficients; use `predict --method ceo-baseline`",
        )),
    }
}

/// Metadata line describing a round's year arithmetic.
pub fn round_note(r: &Round) -> String {
    format!(
        "train={}-{} target={} apply={}-{} predict={}",
        r.train_start, r.train_end, r.train_target, r.apply_start, r.apply_end, r.predict_year
    )
}

fn note_rounds<'a>(meta: &mut Metadata, rounds: impl IntoIterator<Item = &'a Round>) {
    for r in rounds {
        meta.note(&format!("round_{}", r.round), round_note(r));
    }
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let (panel, bytes) = load(&a.panel)?;
    println!(
        "ok: {} companies, years {}-{}, {} records, industries [{}]",
        panel.num_companies(),
        panel.first_year(),
        panel.last_year(),
        panel.num_records(),
        panel.industries().join(", ")
    );
    if a.emit_json {
        let out = Output::new(&a.out)?;
        let meta = Metadata::new("validate", None).input(&a.panel.panel, &bytes);
        out.json("panel", &serde_json::json!({ "metadata": meta, "panel": panel }))?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let defaults = GeneratorSpec::default();
    let spec = GeneratorSpec {
        num_companies: a.companies,
        num_years: a.years,
        num_industries: a.industries,
        first_year: a.first_year,
        noise: a.noise,
        noise_scale: a.noise_scale.unwrap_or(defaults.noise_scale),
        idiosyncratic_scale: a.idiosyncratic_scale.unwrap_or(defaults.idiosyncratic_scale),
        seed: a.seed,
        ..defaults
    };
    let (panel, truth) = generate(&spec)?;
    let out = Output::new(&a.out)?;
    let path = out.dir.join("panel.csv");
    panel.write_csv(fs::File::create(&path)?)?;
    let meta = Metadata::new("synth", Some(a.seed))
        .param("companies", spec.num_companies)
        .param("years", spec.num_years)
        .param("industries", spec.num_industries)
        .param("first_year", spec.first_year)
        .param("noise", spec.noise.name())
        .param("noise_scale", spec.noise_scale)
        .param("idiosyncratic_scale", spec.idiosyncratic_scale);
    out.json(
        "ground_truth",
        &serde_json::json!({ "metadata": meta, "spec": spec, "truth": truth }),
    )?;
    Ok(())
}

/// One fitted round as stored in `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRound {
    pub round: Round,
    pub model: IndexModel,
    /// Bootstrap standard errors of `beta` then `alpha`.
    pub beta_std_errors: Vec<f64>,
    pub alpha_std_errors: Vec<f64>,
    pub replications: usize,
    pub failed_replications: usize,
}

/// Contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub metadata: Metadata,
    pub method: IndexMethod,
    pub tau: f64,
    pub include_ceo: bool,
    pub aggregation: AggregationSpec,
    pub rounds: Vec<FittedRound>,
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let method = index_method(a.method)?;
    let (panel, bytes) = load(&a.panel)?;
    let agg = agg_spec(&a.agg)?;
    let boot = boot_spec(&a.boot, 200, BootstrapScheme::Weighted)?;
    let rounds = protocol_rounds(panel.first_year(), panel.last_year(), &agg)?;
    let mut fitted = Vec::with_capacity(rounds.len());
    for round in &rounds {
        let design = build_design_matrix(&panel, &agg, round.train_end, a.include_ceo)?;
        let model = fit_round(&panel, round, &agg, method, a.tau, a.include_ceo)?;
        let k = model.beta.len();
        let estimator = FnEstimator::new(design.n_rows(), |w: &[f64]| {
            let m = fit_index_model_weighted(&design, method, a.tau, Some(w))?;
            Ok(m.beta.into_iter().chain(m.alpha).collect())
        });
        let reps = bootstrap_replicates(&estimator, &boot)?;
        let ses = reps.std_errors();
        fitted.push(FittedRound {
            round: *round,
            model,
            beta_std_errors: ses[..k].to_vec(),
            alpha_std_errors: ses[k..].to_vec(),
            replications: reps.draws.len(),
            failed_replications: reps.failed,
        });
    }

    let mut meta = Metadata::new("fit", Some(boot.seed))
        .agg(&agg)
        .boot(&boot)
        .param("tau", a.tau)
        .param("method", method.name())
        .param("include_ceo", a.include_ceo)
        .input(&a.panel.panel, &bytes);
    note_rounds(&mut meta, &rounds);
    let out = Output::new(&a.out)?;

    let mut alpha = Table::new(&["round", "train_window", "response", "estimate", "std_error", "t_stat"]);
    let mut beta = Table::new(&[
        "round",
        "train_window",
        "column",
        "estimate",
        "std_error",
        "t_stat",
        "p_one_sided",
        "p_two_sided",
    ]);
    for f in &fitted {
        let window = format!("{}-{}", f.round.train_start, f.round.train_end);
        let names: Vec<&str> = f.model.response_names.iter().map(String::as_str).collect();
        for row in coefficient_rows(&names, &f.model.alpha, &f.alpha_std_errors) {
            alpha.push(vec![
                f.round.round.to_string(),
                window.clone(),
                row.name,
                num(row.estimate),
                num(row.std_error),
                num(row.t_stat),
            ]);
        }
        let names: Vec<&str> = f.model.column_names.iter().map(String::as_str).collect();
        for row in coefficient_rows(&names, &f.model.beta, &f.beta_std_errors) {
            beta.push(vec![
                f.round.round.to_string(),
                window.clone(),
                row.name,
                num(row.estimate),
                num(row.std_error),
                num(row.t_stat),
                num(row.p_one_sided),
                num(row.p_two_sided),
            ]);
        }
    }
    out.table("alpha", &meta, &alpha)?;
    out.table("beta", &meta, &beta)?;
    out.json(
        "model",
        &ModelFile {
            metadata: meta,
            method,
            tau: a.tau,
            include_ceo: a.include_ceo,
            aggregation: agg,
            rounds: fitted,
        },
    )?;
    Ok(())
}

const PREDICTION_COLUMNS: [&str; 9] = [
    "round",
    "target_year",
    "company",
    "method",
    "response",
    "index",
    "ceo_tot",
    "observed",
    "predicted",
];

fn prediction_row(r: &PredictionRecord) -> Vec<String> {
    vec![
        r.round.to_string(),
        r.target_year.to_string(),
        r.company.clone(),
        r.method.clone(),
        r.response.clone(),
        num(r.index),
        num(r.ceo_tot),
        num(r.observed),
        num(r.predicted),
    ]
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let (panel, bytes) = load(&a.panel)?;
    let out = Output::new(&a.out)?;
    let mut records = Vec::new();
    let mut meta;
    match (&a.model, a.method) {
        (None, Some(MethodArg::CeoBaseline)) => {
            let agg = agg_spec(&a.agg)?;
            let rounds = protocol_rounds(panel.first_year(), panel.last_year(), &agg)?;
            for round in &rounds {
                records.extend(ceo_baseline_predictions(&panel, round, &agg, a.tau)?);
            }
            meta = Metadata::new("predict", None)
                .agg(&agg)
                .param("tau", a.tau)
                .param("method", "ceo-baseline")
                .input(&a.panel.panel, &bytes);
            note_rounds(&mut meta, &rounds);
        }
        (Some(path), method) => {
            let model_bytes = read_input(path)?;
            let model: ModelFile = serde_json::from_slice(&model_bytes)?;
            if let Some(m) = method {
                if index_method(m)? != model.method {
                    return Err(Error::domain(format!(
                        "--method disagrees with the model file ({})",
                        model.method.name()
                    )));
                }
            }
            for f in &model.rounds {
                records.extend(index_predictions(&panel, &f.round, &f.model, &model.aggregation, model.include_ceo)?);
            }
            meta = Metadata::new("predict", model.metadata.seed)
                .agg(&model.aggregation)
                .param("tau", model.tau)
                .param("method", model.method.name())
                .param("include_ceo", model.include_ceo)
                .input(&a.panel.panel, &bytes)
                .input(path, &model_bytes);
            note_rounds(&mut meta, model.rounds.iter().map(|f| &f.round));
        }
        (None, _) => {
            return Err(Error::domain("predict needs --model, or --method ceo-baseline"));
        }
    }
    let mut table = Table::new(&PREDICTION_COLUMNS);
    let mut scatter = Table::new(&["round", "target_year", "company", "method", "index", "observed", "predicted"]);
    for r in &records {
        table.push(prediction_row(r));
        if r.response == COMPOSITE {
            scatter.push(vec![
                r.round.to_string(),
                r.target_year.to_string(),
                r.company.clone(),
                r.method.clone(),
                num(r.index),
                num(r.observed),
                num(r.predicted),
            ]);
        }
    }
    out.table("predictions", &meta, &table)?;
    if !scatter.rows.is_empty() {
        out.table("scatter", &meta, &scatter)?;
    }
    Ok(())
}

fn read_predictions(path: &Path) -> Result<(Vec<PredictionRecord>, Vec<u8>)> {
    let bytes = read_input(path)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes.as_slice());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != PREDICTION_COLUMNS {
        return Err(Error::Schema(format!(
            "{}: expected prediction columns {}",
            path.display(),
            PREDICTION_COLUMNS.join(",")
        )));
    }
    let mut records = Vec::new();
    for (k, row) in reader.deserialize::<PredictionRecord>().enumerate() {
        records.push(row.map_err(|e| Error::Parse {
            row: k + 2,
            column: "?".into(),
            message: format!("{}: {e}", path.display()),
        })?);
    }
    if records.is_empty() {
        return Err(Error::domain(format!("{}: no predictions", path.display())));
    }
    Ok((records, bytes))
}

fn is_index_method(label: &str) -> bool {
    label == IndexMethod::Crq.label() || label == IndexMethod::Cancor.label()
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let boot = boot_spec(&a.boot, 200, BootstrapScheme::Weighted)?;
    let mut meta = Metadata::new("evaluate", Some(boot.seed)).boot(&boot);
    let mut records = Vec::new();
    for path in &a.predictions {
        let (r, bytes) = read_predictions(path)?;
        records.extend(r);
        meta = meta.input(path, &bytes);
    }
    let report = evaluate(&eval_series(&records), &boot)?;
    let years: Vec<String> = report.years.iter().map(i32::to_string).collect();
    meta.note("years", years.join(","));
    let out = Output::new(&a.out)?;

    let mut long = Table::new(&["method", "response", "n", "mae", "mae_sd", "rmse", "rmse_sd", "mae_cell"]);
    let mut methods: Vec<&str> = Vec::new();
    let mut responses: Vec<&str> = Vec::new();
    for c in &report.cells {
        if !methods.contains(&c.method.as_str()) {
            methods.push(&c.method);
        }
        if !responses.contains(&c.response.as_str()) {
            responses.push(&c.response);
        }
        long.push(vec![
            c.method.clone(),
            c.response.clone(),
            c.n.to_string(),
            num(c.mae),
            num(c.mae_sd),
            num(c.rmse),
            num(c.rmse_sd),
            mean_sd_cell(c.mae, c.mae_sd),
        ]);
    }
    let mut cols = vec!["method"];
    cols.extend(responses.iter().copied());
    let mut wide = Table::new(&cols);
    for m in &methods {
        let mut row = vec![m.to_string()];
        for r in &responses {
            row.push(report.cell(m, r).map_or_else(String::new, |c| mean_sd_cell(c.mae, c.mae_sd)));
        }
        wide.push(row);
    }
    out.table("mae", &meta, &long)?;
    out.table("mae_table", &meta, &wide)?;

    let mut joint = Table::new(&[
        "method",
        "target_year",
        "response",
        "ceo_coef",
        "ceo_t",
        "index_coef",
        "index_t",
        "t_ratio",
    ]);
    for s in eval_series(&records) {
        if !is_index_method(&s.method) || s.response == COMPOSITE {
            continue;
        }
        let rows: Vec<&PredictionRecord> = records
            .iter()
            .filter(|r| r.method == s.method && r.response == s.response && r.target_year == s.year)
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r.observed).collect();
        let ceo: Vec<f64> = rows.iter().map(|r| r.ceo_tot).collect();
        let idx: Vec<f64> = rows.iter().map(|r| r.index).collect();
        let j = joint_regression(&y, &ceo, &idx, &boot)?;
        joint.push(vec![
            s.method.clone(),
            s.year.to_string(),
            s.response.clone(),
            num(j.coefficients[1].estimate),
            num(j.coefficients[1].t_stat),
            num(j.coefficients[2].estimate),
            num(j.coefficients[2].t_stat),
            num(j.t_ratio),
        ]);
    }
    if !joint.rows.is_empty() {
        out.table("joint", &meta, &joint)?;
    }
    Ok(())
}

fn cmd_ceo(a: CeoArgs) -> Result<()> {
    let method = index_method(a.method)?;
    let (panel, bytes) = load(&a.panel)?;
    let agg = agg_spec(&a.agg)?;
    let boot = boot_spec(&a.boot, 600, BootstrapScheme::Resample)?;
    let end = panel.first_year() + agg.window_years as i32 - 1;
    let design = build_design_matrix(&panel, &agg, end, false)?;
    let model = fit_index_model(&design, method, a.tau)?;
    let ceo: Vec<f64> = transformed_values(&panel, &[Variable::CEOt], end, agg.transform)?
        .column(0)
        .iter()
        .copied()
        .collect();
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    for year in end + 1..=panel.last_year() {
        let y = transformed_values(&panel, &Variable::RESPONSES, year, agg.transform)?;
        for (k, v) in Variable::RESPONSES.iter().enumerate() {
            cols.push(y.column(k).into_owned());
            labels.push(format!("{}_{year}", v.name()));
        }
    }
    if cols.is_empty() {
        return Err(Error::domain("no years after the index window to test"));
    }
    let future = DMatrix::from_columns(&cols);
    let analysis = ceo_residual_analysis(&model, &design, &ceo, &future, &labels, &boot, a.level)?;

    let mut meta = Metadata::new("ceo-residuals", Some(boot.seed))
        .agg(&agg)
        .boot(&boot)
        .param("tau", a.tau)
        .param("method", method.name())
        .param("level", a.level)
        .input(&a.panel.panel, &bytes);
    meta.note("index_window", format!("{}-{}", agg.window_start(end), end));
    meta.note("status", format!("{:?}", analysis.report.status).to_lowercase());
    meta.note("critical_value", analysis.critical_value);
    meta.note("num_tests", labels.len());
    meta.note("num_significant", analysis.num_significant());
    let out = Output::new(&a.out)?;

    let mut res = Table::new(&["company", "actual", "predicted", "residual", "percent", "class"]);
    for c in &analysis.report.companies {
        res.push(vec![
            c.company_id.clone(),
            num(c.actual),
            num(c.predicted),
            num(c.residual),
            opt_num(c.percent),
            c.class.name().to_string(),
        ]);
    }
    let mut tests = Table::new(&[
        "response",
        "estimate",
        "std_error",
        "t_stat",
        "p_one_sided",
        "p_two_sided",
        "significant",
    ]);
    for t in &analysis.tests {
        tests.push(vec![
            t.label.clone(),
            num(t.coefficient.estimate),
            num(t.coefficient.std_error),
            num(t.coefficient.t_stat),
            num(t.coefficient.p_one_sided),
            num(t.coefficient.p_two_sided),
            t.significant.to_string(),
        ]);
    }
    out.table("ceo_residuals", &meta, &res)?;
    out.table("residual_tests", &meta, &tests)?;
    Ok(())
}

fn cmd_trend(a: TrendArgs) -> Result<()> {
    let (panel, bytes) = load(&a.panel)?;
    let t = trend_summary(&panel)?;
    let mut meta = Metadata::new("trend", None).input(&a.panel.panel, &bytes);
    for (name, line) in [("mean", t.mean_line), ("upper", t.upper_line), ("lower", t.lower_line)] {
        meta.note(&format!("{name}_line"), format!("intercept={} slope={}", line.intercept, line.slope));
    }
    let mut table = Table::new(&["year", "mean", "sd", "mean_fit", "upper_fit", "lower_fit"]);
    for (k, &year) in t.years.iter().enumerate() {
        let x = f64::from(year);
        table.push(vec![
            year.to_string(),
            num(t.mean[k]),
            num(t.sd[k]),
            num(t.mean_line.at(x)),
            num(t.upper_line.at(x)),
            num(t.lower_line.at(x)),
        ]);
    }
    Output::new(&a.out)?.table("trend", &meta, &table)?;
    Ok(())
}

fn cmd_qq(a: QqArgs) -> Result<()> {
    let (records, bytes) = read_predictions(&a.predictions)?;
    let chosen: Vec<&PredictionRecord> = records
        .iter()
        .filter(|r| r.method == a.method && r.response == a.response)
        .filter(|r| a.target_year.is_none_or(|y| r.target_year == y))
        .collect();
    if chosen.is_empty() {
        return Err(Error::domain(format!(
            "no predictions for method {:?} and response {:?}",
            a.method, a.response
        )));
    }
    let obs: Vec<f64> = chosen.iter().map(|r| r.observed).collect();
    let fit: Vec<f64> = chosen.iter().map(|r| r.predicted).collect();
    let pairs = qq_data(&obs, &fit)?;
    let meta = Metadata::new("qq", None)
        .param("method", &a.method)
        .param("response", &a.response)
        .param("target_year", a.target_year.map_or_else(|| "all".into(), |y| y.to_string()))
        .input(&a.predictions, &bytes);
    let mut table = Table::new(&["observed", "predicted"]);
    for (o, f) in pairs {
        table.push(vec![num(o), num(f)]);
    }
    Output::new(&a.out)?.table("qq", &meta, &table)?;
    Ok(())
}

/// Reads `model.json` written by `fit`.
pub fn read_model_file(path: impl AsRef<Path>) -> Result<ModelFile> {
    Ok(serde_json::from_slice(&read_input(path.as_ref())?)?)
}
