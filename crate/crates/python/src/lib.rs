//! Python bindings for `crq_core`.
//!
//! Matrices cross the boundary as lists of rows. Domain, schema and parse
//! errors raise `ValueError`; solver and bootstrap failures raise
//! `ArithmeticError`; I/O errors raise `OSError`.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use crq_core::features::{build_design_matrix, AggregationSpec, DesignMatrix};
use crq_core::inference::{bootstrap, BootstrapScheme, BootstrapSpec};
use crq_core::panel_io::{load_panel as load, read_panel, PanelDataset, SchemaConfig};
use crq_core::quantile_lp::QrProblem;
use crq_core::synth::{generate as synth_generate, GeneratorSpec, GroundTruth};
use crq_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("all rows must have the same length"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[pyclass(frozen, get_all, module = "crq")]
struct QrFit {
    coefficients: Vec<f64>,
    objective: f64,
    residuals: Vec<f64>,
    vertex_basis: Vec<usize>,
}

#[pyclass(frozen, get_all, module = "crq")]
struct CrqFit {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    objective: f64,
    sign_pattern: Vec<i8>,
    tau: f64,
}

#[pyclass(frozen, get_all, module = "crq")]
struct CancorFit {
    x_weights: Vec<f64>,
    y_weights: Vec<f64>,
    correlation: f64,
    x_means: Vec<f64>,
    y_means: Vec<f64>,
}

#[pyclass(frozen, module = "crq")]
struct Panel {
    inner: PanelDataset,
}

#[pymethods]
impl Panel {
    #[getter]
    fn num_companies(&self) -> usize {
        self.inner.num_companies()
    }

    #[getter]
    fn first_year(&self) -> i32 {
        self.inner.first_year()
    }

    #[getter]
    fn last_year(&self) -> i32 {
        self.inner.last_year()
    }

    #[getter]
    fn company_ids(&self) -> Vec<String> {
        self.inner.company_ids().into_iter().map(String::from).collect()
    }

    #[getter]
    fn industries(&self) -> Vec<String> {
        self.inner.industries()
    }

    fn to_csv(&self) -> PyResult<String> {
        self.inner.to_csv_string().map_err(py_err)
    }

    /// Design matrix for the window ending at `end_year`.
    #[pyo3(signature = (end_year, include_ceo = true, window = 5, horizon = 2, discount = 0.05))]
    fn design(&self, end_year: i32, include_ceo: bool, window: usize, horizon: usize, discount: f64) -> PyResult<Design> {
        let spec = AggregationSpec {
            window_years: window,
            horizon_years: horizon,
            discount_rate: discount,
            ..AggregationSpec::default()
        };
        let d = build_design_matrix(&self.inner, &spec, end_year, include_ceo).map_err(py_err)?;
        Ok(Design::from(d))
    }

    fn __repr__(&self) -> String {
        format!(
            "Panel({} companies, {}-{})",
            self.inner.num_companies(),
            self.inner.first_year(),
            self.inner.last_year()
        )
    }
}

#[pyclass(frozen, get_all, module = "crq")]
struct Design {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    column_names: Vec<String>,
    response_names: Vec<String>,
    company_ids: Vec<String>,
    base_year: i32,
    target_year: i32,
}

impl From<DesignMatrix> for Design {
    fn from(d: DesignMatrix) -> Self {
        Self {
            x: rows(&d.x_star),
            y: rows(&d.y_star),
            column_names: d.column_names,
            response_names: d.response_names,
            company_ids: d.company_ids,
            base_year: d.base_year,
            target_year: d.target_year,
        }
    }
}

#[pyclass(frozen, get_all, module = "crq")]
struct Truth {
    true_beta: Vec<f64>,
    true_alpha: Vec<f64>,
    column_names: Vec<String>,
    response_names: Vec<String>,
    industries: Vec<String>,
    signal_start_year: i32,
}

impl From<GroundTruth> for Truth {
    fn from(t: GroundTruth) -> Self {
        Self {
            true_beta: t.true_beta,
            true_alpha: t.true_alpha,
            column_names: t.column_names,
            response_names: t.response_names,
            industries: t.industries,
            signal_start_year: t.signal_start_year,
        }
    }
}

#[pyfunction]
fn check_loss(u: f64, tau: f64) -> PyResult<f64> {
    crq_core::quantile_lp::check_loss(u, tau).map_err(py_err)
}

#[pyfunction]
fn sample_quantile(xs: Vec<f64>, tau: f64) -> PyResult<f64> {
    crq_core::quantile_lp::sample_quantile(&xs, tau).map_err(py_err)
}

#[pyfunction]
fn fit_quantile_regression(x: Vec<Vec<f64>>, y: Vec<f64>, tau: f64) -> PyResult<QrFit> {
    let problem = QrProblem::new(matrix(&x)?, DVector::from_vec(y), tau).map_err(py_err)?;
    let f = crq_core::quantile_lp::fit_quantile_regression(&problem).map_err(py_err)?;
    Ok(QrFit {
        coefficients: f.coefficients,
        objective: f.objective,
        residuals: f.residuals,
        vertex_basis: f.vertex_basis,
    })
}

#[pyfunction]
fn fit_crq(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, tau: f64) -> PyResult<CrqFit> {
    let problem = crq_core::crq::CrqProblem::new(matrix(&x)?, matrix(&y)?, tau).map_err(py_err)?;
    let f = crq_core::crq::fit_crq(&problem).map_err(py_err)?;
    Ok(CrqFit {
        alpha: f.alpha,
        beta: f.beta,
        objective: f.objective,
        sign_pattern: f.sign_pattern,
        tau: f.tau,
    })
}

#[pyfunction]
fn fit_cancor(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<CancorFit> {
    let f = crq_core::cancor::fit_cancor(&matrix(&x)?, &matrix(&y)?).map_err(py_err)?;
    Ok(CancorFit {
        x_weights: f.x_weights,
        y_weights: f.y_weights,
        correlation: f.correlation,
        x_means: f.x_means,
        y_means: f.y_means,
    })
}

/// Bootstrap standard errors of quantile regression coefficients.
#[pyfunction]
#[pyo3(signature = (x, y, tau, replications = 200, seed = 0, scheme = "weighted"))]
fn bootstrap_qr_std_errors(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    tau: f64,
    replications: usize,
    seed: u64,
    scheme: &str,
) -> PyResult<Vec<f64>> {
    let problem = QrProblem::new(matrix(&x)?, DVector::from_vec(y), tau).map_err(py_err)?;
    let scheme: BootstrapScheme = scheme.parse().map_err(py_err)?;
    let spec = BootstrapSpec::new(replications, seed, scheme).map_err(py_err)?;
    Ok(bootstrap(&problem, &spec).map_err(py_err)?.std_errors)
}

#[pyfunction]
fn normal_cdf(x: f64) -> f64 {
    crq_core::inference::normal_cdf(x)
}

#[pyfunction]
fn normal_quantile(p: f64) -> PyResult<f64> {
    crq_core::inference::normal_quantile(p).map_err(py_err)
}

#[pyfunction]
fn bonferroni_critical(num_tests: usize, level: f64) -> PyResult<f64> {
    crq_core::inference::bonferroni_critical(num_tests, level).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (path, max_industries = 6))]
fn load_panel(path: &str, max_industries: usize) -> PyResult<Panel> {
    let schema = SchemaConfig {
        max_industries,
        ..SchemaConfig::default()
    };
    Ok(Panel {
        inner: load(path, &schema).map_err(py_err)?,
    })
}

#[pyfunction]
fn panel_from_csv(text: &str) -> PyResult<Panel> {
    Ok(Panel {
        inner: read_panel(text.as_bytes(), &SchemaConfig::default()).map_err(py_err)?,
    })
}

/// Synthetic panel and the coefficients that generated it.
#[pyfunction]
#[pyo3(signature = (seed = 0, noise = "gaussian", companies = 100, years = 10, industries = 6, first_year = 2009))]
fn generate(
    seed: u64,
    noise: &str,
    companies: usize,
    years: usize,
    industries: usize,
    first_year: i32,
) -> PyResult<(Panel, Truth)> {
    let spec = GeneratorSpec {
        seed,
        noise: noise.parse().map_err(py_err)?,
        num_companies: companies,
        num_years: years,
        num_industries: industries,
        first_year,
        ..GeneratorSpec::default()
    };
    let (panel, truth) = synth_generate(&spec).map_err(py_err)?;
    Ok((Panel { inner: panel }, truth.into()))
}

/// Runs the `crq` command line with `args` (without the program name).
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    crq_core::cli::run(std::iter::once("crq".to_string()).chain(args))
}

#[pymodule]
fn crq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<QrFit>()?;
    m.add_class::<CrqFit>()?;
    m.add_class::<CancorFit>()?;
    m.add_class::<Panel>()?;
    m.add_class::<Design>()?;
    m.add_class::<Truth>()?;
    m.add_function(wrap_pyfunction!(check_loss, m)?)?;
    m.add_function(wrap_pyfunction!(sample_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(fit_quantile_regression, m)?)?;
    m.add_function(wrap_pyfunction!(fit_crq, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cancor, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_qr_std_errors, m)?)?;
    m.add_function(wrap_pyfunction!(normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(normal_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(bonferroni_critical, m)?)?;
    m.add_function(wrap_pyfunction!(load_panel, m)?)?;
    m.add_function(wrap_pyfunction!(panel_from_csv, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
