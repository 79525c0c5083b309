//! Bootstrap standard errors, normal quantiles, and Bonferroni thresholds.
//!
//! Both bootstrap schemes are expressed as reweighting: the weighted scheme
//! draws independent unit-mean exponential weights, the resampling scheme
//! uses multinomial counts from `n` draws with replacement. Replication `r`
//! draws from a ChaCha20 stream keyed by `(seed, r)`, so the result does not
//! depend on the order in which replications are evaluated.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile_lp::{fit_quantile_regression, fit_quantile_regression_from, QrProblem};

/// Share of replications allowed to fail before the whole run is rejected.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapScheme {
    Weighted,
    Resample,
}

impl BootstrapScheme {
    pub fn name(self) -> &'static str {
        match self {
            BootstrapScheme::Weighted => "weighted",
            BootstrapScheme::Resample => "resample",
        }
    }
}

impl std::str::FromStr for BootstrapScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(BootstrapScheme::Weighted),
            "resample" => Ok(BootstrapScheme::Resample),
            other => Err(Error::domain(format!("unknown bootstrap scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub replications: usize,
    pub seed: u64,
    pub scheme: BootstrapScheme,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            replications: 200,
            seed: 0,
            scheme: BootstrapScheme::Weighted,
        }
    }
}

impl BootstrapSpec {
    pub fn new(replications: usize, seed: u64, scheme: BootstrapScheme) -> Result<Self> {
        let spec = Self {
            replications,
            seed,
            scheme,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::domain("bootstrap needs at least 2 replications"));
        }
        Ok(())
    }

    pub fn with_scheme(self, scheme: BootstrapScheme) -> Self {
        Self { scheme, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    /// Replications that succeeded and entered the standard errors.
    pub replications: usize,
    pub failed_replications: usize,
    pub seed: u64,
    pub scheme: BootstrapScheme,
}

/// An estimator that can be refit under per-observation weights.
pub trait WeightedEstimator {
    fn n_obs(&self) -> usize;
    fn estimate(&self, weights: &[f64]) -> Result<Vec<f64>>;
}

/// Adapts a closure to [`WeightedEstimator`].
pub struct FnEstimator<F> {
    n: usize,
    f: F,
}

impl<F> FnEstimator<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F> WeightedEstimator for FnEstimator<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn n_obs(&self) -> usize {
        self.n
    }

    fn estimate(&self, weights: &[f64]) -> Result<Vec<f64>> {
        (self.f)(weights)
    }
}

/// Quantile regression coefficients.
impl WeightedEstimator for QrProblem {
    fn n_obs(&self) -> usize {
        self.response().len()
    }

    fn estimate(&self, weights: &[f64]) -> Result<Vec<f64>> {
        Ok(fit_quantile_regression(&self.weighted(weights)?)?.coefficients)
    }
}

/// Quantile regression whose refits start from the full-sample vertex.
///
/// Same estimates as the plain [`QrProblem`] estimator up to the choice
/// among tied optima, with far fewer pivots per replication.
#[derive(Debug, Clone)]
pub struct WarmQr {
    problem: QrProblem,
    start: Vec<usize>,
}

impl WarmQr {
    pub fn new(problem: QrProblem) -> Result<Self> {
        let start = fit_quantile_regression(&problem)?.vertex_basis;
        Ok(Self { problem, start })
    }
}

impl WeightedEstimator for WarmQr {
    fn n_obs(&self) -> usize {
        self.problem.response().len()
    }

    fn estimate(&self, weights: &[f64]) -> Result<Vec<f64>> {
        let fit = fit_quantile_regression_from(&self.problem.weighted(weights)?, &self.start)?;
        Ok(fit.coefficients)
    }
}

/// Random stream for one replication.
pub fn replication_rng(seed: u64, replication: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

/// Weights for replication `r` under the given scheme.
pub fn replication_weights(spec: &BootstrapSpec, n: usize, replication: usize) -> Vec<f64> {
    let mut rng = replication_rng(spec.seed, replication);
    match spec.scheme {
        BootstrapScheme::Weighted => (0..n).map(|_| rng.sample(Exp1)).collect(),
        BootstrapScheme::Resample => {
            let mut counts = vec![0.0; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1.0;
            }
            counts
        }
    }
}

/// Raw replicate estimates before standard errors are formed.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicates {
    pub estimates: Vec<f64>,
    pub draws: Vec<Vec<f64>>,
    pub failed: usize,
    pub spec: BootstrapSpec,
}

impl Replicates {
    /// Per-coordinate standard deviation across successful replications.
    pub fn std_errors(&self) -> Vec<f64> {
        let m = self.draws.len() as f64;
        (0..self.estimates.len())
            .map(|j| {
                let mean = self.draws.iter().map(|d| d[j]).sum::<f64>() / m;
                let var = self.draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (m - 1.0);
                var.sqrt()
            })
            .collect()
    }

    /// Summary with strictly positive standard errors; zero spread is an error.
    pub fn summary(self) -> Result<BootstrapSummary> {
        let std_errors = self.std_errors();
        for (j, (&se, est)) in std_errors.iter().zip(&self.estimates).enumerate() {
            if se == 0.0 || se <= 1e-12 * est.abs() {
                return Err(Error::Inference(format!(
                    "bootstrap standard error of coefficient {j} is zero (degenerate data)"
                )));
            }
        }
        let t_stats = self.estimates.iter().zip(&std_errors).map(|(e, s)| e / s).collect();
        Ok(BootstrapSummary {
            estimates: self.estimates,
            std_errors,
            t_stats,
            replications: self.draws.len(),
            failed_replications: self.failed,
            seed: self.spec.seed,
            scheme: self.spec.scheme,
        })
    }
}

/// Refits the estimator for every replication, enforcing the failure budget.
pub fn bootstrap_replicates<E: WeightedEstimator + ?Sized>(
    estimator: &E,
    spec: &BootstrapSpec,
) -> Result<Replicates> {
    spec.validate()?;
    let n = estimator.n_obs();
    if n < 2 {
        return Err(Error::Inference(format!(
            "bootstrap needs at least 2 observations, got {n}"
        )));
    }
    let estimates = estimator.estimate(&vec![1.0; n])?;
    let k = estimates.len();

    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(spec.replications);
    let mut failed = 0usize;
    for r in 0..spec.replications {
        let w = replication_weights(spec, n, r);
        match estimator.estimate(&w) {
            Ok(est) if est.len() == k && est.iter().all(|v| v.is_finite()) => draws.push(est),
            _ => failed += 1,
        }
    }
    let budget = (MAX_FAILURE_FRACTION * spec.replications as f64).floor() as usize;
    if failed > budget {
        return Err(Error::Inference(format!(
            "{failed} of {} bootstrap replications failed (budget {budget})",
            spec.replications
        )));
    }
    if draws.len() < 2 {
        return Err(Error::Inference("fewer than 2 successful replications".into()));
    }
    Ok(Replicates {
        estimates,
        draws,
        failed,
        spec: *spec,
    })
}

/// Bootstrap with the scheme named in `spec`.
pub fn bootstrap<E: WeightedEstimator + ?Sized>(
    estimator: &E,
    spec: &BootstrapSpec,
) -> Result<BootstrapSummary> {
    bootstrap_replicates(estimator, spec)?.summary()
}

/// Exponential-weights bootstrap, whatever scheme `spec` names.
pub fn weighted_bootstrap<E: WeightedEstimator + ?Sized>(
    estimator: &E,
    spec: &BootstrapSpec,
) -> Result<BootstrapSummary> {
    bootstrap(estimator, &spec.with_scheme(BootstrapScheme::Weighted))
}

/// Resample-with-replacement bootstrap, whatever scheme `spec` names.
pub fn resample_bootstrap<E: WeightedEstimator + ?Sized>(
    estimator: &E,
    spec: &BootstrapSpec,
) -> Result<BootstrapSummary> {
    bootstrap(estimator, &spec.with_scheme(BootstrapScheme::Resample))
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `P(Z > x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `(P(Z > t), P(|Z| > |t|))`.
pub fn p_values(t: f64) -> (f64, f64) {
    (normal_sf(t), (2.0 * normal_sf(t.abs())).min(1.0))
}

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Inverse standard normal distribution function.
///
/// Wichura's AS 241 rational approximations followed by one Halley step.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("normal_quantile needs p in (0, 1), got {p}")));
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        133.141_667_891_784_377_45,
        1_971.590_950_306_551_442_7,
        13_731.693_765_509_461_125,
        45_921.953_931_549_871_457,
        67_265.770_927_008_700_853,
        33_430.575_583_588_128_105,
        2_509.080_928_730_122_672_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_911_252,
        687.187_007_492_057_908_3,
        5_394.196_021_424_751_107_7,
        21_213.794_301_586_595_867,
        39_307.895_800_092_710_61,
        28_729.085_735_721_942_674,
        5_226.495_278_852_854_561,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        0.241_780_725_177_450_611_77,
        0.022_723_844_989_269_184_583_3,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        0.689_767_334_985_100_004_55,
        0.148_103_976_427_480_074_59,
        0.015_198_666_563_616_457_196_6,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        0.296_560_571_828_504_891_23,
        0.026_532_189_526_576_123_093,
        0.001_242_660_947_388_078_438_6,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_937_69,
        0.136_929_880_922_735_805_31,
        0.014_875_361_290_850_614_852_5,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    let q = p - 0.5;
    let mut x = if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        q * poly(&A, r) / poly(&B, r)
    } else {
        let tail = if q < 0.0 { p } else { 1.0 - p };
        let r = (-tail.ln()).sqrt();
        let z = if r <= 5.0 {
            let r = r - 1.6;
            poly(&C, r) / poly(&D, r)
        } else {
            let r = r - 5.0;
            poly(&E, r) / poly(&F, r)
        };
        if q < 0.0 {
            -z
        } else {
            z
        }
    };

    // Halley refinement; the error is measured in the tail nearer to p.
    let err = if p < 0.5 {
        normal_cdf(x) - p
    } else {
        (1.0 - p) - normal_sf(x)
    };
    let u = err * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    if u.is_finite() {
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Two-sided simultaneous critical value `Phi^{-1}(1 - (level / 2) / m)`.
pub fn bonferroni_critical(num_tests: usize, level: f64) -> Result<f64> {
    if num_tests == 0 {
        return Err(Error::domain("bonferroni_critical needs at least one test"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("level must lie in (0, 1), got {level}")));
    }
    normal_quantile(1.0 - (level / 2.0) / num_tests as f64)
}
