//! Monte Carlo checks of the linear representation of r*.
//!
//! For each sample size and replication a dataset is drawn, r and r* are
//! computed at ψ₀, and the residual `d = r* − c₀ − (1 + c₁) r` is recorded.
//! Means and standard deviations of d across replications get percentile
//! bootstrap intervals, and their log-log slopes against n are fitted.

mod bootstrap;
mod verify;

pub use bootstrap::{bootstrap_ci, bootstrap_mean_sd, percentile};
pub use verify::{run_verification, write_verify_csv, VerifyConfig, VerifyResult, VerifyRow};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, INTERCEPT_NAME};
use crate::error::{Error, Result};
use crate::expansion::loglog_fit;
use crate::inference::InferenceEngine;
use crate::model::{ErrorDensity, ModelSpec, Problem};

/// Slope of the reference line drawn through the simulated curves.
pub const REFERENCE_SLOPE: f64 = -1.5;

/// Share of failed replications above which a row is flagged unreliable.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Residuals at or below this size everywhere mark a degenerate row.
const DEGENERATE_D: f64 = 1e-8;

fn default_sigma() -> f64 {
    1.0
}

/// Data-generating design: iid standard normal covariates plus an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub family: ModelSpec,
    /// Number of covariates, excluding the intercept.
    pub p: usize,
    pub beta_true: Vec<f64>,
    pub intercept: f64,
    /// Index into `beta_true` of the interest coefficient.
    #[serde(default)]
    pub interest: usize,
    /// Error scale for location-scale data.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Student-t degrees of freedom; overrides the error density of a
    /// location-scale family.
    #[serde(default)]
    pub error_df: Option<f64>,
}

impl Design {
    /// The model after applying `error_df`.
    pub fn model(&self) -> Result<ModelSpec> {
        match (self.family, self.error_df) {
            (m, None) => Ok(m),
            (ModelSpec::LocationScale { .. }, Some(df)) => {
                if df > 0.0 && df.is_finite() {
                    Ok(ModelSpec::LocationScale {
                        error: ErrorDensity::StudentT { df },
                    })
                } else {
                    Err(Error::Config(format!("error_df must be positive, got {df}")))
                }
            }
            (m, Some(_)) => Err(Error::Config(format!("error_df given for non-location-scale family {m}"))),
        }
    }

    /// Design-matrix column of the interest coefficient.
    pub fn interest_column(&self) -> usize {
        1 + self.interest
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?;
        if self.p == 0 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        if self.beta_true.len() != self.p {
            return Err(Error::Config(format!(
                "beta_true has {} entries, p = {}",
                self.beta_true.len(),
                self.p
            )));
        }
        if self.interest >= self.p {
            return Err(Error::Config(format!("interest {} outside 0..{}", self.interest, self.p)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.beta_true.iter().any(|b| !b.is_finite()) || !self.intercept.is_finite() {
            return Err(Error::Config("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Draws `n` observations from stream `stream` of the generator seeded
    /// with `seed`.
    pub fn generate(&self, seed: u64, stream: u64, n: usize) -> Result<Dataset> {
        let model = self.model()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let k = self.p + 1;
        let mut x = DMatrix::zeros(n, k);
        let mut y = DVector::zeros(n);
        let chi = match model {
            ModelSpec::LocationScale {
                error: ErrorDensity::StudentT { df },
            } => Some((ChiSquared::new(df).map_err(|e| Error::Config(e.to_string()))?, df)),
            _ => None,
        };
        for i in 0..n {
            x[(i, 0)] = 1.0;
            let mut eta = self.intercept;
            for j in 0..self.p {
                let v: f64 = StandardNormal.sample(&mut rng);
                x[(i, j + 1)] = v;
                eta += self.beta_true[j] * v;
            }
            y[i] = match model {
                ModelSpec::Logistic => {
                    let u: f64 = rng.random();
                    let mu = 1.0 / (1.0 + (-eta).exp());
                    if u < mu {
                        1.0
                    } else {
                        0.0
                    }
                }
                ModelSpec::NormalKnownScale { sigma } => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    eta + sigma * z
                }
                ModelSpec::LocationScale { error } => {
                    let e = match error {
                        ErrorDensity::Normal => StandardNormal.sample(&mut rng),
                        ErrorDensity::StudentT { .. } => {
                            let (chi, df) = chi.as_ref().expect("chi-squared set for t errors");
                            let z: f64 = StandardNormal.sample(&mut rng);
                            z / (chi.sample(&mut rng) / df).sqrt()
                        }
                        ErrorDensity::Logistic => {
                            let u: f64 = rng.random();
                            (u / (1.0 - u)).ln()
                        }
                    };
                    eta + self.sigma * e
                }
            };
        }
        let mut names = vec![INTERCEPT_NAME.to_string()];
        names.extend((1..=self.p).map(|j| format!("x{j}")));
        Dataset::with_names(y, x, names)
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(flatten)]
    pub design: Design,
    pub n_grid: Vec<usize>,
    pub psi0: f64,
    pub reps: usize,
    pub bootstrap_reps: usize,
    pub level: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Bernoulli-logistic design with β = (0, 1, 1, 1, 1), β₀ = 1, testing β₁ = 0.
    pub fn logistic_reference(reps: usize, bootstrap_reps: usize, seed: u64) -> Self {
        Self {
            design: Design {
                family: ModelSpec::Logistic,
                p: 5,
                beta_true: vec![0.0, 1.0, 1.0, 1.0, 1.0],
                intercept: 1.0,
                interest: 0,
                sigma: 1.0,
                error_df: None,
            },
            n_grid: vec![150, 300, 600, 1200, 2400],
            psi0: 0.0,
            reps,
            bootstrap_reps,
            level: 0.95,
            seed,
        }
    }

    /// The same design with t₅ location-scale errors.
    pub fn t5_reference(reps: usize, bootstrap_reps: usize, seed: u64) -> Self {
        let mut c = Self::logistic_reference(reps, bootstrap_reps, seed);
        c.design.family = ModelSpec::LocationScale {
            error: ErrorDensity::StudentT { df: 5.0 },
        };
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.reps < 100 {
            return Err(Error::Config(format!("reps must be at least 100, got {}", self.reps)));
        }
        if self.bootstrap_reps < 100 {
            return Err(Error::Config(format!(
                "bootstrap_reps must be at least 100, got {}",
                self.bootstrap_reps
            )));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be non-empty and strictly increasing".into()));
        }
        if self.n_grid[0] < self.design.p + 3 {
            return Err(Error::Config(format!(
                "smallest n must be at least p + 3 = {}",
                self.design.p + 3
            )));
        }
        if self.n_grid.iter().any(|&n| n as u64 > u32::MAX as u64) {
            return Err(Error::Config("n too large".into()));
        }
        if self.reps as u64 > u32::MAX as u64 {
            return Err(Error::Config("reps too large".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if !self.psi0.is_finite() {
            return Err(Error::Config("psi0 must be finite".into()));
        }
        Ok(())
    }

    /// Replication `rep` at sample size `n`; the stream is `(n << 32) | rep`.
    pub fn generate_dataset(&self, n: usize, rep: usize) -> Result<Dataset> {
        self.design.generate(self.seed, ((n as u64) << 32) | rep as u64, n)
    }
}

/// One replication's statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Replicate {
    pub r: f64,
    pub r_star: f64,
    pub c0: f64,
    pub c1: f64,
    /// `r* − c₀ − (1 + c₁) r`.
    pub d: f64,
    pub patched: bool,
}

pub fn replicate(model: ModelSpec, data: &Dataset, interest: usize, psi0: f64) -> Result<Replicate> {
    let problem = Problem::new(model, data, interest)?;
    let engine = InferenceEngine::new(problem)?;
    let report = engine.test(psi0)?;
    let repr = engine.linear_repr();
    Ok(Replicate {
        r: report.r,
        r_star: report.r_star,
        c0: repr.c0,
        c1: repr.c1,
        d: report.r_star - repr.apply(report.r),
        patched: report.near_zero_patched,
    })
}

/// Aggregates for one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub n: usize,
    pub mean_d: f64,
    pub sd_d: f64,
    pub mean_ci: (f64, f64),
    pub sd_ci: (f64, f64),
    pub n_ok: usize,
    pub n_failed: usize,
    pub n_patched: usize,
    /// Failure rate above [`MAX_FAILURE_RATE`].
    pub unreliable: bool,
    /// Mean residual has the opposite sign to the first row's.
    pub sign_flip: bool,
    /// Every residual within rounding of zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
    /// Log-log slope of `|mean_d|`; `None` when degenerate.
    pub slope_mean: Option<f64>,
    /// Log-log slope of `sd_d`; `None` when degenerate.
    pub slope_sd: Option<f64>,
    pub degenerate: bool,
    /// First error message per failing `(n, rep)`, capped at 20 entries.
    pub failures: Vec<(usize, usize, String)>,
}

impl SimResult {
    pub fn row(&self, n: usize) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// Runs every `(n, rep)` cell on a pool of `workers` threads (all cores when
/// `None`) and reduces in `(n, rep)` order.
pub fn run_study(config: &SimConfig, workers: Option<usize>) -> Result<SimResult> {
    config.validate()?;
    let model = config.design.model()?;
    let interest = config.design.interest_column();
    let cells: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.reps).map(move |rep| (n, rep)))
        .collect();

    let run = || -> Vec<Result<Replicate>> {
        cells
            .par_iter()
            .map(|&(n, rep)| {
                let data = config.generate_dataset(n, rep)?;
                replicate(model, &data, interest, config.psi0)
            })
            .collect()
    };
    let outcomes = with_pool(workers, run)?;

    let mut rows = Vec::with_capacity(config.n_grid.len());
    let mut failures = Vec::new();
    for (i, &n) in config.n_grid.iter().enumerate() {
        let slice = &outcomes[i * config.reps..(i + 1) * config.reps];
        let mut ds = Vec::with_capacity(config.reps);
        let mut n_patched = 0;
        for (rep, o) in slice.iter().enumerate() {
            match o {
                Ok(x) => {
                    ds.push(x.d);
                    n_patched += usize::from(x.patched);
                }
                Err(e) => {
                    if failures.len() < 20 {
                        failures.push((n, rep, e.to_string()));
                    }
                }
            }
        }
        let n_failed = config.reps - ds.len();
        if ds.len() < 10 {
            return Err(Error::Config(format!(
                "only {} of {} replications succeeded at n = {n}",
                ds.len(),
                config.reps
            )));
        }
        let (mean_d, sd_d) = mean_sd(&ds);
        // Bootstrap streams live in the top half of the stream space.
        let (mean_ci, sd_ci) = bootstrap_mean_sd(
            &ds,
            config.bootstrap_reps,
            config.level,
            config.seed,
            (1 << 63) | n as u64,
        )?;
        rows.push(SimRow {
            n,
            mean_d,
            sd_d,
            mean_ci,
            sd_ci,
            n_ok: ds.len(),
            n_failed,
            n_patched,
            unreliable: n_failed as f64 > MAX_FAILURE_RATE * config.reps as f64,
            sign_flip: false,
            degenerate: ds.iter().all(|d| d.abs() <= DEGENERATE_D),
        });
    }
    if let Some(s0) = rows.first().map(|r| r.mean_d.signum()) {
        for r in &mut rows {
            r.sign_flip = r.mean_d.signum() != s0;
        }
    }
    let degenerate = rows.iter().any(|r| r.degenerate);
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let (slope_mean, slope_sd) = if degenerate {
        (None, None)
    } else {
        let m: Vec<f64> = rows.iter().map(|r| r.mean_d.abs()).collect();
        let s: Vec<f64> = rows.iter().map(|r| r.sd_d).collect();
        (loglog_fit(&ns, &m).map(|f| f.1), loglog_fit(&ns, &s).map(|f| f.1))
    };
    Ok(SimResult {
        rows,
        slope_mean,
        slope_sd,
        degenerate,
        failures,
    })
}

pub(crate) fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == Some(0) {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Sample mean and standard deviation (n − 1 denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let sd = if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Intercept of a line with the given slope through `(log x, log y)` by least
/// squares.
pub fn reference_intercept(xs: &[f64], ys: &[f64], slope: f64) -> Option<f64> {
    if xs.is_empty() || xs.len() != ys.len() || ys.iter().any(|y| !(*y > 0.0)) {
        return None;
    }
    let m = xs.len() as f64;
    Some(xs.iter().zip(ys).map(|(x, y)| y.ln() - slope * x.ln()).sum::<f64>() / m)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `n, mean, mean_lo, mean_hi, sd, sd_lo, sd_hi`.
pub fn write_results_csv<W: Write>(result: &SimResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("writing CSV: {e}"));
    w.write_record(["n", "mean", "mean_lo", "mean_hi", "sd", "sd_lo", "sd_hi"]).map_err(io)?;
    for r in &result.rows {
        w.write_record([
            r.n.to_string(),
            r.mean_d.to_string(),
            r.mean_ci.0.to_string(),
            r.mean_ci.1.to_string(),
            r.sd_d.to_string(),
            r.sd_ci.0.to_string(),
            r.sd_ci.1.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing CSV: {e}")))?;
    Ok(())
}

/// Magnitudes, the slope −3/2 reference lines with fitted intercepts, the
/// least-squares fits and per-row flags.
pub fn write_plot_csv<W: Write>(result: &SimResult, out: W) -> Result<()> {
    let ns: Vec<f64> = result.rows.iter().map(|r| r.n as f64).collect();
    let m: Vec<f64> = result.rows.iter().map(|r| r.mean_d.abs()).collect();
    let s: Vec<f64> = result.rows.iter().map(|r| r.sd_d).collect();
    let ref_m = reference_intercept(&ns, &m, REFERENCE_SLOPE);
    let ref_s = reference_intercept(&ns, &s, REFERENCE_SLOPE);
    let fit_m = if result.degenerate { None } else { loglog_fit(&ns, &m) };
    let fit_s = if result.degenerate { None } else { loglog_fit(&ns, &s) };
    let line = |a: Option<f64>, slope: f64, n: f64| a.map(|a| (a + slope * n.ln()).exp());

    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("writing CSV: {e}"));
    w.write_record([
        "n",
        "abs_mean",
        "sd",
        "ref_abs_mean",
        "ref_sd",
        "fit_abs_mean",
        "fit_sd",
        "n_failed",
        "patched_fraction",
        "sign_flip",
        "unreliable",
    ])
    .map_err(io)?;
    for (i, r) in result.rows.iter().enumerate() {
        let n = ns[i];
        w.write_record([
            r.n.to_string(),
            m[i].to_string(),
            s[i].to_string(),
            fmt_opt(line(ref_m, REFERENCE_SLOPE, n)),
            fmt_opt(line(ref_s, REFERENCE_SLOPE, n)),
            fmt_opt(fit_m.and_then(|(a, b)| line(Some(a), b, n))),
            fmt_opt(fit_s.and_then(|(a, b)| line(Some(a), b, n))),
            r.n_failed.to_string(),
            (r.n_patched as f64 / r.n_ok as f64).to_string(),
            r.sign_flip.to_string(),
            r.unreliable.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing CSV: {e}")))?;
    Ok(())
}
