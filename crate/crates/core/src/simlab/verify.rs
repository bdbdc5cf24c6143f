//! Rate checks of the t–r–s relations and of `r = q + O(n^{-1/2})` along one
//! seeded sequence of nested datasets.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{lemma1_coeffs, loglog_fit, theorem3_diagnostic, Theorem3Report};
use crate::inference::{profile_score, InferenceEngine};
use crate::model::{Family, Problem};

use super::{with_pool, Design};

fn default_offset() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    #[serde(flatten)]
    pub design: Design,
    pub n_grid: Vec<usize>,
    /// ψ₀ = ψ̂ − offset_se · SE at every n.
    #[serde(default = "default_offset")]
    pub offset_se: f64,
    pub seed: u64,
    /// Selects an independent sequence for the same seed.
    #[serde(default)]
    pub path: u64,
}

impl VerifyConfig {
    /// The logistic reference design with interest on β₂ (true value 1).
    pub fn logistic_reference(seed: u64) -> Self {
        let mut design = super::SimConfig::logistic_reference(100, 100, seed).design;
        design.interest = 1;
        Self {
            design,
            n_grid: vec![100, 200, 400, 800, 1600],
            offset_se: 1.5,
            seed,
            path: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        let mut ns = self.n_grid.clone();
        ns.dedup();
        if ns.len() != self.n_grid.len() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if ns.len() < 3 {
            return Err(Error::Config("n_grid needs at least 3 sample sizes".into()));
        }
        if self.n_grid[0] < self.design.p + 3 {
            return Err(Error::Config(format!("smallest n must be at least {}", self.design.p + 3)));
        }
        if !(self.offset_se.is_finite() && self.offset_se != 0.0) {
            return Err(Error::Config("offset_se must be finite and non-zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub n: usize,
    pub psi_hat: f64,
    pub se: f64,
    pub psi0: f64,
    pub r: f64,
    pub t: f64,
    pub s: Option<f64>,
    pub q: f64,
    pub rho: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// `|t − r(1 + A₁ r/√n + B₁ r²/n)|`.
    pub lemma_t_resid: f64,
    /// `|s − t(1 + A₂ t/√n + B₂ t²/n)|`, location-scale only.
    pub lemma_s_resid: Option<f64>,
    /// `√n (r − q)/q²`.
    pub a_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyResult {
    pub rows: Vec<VerifyRow>,
    pub lemma_t_slope: Option<f64>,
    pub lemma_s_slope: Option<f64>,
    pub theorem3: Theorem3Report,
}

fn row_at(design: &Design, data: &crate::Dataset, offset_se: f64) -> Result<VerifyRow> {
    let model = design.model()?;
    let problem = Problem::new(model, data, design.interest_column())?;
    let engine = InferenceEngine::new(problem)?;
    let curve = *engine.curve();
    let n = data.n();
    let se = curve.standard_error();
    let psi_hat = engine.fit().psi_hat();
    let psi0 = psi_hat - offset_se * se;
    let report = engine.test(psi0)?;
    let t = (psi_hat - psi0) * curve.j_p.sqrt();
    let s = match problem.family() {
        Family::LocationScale => report.score_s,
        Family::LinearExponential => Some(profile_score(&engine, psi0)? / curve.j_p.sqrt()),
    };
    let lemma = lemma1_coeffs(&curve, n);
    let r = report.r;
    let q = report.q;
    Ok(VerifyRow {
        n,
        psi_hat,
        se,
        psi0,
        r,
        t,
        s,
        q,
        rho: report.rho,
        kappa3: curve.kappa3,
        kappa4: curve.kappa4,
        gamma1: curve.gamma1,
        gamma2: curve.gamma2,
        lemma_t_resid: (t - lemma.predict_t(r, n)).abs(),
        lemma_s_resid: s.map(|s| (s - lemma.predict_s(t, n)).abs()),
        a_hat: (n as f64).sqrt() * (r - q) / (q * q),
    })
}

/// Fits every prefix of one dataset of size `max(n_grid)`.
pub fn run_verification(config: &VerifyConfig, workers: Option<usize>) -> Result<VerifyResult> {
    config.validate()?;
    let n_max = *config.n_grid.last().expect("validated non-empty");
    // Verification paths use the top half of the stream space.
    let full = config.design.generate(config.seed, (1 << 63) | config.path, n_max)?;
    let rows: Vec<Result<VerifyRow>> = with_pool(workers, || {
        config
            .n_grid
            .par_iter()
            .map(|&n| row_at(&config.design, &full.head(n)?, config.offset_se))
            .collect()
    })?;
    let rows: Vec<VerifyRow> = rows.into_iter().collect::<Result<_>>()?;
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let lt: Vec<f64> = rows.iter().map(|r| r.lemma_t_resid).collect();
    let lemma_t_slope = loglog_fit(&ns, &lt).map(|f| f.1);
    let lemma_s_slope = rows
        .iter()
        .map(|r| r.lemma_s_resid)
        .collect::<Option<Vec<f64>>>()
        .and_then(|ls| loglog_fit(&ns, &ls).map(|f| f.1));
    let pairs: Vec<(f64, f64, usize)> = rows.iter().map(|r| (r.r, r.q, r.n)).collect();
    let theorem3 = theorem3_diagnostic(&pairs)?;
    Ok(VerifyResult {
        rows,
        lemma_t_slope,
        lemma_s_slope,
        theorem3,
    })
}

/// One row per n; the fitted slopes and the spread of Â repeat on each row.
pub fn write_verify_csv<W: Write>(result: &VerifyResult, out: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("writing CSV: {e}"));
    w.write_record([
        "n",
        "psi_hat",
        "se",
        "psi0",
        "r",
        "t",
        "s",
        "q",
        "rho",
        "kappa3",
        "kappa4",
        "gamma1",
        "gamma2",
        "lemma_t_resid",
        "lemma_s_resid",
        "a_hat",
        "lemma_t_slope",
        "lemma_s_slope",
        "a_hat_ratio",
        "theorem3_resid_slope",
    ])
    .map_err(io)?;
    for r in &result.rows {
        w.write_record([
            r.n.to_string(),
            r.psi_hat.to_string(),
            r.se.to_string(),
            r.psi0.to_string(),
            r.r.to_string(),
            r.t.to_string(),
            opt(r.s),
            r.q.to_string(),
            r.rho.to_string(),
            r.kappa3.to_string(),
            r.kappa4.to_string(),
            r.gamma1.to_string(),
            r.gamma2.to_string(),
            r.lemma_t_resid.to_string(),
            opt(r.lemma_s_resid),
            r.a_hat.to_string(),
            opt(result.lemma_t_slope),
            opt(result.lemma_s_slope),
            result.theorem3.a_hat_ratio.to_string(),
            opt(result.theorem3.residual_slope),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing CSV: {e}")))?;
    Ok(())
}
