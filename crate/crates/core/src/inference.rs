//! Likelihood root, modified likelihood root and their ingredients.
//!
//! ```text
//! r  = sign(ψ̂ − ψ₀) [2{l_p(ψ̂) − l_p(ψ₀)}]^{1/2}
//! r* = r + (1/r) log(q/r)
//! q  = t ρ   (linear exponential family),   q = s/ρ   (location-scale)
//! ```
//!
//! Near `r = 0` the log term is replaced by the linear representation
//! `c₀ + (1 + c₁) r` and the report is flagged.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{fit_constrained, fit_mle, ConstrainedFit, FitResult};
use crate::expansion::{linear_repr, predicted_adjustments, LinearRepr};
use crate::model::{Family, Problem};
use crate::profile::{profile_curve, profile_slope_at, ProfileAnalysis, ProfileCurve, ProfileOptions};

/// Half-width of the near-zero patch on the r scale.
pub const PATCH_RADIUS: f64 = 0.05;

/// Tolerated amount by which a constrained fit may exceed the global one.
const PROFILE_SLACK: f64 = 1e-8;

pub fn likelihood_root(lp_hat: f64, lp_psi0: f64, psi_hat: f64, psi0: f64) -> Result<f64> {
    let diff = lp_hat - lp_psi0;
    if diff < -PROFILE_SLACK || !diff.is_finite() {
        return Err(Error::ProfileInconsistency { lp_hat, lp_psi0 });
    }
    let w = 2.0 * diff.max(0.0);
    let sign = if psi_hat > psi0 {
        1.0
    } else if psi_hat < psi0 {
        -1.0
    } else {
        0.0
    };
    Ok(sign * w.sqrt())
}

fn check_jp(j_p: f64) -> Result<()> {
    if j_p > 0.0 && j_p.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("profile information must be positive, got {j_p}")))
    }
}

/// `t = (ψ̂ − ψ₀) j_p^{1/2}`.
pub fn wald_stat(psi_hat: f64, psi0: f64, j_p: f64) -> Result<f64> {
    check_jp(j_p)?;
    Ok((psi_hat - psi0) * j_p.sqrt())
}

/// `s = l_p′(ψ₀) / j_p^{1/2}`.
pub fn score_stat(zeta1_at_psi0: f64, j_p: f64) -> Result<f64> {
    check_jp(j_p)?;
    Ok(zeta1_at_psi0 / j_p.sqrt())
}

/// `ρ = exp{(log|ĵ_λλ| − log|j_λλ(ψ₀)|)/2}`.
pub fn rho_stat(logdet_hat: f64, logdet_psi0: f64) -> Result<f64> {
    if !(logdet_hat.is_finite() && logdet_psi0.is_finite()) {
        return Err(Error::InvalidParameter("non-finite log-determinant".into()));
    }
    Ok(((logdet_hat - logdet_psi0) / 2.0).exp())
}

pub fn q_stat(family: Family, t_or_s: f64, rho: f64) -> f64 {
    match family {
        Family::LinearExponential => t_or_s * rho,
        Family::LocationScale => t_or_s / rho,
    }
}

/// `(r*, patched)`.
pub fn r_star(r: f64, q: f64, repr: &LinearRepr) -> Result<(f64, bool)> {
    if r.abs() < PATCH_RADIUS {
        return Ok((repr.apply(r), true));
    }
    let ratio = q / r;
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::SignInconsistency { r, q });
    }
    Ok((r + ratio.ln() / r, false))
}

/// `(r_np, r_inf)` with `r + r_np + r_inf = r*`.
pub fn decompose(r: f64, rho: f64, t_or_s: f64, family: Family) -> Result<(f64, f64)> {
    if r.abs() < PATCH_RADIUS {
        return Err(Error::Config(format!(
            "decomposition needs |r| >= {PATCH_RADIUS}, got {r}"
        )));
    }
    let q = q_stat(family, t_or_s, rho);
    if !(q / r > 0.0) || !(t_or_s / r > 0.0) {
        return Err(Error::SignInconsistency { r, q });
    }
    let np = rho.ln() / r;
    let inf = (t_or_s / r).ln() / r;
    Ok(match family {
        Family::LinearExponential => (np, inf),
        Family::LocationScale => (-np, inf),
    })
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `(Φ(−x), 2Φ(−|x|))`.
pub fn p_values(stat: f64) -> (f64, f64) {
    (normal_cdf(-stat), (2.0 * normal_cdf(-stat.abs())).min(1.0))
}

/// Which root a confidence interval inverts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootStatistic {
    R,
    RStar,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceReport {
    pub psi0: f64,
    pub psi_hat: f64,
    pub r: f64,
    pub wald_t: Option<f64>,
    pub score_s: Option<f64>,
    pub rho: f64,
    pub q: f64,
    pub r_star: f64,
    pub r_np: f64,
    pub r_inf: f64,
    /// p-values of r*.
    pub p_one_sided: f64,
    pub p_two_sided: f64,
    /// p-values of r.
    pub p_r_one_sided: f64,
    pub p_r_two_sided: f64,
    pub near_zero_patched: bool,
    pub family: Family,
    pub n: usize,
}

/// A fitted model with its profile curve, ready to test hypotheses on ψ.
#[derive(Debug, Clone)]
pub struct InferenceEngine<'a> {
    problem: Problem<'a>,
    fit: FitResult,
    profile: ProfileAnalysis,
    repr: LinearRepr,
}

impl<'a> InferenceEngine<'a> {
    pub fn new(problem: Problem<'a>) -> Result<Self> {
        Self::with_options(problem, &ProfileOptions::default())
    }

    pub fn with_options(problem: Problem<'a>, opts: &ProfileOptions) -> Result<Self> {
        let fit = fit_mle(&problem, None)?;
        Self::from_fit(problem, fit, opts)
    }

    pub fn from_fit(problem: Problem<'a>, fit: FitResult, opts: &ProfileOptions) -> Result<Self> {
        let profile = profile_curve(&problem, &fit, opts)?;
        let repr = linear_repr(&profile.curve, problem.family(), problem.n());
        Ok(Self { problem, fit, profile, repr })
    }

    pub fn problem(&self) -> &Problem<'a> {
        &self.problem
    }

    pub fn fit(&self) -> &FitResult {
        &self.fit
    }

    pub fn curve(&self) -> &ProfileCurve {
        &self.profile.curve
    }

    pub fn grid(&self) -> &[ConstrainedFit] {
        &self.profile.grid
    }

    pub fn linear_repr(&self) -> &LinearRepr {
        &self.repr
    }

    /// Constrained fit at ψ₀, started from the nearest grid point.
    pub fn constrained(&self, psi0: f64) -> Result<ConstrainedFit> {
        let nearest = self
            .profile
            .grid
            .iter()
            .min_by(|a, b| (a.psi - psi0).abs().total_cmp(&(b.psi - psi0).abs()))
            .map(|f| f.lambda_hat_psi.as_slice())
            .unwrap_or(self.fit.theta_hat.lambda.as_slice());
        fit_constrained(&self.problem, psi0, Some(nearest))
    }

    /// `r(ψ₀)` alone, one constrained fit.
    pub fn root(&self, psi0: f64) -> Result<f64> {
        let c = self.constrained(psi0)?;
        likelihood_root(self.fit.loglik_at_max, c.loglik_profile, self.fit.psi_hat(), psi0)
    }

    pub fn test(&self, psi0: f64) -> Result<InferenceReport> {
        if !psi0.is_finite() {
            return Err(Error::InvalidParameter(format!("psi0 must be finite, got {psi0}")));
        }
        let family = self.problem.family();
        let curve = &self.profile.curve;
        let psi_hat = self.fit.psi_hat();
        let c = self.constrained(psi0)?;
        let r = likelihood_root(self.fit.loglik_at_max, c.loglik_profile, psi_hat, psi0)?;
        let rho = rho_stat(self.fit.logdet_nuisance, c.logdet_nuisance)?;

        let (stat, wald_t, score_s) = match family {
            Family::LinearExponential => {
                let t = wald_stat(psi_hat, psi0, curve.j_p)?;
                (t, Some(t), None)
            }
            Family::LocationScale => {
                let (slope, _) = profile_slope_at(&self.problem, psi0, curve.step, Some(&c.lambda_hat_psi))?;
                let s = score_stat(slope, curve.j_p)?;
                (s, None, Some(s))
            }
        };
        let q = q_stat(family, stat, rho);
        let (rs, patched) = r_star(r, q, &self.repr)?;
        let (r_np, r_inf) = if patched {
            predicted_adjustments(curve, family, r)
        } else {
            decompose(r, rho, stat, family)?
        };
        let (p_one_sided, p_two_sided) = p_values(rs);
        let (p_r_one_sided, p_r_two_sided) = p_values(r);
        Ok(InferenceReport {
            psi0,
            psi_hat,
            r,
            wald_t,
            score_s,
            rho,
            q,
            r_star: rs,
            r_np,
            r_inf,
            p_one_sided,
            p_two_sided,
            p_r_one_sided,
            p_r_two_sided,
            near_zero_patched: patched,
            family,
            n: self.problem.n(),
        })
    }

    fn statistic(&self, which: RootStatistic, psi: f64) -> Result<f64> {
        match which {
            RootStatistic::R => self.root(psi),
            RootStatistic::RStar => Ok(self.test(psi)?.r_star),
        }
    }

    /// Interval `{ψ : |stat(ψ)| ≤ z_{(1+level)/2}}` by bracketing outward in
    /// steps of one standard error, then regula falsi.
    pub fn confidence_interval(&self, which: RootStatistic, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {level}")));
        }
        let z = Normal::standard().inverse_cdf(0.5 * (1.0 + level));
        let se = self.profile.curve.standard_error();
        let psi_hat = self.fit.psi_hat();
        let tol = 1e-6 * se;
        let f = |psi: f64| self.statistic(which, psi);
        // stat decreases in ψ: solve stat = z below ψ̂ and stat = −z above.
        let lo = self.limit(&f, psi_hat, -se, z, tol)?;
        let hi = self.limit(&f, psi_hat, se, -z, tol)?;
        Ok((lo, hi))
    }

    fn limit(
        &self,
        f: &impl Fn(f64) -> Result<f64>,
        psi_hat: f64,
        delta: f64,
        target: f64,
        tol: f64,
    ) -> Result<f64> {
        const MAX_SE: usize = 10;
        let g = |psi: f64| -> Result<f64> { Ok(f(psi)? - target) };
        let mut a = psi_hat;
        let mut ga = g(a)?;
        if ga == 0.0 {
            return Ok(a);
        }
        for k in 1..=MAX_SE {
            let b = psi_hat + k as f64 * delta;
            let gb = g(b)?;
            if gb == 0.0 {
                return Ok(b);
            }
            if ga.signum() != gb.signum() {
                return illinois(g, a, b, ga, gb, tol);
            }
            a = b;
            ga = gb;
        }
        Err(Error::Bracket { width: MAX_SE as f64 })
    }
}

/// Illinois variant of regula falsi on a sign-changing bracket.
fn illinois(
    g: impl Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    mut ga: f64,
    mut gb: f64,
    tol: f64,
) -> Result<f64> {
    let mut side = 0i8;
    for _ in 0..200 {
        let c = if (b - a).abs() <= tol {
            return Ok(0.5 * (a + b));
        } else {
            let sec = (a * gb - b * ga) / (gb - ga);
            // Keep the iterate strictly inside the bracket.
            if sec.is_finite() && (sec - a) * (sec - b) < 0.0 {
                sec
            } else {
                0.5 * (a + b)
            }
        };
        let gc = g(c)?;
        if gc == 0.0 {
            return Ok(c);
        }
        if gc.signum() == gb.signum() {
            b = c;
            gb = gc;
            if side == 1 {
                ga /= 2.0;
            }
            side = 1;
        } else {
            a = c;
            ga = gc;
            if side == -1 {
                gb /= 2.0;
            }
            side = -1;
        }
        // A secant step that lands next to an endpoint also shrinks the
        // bracket by a tolerance-sized bisection.
        if (b - a).abs() > tol && ((c - a).abs() < 0.5 * tol || (c - b).abs() < 0.5 * tol) {
            let m = 0.5 * (a + b);
            let gm = g(m)?;
            if gm.signum() == gb.signum() {
                b = m;
                gb = gm;
            } else {
                a = m;
                ga = gm;
            }
        }
    }
    Ok(0.5 * (a + b))
}

/// Nine-point profile slope at ψ₀ with the engine's grid spacing.
pub fn profile_score(engine: &InferenceEngine<'_>, psi0: f64) -> Result<f64> {
    let c = engine.constrained(psi0)?;
    Ok(profile_slope_at(engine.problem(), psi0, engine.curve().step, Some(&c.lambda_hat_psi))?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::Dataset;

    fn zero_repr() -> LinearRepr {
        LinearRepr {
            c0: 0.0,
            c1: 0.0,
            family: Family::LinearExponential,
            n: 10,
        }
    }

    #[test]
    fn likelihood_root_cases() {
        assert_eq!(likelihood_root(-3.0, -3.0, 0.4, 0.4).unwrap(), 0.0);
        assert_eq!(likelihood_root(-1.0, -3.0, 1.0, 0.0).unwrap(), 2.0);
        assert_eq!(likelihood_root(-1.0, -3.0, 0.0, 1.0).unwrap(), -2.0);
        assert_eq!(likelihood_root(-1.0, -1.0 + 5e-9, 0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            likelihood_root(-1.0, -0.9, 0.0, 1.0),
            Err(Error::ProfileInconsistency { .. })
        ));
    }

    #[test]
    fn simple_statistics() {
        assert_eq!(wald_stat(1.0, 1.0, 4.0).unwrap(), 0.0);
        assert!((wald_stat(0.8, 0.5, 100.0).unwrap() - 3.0).abs() < 1e-14);
        assert!(wald_stat(0.8, 0.5, 0.0).is_err());
        assert_eq!(score_stat(5.0, 25.0).unwrap(), 1.0);
        assert_eq!(score_stat(0.0, 25.0).unwrap(), 0.0);
        assert_eq!(rho_stat(1.7, 1.7).unwrap(), 1.0);
        assert!((rho_stat(2.0 * 2f64.ln(), 0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(rho_stat(f64::NAN, 0.0).is_err());
        assert_eq!(q_stat(Family::LinearExponential, 0.0, 1.3), 0.0);
        assert!((q_stat(Family::LinearExponential, 1.5, 1.2) - 1.8).abs() < 1e-15);
        assert!((q_stat(Family::LocationScale, 1.5, 1.2) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn r_star_cases() {
        let repr = LinearRepr {
            c0: 0.03,
            c1: -0.01,
            family: Family::LinearExponential,
            n: 50,
        };
        assert_eq!(r_star(1.3, 1.3, &repr).unwrap(), (1.3, false));
        let (v, p) = r_star(2.0, 2.0 * std::f64::consts::E, &repr).unwrap();
        assert!((v - 2.5).abs() < 1e-15 && !p);
        let (v, p) = r_star(1e-6, 123.0, &repr).unwrap();
        assert!(p);
        assert_eq!(v, 0.03 + 0.99 * 1e-6);
        assert!(matches!(r_star(1.0, -0.5, &repr), Err(Error::SignInconsistency { .. })));
        assert!(matches!(r_star(-1.0, 0.0, &zero_repr()), Err(Error::SignInconsistency { .. })));
    }

    #[test]
    fn decompose_cases() {
        let e2 = 2f64.exp();
        let (np, _) = decompose(1.1, 1.0, 1.2, Family::LinearExponential).unwrap();
        assert_eq!(np, 0.0);
        let (np, _) = decompose(2.0, e2, 2.0, Family::LinearExponential).unwrap();
        assert!((np - 1.0).abs() < 1e-15);
        let (np, _) = decompose(2.0, e2, 2.0, Family::LocationScale).unwrap();
        assert!((np + 1.0).abs() < 1e-15);
        for fam in [Family::LinearExponential, Family::LocationScale] {
            let (r, rho, t) = (-0.8, 1.37, -0.9);
            let (np, inf) = decompose(r, rho, t, fam).unwrap();
            let (rs, _) = r_star(r, q_stat(fam, t, rho), &zero_repr()).unwrap();
            assert!((r + np + inf - rs).abs() < 1e-12);
        }
        assert!(decompose(0.01, 1.0, 0.01, Family::LocationScale).is_err());
    }

    #[test]
    fn normal_probabilities() {
        assert_eq!(p_values(0.0), (0.5, 1.0));
        assert!((p_values(1.959963985).1 - 0.05).abs() < 1e-6);
        // Φ(1) to 15 digits.
        let v = p_values(-1.0).0;
        assert!((v - 0.841_344_746_068_542_9).abs() < 1e-15, "{v:e} {:e}", v - 0.841_344_746_068_542_9);
        assert!((normal_cdf(-8.0) - 6.220_960_574_271_785e-16).abs() < 1e-28);
    }

    fn known_scale_data() -> Dataset {
        let x1 = [-1.2, -0.7, -0.3, 0.1, 0.4, 0.9, 1.3, 1.8, -0.5, 0.6];
        let x2 = [0.3, -0.2, 0.8, -1.1, 0.5, 0.05, -0.6, 0.2, 1.4, -0.9];
        let e = [0.4, -0.3, 0.1, 0.7, -0.9, 0.2, -0.1, 0.5, -0.6, 0.3];
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, x1[i], x2[i]]).collect();
        let y: Vec<f64> = (0..10).map(|i| 0.5 + 1.2 * x1[i] - 0.4 * x2[i] + e[i]).collect();
        Dataset::from_rows(&y, &rows).unwrap()
    }

    #[test]
    fn exact_normal_interval() {
        let data = known_scale_data();
        let problem = Problem::new(ModelSpec::NormalKnownScale { sigma: 0.7 }, &data, 1).unwrap();
        let engine = InferenceEngine::new(problem).unwrap();
        let se = engine.curve().standard_error();
        let psi_hat = engine.fit().psi_hat();
        let z = 1.959_963_984_540_054;
        let (lo, hi) = engine.confidence_interval(RootStatistic::R, 0.95).unwrap();
        assert!((lo - (psi_hat - z * se)).abs() < 1e-6 * se, "{lo}");
        assert!((hi - (psi_hat + z * se)).abs() < 1e-6 * se, "{hi}");
        assert!(lo < psi_hat && psi_hat < hi);
        assert!(engine.confidence_interval(RootStatistic::R, 1.0).is_err());
    }

    #[test]
    fn test_at_mle_is_patched_zero() {
        let data = known_scale_data();
        let problem = Problem::new(ModelSpec::NormalKnownScale { sigma: 0.7 }, &data, 2).unwrap();
        let engine = InferenceEngine::new(problem).unwrap();
        let rep = engine.test(engine.fit().psi_hat()).unwrap();
        assert_eq!(rep.r, 0.0);
        assert!(rep.near_zero_patched);
        assert_eq!(rep.p_r_two_sided, 1.0);
        assert!((rep.rho - 1.0).abs() < 1e-10);
    }
}
