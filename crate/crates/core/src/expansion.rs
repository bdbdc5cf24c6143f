//! Asymptotic expansions of the adjustment terms.
//!
//! Given a [`ProfileCurve`], the nuisance and information adjustments are
//! linear in r up to `O(n^{-3/2})`:
//!
//! ```text
//! exponential family
//!   r_np  ≈  γ₁/(2 j_p^{1/2}) + { −κ₃γ₁/(12 j_p^{1/2}) − γ₂/(4 j_p) } r
//!   r_inf ≈ −κ₃/6            + {  κ₄/24 + 4κ₃²/72 } r
//! location-scale family
//!   r_np  ≈ −γ₁/(2 j_p^{1/2}) + {  κ₃γ₁/(12 j_p^{1/2}) + γ₂/(4 j_p) } r
//!   r_inf ≈  κ₃/3            − { 3κ₄/24 + 11κ₃²/72 } r
//! ```
//!
//! so `r* ≈ c₀ + (1 + c₁) r` with `c₀ = A*/√n` and `c₁ = B*/n`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Family;
use crate::profile::ProfileCurve;

/// Coefficients relating t to r and s to t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaCoeffs {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl LemmaCoeffs {
    /// `r(1 + A₁ r/√n + B₁ r²/n)`, the predicted Wald statistic.
    pub fn predict_t(&self, r: f64, n: usize) -> f64 {
        let sn = (n as f64).sqrt();
        r * (1.0 + self.a1 * r / sn + self.b1 * r * r / n as f64)
    }

    /// `t(1 + A₂ t/√n + B₂ t²/n)`, the predicted score statistic.
    pub fn predict_s(&self, t: f64, n: usize) -> f64 {
        let sn = (n as f64).sqrt();
        t * (1.0 + self.a2 * t / sn + self.b2 * t * t / n as f64)
    }
}

pub fn lemma1_coeffs(curve: &ProfileCurve, n: usize) -> LemmaCoeffs {
    let nf = n as f64;
    let sn = nf.sqrt();
    let k3 = curve.kappa3;
    let k4 = curve.kappa4;
    LemmaCoeffs {
        a1: -sn / 6.0 * k3,
        b1: nf / 24.0 * k4 + 5.0 * nf / 72.0 * k3 * k3,
        a2: sn * k3 / 2.0,
        b2: -nf * k4 / 6.0,
    }
}

/// Intercept and slope in r of one adjustment term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineTerm {
    pub intercept: f64,
    pub slope: f64,
}

impl AffineTerm {
    pub fn at(&self, r: f64) -> f64 {
        self.intercept + self.slope * r
    }
}

/// `(r_np, r_inf)` as affine functions of r.
pub fn adjustment_terms(curve: &ProfileCurve, family: Family) -> (AffineTerm, AffineTerm) {
    let k3 = curve.kappa3;
    let k4 = curve.kappa4;
    let g1 = curve.gamma1;
    let g2 = curve.gamma2;
    let sj = curve.j_p.sqrt();
    let j = curve.j_p;
    match family {
        Family::LinearExponential => (
            AffineTerm {
                intercept: g1 / (2.0 * sj),
                slope: -k3 * g1 / (12.0 * sj) - g2 / (4.0 * j),
            },
            AffineTerm {
                intercept: -k3 / 6.0,
                slope: k4 / 24.0 + 4.0 / 72.0 * k3 * k3,
            },
        ),
        Family::LocationScale => (
            AffineTerm {
                intercept: -g1 / (2.0 * sj),
                slope: k3 * g1 / (12.0 * sj) + g2 / (4.0 * j),
            },
            AffineTerm {
                intercept: k3 / 3.0,
                slope: -(3.0 / 24.0 * k4 + 11.0 / 72.0 * k3 * k3),
            },
        ),
    }
}

/// Predicted `(r_np, r_inf)` at a given r.
pub fn predicted_adjustments(curve: &ProfileCurve, family: Family, r: f64) -> (f64, f64) {
    let (np, inf) = adjustment_terms(curve, family);
    (np.at(r), inf.at(r))
}

/// `r* ≈ c₀ + (1 + c₁) r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearRepr {
    /// Constant term `A*/√n`.
    pub c0: f64,
    /// Slope minus one, `B*/n`.
    pub c1: f64,
    pub family: Family,
    pub n: usize,
}

impl LinearRepr {
    pub fn apply(&self, r: f64) -> f64 {
        self.c0 + (1.0 + self.c1) * r
    }

    pub fn a_star(&self) -> f64 {
        self.c0 * (self.n as f64).sqrt()
    }

    pub fn b_star(&self) -> f64 {
        self.c1 * self.n as f64
    }
}

pub fn linear_repr(curve: &ProfileCurve, family: Family, n: usize) -> LinearRepr {
    let (np, inf) = adjustment_terms(curve, family);
    LinearRepr {
        c0: np.intercept + inf.intercept,
        c1: np.slope + inf.slope,
        family,
        n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem3Point {
    pub n: usize,
    pub r: f64,
    pub q: f64,
    /// `√n (r − q)/q²`.
    pub a_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem3Report {
    pub points: Vec<Theorem3Point>,
    /// Inputs dropped because `|q| < 1e-3`.
    pub excluded: Vec<(f64, f64, usize)>,
    pub a_hat_mean: f64,
    pub a_hat_min: f64,
    pub a_hat_max: f64,
    /// `max |Â| / min |Â|`; infinite when Â changes sign or touches zero.
    pub a_hat_ratio: f64,
    /// Log-log slope of `|r − q − Ā q²/√n|` against n, when defined.
    pub residual_slope: Option<f64>,
}

/// Checks `r = q + A q²/√n + B q³/n` with `A = O_p(1)` along a sequence of
/// `(r, q, n)` triples.
pub fn theorem3_diagnostic(pairs: &[(f64, f64, usize)]) -> Result<Theorem3Report> {
    let mut distinct: Vec<usize> = pairs.iter().map(|p| p.2).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Config(format!(
            "need at least 3 distinct sample sizes, got {}",
            distinct.len()
        )));
    }
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for &(r, q, n) in pairs {
        if q.abs() < 1e-3 {
            excluded.push((r, q, n));
            continue;
        }
        points.push(Theorem3Point {
            n,
            r,
            q,
            a_hat: (n as f64).sqrt() * (r - q) / (q * q),
        });
    }
    if points.is_empty() {
        return Err(Error::Config("every point has |q| < 1e-3".into()));
    }
    let a: Vec<f64> = points.iter().map(|p| p.a_hat).collect();
    let a_hat_mean = a.iter().sum::<f64>() / a.len() as f64;
    let a_hat_min = a.iter().copied().fold(f64::INFINITY, f64::min);
    let a_hat_max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a_hat_ratio = if a_hat_min > 0.0 {
        a_hat_max / a_hat_min
    } else if a_hat_max < 0.0 {
        a_hat_min / a_hat_max
    } else {
        f64::INFINITY
    };
    let (ns, resid): (Vec<f64>, Vec<f64>) = points
        .iter()
        .map(|p| {
            let n = p.n as f64;
            (n, (p.r - p.q - a_hat_mean * p.q * p.q / n.sqrt()).abs())
        })
        .unzip();
    let residual_slope = loglog_fit(&ns, &resid).map(|(_, s)| s);
    Ok(Theorem3Report {
        points,
        excluded,
        a_hat_mean,
        a_hat_min,
        a_hat_max,
        a_hat_ratio,
        residual_slope,
    })
}

/// Least-squares `(intercept, slope)` of `log y` on `log x`. `None` with fewer
/// than two points, a non-positive `y`, or no spread in `x`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(k3: f64, k4: f64, g1: f64, g2: f64, j_p: f64) -> ProfileCurve {
        ProfileCurve {
            psi_hat: 0.0,
            zeta: [0.0, -j_p, k3 * j_p.powf(1.5), k4 * j_p * j_p],
            j_p,
            kappa3: k3,
            kappa4: k4,
            gamma1: g1,
            gamma2: g2,
            step: 0.1,
            lp_hat: 0.0,
            logdet_hat: 0.0,
        }
    }

    #[test]
    fn symmetric_profile_has_zero_skew_coefficients() {
        let c = lemma1_coeffs(&curve(0.0, 0.0, 0.3, 0.1, 50.0), 100);
        assert_eq!(c, LemmaCoeffs { a1: 0.0, b1: 0.0, a2: 0.0, b2: 0.0 });
    }

    #[test]
    fn expansion_coefficients_plug_in() {
        let n = 64;
        let k3 = 6.0 / 8.0;
        let c = lemma1_coeffs(&curve(k3, 0.0, 0.0, 0.0, 10.0), n);
        assert!((c.a1 + 1.0).abs() < 1e-15);
        assert!((c.a2 - 3.0).abs() < 1e-15);
        assert!((c.b1 - 5.0 * 64.0 * k3 * k3 / 72.0).abs() < 1e-12);
        assert_eq!(c.b2, 0.0);
        let c = lemma1_coeffs(&curve(0.1, 0.03, 0.0, 0.0, 10.0), 100);
        assert!((c.b2 + 100.0 * 0.03 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn zero_gamma_means_zero_nuisance_adjustment() {
        for fam in [Family::LinearExponential, Family::LocationScale] {
            let (np, _) = predicted_adjustments(&curve(0.2, 0.05, 0.0, 0.0, 30.0), fam, 1.3);
            assert_eq!(np, 0.0);
        }
        let (_, inf) = predicted_adjustments(&curve(0.0, 0.0, 0.4, 0.2, 30.0), Family::LinearExponential, 1.3);
        assert_eq!(inf, 0.0);
    }

    #[test]
    fn linear_repr_values() {
        let zero = linear_repr(&curve(0.0, 0.0, 0.0, 0.0, 5.0), Family::LocationScale, 10);
        assert_eq!((zero.c0, zero.c1), (0.0, 0.0));
        assert_eq!(zero.apply(0.7), 0.7);

        let r = linear_repr(&curve(0.6, 0.0, 0.0, 0.0, 123.0), Family::LinearExponential, 10);
        assert!((r.c0 + 0.1).abs() < 1e-15);

        // Hand evaluation of every term.
        let (k3, k4, g1, g2, j) = (0.3, -0.05, 0.8, -0.4, 25.0);
        let e = linear_repr(&curve(k3, k4, g1, g2, j), Family::LinearExponential, 100);
        let c0 = -k3 / 6.0 + g1 / 10.0;
        let c1 = k4 / 24.0 + 4.0 * k3 * k3 / 72.0 - k3 * g1 / 60.0 - g2 / 100.0;
        assert!((e.c0 - c0).abs() < 1e-15 && (e.c1 - c1).abs() < 1e-15);
        let l = linear_repr(&curve(k3, k4, g1, g2, j), Family::LocationScale, 100);
        let c0 = k3 / 3.0 - g1 / 10.0;
        let c1 = -3.0 * k4 / 24.0 - 11.0 * k3 * k3 / 72.0 + k3 * g1 / 60.0 + g2 / 100.0;
        assert!((l.c0 - c0).abs() < 1e-15 && (l.c1 - c1).abs() < 1e-15);
        assert!((l.a_star() - 10.0 * l.c0).abs() < 1e-15);
        assert!((l.b_star() - 100.0 * l.c1).abs() < 1e-13);
    }

    #[test]
    fn affine_expansion_matches_log_series() {
        // For the exponential family r_inf = log(t/r)/r with t/r from the Wald expansion;
        // expanding the log to second order must reproduce the affine term.
        let n = 400;
        let c = curve(0.05, 0.004, 0.0, 0.0, 80.0);
        let lemma = lemma1_coeffs(&c, n);
        let (_, inf) = adjustment_terms(&c, Family::LinearExponential);
        for r in [0.3, 1.0, 2.0] {
            let exact = (lemma.predict_t(r, n) / r).ln() / r;
            assert!((exact - inf.at(r)).abs() < 5e-4 * r * r, "r = {r}");
        }
    }

    #[test]
    fn a_hat_diagnostic_exact_case_and_preconditions() {
        let pairs = [(1.0, 1.0, 100), (0.8, 0.8, 200), (1.2, 1.2, 400)];
        let rep = theorem3_diagnostic(&pairs).unwrap();
        assert!(rep.points.iter().all(|p| p.a_hat == 0.0));
        assert_eq!(rep.residual_slope, None);

        assert!(theorem3_diagnostic(&[(1.0, 1.0, 100), (1.0, 1.1, 100)]).is_err());

        let rep = theorem3_diagnostic(&[(1.0, 1.1, 100), (0.0, 1e-4, 200), (1.0, 1.05, 400), (1.0, 1.02, 800)]).unwrap();
        assert_eq!(rep.excluded.len(), 1);
        assert_eq!(rep.points.len(), 3);
    }

    #[test]
    fn loglog_slope_recovers_power_law() {
        let xs = [150.0, 300.0, 600.0, 1200.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        let (a, b) = loglog_fit(&xs, &ys).unwrap();
        assert!((b + 1.5).abs() < 1e-12);
        assert!((a - 3f64.ln()).abs() < 1e-10);
        assert!(loglog_fit(&xs, &[1.0, 0.0, 1.0, 1.0]).is_none());
    }
}
