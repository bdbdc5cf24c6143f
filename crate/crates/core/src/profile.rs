//! Profile log-likelihood derivatives along ψ.
//!
//! A grid of constrained fits at `ψ̂ + k·h`, `k = −4..=4`, is differentiated
//! with nine-point central stencils. The same stencils applied to
//! `log|j_λλ(ψ, λ̂_ψ)|` give γ₁ and γ₂. The default step `h = ½·j̃_p^{-1/2}`
//! scales with a pilot curvature from a three-point difference.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{fit_constrained, ConstrainedFit, FitResult};
use crate::model::Problem;
use crate::stencil::CentralStencil;

/// Everything the higher-order expansions consume, evaluated at ψ̂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileCurve {
    pub psi_hat: f64,
    /// `ζ_k = d^k l_p/dψ^k` at ψ̂, k = 1..4.
    pub zeta: [f64; 4],
    /// `j_p = −ζ₂`.
    pub j_p: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    /// First and second total ψ-derivatives of `log|j_λλ(ψ, λ̂_ψ)|`.
    pub gamma1: f64,
    pub gamma2: f64,
    /// Grid spacing used by the stencils.
    pub step: f64,
    /// `l_p(ψ̂)` from the centre of the grid.
    pub lp_hat: f64,
    /// `log|j_λλ(ψ̂, λ̂)|` from the centre of the grid.
    pub logdet_hat: f64,
}

impl ProfileCurve {
    /// Quasi-cumulant `κ_k = ζ_k / (−ζ₂)^{k/2}`.
    pub fn kappa(&self, k: usize) -> f64 {
        assert!((1..=4).contains(&k), "kappa order 1..=4");
        self.zeta[k - 1] / (-self.zeta[1]).powf(k as f64 / 2.0)
    }

    /// `j_p(ψ̂)^{-1/2}`.
    pub fn standard_error(&self) -> f64 {
        self.j_p.powf(-0.5)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    /// Fixed grid spacing; `None` selects the curvature-scaled default.
    pub step: Option<f64>,
    /// Multiplier on `j̃_p^{-1/2}` for the default spacing.
    pub step_factor: f64,
    /// Pilot spacing relative to `1 + |ψ̂|`.
    pub pilot_relative_step: f64,
    pub radius: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            step: None,
            step_factor: 0.5,
            pilot_relative_step: 1e-3,
            radius: 4,
        }
    }
}

/// A profile curve together with the grid it was computed from.
#[derive(Debug, Clone)]
pub struct ProfileAnalysis {
    pub curve: ProfileCurve,
    pub grid: Vec<ConstrainedFit>,
}

/// `2·radius + 1` constrained fits at `center + k·step`, in increasing ψ.
pub fn profile_grid(
    problem: &Problem<'_>,
    center: f64,
    step: f64,
    radius: usize,
) -> Result<Vec<ConstrainedFit>> {
    profile_grid_warm(problem, center, step, radius, None)
}

/// As [`profile_grid`], with the centre fit warm-started from `warm`.
/// The two arms are fitted outward from the centre, each chain sequential.
pub fn profile_grid_warm(
    problem: &Problem<'_>,
    center: f64,
    step: f64,
    radius: usize,
    warm: Option<&[f64]>,
) -> Result<Vec<ConstrainedFit>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("grid step must be positive, got {step}")));
    }
    let tag = |psi: f64| move |e: Error| Error::GridPoint { psi, source: Box::new(e) };
    let mid = fit_constrained(problem, center, warm).map_err(tag(center))?;

    let arm = |dir: f64| -> Result<Vec<ConstrainedFit>> {
        let mut out: Vec<ConstrainedFit> = Vec::with_capacity(radius);
        for k in 1..=radius {
            let psi = center + dir * k as f64 * step;
            let prev = out.last().unwrap_or(&mid);
            let fit = fit_constrained(problem, psi, Some(&prev.lambda_hat_psi)).map_err(tag(psi))?;
            out.push(fit);
        }
        Ok(out)
    };
    let (lower, upper) = rayon::join(|| arm(-1.0), || arm(1.0));
    let (lower, upper) = (lower?, upper?);

    let mut grid = Vec::with_capacity(2 * radius + 1);
    grid.extend(lower.into_iter().rev());
    grid.push(mid);
    grid.extend(upper);
    Ok(grid)
}

/// Stencil derivatives at the centre of an equally spaced grid.
pub fn profile_derivs(grid: &[ConstrainedFit]) -> Result<ProfileCurve> {
    let stencil = CentralStencil::nine_point();
    let r = stencil.radius();
    if grid.len() < 2 * r + 1 || grid.len() % 2 == 0 {
        return Err(Error::Config(format!(
            "profile grid needs an odd number of points, at least {}; got {}",
            2 * r + 1,
            grid.len()
        )));
    }
    let mid = grid.len() / 2;
    let window = &grid[mid - r..=mid + r];
    let step = window[r + 1].psi - window[r].psi;
    for pair in window.windows(2) {
        let h = pair[1].psi - pair[0].psi;
        if !(step > 0.0) || (h - step).abs() > 1e-9 * step.max(f64::MIN_POSITIVE) + 1e-12 * pair[1].psi.abs() {
            return Err(Error::Config("profile grid is not equally spaced".into()));
        }
    }
    let lp: Vec<f64> = window.iter().map(|f| f.loglik_profile).collect();
    let ld: Vec<f64> = window.iter().map(|f| f.logdet_nuisance).collect();

    let zeta = [1, 2, 3, 4].map(|k| stencil.derivative(&lp, step, k));
    let psi_hat = window[r].psi;
    if !(zeta[1] < 0.0) {
        return Err(Error::Curvature {
            psi: psi_hat,
            zeta2: zeta[1],
        });
    }
    let j_p = -zeta[1];
    Ok(ProfileCurve {
        psi_hat,
        zeta,
        j_p,
        kappa3: zeta[2] / j_p.powf(1.5),
        kappa4: zeta[3] / (j_p * j_p),
        gamma1: stencil.derivative(&ld, step, 1),
        gamma2: stencil.derivative(&ld, step, 2),
        step,
        lp_hat: lp[r],
        logdet_hat: ld[r],
    })
}

/// Pilot curvature `−(l_p(ψ̂+h) + l_p(ψ̂−h) − 2 l̂)/h²` with `h = rel·(1+|ψ̂|)`.
pub fn pilot_curvature(problem: &Problem<'_>, fit: &FitResult, relative_step: f64) -> Result<f64> {
    let psi_hat = fit.psi_hat();
    let h = relative_step * (1.0 + psi_hat.abs());
    let warm = Some(fit.theta_hat.lambda.as_slice());
    let plus = fit_constrained(problem, psi_hat + h, warm)?;
    let minus = fit_constrained(problem, psi_hat - h, warm)?;
    let zeta2 = (plus.loglik_profile + minus.loglik_profile - 2.0 * fit.loglik_at_max) / (h * h);
    if !(zeta2 < 0.0) {
        return Err(Error::Curvature { psi: psi_hat, zeta2 });
    }
    Ok(-zeta2)
}

/// Default grid spacing `factor · j̃_p^{-1/2}`.
pub fn default_step(problem: &Problem<'_>, fit: &FitResult, opts: &ProfileOptions) -> Result<f64> {
    match opts.step {
        Some(h) => Ok(h),
        None => {
            let pilot = pilot_curvature(problem, fit, opts.pilot_relative_step)?;
            Ok(opts.step_factor / pilot.sqrt())
        }
    }
}

/// Profile curve at ψ̂. A curvature failure is retried once with a quarter
/// of the step.
pub fn profile_curve(
    problem: &Problem<'_>,
    fit: &FitResult,
    opts: &ProfileOptions,
) -> Result<ProfileAnalysis> {
    let step = default_step(problem, fit, opts)?;
    let warm = Some(fit.theta_hat.lambda.as_slice());
    let attempt = |h: f64| -> Result<ProfileAnalysis> {
        let grid = profile_grid_warm(problem, fit.psi_hat(), h, opts.radius.max(4), warm)?;
        let curve = profile_derivs(&grid)?;
        Ok(ProfileAnalysis { curve, grid })
    };
    match attempt(step) {
        Err(Error::Curvature { .. }) => attempt(step / 4.0),
        other => other,
    }
}

/// `l_p′(ψ₀)` from a nine-point grid centred at ψ₀.
pub fn profile_slope_at(
    problem: &Problem<'_>,
    psi0: f64,
    step: f64,
    warm: Option<&[f64]>,
) -> Result<(f64, Vec<ConstrainedFit>)> {
    let stencil = CentralStencil::nine_point();
    let grid = profile_grid_warm(problem, psi0, step, stencil.radius(), warm)?;
    let lp: Vec<f64> = grid.iter().map(|f| f.loglik_profile).collect();
    Ok((stencil.derivative(&lp, step, 1), grid))
}

/// Relative change in κ₃ when the grid spacing is halved.
pub fn step_halving_diagnostic(
    problem: &Problem<'_>,
    fit: &FitResult,
    curve: &ProfileCurve,
) -> Result<f64> {
    let grid = profile_grid_warm(
        problem,
        curve.psi_hat,
        curve.step / 2.0,
        4,
        Some(fit.theta_hat.lambda.as_slice()),
    )?;
    let half = profile_derivs(&grid)?;
    Ok((half.kappa3 - curve.kappa3).abs() / curve.kappa3.abs().max(f64::MIN_POSITIVE))
}
