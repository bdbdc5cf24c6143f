//! Full and constrained maximum likelihood by damped Newton iterations.
//!
//! Location-scale models are optimised over `log σ` so that the search space is
//! unconstrained; every reported gradient, information matrix and determinant
//! is on the natural `(β, σ)` scale.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, logdet_spd, solve_spd};
use crate::model::{partition_order, permute, Evaluation, ModelSpec, ParameterVector, Problem};

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Relative gradient tolerance: `‖∇l‖∞ ≤ tol_grad·(1 + |l|)`.
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Iterates with `‖θ‖∞` beyond this are treated as diverging.
    pub divergence_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol_grad: 1e-10,
            max_iter: 200,
            divergence_bound: 1e6,
        }
    }
}

/// Unconstrained maximum likelihood fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub theta_hat: ParameterVector,
    pub loglik_at_max: f64,
    /// `ĵ = −l_θθ(θ̂)` in partitioned `(ψ, λ)` order.
    #[serde(serialize_with = "ser_matrix")]
    pub observed_info: DMatrix<f64>,
    /// `log|j_λλ(θ̂)|`.
    pub logdet_nuisance: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn psi_hat(&self) -> f64 {
        self.theta_hat.psi
    }

    /// Nuisance block `j_λλ(θ̂)`.
    pub fn nuisance_info(&self) -> DMatrix<f64> {
        let p = self.observed_info.nrows();
        self.observed_info.view((1, 1), (p - 1, p - 1)).into_owned()
    }

    /// Wald standard error of every coordinate, partitioned order.
    pub fn standard_errors(&self) -> Result<Vec<f64>> {
        let chol = cholesky(&self.observed_info, "observed information")?;
        let inv = chol.inverse();
        Ok(inv.diagonal().iter().map(|v| v.sqrt()).collect())
    }
}

/// Maximiser of `l(ψ, λ)` over λ at fixed ψ.
#[derive(Debug, Clone, Serialize)]
pub struct ConstrainedFit {
    pub psi: f64,
    pub lambda_hat_psi: Vec<f64>,
    /// `l_p(ψ) = l(ψ, λ̂_ψ)`.
    pub loglik_profile: f64,
    /// `j_λλ(ψ, λ̂_ψ)`.
    #[serde(serialize_with = "ser_matrix")]
    pub nuisance_info: DMatrix<f64>,
    /// `j_ψλ(ψ, λ̂_ψ)`.
    pub cross_info: DVector<f64>,
    /// `log|j_λλ(ψ, λ̂_ψ)|`.
    pub logdet_nuisance: f64,
    pub interest_index: usize,
    pub iterations: usize,
}

impl ConstrainedFit {
    pub fn theta(&self) -> ParameterVector {
        ParameterVector {
            psi: self.psi,
            lambda: self.lambda_hat_psi.clone(),
            interest_index: self.interest_index,
        }
    }
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// Maximises the full likelihood. Without `init` the start is zeros for the
/// logistic model and least squares for Gaussian and location-scale models.
pub fn fit_mle(problem: &Problem<'_>, init: Option<&ParameterVector>) -> Result<FitResult> {
    fit_mle_with(problem, init, &FitOptions::default())
}

pub fn fit_mle_with(
    problem: &Problem<'_>,
    init: Option<&ParameterVector>,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_dataset(problem)?;
    let p = problem.dim();
    let start = match init {
        Some(t) => {
            if t.dim() != p || t.interest_index != problem.interest {
                return Err(Error::Config("initial value does not match the problem".into()));
            }
            t.to_natural()
        }
        None => default_start(problem, None)?,
    };
    let free: Vec<usize> = (0..p).collect();
    let state = maximize(problem, start, &free, opts)?;

    let order = partition_order(p, problem.interest);
    let info = -permute(&state.eval.hessian, &order);
    cholesky(&info, "observed information")?;
    let nuisance = info.view((1, 1), (p - 1, p - 1)).into_owned();
    let logdet_nuisance = logdet_spd(&nuisance)?;
    Ok(FitResult {
        theta_hat: ParameterVector::from_natural(&state.theta, problem.interest)?,
        loglik_at_max: state.eval.value,
        observed_info: info,
        logdet_nuisance,
        iterations: state.iterations,
        converged: true,
    })
}

/// Maximises over λ with ψ held at `psi0`. `warm_start` is a nuisance vector
/// in partitioned order.
pub fn fit_constrained(
    problem: &Problem<'_>,
    psi0: f64,
    warm_start: Option<&[f64]>,
) -> Result<ConstrainedFit> {
    fit_constrained_with(problem, psi0, warm_start, &FitOptions::default())
}

pub fn fit_constrained_with(
    problem: &Problem<'_>,
    psi0: f64,
    warm_start: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<ConstrainedFit> {
    if !psi0.is_finite() {
        return Err(Error::InvalidParameter(format!("psi0 = {psi0}")));
    }
    check_dataset(problem)?;
    let p = problem.dim();
    let start = match warm_start {
        Some(lambda) => {
            if lambda.len() != p - 1 {
                return Err(Error::Config("warm start has the wrong length".into()));
            }
            ParameterVector {
                psi: psi0,
                lambda: lambda.to_vec(),
                interest_index: problem.interest,
            }
            .to_natural()
        }
        None => default_start(problem, Some(psi0))?,
    };
    let free: Vec<usize> = (0..p).filter(|&i| i != problem.interest).collect();
    let state = maximize(problem, start, &free, opts)?;

    let order = partition_order(p, problem.interest);
    let info = -permute(&state.eval.hessian, &order);
    let nuisance_info = info.view((1, 1), (p - 1, p - 1)).into_owned();
    let cross_info = info.view((1, 0), (p - 1, 1)).column(0).into_owned();
    let logdet_nuisance = logdet_spd(&nuisance_info)
        .map_err(|_| Error::Conditioning(format!("j_λλ not positive definite at psi = {psi0}")))?;
    let theta = ParameterVector::from_natural(&state.theta, problem.interest)?;
    Ok(ConstrainedFit {
        psi: psi0,
        lambda_hat_psi: theta.lambda,
        loglik_profile: state.eval.value,
        nuisance_info,
        cross_info,
        logdet_nuisance,
        interest_index: problem.interest,
        iterations: state.iterations,
    })
}

/// `dλ̂_ψ/dψ = −j_λλ⁻¹ j_ψλ`, from differentiating `l_λ(ψ, λ̂_ψ) = 0`.
pub fn constrained_slope(fit: &ConstrainedFit) -> Result<DVector<f64>> {
    solve_spd(&fit.nuisance_info, &(-&fit.cross_info)).map_err(|_| {
        Error::Conditioning(format!(
            "nuisance information singular at psi = {}",
            fit.psi
        ))
    })
}

fn check_dataset(problem: &Problem<'_>) -> Result<()> {
    let p = problem.dim();
    if problem.n() < p + 1 {
        return Err(Error::InvalidData(format!(
            "{} observations for {p} parameters; need at least {}",
            problem.n(),
            p + 1
        )));
    }
    problem.data.check_full_rank()
}

/// Deterministic starting point in natural order; `psi0` pins ψ.
fn default_start(problem: &Problem<'_>, psi0: Option<f64>) -> Result<Vec<f64>> {
    let data = problem.data;
    let k = data.ncols();
    match problem.model {
        ModelSpec::Logistic => {
            let mut theta = vec![0.0; k];
            if let Some(psi) = psi0 {
                theta[problem.interest] = psi;
            }
            Ok(theta)
        }
        ModelSpec::NormalKnownScale { .. } | ModelSpec::LocationScale { .. } => {
            let (beta, rss) = least_squares(problem, psi0)?;
            let mut theta = beta;
            if let Some(s_idx) = problem.model.scale_index(k) {
                debug_assert_eq!(s_idx, theta.len());
                let sigma = (rss / data.n() as f64).sqrt();
                if sigma <= 1e-10 * ModelSpec::response_scale(data) {
                    return Err(Error::Divergence {
                        reason: "residual scale is zero (sigma -> 0)".into(),
                        theta: theta.iter().copied().chain([sigma]).collect(),
                    });
                }
                theta.push(sigma);
            }
            Ok(theta)
        }
    }
}

/// Least squares, optionally with the interest coefficient fixed at `psi0`.
/// Returns the coefficient vector and the residual sum of squares.
fn least_squares(problem: &Problem<'_>, psi0: Option<f64>) -> Result<(Vec<f64>, f64)> {
    let data = problem.data;
    let x = data.x();
    let k = data.ncols();
    let cols: Vec<usize> = match psi0 {
        Some(_) => (0..k).filter(|&j| j != problem.interest).collect(),
        None => (0..k).collect(),
    };
    let mut target = data.y().clone();
    if let Some(psi) = psi0 {
        target -= x.column(problem.interest) * psi;
    }
    let mut beta = vec![0.0; k];
    if let Some(psi) = psi0 {
        beta[problem.interest] = psi;
    }
    if !cols.is_empty() {
        let xs = x.select_columns(&cols);
        let coef = solve_spd(&xs.tr_mul(&xs), &xs.tr_mul(&target))
            .map_err(|_| Error::InvalidData("design matrix is rank deficient".into()))?;
        for (c, &j) in coef.iter().zip(&cols) {
            beta[j] = *c;
        }
    }
    let fitted = x * DVector::from_column_slice(&beta);
    let rss = (data.y() - fitted).norm_squared();
    Ok((beta, rss))
}

struct NewtonState {
    theta: Vec<f64>,
    eval: Evaluation,
    iterations: usize,
}

/// Working-scale map: σ is optimised on the log scale.
struct Working<'a> {
    free: &'a [usize],
    scale: Option<usize>,
}

impl Working<'_> {
    fn to_working(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.free.len(),
            self.free.iter().map(|&i| {
                if Some(i) == self.scale {
                    theta[i].ln()
                } else {
                    theta[i]
                }
            }),
        )
    }

    fn to_natural(&self, base: &[f64], w: &DVector<f64>) -> Vec<f64> {
        let mut theta = base.to_vec();
        for (k, &i) in self.free.iter().enumerate() {
            theta[i] = if Some(i) == self.scale { w[k].exp() } else { w[k] };
        }
        theta
    }

    /// Chain rule from natural to working derivatives over the free block.
    fn derivatives(&self, theta: &[f64], ev: &Evaluation) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.free.len();
        let jac: Vec<f64> = self
            .free
            .iter()
            .map(|&i| if Some(i) == self.scale { theta[i] } else { 1.0 })
            .collect();
        let g = DVector::from_fn(m, |a, _| jac[a] * ev.grad[self.free[a]]);
        let mut h = DMatrix::from_fn(m, m, |a, b| {
            jac[a] * jac[b] * ev.hessian[(self.free[a], self.free[b])]
        });
        for a in 0..m {
            if Some(self.free[a]) == self.scale {
                h[(a, a)] += jac[a] * ev.grad[self.free[a]];
            }
        }
        (g, h)
    }
}

fn free_grad_norm(ev: &Evaluation, free: &[usize]) -> f64 {
    free.iter().map(|&i| ev.grad[i].abs()).fold(0.0, f64::max)
}

/// Newton ascent direction, or a diagonally scaled gradient when the working
/// Hessian is not negative definite.
fn direction(g: &DVector<f64>, h: &DMatrix<f64>) -> (DVector<f64>, bool) {
    let neg = -h;
    if let Some(chol) = neg.clone().cholesky() {
        let d = chol.solve(g);
        if d.iter().all(|v| v.is_finite()) {
            return (d, true);
        }
    }
    let d = DVector::from_fn(g.len(), |i, _| {
        let s = neg[(i, i)].abs().max(1e-8);
        g[i] / s
    });
    (d, false)
}

fn maximize(
    problem: &Problem<'_>,
    start: Vec<f64>,
    free: &[usize],
    opts: &FitOptions,
) -> Result<NewtonState> {
    let model = problem.model;
    let data = problem.data;
    let scale_floor = 1e-10 * ModelSpec::response_scale(data);
    let work = Working {
        free,
        scale: model.scale_index(data.ncols()),
    };
    let mut theta = start;
    let mut ev = model.evaluate_natural(data, &theta)?;
    let mut trace = vec![ev.value];

    let diverged = |theta: &[f64], value: f64| -> Option<Error> {
        let norm = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm > opts.divergence_bound {
            return Some(Error::Divergence {
                reason: format!("iterates escaped |theta| <= {:e}", opts.divergence_bound),
                theta: theta.to_vec(),
            });
        }
        if let Some(sup) = model.loglik_supremum() {
            if sup - value < 1e-6 {
                return Some(Error::Divergence {
                    reason: "likelihood approaches its supremum (separated data)".into(),
                    theta: theta.to_vec(),
                });
            }
        }
        if let Some(s) = work.scale {
            if theta[s] < scale_floor {
                return Some(Error::Divergence {
                    reason: "scale estimate collapsed (sigma -> 0)".into(),
                    theta: theta.to_vec(),
                });
            }
        }
        None
    };

    if free.is_empty() {
        return Ok(NewtonState {
            theta,
            eval: ev,
            iterations: 0,
        });
    }

    for iter in 0..opts.max_iter {
        let gnorm = free_grad_norm(&ev, free);
        if gnorm <= opts.tol_grad * (1.0 + ev.value.abs()) {
            let (theta, ev, extra) = polish(problem, &work, theta, ev);
            return Ok(NewtonState {
                theta,
                eval: ev,
                iterations: iter + extra,
            });
        }
        let w = work.to_working(&theta);
        let (g, h) = work.derivatives(&theta, &ev);
        let (d, _newton) = direction(&g, &h);

        // Near the optimum the change in l drops below the rounding error of
        // the sum, so ties within that error are accepted.
        let slack = 1e-12 * (1.0 + ev.value.abs());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = work.to_natural(&theta, &(&w + &d * step));
            if let Ok(value) = model.loglik_natural(data, &cand) {
                if value >= ev.value - slack {
                    accepted = Some(cand);
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some(cand) => {
                ev = model.evaluate_natural(data, &cand)?;
                theta = cand;
                trace.push(ev.value);
                if let Some(err) = diverged(&theta, ev.value) {
                    return Err(err);
                }
            }
            None => {
                // No ascent possible: accept only if we sit at the rounding floor.
                if gnorm <= 1e-6 * (1.0 + ev.value.abs()) {
                    return Ok(NewtonState {
                        theta,
                        eval: ev,
                        iterations: iter,
                    });
                }
                return Err(Error::Convergence {
                    iterations: iter,
                    grad_norm: gnorm,
                    trace,
                });
            }
        }
    }
    if let Some(err) = diverged(&theta, ev.value) {
        return Err(err);
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        grad_norm: free_grad_norm(&ev, free),
        trace,
    })
}

/// Up to two extra full Newton steps past the tolerance, kept while they
/// reduce the gradient without lowering the likelihood.
fn polish(
    problem: &Problem<'_>,
    work: &Working<'_>,
    mut theta: Vec<f64>,
    mut ev: Evaluation,
) -> (Vec<f64>, Evaluation, usize) {
    let mut extra = 0;
    for _ in 0..2 {
        let (g, h) = work.derivatives(&theta, &ev);
        let (d, newton) = direction(&g, &h);
        if !newton {
            break;
        }
        let cand = work.to_natural(&theta, &(work.to_working(&theta) + d));
        let Ok(next) = problem.model.evaluate_natural(problem.data, &cand) else {
            break;
        };
        if next.value < ev.value - 1e-12 * (1.0 + ev.value.abs()) || free_grad_norm(&next, work.free) >= free_grad_norm(&ev, work.free) {
            break;
        }
        theta = cand;
        ev = next;
        extra += 1;
    }
    (theta, ev, extra)
}
