//! Model families and their analytic log-likelihood derivatives.
//!
//! Parameters live in two orders. The *natural* order is the regression
//! coefficients `β₀..β_{k-1}` followed by `σ` for location-scale models. The
//! *partitioned* order puts the interest parameter ψ first and the nuisance
//! vector λ after it; [`ParameterVector`] stores that split and the public
//! [`grad`] and [`hessian`] return vectors and matrices in partitioned order so
//! that `j_ψψ`, `j_ψλ` and `j_λλ` are plain blocks.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Scalar interest parameter ψ and nuisance vector λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub psi: f64,
    pub lambda: Vec<f64>,
    /// Position of ψ among the regression coefficients.
    pub interest_index: usize,
}

impl ParameterVector {
    pub fn new(psi: f64, lambda: Vec<f64>, interest_index: usize) -> Result<Self> {
        let p = 1 + lambda.len();
        if interest_index >= p {
            return Err(Error::Config(format!(
                "interest index {interest_index} outside parameter dimension {p}"
            )));
        }
        Ok(Self {
            psi,
            lambda,
            interest_index,
        })
    }

    /// Splits a natural-order vector.
    pub fn from_natural(theta: &[f64], interest_index: usize) -> Result<Self> {
        if interest_index >= theta.len() {
            return Err(Error::Config(format!(
                "interest index {interest_index} outside parameter dimension {}",
                theta.len()
            )));
        }
        let mut lambda = theta.to_vec();
        let psi = lambda.remove(interest_index);
        Ok(Self {
            psi,
            lambda,
            interest_index,
        })
    }

    /// Total dimension `p = 1 + len(λ)`.
    pub fn dim(&self) -> usize {
        1 + self.lambda.len()
    }

    pub fn to_natural(&self) -> Vec<f64> {
        let mut theta = self.lambda.clone();
        theta.insert(self.interest_index, self.psi);
        theta
    }

    /// Natural-order position of each partitioned coordinate.
    pub fn natural_positions(&self) -> Vec<usize> {
        partition_order(self.dim(), self.interest_index)
    }
}

/// Natural-order index for partitioned coordinate `k` (`k = 0` is ψ).
pub(crate) fn partition_order(p: usize, interest: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(p);
    order.push(interest);
    order.extend((0..p).filter(|&i| i != interest));
    order
}

/// Standardised error density of a location-scale model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorDensity {
    Normal,
    /// Student-t with fixed, known degrees of freedom.
    StudentT { df: f64 },
    Logistic,
}

impl ErrorDensity {
    /// `(log f(e), d/de log f, d²/de² log f)`.
    #[inline]
    fn log_density_derivs(&self, e: f64) -> (f64, f64, f64) {
        match *self {
            ErrorDensity::Normal => (-0.5 * e * e - 0.5 * LN_2PI, -e, -1.0),
            ErrorDensity::StudentT { df } => {
                let c = ln_gamma(0.5 * (df + 1.0))
                    - ln_gamma(0.5 * df)
                    - 0.5 * (df * std::f64::consts::PI).ln();
                let s = df + e * e;
                let g = c - 0.5 * (df + 1.0) * (e * e / df).ln_1p();
                let g1 = -(df + 1.0) * e / s;
                let g2 = -(df + 1.0) * (df - e * e) / (s * s);
                (g, g1, g2)
            }
            ErrorDensity::Logistic => {
                let a = e.abs();
                let g = -a - 2.0 * (-a).exp().ln_1p();
                let th = (0.5 * e).tanh();
                (g, -th, -0.5 * (1.0 - th * th))
            }
        }
    }
}

/// Which higher-order statistic family a model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    LinearExponential,
    LocationScale,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::LinearExponential => f.write_str("linear-exponential"),
            Family::LocationScale => f.write_str("location-scale"),
        }
    }
}

/// A regression likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    /// Bernoulli responses with the canonical logit link.
    Logistic,
    /// Gaussian responses with known standard deviation (canonical identity link).
    NormalKnownScale { sigma: f64 },
    /// `y = xᵀβ + σ ε` with ε drawn from a fixed standardised density.
    LocationScale { error: ErrorDensity },
}

impl ModelSpec {
    pub fn family(&self) -> Family {
        match self {
            ModelSpec::Logistic | ModelSpec::NormalKnownScale { .. } => Family::LinearExponential,
            ModelSpec::LocationScale { .. } => Family::LocationScale,
        }
    }

    /// Parameter dimension for a design with `ncols` columns.
    pub fn n_params(&self, ncols: usize) -> usize {
        match self {
            ModelSpec::LocationScale { .. } => ncols + 1,
            _ => ncols,
        }
    }

    /// Natural-order index of σ, when the model has one.
    pub fn scale_index(&self, ncols: usize) -> Option<usize> {
        match self {
            ModelSpec::LocationScale { .. } => Some(ncols),
            _ => None,
        }
    }

    /// Least upper bound of the log-likelihood when it is finite and
    /// attained only in the limit (used to detect separation).
    pub(crate) fn loglik_supremum(&self) -> Option<f64> {
        match self {
            ModelSpec::Logistic => Some(0.0),
            _ => None,
        }
    }

    fn check(&self, data: &Dataset, theta: &[f64]) -> Result<()> {
        let p = self.n_params(data.ncols());
        if theta.len() != p {
            return Err(Error::InvalidParameter(format!(
                "expected {p} parameters, got {}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        match self {
            ModelSpec::NormalKnownScale { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidParameter(format!("known sigma must be positive, got {sigma}")))
            }
            ModelSpec::LocationScale { error } => {
                if let ErrorDensity::StudentT { df } = error {
                    if !(*df > 0.0 && df.is_finite()) {
                        return Err(Error::InvalidParameter(format!(
                            "degrees of freedom must be positive, got {df}"
                        )));
                    }
                }
                let sigma = theta[p - 1];
                if sigma <= 0.0 {
                    return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn linear_predictor(data: &Dataset, theta: &[f64]) -> Result<DVector<f64>> {
        let k = data.ncols();
        let beta = DVector::from_column_slice(&theta[..k]);
        let eta = data.x() * beta;
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite linear predictor".into()));
        }
        Ok(eta)
    }

    /// Log-likelihood at a natural-order parameter vector.
    pub fn loglik_natural(&self, data: &Dataset, theta: &[f64]) -> Result<f64> {
        self.check(data, theta)?;
        let eta = Self::linear_predictor(data, theta)?;
        let y = data.y();
        let value = match *self {
            ModelSpec::Logistic => eta
                .iter()
                .zip(y.iter())
                .map(|(&e, &yi)| yi * e - softplus(e))
                .sum(),
            ModelSpec::NormalKnownScale { sigma } => {
                let c = -0.5 * LN_2PI - sigma.ln();
                eta.iter()
                    .zip(y.iter())
                    .map(|(&e, &yi)| c - 0.5 * ((yi - e) / sigma).powi(2))
                    .sum()
            }
            ModelSpec::LocationScale { error } => {
                let sigma = theta[theta.len() - 1];
                let ls = sigma.ln();
                eta.iter()
                    .zip(y.iter())
                    .map(|(&e, &yi)| error.log_density_derivs((yi - e) / sigma).0 - ls)
                    .sum()
            }
        };
        Ok(value)
    }

    /// Value, gradient and Hessian in natural order from one pass over the data.
    pub fn evaluate_natural(&self, data: &Dataset, theta: &[f64]) -> Result<Evaluation> {
        self.check(data, theta)?;
        let eta = Self::linear_predictor(data, theta)?;
        let x = data.x();
        let y = data.y();
        let n = data.n();
        let k = data.ncols();
        let p = self.n_params(k);

        match *self {
            ModelSpec::Logistic => {
                let mut value = 0.0;
                let mut resid = DVector::zeros(n);
                let mut w = DVector::zeros(n);
                for i in 0..n {
                    let e = eta[i];
                    value += y[i] * e - softplus(e);
                    let mu = sigmoid(e);
                    resid[i] = y[i] - mu;
                    w[i] = -mu * (1.0 - mu);
                }
                Ok(Evaluation {
                    value,
                    grad: x.tr_mul(&resid),
                    hessian: weighted_gram(x, &w),
                })
            }
            ModelSpec::NormalKnownScale { sigma } => {
                let s2 = sigma * sigma;
                let c = -0.5 * LN_2PI - sigma.ln();
                let resid = (y - &eta) / s2;
                let value = (y - &eta).iter().map(|r| c - 0.5 * r * r / s2).sum();
                let w = DVector::from_element(n, -1.0 / s2);
                Ok(Evaluation {
                    value,
                    grad: x.tr_mul(&resid),
                    hessian: weighted_gram(x, &w),
                })
            }
            ModelSpec::LocationScale { error } => {
                let sigma = theta[p - 1];
                let ls = sigma.ln();
                let s2 = sigma * sigma;
                let mut value = 0.0;
                let mut score_beta = DVector::zeros(n);
                let mut w_bb = DVector::zeros(n);
                let mut w_bs = DVector::zeros(n);
                let mut g_sigma = 0.0;
                let mut h_ss = 0.0;
                for i in 0..n {
                    let e = (y[i] - eta[i]) / sigma;
                    let (g, g1, g2) = error.log_density_derivs(e);
                    value += g - ls;
                    score_beta[i] = -g1 / sigma;
                    w_bb[i] = g2 / s2;
                    w_bs[i] = (g2 * e + g1) / s2;
                    g_sigma += (-1.0 - g1 * e) / sigma;
                    h_ss += (1.0 + g2 * e * e + 2.0 * g1 * e) / s2;
                }
                let mut grad = DVector::zeros(p);
                grad.rows_mut(0, k).copy_from(&x.tr_mul(&score_beta));
                grad[k] = g_sigma;
                let mut hessian = DMatrix::zeros(p, p);
                hessian.view_mut((0, 0), (k, k)).copy_from(&weighted_gram(x, &w_bb));
                let cross = x.tr_mul(&w_bs);
                for j in 0..k {
                    hessian[(j, k)] = cross[j];
                    hessian[(k, j)] = cross[j];
                }
                hessian[(k, k)] = h_ss;
                Ok(Evaluation {
                    value,
                    grad,
                    hessian,
                })
            }
        }
    }

    /// Standard-deviation scale of the responses, used to judge σ̂ → 0.
    pub(crate) fn response_scale(data: &Dataset) -> f64 {
        let y = data.y();
        let n = y.len() as f64;
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1.0);
        var.sqrt().max(mean.abs()).max(1.0)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Logistic => f.write_str("logistic"),
            ModelSpec::NormalKnownScale { sigma } => write!(f, "normal-known:{sigma}"),
            ModelSpec::LocationScale { error } => match error {
                ErrorDensity::Normal => f.write_str("locscale-normal"),
                ErrorDensity::StudentT { df } => write!(f, "locscale-t:{df}"),
                ErrorDensity::Logistic => f.write_str("locscale-logistic"),
            },
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Accepts `logistic`, `locscale-normal`, `locscale-t:<ν>`,
    /// `locscale-logistic` and `normal-known:<σ>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let positive = |v: &str, what: &str| -> Result<f64> {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("bad {what} '{v}'")))?;
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Config(format!("{what} must be positive, got {v}")))
            }
        };
        match s {
            "logistic" => Ok(ModelSpec::Logistic),
            "locscale-normal" => Ok(ModelSpec::LocationScale {
                error: ErrorDensity::Normal,
            }),
            "locscale-logistic" => Ok(ModelSpec::LocationScale {
                error: ErrorDensity::Logistic,
            }),
            _ => {
                if let Some(v) = s.strip_prefix("locscale-t:") {
                    Ok(ModelSpec::LocationScale {
                        error: ErrorDensity::StudentT {
                            df: positive(v, "degrees of freedom")?,
                        },
                    })
                } else if let Some(v) = s.strip_prefix("normal-known:") {
                    Ok(ModelSpec::NormalKnownScale {
                        sigma: positive(v, "sigma")?,
                    })
                } else {
                    Err(Error::Config(format!("unknown family '{s}'")))
                }
            }
        }
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A model, a dataset and the coordinate singled out as ψ.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub model: ModelSpec,
    pub data: &'a Dataset,
    /// Design column whose coefficient is the interest parameter.
    pub interest: usize,
}

impl<'a> Problem<'a> {
    pub fn new(model: ModelSpec, data: &'a Dataset, interest: usize) -> Result<Self> {
        if interest >= data.ncols() {
            return Err(Error::Config(format!(
                "interest column {interest} outside design with {} columns",
                data.ncols()
            )));
        }
        Ok(Self {
            model,
            data,
            interest,
        })
    }

    /// Total parameter dimension p.
    pub fn dim(&self) -> usize {
        self.model.n_params(self.data.ncols())
    }

    pub fn family(&self) -> Family {
        self.model.family()
    }

    /// Observation count n.
    pub fn n(&self) -> usize {
        self.data.n()
    }
}

/// Log-likelihood with its first two derivatives, natural order.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// `l(θ; y) = Σᵢ log f(yᵢ; θ, xᵢ)`.
pub fn loglik(model: &ModelSpec, data: &Dataset, theta: &ParameterVector) -> Result<f64> {
    check_interest(model, data, theta)?;
    model.loglik_natural(data, &theta.to_natural())
}

/// Score vector in partitioned `(ψ, λ)` order.
pub fn grad(model: &ModelSpec, data: &Dataset, theta: &ParameterVector) -> Result<DVector<f64>> {
    check_interest(model, data, theta)?;
    let ev = model.evaluate_natural(data, &theta.to_natural())?;
    let order = theta.natural_positions();
    Ok(DVector::from_fn(order.len(), |i, _| ev.grad[order[i]]))
}

/// Hessian of the log-likelihood in partitioned `(ψ, λ)` order.
pub fn hessian(model: &ModelSpec, data: &Dataset, theta: &ParameterVector) -> Result<DMatrix<f64>> {
    check_interest(model, data, theta)?;
    let ev = model.evaluate_natural(data, &theta.to_natural())?;
    let order = theta.natural_positions();
    Ok(permute(&ev.hessian, &order))
}

pub(crate) fn check_interest(model: &ModelSpec, data: &Dataset, theta: &ParameterVector) -> Result<()> {
    if theta.interest_index >= data.ncols() {
        return Err(Error::Config(format!(
            "interest index {} is not a regression coefficient ({} columns)",
            theta.interest_index,
            data.ncols()
        )));
    }
    let p = model.n_params(data.ncols());
    if theta.dim() != p {
        return Err(Error::InvalidParameter(format!(
            "expected {p} parameters, got {}",
            theta.dim()
        )));
    }
    Ok(())
}

/// `out[i, j] = m[order[i], order[j]]`.
pub(crate) fn permute(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(order.len(), order.len(), |i, j| m[(order[i], order[j])])
}

/// `Xᵀ diag(w) X`, exactly symmetric.
fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        let ca = x.column(a);
        for b in 0..=a {
            let cb = x.column(b);
            let mut s = 0.0;
            for i in 0..n {
                s += w[i] * ca[i] * cb[i];
            }
            out[(a, b)] = s;
            out[(b, a)] = s;
        }
    }
    out
}

/// `log(1 + eˣ)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
