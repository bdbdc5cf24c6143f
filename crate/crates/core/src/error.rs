use thiserror::Error;

/// Errors raised by fitting, profiling and inference.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter value outside the admissible domain (σ ≤ 0, non-finite entries).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Dataset shape or content is unusable (too few rows, rank deficiency, bad CSV).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Caller supplied an inconsistent configuration or violated a precondition.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Newton iterations ran out before the gradient criterion was met.
    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        /// Log-likelihood value at each accepted iterate.
        trace: Vec<f64>,
    },

    /// The likelihood has no finite maximiser (separation, σ̂ → 0, escaping iterates).
    #[error("maximum likelihood estimate does not exist: {reason}")]
    Divergence {
        reason: String,
        /// Last iterate on the natural parameter scale.
        theta: Vec<f64>,
    },

    /// A matrix that must be positive definite is not.
    #[error("ill-conditioned information: {0}")]
    Conditioning(String),

    /// The profile is not locally concave where a maximum was claimed.
    #[error("profile curvature not negative at psi = {psi} (zeta2 = {zeta2:.6e})")]
    Curvature { psi: f64, zeta2: f64 },

    /// A constrained fit reached a higher log-likelihood than the global fit.
    #[error("constrained fit exceeds global maximum: l_p(psi_hat) = {lp_hat}, l_p(psi0) = {lp_psi0}")]
    ProfileInconsistency { lp_hat: f64, lp_psi0: f64 },

    /// q and r disagree in sign away from the near-zero patch.
    #[error("q/r is not positive (r = {r:.6e}, q = {q:.6e})")]
    SignInconsistency { r: f64, q: f64 },

    /// Confidence-limit search could not bracket a root.
    #[error("no bracket for the confidence limit within {width} standard errors")]
    Bracket { width: f64 },

    /// A failing constrained fit inside a profile grid.
    #[error("constrained fit at psi = {psi} failed: {source}")]
    GridPoint {
        psi: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips [`Error::GridPoint`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::GridPoint { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
