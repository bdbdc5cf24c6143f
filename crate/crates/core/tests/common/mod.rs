#![allow(dead_code)]

use rstar_core::simlab::Design;
use rstar_core::{Dataset, ErrorDensity, ModelSpec};

fn design(family: ModelSpec) -> Design {
    Design {
        family,
        p: 2,
        beta_true: vec![0.8, -0.6],
        intercept: 0.3,
        interest: 0,
        sigma: 1.0,
        error_df: None,
    }
}

pub const T5: ModelSpec = ModelSpec::LocationScale {
    error: ErrorDensity::StudentT { df: 5.0 },
};

/// Intercept plus two standard normal covariates, logistic responses.
pub fn logistic(n: usize, seed: u64) -> Dataset {
    design(ModelSpec::Logistic).generate(seed, 0, n).unwrap()
}

/// Same design, t5 errors with unit scale.
pub fn t5(n: usize, seed: u64) -> Dataset {
    design(T5).generate(seed, 0, n).unwrap()
}

/// Gaussian responses with standard deviation `sigma`.
pub fn normal(n: usize, seed: u64, sigma: f64) -> Dataset {
    design(ModelSpec::NormalKnownScale { sigma }).generate(seed, 0, n).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
