//! Seeded fixtures shared by the benchmarks.

use rstar_core::simlab::Design;
use rstar_core::{Dataset, ErrorDensity, ModelSpec};

pub const T5: ModelSpec = ModelSpec::LocationScale {
    error: ErrorDensity::StudentT { df: 5.0 },
};

/// Intercept plus five standard normal covariates, β = (0, 1, 1, 1, 1).
pub fn dataset(family: ModelSpec, n: usize) -> Dataset {
    let design = Design {
        family,
        p: 5,
        beta_true: vec![0.0, 1.0, 1.0, 1.0, 1.0],
        intercept: 1.0,
        interest: 0,
        sigma: 1.0,
        error_df: None,
    };
    design.generate(7, 0, n).expect("valid fixture design")
}
