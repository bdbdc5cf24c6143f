//! Percentile bootstrap of replication-level summaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::mean_sd;

fn check(values: &[f64], b: usize, level: f64) -> Result<()> {
    if values.len() < 10 {
        return Err(Error::Config(format!(
            "bootstrap needs at least 10 values, got {}",
            values.len()
        )));
    }
    if b == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn percentile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn interval(mut stats: Vec<f64>, level: f64) -> (f64, f64) {
    stats.sort_by(f64::total_cmp);
    let a = 0.5 * (1.0 - level);
    let lo = percentile(&stats, a);
    let hi = percentile(&stats, 1.0 - a);
    // Interpolation rounding must not invert a degenerate interval.
    if lo > hi {
        (hi, hi)
    } else {
        (lo, hi)
    }
}

fn resample_stats(values: &[f64], b: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut means = Vec::with_capacity(b);
    let mut sds = Vec::with_capacity(b);
    let mut buf = vec![0.0; values.len()];
    for _ in 0..b {
        for slot in buf.iter_mut() {
            *slot = values[rng.random_range(0..values.len())];
        }
        let (m, s) = mean_sd(&buf);
        means.push(m);
        sds.push(s);
    }
    (means, sds)
}

/// Percentile interval for the mean from `b` resamples.
pub fn bootstrap_ci(values: &[f64], b: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    check(values, b, level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (means, _) = resample_stats(values, b, &mut rng);
    Ok(interval(means, level))
}

/// Percentile intervals for the mean and the standard deviation from the same
/// `b` resamples, drawn from `stream` of the generator seeded with `seed`.
pub fn bootstrap_mean_sd(
    values: &[f64],
    b: usize,
    level: f64,
    seed: u64,
    stream: u64,
) -> Result<((f64, f64), (f64, f64))> {
    check(values, b, level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let (means, sds) = resample_stats(values, b, &mut rng);
    Ok((interval(means, level), interval(sds, level)))
}
