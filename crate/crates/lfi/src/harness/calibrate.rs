//! Tolerance and simulation-count calibration: the ABC tolerance is a
//! sample quantile of pilot discrepancies at a central parameter value, and
//! the synthetic-likelihood m targets a log-likelihood standard deviation
//! between 1 and 2.

use crate::stats;
use crate::{Error, Result};

/// Number of repeated log-likelihood evaluations behind each grid point of
/// the m-tuning rule.
pub const BSL_TUNING_REPEATS: usize = 50;

/// The `q`-quantile (linear interpolation of order statistics) of a pool of
/// pilot discrepancies. `q = 1` gives the pool maximum.
pub fn epsilon_from_pool(pool: &[f64], q: f64) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::DegeneratePool("empty discrepancy pool".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("tolerance quantile must lie in (0, 1], got {q}")));
    }
    if pool.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegeneratePool("non-finite pilot discrepancy".into()));
    }
    let mut sorted = pool.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(stats::quantile_sorted(&sorted, q))
}

/// Picks the simulation count for the synthetic likelihood: the smallest
/// grid value whose log-likelihood standard deviation over
/// [`BSL_TUNING_REPEATS`] evaluations lands in [1, 2], else the value whose
/// standard deviation is closest to 1.5. `eval(m, r)` performs one
/// log-likelihood evaluation; its errors (singular covariances on every
/// repeat) surface as a tuning failure.
pub fn tune_bsl_m<F>(grid: &[usize], repeats: usize, eval: F) -> Result<(usize, f64)>
where
    F: Fn(usize, usize) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::Config("the m tuning grid is empty".into()));
    }
    if repeats < 2 {
        return Err(Error::Config("m tuning needs at least 2 repeats".into()));
    }
    let mut fallback: Option<(usize, f64)> = None;
    for &m in grid {
        let mut logliks = Vec::with_capacity(repeats);
        for r in 0..repeats {
            match eval(m, r) {
                Ok(ll) if ll.is_finite() => logliks.push(ll),
                Ok(_) | Err(_) => {}
            }
        }
        if logliks.len() < 2 {
            continue;
        }
        let sd = stats::sample_sd(&logliks);
        if (1.0..=2.0).contains(&sd) {
            return Ok((m, sd));
        }
        if fallback.is_none_or(|(_, best)| (sd - 1.5).abs() < (best - 1.5).abs()) {
            fallback = Some((m, sd));
        }
    }
    fallback.ok_or_else(|| {
        Error::TuningFailure("every grid point failed to produce two log-likelihood values".into())
    })
}
