//! Monte Carlo estimators checking the limit behaviour of `log Z_n`.
//!
//! Every estimator is a deterministic function of its configuration and
//! master seed. Standardisation always uses the analytic `mu` and `sigma`,
//! never sample moments, and every finite-`n` comparison is made with an
//! explicit standard-error tolerance.

mod berry_esseen;
mod ecdf;
mod elogw;
mod laplace;
mod moments;
mod rate;

pub use berry_esseen::{berry_esseen_from_samples, berry_esseen_sup, grid_warnings, BerryEsseenResult, BerryEsseenRow};
pub use ecdf::{empirical_cdf, EmpiricalCdf, Z_995};
pub use elogw::{
    estimate_elogw, increment_decay, DecayFit, DecayRow, DecaySeries, ElogwConfig, ElogwEstimate,
    MIN_DECAY_REPLICATES, QUALIFY_SE_MULTIPLE,
};
pub use laplace::{laplace_decay, LaplaceResult, LaplaceRow};
pub use moments::{moment_stability, MomentRow, MomentStability};
pub use rate::{clt_rate_experiment, rate_rows, walk_oracle_rate, RateCurve, RateRow, MIN_RATE_REPLICATES};

/// Stream ids at or above this value are reserved for the `E log W`
/// estimate that accompanies a rate experiment.
pub const ELOGW_STREAM_BASE: u64 = 1 << 62;

/// Evenly spaced grid `min, min + step, ..., max` (inclusive, up to rounding).
pub fn linear_grid(min: f64, max: f64, step: f64) -> crate::Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite() && step > 0.0 && max >= min) {
        return Err(crate::Error::pre(format!("bad grid: min {min}, max {max}, step {step}")));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    if count > 10_000_000 {
        return Err(crate::Error::Resource(format!("grid of {count} points is too large")));
    }
    Ok((0..count).map(|i| min + i as f64 * step).collect())
}

pub(crate) fn check_ascending(n_list: &[usize], what: &str) -> crate::Result<()> {
    if n_list.is_empty() {
        return Err(crate::Error::pre(format!("{what} must be nonempty")));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(crate::Error::pre(format!("{what} must be strictly ascending")));
    }
    Ok(())
}

pub(crate) fn check_replicates(r: usize) -> crate::Result<()> {
    if r == 0 {
        return Err(crate::Error::pre("at least one replicate is required"));
    }
    Ok(())
}
