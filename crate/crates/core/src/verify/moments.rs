//! Stability of `E|log W_n|^r` in `n`.

use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::stats::mean_se;
use crate::trajectory::{simulate_batch, BatchRequest, SimSettings};

use super::{check_ascending, check_replicates};

/// Rows with `n` below this are excluded from the stability check.
pub const STABILITY_MIN_N: usize = 10;
/// Allowed max/min ratio across `n`.
pub const STABILITY_RATIO: f64 = 2.0;
/// Standard errors granted to each side of the ratio check.
pub const STABILITY_SE_MULTIPLE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub n: usize,
    pub r: f64,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentStability {
    pub rows: Vec<MomentRow>,
}

impl MomentStability {
    /// `max - 3 se_max <= 2 (min + 3 se_min)` over rows with `n >= 10`;
    /// `None` when fewer than two rows qualify.
    pub fn is_stable(&self) -> Option<bool> {
        let rows: Vec<&MomentRow> = self.rows.iter().filter(|r| r.n >= STABILITY_MIN_N).collect();
        if rows.len() < 2 {
            return None;
        }
        let max = rows.iter().max_by(|a, b| a.estimate.total_cmp(&b.estimate)).unwrap();
        let min = rows.iter().min_by(|a, b| a.estimate.total_cmp(&b.estimate)).unwrap();
        Some(
            max.estimate - STABILITY_SE_MULTIPLE * max.se
                <= STABILITY_RATIO * (min.estimate + STABILITY_SE_MULTIPLE * min.se),
        )
    }

    pub fn ratio(&self) -> f64 {
        let est = self.rows.iter().filter(|r| r.n >= STABILITY_MIN_N).map(|r| r.estimate);
        let (lo, hi) = est.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)));
        hi / lo
    }
}

/// Estimates `E|log W_n|^r` for each `n` in `n_list`.
pub fn moment_stability(
    env: &EnvironmentModel,
    r: f64,
    n_list: &[usize],
    replicates: usize,
    master_seed: u64,
    settings: &SimSettings,
) -> Result<MomentStability> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::pre(format!("r must be > 0, got {r}")));
    }
    check_ascending(n_list, "n_list")?;
    check_replicates(replicates)?;
    let req = BatchRequest::new(*n_list.last().unwrap(), replicates, master_seed, n_list.to_vec());
    let batch = simulate_batch(env, &req, settings)?;
    let rows = n_list
        .iter()
        .map(|&n| {
            let v: Vec<f64> = batch.log_w_at(n).expect("recorded").iter().map(|l| l.abs().powf(r)).collect();
            let (estimate, se) = mean_se(&v);
            MomentRow { n, r, estimate, se }
        })
        .collect();
    Ok(MomentStability { rows })
}
