//! Spot check of the Laplace transform `E exp(-t W)` of the no-immigration
//! limit, using `W_N` as a proxy. Qualitative only: it reports whether
//! `(log t)^r E exp(-t W_N)` stays bounded across the requested grid.

use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::stats::mean_se;
use crate::trajectory::{simulate_batch, BatchRequest, SimSettings};

use super::check_replicates;

/// Largest allowed growth of `(log t)^r phi(t)` over `t >= e`.
pub const BOUNDED_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceRow {
    pub t: f64,
    pub phi_hat: f64,
    pub se: f64,
    /// `(log t)^r * phi_hat`.
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceResult {
    pub r: f64,
    pub rows: Vec<LaplaceRow>,
    /// max/min of `scaled` over rows with `t >= e`; `None` with fewer than
    /// two such rows.
    pub scaled_ratio: Option<f64>,
    /// Largest `scaled(t_j) / scaled(t_i)` over `e <= t_i < t_j`; only growth
    /// counts, since decay below `(log t)^-r` is consistent with boundedness.
    pub growth_ratio: Option<f64>,
}

impl LaplaceResult {
    /// `(log t)^r phi(t)` grows by less than [`BOUNDED_RATIO`] along the grid.
    pub fn is_bounded(&self) -> Option<bool> {
        self.growth_ratio.map(|q| q < BOUNDED_RATIO)
    }
}

pub fn laplace_decay(
    env: &EnvironmentModel,
    t_grid: &[f64],
    horizon: usize,
    replicates: usize,
    r: f64,
    master_seed: u64,
    settings: &SimSettings,
) -> Result<LaplaceResult> {
    if !env.has_no_immigration() {
        return Err(Error::pre("the Laplace spot check concerns the no-immigration process; remove immigration"));
    }
    check_replicates(replicates)?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::pre("t grid must be nonempty, finite and nonnegative"));
    }
    if t_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::pre("t grid must be nondecreasing"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::pre(format!("r must be > 0, got {r}")));
    }
    let req = BatchRequest::new(horizon, replicates, master_seed, vec![horizon]);
    let batch = simulate_batch(env, &req, settings)?;
    let w: Vec<f64> = batch.log_w_at(horizon).expect("recorded").iter().map(|l| l.exp()).collect();
    drop(batch);

    let rows: Vec<LaplaceRow> = t_grid
        .iter()
        .map(|&t| {
            let (phi_hat, se) = if t == 0.0 {
                (1.0, 0.0)
            } else {
                let v: Vec<f64> = w.iter().map(|wi| (-t * wi).exp()).collect();
                mean_se(&v)
            };
            LaplaceRow { t, phi_hat, se, scaled: t.ln().abs().powf(r) * phi_hat }
        })
        .collect();

    let big: Vec<f64> = rows.iter().filter(|row| row.t >= std::f64::consts::E).map(|row| row.scaled).collect();
    let scaled_ratio = (big.len() >= 2).then(|| {
        let max = big.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = big.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    });
    let growth_ratio = (big.len() >= 2).then(|| {
        let mut lowest = big[0];
        let mut growth: f64 = 0.0;
        for &v in &big[1..] {
            growth = growth.max(v / lowest);
            lowest = lowest.min(v);
        }
        growth
    });
    Ok(LaplaceResult { r, rows, scaled_ratio, growth_ratio })
}
