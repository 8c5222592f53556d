//! Uniform CDF distance `sup_x |F_n(x) - Phi(x)|` on a grid.

use crate::analytics::{log_mean_moments, std_normal_cdf};
use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::trajectory::{simulate_batch, BatchRequest, SimSettings};

use super::ecdf::empirical_cdf;
use super::{check_ascending, check_replicates};

/// The grid must cover at least `[-GRID_HALF_SPAN, GRID_HALF_SPAN]`.
const GRID_HALF_SPAN: f64 = 4.0;
const GRID_MAX_STEP: f64 = 0.05;
/// `sup * sqrt(n)` may vary by less than this factor across `n`.
pub const C_STABILITY_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerryEsseenRow {
    pub n: usize,
    pub sup_dev: f64,
    /// Largest binomial standard error of `F_n` over the grid.
    pub se_max: f64,
    /// `sup_dev * sqrt(n)`.
    pub c_fit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerryEsseenResult {
    pub rows: Vec<BerryEsseenRow>,
    /// `max_n sup_dev sqrt(n)`.
    pub c_hat: f64,
    /// Ratio of the largest to the smallest `c_fit`.
    pub c_ratio: f64,
    pub warnings: Vec<String>,
}

impl BerryEsseenResult {
    pub fn is_stable(&self) -> bool {
        self.c_ratio < C_STABILITY_FACTOR
    }
}

/// Coverage and resolution warnings for a sup-distance grid.
pub fn grid_warnings(grid: &[f64]) -> Vec<String> {
    let mut w = Vec::new();
    match (grid.first(), grid.last()) {
        (Some(&lo), Some(&hi)) if lo <= -GRID_HALF_SPAN && hi >= GRID_HALF_SPAN => {}
        _ => w.push(format!("grid does not span [-{GRID_HALF_SPAN}, {GRID_HALF_SPAN}]")),
    }
    let step = grid.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
    if step > GRID_MAX_STEP + 1e-12 {
        w.push(format!("grid step {step} is coarser than {GRID_MAX_STEP}"));
    }
    w
}

/// Sup distance for already standardised samples, one vector per `n`.
pub fn berry_esseen_from_samples(standardized: &[(usize, Vec<f64>)], grid: &[f64]) -> Result<BerryEsseenResult> {
    if grid.is_empty() {
        return Err(Error::pre("grid must be nonempty"));
    }
    let mut rows = Vec::with_capacity(standardized.len());
    for (n, samples) in standardized {
        let ecdf = empirical_cdf(samples, grid)?;
        let mut sup_dev: f64 = 0.0;
        let mut se_max: f64 = 0.0;
        for (i, &x) in grid.iter().enumerate() {
            sup_dev = sup_dev.max((ecdf.values[i] - std_normal_cdf(x)).abs());
            se_max = se_max.max(ecdf.se(i));
        }
        rows.push(BerryEsseenRow { n: *n, sup_dev, se_max, c_fit: sup_dev * (*n as f64).sqrt() });
    }
    let c_hat = rows.iter().map(|r| r.c_fit).fold(0.0, f64::max);
    let c_min = rows.iter().map(|r| r.c_fit).fold(f64::INFINITY, f64::min);
    Ok(BerryEsseenResult { rows, c_hat, c_ratio: c_hat / c_min, warnings: grid_warnings(grid) })
}

/// Sup-grid distance between the law of `(log Z_n - n mu)/(sqrt(n) sigma)`
/// and the standard normal, with the `n^{-1/2}` constant fitted per `n`.
pub fn berry_esseen_sup(
    env: &EnvironmentModel,
    n_list: &[usize],
    replicates: usize,
    grid: &[f64],
    master_seed: u64,
    settings: &SimSettings,
) -> Result<BerryEsseenResult> {
    env.ensure_clt_usable()?;
    check_ascending(n_list, "n_list")?;
    check_replicates(replicates)?;
    if n_list[0] == 0 {
        return Err(Error::pre("n_list entries must be >= 1"));
    }
    if grid.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(Error::pre("grid must be strictly ascending"));
    }
    let m = log_mean_moments::<f64>(env);
    let req = BatchRequest::new(*n_list.last().unwrap(), replicates, master_seed, n_list.to_vec());
    let batch = simulate_batch(env, &req, settings)?;
    let standardized: Vec<(usize, Vec<f64>)> = n_list
        .iter()
        .map(|&n| {
            let center = n as f64 * m.mu;
            let scale = (n as f64).sqrt() * m.sigma();
            (n, batch.log_z_at(n).expect("recorded").iter().map(|v| (v - center) / scale).collect())
        })
        .collect();
    berry_esseen_from_samples(&standardized, grid)
}
