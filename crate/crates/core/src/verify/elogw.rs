//! `E log W` via `log W_N` and the decay of `E|log W_{n+1} - log W_n|^q`.

use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::stats::{fit_line, mean_se, student_t_quantile};
use crate::trajectory::{simulate_batch, BatchRequest, SimSettings};

use super::check_replicates;

/// A row qualifies for the decay fit when its estimate exceeds this many
/// standard errors.
pub const QUALIFY_SE_MULTIPLE: f64 = 5.0;
/// Below this many replicates the standard errors themselves are too noisy
/// to gate on, and no row qualifies.
pub const MIN_DECAY_REPLICATES: usize = 1000;
/// Confidence level of the decay-rate interval.
const FIT_LEVEL: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElogwConfig {
    /// Horizon `N` at which `log W_N` stands in for `log W`.
    pub horizon: usize,
    pub replicates: usize,
    /// Added to every stream id.
    pub stream_offset: u64,
}

impl Default for ElogwConfig {
    fn default() -> Self {
        Self { horizon: 30, replicates: 100_000, stream_offset: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub n: usize,
    /// Estimate of `E|log W_{n+1} - log W_n|^q`.
    pub estimate: f64,
    pub se: f64,
    pub qualifies: bool,
}

/// Least-squares fit of `ln estimate` against `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub slope_se: f64,
    /// `exp(-slope)`.
    pub rho_hat: f64,
    /// 99% interval for `rho`.
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySeries {
    pub q: f64,
    pub rows: Vec<DecayRow>,
    /// `None` when fewer than three rows qualify.
    pub fit: Option<DecayFit>,
}

impl DecaySeries {
    pub fn is_conclusive(&self) -> bool {
        self.fit.is_some()
    }

    /// The 99% interval for `rho` lies entirely above one.
    pub fn rho_exceeds_one(&self) -> bool {
        self.fit.is_some_and(|f| f.ci_lo > 1.0)
    }
}

/// `log W_N` summary with the last few increments as a convergence check.
#[derive(Debug, Clone, PartialEq)]
pub struct ElogwEstimate {
    pub horizon: usize,
    pub mean: f64,
    pub se: f64,
    /// `E|log W_{n+1} - log W_n|` for the last (up to three) `n <= N`.
    pub increments: Vec<DecayRow>,
}

fn increment_rows(
    batch: &crate::trajectory::BatchSamples,
    ns: &[usize],
    q: f64,
) -> Vec<DecayRow> {
    let trusted = batch.replicates() >= MIN_DECAY_REPLICATES;
    ns.iter()
        .map(|&n| {
            let a = batch.log_w_at(n).expect("recorded");
            let b = batch.log_w_at(n + 1).expect("recorded");
            let vals: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x).abs().powf(q)).collect();
            let (estimate, se) = mean_se(&vals);
            DecayRow { n, estimate, se, qualifies: trusted && estimate > QUALIFY_SE_MULTIPLE * se }
        })
        .collect()
}

/// Mean of `log W_N` over `replicates` paths.
pub fn estimate_elogw(
    env: &EnvironmentModel,
    cfg: &ElogwConfig,
    master_seed: u64,
    settings: &SimSettings,
) -> Result<ElogwEstimate> {
    check_replicates(cfg.replicates)?;
    let n = cfg.horizon;
    let tail: Vec<usize> = (n.saturating_sub(2)..=n).collect();
    let mut record = tail.clone();
    record.push(n + 1);
    let req = BatchRequest::new(n + 1, cfg.replicates, master_seed, record).with_stream_offset(cfg.stream_offset);
    let batch = simulate_batch(env, &req, settings)?;
    let (mean, se) = mean_se(batch.log_w_at(n).expect("recorded"));
    Ok(ElogwEstimate { horizon: n, mean, se, increments: increment_rows(&batch, &tail, 1.0) })
}

/// Estimates `E|log W_{n+1} - log W_n|^q` for each `n` in `ns` and fits
/// `ln estimate = a + slope n` on the rows that clear the SE gate
/// (estimate above five standard errors, at least
/// [`MIN_DECAY_REPLICATES`] replicates).
pub fn increment_decay(
    env: &EnvironmentModel,
    q: f64,
    ns: &[usize],
    replicates: usize,
    master_seed: u64,
    settings: &SimSettings,
) -> Result<DecaySeries> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::pre(format!("q must be > 0, got {q}")));
    }
    check_replicates(replicates)?;
    super::check_ascending(ns, "n range")?;
    let mut record: Vec<usize> = ns.iter().flat_map(|&n| [n, n + 1]).collect();
    record.sort_unstable();
    record.dedup();
    let horizon = *record.last().unwrap();
    let req = BatchRequest::new(horizon, replicates, master_seed, record);
    let batch = simulate_batch(env, &req, settings)?;
    let rows = increment_rows(&batch, ns, q);

    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.qualifies).map(|r| (r.n as f64, r.estimate.ln())).unzip();
    let fit = if xs.len() >= 3 {
        let line = fit_line(&xs, &ys)?;
        let t = student_t_quantile(FIT_LEVEL, line.dof);
        let (lo, hi) = (line.slope - t * line.slope_se, line.slope + t * line.slope_se);
        Some(DecayFit {
            slope: line.slope,
            slope_se: line.slope_se,
            rho_hat: (-line.slope).exp(),
            ci_lo: (-hi).exp(),
            ci_hi: (-lo).exp(),
        })
    } else {
        None
    };
    Ok(DecaySeries { q, rows, fit })
}
