//! Rescaled CDF deviation `sqrt(n) [F_n(x) - Phi(x)]` against its predicted
//! limit.

use crate::analytics::{edgeworth_q, limit_curve, log_mean_moments, std_normal_cdf, std_normal_pdf, MomentSummary};
use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stats::binomial_se;
use crate::trajectory::{simulate_batch, simulate_walk_batch, BatchRequest, SimSettings};

use super::ecdf::empirical_cdf;
use super::elogw::{estimate_elogw, ElogwConfig, ElogwEstimate};
use super::{check_ascending, check_replicates, ELOGW_STREAM_BASE};

/// Below this many replicates a rate curve carries a warning.
pub const MIN_RATE_REPLICATES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow<T> {
    pub x: T,
    pub n: usize,
    /// `sqrt(n) (F_n(x) - Phi(x))`.
    pub dhat: T,
    /// `sqrt(n)` times the binomial standard error of `F_n(x)`.
    pub se: T,
    /// Predicted limit at `x`.
    pub g: T,
    /// Standard error of `g` inherited from the `E log W` estimate.
    pub g_se: T,
    /// Edgeworth term `Q(x)` alone.
    pub q_only: T,
}

impl<T: Real> RateRow<T> {
    /// `|dhat - g|`.
    pub fn deviation(&self) -> T {
        (self.dhat - self.g).abs()
    }

    /// Standard error of `dhat - g`.
    pub fn combined_se(&self) -> T {
        (self.se * self.se + self.g_se * self.g_se).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve<T> {
    pub rows: Vec<RateRow<T>>,
    pub replicates: usize,
    pub e_log_w: Option<ElogwEstimate>,
    pub warnings: Vec<String>,
}

impl<T: Real> RateCurve<T> {
    pub fn row(&self, x: T, n: usize) -> Option<&RateRow<T>> {
        self.rows.iter().find(|r| r.n == n && (r.x - x).abs() <= T::lit(1e-12))
    }
}

/// Shared pipeline: for each `(n, standardized samples)`, the empirical CDF
/// on `x_grid` and the rescaled deviation from `Phi`. `predict` maps `x` to
/// `(g, g_se, q)`.
pub fn rate_rows<T: Real>(
    standardized: &[(usize, Vec<T>)],
    x_grid: &[T],
    predict: impl Fn(T) -> Result<(T, T, T)>,
) -> Result<Vec<RateRow<T>>> {
    let mut rows = Vec::with_capacity(standardized.len() * x_grid.len());
    for (n, samples) in standardized {
        let ecdf = empirical_cdf(samples, x_grid)?;
        let root_n = T::from_usize_lossy(*n).sqrt();
        for (i, &x) in x_grid.iter().enumerate() {
            let f = ecdf.values[i];
            let (g, g_se, q_only) = predict(x)?;
            rows.push(RateRow {
                x,
                n: *n,
                dhat: root_n * (f - std_normal_cdf(x)),
                se: root_n * binomial_se(f, ecdf.replicates),
                g,
                g_se,
                q_only,
            });
        }
    }
    Ok(rows)
}

fn standardize(column: &[f64], n: usize, m: &MomentSummary<f64>) -> Vec<f64> {
    let center = n as f64 * m.mu;
    let scale = (n as f64).sqrt() * m.sigma();
    column.iter().map(|v| (v - center) / scale).collect()
}

fn check_rate_inputs(x_grid: &[f64], n_list: &[usize], replicates: usize) -> Result<Vec<String>> {
    check_ascending(n_list, "n_list")?;
    check_replicates(replicates)?;
    if n_list[0] == 0 {
        return Err(Error::pre("n_list entries must be >= 1"));
    }
    if x_grid.is_empty() {
        return Err(Error::pre("x grid must be nonempty"));
    }
    let mut warnings = Vec::new();
    if replicates < MIN_RATE_REPLICATES {
        warnings.push(format!(
            "only {replicates} replicates; binomial intervals need at least {MIN_RATE_REPLICATES}"
        ));
    }
    Ok(warnings)
}

/// Rescaled CDF deviation of `(log Z_n - n mu) / (sqrt(n) sigma)` with the
/// predicted limit `-phi(x) E[log W] / sigma + Q(x)`.
///
/// `E log W` is estimated from `log W_N` on stream ids starting at
/// [`ELOGW_STREAM_BASE`], disjoint from the replicates of the main batch.
pub fn clt_rate_experiment(
    env: &EnvironmentModel,
    x_grid: &[f64],
    n_list: &[usize],
    replicates: usize,
    master_seed: u64,
    elogw: &ElogwConfig,
    settings: &SimSettings,
) -> Result<RateCurve<f64>> {
    env.ensure_clt_usable()?;
    let mut warnings = check_rate_inputs(x_grid, n_list, replicates)?;
    let moments = log_mean_moments::<f64>(env);
    let sigma = moments.sigma();

    let req = BatchRequest::new(*n_list.last().unwrap(), replicates, master_seed, n_list.to_vec());
    let batch = simulate_batch(env, &req, settings)?;
    let standardized: Vec<(usize, Vec<f64>)> = n_list
        .iter()
        .map(|&n| (n, standardize(batch.log_z_at(n).expect("recorded"), n, &moments)))
        .collect();
    drop(batch);

    let cfg = ElogwConfig { stream_offset: ELOGW_STREAM_BASE + elogw.stream_offset, ..*elogw };
    let est = estimate_elogw(env, &cfg, master_seed, settings)?;
    if let Some(last) = est.increments.last() {
        if last.estimate > 0.1 * est.se {
            warnings.push(format!(
                "E|log W_(N+1) - log W_N| = {} is not below 0.1 se = {}; increase the horizon",
                last.estimate,
                0.1 * est.se
            ));
        }
    }

    let rows = rate_rows(&standardized, x_grid, |x| {
        Ok((limit_curve(x, &moments, est.mean)?, std_normal_pdf(x) * est.se / sigma, edgeworth_q(x, &moments)?))
    })?;
    Ok(RateCurve { rows, replicates, e_log_w: Some(est), warnings })
}

/// The same pipeline applied to the associated random walk `S_n` alone; the
/// prediction is exactly `Q(x)`.
///
/// With the same master seed the walk reuses the atom sequence of
/// [`clt_rate_experiment`]'s main batch, which makes the difference of the
/// two curves an estimate of `-phi(x) E[log W] / sigma`.
pub fn walk_oracle_rate(
    env: &EnvironmentModel,
    x_grid: &[f64],
    n_list: &[usize],
    replicates: usize,
    master_seed: u64,
    settings: &SimSettings,
) -> Result<RateCurve<f64>> {
    env.ensure_clt_usable()?;
    let warnings = check_rate_inputs(x_grid, n_list, replicates)?;
    let moments = log_mean_moments::<f64>(env);
    let req = BatchRequest::new(*n_list.last().unwrap(), replicates, master_seed, n_list.to_vec());
    let (record, cols) = simulate_walk_batch(env, &req, settings)?;
    let standardized: Vec<(usize, Vec<f64>)> = record
        .iter()
        .zip(&cols)
        .map(|(&n, col)| (n, standardize(col, n, &moments)))
        .collect();
    let rows = rate_rows(&standardized, x_grid, |x| {
        let q = edgeworth_q(x, &moments)?;
        Ok((q, 0.0, q))
    })?;
    Ok(RateCurve { rows, replicates, e_log_w: None, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ImmigrationLaw;
    use crate::rng::RngStream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn normal_samples_give_unbiased_curve() {
        let mut rng = RngStream::new(77, 0);
        let r = 200_000;
        let grid = [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0];
        let data: Vec<(usize, Vec<f64>)> = [16usize, 64]
            .iter()
            .map(|&n| (n, (0..r).map(|_| StandardNormal.sample(&mut rng)).collect()))
            .collect();
        let rows = rate_rows(&data, &grid, |_| Ok((0.0, 0.0, 0.0))).unwrap();
        for row in rows {
            assert!(row.dhat.abs() <= 3.0 * row.se, "{row:?}");
            let expected_se = (row.n as f64).sqrt() * binomial_se(std_normal_cdf(row.x), r);
            assert!((row.se / expected_se - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn sigma_zero_rejected() {
        let atom = EnvironmentModel::reference_a().atoms[0];
        let env = EnvironmentModel::new(vec![crate::env::EnvAtom { prob: 1.0, ..atom }]);
        let e = clt_rate_experiment(&env, &[0.0], &[4], 100, 1, &ElogwConfig::default(), &SimSettings::default());
        assert!(matches!(e, Err(Error::Domain(_))));
        let e = walk_oracle_rate(&env, &[0.0], &[4], 100, 1, &SimSettings::default());
        assert!(matches!(e, Err(Error::Domain(_))));
    }

    #[test]
    fn small_runs_warn_and_symmetric_env_has_no_q() {
        let env = EnvironmentModel::reference(ImmigrationLaw::None);
        let cfg = ElogwConfig { horizon: 10, replicates: 500, stream_offset: 0 };
        let curve = clt_rate_experiment(&env, &[-1.0, 0.0, 1.0], &[4, 8], 500, 3, &cfg, &SimSettings::default()).unwrap();
        assert!(!curve.warnings.is_empty());
        let m = log_mean_moments::<f64>(&env);
        let elogw = curve.e_log_w.as_ref().unwrap().mean;
        for row in &curve.rows {
            assert!(row.q_only.abs() < 1e-15);
            let g = -std_normal_pdf(row.x) * elogw / m.sigma();
            assert!((row.g - g).abs() < 1e-12);
        }
        assert_eq!(curve.rows.len(), 6);
    }

    #[test]
    fn bad_inputs() {
        let env = EnvironmentModel::reference_a();
        let s = SimSettings::default();
        assert!(walk_oracle_rate(&env, &[0.0], &[8, 4], 10, 1, &s).is_err());
        assert!(walk_oracle_rate(&env, &[0.0], &[0, 4], 10, 1, &s).is_err());
        assert!(walk_oracle_rate(&env, &[], &[4], 10, 1, &s).is_err());
        assert!(walk_oracle_rate(&env, &[0.0], &[4], 0, 1, &s).is_err());
    }
}
