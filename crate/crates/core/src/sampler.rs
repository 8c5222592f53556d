//! Aggregate samplers for one generation.
//!
//! Population sizes are carried as a [`Count`]: an exact integer below the
//! promotion threshold `T`, the natural log of the size at or above it. Above
//! `T` the aggregate offspring total is drawn from its Gaussian limit, whose
//! relative error is `O(T^{-1/2})`, far below Monte Carlo noise.

use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::env::{EnvironmentModel, ImmigrationLaw, OffspringLaw};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Default promotion threshold `2^40`.
pub const DEFAULT_PROMOTION_THRESHOLD: u64 = 1 << 40;
/// Exact counts are `u64`; thresholds beyond this would risk overflow of
/// `z + Poisson(z lambda)` for the supported parameter ranges.
pub const MAX_PROMOTION_THRESHOLD: u64 = 1 << 56;

/// Means at or below this use inversion; above it, transformed rejection.
const INVERSION_MAX_MEAN: f64 = 10.0;

/// Population size representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Count {
    Exact(u64),
    /// Natural log of the population size; always `>= ln T`.
    LogSpace(f64),
}

impl Count {
    pub const ONE: Count = Count::Exact(1);

    /// Normalises an integer value: promotes to log space at `>= threshold`.
    #[inline]
    pub fn from_u64(v: u64, threshold: u64) -> Self {
        if v >= threshold {
            Count::LogSpace((v as f64).ln())
        } else {
            Count::Exact(v)
        }
    }

    /// Normalises a log-size. Values below `ln T` are rounded back to
    /// integers.
    #[inline]
    pub fn from_ln(l: f64, threshold: u64) -> Self {
        if l >= (threshold as f64).ln() {
            Count::LogSpace(l)
        } else {
            Count::from_u64(l.exp().round() as u64, threshold)
        }
    }

    #[inline]
    pub fn ln(&self) -> f64 {
        match *self {
            Count::Exact(v) => (v as f64).ln(),
            Count::LogSpace(l) => l,
        }
    }

    #[inline]
    pub fn to_f64(&self) -> f64 {
        match *self {
            Count::Exact(v) => v as f64,
            Count::LogSpace(l) => l.exp(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Count::Exact(0))
    }

    /// `self + other`.
    #[inline]
    pub fn add(self, other: Count, threshold: u64) -> Count {
        match (self, other) {
            (Count::Exact(a), Count::Exact(b)) => match a.checked_add(b) {
                Some(s) => Count::from_u64(s, threshold),
                None => Count::LogSpace(log_add_exp((a as f64).ln(), (b as f64).ln())),
            },
            (Count::LogSpace(l), Count::Exact(0)) | (Count::Exact(0), Count::LogSpace(l)) => Count::LogSpace(l),
            (a, b) => Count::LogSpace(log_add_exp(a.ln(), b.ln())),
        }
    }

    /// `self - other` for `self >= other`; `None` when the difference is zero.
    pub fn saturating_sub(self, other: Count, threshold: u64) -> Option<Count> {
        let d = match (self, other) {
            (Count::Exact(a), Count::Exact(b)) => Count::Exact(a.saturating_sub(b)),
            (a, b) => {
                let (la, lb) = (a.ln(), b.ln());
                if lb >= la {
                    return None;
                }
                Count::from_ln(la + (-(lb - la).exp_m1()).ln(), threshold)
            }
        };
        (!d.is_zero()).then_some(d)
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln k!` for small `k`, by direct summation.
fn ln_factorial_small(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Stirling-series remainder `ln k! - [(k + 1/2) ln k - k + ln sqrt(2 pi)]`.
fn stirling_remainder(k: u64) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
    let kf = k as f64;
    if k < 16 {
        return ln_factorial_small(k) - ((kf + 0.5) * kf.ln() - kf + HALF_LN_2PI);
    }
    let k2 = kf * kf;
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * k2)) / k2) / k2) / kf
}

/// `k ln(k / mu) + mu - k`, evaluated without cancellation near `k = mu`.
fn deviance_term(k: f64, mu: f64) -> f64 {
    let d = (k - mu) / mu;
    if d.abs() < 0.1 {
        // (1 + d) ln(1 + d) - d = sum_{j >= 2} (-1)^j d^j / (j (j - 1))
        let mut term = d * d;
        let mut sum = 0.0;
        let mut j = 2.0;
        loop {
            let t = term / (j * (j - 1.0));
            sum += t;
            if t.abs() <= 1e-17 * sum.abs() {
                break;
            }
            term *= -d;
            j += 1.0;
        }
        mu * sum
    } else {
        k * (k / mu).ln() + mu - k
    }
}

/// `ln P(K = k)` for `K ~ Poisson(mu)`, accurate for large `mu`.
fn poisson_ln_pmf(k: u64, mu: f64) -> f64 {
    if k == 0 {
        return -mu;
    }
    let kf = k as f64;
    -deviance_term(kf, mu) - 0.5 * (2.0 * std::f64::consts::PI * kf).ln() - stirling_remainder(k)
}

fn poisson_inversion(mean: f64, rng: &mut RngStream) -> u64 {
    let u = rng.uniform();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u64;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 && cdf < u {
            // rounding left a sliver of mass unreachable; u is in the far tail
            break;
        }
    }
    k
}

/// Hörmann's transformed rejection with squeeze (PTRS).
fn poisson_ptrs(mean: f64, rng: &mut RngStream) -> u64 {
    let smu = mean.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        if lhs <= poisson_ln_pmf(k as u64, mean) {
            return k as u64;
        }
    }
}

/// One `Poisson(mean)` draw.
///
/// Exact below the promotion threshold; at or above it the Gaussian
/// approximation `round(mean + sqrt(mean) G)` is used.
pub fn sample_poisson(mean: f64, rng: &mut RngStream, threshold: u64) -> Result<Count> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(Error::pre(format!("Poisson mean must be finite and >= 0, got {mean}")));
    }
    Ok(poisson_unchecked(mean, rng, threshold))
}

#[inline]
fn poisson_unchecked(mean: f64, rng: &mut RngStream, threshold: u64) -> Count {
    if mean == 0.0 {
        Count::Exact(0)
    } else if mean <= INVERSION_MAX_MEAN {
        Count::from_u64(poisson_inversion(mean, rng), threshold)
    } else if mean < threshold as f64 {
        Count::from_u64(poisson_ptrs(mean, rng), threshold)
    } else {
        let g: f64 = StandardNormal.sample(rng);
        let v = (mean + mean.sqrt() * g).round().max(0.0);
        if v < u64::MAX as f64 {
            Count::from_u64(v as u64, threshold)
        } else {
            Count::LogSpace(v.ln())
        }
    }
}

/// Total offspring of `z` i.i.d. individuals in one generation.
///
/// Shifted Poisson: `z + Poisson(z lambda)`. Shifted geometric:
/// `z + NegBin(z, q)`, drawn as a Poisson–Gamma mixture. In log space the
/// total is `z (m + G sqrt(v / z))`, floored at `z` since nobody has fewer
/// than one child.
pub fn sample_offspring_total(z: Count, law: &OffspringLaw, rng: &mut RngStream, threshold: u64) -> Result<Count> {
    if z.is_zero() {
        return Err(Error::pre("offspring total needs z >= 1"));
    }
    Ok(offspring_total_unchecked(z, law, rng, threshold))
}

#[inline]
pub(crate) fn offspring_total_unchecked(z: Count, law: &OffspringLaw, rng: &mut RngStream, threshold: u64) -> Count {
    match z {
        Count::Exact(n) => {
            let nf = n as f64;
            let extra = match *law {
                OffspringLaw::ShiftedPoisson { lambda } => poisson_unchecked(nf * lambda, rng, threshold),
                OffspringLaw::ShiftedGeometric { q } => {
                    if q == 1.0 {
                        Count::Exact(0)
                    } else {
                        let rate = Gamma::new(nf, (1.0 - q) / q)
                            .expect("shape and scale are positive")
                            .sample(rng);
                        poisson_unchecked(rate, rng, threshold)
                    }
                }
            };
            z.add(extra, threshold)
        }
        Count::LogSpace(lz) => {
            let g: f64 = StandardNormal.sample(rng);
            let per_capita = law.mean() + g * (law.variance() / lz.exp()).sqrt();
            Count::LogSpace(lz + per_capita.max(1.0).ln())
        }
    }
}

/// One immigration draw.
#[inline]
pub fn sample_immigration(law: &ImmigrationLaw, rng: &mut RngStream) -> u64 {
    match *law {
        ImmigrationLaw::None => 0,
        ImmigrationLaw::Poisson { nu } => match poisson_unchecked(nu, rng, u64::MAX) {
            Count::Exact(v) => v,
            Count::LogSpace(_) => unreachable!("threshold u64::MAX keeps immigration exact"),
        },
        ImmigrationLaw::Geometric { s } => {
            if s == 1.0 {
                0
            } else {
                // failures before the first success, by inversion
                (rng.uniform().ln() / (1.0 - s).ln()).floor() as u64
            }
        }
    }
}

/// Index of one environment atom, by inversion over cumulative probabilities.
pub fn sample_atom(env: &EnvironmentModel, rng: &mut RngStream) -> usize {
    AtomTable::new(env).sample(rng)
}

/// Precomputed cumulative probabilities for repeated atom draws.
#[derive(Debug, Clone)]
pub(crate) struct AtomTable {
    cumulative: Vec<f64>,
}

impl AtomTable {
    pub(crate) fn new(env: &EnvironmentModel) -> Self {
        let mut acc = 0.0;
        let cumulative = env
            .atoms
            .iter()
            .map(|a| {
                acc += a.prob;
                acc
            })
            .collect();
        Self { cumulative }
    }

    #[inline]
    pub(crate) fn sample(&self, rng: &mut RngStream) -> usize {
        let n = self.cumulative.len();
        if n == 1 {
            // still consume one draw so that atom draws stay aligned
            let _ = rng.uniform();
            return 0;
        }
        let u = rng.uniform() * self.cumulative[n - 1];
        self.cumulative.iter().position(|&c| u < c).unwrap_or(n - 1)
    }
}
