//! Brute-force oracles: the aggregate offspring law and the normal CDF.

use bpire_core::analytics::std_normal_pdf;
use bpire_core::env::OffspringLaw;
use bpire_core::rng::RngStream;
use bpire_core::sampler::{sample_offspring_total, Count, DEFAULT_PROMOTION_THRESHOLD};
use bpire_core::stats::chi_square_gof;

/// Required closed-form mass on the truncated support.
pub const MASS_FLOOR: f64 = 1.0 - 1e-12;

/// Smallest `k_max` whose closed-form mass on `0..=k_max` reaches [`MASS_FLOOR`].
pub fn support_bound(law: &OffspringLaw, z: u64) -> usize {
    let mut mass = 0.0;
    let mut k = 0;
    loop {
        mass += law.total_pmf(z, k as u64);
        if mass >= MASS_FLOOR {
            return k;
        }
        k += 1;
    }
}

/// `z`-fold convolution of the single-individual pmf on `0..=k_max`.
pub fn convolution_pmf(law: &OffspringLaw, z: u64, k_max: usize) -> Vec<f64> {
    let single: Vec<f64> = (0..=k_max).map(|k| law.pmf(k as u64)).collect();
    let mut acc = vec![0.0; k_max + 1];
    acc[0] = 1.0;
    for _ in 0..z {
        let mut next = vec![0.0; k_max + 1];
        for (i, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &s) in single.iter().enumerate().take(k_max + 1 - i) {
                next[i + j] += a * s;
            }
        }
        acc = next;
    }
    acc
}

#[derive(Debug, Clone, Copy)]
pub struct AggregateCheck {
    /// Total variation between convolution and closed form on the truncated support.
    pub tv: f64,
    /// Closed-form mass on the truncated support.
    pub mass: f64,
    pub chi2: f64,
    pub p_value: f64,
}

/// Compares the closed-form aggregate law with brute-force convolution and
/// runs a chi-square test of `draws` sampler outputs against it.
pub fn check_aggregate(law: &OffspringLaw, z: u64, draws: usize, seed: u64) -> AggregateCheck {
    let k_max = support_bound(law, z);
    let closed: Vec<f64> = (0..=k_max).map(|k| law.total_pmf(z, k as u64)).collect();
    let conv = convolution_pmf(law, z, k_max);
    let tv = 0.5 * closed.iter().zip(&conv).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let mass: f64 = closed.iter().sum();

    let mut counts = vec![0u64; k_max + 2];
    let mut rng = RngStream::new(seed, z);
    for _ in 0..draws {
        let v = match sample_offspring_total(Count::Exact(z), law, &mut rng, DEFAULT_PROMOTION_THRESHOLD) {
            Ok(Count::Exact(v)) => v as usize,
            other => panic!("unexpected draw {other:?}"),
        };
        counts[v.min(k_max + 1)] += 1;
    }
    let mut probs = closed.clone();
    probs.push((1.0 - mass).max(0.0));
    let (obs, exp) = pool_bins(&counts, &probs, draws as f64);
    let (chi2, p_value) = chi_square_gof(&obs, &exp).expect("at least two bins");
    AggregateCheck { tv, mass, chi2, p_value }
}

/// Merges adjacent bins until each expects at least five draws.
pub fn pool_bins(counts: &[u64], probs: &[f64], n: f64) -> (Vec<u64>, Vec<f64>) {
    let (mut obs, mut exp) = (Vec::new(), Vec::new());
    let (mut o, mut p) = (0u64, 0.0);
    for (&c, &q) in counts.iter().zip(probs) {
        o += c;
        p += q;
        if p * n >= 5.0 {
            obs.push(o);
            exp.push(p);
            o = 0;
            p = 0.0;
        }
    }
    if o > 0 || p > 0.0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(lo), Some(le)) => {
                *lo += o;
                *le += p;
            }
            _ => {
                obs.push(o);
                exp.push(p);
            }
        }
    }
    let total: f64 = exp.iter().sum();
    (obs, exp.into_iter().map(|e| e / total).collect())
}

/// Romberg integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn romberg(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const LEVELS: usize = 16;
    let mut prev = vec![0.5 * (b - a) * (f(a) + f(b))];
    let mut panels = 1usize;
    for _ in 1..LEVELS {
        let h = (b - a) / (2 * panels) as f64;
        let mids: f64 = (0..panels).map(|i| f(a + (2 * i + 1) as f64 * h)).sum();
        let mut row = vec![0.5 * prev[0] + h * mids];
        let mut factor = 1.0;
        for j in 1..=prev.len() {
            factor *= 4.0;
            row.push(row[j - 1] + (row[j - 1] - prev[j - 1]) / (factor - 1.0));
        }
        panels *= 2;
        let (last, prev_last) = (row[row.len() - 1], prev[prev.len() - 1]);
        if (last - prev_last).abs() < tol && panels >= 16 {
            return last;
        }
        prev = row;
    }
    prev[prev.len() - 1]
}

/// `Phi(x)` as `1/2 +- int_0^|x| phi`, split in unit panels.
pub fn phi_by_quadrature(x: f64) -> f64 {
    let a = x.abs();
    let mut integral = 0.0;
    let mut lo = 0.0;
    while lo < a {
        let hi = (lo + 1.0).min(a);
        integral += romberg(std_normal_pdf::<f64>, lo, hi, 1e-15);
        lo = hi;
    }
    if x >= 0.0 {
        0.5 + integral
    } else {
        0.5 - integral
    }
}
