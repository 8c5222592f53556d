use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stats::binomial_se;

/// `z_{0.995}`, the multiplier of 99% two-sided binomial intervals.
pub const Z_995: f64 = 2.575_829_303_548_901;

/// Empirical CDF evaluated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf<T> {
    pub grid: Vec<T>,
    /// `F(x) = #{samples <= x} / R`.
    pub values: Vec<T>,
    pub replicates: usize,
    /// 99% binomial half-widths `z_{.995} sqrt(F (1 - F) / R)`.
    pub ci_halfwidth: Vec<T>,
}

impl<T: Real> EmpiricalCdf<T> {
    /// Binomial standard error at grid point `i`.
    pub fn se(&self, i: usize) -> T {
        binomial_se(self.values[i], self.replicates)
    }
}

/// One sort of the samples, then a merge against the sorted grid.
pub fn empirical_cdf<T: Real>(samples: &[T], grid: &[T]) -> Result<EmpiricalCdf<T>> {
    if samples.is_empty() {
        return Err(Error::pre("empirical CDF needs at least one sample"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::pre("samples contain NaN"));
    }
    if grid.windows(2).any(|w| !matches!(w[0].partial_cmp(&w[1]), Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal))) {
        return Err(Error::pre("grid must be sorted ascending"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let r = sorted.len();
    let rf = T::from_usize_lossy(r);
    let z = T::lit(Z_995);
    let mut values = Vec::with_capacity(grid.len());
    let mut ci = Vec::with_capacity(grid.len());
    let mut below = 0usize;
    for &x in grid {
        while below < r && sorted[below] <= x {
            below += 1;
        }
        let f = T::from_usize_lossy(below) / rf;
        values.push(f);
        ci.push(z * binomial_se(f, r));
    }
    Ok(EmpiricalCdf { grid: grid.to_vec(), values, replicates: r, ci_halfwidth: ci })
}
