//! Exact moments of `log m_0`, the standard normal functions, the Edgeworth
//! term and the limit curve of `sqrt(n) [P(U_n <= x) - Phi(x)]`.

use serde::Serialize;

use crate::env::{non_lattice_heuristic, support_span, EnvironmentModel, ImmigrationLaw, OffspringLaw, SupportSpan};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Standard normal density.
pub fn std_normal_pdf<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    (-(half * x * x)).exp() / (T::TAU()).sqrt()
}

/// Below this argument `erf` uses its power series, above it the
/// continued fraction for `erfc`.
const ERF_SPLIT: f64 = 2.5;

/// `erf(z)` for `0 <= z < ERF_SPLIT` via the positive series
/// `2/sqrt(pi) exp(-z^2) sum_n 2^n z^(2n+1) / (2n+1)!!`.
fn erf_series<T: Real>(z: T) -> T {
    let two_z2 = T::lit(2.0) * z * z;
    let mut term = z;
    let mut sum = z;
    let mut n = T::one();
    for _ in 0..500 {
        term = term * two_z2 / (T::lit(2.0) * n + T::one());
        sum = sum + term;
        if term <= sum * T::epsilon() {
            break;
        }
        n = n + T::one();
    }
    T::FRAC_2_SQRT_PI() * (-(z * z)).exp() * sum
}

/// `erfc(z)` for `z >= ERF_SPLIT` via the continued fraction
/// `exp(-z^2)/sqrt(pi) / (z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))`,
/// evaluated with the modified Lentz method.
fn erfc_continued_fraction<T: Real>(z: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let mut f = z;
    let mut c = z;
    let mut d = T::zero();
    let half = T::lit(0.5);
    let mut a = T::zero();
    for _ in 0..500 {
        a = a + half;
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    (-(z * z)).exp() / (T::PI().sqrt() * f)
}

/// Complementary error function.
pub fn erfc<T: Real>(z: T) -> T {
    if z < T::zero() {
        return T::lit(2.0) - erfc(-z);
    }
    if z < T::lit(ERF_SPLIT) {
        T::one() - erf_series(z)
    } else {
        erfc_continued_fraction(z)
    }
}

/// Standard normal CDF.
///
/// Both tails are evaluated without cancellation; the absolute error is at
/// the level of a few units of `T::epsilon()` for `f64`.
pub fn std_normal_cdf<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    let z = x.abs() / T::SQRT_2();
    // lower = P(N <= -|x|)
    let lower = if z < T::lit(ERF_SPLIT) {
        half - half * erf_series(z)
    } else {
        half * erfc_continued_fraction(z)
    };
    if x < T::zero() {
        lower
    } else {
        T::one() - lower
    }
}

/// Two-sided standard normal quantile for confidence `level`, e.g. 2.5758
/// for 0.99. Solved by bisection on [`std_normal_cdf`].
pub fn normal_two_sided_quantile<T: Real>(level: T) -> T {
    let target = (T::one() + level) / T::lit(2.0);
    let (mut lo, mut hi) = (T::zero(), T::lit(40.0));
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if std_normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// Moments of the step law of the associated random walk, `log m_0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSummary<T> {
    /// `E log m_0`.
    pub mu: T,
    /// `E (log m_0 - mu)^2`.
    pub sigma2: T,
    /// `E (log m_0 - mu)^3`.
    pub mu3: T,
    /// `(probability, value)` support points of `log m_0`.
    pub support: Vec<(T, T)>,
}

impl<T: Real> MomentSummary<T> {
    /// Moments of a finite discrete law given as `(probability, value)` pairs.
    pub fn from_points(points: Vec<(T, T)>) -> Self {
        let mu = points.iter().fold(T::zero(), |acc, &(p, v)| acc + p * v);
        let central = |k: i32| points.iter().fold(T::zero(), |acc, &(p, v)| acc + p * (v - mu).powi(k));
        Self { mu, sigma2: central(2), mu3: central(3), support: points }
    }

    pub fn sigma(&self) -> T {
        self.sigma2.sqrt()
    }

    /// `E |log m_0|^r`.
    pub fn abs_moment(&self, r: T) -> T {
        self.support.iter().fold(T::zero(), |acc, &(p, v)| acc + p * v.abs().powf(r))
    }

    /// `E (log m_0 - mu)^k`.
    pub fn central_moment(&self, k: i32) -> T {
        self.support.iter().fold(T::zero(), |acc, &(p, v)| acc + p * (v - self.mu).powi(k))
    }

    fn require_sigma(&self) -> Result<T> {
        if self.sigma2 > T::zero() {
            Ok(self.sigma())
        } else {
            Err(Error::Domain("sigma = 0: log m_0 is deterministic".into()))
        }
    }
}

/// Exact moments of `log m_0` for a finite-atom environment.
pub fn log_mean_moments<T: Real>(env: &EnvironmentModel) -> MomentSummary<T> {
    let points = env
        .atoms
        .iter()
        .map(|a| (T::lit(a.prob), T::lit(a.offspring.mean()).ln()))
        .collect();
    MomentSummary::from_points(points)
}

/// Edgeworth correction `Q(x) = mu3 (1 - x^2) phi(x) / (6 sigma^3)`.
pub fn edgeworth_q<T: Real>(x: T, m: &MomentSummary<T>) -> Result<T> {
    let sigma = m.require_sigma()?;
    Ok(m.mu3 * (T::one() - x * x) * std_normal_pdf(x) / (T::lit(6.0) * sigma.powi(3)))
}

/// Limit `g(x) = -phi(x) E[log W] / sigma + Q(x)` of the rescaled CDF
/// deviation of `(log Z_n - n mu) / (sqrt(n) sigma)`.
pub fn limit_curve<T: Real>(x: T, m: &MomentSummary<T>, e_log_w: T) -> Result<T> {
    let sigma = m.require_sigma()?;
    if !e_log_w.is_finite() {
        return Err(Error::pre("E log W estimate must be finite"));
    }
    Ok(-std_normal_pdf(x) * e_log_w / sigma + edgeworth_q(x, m)?)
}

/// Relative tail tolerance for the moment series.
pub const SERIES_REL_TOL: f64 = 1e-12;
/// Series longer than this are reported as non-convergent.
pub const SERIES_MAX_TERMS: u64 = 1_000_000;

/// `sum_k f(k) pmf(k)` for laws whose term ratio is eventually decreasing
/// and below one; stops when the geometric tail bound falls under
/// `SERIES_REL_TOL` of the partial sum.
fn series_expectation(pmf: impl Fn(u64) -> f64, f: impl Fn(u64) -> f64) -> std::result::Result<f64, String> {
    let mut sum = 0.0;
    let mut prev = 0.0;
    for k in 0..SERIES_MAX_TERMS {
        let t = f(k) * pmf(k);
        sum += t;
        if k >= 1 && prev > 0.0 && t > 0.0 {
            let ratio = t / prev;
            if ratio < 1.0 {
                let tail = t * ratio / (1.0 - ratio);
                if tail <= SERIES_REL_TOL * sum {
                    return Ok(sum);
                }
            }
        } else if k >= 1 && prev > 0.0 && t == 0.0 {
            // terms have underflowed past the mode
            return Ok(sum);
        }
        prev = t;
    }
    Err(format!("series did not converge within {SERIES_MAX_TERMS} terms"))
}

/// `E[Y^delta]` for one immigration law.
pub fn immigration_power_moment(law: &ImmigrationLaw, delta: f64) -> std::result::Result<f64, String> {
    match law {
        ImmigrationLaw::None => Ok(0.0),
        _ if law.is_none() => Ok(0.0),
        _ => series_expectation(|k| law.pmf(k), |k| (k as f64).powf(delta)),
    }
}

/// `E_xi[(X / m)^p]` for one offspring law.
pub fn offspring_ratio_moment(law: &OffspringLaw, p: f64) -> std::result::Result<f64, String> {
    let m = law.mean();
    series_expectation(|k| law.pmf(k), |k| (k as f64 / m).powf(p))
}

/// One audited hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisEntry {
    pub name: String,
    pub value: Option<f64>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub entries: Vec<HypothesisEntry>,
}

impl HypothesisReport {
    pub fn get(&self, name: &str) -> Option<&HypothesisEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }
}

impl std::fmt::Display for HypothesisReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.entries {
            let tag = if e.passed { "pass" } else { "flag" };
            match e.value {
                Some(v) => writeln!(f, "[{tag}] {} = {v}: {}", e.name, e.detail)?,
                None => writeln!(f, "[{tag}] {}: {}", e.name, e.detail)?,
            }
        }
        Ok(())
    }
}

/// Audits the moment and regularity hypotheses of the exact-rate CLT for
/// user-chosen `p > 1`, `delta > 0`, `r >= 3`.
pub fn hypothesis_report(env: &EnvironmentModel, p: f64, delta: f64, r: f64) -> Result<HypothesisReport> {
    env.ensure_valid()?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::pre(format!("p must be > 1, got {p}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::pre(format!("delta must be > 0, got {delta}")));
    }
    if !(r >= 3.0 && r.is_finite()) {
        return Err(Error::pre(format!("r must be >= 3, got {r}")));
    }
    let moments: MomentSummary<f64> = log_mean_moments(env);
    let mut entries = Vec::new();

    let log_r = moments.abs_moment(r);
    entries.push(HypothesisEntry {
        name: format!("E(log m_0)^{r}"),
        value: Some(log_r),
        passed: log_r.is_finite(),
        detail: "finite sum over atoms".into(),
    });

    let mut push_series = |name: String, per_atom: &dyn Fn(&crate::env::EnvAtom) -> std::result::Result<f64, String>| {
        let mut total = 0.0;
        for (i, a) in env.atoms.iter().enumerate() {
            match per_atom(a) {
                Ok(v) => total += a.prob * v,
                Err(e) => {
                    entries.push(HypothesisEntry { name, value: None, passed: false, detail: format!("atom {i}: {e}") });
                    return;
                }
            }
        }
        entries.push(HypothesisEntry {
            name,
            value: Some(total),
            passed: total.is_finite(),
            detail: "series summed to relative tolerance 1e-12 per atom".into(),
        });
    };
    push_series(format!("E(Y_0/m_0)^{delta}"), &|a| {
        Ok(immigration_power_moment(&a.immigration, delta)? / a.offspring.mean().powf(delta))
    });
    push_series(format!("E(E_xi(X_0/m_0)^{p})^{delta}"), &|a| {
        Ok(offspring_ratio_moment(&a.offspring, p)?.powf(delta))
    });

    let sigma_ok = moments.sigma2 > 0.0;
    entries.push(HypothesisEntry {
        name: "sigma > 0".into(),
        value: Some(moments.sigma()),
        passed: sigma_ok,
        detail: if sigma_ok { "log m_0 is random".into() } else { "log m_0 is deterministic".into() },
    });

    let lattice = non_lattice_heuristic(env);
    entries.push(HypothesisEntry {
        name: "non-lattice heuristic".into(),
        value: None,
        passed: !lattice.is_warning(),
        detail: lattice.to_string(),
    });

    let span = support_span(env);
    let (passed, detail) = match span {
        SupportSpan::Degenerate => (false, "log m_0 has a single support point".to_string()),
        SupportSpan::Lattice { span } => (
            false,
            format!("support of log m_0 lies on an arithmetic progression with span {span}"),
        ),
        SupportSpan::NoSmallSpan => (true, "no arithmetic progression with denominator <= 64 found".to_string()),
    };
    entries.push(HypothesisEntry { name: "support span".into(), value: None, passed, detail });

    Ok(HypothesisReport { entries })
}
