//! Finite-atom i.i.d. environments.
//!
//! Each atom fixes the offspring law and the immigration law of one
//! generation. Offspring laws are shifted so that every individual has at
//! least one child, and both families have closed-form `z`-fold convolutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(prob) == 1`.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Offspring law of a single individual. Support starts at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffspringLaw {
    /// `X = 1 + Poisson(lambda)`.
    ShiftedPoisson { lambda: f64 },
    /// `X = 1 + G` with `P(G = k) = q (1 - q)^k`.
    ShiftedGeometric { q: f64 },
}

impl OffspringLaw {
    /// Conditional mean `m` of one individual's offspring count.
    pub fn mean(&self) -> f64 {
        match *self {
            OffspringLaw::ShiftedPoisson { lambda } => 1.0 + lambda,
            OffspringLaw::ShiftedGeometric { q } => 1.0 + (1.0 - q) / q,
        }
    }

    /// Per-individual offspring variance.
    pub fn variance(&self) -> f64 {
        match *self {
            OffspringLaw::ShiftedPoisson { lambda } => lambda,
            OffspringLaw::ShiftedGeometric { q } => (1.0 - q) / (q * q),
        }
    }

    /// `P(X = k)`.
    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let j = k - 1;
        match *self {
            OffspringLaw::ShiftedPoisson { lambda } => poisson_pmf(lambda, j),
            OffspringLaw::ShiftedGeometric { q } => geometric_pmf(q, j),
        }
    }

    /// `P(X_1 + ... + X_z = k)` in closed form: `z + Poisson(z lambda)` or
    /// `z + NegBin(z, q)`.
    pub fn total_pmf(&self, z: u64, k: u64) -> f64 {
        if z == 0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if k < z {
            return 0.0;
        }
        let j = k - z;
        match *self {
            OffspringLaw::ShiftedPoisson { lambda } => poisson_pmf(z as f64 * lambda, j),
            OffspringLaw::ShiftedGeometric { q } => negbin_pmf(z, q, j),
        }
    }

    fn check_params(&self) -> std::result::Result<(), String> {
        match *self {
            OffspringLaw::ShiftedPoisson { lambda } if !(lambda.is_finite() && lambda >= 0.0) => {
                Err(format!("shifted Poisson lambda must be finite and >= 0, got {lambda}"))
            }
            OffspringLaw::ShiftedGeometric { q } if !(q > 0.0 && q <= 1.0) => {
                Err(format!("shifted geometric q must lie in (0, 1], got {q}"))
            }
            _ => Ok(()),
        }
    }

    /// `P(X = 1) = 1`.
    pub fn is_degenerate(&self) -> bool {
        match *self {
            OffspringLaw::ShiftedPoisson { lambda } => lambda == 0.0,
            OffspringLaw::ShiftedGeometric { q } => q == 1.0,
        }
    }
}

/// Immigration law of one generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImmigrationLaw {
    /// `Y = Poisson(nu)`.
    Poisson { nu: f64 },
    /// `P(Y = k) = s (1 - s)^k`.
    Geometric { s: f64 },
    /// `Y = 0` almost surely.
    None,
}

impl ImmigrationLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            ImmigrationLaw::Poisson { nu } => nu,
            ImmigrationLaw::Geometric { s } => (1.0 - s) / s,
            ImmigrationLaw::None => 0.0,
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        match *self {
            ImmigrationLaw::Poisson { nu } => poisson_pmf(nu, k),
            ImmigrationLaw::Geometric { s } => geometric_pmf(s, k),
            ImmigrationLaw::None => {
                if k == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_none(&self) -> bool {
        match *self {
            ImmigrationLaw::None => true,
            ImmigrationLaw::Poisson { nu } => nu == 0.0,
            ImmigrationLaw::Geometric { s } => s == 1.0,
        }
    }

    fn check_params(&self) -> std::result::Result<(), String> {
        match *self {
            ImmigrationLaw::Poisson { nu } if !(nu.is_finite() && nu >= 0.0) => {
                Err(format!("Poisson immigration nu must be finite and >= 0, got {nu}"))
            }
            ImmigrationLaw::Geometric { s } if !(s > 0.0 && s <= 1.0) => {
                Err(format!("geometric immigration s must lie in (0, 1], got {s}"))
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn poisson_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    (kf * mean.ln() - mean - statrs::function::gamma::ln_gamma(kf + 1.0)).exp()
}

pub(crate) fn geometric_pmf(p: f64, k: u64) -> f64 {
    if p == 1.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    p * ((k as f64) * (1.0 - p).ln()).exp()
}

/// Failures before the `r`-th success, success probability `p`.
pub(crate) fn negbin_pmf(r: u64, p: f64, k: u64) -> f64 {
    if p == 1.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    use statrs::function::gamma::ln_gamma;
    let (rf, kf) = (r as f64, k as f64);
    (ln_gamma(kf + rf) - ln_gamma(rf) - ln_gamma(kf + 1.0) + rf * p.ln() + kf * (1.0 - p).ln()).exp()
}

/// One realised environment value together with its probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvAtom {
    pub offspring: OffspringLaw,
    pub immigration: ImmigrationLaw,
    pub prob: f64,
}

impl EnvAtom {
    pub fn new(offspring: OffspringLaw, immigration: ImmigrationLaw, prob: f64) -> Self {
        Self { offspring, immigration, prob }
    }
}

/// Conditional mean offspring count `m(xi)` of an atom.
pub fn mean_offspring(atom: &EnvAtom) -> f64 {
    atom.offspring.mean()
}

/// Law of the environment: an ordered list of atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentModel {
    pub atoms: Vec<EnvAtom>,
}

impl EnvironmentModel {
    pub fn new(atoms: Vec<EnvAtom>) -> Self {
        Self { atoms }
    }

    /// Atoms `{ShiftedPoisson(1), ShiftedPoisson(2)}` with probability 1/2
    /// each and the given immigration law on both.
    pub fn reference(immigration: ImmigrationLaw) -> Self {
        Self::new(vec![
            EnvAtom::new(OffspringLaw::ShiftedPoisson { lambda: 1.0 }, immigration, 0.5),
            EnvAtom::new(OffspringLaw::ShiftedPoisson { lambda: 2.0 }, immigration, 0.5),
        ])
    }

    /// Reference environment with `Poisson(1)` immigration on both atoms.
    pub fn reference_a() -> Self {
        Self::reference(ImmigrationLaw::Poisson { nu: 1.0 })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn log_means(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.offspring.mean().ln()).collect()
    }

    /// True when every atom has `Y = 0` almost surely.
    pub fn has_no_immigration(&self) -> bool {
        self.atoms.iter().all(|a| a.immigration.is_none())
    }

    /// Same atoms with immigration removed.
    pub fn without_immigration(&self) -> Self {
        Self::new(
            self.atoms
                .iter()
                .map(|a| EnvAtom { immigration: ImmigrationLaw::None, ..*a })
                .collect(),
        )
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Fails with the first hard validation failure.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        match report.entries.iter().find(|c| c.hard && !c.passed) {
            Some(c) => Err(Error::InvalidEnvironment(format!("{}: {}", c.name, c.detail))),
            None => Ok(()),
        }
    }

    /// Like [`ensure_valid`](Self::ensure_valid) and additionally requires
    /// `Var(log m_0) > 0`.
    pub fn ensure_clt_usable(&self) -> Result<()> {
        self.ensure_valid()?;
        if distinct_log_means(self).len() < 2 {
            return Err(Error::Domain(
                "the CLT for log Z_n needs sigma > 0, i.e. at least two atoms with distinct mean offspring".into(),
            ));
        }
        Ok(())
    }
}

/// One validation predicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Hard checks gate every simulation; soft ones only gate CLT experiments.
    pub hard: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub entries: Vec<Check>,
}

impl ValidationReport {
    /// All hard checks pass.
    pub fn passed(&self) -> bool {
        self.entries.iter().filter(|c| c.hard).all(|c| c.passed)
    }

    /// All checks, including `sigma > 0`, pass.
    pub fn clt_usable(&self) -> bool {
        self.entries.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.entries.iter().find(|c| c.name == name)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.entries {
            let tag = match (c.passed, c.hard) {
                (true, _) => "pass",
                (false, true) => "FAIL",
                (false, false) => "flag",
            };
            writeln!(f, "[{tag}] {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Checks every modelling assumption and reports each one; never errors.
pub fn validate(env: &EnvironmentModel) -> ValidationReport {
    let mut entries = Vec::new();
    let mut push = |name, passed, hard, detail: String| {
        entries.push(Check { name, passed, hard, detail })
    };

    push(
        "nonempty",
        !env.atoms.is_empty(),
        true,
        format!("{} atom(s)", env.atoms.len()),
    );

    let param_errors: Vec<String> = env
        .atoms
        .iter()
        .enumerate()
        .flat_map(|(i, a)| {
            let mut errs = Vec::new();
            if let Err(e) = a.offspring.check_params() {
                errs.push(format!("atom {i}: {e}"));
            }
            if let Err(e) = a.immigration.check_params() {
                errs.push(format!("atom {i}: {e}"));
            }
            if !(a.prob > 0.0 && a.prob <= 1.0) {
                errs.push(format!("atom {i}: prob must lie in (0, 1], got {}", a.prob));
            }
            errs
        })
        .collect();
    push(
        "parameters",
        param_errors.is_empty(),
        true,
        if param_errors.is_empty() { "all law parameters in range".into() } else { param_errors.join("; ") },
    );

    // Both offspring families are shifted by one, so P(X = 0) = 0 always.
    push("support", true, true, "P(X_0 = 0) = 0 for every atom".into());

    let degenerate: Vec<usize> = env
        .atoms
        .iter()
        .enumerate()
        .filter(|(_, a)| a.offspring.is_degenerate())
        .map(|(i, _)| i)
        .collect();
    push(
        "non_degeneracy",
        degenerate.is_empty() && !env.atoms.is_empty(),
        true,
        if degenerate.is_empty() {
            "P(X_0 = 1) < 1 in every atom".into()
        } else {
            format!("offspring identically 1 in atom(s) {degenerate:?}")
        },
    );

    let total: f64 = env.atoms.iter().map(|a| a.prob).sum();
    push(
        "normalization",
        (total - 1.0).abs() <= PROB_SUM_TOL,
        true,
        format!("sum of atom probabilities = {total}"),
    );

    let mu: f64 = env.atoms.iter().map(|a| a.prob * a.offspring.mean().ln()).sum();
    push(
        "positive_drift",
        mu > 0.0,
        true,
        format!("E log m_0 = {mu}"),
    );

    let distinct = distinct_log_means(env).len();
    push(
        "sigma_positive",
        distinct >= 2,
        false,
        if distinct >= 2 {
            format!("{distinct} distinct mean offspring values")
        } else {
            "log m_0 is deterministic (sigma = 0); unusable for CLT experiments".into()
        },
    );

    ValidationReport { entries }
}

/// Distinct values of `log m` among atoms with positive probability, ascending.
pub(crate) fn distinct_log_means(env: &EnvironmentModel) -> Vec<f64> {
    let mut logs: Vec<f64> = env
        .atoms
        .iter()
        .filter(|a| a.prob > 0.0)
        .map(|a| a.offspring.mean().ln())
        .collect();
    logs.sort_by(f64::total_cmp);
    logs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1.0));
    logs
}

/// Largest denominator tried by the rational-ratio searches.
pub const MAX_LATTICE_DENOMINATOR: u32 = 64;
/// Distance to `p/d` below which a ratio counts as rational.
pub const LATTICE_RATIO_TOL: f64 = 1e-9;

/// Outcome of the small-lattice heuristic on the atoms' log-means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LatticeDiagnostic {
    /// Fewer than two distinct mean offspring values.
    Inapplicable,
    /// No ratio `log m_i / log m_j` is close to `p/d` with `d <= 64`.
    NoSmallLattice,
    /// `log m_i / log m_j` is within tolerance of `numerator / denominator`.
    Warning { numerator: i64, denominator: u32, atoms: (usize, usize) },
}

impl LatticeDiagnostic {
    pub fn is_warning(&self) -> bool {
        matches!(self, LatticeDiagnostic::Warning { .. })
    }
}

impl std::fmt::Display for LatticeDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LatticeDiagnostic::Inapplicable => write!(f, "inapplicable (fewer than two distinct atoms)"),
            LatticeDiagnostic::NoSmallLattice => write!(f, "no small-lattice structure detected"),
            LatticeDiagnostic::Warning { numerator, denominator, atoms } => write!(
                f,
                "warning: log m_{} / log m_{} is within {LATTICE_RATIO_TOL:e} of {numerator}/{denominator}",
                atoms.0, atoms.1
            ),
        }
    }
}

/// Smallest `d` in `1..=max_d` with `|ratio - p/d| < tol` for some integer `p`.
fn small_rational(ratio: f64, max_d: u32, tol: f64) -> Option<(i64, u32)> {
    (1..=max_d).find_map(|d| {
        let p = (ratio * d as f64).round();
        ((ratio - p / d as f64).abs() < tol).then_some((p as i64, d))
    })
}

/// Looks for small rational ratios between the atoms' `log m` values.
///
/// Irrationality cannot be decided from floats, so this only warns; it never
/// blocks a run.
pub fn non_lattice_heuristic(env: &EnvironmentModel) -> LatticeDiagnostic {
    // (atom index, log m) for the first atom of each distinct mean.
    let mut reps: Vec<(usize, f64)> = Vec::new();
    for (i, a) in env.atoms.iter().enumerate() {
        let l = a.offspring.mean().ln();
        if l != 0.0 && !reps.iter().any(|&(_, r)| (r - l).abs() <= 1e-15 * l.abs()) {
            reps.push((i, l));
        }
    }
    if reps.len() < 2 {
        return LatticeDiagnostic::Inapplicable;
    }
    let mut best: Option<LatticeDiagnostic> = None;
    let mut best_d = u32::MAX;
    for (a, &(i, li)) in reps.iter().enumerate() {
        for &(j, lj) in &reps[a + 1..] {
            // keep |ratio| <= 1 so that p is bounded by d
            let (num_idx, den_idx, ratio) = if li.abs() <= lj.abs() { (i, j, li / lj) } else { (j, i, lj / li) };
            if let Some((p, d)) = small_rational(ratio, MAX_LATTICE_DENOMINATOR, LATTICE_RATIO_TOL) {
                if d < best_d {
                    best_d = d;
                    best = Some(LatticeDiagnostic::Warning { numerator: p, denominator: d, atoms: (num_idx, den_idx) });
                }
            }
        }
    }
    best.unwrap_or(LatticeDiagnostic::NoSmallLattice)
}

/// Arithmetic structure of the support of `log m_0` itself.
///
/// A law is lattice when its support sits in `a + h Z`. Any law with exactly
/// two support points is lattice with span equal to their gap; with three or
/// more points it is lattice when all gap ratios are rational (checked up to
/// denominator 64).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SupportSpan {
    Degenerate,
    Lattice { span: f64 },
    NoSmallSpan,
}

pub fn support_span(env: &EnvironmentModel) -> SupportSpan {
    let logs = distinct_log_means(env);
    match logs.len() {
        0 | 1 => SupportSpan::Degenerate,
        2 => SupportSpan::Lattice { span: logs[1] - logs[0] },
        _ => {
            let base = logs[1] - logs[0];
            let mut den = 1u32;
            for l in &logs[2..] {
                match small_rational((l - logs[0]) / base, MAX_LATTICE_DENOMINATOR, LATTICE_RATIO_TOL) {
                    Some((_, d)) => den = lcm(den, d),
                    None => return SupportSpan::NoSmallSpan,
                }
                if den > MAX_LATTICE_DENOMINATOR {
                    return SupportSpan::NoSmallSpan;
                }
            }
            SupportSpan::Lattice { span: base / den as f64 }
        }
    }
}

fn lcm(a: u32, b: u32) -> u32 {
    fn gcd(a: u32, b: u32) -> u32 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    a / gcd(a, b) * b
}
