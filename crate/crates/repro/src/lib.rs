//! The ten acceptance criteria of the toolkit, each evaluated at its pinned
//! scale and tolerance. Every check returns a [`Verdict`]; nothing here
//! loosens a tolerance to make a check pass.

#[path = "../../core/tests/support/oracle.rs"]
pub mod oracle;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use bpire_cli::{run_config, ExperimentConfig, ExperimentKind, GridSpec};
use bpire_core::analytics::{log_mean_moments, std_normal_cdf, std_normal_pdf};
use bpire_core::env::{EnvAtom, EnvironmentModel, ImmigrationLaw, OffspringLaw};
use bpire_core::stats::mean_se;
use bpire_core::trajectory::{simulate_batch, BatchRequest, SimSettings};
use bpire_core::verify::{
    berry_esseen_sup, clt_rate_experiment, increment_decay, linear_grid, moment_stability, walk_oracle_rate,
    ElogwConfig,
};
use bpire_core::{RateCurve, Result};

/// Replicates of the rate experiments.
pub const R_LARGE: usize = 1_000_000;
/// Replicates of the remaining Monte Carlo criteria.
pub const R_MEDIUM: usize = 100_000;
pub const X_GRID: [f64; 3] = [-1.0, 0.0, 1.0];
pub const N_LIST: [usize; 3] = [16, 64, 256];

const SEED_MARTINGALE: u64 = 0x6d61_7274;
const SEED_WALK_SKEWED: u64 = 0x736b_6577;
const SEED_MAIN: u64 = 0x6d61_696e;
const SEED_BERRY_ESSEEN: u64 = 0x6265_7373;
const SEED_DECAY: u64 = 0x6465_6361;
const SEED_MOMENTS: u64 = 0x6d6f_6d73;
const SEED_SAMPLER: u64 = 0x7361_6d70;

#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Verdict {
    fn new(id: u8, title: &'static str, budget_s: u64, elapsed: Duration, statistic_ok: bool, detail: String) -> Self {
        let budget = Duration::from_secs(budget_s);
        Self { id, title, passed: statistic_ok && elapsed <= budget, detail, elapsed, budget }
    }

    /// One line: `criterion  N PASS|FAIL  title: detail [elapsed / budget]`.
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {}  {}: {} [{:.1} s of {} s]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

impl Verdict {
    /// A criterion that could not be evaluated.
    pub fn error(id: u8, title: &'static str, e: impl std::fmt::Display) -> Self {
        failed(id, title, Duration::ZERO, e)
    }
}

fn failed(id: u8, title: &'static str, elapsed: Duration, e: impl std::fmt::Display) -> Verdict {
    Verdict {
        id,
        title,
        passed: false,
        detail: format!("error: {e}"),
        elapsed,
        budget: Duration::ZERO,
    }
}

fn settings() -> SimSettings {
    SimSettings::default()
}

/// Step law `log 2` w.p. 0.75, `log 8` w.p. 0.25.
pub fn skewed_environment() -> EnvironmentModel {
    EnvironmentModel::new(vec![
        EnvAtom::new(OffspringLaw::ShiftedPoisson { lambda: 1.0 }, ImmigrationLaw::None, 0.75),
        EnvAtom::new(OffspringLaw::ShiftedPoisson { lambda: 7.0 }, ImmigrationLaw::None, 0.25),
    ])
}

/// Closed-form aggregate law against brute-force convolution, plus a
/// chi-square test of the sampler.
pub fn criterion_1() -> Verdict {
    const TITLE: &str = "sampler oracle equivalence";
    let start = Instant::now();
    let laws = [
        OffspringLaw::ShiftedPoisson { lambda: 0.5 },
        OffspringLaw::ShiftedPoisson { lambda: 1.0 },
        OffspringLaw::ShiftedGeometric { q: 0.3 },
        OffspringLaw::ShiftedGeometric { q: 0.5 },
    ];
    let (mut max_tv, mut min_mass, mut min_p): (f64, f64, f64) = (0.0, 1.0, 1.0);
    let mut ok = true;
    for law in laws {
        for z in 2..=6u64 {
            let c = oracle::check_aggregate(&law, z, 100_000, SEED_SAMPLER);
            max_tv = max_tv.max(c.tv);
            min_mass = min_mass.min(c.mass);
            min_p = min_p.min(c.p_value);
            ok &= c.tv < 1e-10 && c.mass >= oracle::MASS_FLOOR && c.p_value > 1e-3;
        }
    }
    let detail = format!(
        "20 (law, z) cases: max TV {max_tv:.2e} (< 1e-10), min truncated mass 1 - {:.1e}, min chi-square p {min_p:.4} (> 1e-3)",
        1.0 - min_mass
    );
    Verdict::new(1, TITLE, 60, start.elapsed(), ok, detail)
}

/// `E W_n = 1` without immigration.
pub fn criterion_2() -> Verdict {
    const TITLE: &str = "martingale mean";
    let start = Instant::now();
    let env = EnvironmentModel::reference_a().without_immigration();
    let ns: Vec<usize> = (1..=10).collect();
    let batch = match simulate_batch(&env, &BatchRequest::new(10, R_MEDIUM, SEED_MARTINGALE, ns.clone()), &settings()) {
        Ok(b) => b,
        Err(e) => return failed(2, TITLE, start.elapsed(), e),
    };
    let mut worst: f64 = 0.0;
    for &n in &ns {
        let w: Vec<f64> = batch.log_w_at(n).expect("recorded").iter().map(|l| l.exp()).collect();
        let (m, se) = mean_se(&w);
        worst = worst.max((m - 1.0).abs() / se);
    }
    let detail = format!("n = 1..10, R = {R_MEDIUM}: max |mean W_n - 1| / se = {worst:.2} (<= 5)");
    Verdict::new(2, TITLE, 60, start.elapsed(), worst <= 5.0, detail)
}

fn describe_rows(curve: &RateCurve, n: usize, against: impl Fn(f64) -> f64) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for x in X_GRID {
        let r = curve.row(x, n).expect("row present");
        let target = against(x);
        let z = (r.dhat - target).abs() / r.se;
        ok &= z <= 3.0;
        parts.push(format!("x={x:+}: dhat {:+.4} vs {:+.4} ({z:.1} se)", r.dhat, target));
    }
    (ok, parts.join("; "))
}

/// The walk-only rate curve of a skewed two-point step law against `Q(x)`.
pub fn criterion_3() -> Verdict {
    const TITLE: &str = "walk oracle, skewed two-point step";
    let start = Instant::now();
    let env = skewed_environment();
    let curve = match walk_oracle_rate(&env, &X_GRID, &[256], R_LARGE, SEED_WALK_SKEWED, &settings()) {
        Ok(c) => c,
        Err(e) => return failed(3, TITLE, start.elapsed(), e),
    };
    let (ok, rows) = describe_rows(&curve, 256, |x| curve.row(x, 256).expect("row").q_only);
    let detail = format!("n = 256, R = {R_LARGE}, |dhat - Q| <= 3 se: {rows}");
    Verdict::new(3, TITLE, 300, start.elapsed(), ok, detail)
}

/// Shared runs for the rate-trend and decomposition criteria.
pub struct MainRuns {
    pub bpire: RateCurve,
    pub walk: RateCurve,
    pub bpire_time: Duration,
    pub walk_time: Duration,
}

/// BPIRE rate curve on reference env A and the walk curve with the same
/// master seed, which reuses its atom sequence.
pub fn main_runs() -> Result<MainRuns> {
    let env = EnvironmentModel::reference_a();
    let elogw = ElogwConfig { horizon: 30, replicates: R_LARGE, stream_offset: 0 };
    let t = Instant::now();
    let bpire = clt_rate_experiment(&env, &X_GRID, &N_LIST, R_LARGE, SEED_MAIN, &elogw, &settings())?;
    let bpire_time = t.elapsed();
    let t = Instant::now();
    let walk = walk_oracle_rate(&env, &X_GRID, &[256], R_LARGE, SEED_MAIN, &settings())?;
    Ok(MainRuns { bpire, walk, bpire_time, walk_time: t.elapsed() })
}

/// Convergence trend of the rescaled CDF deviation towards `g(x)`.
pub fn criterion_4(runs: &MainRuns) -> Verdict {
    const TITLE: &str = "exact-rate trend on reference env A";
    let curve = &runs.bpire;
    let est = curve.e_log_w.as_ref().expect("BPIRE curve carries E log W");
    let last = est.increments.last().expect("increment diagnostic");
    let diag_ok = last.estimate < 0.1 * est.se;
    let mut monotone = true;
    let mut final_ok = true;
    let mut parts = Vec::new();
    for x in X_GRID {
        let rows: Vec<_> = N_LIST.iter().map(|&n| *curve.row(x, n).expect("row")).collect();
        for w in rows.windows(2) {
            let slack = 2.0 * (w[0].combined_se().powi(2) + w[1].combined_se().powi(2)).sqrt();
            monotone &= w[1].deviation() <= w[0].deviation() + slack;
        }
        let r = rows[rows.len() - 1];
        let z = r.deviation() / r.combined_se();
        final_ok &= z <= 3.0;
        let devs: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.deviation())).collect();
        parts.push(format!("x={x:+}: |dhat-g| over n = [{}], n=256 at {z:.1} se", devs.join(", ")));
    }
    let detail = format!(
        "E log W_30 = {:.5} (se {:.1e}), last increment {:.1e} {} 0.1 se; nonincreasing up to 2 se: {}; n=256 within 3 se: {}; {}",
        est.mean,
        est.se,
        last.estimate,
        if diag_ok { "<" } else { ">=" },
        monotone,
        final_ok,
        parts.join("; ")
    );
    Verdict::new(4, TITLE, 1200, runs.bpire_time, diag_ok && monotone && final_ok, detail)
}

/// BPIRE curve minus walk curve against `-phi(x) E log W / sigma`.
pub fn criterion_5(runs: &MainRuns) -> Verdict {
    const TITLE: &str = "decomposition identity at n = 256";
    let env = EnvironmentModel::reference_a();
    let sigma = log_mean_moments::<f64>(&env).sigma();
    let est = runs.bpire.e_log_w.as_ref().expect("E log W");
    let mut ok = true;
    let mut parts = Vec::new();
    for x in X_GRID {
        let b = runs.bpire.row(x, 256).expect("row");
        let w = runs.walk.row(x, 256).expect("row");
        let target = -std_normal_pdf(x) * est.mean / sigma;
        let se = (b.se.powi(2) + w.se.powi(2) + b.g_se.powi(2)).sqrt();
        let z = (b.dhat - w.dhat - target).abs() / se;
        ok &= z <= 3.0;
        parts.push(format!("x={x:+}: {:+.4} vs {:+.4} ({z:.1} se)", b.dhat - w.dhat, target));
    }
    Verdict::new(5, TITLE, 1500, runs.bpire_time + runs.walk_time, ok, parts.join("; "))
}

/// `sup_x |F_n - Phi| sqrt(n)` stable within a factor 2.
pub fn criterion_6() -> Verdict {
    const TITLE: &str = "Berry-Esseen constant stability";
    let start = Instant::now();
    let env = EnvironmentModel::reference_a();
    let res = linear_grid(-4.0, 4.0, 0.05)
        .and_then(|grid| berry_esseen_sup(&env, &N_LIST, R_MEDIUM, &grid, SEED_BERRY_ESSEEN, &settings()));
    let be = match res {
        Ok(b) => b,
        Err(e) => return failed(6, TITLE, start.elapsed(), e),
    };
    let cs: Vec<String> = be.rows.iter().map(|r| format!("{:.4}", r.c_fit)).collect();
    let detail = format!(
        "sup*sqrt(n) over n = {N_LIST:?}: [{}], max/min {:.3} (< 2){}",
        cs.join(", "),
        be.c_ratio,
        if be.warnings.is_empty() { String::new() } else { format!("; warnings: {}", be.warnings.join("; ")) }
    );
    Verdict::new(6, TITLE, 300, start.elapsed(), be.is_stable() && be.warnings.is_empty(), detail)
}

/// Geometric decay of `E|log W_{n+1} - log W_n|`.
pub fn criterion_7() -> Verdict {
    const TITLE: &str = "increment decay";
    let start = Instant::now();
    let env = EnvironmentModel::reference_a();
    let ns: Vec<usize> = (5..=25).collect();
    let d = match increment_decay(&env, 1.0, &ns, R_MEDIUM, SEED_DECAY, &settings()) {
        Ok(d) => d,
        Err(e) => return failed(7, TITLE, start.elapsed(), e),
    };
    let qualifying = d.rows.iter().filter(|r| r.qualifies).count();
    let detail = match d.fit {
        Some(f) => format!(
            "{qualifying} of {} rows qualify; rho_hat {:.4}, 99% CI [{:.4}, {:.4}] (excludes 1: {})",
            d.rows.len(),
            f.rho_hat,
            f.ci_lo,
            f.ci_hi,
            d.rho_exceeds_one()
        ),
        None => format!("inconclusive: {qualifying} qualifying rows"),
    };
    Verdict::new(7, TITLE, 300, start.elapsed(), d.rho_exceeds_one(), detail)
}

/// `E|log W_n|^2` bounded in `n`.
pub fn criterion_8() -> Verdict {
    const TITLE: &str = "moment stability";
    let start = Instant::now();
    let env = EnvironmentModel::reference_a();
    let m = match moment_stability(&env, 2.0, &[10, 20, 40], R_MEDIUM, SEED_MOMENTS, &settings()) {
        Ok(m) => m,
        Err(e) => return failed(8, TITLE, start.elapsed(), e),
    };
    let est: Vec<String> = m.rows.iter().map(|r| format!("{:.5} (se {:.1e})", r.estimate, r.se)).collect();
    let detail = format!("E|log W_n|^2 at n = 10, 20, 40: {}; max/min {:.4}", est.join(", "), m.ratio());
    Verdict::new(8, TITLE, 300, start.elapsed(), m.is_stable() == Some(true), detail)
}

fn csv_bytes(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            files.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p)?));
        }
    }
    files.sort();
    Ok(files)
}

/// Byte-identical CSVs for thread counts 1, 4 and 8.
pub fn criterion_9() -> Verdict {
    const TITLE: &str = "determinism across thread counts";
    let start = Instant::now();
    let check = || -> std::result::Result<(bool, usize), String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut rate = ExperimentConfig::new(EnvironmentModel::reference_a(), ExperimentKind::Rate);
        rate.replicates = 20_000;
        rate.n_list = vec![16, 64];
        rate.x_grid = GridSpec { min: -2.0, max: 2.0, step: 0.5 };
        rate.master_seed = 9;
        let mut decay = ExperimentConfig::new(EnvironmentModel::reference_a(), ExperimentKind::Decay);
        decay.replicates = 20_000;
        decay.n_list = (5..=12).collect();
        decay.master_seed = 9;
        let mut all_same = true;
        let mut compared = 0;
        for cfg in [rate, decay] {
            let mut outputs = Vec::new();
            for threads in [1, 4, 8] {
                let c = ExperimentConfig { threads, ..cfg.clone() };
                let dir = tmp.path().join(format!("{}-{threads}", cfg.kind.as_str()));
                run_config(&c, &dir).map_err(|e| e.to_string())?;
                outputs.push(csv_bytes(&dir).map_err(|e| e.to_string())?);
            }
            compared += outputs[0].len();
            all_same &= !outputs[0].is_empty() && outputs.windows(2).all(|w| w[0] == w[1]);
        }
        Ok((all_same, compared))
    };
    match check() {
        Ok((same, files)) => Verdict::new(
            9,
            TITLE,
            60,
            start.elapsed(),
            same,
            format!("rate and decay runs, {files} CSV files per thread count, byte-identical: {same}"),
        ),
        Err(e) => failed(9, TITLE, start.elapsed(), e),
    }
}

/// `Phi` against Romberg quadrature of the density.
pub fn criterion_10() -> Verdict {
    const TITLE: &str = "normal CDF accuracy";
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let x = -8.0 + 16.0 * i as f64 / 999.0;
        worst = worst.max((std_normal_cdf(x) - oracle::phi_by_quadrature(x)).abs());
    }
    let detail = format!("1000 points in [-8, 8]: max |Phi - quadrature| = {worst:.2e} (<= 1e-12)");
    Verdict::new(10, TITLE, 1, start.elapsed(), worst <= 1e-12, detail)
}
