//! Runs one experiment from a config document and writes its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bpire_core::analytics::hypothesis_report;
use bpire_core::trajectory::SimSettings;
use bpire_core::verify::{
    berry_esseen_sup, clt_rate_experiment, estimate_elogw, increment_decay, laplace_decay, linear_grid,
    moment_stability, walk_oracle_rate, ElogwConfig,
};
use bpire_core::Error as CoreError;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    BadConfig = 1,
    ValidationFailed = 2,
    Inconclusive = 3,
    Io = 4,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            RunError::ReadConfig { .. } | RunError::Write { .. } => ExitCode::Io,
            RunError::Parse(_) | RunError::Config(_) => ExitCode::BadConfig,
            RunError::Validation(_) => ExitCode::ValidationFailed,
        }
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Precondition(m) => RunError::Config(m),
            CoreError::InvalidEnvironment(m) | CoreError::Domain(m) => RunError::Validation(m),
            CoreError::Resource(m) => RunError::Config(format!("resource limit: {m}")),
        }
    }
}

/// Command-line overrides applied on top of the config document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// What a successful run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub exit: ExitCode,
    /// Human-readable summary, printed to stdout by the binary.
    pub summary: String,
    /// Gate messages that made the run inconclusive.
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// One experiment's CSV tables before they are written.
struct Output {
    tables: Vec<(&'static str, String)>,
    summary: String,
    notes: Vec<String>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn settings(cfg: &ExperimentConfig) -> SimSettings {
    SimSettings { promotion_threshold: cfg.promotion_threshold, threads: cfg.threads }
}

fn require_sigma(cfg: &ExperimentConfig) -> Result<(), RunError> {
    cfg.environment.ensure_clt_usable().map_err(|e| {
        RunError::Validation(format!(
            "{} requires sigma > 0, i.e. Var(log m_0) > 0 from at least two atoms with distinct mean offspring ({e})",
            cfg.kind.as_str()
        ))
    })
}

fn run_rate(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    require_sigma(cfg)?;
    let grid = linear_grid(cfg.x_grid.min, cfg.x_grid.max, cfg.x_grid.step)?;
    let s = settings(cfg);
    let curve = if cfg.kind == ExperimentKind::Rate {
        let elogw = ElogwConfig { horizon: cfg.horizon, replicates: cfg.replicates, stream_offset: 0 };
        clt_rate_experiment(&cfg.environment, &grid, &cfg.n_list, cfg.replicates, cfg.master_seed, &elogw, &s)?
    } else {
        walk_oracle_rate(&cfg.environment, &grid, &cfg.n_list, cfg.replicates, cfg.master_seed, &s)?
    };
    let table = csv(
        "x,n,dhat,se,g_pred,q_pred",
        curve.rows.iter().map(|r| vec![num(r.x), r.n.to_string(), num(r.dhat), num(r.se), num(r.g), num(r.q_only)]),
    );
    let mut summary = String::new();
    if let Some(e) = &curve.e_log_w {
        let _ = writeln!(summary, "E log W ~ log W_{} = {} (se {})", e.horizon, e.mean, e.se);
    }
    for r in &curve.rows {
        let _ = writeln!(
            summary,
            "x={:+.3} n={:<5} dhat={:+.5} se={:.5} g={:+.5} |dhat-g|/se={:.2}",
            r.x,
            r.n,
            r.dhat,
            r.se,
            r.g,
            r.deviation() / r.combined_se()
        );
    }
    let name = if cfg.kind == ExperimentKind::Rate { "rate.csv" } else { "walk-oracle.csv" };
    Ok(Output { tables: vec![(name, table)], summary, notes: curve.warnings })
}

fn run_elogw(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let ecfg = ElogwConfig { horizon: cfg.horizon, replicates: cfg.replicates, stream_offset: 0 };
    let est = estimate_elogw(&cfg.environment, &ecfg, cfg.master_seed, &settings(cfg))?;
    let last = est.increments.last().copied();
    let (li, lse) = last.map_or((f64::NAN, f64::NAN), |r| (r.estimate, r.se));
    let table = csv(
        "N,mean,se,last_increment_estimate,last_increment_se",
        [vec![est.horizon.to_string(), num(est.mean), num(est.se), num(li), num(lse)]],
    );
    let mut notes = Vec::new();
    if est.horizon > 0 && li > 0.1 * est.se {
        notes.push(format!("last increment {li} is not below 0.1 se = {}; increase the horizon", 0.1 * est.se));
    }
    let summary = format!("E log W_{} = {} (se {}), last increment {li}\n", est.horizon, est.mean, est.se);
    Ok(Output { tables: vec![("elogw.csv", table)], summary, notes })
}

fn run_decay(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let d = increment_decay(&cfg.environment, cfg.q, &cfg.n_list, cfg.replicates, cfg.master_seed, &settings(cfg))?;
    let table = csv(
        "n,estimate,se,qualifies",
        d.rows.iter().map(|r| vec![r.n.to_string(), num(r.estimate), num(r.se), r.qualifies.to_string()]),
    );
    let fit = csv(
        "slope,rho_hat,ci_lo,ci_hi",
        d.fit.iter().map(|f| vec![num(f.slope), num(f.rho_hat), num(f.ci_lo), num(f.ci_hi)]),
    );
    let mut notes = Vec::new();
    let summary = match d.fit {
        None => {
            notes.push("fewer than three rows clear the SE gate; decay fit inconclusive".to_string());
            "decay fit: inconclusive\n".to_string()
        }
        Some(f) => {
            if !d.rho_exceeds_one() {
                notes.push(format!("99% interval for rho [{}, {}] does not exclude 1", f.ci_lo, f.ci_hi));
            }
            format!("rho_hat = {} (99% CI [{}, {}])\n", f.rho_hat, f.ci_lo, f.ci_hi)
        }
    };
    Ok(Output { tables: vec![("decay.csv", table), ("fit.csv", fit)], summary, notes })
}

fn run_berry_esseen(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    require_sigma(cfg)?;
    let grid = linear_grid(cfg.x_grid.min, cfg.x_grid.max, cfg.x_grid.step)?;
    let be = berry_esseen_sup(&cfg.environment, &cfg.n_list, cfg.replicates, &grid, cfg.master_seed, &settings(cfg))?;
    let table = csv(
        "n,sup_dev,se_max,c_fit",
        be.rows.iter().map(|r| vec![r.n.to_string(), num(r.sup_dev), num(r.se_max), num(r.c_fit)]),
    );
    let mut notes = be.warnings.clone();
    if !be.is_stable() {
        notes.push(format!("sup * sqrt(n) varies by a factor {} across n", be.c_ratio));
    }
    let summary = format!("C_hat = {}, max/min of sup*sqrt(n) = {}\n", be.c_hat, be.c_ratio);
    Ok(Output { tables: vec![("berry-esseen.csv", table)], summary, notes })
}

fn run_laplace(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let l = laplace_decay(
        &cfg.environment,
        &cfg.t_grid,
        cfg.horizon,
        cfg.replicates,
        cfg.r,
        cfg.master_seed,
        &settings(cfg),
    )?;
    let table = csv(
        "t,phi_hat,se,logt_pow_r_times_phi",
        l.rows.iter().map(|r| vec![num(r.t), num(r.phi_hat), num(r.se), num(r.scaled)]),
    );
    let mut notes = Vec::new();
    match l.is_bounded() {
        None => notes.push("fewer than two t >= e; boundedness not assessed".to_string()),
        Some(false) => notes.push(format!("(log t)^r phi(t) grows by {:?}, not below 10", l.growth_ratio)),
        Some(true) => {}
    }
    let summary = format!(
        "qualitative spot check: (log t)^r phi(t) growth {:?}, max/min {:?}\n",
        l.growth_ratio, l.scaled_ratio
    );
    Ok(Output { tables: vec![("laplace.csv", table)], summary, notes })
}

fn run_moments(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let m = moment_stability(&cfg.environment, cfg.r, &cfg.n_list, cfg.replicates, cfg.master_seed, &settings(cfg))?;
    let table = csv(
        "n,r,estimate,se",
        m.rows.iter().map(|r| vec![r.n.to_string(), num(r.r), num(r.estimate), num(r.se)]),
    );
    let mut notes = Vec::new();
    match m.is_stable() {
        None => notes.push("fewer than two n >= 10; stability not assessed".to_string()),
        Some(false) => notes.push(format!("max/min ratio {} exceeds 2 beyond the standard errors", m.ratio())),
        Some(true) => {}
    }
    let summary = format!("max/min of E|log W_n|^r over n >= 10: {}\n", m.ratio());
    Ok(Output { tables: vec![("moments.csv", table)], summary, notes })
}

/// Smallest log-moment order the hypothesis audit accepts.
const AUDIT_MIN_R: f64 = 3.0;

fn run_validate(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let report = cfg.environment.validate();
    let mut summary = format!("validation\n{report}");
    if !report.passed() {
        return Err(RunError::Validation(summary));
    }
    // The log-moment hypothesis needs r >= 3; smaller r (the moment-stability default) is raised.
    let r = cfg.r.max(AUDIT_MIN_R);
    let hyp = hypothesis_report(&cfg.environment, cfg.p, cfg.delta, r)?;
    let _ = write!(summary, "hypotheses (p = {}, delta = {}, r = {r})\n{hyp}", cfg.p, cfg.delta);
    Ok(Output { tables: Vec::new(), summary, notes: Vec::new() })
}

fn execute(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    if cfg.kind != ExperimentKind::Validate {
        let report = cfg.environment.validate();
        if !report.passed() {
            return Err(RunError::Validation(format!("environment rejected\n{report}")));
        }
    }
    match cfg.kind {
        ExperimentKind::Rate | ExperimentKind::WalkOracle => run_rate(cfg),
        ExperimentKind::Elogw => run_elogw(cfg),
        ExperimentKind::Decay => run_decay(cfg),
        ExperimentKind::BerryEsseen => run_berry_esseen(cfg),
        ExperimentKind::Laplace => run_laplace(cfg),
        ExperimentKind::Moments => run_moments(cfg),
        ExperimentKind::Validate => run_validate(cfg),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    version: &'static str,
    wall_time_seconds: f64,
    exit_code: i32,
    notes: &'a [String],
    files: Vec<String>,
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf, RunError> {
    fs::write(&path, contents).map_err(|source| RunError::Write { path: path.clone(), source })?;
    Ok(path)
}

/// Runs an already parsed config and writes its CSVs and `manifest.json`
/// into `out_dir`.
pub fn run_config(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let output = execute(cfg)?;
    fs::create_dir_all(out_dir).map_err(|source| RunError::Write { path: out_dir.to_path_buf(), source })?;
    let mut files = Vec::new();
    for (name, body) in &output.tables {
        files.push(write_file(out_dir.join(name), body)?);
    }
    let exit = if output.notes.is_empty() { ExitCode::Success } else { ExitCode::Inconclusive };
    let manifest = Manifest {
        config: cfg,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        exit_code: exit.code(),
        notes: &output.notes,
        files: output.tables.iter().map(|(n, _)| n.to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    files.push(write_file(out_dir.join("manifest.json"), &text)?);
    Ok(RunReport { exit, summary: output.summary, notes: output.notes, files })
}

/// Reads the config at `config_path`, applies `overrides`, and runs it.
pub fn run(config_path: &Path, out_dir: &Path, overrides: Overrides) -> Result<RunReport, RunError> {
    let text = fs::read_to_string(config_path)
        .map_err(|source| RunError::ReadConfig { path: config_path.to_path_buf(), source })?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = overrides.seed {
        cfg.master_seed = seed;
    }
    if let Some(threads) = overrides.threads {
        cfg.threads = threads;
    }
    run_config(&cfg, out_dir)
}
