//! End-to-end runs of the `bpire` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bpire_cli::{ExperimentConfig, ExperimentKind, GridSpec};
use bpire_core::env::{EnvAtom, EnvironmentModel, ImmigrationLaw, OffspringLaw};
use proptest::prelude::*;
use tempfile::TempDir;

fn bpire(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpire"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, cfg: &ExperimentConfig) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, cfg.to_json()).unwrap();
    p
}

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(EnvironmentModel::reference_a(), kind);
    c.replicates = 2_000;
    c.n_list = vec![4, 8, 16];
    c.horizon = 10;
    c.master_seed = 7;
    c
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn validate_reference_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "v.json", &small(ExperimentKind::Validate));
    let o = bpire(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in ["normalization", "sigma > 0", "non-lattice heuristic", "E(Y_0/m_0)^2"] {
        assert!(text.contains(needle), "missing {needle}:\n{text}");
    }
    assert!(dir.path().join("out/manifest.json").exists());
}

#[test]
fn failed_validation_exits_two() {
    let dir = TempDir::new().unwrap();
    let mut c = small(ExperimentKind::Validate);
    c.environment.atoms[0].prob = 0.6;
    let o = bpire(&write_config(&dir, "v.json", &c), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("normalization"), "{}", stderr(&o));
}

#[test]
fn rate_with_deterministic_environment_exits_two() {
    let dir = TempDir::new().unwrap();
    let mut c = small(ExperimentKind::Rate);
    c.environment = EnvironmentModel::new(vec![EnvAtom::new(
        OffspringLaw::ShiftedPoisson { lambda: 1.0 },
        ImmigrationLaw::Poisson { nu: 1.0 },
        1.0,
    )]);
    let o = bpire(&write_config(&dir, "r.json", &c), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma > 0"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_one_and_names_it() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    let mut text = small(ExperimentKind::Moments).to_json();
    text = text.replacen("\"replicates\"", "\"replicatez\": 3,\n  \"replicates\"", 1);
    fs::write(&p, text).unwrap();
    let o = bpire(&p, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("replicatez") && e.contains("line"), "{e}");
}

#[test]
fn bad_parameters_exit_one() {
    let dir = TempDir::new().unwrap();
    let mut c = small(ExperimentKind::Moments);
    c.n_list = vec![8, 4];
    let o = bpire(&write_config(&dir, "m.json", &c), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn io_failures_exit_four() {
    let dir = TempDir::new().unwrap();
    let o = bpire(&dir.path().join("missing.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(4));
    let cfg = write_config(&dir, "m.json", &small(ExperimentKind::Moments));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = bpire(&cfg, &blocker, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn every_kind_writes_its_exact_header() {
    let dir = TempDir::new().unwrap();
    let mut laplace = small(ExperimentKind::Laplace);
    laplace.environment = EnvironmentModel::reference_a().without_immigration();
    let mut decay = small(ExperimentKind::Decay);
    decay.n_list = (3..=9).collect();
    let cases = [
        (small(ExperimentKind::Rate), vec![("rate.csv", "x,n,dhat,se,g_pred,q_pred")]),
        (small(ExperimentKind::WalkOracle), vec![("walk-oracle.csv", "x,n,dhat,se,g_pred,q_pred")]),
        (small(ExperimentKind::Elogw), vec![("elogw.csv", "N,mean,se,last_increment_estimate,last_increment_se")]),
        (decay, vec![("decay.csv", "n,estimate,se,qualifies"), ("fit.csv", "slope,rho_hat,ci_lo,ci_hi")]),
        (small(ExperimentKind::BerryEsseen), vec![("berry-esseen.csv", "n,sup_dev,se_max,c_fit")]),
        (laplace, vec![("laplace.csv", "t,phi_hat,se,logt_pow_r_times_phi")]),
        (small(ExperimentKind::Moments), vec![("moments.csv", "n,r,estimate,se")]),
    ];
    for (cfg, files) in cases {
        let kind = cfg.kind.as_str();
        let out = dir.path().join(kind);
        let o = bpire(&write_config(&dir, &format!("{kind}.json"), &cfg), &out, &[]);
        assert!(matches!(o.status.code(), Some(0) | Some(3)), "{kind}: {}", stderr(&o));
        for (name, want) in files {
            let text = fs::read_to_string(out.join(name)).unwrap();
            assert_eq!(header(&out.join(name)), want, "{kind}");
            assert!(!text.contains('\r'));
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config"]["kind"], kind);
        assert!(manifest["version"].is_string());
        assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn floats_have_seventeen_significant_digits() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    bpire(&write_config(&dir, "m.json", &small(ExperimentKind::Moments)), &out, &[]);
    let text = fs::read_to_string(out.join("moments.csv")).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        for f in &fields[1..] {
            let mantissa = f.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{f}");
        }
    }
}

#[test]
fn tiny_decay_run_is_inconclusive() {
    let dir = TempDir::new().unwrap();
    let mut c = small(ExperimentKind::Decay);
    c.replicates = 10;
    c.n_list = (5..=25).collect();
    let out = dir.path().join("o");
    let o = bpire(&write_config(&dir, "d.json", &c), &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("fit.csv")).unwrap(), "slope,rho_hat,ci_lo,ci_hi\n");
}

#[test]
fn coarse_berry_esseen_grid_is_inconclusive() {
    let dir = TempDir::new().unwrap();
    let mut c = small(ExperimentKind::BerryEsseen);
    c.x_grid = GridSpec { min: -4.0, max: 4.0, step: 1.0 };
    let o = bpire(&write_config(&dir, "b.json", &c), &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("coarser"), "{}", stderr(&o));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let mut c = small(ExperimentKind::Rate);
    c.replicates = 10_000;
    let cfg = write_config(&dir, "r.json", &c);
    let mut outputs = Vec::new();
    for (i, t) in ["1", "4", "8", "1"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        let o = bpire(&cfg, &out, &["--threads", t]);
        assert!(matches!(o.status.code(), Some(0) | Some(3)), "{}", stderr(&o));
        outputs.push(fs::read(out.join("rate.csv")).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "m.json", &small(ExperimentKind::Moments));
    let read = |args: &[&str], tag: &str| {
        let out = dir.path().join(tag);
        bpire(&cfg, &out, args);
        (fs::read(out.join("moments.csv")).unwrap(), fs::read_to_string(out.join("manifest.json")).unwrap())
    };
    let (base, _) = read(&[], "a");
    let (same, _) = read(&["--seed", "7"], "b");
    let (other, manifest) = read(&["--seed", "18446744073709551615"], "c");
    assert_eq!(base, same);
    assert_ne!(base, other);
    assert!(manifest.contains("18446744073709551615"));
}

fn config_strategy() -> impl Strategy<Value = ExperimentConfig> {
    let kinds = prop_oneof![
        Just(ExperimentKind::Rate),
        Just(ExperimentKind::WalkOracle),
        Just(ExperimentKind::Elogw),
        Just(ExperimentKind::Decay),
        Just(ExperimentKind::BerryEsseen),
        Just(ExperimentKind::Laplace),
        Just(ExperimentKind::Moments),
        Just(ExperimentKind::Validate),
    ];
    let atom = (0.01f64..10.0, 0.01f64..1.0, 0.0f64..3.0, 0.01f64..1.0).prop_map(|(lambda, q, nu, p)| {
        vec![
            EnvAtom::new(OffspringLaw::ShiftedPoisson { lambda }, ImmigrationLaw::Poisson { nu }, p),
            EnvAtom::new(OffspringLaw::ShiftedGeometric { q }, ImmigrationLaw::None, 1.0 - p),
        ]
    });
    (
        kinds,
        atom,
        (-5.0f64..0.0, 0.0f64..5.0, 0.001f64..1.0),
        prop::collection::vec(1usize..10_000, 1..6),
        any::<u64>(),
        (1usize..1_000_000, 0usize..200, 0.01f64..10.0, 0.01f64..10.0),
        (any::<u64>(), 0usize..64, prop::collection::vec(0.0f64..1e6, 0..5)),
    )
        .prop_map(|(kind, atoms, (lo, hi, step), n_list, seed, (reps, horizon, q, r), (thr, threads, t_grid))| {
            let mut c = ExperimentConfig::new(EnvironmentModel::new(atoms), kind);
            c.x_grid = GridSpec { min: lo, max: hi, step };
            c.n_list = n_list;
            c.master_seed = seed;
            c.replicates = reps;
            c.horizon = horizon;
            c.q = q;
            c.r = r;
            c.delta = q * 0.5;
            c.p = 1.0 + r;
            c.promotion_threshold = thr;
            c.threads = threads;
            c.t_grid = t_grid;
            c
        })
}

proptest! {
    #[test]
    fn config_roundtrips(c in config_strategy()) {
        let back = ExperimentConfig::parse(&c.to_json()).unwrap();
        prop_assert_eq!(back, c);
    }
}
