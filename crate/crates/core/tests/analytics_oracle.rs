//! Analytics against frozen high-precision values (tests/oracles/high_precision.py)
//! and a Romberg quadrature of the normal density.

mod support;

use bpire_core::analytics::{
    edgeworth_q, hypothesis_report, limit_curve, log_mean_moments, offspring_ratio_moment, std_normal_cdf,
    std_normal_pdf, MomentSummary,
};
use bpire_core::env::{EnvAtom, EnvironmentModel, ImmigrationLaw, OffspringLaw};
use bpire_core::Error;
use support::oracle::phi_by_quadrature;

fn poisson_env(atoms: &[(f64, f64)], imm: ImmigrationLaw) -> EnvironmentModel {
    EnvironmentModel::new(
        atoms
            .iter()
            .map(|&(m, p)| EnvAtom::new(OffspringLaw::ShiftedPoisson { lambda: m - 1.0 }, imm, p))
            .collect(),
    )
}

fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    if want == 0.0 {
        got.abs() <= tol
    } else {
        ((got - want) / want).abs() <= tol
    }
}

type OracleCase = (&'static [(f64, f64)], [f64; 4]);

/// `(m, prob)` atoms with frozen `(mu, sigma2, mu3, E|log m|^3)`.
const MOMENT_ORACLE: [OracleCase; 3] = [
    (
        &[(2.0, 0.5), (3.0, 0.5)],
        [0.895_879_734_614_027_5, 0.041_100_488_473_291_357, 0.0, 0.829_496_806_066_418_4],
    ),
    (
        &[(2.0, 0.75), (8.0, 0.25)],
        [1.039_720_770_839_918, 0.360_339_760_438_651_07, 0.249_768_488_991_697_1, 2.497_684_889_916_971],
    ),
    (
        &[(2.0, 0.2), (2.5, 0.3), (5.0, 0.5)],
        [1.218_235_611_891_285_8, 0.159_014_405_289_164_73, -0.007_279_159_203_120_342, 2.381_852_917_321_474],
    ),
];

#[test]
fn log_mean_moments_match_high_precision_oracle() {
    for (atoms, [mu, s2, m3, a3]) in MOMENT_ORACLE {
        let env = poisson_env(atoms, ImmigrationLaw::Poisson { nu: 1.0 });
        let m = log_mean_moments::<f64>(&env);
        assert!(rel_close(m.mu, mu, 1e-13), "mu {} vs {mu}", m.mu);
        assert!(rel_close(m.sigma2, s2, 1e-13), "sigma2 {} vs {s2}", m.sigma2);
        // mu3 = 0 exactly for the symmetric law; float rounding of the centred cubes leaves ~1e-18
        let m3_tol = if m3 == 0.0 { 1e-16 } else { 1e-13 };
        assert!(rel_close(m.mu3, m3, m3_tol), "mu3 {} vs {m3}", m.mu3);
        assert!(rel_close(m.abs_moment(3.0), a3, 1e-13), "abs3 {} vs {a3}", m.abs_moment(3.0));
    }
}

#[test]
fn single_precision_moments_track_double() {
    for (atoms, [mu, s2, _, _]) in MOMENT_ORACLE {
        let env = poisson_env(atoms, ImmigrationLaw::None);
        let m = log_mean_moments::<f32>(&env);
        assert!(rel_close(m.mu as f64, mu, 1e-6));
        assert!(rel_close(m.sigma2 as f64, s2, 1e-5));
    }
}

#[test]
fn single_atom_moments() {
    let env = poisson_env(&[(2.0, 1.0)], ImmigrationLaw::None);
    let m = log_mean_moments::<f64>(&env);
    assert_eq!(m.mu, std::f64::consts::LN_2);
    assert_eq!((m.sigma2, m.mu3), (0.0, 0.0));
}

#[test]
fn skewed_law_has_mean_one_and_a_half_log_two() {
    let env = poisson_env(&[(2.0, 0.75), (8.0, 0.25)], ImmigrationLaw::None);
    let m = log_mean_moments::<f64>(&env);
    assert!((m.mu - 1.5 * std::f64::consts::LN_2).abs() < 1e-15);
    assert!(m.mu3 > 0.0);
}

#[test]
fn phi_matches_frozen_values() {
    let frozen = [
        (-8.0, 6.220_960_574_271_784e-16),
        (-3.5, 2.326_290_790_355_250_4e-4),
        (-1.0, 0.158_655_253_931_457_05),
        (0.3, 0.617_911_422_188_952_6),
        (1.959_963_985, 0.975_000_000_026_881_6),
        (5.0, 0.999_999_713_348_428_1),
        (8.0, 0.999_999_999_999_999_4),
    ];
    for (x, want) in frozen {
        let x: f64 = x;
        let got: f64 = std_normal_cdf(x);
        assert!((got - want).abs() <= 1e-15, "Phi({x}) = {got} vs {want}");
    }
    assert!((std_normal_cdf(1.959_963_985f64) - 0.975).abs() < 1e-9);
}

#[test]
fn phi_matches_quadrature_on_dense_grid() {
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let x = -8.0 + 16.0 * i as f64 / 999.0;
        worst = worst.max((std_normal_cdf(x) - phi_by_quadrature(x)).abs());
    }
    assert!(worst <= 1e-12, "max |Phi - quadrature| = {worst}");
}

#[test]
fn phi_reflection_on_dense_grid() {
    for i in 0..=1600 {
        let x = -8.0 + i as f64 * 0.01;
        let s = std_normal_cdf(x) + std_normal_cdf(-x);
        assert!((s - 1.0).abs() <= 1e-14, "x = {x}: {s}");
    }
}

#[test]
fn pdf_at_zero() {
    assert!((std_normal_pdf(0.0f64) - 0.398_942_280_4).abs() < 1e-10);
    assert!((std_normal_pdf(0.0f32) - 0.398_942_3).abs() < 1e-7);
}

fn unit_moments(mu3: f64) -> MomentSummary<f64> {
    MomentSummary { mu: 0.0, sigma2: 1.0, mu3, support: Vec::new() }
}

#[test]
fn edgeworth_examples() {
    let m = unit_moments(0.6);
    assert!((edgeworth_q(0.0, &m).unwrap() - 0.039_894_228_040_143_27).abs() < 1e-15);
    assert_eq!(edgeworth_q(1.0, &m).unwrap(), 0.0);
    assert_eq!(edgeworth_q(-1.0, &m).unwrap(), 0.0);
    let sym = unit_moments(0.0);
    for i in -40..=40 {
        assert_eq!(edgeworth_q(i as f64 * 0.1, &sym).unwrap(), 0.0);
    }
}

#[test]
fn edgeworth_is_even() {
    let m = unit_moments(0.37);
    for i in 0..=800 {
        let x = i as f64 * 0.01;
        assert_eq!(edgeworth_q(x, &m).unwrap(), edgeworth_q(-x, &m).unwrap());
    }
}

#[test]
fn edgeworth_integrates_to_zero() {
    let env = poisson_env(&[(2.0, 0.75), (8.0, 0.25)], ImmigrationLaw::None);
    let m = log_mean_moments::<f64>(&env);
    let h = 1e-3;
    let n = 20_000;
    let mut sum = 0.5 * (edgeworth_q(-10.0, &m).unwrap() + edgeworth_q(10.0, &m).unwrap());
    for i in 1..n {
        sum += edgeworth_q(-10.0 + i as f64 * h, &m).unwrap();
    }
    assert!((sum * h).abs() < 1e-10, "{}", sum * h);
}

#[test]
fn degenerate_moments_are_domain_errors() {
    let m = unit_moments(0.3);
    let flat = MomentSummary { sigma2: 0.0, ..m };
    assert!(matches!(edgeworth_q(0.0, &flat), Err(Error::Domain(_))));
    assert!(matches!(limit_curve(0.0, &flat, 0.1), Err(Error::Domain(_))));
}

#[test]
fn limit_curve_examples() {
    let m = MomentSummary { mu: 0.0, sigma2: 0.04, mu3: 0.0, support: Vec::new() };
    assert!((limit_curve(0.0f64, &m, 0.5).unwrap() + 0.997_355_701_003_581_7).abs() < 1e-12);
    for i in -30..=30 {
        assert_eq!(limit_curve(i as f64 * 0.2, &m, 0.0).unwrap(), 0.0);
    }
    let skew = unit_moments(0.8);
    assert!(limit_curve(40.0, &skew, 0.5).unwrap().abs() < 1e-300);
    assert!(limit_curve(-40.0, &skew, 0.5).unwrap().abs() < 1e-300);
}

#[test]
fn offspring_ratio_series_match_oracle() {
    let cases = [
        (OffspringLaw::ShiftedPoisson { lambda: 1.0 }, 2.0, 1.25),
        (OffspringLaw::ShiftedPoisson { lambda: 0.5 }, 2.5, 1.456_045_405_889_310_4),
        (OffspringLaw::ShiftedGeometric { q: 0.5 }, 2.0, 1.5),
        (OffspringLaw::ShiftedGeometric { q: 0.3 }, 1.5, 1.230_152_024_327_635_2),
    ];
    for (law, p, want) in cases {
        let got = offspring_ratio_moment(&law, p).unwrap();
        assert!(rel_close(got, want, 1e-11), "{law:?} p={p}: {got} vs {want}");
    }
}

#[test]
fn hypothesis_report_on_reference_environments() {
    let env = EnvironmentModel::reference_a();
    let rep = hypothesis_report(&env, 2.0, 2.0, 3.0).unwrap();
    for name in ["E(log m_0)^3", "E(Y_0/m_0)^2", "E(E_xi(X_0/m_0)^2)^2", "sigma > 0"] {
        assert!(rep.get(name).unwrap().passed, "{name}");
    }
    let y = rep.get("E(Y_0/m_0)^2").unwrap().value.unwrap();
    // Poisson(1): E Y^2 = 2, so 0.5 (2/4) + 0.5 (2/9)
    assert!(rel_close(y, 0.5 * 0.5 + 0.5 * 2.0 / 9.0, 1e-11), "{y}");
    let x = rep.get("E(E_xi(X_0/m_0)^2)^2").unwrap().value.unwrap();
    let (a, b) = (1.25, offspring_ratio_moment(&OffspringLaw::ShiftedPoisson { lambda: 2.0 }, 2.0).unwrap());
    assert!(rel_close(x, 0.5 * a * a + 0.5 * b * b, 1e-12));

    let bare = env.without_immigration();
    let rep = hypothesis_report(&bare, 2.0, 2.0, 3.0).unwrap();
    assert_eq!(rep.get("E(Y_0/m_0)^2").unwrap().value, Some(0.0));
    assert!(!rep.get("non-lattice heuristic").unwrap().detail.is_empty());
}

#[test]
fn hypothesis_report_rejects_bad_orders() {
    let env = EnvironmentModel::reference_a();
    assert!(hypothesis_report(&env, 1.0, 2.0, 3.0).is_err());
    assert!(hypothesis_report(&env, 2.0, 0.0, 3.0).is_err());
    assert!(hypothesis_report(&env, 2.0, 2.0, 2.5).is_err());
}
