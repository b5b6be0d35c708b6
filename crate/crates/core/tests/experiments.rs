//! Experiment-level contracts on reduced sample sizes, the frozen fixture
//! file, and byte-level reproducibility of reports.

use bbm_core::experiments::*;
use bbm_core::model::{IntervalSet, ModelParams};
use bbm_core::oracle::{truncated_second_moment_bound, truncated_second_moment_shape};

fn supercritical() -> ModelParams {
    ModelParams::dyadic(1.0, 1.5).unwrap()
}

#[test]
fn frozen_thresholds_parse() {
    let t = Thresholds::parse(THRESHOLDS_TOML).unwrap();
    assert_eq!(t, Thresholds::frozen());
    assert!(t.kesten.median_final_max > 0.0 && t.qsd.median_ks_final_max > 0.0);
    assert!(t.bound.constants().c >= 1.0);
    assert!(Thresholds::parse("version = 1").is_err());
}

#[test]
fn reports_are_byte_reproducible() {
    let p = supercritical();
    let cfg = KestenConfig {
        replicates: 50,
        horizon: 4.0,
        compare_time: 2.0,
        seed: 12,
        ..KestenConfig::default()
    };
    let a = serde_json::to_string(&experiment_kesten(&p, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&experiment_kesten(&p, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_string(&experiment_kesten(&p, &KestenConfig { seed: 13, ..cfg }).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn kesten_partition_is_exact() {
    let p = supercritical();
    let cfg = KestenConfig {
        sets: vec!["0.5,1;2,inf".parse().unwrap(), IntervalSet::above(1.0).unwrap()],
        replicates: 200,
        horizon: 4.0,
        compare_time: 2.0,
        seed: 3,
        ..KestenConfig::default()
    };
    let r = experiment_kesten(&p, &cfg).unwrap();
    assert!(r.check("partition-additivity").unwrap().passed);
    assert!(r.checks.iter().filter(|c| c.name.starts_with("total-unbiased")).all(|c| c.passed));
}

#[test]
fn martingale_contracts_at_reduced_size() {
    let r = experiment_martingale(
        &supercritical(),
        &MartingaleConfig {
            replicates: 2000,
            seed: 8,
            ..MartingaleConfig::default()
        },
    )
    .unwrap();
    for name in ["d0-is-one", "extinct-contribute-zero", "tail-mass-nonincreasing"] {
        assert!(r.check(name).unwrap().passed, "{name}");
    }
    assert!(r.checks.iter().filter(|c| c.name.starts_with("mean-one")).all(|c| c.passed));
}

#[test]
fn qsd_starts_at_the_point_mass_distance() {
    let p = supercritical();
    let r = experiment_empirical_qsd(
        &p,
        &QsdConfig {
            horizon: 2.0,
            replicates: 40,
            seed: 2,
            ..QsdConfig::default()
        },
    )
    .unwrap();
    assert!(r.check("initial-distance").unwrap().passed);
    let f = p.nu_cdf(1.0);
    let d0 = r.aggregate("median_ks", "t=0").unwrap().value;
    assert!((d0 - f.max(1.0 - f)).abs() < 1e-15);
}

#[test]
fn truncation_structure_holds() {
    let r = experiment_truncation(
        &supercritical(),
        &TruncationConfig {
            replicates: 300,
            horizon: 3.0,
            seed: 5,
            ..TruncationConfig::default()
        },
    )
    .unwrap();
    for name in ["gaps-nonincreasing-per-replicate", "mean-gaps-nonincreasing", "vacuous-window"] {
        assert!(r.check(name).unwrap().passed, "{name}");
    }
}

#[test]
fn truncated_second_moment_stays_under_frozen_bound() {
    let p = supercritical();
    let constants = Thresholds::frozen().bound.constants();
    let (x, t, s, m) = (1.0, 6.0, 1.0, 3.0);
    let bound = truncated_second_moment_bound(x, t, s, m, &p, &constants).unwrap();
    let e = truncated_second_moment_mc(&p, x, t, s, m, 0.25, 20_000, 99).unwrap();
    assert!(e.mean <= bound, "{} +- {} vs bound {bound}", e.mean, e.stderr);
    // the bound is not vacuous: within an order of magnitude
    assert!(e.mean > bound / 10.0);
    assert!((bound / truncated_second_moment_shape(x, t, s, &p) - constants.c).abs() < 1e-12);
}

#[test]
fn phase_diagram_defaults_pass() {
    let r = experiment_phase_diagram(&PhaseConfig::default()).unwrap();
    assert!(r.passed(), "{:?}", r.failed_checks().collect::<Vec<_>>());
}

#[test]
fn infeasible_horizon_is_reported_not_run() {
    let r = experiment_martingale(
        &ModelParams::dyadic(1.0, 3.0).unwrap(),
        &MartingaleConfig {
            horizons: vec![1.0, 30.0],
            replicates: 10,
            ..MartingaleConfig::default()
        },
    )
    .unwrap();
    assert!(r.infeasible.is_some());
    assert!(!r.passed());
    assert_eq!(r.events, 0);
}

#[test]
fn schedule_reports_turning_point() {
    let s = tk_schedule(20_000, 1.0, Some(supercritical().growth_exponent())).unwrap();
    assert!(s.increasing);
    assert!(s.gaps_decreasing_from.is_some());
    assert!((s.entries[0].t_tilde - 0.025_600_863_289_563_12).abs() < 1e-16);
}
