//! Pilot runs that produce the regression thresholds in
//! `fixtures/thresholds.toml`. Each ceiling is the mean of the pilot
//! statistic over `pilot_runs` seeds plus four of its seed-to-seed standard
//! deviations, so that a rerun on a fresh seed passes with high probability
//! while a real regression does not.
//!
//! Run with `cargo run --release -p bbm-core --example pilot`.

use bbm_core::experiments::*;
use bbm_core::model::ModelParams;
use bbm_core::oracle::truncated_second_moment_shape;

/// Runs `stat` on each pilot seed and prints the spread and the ceiling.
fn ceiling(label: &str, base: u64, runs: u64, stat: impl Fn(u64) -> bbm_core::Result<f64>) -> bbm_core::Result<()> {
    let values = (base..base + runs).map(&stat).collect::<bbm_core::Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("[{label}] mean {mean:.4} sd {sd:.4} max {max:.4} over {runs} seeds -> ceiling {:.4}", mean + 4.0 * sd);
    Ok(())
}

fn main() -> bbm_core::Result<()> {
    let frozen = Thresholds::frozen();
    let p = ModelParams::dyadic(1.0, 1.5)?;

    let k = &frozen.kesten;
    ceiling("kesten median_final", k.pilot_seed, k.pilot_runs, |seed| {
        let cfg = KestenConfig {
            seed,
            replicates: k.pilot_replicates,
            median_final_max: f64::INFINITY,
            ..KestenConfig::default()
        };
        let r = experiment_kesten(&p, &cfg)?;
        Ok(r.aggregates.iter().find(|a| a.name == "median_abs_error" && a.at.ends_with("t=10")).unwrap().value)
    })?;

    let q = &frozen.qsd;
    ceiling("qsd median_ks_final", q.pilot_seed, q.pilot_runs, |seed| {
        let cfg = QsdConfig {
            seed,
            replicates: q.pilot_replicates,
            median_ks_final_max: f64::INFINITY,
            ..QsdConfig::default()
        };
        Ok(experiment_empirical_qsd(&p, &cfg)?.aggregate("median_ks", "t=12").unwrap().value)
    })?;

    let m = &frozen.martingale;
    ceiling("martingale small_d_fraction", m.pilot_seed, m.pilot_runs, |seed| {
        let cfg = MartingaleConfig {
            seed,
            replicates: m.pilot_replicates,
            small_d_fraction_max: f64::INFINITY,
            ..MartingaleConfig::default()
        };
        Ok(experiment_martingale(&p, &cfg)?.aggregate("small_d_fraction_given_alive", "t=6").unwrap().value)
    })?;

    let t = experiment_truncation(
        &p,
        &TruncationConfig {
            seed: frozen.truncation.pilot_seed,
            replicates: frozen.truncation.pilot_replicates,
            ..TruncationConfig::default()
        },
    )?;
    for a in &t.aggregates {
        println!("[truncation] {} {} = {} +- {}", a.name, a.at, a.value, a.stderr);
    }
    println!("[truncation] ({:?})", t.wall_clock);

    let (x, tt, s, mm) = (1.0, 6.0, 1.0, 3.0);
    let e = truncated_second_moment_mc(&p, x, tt, s, mm, 0.25, frozen.bound.pilot_replicates, frozen.bound.pilot_seed)?;
    let shape = truncated_second_moment_shape(x, tt, s, &p);
    let ratio = e.mean / shape;
    println!(
        "[bound] E|N~|^2 = {} +- {}, shape = {shape}, ratio = {ratio} -> c = {:.4}",
        e.mean,
        e.stderr,
        (e.mean + 3.0 * e.stderr) / shape
    );
    Ok(())
}
