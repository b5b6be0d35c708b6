use std::collections::BTreeMap;
use std::time::Instant;

use super::{
    admit_horizon, require_replicates, require_supercritical, time_label, Aggregate, Check, ExperimentReport,
    ReplicateRecord,
};
use crate::engine::{run_many, ReplicateSpec, ReplicateStatus};
use crate::error::{invalid, Result};
use crate::model::ModelParams;
use crate::stats::mean_stderr;

#[derive(Debug, Clone)]
pub struct MartingaleConfig {
    pub x0: f64,
    /// Census times, increasing.
    pub horizons: Vec<f64>,
    /// Levels `K` of the tail-mass probe `E[D 1{D > K}]`.
    pub k_list: Vec<f64>,
    /// `D` below this counts as degenerate on survival.
    pub small_d: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Frozen ceiling for the degenerate fraction among survivors.
    pub small_d_fraction_max: f64,
}

impl Default for MartingaleConfig {
    fn default() -> Self {
        Self {
            x0: 1.0,
            horizons: vec![1.0, 3.0, 6.0],
            k_list: vec![1.0, 2.0, 5.0, 10.0, 100.0],
            small_d: 0.01,
            replicates: 10_000,
            seed: 0,
            small_d_fraction_max: super::Thresholds::frozen().martingale.small_d_fraction_max,
        }
    }
}

/// Mean-one, uniform-integrability and positivity probes of the additive
/// martingale `D_t`.
pub fn experiment_martingale(params: &ModelParams<f64>, cfg: &MartingaleConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    require_supercritical(params)?;
    require_replicates(cfg.replicates)?;
    if cfg.horizons.is_empty() || cfg.horizons.windows(2).any(|w| w[0] >= w[1]) || cfg.horizons[0] <= 0.0 {
        return Err(invalid("horizons", "need positive, strictly increasing times"));
    }
    let mut report = ExperimentReport::new("martingale", params);
    report.setting("x0", cfg.x0);
    report.setting("horizons", format!("{:?}", cfg.horizons));
    report.setting("k_list", format!("{:?}", cfg.k_list));
    report.setting("small_d", cfg.small_d);
    report.setting("replicates", cfg.replicates);
    report.setting("seed", cfg.seed);
    let horizon = *cfg.horizons.last().expect("non-empty");
    if !admit_horizon(&mut report, params, cfg.x0, horizon)? {
        return Ok(report);
    }
    let mut grid = vec![0.0];
    grid.extend_from_slice(&cfg.horizons);
    let spec = ReplicateSpec::new(cfg.x0, horizon, grid.clone());
    let rows = run_many(params, &spec, cfg.seed, cfg.replicates, |_, out| {
        let d: Vec<f64> = out.trace.entries.iter().map(|e| e.d).collect();
        let alive: Vec<usize> = out.trace.entries.iter().map(|e| e.alive).collect();
        (out.status, d, alive, out.events.steps)
    })?;
    report.events = rows.iter().map(|r| r.3).sum();
    let done: Vec<_> = rows.iter().filter(|r| r.0 == ReplicateStatus::Completed).collect();
    let aborted = rows.len() - done.len();
    for (i, (status, d, alive, _)) in rows.iter().enumerate() {
        let mut values = BTreeMap::new();
        for (j, &t) in grid.iter().enumerate().skip(1) {
            if let (Some(&dv), Some(&a)) = (d.get(j), alive.get(j)) {
                values.insert(format!("d_{t}"), dv);
                values.insert(format!("alive_{t}"), a as f64);
            }
        }
        report.replicates.push(ReplicateRecord {
            replicate: i,
            status: *status,
            values,
        });
    }
    report.aggregates.push(Aggregate::exact("aborted", "all", aborted as f64));
    report.checks.push(Check::new("replicates-completed", aborted == 0, aborted as f64, 0.0, "aborted replicates"));

    let start_ok = done.iter().all(|r| r.1[0] == 1.0);
    report.checks.push(Check::new("d0-is-one", start_ok, start_ok as u8 as f64, 1.0, "D_0 = 1 exactly"));

    for (j, &t) in grid.iter().enumerate().skip(1) {
        let ds: Vec<f64> = done.iter().map(|r| r.1[j]).collect();
        let e = mean_stderr(&ds);
        report.aggregates.push(Aggregate::new("mean_d", time_label(t), e));
        report
            .checks
            .push(Check::within_sigma(format!("mean-one[{}]", time_label(t)), &e, 1.0, 3.0));
        if j > 1 {
            let inc: Vec<f64> = done.iter().map(|r| r.1[j] - r.1[j - 1]).collect();
            let e = mean_stderr(&inc);
            let at = format!("{}..{}", time_label(grid[j - 1]), time_label(t));
            report.aggregates.push(Aggregate::new("mean_increment", at.clone(), e));
            report
                .checks
                .push(Check::within_sigma(format!("increment-zero[{at}]"), &e, 0.0, 3.0));
        }
    }

    let extinct_zero = done
        .iter()
        .all(|r| r.2.iter().zip(&r.1).all(|(&a, &d)| a > 0 || d == 0.0));
    report.checks.push(Check::new(
        "extinct-contribute-zero",
        extinct_zero,
        extinct_zero as u8 as f64,
        1.0,
        "D_t = 0 exactly whenever |N_t| = 0",
    ));

    let last = grid.len() - 1;
    let d_last: Vec<f64> = done.iter().map(|r| r.1[last]).collect();
    let mut k_sorted = cfg.k_list.clone();
    k_sorted.sort_by(f64::total_cmp);
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    for &k in &k_sorted {
        let tail: Vec<f64> = d_last.iter().map(|&d| if d > k { d } else { 0.0 }).collect();
        let e = mean_stderr(&tail);
        report
            .aggregates
            .push(Aggregate::new("tail_mass", format!("K={k} {}", time_label(horizon)), e));
        monotone &= e.mean <= prev;
        prev = e.mean;
    }
    report.checks.push(Check::new(
        "tail-mass-nonincreasing",
        monotone,
        monotone as u8 as f64,
        1.0,
        "E[D 1{D > K}] nonincreasing in K at the largest horizon",
    ));

    let survivors: Vec<f64> = done.iter().filter(|r| r.2[last] > 0).map(|r| r.1[last]).collect();
    let extinct = done.len() - survivors.len();
    report.aggregates.push(Aggregate::new(
        "extinct_fraction",
        time_label(horizon),
        mean_stderr(&done.iter().map(|r| (r.2[last] == 0) as u8 as f64).collect::<Vec<_>>()),
    ));
    let small: Vec<f64> = survivors.iter().map(|&d| (d < cfg.small_d) as u8 as f64).collect();
    let frac = mean_stderr(&small);
    report
        .aggregates
        .push(Aggregate::new("small_d_fraction_given_alive", time_label(horizon), frac));
    report.aggregates.push(Aggregate::exact("extinct", time_label(horizon), extinct as f64));
    if !survivors.is_empty() {
        report.checks.push(Check::at_most(
            "small-d-given-alive",
            frac.mean,
            cfg.small_d_fraction_max,
        ));
    }
    report.wall_clock = start.elapsed();
    Ok(report)
}
