use std::collections::BTreeMap;
use std::time::Instant;

use super::{
    admit_horizon, require_replicates, require_supercritical, time_label, Aggregate, Check, ExperimentReport,
    ReplicateRecord,
};
use crate::engine::{run_many, ReplicateSpec, ReplicateStatus};
use crate::error::{invalid, Result};
use crate::model::ModelParams;
use crate::stats::{ks_statistic_sorted, median};

#[derive(Debug, Clone)]
pub struct QsdConfig {
    pub x0: f64,
    pub horizon: f64,
    pub census_dt: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Frozen ceiling for the final-census median KS distance.
    pub median_ks_final_max: f64,
}

impl Default for QsdConfig {
    fn default() -> Self {
        Self {
            x0: 1.0,
            horizon: 12.0,
            census_dt: 1.0,
            replicates: 500,
            seed: 0,
            median_ks_final_max: super::Thresholds::frozen().qsd.median_ks_final_max,
        }
    }
}

/// Kolmogorov–Smirnov distance between the empirical law of the alive
/// particles and `nu` at every census, over replicates alive at the horizon.
pub fn experiment_empirical_qsd(params: &ModelParams<f64>, cfg: &QsdConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    require_supercritical(params)?;
    require_replicates(cfg.replicates)?;
    let mut report = ExperimentReport::new("empirical-qsd", params);
    report.setting("x0", cfg.x0);
    report.setting("horizon", cfg.horizon);
    report.setting("census_dt", cfg.census_dt);
    report.setting("replicates", cfg.replicates);
    report.setting("seed", cfg.seed);
    if !admit_horizon(&mut report, params, cfg.x0, cfg.horizon)? {
        return Ok(report);
    }
    let spec = ReplicateSpec::with_step(cfg.x0, cfg.horizon, cfg.census_dt);
    let grid = spec.census_grid.clone();
    if grid.len() < 3 {
        return Err(invalid("census_dt", "need at least three census times"));
    }
    let rows = run_many(params, &spec, cfg.seed, cfg.replicates, |_, out| {
        let ks: Vec<Option<f64>> = out
            .censuses
            .iter()
            .map(|c| {
                if c.extinct() {
                    return None;
                }
                let mut v = c.positions.clone();
                v.sort_by(f64::total_cmp);
                Some(ks_statistic_sorted(&v, |a| params.nu_cdf(a)))
            })
            .collect();
        (out.status, ks, out.events.steps)
    })?;
    report.events = rows.iter().map(|r| r.2).sum();
    let last = grid.len() - 1;
    let survivors: Vec<&Vec<Option<f64>>> = rows
        .iter()
        .filter(|r| r.0 == ReplicateStatus::Completed && r.1[last].is_some())
        .map(|r| &r.1)
        .collect();
    for (i, (status, ks, _)) in rows.iter().enumerate() {
        let mut values = BTreeMap::new();
        if let Some(Some(d)) = ks.last() {
            values.insert("ks_final".into(), *d);
        }
        report.replicates.push(ReplicateRecord {
            replicate: i,
            status: *status,
            values,
        });
    }
    let aborted = rows.iter().filter(|r| r.0 != ReplicateStatus::Completed).count();
    report.aggregates.push(Aggregate::exact("aborted", "all", aborted as f64));
    report.aggregates.push(Aggregate::exact(
        "surviving_fraction",
        time_label(grid[last]),
        survivors.len() as f64 / rows.len() as f64,
    ));
    report.checks.push(Check::new("replicates-completed", aborted == 0, aborted as f64, 0.0, "aborted replicates"));
    if survivors.is_empty() {
        report.checks.push(Check::new(
            "survivors",
            false,
            0.0,
            1.0,
            "no replicate survived to the horizon; raise r or x0",
        ));
        report.wall_clock = start.elapsed();
        return Ok(report);
    }

    let medians: Vec<f64> = (0..grid.len())
        .map(|j| {
            let ds: Vec<f64> = survivors.iter().filter_map(|ks| ks[j]).collect();
            report.aggregates.push(Aggregate::median("median_ks", time_label(grid[j]), &ds));
            median(&ds)
        })
        .collect();

    // A point mass at x0 is at KS distance max(F(x0), 1 - F(x0)) from nu.
    if grid[0] == 0.0 {
        let f = params.nu_cdf(cfg.x0);
        let expected = f.max(1.0 - f);
        let worst = survivors
            .iter()
            .filter_map(|ks| ks[0])
            .map(|d| (d - expected).abs())
            .fold(0.0, f64::max);
        report.checks.push(Check::new(
            "initial-distance",
            worst <= 1e-15,
            worst,
            1e-15,
            format!("t=0 KS distance equals {expected}"),
        ));
    }
    let tail = &medians[medians.len() - 3..];
    report.checks.push(Check::new(
        "median-ks-decreasing",
        tail[0] > tail[1] && tail[1] > tail[2],
        tail[2],
        tail[1],
        format!("medians over the last three censuses: {tail:?}"),
    ));
    report
        .checks
        .push(Check::at_most("median-ks-final", medians[last], cfg.median_ks_final_max));
    report.wall_clock = start.elapsed();
    Ok(report)
}
