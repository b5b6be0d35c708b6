use std::collections::BTreeMap;
use std::time::Instant;

use super::{
    admit_horizon, require_replicates, require_supercritical, Aggregate, Check, ExperimentReport, ReplicateRecord,
};
use crate::engine::{additive_martingale, run_many, truncated_martingale, ReplicateSpec, ReplicateStatus};
use crate::error::{invalid, Result};
use crate::model::{IntervalSet, ModelParams};
use crate::oracle::expected_count;
use crate::stats::{mean_stderr, quadratic_fit};

#[derive(Debug, Clone)]
pub struct TruncationConfig {
    pub x0: f64,
    pub horizon: f64,
    /// Spacing of the census times at which the window is checked, on top
    /// of every branch event.
    pub check_dt: f64,
    /// Window sizes, increasing.
    pub m_list: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub log_fit_r2_min: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            x0: 1.0,
            horizon: 6.0,
            check_dt: 0.25,
            m_list: vec![1.0, 2.0, 3.0, 4.0],
            replicates: 2000,
            seed: 0,
            log_fit_r2_min: super::Thresholds::frozen().truncation.log_fit_r2_min,
        }
    }
}

// A window this wide is never left at desk scale.
const VACUOUS_M: f64 = 1e9;

/// Gap between the full and the `M`-truncated populations at the horizon,
/// for each `M`: `E|D_t - D~_t^M|` and `E(|N_t| - |N~_t^M|) / E|N_t|`.
pub fn experiment_truncation(params: &ModelParams<f64>, cfg: &TruncationConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    require_supercritical(params)?;
    require_replicates(cfg.replicates)?;
    if cfg.m_list.len() < 3 || cfg.m_list.windows(2).any(|w| w[0] >= w[1]) || cfg.m_list[0] <= 0.0 {
        return Err(invalid("m_list", "need at least three positive, increasing window sizes"));
    }
    let mut report = ExperimentReport::new("truncation", params);
    report.setting("x0", cfg.x0);
    report.setting("horizon", cfg.horizon);
    report.setting("check_dt", cfg.check_dt);
    report.setting("m_list", format!("{:?}", cfg.m_list));
    report.setting("replicates", cfg.replicates);
    report.setting("seed", cfg.seed);
    if !admit_horizon(&mut report, params, cfg.x0, cfg.horizon)? {
        return Ok(report);
    }
    let spec = ReplicateSpec::with_step(cfg.x0, cfg.horizon, cfg.check_dt);
    let all = IntervalSet::positive();
    let mut ms = cfg.m_list.clone();
    ms.push(VACUOUS_M);
    let rows = run_many(params, &spec, cfg.seed, cfg.replicates, |_, out| {
        let Some(last) = out.censuses.last() else {
            return (out.status, Vec::new(), Vec::new(), out.events.steps);
        };
        let d = additive_martingale(last, params, cfg.x0);
        let n = last.alive() as f64;
        let d_gaps = ms.iter().map(|&m| d - truncated_martingale(last, params, cfg.x0, m)).collect();
        let n_gaps = ms.iter().map(|&m| n - last.truncated_count_at(m, &all) as f64).collect();
        (out.status, d_gaps, n_gaps, out.events.steps)
    })?;
    report.events = rows.iter().map(|r| r.3).sum();
    let done: Vec<_> = rows.iter().filter(|r| r.0 == ReplicateStatus::Completed).collect();
    let aborted = rows.len() - done.len();
    let mean_count = expected_count(cfg.x0, cfg.horizon, &all, params)?;

    for (i, (status, dg, ng, _)) in rows.iter().enumerate() {
        let mut values = BTreeMap::new();
        for (k, &m) in cfg.m_list.iter().enumerate() {
            if let (Some(&a), Some(&b)) = (dg.get(k), ng.get(k)) {
                values.insert(format!("d_gap_m{m}"), a);
                values.insert(format!("n_gap_m{m}"), b);
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

    let k_max = cfg.m_list.len();
    let pointwise = done.iter().all(|r| {
        (1..k_max).all(|k| r.1[k] <= r.1[k - 1] + 1e-12 * r.1[k - 1].abs() && r.2[k] <= r.2[k - 1])
            && r.1.iter().chain(&r.2).all(|&g| g >= -1e-12)
    });
    report.checks.push(Check::new(
        "gaps-nonincreasing-per-replicate",
        pointwise,
        pointwise as u8 as f64,
        1.0,
        "both gaps are nonnegative and nonincreasing in M on every replicate",
    ));
    let mut d_means = Vec::with_capacity(k_max);
    let mut n_means = Vec::with_capacity(k_max);
    for (k, &m) in cfg.m_list.iter().enumerate() {
        let d = mean_stderr(&done.iter().map(|r| r.1[k]).collect::<Vec<_>>());
        let n = mean_stderr(&done.iter().map(|r| r.2[k] / mean_count).collect::<Vec<_>>());
        report.aggregates.push(Aggregate::new("d_gap", format!("M={m}"), d));
        report.aggregates.push(Aggregate::new("relative_count_gap", format!("M={m}"), n));
        d_means.push(d.mean);
        n_means.push(n.mean);
    }
    let monotone = d_means.windows(2).all(|w| w[1] <= w[0]) && n_means.windows(2).all(|w| w[1] <= w[0]);
    report.checks.push(Check::new(
        "mean-gaps-nonincreasing",
        monotone,
        monotone as u8 as f64,
        1.0,
        "E|D - D~^M| and the relative count gap are nonincreasing in M",
    ));
    let vacuous = done.iter().all(|r| r.1[k_max] == 0.0 && r.2[k_max] == 0.0);
    report.checks.push(Check::new(
        "vacuous-window",
        vacuous,
        vacuous as u8 as f64,
        1.0,
        format!("no particle leaves the window for M={VACUOUS_M:e}"),
    ));

    let (xs, ys): (Vec<f64>, Vec<f64>) = cfg
        .m_list
        .iter()
        .zip(&d_means)
        .filter(|(_, &g)| g > 0.0)
        .map(|(&m, &g)| (m, g.ln()))
        .unzip();
    match quadratic_fit(&xs, &ys) {
        Some((coef, r2)) => {
            report.aggregates.push(Aggregate::exact("log_gap_fit_r2", "d_gap", r2));
            report.aggregates.push(Aggregate::exact("log_gap_fit_quadratic", "d_gap", coef[2]));
            report.aggregates.push(Aggregate::exact("log_gap_fit_linear", "d_gap", coef[1]));
            report.checks.push(Check::new(
                "log-gap-quadratic-fit",
                r2 > cfg.log_fit_r2_min,
                r2,
                cfg.log_fit_r2_min,
                "R^2 of ln E|D - D~^M| against a quadratic in M",
            ));
            report.checks.push(Check::new(
                "log-gap-concave",
                coef[2] < 0.0,
                coef[2],
                0.0,
                "quadratic coefficient of the log-gap fit is negative",
            ));
        }
        None => report.checks.push(Check::new(
            "log-gap-quadratic-fit",
            false,
            xs.len() as f64,
            3.0,
            "fewer than three window sizes with a positive gap",
        )),
    }
    report.wall_clock = start.elapsed();
    Ok(report)
}

/// Monte Carlo estimate of `E|N~_t^{M,s}|^2`, the second moment of the
/// `s`-shifted `M`-truncated population, with the window checked at
/// multiples of `check_dt` and at every branch event.
#[allow(clippy::too_many_arguments)]
pub fn truncated_second_moment_mc(
    params: &ModelParams<f64>,
    x0: f64,
    t: f64,
    s: f64,
    m: f64,
    check_dt: f64,
    replicates: usize,
    seed: u64,
) -> Result<crate::stats::Estimate> {
    require_replicates(replicates)?;
    let spec = ReplicateSpec::with_step(x0, t, check_dt).record_paths(s != 0.0);
    let all = IntervalSet::positive();
    let last = spec.census_grid.len() - 1;
    let squares = run_many(params, &spec, seed, replicates, |_, out| {
        if !out.completed() {
            return Ok(None);
        }
        let n = out.shifted_truncated_count(last, m, s, &all)? as f64;
        Ok(Some(n * n))
    })?
    .into_iter()
    .collect::<Result<Vec<Option<f64>>>>()?;
    if squares.iter().any(Option::is_none) {
        return Err(invalid("replicates", "a replicate hit the event cap"));
    }
    let v: Vec<f64> = squares.into_iter().flatten().collect();
    Ok(mean_stderr(&v))
}
