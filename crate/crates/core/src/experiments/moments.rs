use std::collections::BTreeMap;
use std::time::Instant;

use super::{admit_horizon, time_label, Aggregate, Check, ExperimentReport, ReplicateRecord};
use crate::engine::{run_many, stream_key, ReplicateSpec, ReplicateStatus};
use crate::error::{invalid, Result};
use crate::kernel::survival_probability;
use crate::model::{IntervalSet, ModelParams};
use crate::oracle::{
    expected_count, expected_count_asymptotic, mean_one_check, second_moment_exact, spine_second_moment_mc,
};
use crate::stats::mean_stderr;

#[derive(Debug, Clone)]
pub struct MomentsConfig {
    pub x0: f64,
    pub times: Vec<f64>,
    /// Sets whose expected counts are reported next to `(0, inf)`.
    pub sets: Vec<IntervalSet<f64>>,
    /// Engine replicates for the Monte Carlo comparison; 0 skips it.
    pub replicates: usize,
    /// Two-spine samples per time; 0 skips the spine estimate.
    pub spine_samples: usize,
    pub seed: u64,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            x0: 1.0,
            times: vec![1.0],
            sets: Vec::new(),
            replicates: 0,
            spine_samples: 0,
            seed: 0,
        }
    }
}

/// Oracle moments at each time, optionally compared with engine and
/// two-spine Monte Carlo estimates.
pub fn experiment_moments(params: &ModelParams<f64>, cfg: &MomentsConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    if cfg.times.is_empty() || cfg.times.windows(2).any(|w| w[0] >= w[1]) || cfg.times[0] <= 0.0 {
        return Err(invalid("times", "need positive, strictly increasing times"));
    }
    let mut report = ExperimentReport::new("moments", params);
    report.setting("x0", cfg.x0);
    report.setting("times", format!("{:?}", cfg.times));
    report.setting("replicates", cfg.replicates);
    report.setting("spine_samples", cfg.spine_samples);
    report.setting("seed", cfg.seed);
    for (i, b) in cfg.sets.iter().enumerate() {
        report.setting(&format!("B{}", i + 1), b);
    }
    let positive = IntervalSet::positive();
    let mut sets = vec![positive.clone()];
    sets.extend(cfg.sets.iter().cloned());
    let x = cfg.x0;

    for &t in &cfg.times {
        let at = time_label(t);
        report.aggregates.push(Aggregate::exact("survival_probability", at.clone(), survival_probability(x, t, params)));
        report.aggregates.push(Aggregate::exact("mean_one_check", at.clone(), mean_one_check(x, t, params)?));
        for b in &sets {
            let label = format!("B={b} {at}");
            report.aggregates.push(Aggregate::exact("expected_count", label.clone(), expected_count(x, t, b, params)?));
            report.aggregates.push(Aggregate::exact(
                "expected_count_asymptotic",
                label,
                expected_count_asymptotic(x, t, b, params),
            ));
        }
        let m2 = second_moment_exact(x, t, params)?;
        let m1 = expected_count(x, t, &positive, params)?;
        report.aggregates.push(Aggregate::exact("second_moment_exact", at.clone(), m2.total()));
        report.aggregates.push(Aggregate::exact("second_moment_pairs", at.clone(), m2.pairs));
        report.checks.push(Check::new(
            format!("cauchy-schwarz[{at}]"),
            m2.total() >= m1 * m1,
            m2.total(),
            m1 * m1,
            "E|N_t|^2 >= (E|N_t|)^2",
        ));
    }

    if cfg.spine_samples > 0 {
        for (j, &t) in cfg.times.iter().enumerate() {
            let at = time_label(t);
            let e = spine_second_moment_mc(x, t, &positive, &positive, params, cfg.spine_samples, stream_key(cfg.seed, 1 << 32 | j as u64))?;
            let exact = second_moment_exact(x, t, params)?.total();
            report.aggregates.push(Aggregate::new("spine_second_moment", at.clone(), e));
            report
                .checks
                .push(Check::within_sigma(format!("spine-vs-exact[{at}]"), &e, exact, 3.0));
        }
    }

    if cfg.replicates > 0 {
        let horizon = *cfg.times.last().expect("non-empty");
        if !admit_horizon(&mut report, params, x, horizon)? {
            return Ok(report);
        }
        let spec = ReplicateSpec::new(x, horizon, cfg.times.clone());
        let rows = run_many(params, &spec, cfg.seed, cfg.replicates, |_, out| {
            let counts: Vec<Vec<usize>> = out
                .censuses
                .iter()
                .map(|c| sets.iter().map(|b| c.count(b)).collect())
                .collect();
            (out.status, counts, out.events.steps)
        })?;
        report.events = rows.iter().map(|r| r.2).sum();
        for (i, (status, counts, _)) in rows.iter().enumerate() {
            let mut values = BTreeMap::new();
            for (j, &t) in cfg.times.iter().enumerate() {
                if let Some(c) = counts.get(j) {
                    values.insert(format!("alive_{t}"), c[0] as f64);
                }
            }
            report.replicates.push(ReplicateRecord {
                replicate: i,
                status: *status,
                values,
            });
        }
        let done: Vec<_> = rows.iter().filter(|r| r.0 == ReplicateStatus::Completed).collect();
        let aborted = rows.len() - done.len();
        report.aggregates.push(Aggregate::exact("aborted", "all", aborted as f64));
        report.checks.push(Check::new("replicates-completed", aborted == 0, aborted as f64, 0.0, "aborted replicates"));
        for (j, &t) in cfg.times.iter().enumerate() {
            let at = time_label(t);
            for (k, b) in sets.iter().enumerate() {
                let label = format!("B={b} {at}");
                let e = mean_stderr(&done.iter().map(|r| r.1[j][k] as f64).collect::<Vec<_>>());
                let target = expected_count(x, t, b, params)?;
                report.aggregates.push(Aggregate::new("engine_mean_count", label.clone(), e));
                report
                    .checks
                    .push(Check::within_sigma(format!("many-to-one[{label}]"), &e, target, 3.0));
            }
            let sq = mean_stderr(&done.iter().map(|r| (r.1[j][0] as f64).powi(2)).collect::<Vec<_>>());
            let exact = second_moment_exact(x, t, params)?.total();
            report.aggregates.push(Aggregate::new("engine_second_moment", at.clone(), sq));
            report
                .checks
                .push(Check::within_sigma(format!("many-to-two[{at}]"), &sq, exact, 3.0));
        }
    }
    report.wall_clock = start.elapsed();
    Ok(report)
}
