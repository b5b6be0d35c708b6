//! One function per subcommand. Each runs its experiment, writes the
//! output files and reports whether every contract passed.

use std::collections::BTreeMap;

use bbm_core::engine::{additive_martingale, flagged_martingale, run_many, ReplicateSpec, ReplicateStatus};
use bbm_core::experiments::{
    experiment_empirical_qsd, experiment_kesten, experiment_martingale, experiment_moments,
    experiment_phase_diagram, experiment_truncation, tk_schedule, verify_samplers, Aggregate, ExperimentReport,
    KestenConfig, MartingaleConfig, MomentsConfig, PhaseConfig, QsdConfig, ReplicateRecord, TruncationConfig,
    VerifyConfig,
};
use bbm_core::model::OffspringLaw;
use bbm_core::stats::mean_stderr;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{fmt17, summary_row, OutputDir, SUMMARY_HEADER};

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    /// Human-readable lines for the terminal.
    pub lines: Vec<String>,
}

impl Outcome {
    fn from_report(report: &ExperimentReport) -> Self {
        let mut lines = vec![format!("{}: {}", report.name, if report.passed() { "PASS" } else { "FAIL" })];
        if let Some(why) = &report.infeasible {
            lines.push(format!("  infeasible: {why}"));
        }
        for c in &report.checks {
            lines.push(format!(
                "  [{}] {} (observed {}, threshold {})",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.observed,
                c.threshold
            ));
        }
        Self {
            passed: report.passed(),
            lines,
        }
    }
}

fn finish(cfg: &RunConfig, report: &ExperimentReport) -> Result<Outcome, CliError> {
    OutputDir::create(cfg)?.write_report(cfg, report)?;
    Ok(Outcome::from_report(report))
}

/// The census grid's time closest to `target`.
fn nearest_on_grid(grid: &[f64], target: f64) -> f64 {
    grid.iter()
        .copied()
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
        .unwrap_or(target)
}

struct CensusRow {
    time: f64,
    alive: usize,
    absorbed: u64,
    counts: Vec<usize>,
    d: f64,
    d_trunc: f64,
}

/// Runs replicates of the engine and writes one `censuses.csv` row per
/// replicate and census time.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let horizon = cfg.horizon.unwrap_or(5.0);
    let sets = cfg.interval_sets()?;
    let mut spec = ReplicateSpec::new(cfg.x0, horizon, cfg.census_times(horizon, 1.0)).sets(sets.clone());
    if let Some(m) = cfg.trunc_m {
        spec = spec.truncation(m);
    }
    let n = cfg.replicates.unwrap_or(100);
    let x0 = cfg.x0;
    let rows = run_many(&params, &spec, cfg.seed, n, |_, out| {
        let censuses: Vec<CensusRow> = out
            .censuses
            .iter()
            .map(|c| CensusRow {
                time: c.time,
                alive: c.alive(),
                absorbed: c.absorbed_count,
                counts: sets.iter().map(|b| c.count(b)).collect(),
                d: additive_martingale(c, &params, x0),
                d_trunc: flagged_martingale(c, &params, x0),
            })
            .collect();
        (out.status, censuses, out.events.steps)
    })?;

    let mut report = ExperimentReport::new("simulate", &params);
    report.setting("x0", cfg.x0);
    report.setting("horizon", horizon);
    report.setting("replicates", n);
    report.setting("seed", cfg.seed);
    report.events = rows.iter().map(|r| r.2).sum();
    for (i, (status, censuses, steps)) in rows.iter().enumerate() {
        let mut values = BTreeMap::new();
        values.insert("steps".to_string(), *steps as f64);
        if let Some(last) = censuses.last() {
            values.insert("alive_final".to_string(), last.alive as f64);
            values.insert("d_final".to_string(), last.d);
            values.insert("d_trunc_final".to_string(), last.d_trunc);
        }
        report.replicates.push(ReplicateRecord {
            replicate: i,
            status: *status,
            values,
        });
    }
    let done: Vec<_> = rows.iter().filter(|r| r.0 == ReplicateStatus::Completed).collect();
    report
        .aggregates
        .push(Aggregate::exact("aborted", "all", (rows.len() - done.len()) as f64));
    for (j, &t) in spec.census_grid.iter().enumerate() {
        let at = format!("t={t}");
        let col = |f: &dyn Fn(&CensusRow) -> f64| mean_stderr(&done.iter().map(|r| f(&r.1[j])).collect::<Vec<_>>());
        report.aggregates.push(Aggregate::new("alive", at.clone(), col(&|c| c.alive as f64)));
        report
            .aggregates
            .push(Aggregate::new("survival", at.clone(), col(&|c| (c.alive > 0) as u8 as f64)));
        report.aggregates.push(Aggregate::new("d", at.clone(), col(&|c| c.d)));
        report.aggregates.push(Aggregate::new("d_trunc", at.clone(), col(&|c| c.d_trunc)));
        for (k, b) in cfg.sets.iter().enumerate() {
            report
                .aggregates
                .push(Aggregate::new(format!("count_B{}", k + 1), format!("{at} B={b}"), col(&|c| c.counts[k] as f64)));
        }
    }

    let dir = OutputDir::create(cfg)?;
    if dir.wants_csv() {
        let mut header: Vec<String> = ["replicate", "time", "alive", "absorbed"].map(String::from).to_vec();
        header.extend((1..=sets.len()).map(|k| format!("count_B{k}")));
        header.extend(["D", "D_trunc"].map(String::from));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut f = dir.csv("censuses.csv", &header)?;
        for (i, (_, censuses, _)) in rows.iter().enumerate() {
            for c in censuses {
                let mut row = vec![i.to_string(), fmt17(c.time), c.alive.to_string(), c.absorbed.to_string()];
                row.extend(c.counts.iter().map(usize::to_string));
                row.push(fmt17(c.d));
                row.push(fmt17(c.d_trunc));
                f.row(row)?;
            }
        }
        f.finish()?;
    }
    dir.write_report(cfg, &report)?;
    let mut outcome = Outcome::from_report(&report);
    outcome.lines.push(format!("  {} replicates, {} killed steps", n, report.events));
    Ok(outcome)
}

pub fn cmd_moments(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let horizon = cfg.horizon.unwrap_or(1.0);
    let times: Vec<f64> = cfg.census_times(horizon, horizon).into_iter().filter(|&t| t > 0.0).collect();
    let report = experiment_moments(
        &params,
        &MomentsConfig {
            x0: cfg.x0,
            times,
            sets: cfg.interval_sets()?,
            replicates: cfg.replicates.unwrap_or(0),
            spine_samples: cfg.spine_samples,
            seed: cfg.seed,
        },
    )?;
    finish(cfg, &report)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let defaults = VerifyConfig::default();
    let report = verify_samplers(
        &params,
        &VerifyConfig {
            x0: cfg.x0,
            step: cfg.horizon.unwrap_or(defaults.step),
            n: cfg.replicates.unwrap_or(defaults.n),
            seed: cfg.seed,
            ..defaults
        },
    )?;
    finish(cfg, &report)
}

pub fn cmd_kesten(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let d = KestenConfig::default();
    let horizon = cfg.horizon.unwrap_or(d.horizon);
    let census_dt = cfg.census_dt.unwrap_or(d.census_dt);
    let grid = bbm_core::engine::uniform_grid(horizon, census_dt);
    let sets = cfg.interval_sets()?;
    let report = experiment_kesten(
        &params,
        &KestenConfig {
            x0: cfg.x0,
            sets: if sets.is_empty() { d.sets.clone() } else { sets },
            horizon,
            census_dt,
            compare_time: nearest_on_grid(&grid, horizon / 2.0),
            replicates: cfg.replicates.unwrap_or(d.replicates),
            seed: cfg.seed,
            ..d
        },
    )?;
    finish(cfg, &report)
}

pub fn cmd_qsd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let d = QsdConfig::default();
    let report = experiment_empirical_qsd(
        &params,
        &QsdConfig {
            x0: cfg.x0,
            horizon: cfg.horizon.unwrap_or(d.horizon),
            census_dt: cfg.census_dt.unwrap_or(d.census_dt),
            replicates: cfg.replicates.unwrap_or(d.replicates),
            seed: cfg.seed,
            ..d
        },
    )?;
    finish(cfg, &report)
}

pub fn cmd_martingale(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let d = MartingaleConfig::default();
    let horizons = match (&cfg.census_grid, cfg.horizon) {
        (None, None) => d.horizons.clone(),
        (_, h) => {
            let h = h.unwrap_or(*d.horizons.last().expect("non-empty"));
            cfg.census_times(h, 1.0).into_iter().filter(|&t| t > 0.0).collect()
        }
    };
    let report = experiment_martingale(
        &params,
        &MartingaleConfig {
            x0: cfg.x0,
            horizons,
            replicates: cfg.replicates.unwrap_or(d.replicates),
            seed: cfg.seed,
            ..d
        },
    )?;
    finish(cfg, &report)
}

pub fn cmd_truncation(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let d = TruncationConfig::default();
    let report = experiment_truncation(
        &params,
        &TruncationConfig {
            x0: cfg.x0,
            horizon: cfg.horizon.unwrap_or(d.horizon),
            check_dt: cfg.census_dt.unwrap_or(d.check_dt),
            replicates: cfg.replicates.unwrap_or(d.replicates),
            seed: cfg.seed,
            ..d.clone()
        },
    )?;
    finish(cfg, &report)
}

pub fn cmd_phase(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let d = PhaseConfig::default();
    let missing = |k: &str| CliError::Config(format!("`{k}` or `{k}_grid` is required"));
    let c_grid = match (&cfg.c_grid, cfg.c) {
        (Some(g), _) => g.clone(),
        (None, Some(c)) => vec![c],
        (None, None) => return Err(missing("c")),
    };
    let r_grid = match (&cfg.r_grid, cfg.r) {
        (Some(g), _) => g.clone(),
        (None, Some(r)) => vec![r],
        (None, None) => return Err(missing("r")),
    };
    let offspring: OffspringLaw = cfg
        .offspring
        .as_deref()
        .ok_or_else(|| CliError::Config("`offspring` is required".into()))?
        .parse()?;
    let report = experiment_phase_diagram(&PhaseConfig {
        c_grid,
        r_grid,
        offspring,
        x0: cfg.x0,
        horizon: cfg.horizon.unwrap_or(d.horizon),
        replicates: cfg.replicates.unwrap_or(d.replicates),
        seed: cfg.seed,
        ..d
    })?;
    finish(cfg, &report)
}

#[derive(Serialize)]
struct ScheduleSummary<'a> {
    record: &'static str,
    config: &'a RunConfig,
    k_max: u64,
    delta: f64,
    growth_exponent: Option<f64>,
    increasing: bool,
    gaps_decreasing_from: Option<u64>,
}

/// Writes the `t_k` schedule to `schedule.csv`; passes when the schedule
/// increases and its gaps turn down on the computed range.
pub fn cmd_schedule(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let growth = match (cfg.c, cfg.r, &cfg.offspring) {
        (Some(_), Some(_), Some(_)) => {
            let p = cfg.params()?;
            p.regime().is_supercritical().then(|| p.growth_exponent())
        }
        _ => None,
    };
    let s = tk_schedule(cfg.k_max, cfg.delta, growth)?;
    let passed = s.increasing && s.gaps_decreasing_from.is_some();
    let dir = OutputDir::create(cfg)?;
    if dir.wants_csv() {
        let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        let mut f = dir.csv("schedule.csv", &["k", "t_tilde", "s", "m", "t", "gap", "partial_sum"])?;
        for e in &s.entries {
            f.row([
                e.k.to_string(),
                fmt17(e.t_tilde),
                fmt17(e.s),
                fmt17(e.m),
                fmt17(e.t),
                opt(e.gap),
                opt(e.partial_sum),
            ])?;
        }
        f.finish()?;
        let mut f = dir.csv("summary.csv", SUMMARY_HEADER)?;
        let rows = [
            Aggregate::exact("t_tilde", "k=2", s.entries[0].t_tilde),
            Aggregate::exact("increasing", "k>=3", s.increasing as u8 as f64),
            Aggregate::exact("gaps_decreasing_from", "k", s.gaps_decreasing_from.map_or(f64::NAN, |k| k as f64)),
        ];
        for a in &rows {
            f.row(summary_row("schedule", a))?;
        }
        f.finish()?;
    }
    if dir.wants_jsonl() {
        let mut j = dir.jsonl("report.jsonl")?;
        j.record(&ScheduleSummary {
            record: "summary",
            config: cfg,
            k_max: s.k_max,
            delta: s.delta,
            growth_exponent: s.growth_exponent,
            increasing: s.increasing,
            gaps_decreasing_from: s.gaps_decreasing_from,
        })?;
        j.finish()?;
    }
    let lines = vec![
        format!("schedule: {}", if passed { "PASS" } else { "FAIL" }),
        format!("  t~_2 = (ln 2)^10 = {}", s.entries[0].t_tilde),
        format!("  increasing for k >= 3: {}", s.increasing),
        match s.gaps_decreasing_from {
            Some(k) => format!("  gaps decrease from k* = {k}"),
            None => format!("  gaps do not turn down below k_max = {}", s.k_max),
        },
    ];
    Ok(Outcome { passed, lines })
}
