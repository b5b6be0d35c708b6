use std::time::Instant;

use super::{require_replicates, Aggregate, Check, ExperimentReport};
use crate::engine::{run_many, spawn_rng_stream, stream_key, ReplicateSpec, ReplicateStatus};
use crate::error::Result;
use crate::kernel::{
    hitting_time_cdf, killed_density, sample_hitting_time, sample_killed_step, sample_survivor_position,
    survival_probability, KilledStep,
};
use crate::model::ModelParams;
use crate::quadrature::{integrate, QuadOptions};
use crate::special::erfc;
use crate::stats::{chi_square_test, ks_test, TestOutcome};

/// Deliberate defects for checking that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    /// Shift every conditional position sample by this amount.
    PositionOffset(f64),
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub x0: f64,
    /// Step length of the killed-step suites.
    pub step: f64,
    /// Sample size of the kernel suites.
    pub n: usize,
    /// Branch events for the offspring chi-square suite.
    pub offspring_events: usize,
    /// Waits for the branch-clock KS suite.
    pub waits: usize,
    pub seed: u64,
    pub alpha: f64,
    pub corruption: Option<Corruption>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            x0: 1.0,
            step: 1.0,
            n: 100_000,
            offspring_events: 1_000_000,
            waits: 1_000_000,
            seed: 0,
            alpha: 0.01,
            corruption: None,
        }
    }
}

const CHUNK: usize = 4096;
const ENGINE_BATCH: usize = 1024;
const ENGINE_HORIZON: f64 = 2.0;
const MAX_ENGINE_BATCHES: usize = 10_000;

/// Draws `n` values in fixed chunks, each on its own stream derived from
/// `seed`, so the sample does not depend on the thread count.
fn chunked<F>(n: usize, seed: u64, draw: F) -> Result<Vec<f64>>
where
    F: Fn(&mut crate::engine::ReplicateRng, &mut Vec<f64>) -> Result<()> + Sync,
{
    use rayon::prelude::*;
    let parts: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let mut rng = spawn_rng_stream(seed, k as u64);
            let len = CHUNK.min(n - k * CHUNK);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                draw(&mut rng, &mut out)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// CDF of the survival-conditioned position at each sorted point, by
/// quadrature of the killed density between consecutive points.
pub fn survivor_cdf_at_sorted(x: f64, t: f64, params: &ModelParams<f64>, sorted: &[f64]) -> Result<Vec<f64>> {
    let s = survival_probability(x, t, params);
    let opts = QuadOptions::new(1e-10, 1e-16);
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(sorted.len());
    for &y in sorted {
        if y > prev {
            acc += integrate(|z| killed_density(x, z, t, params), prev, y, &opts)?.value;
            prev = y;
        }
        out.push((acc / s).min(1.0));
    }
    Ok(out)
}

fn ks_against_sorted_cdf(sorted: &[f64], cdf: &[f64]) -> TestOutcome {
    let n = sorted.len() as f64;
    let d = cdf.iter().enumerate().fold(0.0f64, |d, (i, &f)| {
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    });
    TestOutcome {
        statistic: d,
        p_value: crate::stats::ks_p_value(d, sorted.len()),
        n: sorted.len(),
    }
}

fn push_outcome(report: &mut ExperimentReport, name: &str, t: &TestOutcome, alpha: f64) {
    report.aggregates.push(Aggregate::exact("statistic", name, t.statistic));
    report.aggregates.push(Aggregate {
        name: "p_value".into(),
        at: name.into(),
        value: t.p_value,
        stderr: 0.0,
        n: t.n,
    });
    report.checks.push(Check::new(
        name,
        t.passes(alpha),
        t.p_value,
        alpha,
        format!("p-value >= alpha, statistic {} over n = {}", t.statistic, t.n),
    ));
}

/// Runs the sampler goodness-of-fit suites and reports each at level
/// `alpha`.
pub fn verify_samplers(params: &ModelParams<f64>, cfg: &VerifyConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    require_replicates(cfg.n)?;
    let mut report = ExperimentReport::new("verify-samplers", params);
    report.setting("x0", cfg.x0);
    report.setting("step", cfg.step);
    report.setting("n", cfg.n);
    report.setting("offspring_events", cfg.offspring_events);
    report.setting("waits", cfg.waits);
    report.setting("seed", cfg.seed);
    report.setting("alpha", cfg.alpha);
    if let Some(c) = cfg.corruption {
        report.setting("corruption", format!("{c:?}"));
    }
    let (x, t) = (cfg.x0, cfg.step);

    // Unconditional hitting time against 1 - P_x(X_s > 0).
    let hits = chunked(cfg.n, stream_key(cfg.seed, 0), |rng, out| {
        out.push(sample_hitting_time(x, params, rng));
        Ok(())
    })?;
    let positive = hits.iter().all(|&h| h > 0.0);
    report.checks.push(Check::new("hitting-time-positive", positive, positive as u8 as f64, 1.0, "all samples > 0"));
    push_outcome(&mut report, "hitting-time-ks", &ks_test(&hits, |s| hitting_time_cdf(x, s, params)), cfg.alpha);

    // Killed steps: survival frequency, then the absorbed hit times.
    let steps = chunked(cfg.n, stream_key(cfg.seed, 1), |rng, out| {
        out.push(match sample_killed_step(x, t, params, rng)? {
            KilledStep::Survived(_) => -1.0,
            KilledStep::Absorbed(h) => h,
        });
        Ok(())
    })?;
    let survived = steps.iter().filter(|&&v| v < 0.0).count();
    let s = survival_probability(x, t, params);
    let nf = cfg.n as f64;
    let z = (survived as f64 - nf * s) / (nf * s * (1.0 - s)).sqrt();
    let p = erfc(z.abs() / std::f64::consts::SQRT_2);
    report.aggregates.push(Aggregate::new(
        "survival_frequency",
        "killed-step",
        crate::stats::Estimate {
            mean: survived as f64 / nf,
            stderr: (s * (1.0 - s) / nf).sqrt(),
            n: cfg.n,
        },
    ));
    report.aggregates.push(Aggregate::exact("survival_probability", "killed-step", s));
    report.checks.push(Check::new(
        "killed-step-survival",
        p >= cfg.alpha,
        p,
        cfg.alpha,
        format!("two-sided normal p-value, z = {z}"),
    ));
    let absorbed: Vec<f64> = steps.iter().copied().filter(|&v| v >= 0.0).collect();
    let within = absorbed.iter().all(|&h| h > 0.0 && h <= t);
    report.checks.push(Check::new("hit-time-in-step", within, within as u8 as f64, 1.0, "0 < hit_time <= step"));
    let total = hitting_time_cdf(x, t, params);
    push_outcome(
        &mut report,
        "conditional-hit-time-ks",
        &ks_test(&absorbed, |s| hitting_time_cdf(x, s.min(t), params) / total),
        cfg.alpha,
    );

    // Survival-conditioned position against the quadrature CDF.
    let offset = match cfg.corruption {
        Some(Corruption::PositionOffset(d)) => d,
        None => 0.0,
    };
    let mut positions = chunked(cfg.n, stream_key(cfg.seed, 2), |rng, out| {
        out.push(sample_survivor_position(x, t, params, rng)? + offset);
        Ok(())
    })?;
    positions.sort_by(f64::total_cmp);
    let cdf = survivor_cdf_at_sorted(x, t, params, &positions)?;
    push_outcome(&mut report, "position-ks", &ks_against_sorted_cdf(&positions, &cdf), cfg.alpha);

    // Engine: offspring counts and branch-clock waits.
    let spec = ReplicateSpec::new(x, ENGINE_HORIZON, vec![ENGINE_HORIZON]).record_waits(true);
    let mut histogram = vec![0u64; params.offspring().max_children() + 1];
    let mut waits: Vec<f64> = Vec::with_capacity(cfg.waits);
    let mut batch = 0;
    while (histogram.iter().sum::<u64>() < cfg.offspring_events as u64 || waits.len() < cfg.waits)
        && batch < MAX_ENGINE_BATCHES
    {
        let outs = run_many(params, &spec, stream_key(cfg.seed, 3 + batch as u64), ENGINE_BATCH, |_, o| {
            (o.status, o.events)
        })?;
        for (status, ev) in outs {
            if status != ReplicateStatus::Completed {
                continue;
            }
            report.events += ev.steps;
            for (k, c) in ev.offspring_histogram.iter().enumerate() {
                histogram[k] += c;
            }
            let room = cfg.waits.saturating_sub(waits.len());
            waits.extend(ev.waits.into_iter().take(room));
        }
        batch += 1;
    }
    let chi = chi_square_test(&histogram, params.offspring().pmf());
    push_outcome(&mut report, "offspring-chi-square", &chi, cfg.alpha);
    let r = params.r();
    push_outcome(&mut report, "branch-wait-ks", &ks_test(&waits, |w| -(-r * w).exp_m1()), cfg.alpha);
    report
        .aggregates
        .push(Aggregate::exact("branch_events", "engine", histogram.iter().sum::<u64>() as f64));
    report.aggregates.push(Aggregate::exact("waits", "engine", waits.len() as f64));
    report.wall_clock = start.elapsed();
    Ok(report)
}
