use std::collections::BTreeMap;
use std::time::Instant;

use super::{expected_population, require_replicates, Aggregate, Check, ExperimentReport, ReplicateRecord, POPULATION_CAP};
use crate::engine::{run_many, stream_key, ReplicateSpec, ReplicateStatus};
use crate::error::{invalid, Result};
use crate::model::{ModelParams, OffspringLaw};
use crate::stats::{binomial_upper_tail, mean_stderr};

#[derive(Debug, Clone)]
pub struct PhaseConfig {
    pub c_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub offspring: OffspringLaw<f64>,
    pub x0: f64,
    pub horizon: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Null survival probability of the supercritical binomial test, and
    /// the ceiling for survival frequencies the oracle predicts to vanish.
    pub survival_null: f64,
    pub alpha: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            c_grid: vec![1.0],
            r_grid: vec![0.3, 0.5, 0.8, 1.5],
            offspring: OffspringLaw::dyadic(),
            x0: 1.0,
            horizon: 10.0,
            replicates: 500,
            seed: 0,
            survival_null: super::Thresholds::frozen().phase.survival_null,
            alpha: 0.01,
        }
    }
}

/// Smallest growth `e^{(r(mu1-1)-lambda) T}` at which a supercritical cell's
/// survival is tested.
pub const MIN_GROWTH_FOR_TEST: f64 = 50.0;

/// Largest `T <= horizon` whose expected population stays under the cap.
fn capped_horizon(params: &ModelParams<f64>, x0: f64, horizon: f64) -> Result<f64> {
    if expected_population(params, x0, horizon)? <= POPULATION_CAP {
        return Ok(horizon);
    }
    let (mut lo, mut hi) = (0.0, horizon);
    while hi - lo > 1e-6 * horizon {
        let mid = 0.5 * (lo + hi);
        if expected_population(params, x0, mid)? <= POPULATION_CAP {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Survival frequency at the horizon over a grid of `(c, r)` cells.
pub fn experiment_phase_diagram(cfg: &PhaseConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    require_replicates(cfg.replicates)?;
    if cfg.c_grid.is_empty() || cfg.r_grid.is_empty() {
        return Err(invalid("grid", "c and r grids must be non-empty"));
    }
    let first = ModelParams::new(cfg.c_grid[0], cfg.r_grid[0], cfg.offspring.clone())?;
    let mut report = ExperimentReport::new("phase-diagram", &first);
    report.setting("c_grid", format!("{:?}", cfg.c_grid));
    report.setting("r_grid", format!("{:?}", cfg.r_grid));
    report.setting("x0", cfg.x0);
    report.setting("horizon", cfg.horizon);
    report.setting("replicates", cfg.replicates);
    report.setting("seed", cfg.seed);
    report.setting("survival_null", cfg.survival_null);
    let n = cfg.replicates as u64;
    let mut cell = 0u64;
    for &c in &cfg.c_grid {
        let mut row: Vec<(f64, f64, f64)> = Vec::new();
        let mut rs = cfg.r_grid.clone();
        rs.sort_by(f64::total_cmp);
        for &r in &rs {
            let params = ModelParams::new(c, r, cfg.offspring.clone())?;
            let label = format!("c={c} r={r}");
            let horizon = capped_horizon(&params, cfg.x0, cfg.horizon)?;
            let spec = ReplicateSpec::new(cfg.x0, horizon, vec![horizon]);
            let rows = run_many(&params, &spec, stream_key(cfg.seed, cell), cfg.replicates, |_, out| {
                let alive = out.censuses.first().map_or(0, |c| c.alive());
                (out.status, alive, out.events.steps)
            })?;
            cell += 1;
            report.events += rows.iter().map(|r| r.2).sum::<u64>();
            for (i, (status, alive, _)) in rows.iter().enumerate() {
                let mut values = BTreeMap::new();
                values.insert("c".into(), c);
                values.insert("r".into(), r);
                values.insert("alive_final".into(), *alive as f64);
                report.replicates.push(ReplicateRecord {
                    replicate: i,
                    status: *status,
                    values,
                });
            }
            let aborted = rows.iter().filter(|r| r.0 != ReplicateStatus::Completed).count();
            let survived: Vec<f64> = rows.iter().map(|r| (r.1 > 0) as u8 as f64).collect();
            let freq = mean_stderr(&survived);
            let k = rows.iter().filter(|r| r.1 > 0).count() as u64;
            let markov = expected_population(&params, cfg.x0, horizon)?.min(1.0);
            let regime = params.regime();
            report.aggregates.push(Aggregate::new("survival_frequency", label.clone(), freq));
            report.aggregates.push(Aggregate::exact("horizon", label.clone(), horizon));
            report.aggregates.push(Aggregate::exact("markov_bound", label.clone(), markov));
            report.aggregates.push(Aggregate::exact(
                format!("regime:{}", regime.label()),
                label.clone(),
                params.growth_exponent(),
            ));
            report.aggregates.push(Aggregate::exact("aborted", label.clone(), aborted as f64));
            if aborted > 0 {
                report.checks.push(Check::new(
                    format!("replicates-completed[{label}]"),
                    false,
                    aborted as f64,
                    0.0,
                    "aborted replicates",
                ));
            }
            if regime.is_supercritical() {
                let growth = (params.growth_exponent() * horizon).exp();
                if growth >= MIN_GROWTH_FOR_TEST {
                    let p = binomial_upper_tail(k, n, cfg.survival_null);
                    report.checks.push(Check::new(
                        format!("survives[{label}]"),
                        p < cfg.alpha,
                        p,
                        cfg.alpha,
                        format!("binomial p-value of {k}/{n} survivors against survival probability {}", cfg.survival_null),
                    ));
                } else {
                    report.aggregates.push(Aggregate::exact("untested_growth", label.clone(), growth));
                }
            } else {
                // Markov: P(|N_T| > 0) <= E|N_T|.
                let p = binomial_upper_tail(k, n, markov);
                report.checks.push(Check::new(
                    format!("markov-bound[{label}]"),
                    p >= cfg.alpha,
                    p,
                    cfg.alpha,
                    format!("binomial p-value of {k}/{n} survivors against the bound {markov:.3e}"),
                ));
                if markov <= cfg.survival_null {
                    report.checks.push(Check::at_most(format!("dies-out[{label}]"), freq.mean, cfg.survival_null));
                }
            }
            row.push((r, freq.mean, freq.stderr));
        }
        for w in row.windows(2) {
            let ((r0, f0, s0), (r1, f1, s1)) = (w[0], w[1]);
            let tol = 2.0 * (s0 * s0 + s1 * s1).sqrt();
            report.checks.push(Check::new(
                format!("monotone-in-r[c={c} r={r0}..{r1}]"),
                f1 >= f0 - tol,
                f1 - f0,
                -tol,
                "survival frequency nondecreasing in r within 2 sigma",
            ));
        }
    }
    report.wall_clock = start.elapsed();
    Ok(report)
}
