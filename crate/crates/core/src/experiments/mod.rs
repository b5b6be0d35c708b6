//! Statistical harness: each experiment runs replicates of the engine,
//! aggregates them, and checks the result against declared tolerances or
//! frozen regression thresholds.
//!
//! Every experiment is a pure function of its configuration and seed. The
//! wall-clock time is kept on the report but not serialized, so serialized
//! reports are byte-reproducible.

mod fixtures;
mod kesten;
mod martingale;
mod moments;
mod phase;
mod qsd;
mod schedule;
mod truncation;
mod verify;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

pub use fixtures::{Thresholds, THRESHOLDS_TOML};
pub use kesten::{experiment_kesten, KestenConfig};
pub use martingale::{experiment_martingale, MartingaleConfig};
pub use moments::{experiment_moments, MomentsConfig};
pub use phase::{experiment_phase_diagram, PhaseConfig};
pub use qsd::{experiment_empirical_qsd, QsdConfig};
pub use schedule::{tk_schedule, ScheduleEntry, ScheduleReport};
pub use truncation::{experiment_truncation, truncated_second_moment_mc, TruncationConfig};
pub use verify::{verify_samplers, Corruption, VerifyConfig};

use crate::engine::ReplicateStatus;
use crate::error::{invalid, Result};
use crate::oracle::expected_count;
use crate::model::{IntervalSet, ModelParams, Regime};
use crate::stats::{median, Estimate};

/// Number of standard errors for each of `count` simultaneous checks, so
/// that the whole family has the two-sided false-alarm rate of one 3-sigma
/// check (Bonferroni).
pub fn family_sigma(count: usize) -> f64 {
    let normal = Normal::standard();
    let per_check = 2.0 * normal.sf(3.0) / count.max(1) as f64;
    -normal.inverse_cdf(per_check / 2.0)
}

/// Largest expected population at the horizon that is simulated.
pub const POPULATION_CAP: f64 = 1e5;

/// Model parameters as echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamsEcho {
    pub c: f64,
    pub r: f64,
    pub offspring: String,
    pub lambda: f64,
    pub growth_exponent: f64,
    pub regime: Regime,
}

impl From<&ModelParams<f64>> for ParamsEcho {
    fn from(p: &ModelParams<f64>) -> Self {
        Self {
            c: p.c(),
            r: p.r(),
            offspring: p.offspring().to_string(),
            lambda: p.lambda(),
            growth_exponent: p.growth_exponent(),
            regime: p.regime(),
        }
    }
}

/// Per-replicate summary. `values` is keyed by metric name.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    #[serde(flatten)]
    pub status: ReplicateStatus,
    pub values: BTreeMap<String, f64>,
}

/// One aggregate statistic with its sample size and standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub name: String,
    /// Census time, cell label or set the statistic refers to.
    pub at: String,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn new(name: impl Into<String>, at: impl Into<String>, e: Estimate) -> Self {
        Self {
            name: name.into(),
            at: at.into(),
            value: e.mean,
            stderr: e.stderr,
            n: e.n,
        }
    }

    /// Exact value with no sampling error.
    pub fn exact(name: impl Into<String>, at: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            at: at.into(),
            value,
            stderr: 0.0,
            n: 0,
        }
    }

    /// Sample median with a distribution-free standard error.
    pub fn median(name: impl Into<String>, at: impl Into<String>, xs: &[f64]) -> Self {
        Self {
            name: name.into(),
            at: at.into(),
            value: median(xs),
            stderr: median_stderr(xs),
            n: xs.len(),
        }
    }
}

/// Standard error of the median from the order statistics bracketing a
/// 95% confidence interval.
pub fn median_stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let half = 1.96 * (n as f64).sqrt() / 2.0;
    let mid = n as f64 / 2.0;
    let lo = ((mid - half).floor().max(0.0)) as usize;
    let hi = ((mid + half).ceil() as usize).min(n - 1);
    (v[hi] - v[lo]) / (2.0 * 1.96)
}

/// One pass/fail contract with the threshold it was judged against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, observed: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            observed,
            threshold,
            detail: detail.into(),
        }
    }

    /// Passes when `observed <= threshold`.
    pub fn at_most(name: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Self::new(name, observed <= threshold, observed, threshold, "observed <= threshold")
    }

    /// Passes when `|estimate - target|` is within `k` standard errors.
    pub fn within_sigma(name: impl Into<String>, e: &Estimate, target: f64, k: f64) -> Self {
        let z = e.z_score(target);
        let passed = e.within(target, k);
        Self::new(name, passed, z, k, format!("|mean - {target}| / stderr, mean {} stderr {}", e.mean, e.stderr))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub params: ParamsEcho,
    /// Experiment settings other than the model, in a fixed order.
    pub settings: Vec<(String, String)>,
    pub replicates: Vec<ReplicateRecord>,
    pub aggregates: Vec<Aggregate>,
    pub checks: Vec<Check>,
    /// Killed steps simulated over all replicates.
    pub events: u64,
    /// Set when the configuration was declared infeasible at desk scale.
    pub infeasible: Option<String>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl ExperimentReport {
    pub fn new(name: &str, params: &ModelParams<f64>) -> Self {
        Self {
            name: name.to_string(),
            params: params.into(),
            settings: Vec::new(),
            replicates: Vec::new(),
            aggregates: Vec::new(),
            checks: Vec::new(),
            events: 0,
            infeasible: None,
            wall_clock: Duration::ZERO,
        }
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) {
        self.settings.push((key.to_string(), value.to_string()));
    }

    pub fn passed(&self) -> bool {
        self.infeasible.is_none() && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn aggregate(&self, name: &str, at: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.name == name && a.at == at)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Expected population at `horizon` from the many-to-one formula.
pub fn expected_population(params: &ModelParams<f64>, x0: f64, horizon: f64) -> Result<f64> {
    if horizon <= 0.0 {
        return Ok(1.0);
    }
    expected_count(x0, horizon, &IntervalSet::positive(), params)
}

/// Marks the report infeasible when the expected population at `horizon`
/// exceeds [`POPULATION_CAP`]. Returns whether the run may proceed.
pub(crate) fn admit_horizon(report: &mut ExperimentReport, params: &ModelParams<f64>, x0: f64, horizon: f64) -> Result<bool> {
    let pop = expected_population(params, x0, horizon)?;
    if pop > POPULATION_CAP {
        report.infeasible = Some(format!(
            "expected population {pop:.3e} at horizon {horizon} exceeds the desk-scale cap {POPULATION_CAP:e}"
        ));
        return Ok(false);
    }
    Ok(true)
}

pub(crate) fn require_supercritical(params: &ModelParams<f64>) -> Result<()> {
    if params.regime().is_supercritical() {
        Ok(())
    } else {
        Err(invalid(
            "params",
            format!("experiment needs a supercritical regime, got {}", params.regime()),
        ))
    }
}

pub(crate) fn require_replicates(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("replicates", "must be at least 1"))
    } else {
        Ok(())
    }
}

/// Formats a census time as a stable aggregate label.
pub(crate) fn time_label(t: f64) -> String {
    format!("t={t}")
}
