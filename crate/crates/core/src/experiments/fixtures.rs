use serde::Deserialize;

use crate::error::{Error, Result};
use crate::oracle::BoundConstants;

/// The frozen thresholds file shipped with the crate.
pub const THRESHOLDS_TOML: &str = include_str!("../../fixtures/thresholds.toml");

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Thresholds {
    pub version: u32,
    pub kesten: KestenThresholds,
    pub qsd: QsdThresholds,
    pub martingale: MartingaleThresholds,
    pub truncation: TruncationThresholds,
    pub phase: PhaseThresholds,
    pub bound: BoundThresholds,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct KestenThresholds {
    pub pilot_seed: u64,
    pub pilot_replicates: usize,
    /// Pilot seeds are `pilot_seed .. pilot_seed + pilot_runs`.
    pub pilot_runs: u64,
    /// Ceiling for the median of `|R_t(B) - nu(B) D_t|` at the final census.
    pub median_final_max: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct QsdThresholds {
    pub pilot_seed: u64,
    pub pilot_replicates: usize,
    /// Pilot seeds are `pilot_seed .. pilot_seed + pilot_runs`.
    pub pilot_runs: u64,
    /// Ceiling for the median KS distance at the final census.
    pub median_ks_final_max: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MartingaleThresholds {
    pub pilot_seed: u64,
    pub pilot_replicates: usize,
    /// Pilot seeds are `pilot_seed .. pilot_seed + pilot_runs`.
    pub pilot_runs: u64,
    /// Ceiling for the fraction of surviving replicates with `D < 0.01`.
    pub small_d_fraction_max: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TruncationThresholds {
    pub pilot_seed: u64,
    pub pilot_replicates: usize,
    pub log_fit_r2_min: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PhaseThresholds {
    /// Survival probability under the null hypothesis of the supercritical
    /// binomial test, and the ceiling for subcritical survival frequency.
    pub survival_null: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct BoundThresholds {
    pub pilot_seed: u64,
    pub pilot_replicates: usize,
    pub c: f64,
    pub delta: f64,
}

impl BoundThresholds {
    pub fn constants(&self) -> BoundConstants {
        BoundConstants {
            c: self.c,
            delta: self.delta,
        }
    }
}

impl Thresholds {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Fixture(e.to_string()))
    }

    /// The thresholds compiled into the crate.
    pub fn frozen() -> Self {
        Self::parse(THRESHOLDS_TOML).expect("shipped thresholds file parses")
    }
}
