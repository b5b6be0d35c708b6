use serde::Serialize;

use crate::model::{IntervalSet, ModelParams};
use crate::Scalar;

/// Cumulative event counts up to and including a census time.
///
/// `created == alive + absorbed + childless + branched` holds exactly at
/// every census, where `branched` counts branch events with at least one
/// child and `childless` those with none.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Accounting {
    pub created: u64,
    pub absorbed: u64,
    pub childless: u64,
    pub branched: u64,
}

/// Snapshot of the alive population at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct Census<T = f64> {
    pub time: T,
    pub positions: Vec<T>,
    /// Whether the particle's ancestral path stayed inside the truncation
    /// window for the replicate's configured `M` (all true when none was set).
    pub truncation_ok: Vec<bool>,
    /// Running maximum of `u_s / (1 + s^{3/4})` over the checked points of
    /// the ancestral path. The particle is inside the `M`-window iff
    /// `level < M`.
    pub levels: Vec<T>,
    /// Genealogy node of each particle, empty unless paths were recorded.
    pub path_nodes: Vec<u32>,
    pub absorbed_count: u64,
    pub accounting: Accounting,
}

impl<T: Scalar> Census<T> {
    pub fn alive(&self) -> usize {
        self.positions.len()
    }

    pub fn extinct(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn count(&self, b: &IntervalSet<T>) -> usize {
        count(self, b)
    }

    pub fn truncated_count(&self, b: &IntervalSet<T>) -> usize {
        truncated_count(self, b)
    }

    /// Particles in `b` whose checked path stayed below `M(1 + s^{3/4})`.
    pub fn truncated_count_at(&self, m: T, b: &IntervalSet<T>) -> usize {
        self.positions
            .iter()
            .zip(&self.levels)
            .filter(|(&y, &lvl)| lvl < m && b.contains(y))
            .count()
    }
}

pub fn count<T: Scalar>(census: &Census<T>, b: &IntervalSet<T>) -> usize {
    b.count_in(&census.positions)
}

pub fn truncated_count<T: Scalar>(census: &Census<T>, b: &IntervalSet<T>) -> usize {
    census
        .positions
        .iter()
        .zip(&census.truncation_ok)
        .filter(|(&y, &ok)| ok && b.contains(y))
        .count()
}

#[inline]
fn martingale_term<T: Scalar>(y: T, x0: T, c: T, discount: T) -> T {
    // h(y)/h(x0) * e^{-g t} with the normalising constant of h cancelled.
    ((y / x0).ln() + c * (y - x0) - discount).exp()
}

/// `D_t = (1/h(x0)) sum_u h(u_t) e^{-(r(mu1-1) - lambda) t}`.
pub fn additive_martingale<T: Scalar>(census: &Census<T>, params: &ModelParams<T>, x0: T) -> T {
    let discount = params.growth_exponent() * census.time;
    census
        .positions
        .iter()
        .fold(T::zero(), |acc, &y| acc + martingale_term(y, x0, params.c(), discount))
}

/// Additive martingale restricted to particles inside the `M`-window.
pub fn truncated_martingale<T: Scalar>(
    census: &Census<T>,
    params: &ModelParams<T>,
    x0: T,
    m: T,
) -> T {
    let discount = params.growth_exponent() * census.time;
    census
        .positions
        .iter()
        .zip(&census.levels)
        .filter(|(_, &lvl)| lvl < m)
        .fold(T::zero(), |acc, (&y, _)| acc + martingale_term(y, x0, params.c(), discount))
}

/// Additive martingale restricted by the census' own truncation flags.
pub fn flagged_martingale<T: Scalar>(census: &Census<T>, params: &ModelParams<T>, x0: T) -> T {
    let discount = params.growth_exponent() * census.time;
    census
        .positions
        .iter()
        .zip(&census.truncation_ok)
        .filter(|(_, &ok)| ok)
        .fold(T::zero(), |acc, (&y, _)| acc + martingale_term(y, x0, params.c(), discount))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry<T = f64> {
    pub time: T,
    pub d: T,
    pub d_trunc: T,
    pub alive: usize,
    pub counts: Vec<usize>,
}

/// Per-census martingale values and set counts for one replicate.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MartingaleTrace<T = f64> {
    pub entries: Vec<TraceEntry<T>>,
}

impl<T: Scalar> MartingaleTrace<T> {
    pub fn from_censuses(
        censuses: &[Census<T>],
        params: &ModelParams<T>,
        x0: T,
        sets: &[IntervalSet<T>],
    ) -> Self {
        let entries = censuses
            .iter()
            .map(|c| TraceEntry {
                time: c.time,
                d: additive_martingale(c, params, x0),
                d_trunc: flagged_martingale(c, params, x0),
                alive: c.alive(),
                counts: sets.iter().map(|b| count(c, b)).collect(),
            })
            .collect();
        Self { entries }
    }
}
