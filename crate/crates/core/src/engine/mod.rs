//! Exact event-driven simulation of the branching dynamics.
//!
//! Each particle's lifeline is simulated independently once it is born: an
//! exponential branch clock is drawn, and the particle is advanced with the
//! exact killed-step sampler to the next of {branch time, census time,
//! horizon}. There is no time discretisation anywhere, so censuses are
//! unbiased draws of the population at the grid times.
//!
//! Particles are processed depth first from an explicit stack. The order is
//! fixed by the random stream, which makes a replicate a pure function of its
//! inputs and seed.

mod census;
mod rng;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use census::{
    additive_martingale, count, flagged_martingale, truncated_count, truncated_martingale,
    Accounting, Census, MartingaleTrace, TraceEntry,
};
pub use rng::{spawn_rng_stream, stream_key, ReplicateRng};

use crate::error::{invalid, Error, Result};
use crate::kernel::{sample_killed_step, KilledStep};
use crate::model::{IntervalSet, ModelParams};
use crate::Scalar;

/// Default cap on particle steps per replicate.
pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;

/// Branch times within this distance of a census time are moved onto it, and
/// the branch is processed before the census is taken.
pub const TIE_TOLERANCE: f64 = 1e-15;

const NO_PARENT: u32 = u32::MAX;

/// Inputs of one replicate besides the model and the random stream.
#[derive(Debug, Clone)]
pub struct ReplicateSpec<T = f64> {
    pub x0: T,
    pub horizon: T,
    /// Sorted census times inside `[0, horizon]`.
    pub census_grid: Vec<T>,
    /// `M` of the truncation window `[0, M(1 + s^{3/4}))`, if any.
    pub truncation_m: Option<T>,
    /// Additionally mark a particle as escaped with the Brownian-bridge
    /// probability of crossing the chord of the window between check times.
    /// Only the chord is tested, and the window is concave, so this can only
    /// over-count escapes.
    pub bridge_correction: bool,
    /// Sets whose counts go into the martingale trace.
    pub sets: Vec<IntervalSet<T>>,
    pub event_cap: u64,
    pub record_paths: bool,
    pub record_waits: bool,
}

impl<T: Scalar> ReplicateSpec<T> {
    pub fn new(x0: T, horizon: T, census_grid: Vec<T>) -> Self {
        Self {
            x0,
            horizon,
            census_grid,
            truncation_m: None,
            bridge_correction: false,
            sets: Vec::new(),
            event_cap: DEFAULT_EVENT_CAP,
            record_paths: false,
            record_waits: false,
        }
    }

    /// Evenly spaced grid `0, dt, 2dt, ...` up to the horizon (inclusive).
    pub fn with_step(x0: T, horizon: T, dt: T) -> Self {
        Self::new(x0, horizon, uniform_grid(horizon, dt))
    }

    pub fn truncation(mut self, m: T) -> Self {
        self.truncation_m = Some(m);
        self
    }

    pub fn sets(mut self, sets: Vec<IntervalSet<T>>) -> Self {
        self.sets = sets;
        self
    }

    pub fn record_paths(mut self, on: bool) -> Self {
        self.record_paths = on;
        self
    }

    pub fn record_waits(mut self, on: bool) -> Self {
        self.record_waits = on;
        self
    }

    pub fn event_cap(mut self, cap: u64) -> Self {
        self.event_cap = cap;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.x0 > T::zero() && self.x0.is_finite()) {
            return Err(invalid("x0", format!("must be finite and > 0, got {}", self.x0)));
        }
        if !(self.horizon >= T::zero() && self.horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be finite and >= 0, got {}", self.horizon)));
        }
        if let Some(&first) = self.census_grid.first() {
            if first < T::zero() {
                return Err(invalid("census_grid", "times must be >= 0"));
            }
        }
        if self.census_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("census_grid", "times must be strictly increasing"));
        }
        if self.census_grid.last().is_some_and(|&t| t > self.horizon) {
            return Err(invalid("census_grid", "times must not exceed the horizon"));
        }
        if let Some(m) = self.truncation_m {
            if !(m > T::zero()) {
                return Err(invalid("truncation_m", format!("must be > 0, got {m}")));
            }
        }
        if self.census_grid.len() >= u32::MAX as usize {
            return Err(invalid("census_grid", "too many census times"));
        }
        Ok(())
    }
}

/// `0, dt, 2dt, ..., horizon`, with the horizon appended when `dt` does not
/// divide it.
pub fn uniform_grid<T: Scalar>(horizon: T, dt: T) -> Vec<T> {
    let mut grid = Vec::new();
    if !(dt > T::zero()) {
        return vec![T::zero(), horizon];
    }
    let n = (horizon / dt + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
    for k in 0..=n {
        grid.push(T::lit(k as f64) * dt);
    }
    let last = *grid.last().expect("grid has t=0");
    if horizon - last > T::lit(1e-9) * horizon.max(T::one()) {
        grid.push(horizon);
    } else if let Some(l) = grid.last_mut() {
        *l = horizon;
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ReplicateStatus {
    Completed,
    /// The step cap was exceeded; no censuses are reported.
    Aborted { steps: u64 },
}

/// One checkpoint of a particle path, linked to the previous checkpoint of
/// the same ancestral line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathNode<T> {
    pub parent: u32,
    pub time: T,
    pub position: T,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog<T> {
    /// Number of killed steps simulated.
    pub steps: u64,
    /// Histogram of child counts over all branch events.
    pub offspring_histogram: Vec<u64>,
    /// Every branch-clock wait drawn, if requested.
    pub waits: Vec<T>,
}

impl<T> EventLog<T> {
    pub fn branch_events(&self) -> u64 {
        self.offspring_histogram.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct ReplicateOutput<T = f64> {
    pub status: ReplicateStatus,
    pub censuses: Vec<Census<T>>,
    pub trace: MartingaleTrace<T>,
    pub events: EventLog<T>,
    pub genealogy: Option<Vec<PathNode<T>>>,
}

impl<T: Scalar> ReplicateOutput<T> {
    pub fn completed(&self) -> bool {
        self.status == ReplicateStatus::Completed
    }

    /// Counts particles in `b` at census `index` whose checked path satisfied
    /// `u_z < M(1 + (s + z)^{3/4})` at every checkpoint `z`.
    ///
    /// `s = 0` is answered from the per-particle levels; other shifts need the
    /// genealogy (`record_paths`).
    pub fn shifted_truncated_count(&self, index: usize, m: T, s: T, b: &IntervalSet<T>) -> Result<usize> {
        let census = self
            .censuses
            .get(index)
            .ok_or_else(|| invalid("index", format!("no census {index}")))?;
        if s == T::zero() {
            return Ok(census.truncated_count_at(m, b));
        }
        let nodes = self.genealogy.as_ref().ok_or(Error::GenealogyNotRecorded)?;
        // 0 = unknown, 1 = inside, 2 = escaped
        let mut memo = vec![0u8; nodes.len()];
        let mut chain = Vec::new();
        let mut total = 0;
        for (&y, &node) in census.positions.iter().zip(&census.path_nodes) {
            if !b.contains(y) {
                continue;
            }
            let mut cur = node;
            let mut verdict = 1u8;
            while cur != NO_PARENT {
                match memo[cur as usize] {
                    0 => {
                        let n = nodes[cur as usize];
                        if !(n.position < window(m, s + n.time)) {
                            memo[cur as usize] = 2;
                            verdict = 2;
                            break;
                        }
                        chain.push(cur);
                        cur = n.parent;
                    }
                    v => {
                        verdict = v;
                        break;
                    }
                }
            }
            for &k in &chain {
                memo[k as usize] = verdict;
            }
            chain.clear();
            if verdict == 1 {
                total += 1;
            }
        }
        Ok(total)
    }
}

/// Upper edge `M(1 + s^{3/4})` of the truncation window.
#[inline]
pub fn window<T: Scalar>(m: T, s: T) -> T {
    m * (T::one() + s.powf(T::lit(0.75)))
}

#[derive(Clone, Copy)]
struct Pending<T> {
    time: T,
    position: T,
    level: T,
    escaped: bool,
    node: u32,
}

struct Recorder<'a, T> {
    grid: &'a [T],
    censuses: Vec<Census<T>>,
    created: Vec<u64>,
    absorbed: Vec<u64>,
    childless: Vec<u64>,
    branched: Vec<u64>,
    truncation_m: Option<T>,
}

impl<T: Scalar> Recorder<'_, T> {
    /// Index of the first census at or after `time`; events at that index or
    /// later are counted as having happened by the census.
    fn bucket(&self, time: T) -> usize {
        self.grid.partition_point(|&g| g < time)
    }

    fn bump(counter: &mut [u64], bucket: usize) {
        if let Some(slot) = counter.get_mut(bucket) {
            *slot += 1;
        }
    }

    fn record(&mut self, index: usize, p: &Pending<T>, record_paths: bool) {
        let ok = !p.escaped && self.truncation_m.is_none_or(|m| p.level < m);
        let c = &mut self.censuses[index];
        c.positions.push(p.position);
        c.truncation_ok.push(ok);
        c.levels.push(p.level);
        if record_paths {
            c.path_nodes.push(p.node);
        }
    }

    fn finish(mut self) -> Vec<Census<T>> {
        let mut acc = Accounting::default();
        for (j, c) in self.censuses.iter_mut().enumerate() {
            acc.created += self.created[j];
            acc.absorbed += self.absorbed[j];
            acc.childless += self.childless[j];
            acc.branched += self.branched[j];
            c.accounting = acc;
            c.absorbed_count = acc.absorbed;
        }
        self.censuses
    }
}

#[inline]
fn level_at<T: Scalar>(position: T, time: T) -> T {
    position / (T::one() + time.powf(T::lit(0.75)))
}

/// Simulates one replicate of the branching dynamics from a single particle
/// at `spec.x0`.
pub fn run_replicate<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    spec: &ReplicateSpec<T>,
    rng: &mut R,
) -> Result<ReplicateOutput<T>> {
    spec.validate()?;
    let grid = &spec.census_grid;
    let n_census = grid.len();
    let mut rec = Recorder {
        grid,
        censuses: grid
            .iter()
            .map(|&time| Census {
                time,
                positions: Vec::new(),
                truncation_ok: Vec::new(),
                levels: Vec::new(),
                path_nodes: Vec::new(),
                absorbed_count: 0,
                accounting: Accounting::default(),
            })
            .collect(),
        created: vec![0; n_census],
        absorbed: vec![0; n_census],
        childless: vec![0; n_census],
        branched: vec![0; n_census],
        truncation_m: spec.truncation_m,
    };
    let mut events = EventLog {
        steps: 0,
        offspring_histogram: vec![0; params.offspring().max_children() + 1],
        waits: Vec::new(),
    };
    let mut nodes: Vec<PathNode<T>> = Vec::new();
    let rate = params.r();
    let tie = T::lit(TIE_TOLERANCE);

    let root_node = if spec.record_paths {
        nodes.push(PathNode {
            parent: NO_PARENT,
            time: T::zero(),
            position: spec.x0,
        });
        0
    } else {
        NO_PARENT
    };
    let root = Pending {
        time: T::zero(),
        position: spec.x0,
        level: spec.x0,
        escaped: false,
        node: root_node,
    };
    Recorder::<T>::bump(&mut rec.created, 0);
    if grid.first() == Some(&T::zero()) {
        rec.record(0, &root, spec.record_paths);
    }

    let mut stack = vec![root];
    while let Some(mut p) = stack.pop() {
        let wait = T::sample_exp1(rng) / rate;
        if spec.record_waits {
            events.waits.push(wait);
        }
        let mut branch_time = p.time + wait;
        let mut next = grid.partition_point(|&g| g <= p.time);
        if let Some(&g) = grid.get(next) {
            if (branch_time - g).abs() <= tie {
                branch_time = g;
            }
        }
        loop {
            let census_time = grid.get(next).copied().unwrap_or_else(T::infinity);
            let target = branch_time.min(census_time).min(spec.horizon);
            let dt = target - p.time;
            if dt > T::zero() {
                events.steps += 1;
                if events.steps > spec.event_cap {
                    return Ok(aborted(events));
                }
                let from = p.position;
                match sample_killed_step(from, dt, params, rng)? {
                    KilledStep::Absorbed(hit) => {
                        let b = rec.bucket(p.time + hit);
                        Recorder::<T>::bump(&mut rec.absorbed, b);
                        break;
                    }
                    KilledStep::Survived(y) => p.position = y,
                }
                if spec.bridge_correction && !p.escaped {
                    if let Some(m) = spec.truncation_m {
                        p.escaped = bridge_escape(m, p.time, from, target, p.position, rng);
                    }
                }
                p.time = target;
                p.level = p.level.max(level_at(p.position, p.time));
                if spec.record_paths {
                    nodes.push(PathNode {
                        parent: p.node,
                        time: p.time,
                        position: p.position,
                    });
                    p.node = (nodes.len() - 1) as u32;
                }
            }
            if p.time == branch_time {
                let b = rec.bucket(p.time);
                let children = params.offspring().sample(rng);
                events.offspring_histogram[children] += 1;
                if children == 0 {
                    Recorder::<T>::bump(&mut rec.childless, b);
                } else {
                    Recorder::<T>::bump(&mut rec.branched, b);
                }
                let at_census = grid.get(next).is_some_and(|&g| g == p.time);
                for _ in 0..children {
                    Recorder::<T>::bump(&mut rec.created, b);
                    if at_census {
                        rec.record(next, &p, spec.record_paths);
                    }
                    stack.push(p);
                }
                break;
            }
            if p.time == census_time {
                rec.record(next, &p, spec.record_paths);
                next += 1;
            }
            if p.time >= spec.horizon {
                break;
            }
        }
    }

    let censuses = rec.finish();
    let trace = MartingaleTrace::from_censuses(&censuses, params, spec.x0, &spec.sets);
    Ok(ReplicateOutput {
        status: ReplicateStatus::Completed,
        censuses,
        trace,
        events,
        genealogy: spec.record_paths.then_some(nodes),
    })
}

fn aborted<T>(events: EventLog<T>) -> ReplicateOutput<T> {
    ReplicateOutput {
        status: ReplicateStatus::Aborted { steps: events.steps },
        censuses: Vec::new(),
        trace: MartingaleTrace { entries: Vec::new() },
        events,
        genealogy: None,
    }
}

/// Brownian bridge from `(t0, y0)` to `(t1, y1)` crossing the chord of the
/// window between the two times.
fn bridge_escape<T: Scalar, R: Rng + ?Sized>(m: T, t0: T, y0: T, t1: T, y1: T, rng: &mut R) -> bool {
    let b0 = window(m, t0);
    let b1 = window(m, t1);
    if y0 >= b0 || y1 >= b1 {
        return true;
    }
    let p = (-(T::lit(2.0) * (b0 - y0) * (b1 - y1) / (t1 - t0))).exp();
    T::sample_open01(rng) < p
}

/// Runs replicates `0..n` in parallel, each on its own stream, and maps each
/// output through `summarize`. Results are returned in replicate order.
pub fn run_many<T, S, F>(
    params: &ModelParams<T>,
    spec: &ReplicateSpec<T>,
    master_seed: u64,
    n: usize,
    summarize: F,
) -> Result<Vec<S>>
where
    T: Scalar,
    S: Send,
    F: Fn(usize, ReplicateOutput<T>) -> S + Sync + Send,
{
    spec.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = spawn_rng_stream(master_seed, i as u64);
            run_replicate(params, spec, &mut rng).map(|out| summarize(i, out))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OffspringLaw;

    #[test]
    fn uniform_grid_includes_horizon() {
        assert_eq!(uniform_grid(1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(uniform_grid(1.0, 0.3).last(), Some(&1.0));
        assert_eq!(uniform_grid(1.0, 0.3).len(), 5);
    }

    #[test]
    fn rejects_bad_specs() {
        let p = ModelParams::dyadic(1.0, 1.0).unwrap();
        let mut rng = spawn_rng_stream(0, 0);
        let bad = [
            ReplicateSpec::new(0.0, 1.0, vec![0.0]),
            ReplicateSpec::new(1.0, 1.0, vec![0.5, 0.2]),
            ReplicateSpec::new(1.0, 1.0, vec![0.0, 2.0]),
            ReplicateSpec::new(1.0, 1.0, vec![0.0]).truncation(0.0),
        ];
        for s in &bad {
            assert!(run_replicate(&p, s, &mut rng).is_err());
        }
    }

    #[test]
    fn starts_with_unit_martingale() {
        let p = ModelParams::dyadic(1.0, 1.5).unwrap();
        let spec = ReplicateSpec::with_step(1.0, 2.0, 0.5);
        let out = run_replicate(&p, &spec, &mut spawn_rng_stream(1, 0)).unwrap();
        assert_eq!(out.trace.entries[0].d, 1.0);
        assert_eq!(out.censuses[0].alive(), 1);
    }

    #[test]
    fn no_branching_keeps_at_most_one_particle() {
        let p = ModelParams::new(1.0, 2.0, OffspringLaw::point_mass(1)).unwrap();
        let spec = ReplicateSpec::with_step(1.0, 3.0, 0.5);
        for i in 0..200 {
            let out = run_replicate(&p, &spec, &mut spawn_rng_stream(5, i)).unwrap();
            assert!(out.censuses.iter().all(|c| c.alive() <= 1));
        }
    }

    #[test]
    fn accounting_identity_holds() {
        let law: OffspringLaw = "pmf:0.2,0.1,0.5,0.2".parse().unwrap();
        let p = ModelParams::new(1.0, 1.2, law).unwrap();
        let spec = ReplicateSpec::with_step(1.0, 4.0, 0.5);
        for i in 0..100 {
            let out = run_replicate(&p, &spec, &mut spawn_rng_stream(6, i)).unwrap();
            for c in &out.censuses {
                let a = c.accounting;
                assert_eq!(a.created, c.alive() as u64 + a.absorbed + a.childless + a.branched);
                assert_eq!(c.absorbed_count, a.absorbed);
            }
        }
    }

    #[test]
    fn event_cap_aborts() {
        let p = ModelParams::dyadic(1.0, 3.0).unwrap();
        let spec = ReplicateSpec::with_step(2.0, 8.0, 1.0).event_cap(50);
        let mut hit = false;
        for i in 0..20 {
            let out = run_replicate(&p, &spec, &mut spawn_rng_stream(7, i)).unwrap();
            if let ReplicateStatus::Aborted { steps } = out.status {
                assert_eq!(steps, 51);
                assert!(out.censuses.is_empty());
                hit = true;
            }
        }
        assert!(hit);
    }

    #[test]
    fn truncation_is_hereditary_and_bounded() {
        let p = ModelParams::dyadic(1.0, 1.5).unwrap();
        let spec = ReplicateSpec::with_step(1.0, 4.0, 0.5).truncation(1.2).record_paths(true);
        for i in 0..50 {
            let out = run_replicate(&p, &spec, &mut spawn_rng_stream(8, i)).unwrap();
            let nodes = out.genealogy.as_ref().unwrap();
            for (ci, c) in out.censuses.iter().enumerate() {
                for (k, &ok) in c.truncation_ok.iter().enumerate() {
                    // recompute from the ancestral path
                    let mut cur = c.path_nodes[k];
                    let mut inside = true;
                    while cur != NO_PARENT {
                        let n = nodes[cur as usize];
                        inside &= n.position < window(1.2, n.time);
                        cur = n.parent;
                    }
                    assert_eq!(ok, inside);
                }
                let b = IntervalSet::positive();
                assert_eq!(out.shifted_truncated_count(ci, 1.2, 0.0, &b).unwrap(), c.truncated_count(&b));
                let via_paths = out.shifted_truncated_count(ci, 1.2, 1e-300, &b).unwrap();
                assert_eq!(via_paths, c.truncated_count(&b));
                assert!(c.truncated_count(&b) <= c.count(&b));
            }
            for e in &out.trace.entries {
                assert!(e.d_trunc <= e.d && e.d >= 0.0);
            }
        }
    }

    #[test]
    fn shifted_count_needs_genealogy() {
        let p = ModelParams::dyadic(1.0, 1.5).unwrap();
        let spec = ReplicateSpec::with_step(1.0, 1.0, 0.5);
        let out = run_replicate(&p, &spec, &mut spawn_rng_stream(9, 0)).unwrap();
        let b = IntervalSet::positive();
        assert_eq!(
            out.shifted_truncated_count(1, 2.0, 1.0, &b).unwrap_err(),
            Error::GenealogyNotRecorded
        );
    }

    #[test]
    fn bridge_correction_only_removes_particles() {
        let p = ModelParams::dyadic(1.0, 1.5).unwrap();
        let base = ReplicateSpec::with_step(1.0, 3.0, 0.5).truncation(1.5);
        let mut with_bridge = base.clone();
        with_bridge.bridge_correction = true;
        for i in 0..50 {
            let out = run_replicate(&p, &with_bridge, &mut spawn_rng_stream(10, i)).unwrap();
            for c in &out.censuses {
                for (k, &ok) in c.truncation_ok.iter().enumerate() {
                    if ok {
                        assert!(c.levels[k] < 1.5);
                    }
                }
            }
        }
    }

    #[test]
    fn run_many_is_order_independent() {
        let p = ModelParams::dyadic(1.0, 1.5).unwrap();
        let spec = ReplicateSpec::with_step(1.0, 3.0, 1.0);
        let a = run_many(&p, &spec, 11, 64, |_, o| o.trace.entries.last().unwrap().d).unwrap();
        let b: Vec<f64> = (0..64)
            .rev()
            .map(|i| {
                let o = run_replicate(&p, &spec, &mut spawn_rng_stream(11, i as u64)).unwrap();
                o.trace.entries.last().unwrap().d
            })
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn f32_engine_runs() {
        let p = ModelParams::<f32>::dyadic(1.0, 1.5).unwrap();
        let spec = ReplicateSpec::<f32>::with_step(1.0, 2.0, 0.5);
        let out = run_replicate(&p, &spec, &mut spawn_rng_stream(12, 0)).unwrap();
        assert_eq!(out.censuses.len(), 5);
    }
}
