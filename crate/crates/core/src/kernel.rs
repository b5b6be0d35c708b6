//! Exact distributional primitives for Brownian motion with drift `-c`
//! absorbed at the origin.
//!
//! Everything here is closed form except the samplers, which are exact in
//! distribution: the hitting time is inverse Gaussian with mean `x/c` and
//! shape `x^2`, and the surviving position is drawn by rejection from a
//! Gaussian proposal using the reflection identity
//! `p_t(x, y) = phi_t(y - x + ct) * (1 - exp(-2xy/t))`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{IntervalSet, ModelParams};
use crate::quadrature::{integrate, QuadOptions};
use crate::special::{erfcx, gaussian_density, norm_cdf, scaled_upper_tail};
use crate::Scalar;

/// Cap on proposal draws in [`sample_survivor_position`].
pub const REJECTION_LIMIT: u64 = 1_000_000;

/// Relative width at which the hitting-time bisection stops.
pub const BISECTION_REL_TOL: f64 = 1e-12;

/// Outcome of advancing one particle over a step of fixed length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KilledStep<T> {
    /// Still alive at the end of the step, at this (strictly positive)
    /// position.
    Survived(T),
    /// Absorbed at the origin after this much time (in `(0, t]`).
    Absorbed(T),
}

impl<T: Scalar> KilledStep<T> {
    pub fn survived(&self) -> bool {
        matches!(self, KilledStep::Survived(_))
    }

    pub fn position(&self) -> Option<T> {
        match *self {
            KilledStep::Survived(y) => Some(y),
            KilledStep::Absorbed(_) => None,
        }
    }

    pub fn hit_time(&self) -> Option<T> {
        match *self {
            KilledStep::Absorbed(s) => Some(s),
            KilledStep::Survived(_) => None,
        }
    }
}

/// `erfcx(a) - erfcx(b)` for `0 <= a <= b`, switching to the integral of
/// `-erfcx'` when the direct difference would cancel.
fn erfcx_gap<T: Scalar>(a: T, b: T) -> T {
    let ea = erfcx(a);
    let direct = ea - erfcx(b);
    if direct > T::lit(1e-4) * ea {
        return direct;
    }
    // d/dz erfcx(z) = 2 z erfcx(z) - 2/sqrt(pi)
    let two_over_sqrt_pi = T::lit(2.0) / T::PI().sqrt();
    let opts = QuadOptions::new(T::lit(1e-13), T::zero());
    match integrate(|z| two_over_sqrt_pi - T::lit(2.0) * z * erfcx(z), a, b, &opts) {
        Ok(r) => r.value,
        Err(_) => direct,
    }
}

/// `P_x(X_t > 0) = Phi((x - ct)/sqrt(t)) - e^{2cx} Phi(-(x + ct)/sqrt(t))`.
pub fn survival_probability<T: Scalar>(x: T, t: T, params: &ModelParams<T>) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if t <= T::zero() {
        return T::one();
    }
    let c = params.c();
    let sd = t.sqrt();
    let m = x - c * t;
    let value = if m >= T::zero() {
        norm_cdf(m / sd) - scaled_upper_tail(T::lit(2.0) * c * x, (x + c * t) / sd)
    } else {
        let root2t = (T::lit(2.0) * t).sqrt();
        let a = -m / root2t;
        let b = (x + c * t) / root2t;
        T::lit(0.5) * (-(a * a)).exp() * erfcx_gap(a, b)
    };
    clamp_probability(value, x, t)
}

/// Natural log of [`survival_probability`], finite as long as the
/// probability is representable as a log.
pub fn log_survival_probability<T: Scalar>(x: T, t: T, params: &ModelParams<T>) -> T {
    let c = params.c();
    let m = x - c * t;
    if m >= T::zero() || x <= T::zero() || t <= T::zero() {
        return survival_probability(x, t, params).ln();
    }
    let root2t = (T::lit(2.0) * t).sqrt();
    let a = -m / root2t;
    let b = (x + c * t) / root2t;
    -(a * a) + (T::lit(0.5) * erfcx_gap(a, b)).ln()
}

fn clamp_probability<T: Scalar>(value: T, x: T, t: T) -> T {
    if value < T::zero() {
        log::warn!("survival probability at x={x}, t={t} cancelled to {value}; clamped to 0");
        T::zero()
    } else if value > T::one() {
        T::one()
    } else {
        value
    }
}

/// CDF of the hitting time of the origin, `P_x(H_0 <= s) = 1 - P_x(X_s > 0)`,
/// evaluated without forming the difference.
pub fn hitting_time_cdf<T: Scalar>(x: T, s: T, params: &ModelParams<T>) -> T {
    if s <= T::zero() {
        return T::zero();
    }
    if x <= T::zero() {
        return T::one();
    }
    let c = params.c();
    let sd = s.sqrt();
    let m = x - c * s;
    let reflected = scaled_upper_tail(T::lit(2.0) * c * x, (x + c * s) / sd);
    let direct = if m >= T::zero() {
        scaled_upper_tail(T::zero(), m / sd)
    } else {
        norm_cdf(-m / sd)
    };
    (direct + reflected).min(T::one())
}

/// Density of the hitting time of the origin:
/// `x / sqrt(2 pi s^3) * exp(cx - lambda s - x^2 / 2s)`.
pub fn first_passage_density<T: Scalar>(x: T, s: T, params: &ModelParams<T>) -> T {
    if s <= T::zero() || x <= T::zero() {
        return T::zero();
    }
    let c = params.c();
    let d = x - c * s;
    x / (T::TAU() * s * s * s).sqrt() * (-(d * d) / (T::lit(2.0) * s)).exp()
}

/// Sub-probability density of `X_t` on `(0, inf)` for the absorbed motion
/// started at `x`.
pub fn killed_density<T: Scalar>(x: T, y: T, t: T, params: &ModelParams<T>) -> T {
    if y <= T::zero() || x <= T::zero() {
        return T::zero();
    }
    let c = params.c();
    let free = gaussian_density(y - x + c * t, t);
    free * -(-(T::lit(2.0) * x * y / t)).exp_m1()
}

/// `P_x(X_t in B)` in closed form.
pub fn transition_probability<T: Scalar>(
    x: T,
    b: &IntervalSet<T>,
    t: T,
    params: &ModelParams<T>,
) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if b.is_positive_half_line() {
        return survival_probability(x, t, params);
    }
    let c = params.c();
    let sd = t.sqrt();
    let m = x - c * t;
    let log_scale = T::lit(2.0) * c * x;
    let upper_mass = |lo: T| {
        // P(free walk > lo) - e^{2cx} P(free walk > lo + 2x), both from
        // N(x - ct, t) upper tails.
        let z = (lo - m) / sd;
        let free = if z >= T::zero() {
            scaled_upper_tail(T::zero(), z)
        } else {
            norm_cdf(-z)
        };
        free - scaled_upper_tail(log_scale, (lo + x + c * t) / sd)
    };
    let total = b.intervals().iter().fold(T::zero(), |acc, &(lo, hi)| {
        let hi_mass = if hi.is_infinite() { T::zero() } else { upper_mass(hi) };
        acc + (upper_mass(lo) - hi_mass)
    });
    total.max(T::zero())
}

/// `P_x(X_t > 0) t^{3/2} e^{lambda t} / h(x) - 1`, the relative error of the
/// large-time asymptotics.
pub fn measured_epsilon<T: Scalar>(x: T, t: T, params: &ModelParams<T>) -> T {
    let log_h = params.ground_state(x).ln();
    let log_p = log_survival_probability(x, t, params);
    (log_p + T::lit(1.5) * t.ln() + params.lambda() * t - log_h).exp() - T::one()
}

/// `P_x(X_t in B) t^{3/2} e^{lambda t} / h(x) - nu(B)`.
pub fn measured_epsilon_b<T: Scalar>(x: T, t: T, b: &IntervalSet<T>, params: &ModelParams<T>) -> T {
    let p = transition_probability(x, b, t, params);
    let scale = (T::lit(1.5) * t.ln() + params.lambda() * t).exp() / params.ground_state(x);
    p * scale - params.nu(b)
}

/// Envelope for the asymptotic error terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticEnvelope<T> {
    /// `e^{-x^2/2t} (1 - 3/(2 lambda t)) - 1`; valid for every `c`.
    pub eps_lower: T,
    /// `e^{-x^2/2t} (1 - 3/(2t)) - 1`, the form without `lambda`. It agrees
    /// with `eps_lower` only when `lambda = 1` and is not a valid bound for
    /// `lambda < 1`.
    pub eps_lower_unscaled: T,
    pub eps_upper: T,
    /// `min(C_B (x+1)^2 / t, 2)`.
    pub eps_b_bound: T,
}

/// Default for the constant `C_B` in the set-restricted error bound.
pub const DEFAULT_EPS_B_CONSTANT: f64 = 1.0;

pub fn asymptotic_error_bounds<T: Scalar>(
    x: T,
    t: T,
    params: &ModelParams<T>,
    eps_b_constant: T,
) -> Result<AsymptoticEnvelope<T>> {
    if !(x > T::zero()) {
        return Err(crate::error::invalid("x", format!("must be > 0, got {x}")));
    }
    if !(t > T::lit(1.5)) {
        return Err(crate::error::invalid("t", format!("must be > 3/2, got {t}")));
    }
    let gauss = (-(x * x) / (T::lit(2.0) * t)).exp();
    let three_halves = T::lit(1.5);
    let eps_lower = gauss * (T::one() - three_halves / (params.lambda() * t)) - T::one();
    let eps_lower_unscaled = gauss * (T::one() - three_halves / t) - T::one();
    let spread = eps_b_constant * (x + T::one()) * (x + T::one()) / t;
    Ok(AsymptoticEnvelope {
        eps_lower,
        eps_lower_unscaled,
        eps_upper: T::zero(),
        eps_b_bound: spread.min(T::lit(2.0)),
    })
}

/// Draws the hitting time of the origin from `x`: inverse Gaussian with mean
/// `x/c` and shape `x^2` by the transformation-with-rejection method, falling
/// back to CDF inversion if the transform degenerates.
pub fn sample_hitting_time<T: Scalar, R: Rng + ?Sized>(
    x: T,
    params: &ModelParams<T>,
    rng: &mut R,
) -> T {
    let mean = x / params.c();
    let shape = x * x;
    let v = T::sample_standard_normal(rng);
    let y = mean * v * v;
    let root = (y * y + T::lit(4.0) * shape * y).sqrt();
    let denom = y + root;
    // Smaller root of the transform, written without cancellation.
    let small = T::lit(4.0) * mean * shape * y / (denom * denom);
    let u = T::sample_open01(rng);
    let h = if y == T::zero() {
        mean
    } else if u <= mean / (mean + small) {
        small
    } else {
        mean * mean / small
    };
    if h.is_finite() && h > T::zero() {
        h
    } else {
        invert_hitting_time(x, T::sample_open01(rng), T::infinity(), params)
    }
}

/// Draws the hitting time conditioned on `H_0 <= t` by bisection on the CDF.
pub fn sample_hitting_time_within<T: Scalar, R: Rng + ?Sized>(
    x: T,
    t: T,
    params: &ModelParams<T>,
    rng: &mut R,
) -> T {
    invert_hitting_time(x, T::sample_open01(rng), t, params)
}

/// Solves `P(H_0 <= s) = u * P(H_0 <= limit)` for `s` in `(0, limit]`.
fn invert_hitting_time<T: Scalar>(x: T, u: T, limit: T, params: &ModelParams<T>) -> T {
    let mut hi = if limit.is_finite() {
        limit
    } else {
        // Unconditional inversion: grow a bracket until it holds the quantile.
        let mut b = (x / params.c()).max(T::one());
        while hitting_time_cdf(x, b, params) < u && b < T::max_value() / T::lit(4.0) {
            b = b * T::lit(2.0);
        }
        b
    };
    let target = if limit.is_finite() {
        u * hitting_time_cdf(x, limit, params)
    } else {
        u
    };
    let mut lo = T::zero();
    let tol = T::lit(BISECTION_REL_TOL) * hi;
    while hi - lo > tol {
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if hitting_time_cdf(x, mid, params) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    T::lit(0.5) * (lo + hi)
}

/// Draws `X_t` from `x` conditioned on survival to time `t`.
pub fn sample_survivor_position<T: Scalar, R: Rng + ?Sized>(
    x: T,
    t: T,
    params: &ModelParams<T>,
    rng: &mut R,
) -> Result<T> {
    let c = params.c();
    let sd = t.sqrt();
    let mean = x - c * t;
    let cut = -mean / sd;
    // Far-left proposals almost never land in (0, inf); draw from the
    // truncated normal directly there.
    let use_tail = cut > T::lit(3.0);
    let alpha = T::lit(0.5) * (cut + (cut * cut + T::lit(4.0)).sqrt());
    let two_x_over_t = T::lit(2.0) * x / t;
    let mut iterations = 0u64;
    while iterations < REJECTION_LIMIT {
        iterations += 1;
        let y = if use_tail {
            let z = cut + T::sample_exp1(rng) / alpha;
            let d = z - alpha;
            if T::sample_open01(rng) > (-(d * d) / T::lit(2.0)).exp() {
                continue;
            }
            mean + sd * z
        } else {
            let y = mean + sd * T::sample_standard_normal(rng);
            if y <= T::zero() {
                continue;
            }
            y
        };
        if y <= T::zero() {
            continue;
        }
        let accept = -(-(two_x_over_t * y)).exp_m1();
        if T::sample_open01(rng) < accept {
            return Ok(y);
        }
    }
    Err(Error::RejectionLimit {
        limit: REJECTION_LIMIT,
        x: x.to_f64_lossy(),
        t: t.to_f64_lossy(),
    })
}

/// Advances a particle at `x` by time `t` exactly: the hitting time is drawn
/// first; if it exceeds `t` the position is drawn from the survival-
/// conditioned law.
pub fn sample_killed_step<T: Scalar, R: Rng + ?Sized>(
    x: T,
    t: T,
    params: &ModelParams<T>,
    rng: &mut R,
) -> Result<KilledStep<T>> {
    let hit = sample_hitting_time(x, params, rng);
    if hit <= t {
        return Ok(KilledStep::Absorbed(hit));
    }
    sample_survivor_position(x, t, params, rng).map(KilledStep::Survived)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_split, integrate_to_infinity};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(c: f64) -> ModelParams {
        ModelParams::dyadic(c, 1.0).unwrap()
    }

    // Literal reflection form phi_t(y - (x - ct)) - e^{2cx} phi_t(y + x + ct).
    fn reflection_form(x: f64, y: f64, t: f64, c: f64) -> f64 {
        gaussian_density(y - (x - c * t), t) - (2.0 * c * x).exp() * gaussian_density(y + x + c * t, t)
    }

    #[test]
    fn survival_reference_value() {
        // mpmath, 40 digits: 0.3318979987768293935728...
        let s = survival_probability(1.0, 1.0, &p(1.0));
        assert!((s - 0.331_897_998_776_829_4).abs() < 1e-15, "{s}");
    }

    #[test]
    fn survival_limits() {
        let pp = p(1.0);
        assert!((survival_probability(1.0, 1e-9, &pp) - 1.0).abs() < 1e-12);
        assert_eq!(survival_probability(0.0, 1.0, &pp), 0.0);
        let mut prev = 1.0;
        for t in [0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0] {
            let s = survival_probability(1.0, t, &pp);
            assert!(s < prev && s > 0.0);
            prev = s;
        }
    }

    #[test]
    fn survival_is_below_leading_asymptotics() {
        let pp = p(1.0);
        for x in [0.5, 1.0, 2.0, 5.0] {
            for t in [0.5, 2.0, 5.0, 10.0, 50.0] {
                let s = survival_probability(x, t, &pp);
                let lead = pp.ground_state(x) * t.powf(-1.5) * (-pp.lambda() * t).exp();
                assert!(s <= lead * (1.0 + 1e-12), "x={x} t={t}");
            }
        }
    }

    #[test]
    fn log_survival_is_consistent_and_finite_far_out() {
        let pp = p(1.0);
        for (x, t) in [(1.0, 1.0), (0.5, 10.0), (2.0, 50.0)] {
            let l = log_survival_probability(x, t, &pp);
            assert!((l.exp() - survival_probability(x, t, &pp)).abs() < 1e-14);
        }
        let far = log_survival_probability(1.0, 5000.0, &pp);
        assert!(far.is_finite() && far < -2000.0);
    }

    #[test]
    fn tiny_start_does_not_cancel() {
        // For x -> 0, P_x(X_t > 0) ~ x * d/dx P at 0, so the ratio is smooth.
        let pp = p(1.0);
        let a = survival_probability(1e-7, 1.0, &pp) / 1e-7;
        let b = survival_probability(2e-7, 1.0, &pp) / 2e-7;
        assert!(a > 0.0 && ((a - b) / a).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn killed_density_matches_reflection_form() {
        for c in [0.5, 1.0, 2.0] {
            for x in [0.3, 1.0, 2.5] {
                for t in [0.2, 1.0, 4.0] {
                    for y in [0.05, 0.5, 1.0, 3.0] {
                        let a = killed_density(x, y, t, &p(c));
                        let b = reflection_form(x, y, t, c);
                        assert!((a - b).abs() < 1e-13 * (1.0 + b.abs()), "{c} {x} {t} {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn rejection_acceptance_equals_density_ratio() {
        // killed density / N(x - ct, t) density == 1 - exp(-2xy/t)
        for c in [0.5, 1.0, 2.0] {
            for x in [0.3, 1.0, 2.5] {
                for t in [0.2, 1.0, 4.0] {
                    for y in [0.05, 0.5, 1.0, 3.0] {
                        let ratio = reflection_form(x, y, t, c) / gaussian_density(y - (x - c * t), t);
                        let accept = 1.0 - (-2.0 * x * y / t).exp();
                        assert!((ratio - accept).abs() < 1e-12, "{c} {x} {t} {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn killed_density_edges() {
        let pp = p(1.0);
        assert_eq!(killed_density(1.0, -1.0, 1.0, &pp), 0.0);
        assert_eq!(killed_density(1.0, 0.0, 1.0, &pp), 0.0);
        assert!(killed_density(1.0, 1e-10, 1.0, &pp) < 1e-9);
    }

    #[test]
    fn density_integrates_to_survival() {
        let pp = p(1.0);
        let o = QuadOptions::new(1e-11, 0.0);
        for (x, t) in [(1.0f64, 1.0f64), (0.5, 3.0), (3.0, 0.5)] {
            let q = integrate_split(|y| killed_density(x, y, t, &pp), 0.0, x + 10.0 * t.sqrt(), 1.0, &o).unwrap();
            let s = survival_probability(x, t, &pp);
            assert!(((q.value - s) / s).abs() < 1e-8);
        }
    }

    #[test]
    fn hitting_cdf_complements_survival() {
        let pp = p(1.0);
        for (x, s) in [(1.0, 0.1), (1.0, 1.0), (0.2, 10.0), (4.0, 0.5)] {
            let f = hitting_time_cdf(x, s, &pp);
            assert!((f + survival_probability(x, s, &pp) - 1.0).abs() < 1e-14);
        }
        let o = QuadOptions::new(1e-12, 0.0);
        let q = integrate_to_infinity(|s| first_passage_density(2.0, s, &pp), 0.0, 0.25, &o).unwrap();
        assert!((q.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn transition_probability_matches_quadrature() {
        let pp = p(1.0);
        let o = QuadOptions::new(1e-12, 0.0);
        for (lo, hi) in [(0.0, 1.0), (1.0, 3.0), (0.5, 0.7)] {
            let b = IntervalSet::single(lo, hi).unwrap();
            let q = integrate(|y| killed_density(1.0, y, 1.5, &pp), lo, hi, &o).unwrap();
            assert!((transition_probability(1.0, &b, 1.5, &pp) - q.value).abs() < 1e-12);
        }
        let b = IntervalSet::above(1.0).unwrap();
        let q = integrate_split(|y| killed_density(1.0, y, 1.5, &pp), 1.0, 8.0, 1.0, &o).unwrap();
        assert!((transition_probability(1.0, &b, 1.5, &pp) - q.value).abs() < 1e-12);
    }

    #[test]
    fn envelope_shape() {
        let pp = p(std::f64::consts::SQRT_2);
        let e = asymptotic_error_bounds(1.0, 4.0, &pp, 1.0).unwrap();
        // lambda = 1: both lower forms coincide
        assert!((e.eps_lower - e.eps_lower_unscaled).abs() < 1e-15);
        assert_eq!(e.eps_upper, 0.0);
        assert_eq!(e.eps_b_bound, 1.0);
        let clamp = asymptotic_error_bounds(5.0, 2.0, &pp, 1.0).unwrap();
        assert_eq!(clamp.eps_b_bound, 2.0);
        assert!(asymptotic_error_bounds(1.0, 1.5, &pp, 1.0).is_err());
        assert!(asymptotic_error_bounds(0.0, 3.0, &pp, 1.0).is_err());
    }

    #[test]
    fn epsilon_vanishes_at_large_times() {
        let pp = p(1.0);
        let mut prev = f64::INFINITY;
        for t in [10.0, 100.0, 1000.0, 10_000.0] {
            let e = measured_epsilon(1.0, t, &pp).abs();
            assert!(e < prev);
            prev = e;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn small_step_keeps_position() {
        let pp = p(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            match sample_killed_step(1.0, 1e-6, &pp, &mut rng).unwrap() {
                KilledStep::Survived(y) => assert!((y - 1.0).abs() < 1e-2),
                KilledStep::Absorbed(_) => panic!("absorbed within 1e-6"),
            }
        }
    }

    #[test]
    fn step_sample_invariants() {
        let pp = p(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let s = sample_killed_step(0.7, 0.9, &pp, &mut rng).unwrap();
            assert_eq!(s.survived(), s.position().is_some());
            assert_eq!(s.survived(), s.hit_time().is_none());
            if let Some(y) = s.position() {
                assert!(y > 0.0);
            }
            if let Some(h) = s.hit_time() {
                assert!(h > 0.0 && h <= 0.9);
            }
        }
    }

    #[test]
    fn conditional_hitting_time_is_in_range() {
        let pp = p(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let h = sample_hitting_time_within(1.0, 2.0, &pp, &mut rng);
            assert!(h > 0.0 && h <= 2.0);
        }
    }

    #[test]
    fn same_seed_same_steps() {
        let pp = p(1.0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| sample_killed_step(1.0, 1.0, &pp, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }
}
