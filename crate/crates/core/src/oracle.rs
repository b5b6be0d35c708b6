//! First and second moment oracles: many-to-one by quadrature, the
//! many-to-two decomposition by nested quadrature, and an independent
//! two-spine Monte Carlo estimator.

use rand::Rng;
use rayon::prelude::*;

use crate::engine::spawn_rng_stream;
use crate::error::{invalid, Result};
use crate::kernel::{first_passage_density, killed_density, log_survival_probability, sample_killed_step, survival_probability, KilledStep};
use crate::model::{IntervalSet, ModelParams};
use crate::quadrature::{integrate, integrate_split, QuadOptions};
use crate::special::norm_pdf;
use crate::stats::Estimate;
use crate::Scalar;

/// Relative tolerance of the first-moment quadrature.
pub const FIRST_MOMENT_REL_TOL: f64 = 1e-8;
/// Relative tolerance of the outer second-moment quadrature.
pub const SECOND_MOMENT_REL_TOL: f64 = 1e-6;

// Half-width, in standard deviations, of the window the Gaussian-type
// integrands are integrated over. exp(-40^2/2) is far below f64 resolution.
const WINDOW_SDS: f64 = 40.0;

/// Integration window `[lo, hi]` in `(0, inf)` holding all the mass of a
/// Gaussian-type integrand centred at `centre` with standard deviation `sd`.
fn window<T: Scalar>(centre: T, sd: T) -> (T, T) {
    let w = T::lit(WINDOW_SDS) * sd;
    ((centre - w).max(T::zero()), (centre + w).max(T::zero()))
}

/// `P_x(X_t in B)` by quadrature of the killed density over each interval.
pub fn transition_probability_quadrature<T: Scalar>(
    x: T,
    b: &IntervalSet<T>,
    t: T,
    params: &ModelParams<T>,
    rel_tol: T,
) -> Result<T> {
    let (wlo, whi) = window(x - params.c() * t, t.sqrt());
    let opts = QuadOptions::new(rel_tol, T::lit(1e-300).max(T::min_positive_value()));
    let mut total = T::zero();
    for &(lo, hi) in b.intervals() {
        let (a, z) = (lo.max(wlo), hi.min(whi));
        if a < z {
            total = total + integrate(|y| killed_density(x, y, t, params), a, z, &opts)?.value;
        }
    }
    Ok(total)
}

/// `P_x(X_t > 0)` as the tail `int_t^inf` of the first-passage density,
/// independent of the closed-form reflection formula.
pub fn survival_probability_quadrature<T: Scalar>(x: T, t: T, params: &ModelParams<T>, rel_tol: T) -> Result<T> {
    check_xt(x, t)?;
    // the head covers the bulk of the hitting law around its mean x/c; the
    // tail decays like e^{-lambda s}
    let split = t + x / params.c() + T::lit(10.0);
    let opts = QuadOptions::new(rel_tol, T::zero());
    Ok(integrate_split(|s| first_passage_density(x, s, params), t, split, params.lambda(), &opts)?.value)
}

/// Many-to-one: `E_x |N_t(B)| = e^{r(mu1-1)t} P_x(X_t in B)`, with the
/// probability from quadrature, or the closed form when `B = (0, inf)`.
pub fn expected_count<T: Scalar>(x: T, t: T, b: &IntervalSet<T>, params: &ModelParams<T>) -> Result<T> {
    check_xt(x, t)?;
    let log_growth = params.branching_growth() * t;
    if b.is_positive_half_line() {
        return Ok((log_growth + log_survival_probability(x, t, params)).exp());
    }
    let p = transition_probability_quadrature(x, b, t, params, T::lit(FIRST_MOMENT_REL_TOL))?;
    Ok(log_growth.exp() * p)
}

/// Large-time equivalent `e^{(r(mu1-1)-lambda)t} t^{-3/2} h(x) nu(B)`.
pub fn expected_count_asymptotic<T: Scalar>(x: T, t: T, b: &IntervalSet<T>, params: &ModelParams<T>) -> T {
    (params.growth_exponent() * t).exp() * t.powf(T::lit(-1.5)) * params.ground_state(x) * params.nu(b)
}

/// The two summands of the second moment: the diagonal term
/// `e^{r(mu1-1)t} P_x(X_t>0)` and the pair term from branch splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondMoment<T> {
    pub diagonal: T,
    pub pairs: T,
}

impl<T: Scalar> SecondMoment<T> {
    pub fn total(&self) -> T {
        self.diagonal + self.pairs
    }
}

/// `E_x |N_t|^2` from the many-to-two decomposition
///
/// `e^{at} P_x(X_t>0) + (mu2-mu1) r e^{2at} int_0^t e^{-az} E_x[1{X_z>0} P_{X_z}(X_{t-z}>0)^2] dz`
///
/// with `a = r(mu1-1)`, the inner expectation by quadrature of the killed
/// density.
pub fn second_moment_exact<T: Scalar>(x: T, t: T, params: &ModelParams<T>) -> Result<SecondMoment<T>> {
    check_xt(x, t)?;
    let a = params.branching_growth();
    let split_rate = split_rate(params);
    let diagonal = (a * t).exp() * survival_probability(x, t, params);
    if split_rate == T::zero() {
        return Ok(SecondMoment {
            diagonal,
            pairs: T::zero(),
        });
    }
    let tiny = T::lit(1e-300).max(T::min_positive_value());
    let inner_opts = QuadOptions::new(T::lit(SECOND_MOMENT_REL_TOL) * T::lit(1e-3), tiny);
    let outer_opts = QuadOptions::new(T::lit(SECOND_MOMENT_REL_TOL), tiny);
    let c = params.c();
    let mut inner_error = None;
    let outer = integrate(
        |z: T| {
            if z <= T::zero() {
                let s = survival_probability(x, t, params);
                return s * s;
            }
            let rest = t - z;
            let (lo, hi) = window(x - c * z, z.sqrt());
            let f = |y: T| {
                let s = survival_probability(y, rest, params);
                killed_density(x, y, z, params) * s * s
            };
            match integrate(f, lo, hi, &inner_opts) {
                Ok(r) => (-a * z).exp() * r.value,
                Err(e) => {
                    inner_error.get_or_insert(e);
                    T::zero()
                }
            }
        },
        T::zero(),
        t,
        &outer_opts,
    )?;
    if let Some(e) = inner_error {
        return Err(e);
    }
    Ok(SecondMoment {
        diagonal,
        pairs: split_rate * (T::lit(2.0) * a * t).exp() * outer.value,
    })
}

/// Rate `(mu2 - mu1) r` at which the two spines separate.
pub fn split_rate<T: Scalar>(params: &ModelParams<T>) -> T {
    let o = params.offspring();
    (o.mu2() - o.mu1()) * params.r()
}

/// Exponent `r(Var(m) + (mu1-1)^2)` of the two-spine weight. Equals
/// `r(mu2 - 2 mu1 + 1)`.
pub fn spine_weight_exponent<T: Scalar>(params: &ModelParams<T>) -> T {
    let o = params.offspring();
    let m1 = o.mu1() - T::one();
    let exponent = params.r() * (o.variance() + m1 * m1);
    debug_assert!({
        let alt = params.r() * (o.mu2() - T::lit(2.0) * o.mu1() + T::one());
        (exponent - alt).abs() <= T::lit(1e-5) * (T::one() + alt.abs())
    });
    exponent
}

/// One draw of the two-spine construction over `[0, t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinePair<T> {
    /// `min(E, t)` with `E` the split clock.
    pub split_time: T,
    /// Position of the shared path at the split, 0 if it was absorbed.
    pub common_path_end: T,
    /// Spine positions at `t`, 0 when absorbed.
    pub end1: T,
    pub end2: T,
    pub weight: T,
}

pub fn sample_spine_pair<T: Scalar, R: Rng + ?Sized>(
    x: T,
    t: T,
    params: &ModelParams<T>,
    rng: &mut R,
) -> Result<SpinePair<T>> {
    let rate = split_rate(params);
    let clock = if rate > T::zero() {
        T::sample_exp1(rng) / rate
    } else {
        T::infinity()
    };
    let split_time = clock.min(t);
    let weight = (spine_weight_exponent(params) * split_time).exp();
    let common = match sample_killed_step(x, split_time, params, rng)? {
        KilledStep::Survived(y) => y,
        KilledStep::Absorbed(_) => T::zero(),
    };
    let rest = t - split_time;
    let (end1, end2) = if common == T::zero() {
        (T::zero(), T::zero())
    } else if rest <= T::zero() {
        (common, common)
    } else {
        let mut continue_from = |y: T| -> Result<T> {
            Ok(sample_killed_step(y, rest, params, rng)?.position().unwrap_or_else(T::zero))
        };
        (continue_from(common)?, continue_from(common)?)
    };
    Ok(SpinePair {
        split_time,
        common_path_end: common,
        end1,
        end2,
        weight,
    })
}

const SPINE_CHUNK: usize = 8192;

/// Two-spine Monte Carlo estimate of `E_x[sum_{u,v in N_t} 1{u in f1} 1{v in f2}]`.
///
/// Samples are drawn in fixed chunks, each on its own stream of `seed`, so
/// the result does not depend on the thread count.
pub fn spine_second_moment_mc(
    x: f64,
    t: f64,
    f1: &IntervalSet<f64>,
    f2: &IntervalSet<f64>,
    params: &ModelParams<f64>,
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    check_xt(x, t)?;
    if n == 0 {
        return Err(invalid("n", "need at least one sample"));
    }
    let scale = (2.0 * params.branching_growth() * t).exp();
    let chunks = n.div_ceil(SPINE_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = spawn_rng_stream(seed, k as u64);
            let len = SPINE_CHUNK.min(n - k * SPINE_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let pair = sample_spine_pair(x, t, params, &mut rng)?;
                let hit = f1.contains(pair.end1) && f2.contains(pair.end2);
                let v = if hit { pair.weight } else { 0.0 };
                s += v;
                s2 += v * v;
            }
            Ok((s, s2))
        })
        .collect::<Result<_>>()?;
    let (s, s2) = sums.iter().fold((0.0, 0.0), |(a, b), &(c, d)| (a + c, b + d));
    let nf = n as f64;
    let mean = s / nf;
    let var = if n > 1 { (s2 - nf * mean * mean).max(0.0) / (nf - 1.0) } else { 0.0 };
    Ok(Estimate {
        mean: scale * mean,
        stderr: scale * (var / nf).sqrt(),
        n,
    })
}

/// `e^{lambda t} int_0^inf p_t(x,y) h(y) dy / h(x)`; equals 1 for the
/// ground state.
pub fn mean_one_check<T: Scalar>(x: T, t: T, params: &ModelParams<T>) -> Result<T> {
    check_xt(x, t)?;
    let c = params.c();
    let lambda = params.lambda();
    let sd = t.sqrt();
    // Tilting by e^{cy} moves the centre of the integrand from x - ct to x.
    let (lo, hi) = window(x, sd);
    let opts = QuadOptions::new(T::lit(1e-12), T::zero());
    let log_hx = params.ground_state(x).ln();
    let r = integrate(
        |y: T| {
            if y <= T::zero() {
                return T::zero();
            }
            let d = (y - x + c * t) / sd;
            let log_free = norm_pdf(T::zero()).ln() - T::lit(0.5) * d * d - sd.ln();
            let killed = -(-(T::lit(2.0) * x * y / t)).exp_m1();
            let log_h = params.ground_state(y).ln();
            killed * (log_free + log_h + lambda * t - log_hx).exp()
        },
        lo,
        hi,
        &opts,
    )?;
    Ok(r.value)
}

/// The two constants of the truncated second-moment bound.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundConstants {
    pub c: f64,
    pub delta: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self { c: 1.0, delta: 1.0 }
    }
}

/// `C h(x) e^{(r(mu1-1)-lambda)s/2} (t^{-3/2} e^{(r(mu1-1)-lambda)t})^2`,
/// defined for `1 <= M <= delta s^{1/4}`.
pub fn truncated_second_moment_bound(
    x: f64,
    t: f64,
    s: f64,
    m: f64,
    params: &ModelParams<f64>,
    constants: &BoundConstants,
) -> Result<f64> {
    check_xt(x, t)?;
    if !(s >= 0.0) {
        return Err(invalid("s", format!("must be >= 0, got {s}")));
    }
    let cap = constants.delta * s.powf(0.25);
    if !(1.0 <= m && m <= cap) {
        return Err(invalid("M", format!("need 1 <= M <= delta s^(1/4) = {cap}, got {m}")));
    }
    Ok(truncated_second_moment_shape(x, t, s, params) * constants.c)
}

/// The bound without its constant and without the precondition on `M`.
pub fn truncated_second_moment_shape(x: f64, t: f64, s: f64, params: &ModelParams<f64>) -> f64 {
    let g = params.growth_exponent();
    let first = t.powf(-1.5) * (g * t).exp();
    params.ground_state(x) * (g * s / 2.0).exp() * first * first
}

fn check_xt<T: Scalar>(x: T, t: T) -> Result<()> {
    if !(x > T::zero() && x.is_finite()) {
        return Err(invalid("x", format!("must be finite and > 0, got {x}")));
    }
    if !(t > T::zero() && t.is_finite()) {
        return Err(invalid("t", format!("must be finite and > 0, got {t}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::transition_probability;
    use crate::model::OffspringLaw;

    fn params(r: f64) -> ModelParams {
        ModelParams::dyadic(1.0, r).unwrap()
    }

    #[test]
    fn expected_count_reference() {
        // mpmath: e^{0.6} * P_1(X_1 > 0)
        let v = expected_count(1.0, 1.0, &IntervalSet::positive(), &params(0.6)).unwrap();
        assert!((v - 0.604_757_583_383_247).abs() < 1e-13, "{v}");
    }

    #[test]
    fn quadrature_probability_matches_closed_form() {
        let p = params(0.6);
        let sets = ["0,1", "1,3", "0.5,2;4,inf", "2,inf"];
        for s in sets {
            let b: IntervalSet = s.parse().unwrap();
            for (x, t) in [(1.0, 1.0), (0.3, 0.05), (4.0, 3.0)] {
                let q = transition_probability_quadrature(x, &b, t, &p, 1e-10).unwrap();
                let c = transition_probability(x, &b, t, &p);
                assert!((q - c).abs() <= 1e-9 * c.max(1e-12), "{s} {x} {t}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn expected_count_is_additive() {
        let p = params(1.5);
        let b1: IntervalSet = "0,1".parse().unwrap();
        let b2: IntervalSet = "1,inf".parse().unwrap();
        let whole = IntervalSet::positive();
        let a = expected_count(1.0, 2.0, &b1, &p).unwrap() + expected_count(1.0, 2.0, &b2, &p).unwrap();
        let w = expected_count(1.0, 2.0, &whole, &p).unwrap();
        assert!((a - w).abs() < 1e-8 * w);
        assert_eq!(expected_count(1.0, 2.0, &IntervalSet::empty(), &p).unwrap(), 0.0);
    }

    #[test]
    fn no_branching_moments_reduce_to_survival() {
        let p = ModelParams::new(1.0, 0.7, OffspringLaw::point_mass(1)).unwrap();
        let s: f64 = survival_probability(1.0, 2.0, &p);
        let e = expected_count(1.0, 2.0, &IntervalSet::positive(), &p).unwrap();
        let m2 = second_moment_exact(1.0, 2.0, &p).unwrap();
        assert!((e - s).abs() < 1e-15);
        assert!((m2.total() - s).abs() < 1e-15);
    }

    #[test]
    fn second_moment_small_time_and_cauchy_schwarz() {
        let p = params(0.6);
        let m = second_moment_exact(1.0, 1e-4, &p).unwrap().total();
        assert!((m - 1.0).abs() < 1e-3);
        for (x, t) in [(1.0, 1.0), (0.5, 2.0), (2.0, 3.0)] {
            let m2 = second_moment_exact(x, t, &p).unwrap().total();
            let m1 = expected_count(x, t, &IntervalSet::positive(), &p).unwrap();
            assert!(m2 >= m1 * m1);
        }
    }

    #[test]
    fn mean_one_identity() {
        for (x, c, t) in [(1.0f64, 1.0f64, 1.0f64), (0.1, 2.0, 5.0), (5.0, 0.5, 0.1)] {
            let p = ModelParams::dyadic(c, 1.0).unwrap();
            let v = mean_one_check(x, t, &p).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "{x} {c} {t}: {v}");
        }
    }

    #[test]
    fn spine_exponent_identity() {
        let law: OffspringLaw = "pmf:0.2,0.1,0.4,0.3".parse().unwrap();
        let p = ModelParams::new(1.0, 0.9, law).unwrap();
        let o = p.offspring();
        let alt: f64 = 0.9 * (o.mu2() - 2.0 * o.mu1() + 1.0);
        assert!((spine_weight_exponent(&p) - alt).abs() < 1e-14);
    }

    #[test]
    fn spine_without_branching_never_splits() {
        let p = ModelParams::new(1.0, 0.7, OffspringLaw::point_mass(1)).unwrap();
        let mut rng = spawn_rng_stream(3, 0);
        for _ in 0..100 {
            let pair = sample_spine_pair(1.0, 2.0, &p, &mut rng).unwrap();
            assert_eq!(pair.split_time, 2.0);
            assert_eq!(pair.weight, 1.0);
            assert_eq!(pair.end1, pair.end2);
        }
    }

    #[test]
    fn bound_preconditions_and_shape() {
        let p = params(1.5);
        let k = BoundConstants { c: 1.0, delta: 3.0 };
        assert!(truncated_second_moment_bound(1.0, 6.0, 0.0, 3.0, &p, &k).is_err());
        assert!(truncated_second_moment_bound(1.0, 6.0, 1.0, 0.5, &p, &k).is_err());
        let b1 = truncated_second_moment_bound(1.0, 6.0, 1.0, 3.0, &p, &k).unwrap();
        let b2 = truncated_second_moment_bound(1.0, 6.0, 2.0, 3.0, &p, &k).unwrap();
        assert!(b2 > b1);
        let h = |x: f64| truncated_second_moment_bound(x, 6.0, 1.0, 3.0, &p, &k).unwrap() / p.ground_state(x);
        assert!((h(0.5) - h(2.0)).abs() < 1e-12 * h(1.0));
    }
}
