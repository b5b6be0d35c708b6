//! Normal-distribution special functions evaluated at the working precision
//! of the scalar type.
//!
//! `erfcx(z) = exp(z^2) erfc(z)` is the workhorse: it lets the reflection
//! terms `exp(2cx) * Phi(-(x+ct)/sqrt(t))` be formed without overflow or
//! underflow.

use crate::Scalar;

const SERIES_CUTOFF: f64 = 1.5;
const MAX_TERMS: usize = 10_000;

/// Scaled complementary error function `exp(z^2) * erfc(z)`.
pub fn erfcx<T: Scalar>(z: T) -> T {
    if z < T::zero() {
        // erfc(-z) = 2 - erfc(z)
        let z2 = z * z;
        return T::lit(2.0) * z2.exp() - erfcx(-z);
    }
    if z < T::lit(SERIES_CUTOFF) {
        // erf(z) = 2/sqrt(pi) * exp(-z^2) * sum_n 2^n z^(2n+1) / (2n+1)!!
        // All terms positive, so no cancellation inside the sum.
        let z2 = z * z;
        let mut term = z;
        let mut sum = z;
        for n in 1..MAX_TERMS {
            term = term * T::lit(2.0) * z2 / T::lit((2 * n + 1) as f64);
            sum = sum + term;
            if term <= sum * T::epsilon() {
                break;
            }
        }
        let two_over_sqrt_pi = T::lit(2.0) / T::PI().sqrt();
        return z2.exp() - two_over_sqrt_pi * sum;
    }
    // Lentz evaluation of erfc(z) = exp(-z^2)/sqrt(pi) * 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
    let tiny = T::min_positive_value().sqrt();
    let mut f = z;
    let mut c = f;
    let mut d = T::zero();
    for n in 1..MAX_TERMS {
        let a = T::lit(n as f64 * 0.5);
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    (T::PI().sqrt() * f).recip()
}

pub fn erfc<T: Scalar>(z: T) -> T {
    if z < T::zero() {
        return T::lit(2.0) - erfc(-z);
    }
    erfcx(z) * (-(z * z)).exp()
}

/// Standard normal CDF.
pub fn norm_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * erfc(-z / T::SQRT_2())
}

/// Standard normal density.
pub fn norm_pdf<T: Scalar>(z: T) -> T {
    (-(z * z) / T::lit(2.0)).exp() / (T::TAU()).sqrt()
}

/// `exp(log_scale) * Phi(-z)` for `z >= 0`, computed without forming either
/// factor on its own.
pub fn scaled_upper_tail<T: Scalar>(log_scale: T, z: T) -> T {
    let w = z / T::SQRT_2();
    if z >= T::zero() {
        T::lit(0.5) * (log_scale - w * w).exp() * erfcx(w)
    } else {
        log_scale.exp() * (T::one() - norm_cdf(z))
    }
}

/// Density of `N(0, var)` at `y`.
pub fn gaussian_density<T: Scalar>(y: T, var: T) -> T {
    (-(y * y) / (T::lit(2.0) * var)).exp() / (T::TAU() * var).sqrt()
}
