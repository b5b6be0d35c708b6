//! Floating-point abstraction shared by the analytic and sampling code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Real scalar the kernels, oracles and engine are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate
/// assume `f64`; `f32` is usable for the closed forms and the engine but
/// cannot meet the 1e-8 quadrature targets.
pub trait Scalar: Float + FloatConst + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal. Used for constants only.
    fn lit(v: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Exponential with unit rate.
    fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform on the open interval (0, 1).
    fn sample_open01<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn lit(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            #[inline]
            fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Exp1.sample(rng)
            }

            #[inline]
            fn sample_open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.sample(rand::distr::Open01)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
