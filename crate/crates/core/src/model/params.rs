use serde::Serialize;

use crate::error::{invalid, Result};
use crate::model::{IntervalSet, OffspringLaw};
use crate::Scalar;

/// Tolerance on `r(mu1 - 1) - lambda` below which a configuration is
/// labelled critical.
pub const CRITICAL_TOL: f64 = 1e-12;

/// Configuration of the branching dynamics: drift `-c` toward the absorbing
/// origin, branching rate `r`, offspring law `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f64> {
    c: T,
    r: T,
    offspring: OffspringLaw<T>,
    lambda: T,
    growth_exponent: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
    /// Supercritical with `r(mu1 - 1) > 2 lambda`, where the additive
    /// martingale is bounded in L2.
    L2Supercritical,
}

impl Regime {
    pub fn is_supercritical(self) -> bool {
        matches!(self, Regime::Supercritical | Regime::L2Supercritical)
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
            Regime::L2Supercritical => "L2-supercritical",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(c: T, r: T, offspring: OffspringLaw<T>) -> Result<Self> {
        if !(c > T::zero() && c.is_finite()) {
            return Err(invalid("c", format!("drift must be finite and > 0, got {c}")));
        }
        if !(r > T::zero() && r.is_finite()) {
            return Err(invalid("r", format!("branching rate must be finite and > 0, got {r}")));
        }
        let lambda = c * c / T::lit(2.0);
        let growth_exponent = r * (offspring.mu1() - T::one()) - lambda;
        Ok(Self {
            c,
            r,
            offspring,
            lambda,
            growth_exponent,
        })
    }

    /// Convenience constructor with dyadic branching.
    pub fn dyadic(c: T, r: T) -> Result<Self> {
        Self::new(c, r, OffspringLaw::dyadic())
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn offspring(&self) -> &OffspringLaw<T> {
        &self.offspring
    }

    /// Principal killing rate `c^2 / 2` of the absorbed motion.
    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Mean branching growth rate `r(mu1 - 1)`.
    pub fn branching_growth(&self) -> T {
        self.r * (self.offspring.mu1() - T::one())
    }

    /// `r(mu1 - 1) - lambda`, the exponential rate of `E|N_t|`.
    pub fn growth_exponent(&self) -> T {
        self.growth_exponent
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self)
    }

    /// Ground state `h(x) = x e^{cx} / sqrt(2 pi lambda^2)`.
    pub fn ground_state(&self, x: T) -> T {
        ground_state_h(x, self)
    }

    pub fn nu(&self, b: &IntervalSet<T>) -> T {
        nu_measure(b, self)
    }

    /// Quasi-stationary CDF `F(a) = 1 - (1 + ca) e^{-ca}`.
    pub fn nu_cdf(&self, a: T) -> T {
        T::one() - nu_tail(a, self.c)
    }

    /// Quasi-stationary density `c^2 x e^{-cx}`.
    pub fn nu_density(&self, x: T) -> T {
        if x <= T::zero() {
            T::zero()
        } else {
            self.c * self.c * x * (-self.c * x).exp()
        }
    }
}

pub fn classify_regime<T: Scalar>(params: &ModelParams<T>) -> Regime {
    let growth = params.branching_growth();
    let lambda = params.lambda();
    if (growth - lambda).abs() <= T::lit(CRITICAL_TOL) {
        Regime::Critical
    } else if growth > T::lit(2.0) * lambda {
        Regime::L2Supercritical
    } else if growth > lambda {
        Regime::Supercritical
    } else {
        Regime::Subcritical
    }
}

pub fn ground_state_h<T: Scalar>(x: T, params: &ModelParams<T>) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    let norm = params.lambda() * T::TAU().sqrt();
    x * (params.c() * x).exp() / norm
}

/// `1 - F(a) = (1 + ca) e^{-ca}`, with `tail(inf) = 0`.
fn nu_tail<T: Scalar>(a: T, c: T) -> T {
    if a <= T::zero() {
        return T::one();
    }
    if a.is_infinite() {
        return T::zero();
    }
    (T::one() + c * a) * (-c * a).exp()
}

/// Mass the quasi-stationary law assigns to `b`.
pub fn nu_measure<T: Scalar>(b: &IntervalSet<T>, params: &ModelParams<T>) -> T {
    let c = params.c();
    b.intervals()
        .iter()
        .fold(T::zero(), |acc, &(lo, hi)| acc + (nu_tail(lo, c) - nu_tail(hi, c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadOptions};

    fn dy(c: f64, r: f64) -> ModelParams {
        ModelParams::dyadic(c, r).unwrap()
    }

    #[test]
    fn derived_fields() {
        let p = dy(1.0, 0.6);
        assert_eq!(p.lambda(), 0.5);
        assert!((p.growth_exponent() - 0.1).abs() < 1e-15);
        assert!(ModelParams::dyadic(0.0, 1.0).is_err());
        assert!(ModelParams::dyadic(1.0, -1.0).is_err());
        assert!(ModelParams::dyadic(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn regimes() {
        assert_eq!(dy(1.0, 0.6).regime(), Regime::Supercritical);
        assert_eq!(dy(1.0, 0.5).regime(), Regime::Critical);
        assert_eq!(dy(1.0, 1.5).regime(), Regime::L2Supercritical);
        assert_eq!(dy(1.0, 0.3).regime(), Regime::Subcritical);
        assert_eq!(dy(1.0, 1.0).regime(), Regime::Supercritical);
        let no_branch = ModelParams::new(1.0, 2.0, OffspringLaw::point_mass(1)).unwrap();
        assert_eq!(no_branch.regime(), Regime::Subcritical);
    }

    #[test]
    fn ground_state_values() {
        let p = dy(1.0, 0.6);
        assert_eq!(p.ground_state(0.0), 0.0);
        // e / sqrt(2 pi 0.25), evaluated with mpmath
        assert!((p.ground_state(1.0) - 2.168_875_102_838_455).abs() < 1e-14);
        assert!(p.ground_state(2.0) > p.ground_state(1.0));
    }

    #[test]
    fn nu_values() {
        let p = dy(1.0, 0.6);
        assert_eq!(p.nu(&IntervalSet::positive()), 1.0);
        assert_eq!(p.nu(&IntervalSet::empty()), 0.0);
        let b = IntervalSet::single(0.0, 1.0).unwrap();
        let want = 1.0 - 2.0 * (-1.0f64).exp();
        assert!((p.nu(&b) - want).abs() < 1e-15);
        assert!((want - 0.264_241_117_657_115_4).abs() < 1e-15);
    }

    #[test]
    fn nu_matches_density_quadrature() {
        let p = dy(1.3, 1.0);
        for (lo, hi) in [(0.0, 1.0), (0.4, 2.5), (3.0, 9.0)] {
            let b = IntervalSet::single(lo, hi).unwrap();
            let q = integrate(|x| p.nu_density(x), lo, hi, &QuadOptions::default()).unwrap();
            assert!((q.value - p.nu(&b)).abs() < 1e-13);
        }
    }

    #[test]
    fn f32_closed_forms() {
        let p = ModelParams::<f32>::dyadic(1.0, 0.6).unwrap();
        assert!((p.ground_state(1.0) - 2.168_875).abs() < 1e-5);
        assert_eq!(p.regime(), Regime::Supercritical);
    }
}
