use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::Scalar;

/// Tolerance on `sum(p) == 1` accepted by [`OffspringLaw::from_pmf`].
pub const PMF_SUM_TOL: f64 = 1e-12;

/// Tolerance on `sum(p) == 1` accepted by the text syntax; inputs within it
/// are renormalized before construction.
pub const PMF_PARSE_TOL: f64 = 1e-9;

/// Offspring distribution with finite support `{0, 1, ..., K}`.
///
/// Laws with unbounded support (geometric tails and the like) would need a
/// truncation or a dedicated sampler; only `mu2 < inf` matters for the
/// dynamics, which finite support guarantees.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw<T = f64> {
    pmf: Vec<T>,
    cdf: Vec<T>,
    mu1: T,
    mu2: T,
}

/// First and second moments of an offspring law together with its variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<T> {
    pub mu1: T,
    pub mu2: T,
    pub var: T,
}

/// Computes `(mu1, mu2, var)` of a probability vector indexed by child count.
pub fn offspring_moments<T: Scalar>(pmf: &[T]) -> Result<Moments<T>> {
    validate(pmf, T::lit(PMF_SUM_TOL))?;
    let (mu1, mu2) = raw_moments(pmf);
    Ok(Moments {
        mu1,
        mu2,
        var: (mu2 - mu1 * mu1).max(T::zero()),
    })
}

fn raw_moments<T: Scalar>(pmf: &[T]) -> (T, T) {
    pmf.iter()
        .enumerate()
        .fold((T::zero(), T::zero()), |(m1, m2), (k, &p)| {
            let k = T::lit(k as f64);
            (m1 + k * p, m2 + k * k * p)
        })
}

fn validate<T: Scalar>(pmf: &[T], tol: T) -> Result<()> {
    if pmf.is_empty() {
        return Err(Error::InvalidOffspring("empty probability vector".into()));
    }
    if let Some((k, p)) = pmf.iter().enumerate().find(|(_, p)| !(**p >= T::zero()) || !p.is_finite()) {
        return Err(Error::InvalidOffspring(format!(
            "probability for {k} children is {p}, expected a finite value >= 0"
        )));
    }
    let sum = pmf.iter().fold(T::zero(), |s, &p| s + p);
    if (sum - T::one()).abs() > tol {
        return Err(Error::InvalidOffspring(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

impl<T: Scalar> OffspringLaw<T> {
    /// Builds a law from probabilities in child-count order.
    pub fn from_pmf(pmf: Vec<T>) -> Result<Self> {
        validate(&pmf, T::lit(PMF_SUM_TOL))?;
        let mut pmf = pmf;
        while pmf.len() > 1 && pmf[pmf.len() - 1] == T::zero() {
            pmf.pop();
        }
        let (mu1, mu2) = raw_moments(&pmf);
        let mut acc = T::zero();
        let mut cdf: Vec<T> = pmf
            .iter()
            .map(|&p| {
                acc = acc + p;
                acc
            })
            .collect();
        // The last entry closes the table so sampling never falls off the end.
        if let Some(last) = cdf.last_mut() {
            *last = T::infinity();
        }
        Ok(Self { pmf, cdf, mu1, mu2 })
    }

    /// Point mass at `k` children.
    pub fn point_mass(k: usize) -> Self {
        let mut pmf = vec![T::zero(); k + 1];
        pmf[k] = T::one();
        Self::from_pmf(pmf).expect("point mass is a valid law")
    }

    /// Binary splitting, `m = 2` almost surely.
    pub fn dyadic() -> Self {
        Self::point_mass(2)
    }

    pub fn pmf(&self) -> &[T] {
        &self.pmf
    }

    pub fn prob(&self, k: usize) -> T {
        self.pmf.get(k).copied().unwrap_or_else(T::zero)
    }

    pub fn max_children(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn mu1(&self) -> T {
        self.mu1
    }

    pub fn mu2(&self) -> T {
        self.mu2
    }

    pub fn variance(&self) -> T {
        (self.mu2 - self.mu1 * self.mu1).max(T::zero())
    }

    pub fn moments(&self) -> Moments<T> {
        Moments {
            mu1: self.mu1,
            mu2: self.mu2,
            var: self.variance(),
        }
    }

    /// Draws a child count.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.cdf.len() == 1 {
            return 0;
        }
        if let Some(k) = self.point_mass_index() {
            return k;
        }
        let u = T::sample_open01(rng);
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1)
    }

    fn point_mass_index(&self) -> Option<usize> {
        let k = self.pmf.len() - 1;
        (self.pmf[k] == T::one()).then_some(k)
    }
}

impl<T: Scalar> fmt::Display for OffspringLaw<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.point_mass_index() == Some(2) {
            return f.write_str("dyadic");
        }
        f.write_str("pmf:")?;
        for (i, p) in self.pmf.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Parses `"dyadic"` or `"pmf:p0,p1,p2,..."`.
impl<T: Scalar> FromStr for OffspringLaw<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "dyadic" {
            return Ok(Self::dyadic());
        }
        let body = s.strip_prefix("pmf:").ok_or_else(|| {
            Error::InvalidOffspring(format!("`{s}`: expected `dyadic` or `pmf:p0,p1,...`"))
        })?;
        let pmf = body
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::InvalidOffspring(format!("`{tok}` is not a probability")))
            })
            .collect::<Result<Vec<T>>>()?;
        let named = |e: Error| match e {
            Error::InvalidOffspring(m) => Error::InvalidOffspring(format!("`{s}`: {m}")),
            other => other,
        };
        validate(&pmf, T::lit(PMF_PARSE_TOL)).map_err(named)?;
        let sum = pmf.iter().fold(T::zero(), |s, &p| s + p);
        Self::from_pmf(pmf.into_iter().map(|p| p / sum).collect()).map_err(named)
    }
}
