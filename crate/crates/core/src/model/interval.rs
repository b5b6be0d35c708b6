use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::Scalar;

/// Finite union of disjoint half-open intervals `(lo, hi]` inside `(0, inf)`.
///
/// Stored sorted by `lo`. Touching intervals such as `(0,1]` and `(1,2]` are
/// kept separate: they are disjoint as half-open sets.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet<T = f64> {
    intervals: Vec<(T, T)>,
}

impl<T: Scalar> IntervalSet<T> {
    pub fn new(mut intervals: Vec<(T, T)>) -> Result<Self> {
        for &(lo, hi) in &intervals {
            check_interval(lo, hi)?;
        }
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("endpoints are not NaN"));
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::InvalidIntervals(format!(
                    "({},{}] and ({},{}] overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    /// The whole half-line `(0, inf)`.
    pub fn positive() -> Self {
        Self {
            intervals: vec![(T::zero(), T::infinity())],
        }
    }

    /// `(a, inf)`.
    pub fn above(a: T) -> Result<Self> {
        Self::new(vec![(a, T::infinity())])
    }

    pub fn single(lo: T, hi: T) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn intervals(&self) -> &[(T, T)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_positive_half_line(&self) -> bool {
        self.intervals.len() == 1 && self.intervals[0].0 == T::zero() && self.intervals[0].1.is_infinite()
    }

    #[inline]
    pub fn contains(&self, y: T) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo < y && y <= hi)
    }

    /// Union of two sets that must not overlap.
    pub fn disjoint_union(&self, other: &Self) -> Result<Self> {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        Self::new(all)
    }

    /// `(0, inf)` minus the set.
    pub fn complement(&self) -> Self {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut start = T::zero();
        for &(lo, hi) in &self.intervals {
            if lo > start {
                out.push((start, lo));
            }
            start = hi;
        }
        if start.is_finite() {
            out.push((start, T::infinity()));
        }
        Self { intervals: out }
    }

    /// Counts the entries of `values` that fall in the set.
    pub fn count_in(&self, values: &[T]) -> usize {
        values.iter().filter(|&&y| self.contains(y)).count()
    }
}

fn check_interval<T: Scalar>(lo: T, hi: T) -> Result<()> {
    if lo.is_nan() || hi.is_nan() || lo < T::zero() || lo.is_infinite() {
        return Err(Error::InvalidIntervals(format!(
            "({lo},{hi}]: lower endpoint must be finite and >= 0"
        )));
    }
    if lo == hi {
        return Err(Error::InvalidIntervals(format!("({lo},{hi}]: empty interval")));
    }
    if lo > hi {
        return Err(Error::InvalidIntervals(format!("({lo},{hi}]: lo >= hi")));
    }
    Ok(())
}

fn fmt_endpoint<T: Scalar>(v: T) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

impl<T: Scalar> fmt::Display for IntervalSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .intervals
            .iter()
            .map(|&(lo, hi)| format!("{},{}", fmt_endpoint(lo), fmt_endpoint(hi)))
            .collect();
        f.write_str(&parts.join(";"))
    }
}

fn parse_endpoint<T: Scalar>(tok: &str, allow_inf: bool) -> Result<T> {
    let tok = tok.trim();
    if tok == "inf" || tok == "+inf" {
        return if allow_inf {
            Ok(T::infinity())
        } else {
            Err(Error::InvalidIntervals(format!("`{tok}` is only allowed as an upper endpoint")))
        };
    }
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::InvalidIntervals(format!("`{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::InvalidIntervals(format!("`{tok}` is not a finite number")));
    }
    Ok(T::lit(v))
}

/// Parses `"a,b;c,d"` as `(a,b] U (c,d]`; `inf` is accepted as an upper
/// endpoint.
impl<T: Scalar> FromStr for IntervalSet<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().is_empty() {
            return Err(Error::InvalidIntervals("empty interval set specification".into()));
        }
        let intervals = s
            .split(';')
            .map(|piece| {
                let mut it = piece.split(',');
                match (it.next(), it.next(), it.next()) {
                    (Some(lo), Some(hi), None) => {
                        let lo = parse_endpoint(lo, false)?;
                        let hi = parse_endpoint(hi, true)?;
                        check_interval(lo, hi).map_err(|e| match e {
                            Error::InvalidIntervals(m) => Error::InvalidIntervals(format!("`{piece}`: {m}")),
                            other => other,
                        })?;
                        Ok((lo, hi))
                    }
                    _ => Err(Error::InvalidIntervals(format!(
                        "`{piece}`: expected `lo,hi`"
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(intervals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_partitions_the_half_line() {
        let b: IntervalSet = "0.5,1;2,3".parse().unwrap();
        let c = b.complement();
        assert_eq!(c.to_string(), "0,0.5;1,2;3,inf");
        assert_eq!(c.complement(), b);
        assert!(IntervalSet::<f64>::positive().complement().is_empty());
        assert!(IntervalSet::<f64>::empty().complement().is_positive_half_line());
        for y in [0.1, 0.5, 0.7, 1.0, 1.5, 2.5, 3.0, 7.0] {
            assert!(b.contains(y) != c.contains(y));
        }
    }

    #[test]
    fn parses_union_with_infinity() {
        let b: IntervalSet = "0,1;2,inf".parse().unwrap();
        assert_eq!(b.intervals(), &[(0.0, 1.0), (2.0, f64::INFINITY)]);
        assert_eq!(b.to_string(), "0,1;2,inf");
        assert!(b.contains(1.0));
        assert!(!b.contains(0.0));
        assert!(!b.contains(1.5));
        assert!(!b.contains(2.0));
        assert!(b.contains(2.0 + 1e-12));
    }

    #[test]
    fn sorts_and_detects_overlap() {
        let b: IntervalSet = "3,4;0.5,1".parse().unwrap();
        assert_eq!(b.intervals()[0], (0.5, 1.0));
        assert!("0,2;1,3".parse::<IntervalSet>().is_err());
        assert!("0,1;1,2".parse::<IntervalSet>().is_ok());
    }

    #[test]
    fn error_messages_name_the_token() {
        let e = "1,1".parse::<IntervalSet>().unwrap_err().to_string();
        assert!(e.contains("empty interval") && e.contains("`1,1`"), "{e}");
        let e = "2,1".parse::<IntervalSet>().unwrap_err().to_string();
        assert!(e.contains("lo >= hi") && e.contains("`2,1`"), "{e}");
        let e = "0,abc".parse::<IntervalSet>().unwrap_err().to_string();
        assert!(e.contains("`abc`"), "{e}");
        let e = "inf,3".parse::<IntervalSet>().unwrap_err().to_string();
        assert!(e.contains("upper endpoint"), "{e}");
        assert!("".parse::<IntervalSet>().is_err());
        assert!("-1,2".parse::<IntervalSet>().is_err());
    }

    #[test]
    fn counting_is_additive_on_disjoint_sets() {
        let values = [0.1, 0.5, 1.0, 1.2, 2.5, 7.0];
        let b1: IntervalSet = "0,1".parse().unwrap();
        let b2: IntervalSet = "1,3".parse().unwrap();
        let u = b1.disjoint_union(&b2).unwrap();
        assert_eq!(u.count_in(&values), b1.count_in(&values) + b2.count_in(&values));
        assert_eq!(IntervalSet::<f64>::positive().count_in(&values), values.len());
        assert_eq!(IntervalSet::<f64>::empty().count_in(&values), 0);
    }
}
