//! Goodness-of-fit tests and summary statistics used by the harness.

use serde::Serialize;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        mean_stderr(xs)
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }

    /// `|self - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.stderr
    }

    /// Distance between two independent estimates over their combined
    /// standard error.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        let s = (self.stderr * self.stderr + other.stderr * other.stderr).sqrt();
        (self.mean - other.mean).abs() / s
    }
}

/// Mean and standard error (sample variance with `n - 1`).
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            stderr: f64::NAN,
            n,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Estimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    }
}

/// Median of a sample (mean of the two central values for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Outcome of a goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl TestOutcome {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// One-sample Kolmogorov–Smirnov distance `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    ks_statistic_sorted(&v, cdf)
}

/// [`ks_statistic`] for an already sorted sample.
pub fn ks_statistic_sorted<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d.max(above).max(below)
    })
}

/// Asymptotic Kolmogorov tail `P(sqrt(n) D > z)` with the Stephens
/// small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sn = (n as f64).sqrt();
    let z = (sn + 0.12 + 0.11 / sn) * d;
    if z < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * z * z).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> TestOutcome {
    let d = ks_statistic(sample, cdf);
    TestOutcome {
        statistic: d,
        p_value: ks_p_value(d, sample.len()),
        n: sample.len(),
    }
}

/// Pearson chi-square test of observed counts against expected
/// probabilities. Cells with expected count below 5 are pooled into their
/// neighbour before the test.
pub fn chi_square_test(observed: &[u64], probs: &[f64]) -> TestOutcome {
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let len = observed.len().max(probs.len());
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for k in 0..len {
        o_acc += observed.get(k).copied().unwrap_or(0) as f64;
        e_acc += probs.get(k).copied().unwrap_or(0.0) * nf;
        if e_acc >= 5.0 {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if o_acc > 0.0 || e_acc > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => cells.push((o_acc, e_acc)),
        }
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e) * (o - e) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = cells.len().saturating_sub(1);
    let p_value = if dof == 0 {
        if statistic.is_finite() {
            1.0
        } else {
            0.0
        }
    } else {
        ChiSquared::new(dof as f64).map_or(f64::NAN, |d| d.sf(statistic))
    };
    TestOutcome {
        statistic,
        p_value,
        n: n as usize,
    }
}

/// `P(X >= k)` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    match Binomial::new(p, n) {
        Ok(b) => b.sf(k - 1),
        Err(_) => f64::NAN,
    }
}

/// Least-squares fit of `y = b0 + b1 x + b2 x^2`; returns the coefficients
/// and the coefficient of determination.
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Option<([f64; 3], f64)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    let mut a = [[0.0f64; 4]; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let basis = [1.0, x, x * x];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += basis[i] * basis[j];
            }
            a[i][3] += basis[i] * y;
        }
    }
    // Gaussian elimination with partial pivoting on the 3x3 normal equations.
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..4 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let coef = [a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]];
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let fit = coef[0] + coef[1] * x + coef[2] * x * x;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean) * (y - mean);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some((coef, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_median() {
        let e = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn ks_of_perfect_grid_is_half_step() {
        let n = 100;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        assert!(ks_p_value(d, n) > 0.99);
    }

    #[test]
    fn ks_p_value_reference_points() {
        // Kolmogorov distribution: P(K > 1.3581) ~ 0.05, P(K > 1.6276) ~ 0.01.
        let n = 1_000_000;
        let sn = (n as f64).sqrt();
        let at = |z: f64| ks_p_value(z / (sn + 0.12 + 0.11 / sn), n);
        assert!((at(1.3581) - 0.05).abs() < 1e-3);
        assert!((at(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn chi_square_accepts_exact_and_rejects_skew() {
        let ok = chi_square_test(&[250, 500, 250], &[0.25, 0.5, 0.25]);
        assert_eq!(ok.statistic, 0.0);
        assert!(ok.passes(0.01));
        let bad = chi_square_test(&[400, 400, 200], &[0.25, 0.5, 0.25]);
        assert!(!bad.passes(0.01));
        let point = chi_square_test(&[0, 0, 1000], &[0.0, 0.0, 1.0]);
        assert!(point.passes(0.01));
    }

    #[test]
    fn binomial_tail() {
        assert_eq!(binomial_upper_tail(0, 10, 0.3), 1.0);
        assert!((binomial_upper_tail(10, 10, 0.5) - 0.5f64.powi(10)).abs() < 1e-15);
        assert!((binomial_upper_tail(1, 500, 0.002) - (1.0 - 0.998f64.powi(500))).abs() < 1e-12);
    }

    #[test]
    fn quadratic_fit_recovers_exact_parabola() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 0.5 * x - 0.25 * x * x).collect();
        let (c, r2) = quadratic_fit(&xs, &ys).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-10 && (c[1] + 0.5).abs() < 1e-10 && (c[2] + 0.25).abs() < 1e-10);
        assert!((r2 - 1.0).abs() < 1e-12);
        assert!(quadratic_fit(&xs[..2], &ys[..2]).is_none());
    }
}
