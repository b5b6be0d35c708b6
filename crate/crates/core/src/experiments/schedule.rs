use serde::Serialize;

use crate::error::{invalid, Result};

/// One step of the sampling schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleEntry {
    pub k: u64,
    /// `(log k)^10`
    pub t_tilde: f64,
    /// `(log k)^4`
    pub s: f64,
    /// `delta log k`
    pub m: f64,
    /// `t_tilde + s`
    pub t: f64,
    /// `t_{k+1} - t_k`, absent for the last entry.
    pub gap: Option<f64>,
    /// Partial sum of `e^{-g t_j / 4}` over `j <= k`, when a growth exponent
    /// was given.
    pub partial_sum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub k_max: u64,
    pub delta: f64,
    pub growth_exponent: Option<f64>,
    pub entries: Vec<ScheduleEntry>,
    /// `t_k` strictly increasing over `k >= 3` on the computed range.
    pub increasing: bool,
    /// First `k` from which the gaps decrease through the computed range.
    pub gaps_decreasing_from: Option<u64>,
}

/// The schedule `t_k = (log k)^10 + (log k)^4`, `s_k = (log k)^4`,
/// `M_k = delta log k` for `k = 2..=k_max`.
pub fn tk_schedule(k_max: u64, delta: f64, growth_exponent: Option<f64>) -> Result<ScheduleReport> {
    if k_max < 2 {
        return Err(invalid("k_max", format!("must be >= 2, got {k_max}")));
    }
    if !(delta > 0.0) {
        return Err(invalid("delta", format!("must be > 0, got {delta}")));
    }
    if let Some(g) = growth_exponent {
        if !(g > 0.0) {
            return Err(invalid("growth_exponent", format!("partial sums need a positive exponent, got {g}")));
        }
    }
    let at = |k: u64| {
        let l = (k as f64).ln();
        let t_tilde = l.powi(10);
        let s = l.powi(4);
        (t_tilde, s, delta * l, t_tilde + s)
    };
    let mut entries = Vec::with_capacity((k_max - 1) as usize);
    let mut sum = 0.0;
    for k in 2..=k_max {
        let (t_tilde, s, m, t) = at(k);
        let gap = (k < k_max).then(|| at(k + 1).3 - t);
        let partial_sum = growth_exponent.map(|g| {
            sum += (-g * t / 4.0).exp();
            sum
        });
        entries.push(ScheduleEntry {
            k,
            t_tilde,
            s,
            m,
            t,
            gap,
            partial_sum,
        });
    }
    let increasing = entries.iter().filter(|e| e.k >= 3).collect::<Vec<_>>().windows(2).all(|w| w[1].t > w[0].t);
    let gaps: Vec<(u64, f64)> = entries.iter().filter_map(|e| e.gap.map(|g| (e.k, g))).collect();
    let mut from = None;
    if !gaps.is_empty() {
        let mut i = gaps.len() - 1;
        while i > 0 && gaps[i].1 < gaps[i - 1].1 {
            i -= 1;
        }
        if i < gaps.len() - 1 {
            from = Some(gaps[i].0);
        }
    }
    Ok(ScheduleReport {
        k_max,
        delta,
        growth_exponent,
        entries,
        increasing,
        gaps_decreasing_from: from,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_entry() {
        let s = tk_schedule(2, 1.0, None).unwrap();
        let e = s.entries[0];
        // mpmath: (ln 2)^10
        assert!((e.t_tilde - 0.025_600_863_289_563_12).abs() < 1e-16);
        assert!((e.s - 2f64.ln().powi(4)).abs() < 1e-16);
        assert_eq!(e.gap, None);
        assert_eq!(s.gaps_decreasing_from, None);
    }

    #[test]
    fn gaps_turn_down_near_e_to_the_ninth() {
        let s = tk_schedule(20_000, 1.0, Some(1.0)).unwrap();
        assert!(s.increasing);
        let k_star = s.gaps_decreasing_from.unwrap();
        // d/dk [(log k)^10 + (log k)^4] peaks close to log k = 9
        assert!((8000..8200).contains(&k_star), "{k_star}");
        let last = s.entries.last().unwrap().partial_sum.unwrap();
        let mid = s.entries[1000].partial_sum.unwrap();
        assert!(last >= mid && (last - mid) < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(tk_schedule(1, 1.0, None).is_err());
        assert!(tk_schedule(10, 0.0, None).is_err());
        assert!(tk_schedule(10, 1.0, Some(-1.0)).is_err());
    }
}
