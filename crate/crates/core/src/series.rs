//! Log-domain series and sliding-window training sets.
//!
//! All fitting happens on `v_n = ln(y_n)`; a supervised pair for
//! horizon `tau` and window `w` maps the window ending at day `m` to
//! the log-count at day `m + tau`.

use crate::ingest::CountrySeries;
use crate::{Error, Result};

/// Natural-log view of a country series.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSeries {
    pub country: String,
    pub values: Vec<f64>,
}

impl LogSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// View of the first `len` days.
    pub fn truncated(&self, len: usize) -> LogSeries {
        assert!(len <= self.values.len());
        LogSeries {
            country: self.country.clone(),
            values: self.values[..len].to_vec(),
        }
    }
}

/// `v_n = ln(y_n)`; counts are ≥ 1 by construction so values are ≥ 0.
pub fn log_transform(series: &CountrySeries) -> LogSeries {
    LogSeries {
        country: series.country().to_string(),
        values: series.counts().iter().map(|&c| (c as f64).ln()).collect(),
    }
}

/// The window `[v_{end-w+1}, ..., v_end]` in chronological order.
pub fn window_at(ls: &LogSeries, end_index: usize, w: usize) -> Result<&[f64]> {
    if w == 0 || end_index + 1 < w || end_index >= ls.len() {
        return Err(Error::WindowOutOfRange { end: end_index, w });
    }
    Ok(&ls.values[end_index + 1 - w..=end_index])
}

/// Window→target training pairs for one `(w, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub w: usize,
    pub tau: usize,
}

impl SupervisedSet {
    pub fn count(&self) -> usize {
        self.inputs.len()
    }
}

/// All pairs `(window ending at m, value at m + tau)` in a series.
///
/// Produces `N − w − tau + 1` pairs when `N ≥ w + tau`, otherwise an
/// empty set; an empty set is a legal return, not an error.
pub fn build_supervised(ls: &LogSeries, w: usize, tau: usize) -> SupervisedSet {
    assert!(w >= 1 && tau >= 1);
    let n = ls.len();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    if n >= w + tau {
        for m in (w - 1)..(n - tau) {
            inputs.push(ls.values[m + 1 - w..=m].to_vec());
            targets.push(ls.values[m + tau]);
        }
    }
    SupervisedSet {
        inputs,
        targets,
        w,
        tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn series(counts: &[u64]) -> CountrySeries {
        CountrySeries::from_counts(
            "T",
            NaiveDate::from_ymd_opt(2020, 1, 22).unwrap(),
            counts.to_vec(),
        )
        .unwrap()
    }

    fn log_series(values: &[f64]) -> LogSeries {
        LogSeries {
            country: "T".into(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn log_of_ones_is_zero() {
        let ls = log_transform(&series(&[1, 1, 1]));
        assert_eq!(ls.values, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn log_of_three() {
        let ls = log_transform(&series(&[1, 3]));
        assert!((ls.values[1] - 1.0986122886681098).abs() < 1e-12);
    }

    #[test]
    fn exp_round_trips_counts() {
        let counts = [1u64, 5, 77, 1_000_003, 9_876_543_210];
        let ls = log_transform(&series(&counts));
        for (&c, &v) in counts.iter().zip(&ls.values) {
            let back = v.exp();
            assert!((back - c as f64).abs() / c as f64 <= 1e-12, "{c} -> {back}");
        }
    }

    #[test]
    fn window_slices_chronologically() {
        let ls = log_series(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(window_at(&ls, 3, 2).unwrap(), &[2.0, 3.0]);
        assert_eq!(window_at(&ls, 3, 4).unwrap(), &[0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(
            window_at(&ls, 0, 2),
            Err(Error::WindowOutOfRange { .. })
        ));
        assert!(matches!(
            window_at(&ls, 9, 2),
            Err(Error::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn pair_counts() {
        let ls = log_series(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(build_supervised(&ls, 2, 1).count(), 3);
        assert_eq!(build_supervised(&ls, 2, 7).count(), 0);
    }

    #[test]
    fn pairs_enumerated_by_hand() {
        let ls = log_series(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let set = build_supervised(&ls, 2, 2);
        assert_eq!(set.inputs, vec![vec![0.0, 1.0], vec![1.0, 2.0]]);
        assert_eq!(set.targets, vec![3.0, 4.0]);
    }

    #[test]
    fn pair_count_formula_exhaustive() {
        // count = N − w − τ + 1 when N ≥ w + τ, else 0, for all N ≤ 20.
        for n in 1..=20usize {
            let ls = log_series(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
            for w in 1..=n {
                for tau in 1..=15 {
                    let set = build_supervised(&ls, w, tau);
                    let expected = if n >= w + tau { n - w - tau + 1 } else { 0 };
                    assert_eq!(set.count(), expected, "n={n} w={w} tau={tau}");
                    // Overlap property: consecutive inputs share w−1 entries.
                    for pair in set.inputs.windows(2) {
                        assert_eq!(pair[0][1..], pair[1][..w - 1]);
                    }
                }
            }
        }
    }

    #[test]
    fn no_pair_reads_past_its_target() {
        // Mutating everything after the last target index must not
        // change the pairs built from the prefix.
        let values: Vec<f64> = (0..12).map(|i| (i * i) as f64).collect();
        let ls = log_series(&values);
        let (w, tau) = (3, 2);
        let set = build_supervised(&ls.truncated(8), w, tau);
        let mut mutated = values.clone();
        for v in mutated.iter_mut().skip(8) {
            *v = -999.0;
        }
        let set2 = build_supervised(&log_series(&mutated).truncated(8), w, tau);
        assert_eq!(set, set2);
        // Every target value appears in the original series.
        for &t in &set.targets {
            assert!(values.contains(&t));
        }
    }
}
