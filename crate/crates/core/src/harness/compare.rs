#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator used for the spread of repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdConvention {
    /// `n - 1`
    #[default]
    Sample,
    /// `n`
    Population,
}

/// Mean and standard deviation of one metric over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub label: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub raw: Vec<f64>,
}

impl RunStats {
    /// Summary of `raw`; a single run has `std = 0`.
    pub fn from_runs(label: impl Into<String>, raw: Vec<f64>, convention: StdConvention) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Domain("no runs to summarize".into()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("run metric"));
        }
        let n = raw.len();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let ss: f64 = raw.iter().map(|v| (v - mean) * (v - mean)).sum();
        let denom = match convention {
            StdConvention::Sample if n > 1 => (n - 1) as f64,
            StdConvention::Sample => 1.0,
            StdConvention::Population => n as f64,
        };
        // keep the mean inside [min, max] despite rounding
        let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            label: label.into(),
            mean: mean.clamp(lo, hi),
            std: (ss / denom).sqrt(),
            n,
            raw,
        })
    }

    /// Stats known only by their printed mean and std.
    pub fn from_summary(label: impl Into<String>, mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !(std >= 0.0 && std.is_finite()) {
            return Err(Error::Domain(format!("invalid summary {mean} ± {std}")));
        }
        Ok(Self {
            label: label.into(),
            mean,
            std,
            n: 0,
            raw: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonSymbol {
    MuchBetter,
    Better,
    Worse,
    MuchWorse,
    Tie,
}

impl ComparisonSymbol {
    pub fn glyph(self) -> &'static str {
        match self {
            ComparisonSymbol::MuchBetter => "⇈",
            ComparisonSymbol::Better => "↑",
            ComparisonSymbol::Worse => "↓",
            ComparisonSymbol::MuchWorse => "⇊",
            ComparisonSymbol::Tie => "",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim() {
            "⇈" | "much_better" | "++" => ComparisonSymbol::MuchBetter,
            "↑" | "better" | "+" => ComparisonSymbol::Better,
            "↓" | "worse" | "-" => ComparisonSymbol::Worse,
            "⇊" | "much_worse" | "--" => ComparisonSymbol::MuchWorse,
            "" | "tie" | "=" => ComparisonSymbol::Tie,
            _ => return None,
        })
    }
}

impl fmt::Display for ComparisonSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ComparisonSymbol::MuchBetter => "much_better",
            ComparisonSymbol::Better => "better",
            ComparisonSymbol::Worse => "worse",
            ComparisonSymbol::MuchWorse => "much_worse",
            ComparisonSymbol::Tie => "tie",
        };
        f.write_str(name)
    }
}

/// Labels `method` against `baseline` for a higher-is-better metric.
///
/// With baseline `a ± b` and method `c ± d`: `a + b < c - d` is much better,
/// `a - b > c + d` much worse, otherwise `a < c` better, `a > c` worse, and
/// `a == c` a tie.
pub fn compare(baseline: &RunStats, method: &RunStats) -> ComparisonSymbol {
    let (a, b) = (baseline.mean, baseline.std);
    let (c, d) = (method.mean, method.std);
    if a + b < c - d {
        ComparisonSymbol::MuchBetter
    } else if a - b > c + d {
        ComparisonSymbol::MuchWorse
    } else if a < c {
        ComparisonSymbol::Better
    } else if a > c {
        ComparisonSymbol::Worse
    } else {
        ComparisonSymbol::Tie
    }
}

/// [`compare`] for either metric orientation; lower-is-better metrics
/// (losses) are compared on their negated means.
pub fn compare_oriented(baseline: &RunStats, method: &RunStats, higher_is_better: bool) -> ComparisonSymbol {
    if higher_is_better {
        return compare(baseline, method);
    }
    let flip = |s: &RunStats| RunStats {
        mean: -s.mean,
        ..s.clone()
    };
    compare(&flip(baseline), &flip(method))
}

/// Index of the best mean (first one on ties).
pub fn best_index(stats: &[RunStats], higher_is_better: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in stats.iter().enumerate() {
        let better = match best {
            None => true,
            Some(j) if higher_is_better => s.mean > stats[j].mean,
            Some(j) => s.mean < stats[j].mean,
        };
        if better {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(mean: f64, std: f64) -> RunStats {
        RunStats::from_summary("x", mean, std).unwrap()
    }

    #[test]
    fn printed_examples() {
        let base = s(99.08, 0.04);
        assert_eq!(compare(&base, &s(99.25, 0.01)), ComparisonSymbol::MuchBetter);
        assert_eq!(compare(&base, &s(99.03, 0.08)), ComparisonSymbol::Worse);
        assert_eq!(compare(&base, &s(99.01, 0.02)), ComparisonSymbol::MuchWorse);
        assert_eq!(compare(&s(92.08, 0.11), &s(92.08, 0.07)), ComparisonSymbol::Tie);
    }

    #[test]
    fn single_run_has_zero_std() {
        let r = RunStats::from_runs("a", vec![0.7], StdConvention::Sample).unwrap();
        assert_eq!((r.mean, r.std, r.n), (0.7, 0.0, 1));
        assert!(RunStats::from_runs("a", vec![], StdConvention::Sample).is_err());
    }

    #[test]
    fn std_conventions() {
        let raw = vec![1.0, 2.0, 3.0, 4.0];
        let sample = RunStats::from_runs("a", raw.clone(), StdConvention::Sample).unwrap();
        let pop = RunStats::from_runs("a", raw, StdConvention::Population).unwrap();
        assert!((sample.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((pop.std - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn loss_orientation_flips() {
        let base = s(1.0, 0.1);
        let lower = s(0.5, 0.1);
        assert_eq!(compare_oriented(&base, &lower, false), ComparisonSymbol::MuchBetter);
        assert_eq!(compare_oriented(&base, &lower, true), ComparisonSymbol::MuchWorse);
    }

    #[test]
    fn best_picks_extreme_mean() {
        let v = vec![s(1.0, 0.0), s(3.0, 0.0), s(2.0, 0.0)];
        assert_eq!(best_index(&v, true), Some(1));
        assert_eq!(best_index(&v, false), Some(0));
        assert_eq!(best_index(&[], false), None);
    }

    proptest! {
        #[test]
        fn rule_is_total_and_consistent(a in -100.0f64..100.0, b in 0.0f64..10.0, c in -100.0f64..100.0, d in 0.0f64..10.0) {
            let sym = compare(&s(a, b), &s(c, d));
            let expected = [
                a + b < c - d,
                a - b > c + d,
                !(a + b < c - d) && !(a - b > c + d) && a < c,
                !(a + b < c - d) && !(a - b > c + d) && a > c,
                a == c && !(a + b < c - d) && !(a - b > c + d),
            ];
            prop_assert_eq!(expected.iter().filter(|&&x| x).count(), 1);
            let idx = match sym {
                ComparisonSymbol::MuchBetter => 0,
                ComparisonSymbol::MuchWorse => 1,
                ComparisonSymbol::Better => 2,
                ComparisonSymbol::Worse => 3,
                ComparisonSymbol::Tie => 4,
            };
            prop_assert!(expected[idx]);
        }

        #[test]
        fn stats_invariants(raw in proptest::collection::vec(-1e3f64..1e3, 1..12)) {
            let r = RunStats::from_runs("p", raw.clone(), StdConvention::Sample).unwrap();
            let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r.std >= 0.0);
            prop_assert!(r.mean >= lo && r.mean <= hi);
            prop_assert_eq!(r.n, raw.len());
        }
    }
}
