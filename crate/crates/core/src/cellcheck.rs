//! Adaptive cell-by-cell verification of inequalities over boxes.
//!
//! A probe returns a rigorous lower bound on the slack of an inequality over
//! a box. Boxes whose bound is not good enough are bisected up to a depth
//! limit; the smallest bound over accepted leaves is the certified margin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::interval::IntervalBox;

/// Whether an inequality applies on a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applies {
    No,
    Maybe,
    Yes,
}

#[derive(Debug, Clone, Copy)]
pub struct Probe {
    pub applies: Applies,
    /// Lower bound of the slack over the whole box (`-inf` if unknown).
    pub slack: f64,
}

impl Probe {
    pub fn skip() -> Self {
        Probe { applies: Applies::No, slack: f64::INFINITY }
    }

    pub fn slack(slack: f64) -> Self {
        Probe { applies: Applies::Yes, slack: if slack.is_nan() { f64::NEG_INFINITY } else { slack } }
    }

    pub fn maybe(self, maybe: bool) -> Self {
        if maybe && self.applies == Applies::Yes {
            Probe { applies: Applies::Maybe, ..self }
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckStats {
    /// Smallest certified slack over the leaves where the inequality applies.
    pub margin: f64,
    pub margin_box: Option<IntervalBox>,
    /// First box (in cell order) that could not be certified.
    pub failure: Option<IntervalBox>,
    /// Slack lower bound at the failing box.
    pub failure_slack: f64,
    /// Number of leaves on which the inequality applied.
    pub leaves: usize,
}

impl CheckStats {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn vacuous(&self) -> bool {
        self.leaves == 0
    }

    fn empty() -> Self {
        CheckStats { margin: f64::INFINITY, margin_box: None, failure: None, failure_slack: f64::INFINITY, leaves: 0 }
    }

    fn merge(mut self, other: CheckStats) -> Self {
        if other.margin < self.margin {
            self.margin = other.margin;
            self.margin_box = other.margin_box;
        }
        if self.failure.is_none() && other.failure.is_some() {
            self.failure = other.failure;
            self.failure_slack = other.failure_slack;
        }
        self.leaves += other.leaves;
        self
    }
}

fn check_one<P>(b: &IntervalBox, depth: usize, strict: bool, probe: &P) -> CheckStats
where
    P: Fn(&IntervalBox) -> Probe,
{
    let p = probe(b);
    if p.applies == Applies::No {
        return CheckStats::empty();
    }
    let ok = if strict { p.slack > 0.0 } else { p.slack >= 0.0 };
    if ok {
        return CheckStats { margin: p.slack, margin_box: Some(b.clone()), failure: None, failure_slack: f64::INFINITY, leaves: 1 };
    }
    if depth == 0 {
        return CheckStats {
            margin: p.slack,
            margin_box: Some(b.clone()),
            failure: Some(b.clone()),
            failure_slack: p.slack,
            leaves: 1,
        };
    }
    let (l, r) = b.bisect();
    check_one(&l, depth - 1, strict, probe).merge(check_one(&r, depth - 1, strict, probe))
}

/// Checks `slack > 0` (strict) or `slack >= 0` on every box, bisecting up to
/// `max_depth` times where the first bound is inconclusive.
pub fn check_boxes<P>(boxes: &[IntervalBox], max_depth: usize, strict: bool, probe: P) -> CheckStats
where
    P: Fn(&IntervalBox) -> Probe + Sync,
{
    boxes
        .par_iter()
        .map(|b| check_one(b, max_depth, strict, &probe))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(CheckStats::empty(), CheckStats::merge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn cells(n: usize) -> Vec<IntervalBox> {
        (0..n)
            .map(|k| IntervalBox::from_bounds(&[[k as f64 / n as f64, (k + 1) as f64 / n as f64]]).unwrap())
            .collect()
    }

    #[test]
    fn bisection_recovers_tight_bounds() {
        // x - x^2 + 0.3 > 0 on [0, 1]; the natural extension on [0, 1] is [-0.7, 1.3]
        let e = parse("x1 - x1^2 + 0.3").unwrap();
        let probe = |b: &IntervalBox| Probe::slack(e.eval_interval(b).unwrap().lo);
        let coarse = check_boxes(&cells(1), 0, true, probe);
        assert!(!coarse.passed());
        let fine = check_boxes(&cells(1), 10, true, probe);
        assert!(fine.passed());
        assert!(fine.margin > 0.0 && fine.margin <= 0.3);
    }

    #[test]
    fn reports_first_failure_and_skips_inapplicable_boxes() {
        let e = parse("x1 - 0.5").unwrap();
        let probe = |b: &IntervalBox| Probe::slack(e.eval_interval(b).unwrap().lo);
        let s = check_boxes(&cells(4), 3, false, probe);
        let f = s.failure.unwrap();
        assert!(f.0[0].hi <= 0.5);
        let only_right = |b: &IntervalBox| if b.0[0].hi <= 0.5 { Probe::skip() } else { probe(b) };
        assert!(check_boxes(&cells(4), 3, false, only_right).passed());
        assert!(check_boxes(&cells(4), 3, false, |_| Probe::skip()).vacuous());
    }
}
