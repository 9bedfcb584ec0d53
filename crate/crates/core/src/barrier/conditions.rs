//! Cell-wise checks for each barrier condition variant.

use serde::{Deserialize, Serialize};

use super::Barrier;
use crate::cellcheck::{check_boxes, CheckStats, Probe};
use crate::classk::ExtAlpha;
use crate::dynamics::{SystemSpec, TimeDomain};
use crate::expr::Expr;
use crate::interval::{Interval, IntervalBox};
use crate::lyapunov::{sup_rate, CHECK_DEPTH};
use crate::region::RegionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BarrierCondition {
    Def4,
    RatschanStrict,
    B0,
    B1,
    B2,
    Bc1,
    Pb,
    Def10,
    Dtb0,
    Dtb1,
    Dtb2,
    Barrierdt,
    Rb,
    Dtrb,
}

impl BarrierCondition {
    pub const ALL: [BarrierCondition; 14] = [
        BarrierCondition::Def4,
        BarrierCondition::RatschanStrict,
        BarrierCondition::B0,
        BarrierCondition::B1,
        BarrierCondition::B2,
        BarrierCondition::Bc1,
        BarrierCondition::Pb,
        BarrierCondition::Def10,
        BarrierCondition::Dtb0,
        BarrierCondition::Dtb1,
        BarrierCondition::Dtb2,
        BarrierCondition::Barrierdt,
        BarrierCondition::Rb,
        BarrierCondition::Dtrb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BarrierCondition::Def4 => "DEF4",
            BarrierCondition::RatschanStrict => "RATSCHAN_STRICT",
            BarrierCondition::B0 => "B0",
            BarrierCondition::B1 => "B1",
            BarrierCondition::B2 => "B2",
            BarrierCondition::Bc1 => "BC1",
            BarrierCondition::Pb => "PB",
            BarrierCondition::Def10 => "DEF10",
            BarrierCondition::Dtb0 => "DTB0",
            BarrierCondition::Dtb1 => "DTB1",
            BarrierCondition::Dtb2 => "DTB2",
            BarrierCondition::Barrierdt => "BARRIERDT",
            BarrierCondition::Rb => "RB",
            BarrierCondition::Dtrb => "DTRB",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_uppercase();
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn time(self) -> TimeDomain {
        use BarrierCondition::*;
        match self {
            Def10 | Dtb0 | Dtb1 | Dtb2 | Barrierdt | Dtrb => TimeDomain::Discrete,
            _ => TimeDomain::Continuous,
        }
    }
}

impl std::fmt::Display for BarrierCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartResult {
    pub name: String,
    pub passed: bool,
    pub vacuous: bool,
    /// Smallest certified slack over the cells where the part applies.
    pub margin: f64,
    pub witness: Option<IntervalBox>,
    pub leaves: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: BarrierCondition,
    pub passed: bool,
    pub parts: Vec<PartResult>,
    pub note: Option<String>,
}

impl ConditionResult {
    /// Smallest margin over the non-vacuous parts.
    pub fn margin(&self) -> f64 {
        self.parts.iter().filter(|p| !p.vacuous).map(|p| p.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn witness(&self) -> Option<&IntervalBox> {
        self.parts.iter().find_map(|p| p.witness.as_ref())
    }

    fn from_parts(condition: BarrierCondition, parts: Vec<PartResult>) -> Self {
        let passed = parts.iter().all(|p| p.passed);
        ConditionResult { condition, passed, parts, note: None }
    }

    fn not_applicable(condition: BarrierCondition, why: &str) -> Self {
        ConditionResult { condition, passed: false, parts: Vec::new(), note: Some(why.to_string()) }
    }
}

fn part(name: &str, s: CheckStats) -> PartResult {
    PartResult {
        name: name.to_string(),
        passed: s.passed(),
        vacuous: s.vacuous(),
        margin: s.margin,
        witness: s.failure,
        leaves: s.leaves,
    }
}

/// Everything a probe needs about the candidate on one box.
struct Eval<'a> {
    b: &'a Barrier,
    sys: &'a SystemSpec,
}

const NEG: f64 = f64::NEG_INFINITY;

impl Eval<'_> {
    fn value(&self, x: &IntervalBox) -> Option<Interval> {
        self.b.b.eval_interval(x).ok()
    }

    fn outside_band(&self, x: &IntervalBox) -> bool {
        match &self.b.target {
            Some(t) => x.distance_interval_to(t).lo >= self.b.band,
            None => true,
        }
    }

    /// Enclosure of `min_d ∇B·(f + d)`, or of `∇B·f` when `nominal`.
    fn rate(&self, x: &IntervalBox, nominal: bool) -> Option<Interval> {
        let f = self.sys.eval_box(x).ok()?;
        let (_, g) = self.b.b.grad_interval(x).ok()?;
        let neg: Vec<Interval> = g.iter().map(|gi| -*gi).collect();
        let delta = if nominal { 0.0 } else { self.b.delta_prime };
        Some(-sup_rate(&neg, &f, delta))
    }

    /// Enclosure of `B(f(x) + d)` over the box and `‖d‖ <= δ′` (or `d = 0`).
    fn next_value(&self, x: &IntervalBox, nominal: bool) -> Option<Interval> {
        let f = self.sys.eval_box(x).ok()?;
        let delta = if nominal { 0.0 } else { self.b.delta_prime };
        let image = IntervalBox(f.iter().map(|i| Interval::new(i.lo - delta, i.hi + delta)).collect());
        self.b.b.eval_interval(&image).ok()
    }
}

fn alpha_lo(alpha: &ExtAlpha, v: Interval) -> f64 {
    alpha.eval_interval(v).map_or(NEG, |a| a.lo)
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(NEG)
}

fn run<P>(cells: &[IntervalBox], strict: bool, probe: P) -> CheckStats
where
    P: Fn(&IntervalBox) -> Probe + Sync,
{
    check_boxes(cells, CHECK_DEPTH, strict, probe)
}

fn set_parts(e: &Eval, w: &RegionSpec, u: &RegionSpec, cells: &[IntervalBox], strict_w: bool) -> Vec<PartResult> {
    let pw = run(cells, strict_w, |x| {
        if !w.may_intersect(x) {
            return Probe::skip();
        }
        Probe::slack(opt(e.value(x).map(|v| v.lo)))
    });
    let pu = run(cells, true, |x| {
        if !u.may_intersect(x) {
            return Probe::skip();
        }
        Probe::slack(opt(e.value(x).map(|v| -v.hi)))
    });
    vec![part("initial", pw), part("unsafe", pu)]
}

/// Checks one condition on the given cells.
pub fn check_condition(
    b: &Barrier,
    sys: &SystemSpec,
    w: &RegionSpec,
    u: &RegionSpec,
    cond: BarrierCondition,
    cells: &[IntervalBox],
) -> ConditionResult {
    use BarrierCondition::*;
    if cond.time() != sys.time {
        return ConditionResult::not_applicable(cond, "condition and system use different time domains");
    }
    let e = Eval { b, sys };
    let zero_band = |x: &IntervalBox| e.value(x).map_or(true, |v| v.contains_zero());
    let nonneg = |x: &IntervalBox| e.value(x).map_or(true, |v| v.hi >= 0.0);
    match cond {
        Def4 | RatschanStrict => {
            let strict = cond == RatschanStrict;
            let mut parts = set_parts(&e, w, u, cells, strict);
            let pz = run(cells, strict, |x| {
                if !zero_band(x) {
                    return Probe::skip();
                }
                Probe::slack(opt(e.rate(x, strict).map(|r| r.lo)))
            });
            parts.push(part("zero_level", pz));
            let mut r = ConditionResult::from_parts(cond, parts);
            if r.parts[2].vacuous {
                r.note = Some("the zero-level band is empty; the flow condition holds vacuously".into());
            }
            r
        }
        B0 | Dtb0 => {
            let Some(alpha) = b.alpha else {
                return ConditionResult::not_applicable(cond, "no class-K function α supplied");
            };
            let s = run(cells, false, |x| {
                let Some(v) = e.value(x) else { return Probe::slack(NEG) };
                let lhs = if cond == B0 {
                    opt(e.rate(x, true).map(|r| r.lo))
                } else {
                    opt(e.next_value(x, true).map(|n| n.lo - v.hi))
                };
                Probe::slack(lhs + alpha_lo(&alpha, v))
            });
            ConditionResult::from_parts(cond, vec![part("decrease", s)])
        }
        B1 => {
            let s = run(cells, false, |x| {
                if !e.outside_band(x) {
                    return Probe::skip();
                }
                Probe::slack(opt(e.rate(x, false).map(|r| r.lo)))
            });
            ConditionResult::from_parts(cond, vec![part("decrease", s)])
        }
        B2 | Bc1 | Dtb2 => {
            let Some(a0) = b.alpha0 else {
                return ConditionResult::not_applicable(cond, "no α0 available for this candidate");
            };
            if cond == B2 && a0.c != 0.0 {
                return ConditionResult::not_applicable(cond, "B2 applies to B = -V; use BC1 for levelled barriers");
            }
            let alpha = ExtAlpha::Alpha0(a0);
            let s = run(cells, false, |x| {
                if !e.outside_band(x) {
                    return Probe::skip();
                }
                let Some(v) = e.value(x) else { return Probe::slack(NEG) };
                let lhs = if cond == Dtb2 {
                    opt(e.next_value(x, true).map(|n| n.lo - v.hi))
                } else {
                    opt(e.rate(x, false).map(|r| r.lo))
                };
                Probe::slack(lhs + alpha_lo(&alpha, v))
            });
            ConditionResult::from_parts(cond, vec![part("decrease", s)])
        }
        Pb => {
            let Some(bound) = b.pb_bound() else {
                return ConditionResult::not_applicable(cond, "PB needs a levelled barrier");
            };
            let s = run(cells, false, |x| {
                if !zero_band(x) {
                    return Probe::skip();
                }
                Probe::slack(opt(e.rate(x, false).map(|r| r.lo - bound)))
            });
            ConditionResult::from_parts(cond, vec![part("zero_level", s)])
        }
        Def10 => {
            let mut parts = set_parts(&e, w, u, cells, false);
            let s = run(cells, false, |x| {
                if !nonneg(x) {
                    return Probe::skip();
                }
                Probe::slack(opt(e.next_value(x, false).map(|n| n.lo)))
            });
            parts.push(part("invariance", s));
            ConditionResult::from_parts(cond, parts)
        }
        Dtb1 => {
            let s = run(cells, false, |x| {
                if !nonneg(x) {
                    return Probe::skip();
                }
                let Some(v) = e.value(x) else { return Probe::slack(NEG) };
                Probe::slack(opt(e.next_value(x, true).map(|n| n.lo - v.hi)))
            });
            ConditionResult::from_parts(cond, vec![part("decrease", s)])
        }
        Barrierdt => {
            let Some(alpha) = b.alpha.or(b.alpha0.map(ExtAlpha::Alpha0)) else {
                return ConditionResult::not_applicable(cond, "no class-K function α supplied");
            };
            let s = run(cells, false, |x| {
                if !e.outside_band(x) {
                    return Probe::skip();
                }
                let Some(v) = e.value(x) else { return Probe::slack(NEG) };
                Probe::slack(opt(e.next_value(x, false).map(|n| n.lo - v.hi)) + alpha_lo(&alpha, v))
            });
            ConditionResult::from_parts(cond, vec![part("decrease", s)])
        }
        Rb | Dtrb => {
            let Some(rec) = &b.reciprocal else {
                return ConditionResult::not_applicable(cond, "RB/DTRB need a reciprocal barrier");
            };
            let by_construction = b.b == Expr::num(1.0) / rec.h.clone();
            let bounds = run(cells, false, |x| {
                if by_construction {
                    return Probe::slack(0.0);
                }
                let (Some(v), Ok(h)) = (e.value(x), rec.h.eval_interval(x)) else { return Probe::slack(NEG) };
                match Interval::point(1.0).div(h) {
                    Some(r) => Probe::slack((v.lo - r.hi).min(r.lo - v.hi)),
                    None => Probe::slack(NEG),
                }
            });
            let dec = run(cells, true, |x| {
                let Ok(h) = rec.h.eval_interval(x) else { return Probe::slack(NEG) };
                if !(h.lo > 0.0) {
                    return Probe::slack(NEG);
                }
                let cap = rec.alpha3.eval(h.lo);
                let growth = if cond == Rb {
                    let Ok(f) = sys.eval_box(x) else { return Probe::slack(NEG) };
                    let Ok((_, g)) = b.b.grad_interval(x) else { return Probe::slack(NEG) };
                    sup_rate(&g, &f, b.delta_prime).hi
                } else {
                    let Some(v) = e.value(x) else { return Probe::slack(NEG) };
                    e.next_value(x, false).map_or(f64::INFINITY, |n| n.hi - v.lo)
                };
                Probe::slack(cap - growth)
            });
            let mut r = ConditionResult::from_parts(cond, vec![part("bounds", bounds), part("growth", dec)]);
            if by_construction {
                r.note = Some("the bounds with identity α1 = α2 hold with zero slack by construction".into());
            }
            r
        }
    }
}
