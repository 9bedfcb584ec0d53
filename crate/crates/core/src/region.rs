//! Sets of states: boxes, finite box unions, and level sets of expressions.

use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::interval::{Interval, IntervalBox};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RegionSpec {
    /// Closed box; bounds may be infinite.
    Box { bounds: Vec<[f64; 2]> },
    /// Finite union of closed boxes; the empty union is the empty set.
    BoxUnion { boxes: Vec<Vec<[f64; 2]>> },
    /// `{x : expr(x) <= level}`
    Sublevel { expr: Expr, level: f64 },
    /// `{x : expr(x) >= level}`
    Superlevel { expr: Expr, level: f64 },
}

fn to_box(bounds: &[[f64; 2]]) -> IntervalBox {
    IntervalBox(bounds.iter().map(|&[lo, hi]| Interval { lo, hi }).collect())
}

impl RegionSpec {
    pub fn empty() -> Self {
        RegionSpec::BoxUnion { boxes: vec![] }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        RegionSpec::Box { bounds: vec![[lo, hi]] }
    }

    /// `{x : |x| >= r}` in one dimension.
    pub fn outside_symmetric(r: f64) -> Self {
        RegionSpec::BoxUnion { boxes: vec![vec![[f64::NEG_INFINITY, -r]], vec![[r, f64::INFINITY]]] }
    }

    /// The boxes of a box-form region, `None` for level sets.
    pub fn boxes(&self) -> Option<Vec<IntervalBox>> {
        match self {
            RegionSpec::Box { bounds } => Some(vec![to_box(bounds)]),
            RegionSpec::BoxUnion { boxes } => Some(boxes.iter().map(|b| to_box(b)).collect()),
            _ => None,
        }
    }

    /// Dimension implied by the region, if it names one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            RegionSpec::Box { bounds } => Some(bounds.len()),
            RegionSpec::BoxUnion { boxes } => boxes.first().map(Vec::len),
            RegionSpec::Sublevel { expr, .. } | RegionSpec::Superlevel { expr, .. } => Some(expr.arity()).filter(|&n| n > 0),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), String> {
        match self {
            RegionSpec::Box { bounds } => check_bounds(bounds, dim),
            RegionSpec::BoxUnion { boxes } => boxes.iter().try_for_each(|b| check_bounds(b, dim)),
            RegionSpec::Sublevel { expr, .. } | RegionSpec::Superlevel { expr, .. } => {
                if expr.arity() > dim {
                    Err(format!("level-set expression uses x{} in a {dim}-dimensional space", expr.arity()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// True only when the region is syntactically empty.
    pub fn is_empty(&self) -> bool {
        matches!(self, RegionSpec::BoxUnion { boxes } if boxes.is_empty())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            RegionSpec::Box { bounds } => to_box(bounds).contains(x),
            RegionSpec::BoxUnion { boxes } => boxes.iter().any(|b| to_box(b).contains(x)),
            RegionSpec::Sublevel { expr, level } => expr.eval(x).is_ok_and(|v| v <= *level),
            RegionSpec::Superlevel { expr, level } => expr.eval(x).is_ok_and(|v| v >= *level),
        }
    }

    /// Conservative test: `false` guarantees the cell misses the (closed) region.
    pub fn may_intersect(&self, cell: &IntervalBox) -> bool {
        match self {
            RegionSpec::Box { bounds } => to_box(bounds).intersects(cell),
            RegionSpec::BoxUnion { boxes } => boxes.iter().any(|b| to_box(b).intersects(cell)),
            RegionSpec::Sublevel { expr, level } => expr.eval_interval(cell).map_or(true, |v| v.lo <= *level),
            RegionSpec::Superlevel { expr, level } => expr.eval_interval(cell).map_or(true, |v| v.hi >= *level),
        }
    }

    /// Conservative test: `true` guarantees the cell lies inside the region.
    pub fn surely_contains(&self, cell: &IntervalBox) -> bool {
        match self {
            RegionSpec::Box { bounds } => cell.is_subset_of(&to_box(bounds)),
            RegionSpec::BoxUnion { boxes } => boxes.iter().any(|b| cell.is_subset_of(&to_box(b))),
            RegionSpec::Sublevel { expr, level } => expr.eval_interval(cell).is_ok_and(|v| v.hi <= *level),
            RegionSpec::Superlevel { expr, level } => expr.eval_interval(cell).is_ok_and(|v| v.lo >= *level),
        }
    }

    /// Euclidean distance from a box to a box-form region.
    pub fn box_distance(&self, cell: &IntervalBox) -> Option<f64> {
        self.boxes().map(|bs| bs.iter().map(|b| cell.distance_to(b)).fold(f64::INFINITY, f64::min))
    }
}

fn check_bounds(bounds: &[[f64; 2]], dim: usize) -> Result<(), String> {
    if bounds.len() != dim {
        return Err(format!("box has {} bounds, expected {dim}", bounds.len()));
    }
    for (i, &[lo, hi]) in bounds.iter().enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(format!("invalid bounds [{lo}, {hi}] in dimension {}", i + 1));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn symmetric_complement() {
        let u = RegionSpec::outside_symmetric(0.5);
        assert!(u.contains(&[0.5]) && u.contains(&[-7.0]) && !u.contains(&[0.49]));
        let cell = IntervalBox::from_bounds(&[[0.45, 0.5]]).unwrap();
        assert!(u.may_intersect(&cell));
        assert!(!u.surely_contains(&cell));
        assert_eq!(u.box_distance(&IntervalBox::from_bounds(&[[-0.2, 0.2]]).unwrap()), Some(0.3));
    }

    #[test]
    fn level_sets_are_tested_with_intervals() {
        let u = RegionSpec::Superlevel { expr: parse("x1^2").unwrap(), level: 0.25 };
        let far = IntervalBox::from_bounds(&[[0.6, 0.7]]).unwrap();
        let near = IntervalBox::from_bounds(&[[0.1, 0.2]]).unwrap();
        assert!(u.surely_contains(&far));
        assert!(!u.may_intersect(&near));
        assert!(u.contains(&[-0.5]));
    }

    #[test]
    fn empty_union() {
        let e = RegionSpec::empty();
        assert!(e.is_empty());
        assert!(!e.contains(&[0.0]));
        assert!(!e.may_intersect(&IntervalBox::from_bounds(&[[-1.0, 1.0]]).unwrap()));
    }

    #[test]
    fn round_trips_through_toml() {
        let r = RegionSpec::Sublevel { expr: parse("x1^2 + x2^2").unwrap(), level: 1.0 };
        let text = toml::to_string(&r).unwrap();
        let back: RegionSpec = toml::from_str(&text).unwrap();
        assert!(back.contains(&[0.5, 0.5]) && !back.contains(&[1.0, 1.0]));
    }
}
