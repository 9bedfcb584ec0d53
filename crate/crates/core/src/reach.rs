//! Grid over- and under-approximations of δ-reachable sets, and the checks
//! built on them (safety, Assumption-1 style separation, invariance).
//!
//! The over-approximation is a fixpoint of a cell-to-cell transition
//! relation. In continuous time a neighbour is added when some state on the
//! shared face can move towards it, i.e. the perturbed velocity component
//! normal to the face can point outwards. In discrete time the successors of
//! a cell are the cells met by the interval image `f(cell) + [-δ, δ]^n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, simulate, DisturbancePolicy, Extremal, SystemSpec, Trajectory};
use crate::expr::{EvalError, Expr};
use crate::grid::{Flag, Grid, GridSet};
use crate::interval::{Interval, IntervalBox};
use crate::region::RegionSpec;

/// Velocities within this of zero count as tangent to a face.
const TANGENCY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dynamics(#[from] dynamics::DynamicsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Cells of `grid` whose closed box meets `w`. Fails if a box-form `w`
/// sticks out of the domain.
pub fn seed_cells(w: &RegionSpec, grid: &Grid) -> Result<Vec<usize>, ReachError> {
    w.validate(grid.dim()).map_err(ReachError::Invalid)?;
    if let Some(boxes) = w.boxes() {
        let mut out = Vec::new();
        for b in boxes {
            if !b.is_subset_of(&grid.domain) {
                return Err(ReachError::Invalid(format!("initial set {b} is not inside the grid domain {}", grid.domain)));
            }
            out.extend(grid.cells_meeting(&b).0);
        }
        out.sort_unstable();
        out.dedup();
        return Ok(out);
    }
    Ok((0..grid.len()).into_par_iter().filter(|&i| w.may_intersect(&grid.cell_box(i))).collect())
}

/// Face of `cell` shared with the neighbour at `offset`.
fn shared_face(cell: &IntervalBox, offset: &[i64]) -> IntervalBox {
    IntervalBox(
        cell.0
            .iter()
            .zip(offset)
            .map(|(iv, &o)| match o {
                1 => Interval::point(iv.hi),
                -1 => Interval::point(iv.lo),
                _ => *iv,
            })
            .collect(),
    )
}

fn can_cross(sys: &SystemSpec, face: &IntervalBox, offset: &[i64], delta: f64) -> bool {
    let Ok(v) = sys.eval_box(face) else { return true };
    offset.iter().zip(&v).all(|(&o, vi)| match o {
        1 => vi.hi + delta > TANGENCY_TOL,
        -1 => vi.lo - delta < -TANGENCY_TOL,
        _ => true,
    })
}

/// Cells whose open interior meets `img` (falling back to closed contact
/// when the image is degenerate and sits on a face).
fn interior_hits(grid: &Grid, img: &IntervalBox) -> (Vec<usize>, bool) {
    let (ranges, outside) = grid.index_ranges(img);
    let Some(mut ranges) = ranges else { return (vec![], true) };
    for (axis, r) in ranges.iter_mut().enumerate() {
        let iv = img.0[axis];
        let (mut a, mut b) = *r;
        while a < b && grid.face(axis, a + 1) <= iv.lo {
            a += 1;
        }
        while b > a && grid.face(axis, b) >= iv.hi {
            b -= 1;
        }
        *r = (a, b);
    }
    (grid.enumerate_ranges(&ranges), outside)
}

fn successors(sys: &SystemSpec, grid: &Grid, offsets: &[Vec<i64>], delta: f64, idx: usize) -> (Vec<usize>, bool) {
    let cell = grid.cell_box(idx);
    if sys.is_discrete() {
        let img = match sys.eval_box(&cell) {
            Ok(v) => IntervalBox(v.into_iter().map(|i| Interval { lo: i.lo - delta, hi: i.hi + delta }).collect()),
            Err(_) => return ((0..grid.len()).collect(), true),
        };
        if img.0.iter().any(|i| !i.lo.is_finite() || !i.hi.is_finite()) {
            return ((0..grid.len()).collect(), true);
        }
        return interior_hits(grid, &img);
    }
    let mut out = Vec::new();
    let mut escaped = false;
    for o in offsets {
        if !can_cross(sys, &shared_face(&cell, o), o, delta) {
            continue;
        }
        match grid.neighbor(idx, o) {
            Some(j) => out.push(j),
            None => escaped = true,
        }
    }
    (out, escaped)
}

/// Grows `init` to a fixpoint of the cell transition relation.
pub fn close_under_transitions(sys: &SystemSpec, init: GridSet, delta: f64) -> GridSet {
    let mut set = init;
    set.delta = delta;
    set.flag = Flag::Over;
    let grid = set.grid.clone();
    let offsets = grid.offsets();
    let mut frontier: Vec<usize> = set.members().collect();
    while !frontier.is_empty() {
        let found: Vec<(Vec<usize>, bool)> =
            frontier.par_iter().map(|&i| successors(sys, &grid, &offsets, delta, i)).collect();
        let mut next = Vec::new();
        for (cells, esc) in found {
            set.escaped |= esc;
            for j in cells {
                if set.insert(j) {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        frontier = next;
    }
    set
}

/// Over-approximation of the δ-reachable set from `w` on `grid`.
pub fn reach_over(sys: &SystemSpec, w: &RegionSpec, delta: f64, grid: &Grid) -> Result<GridSet, ReachError> {
    if !(delta >= 0.0) {
        return Err(ReachError::Invalid(format!("δ must be nonnegative, got {delta}")));
    }
    if grid.dim() != sys.dim {
        return Err(ReachError::Invalid(format!("grid has dimension {}, system has {}", grid.dim(), sys.dim)));
    }
    let seeds = seed_cells(w, grid)?;
    let init = GridSet::from_members(grid.clone(), Flag::Over, delta, seeds);
    Ok(close_under_transitions(sys, init, delta))
}

/// Trajectory sampling settings shared by the Monte-Carlo routines.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sampling {
    pub trials: usize,
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
}

impl Sampling {
    pub fn trial_seed(&self, k: usize) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k as u64)
    }
}

/// `Σ (x_i - c_i)^2`, whose gradient points away from `c`.
pub fn outward_from(c: &[f64]) -> Expr {
    c.iter()
        .enumerate()
        .map(|(i, &ci)| (Expr::Var(i) - Expr::num(ci)).powi(2))
        .reduce(|a, b| a + b)
        .expect("nonempty center")
}

/// The policy mix used by sampling: random in the ball, random on the
/// sphere, a constant extremal direction, and outward gradient alignment.
pub fn policy_for_trial(k: usize, seed: u64, dim: usize, delta: f64, center: &[f64]) -> DisturbancePolicy {
    match k % 4 {
        0 => DisturbancePolicy::random(seed, delta),
        1 => DisturbancePolicy::random_boundary(seed, delta),
        2 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = dynamics::sample_ball(&mut rng, dim, delta, true);
            DisturbancePolicy::constant(d, delta).expect("sampled on the sphere")
        }
        _ => DisturbancePolicy::extremal(Extremal::AlignGradient(outward_from(center)), delta),
    }
}

fn sample_in(w: &RegionSpec, seeds: &[usize], grid: &Grid, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let uniform = |rng: &mut ChaCha8Rng, b: &IntervalBox| -> Vec<f64> {
        b.0.iter().map(|i| if i.width() > 0.0 { rng.gen_range(i.lo..=i.hi) } else { i.lo }).collect()
    };
    if let Some(boxes) = w.boxes() {
        if boxes.is_empty() {
            return None;
        }
        let b = &boxes[rng.gen_range(0..boxes.len())];
        let b = b.intersection(&grid.domain)?;
        return Some(uniform(rng, &b));
    }
    for _ in 0..1000 {
        let c = seeds[rng.gen_range(0..seeds.len())];
        let x = uniform(rng, &grid.cell_box(c));
        if w.contains(&x) {
            return Some(x);
        }
    }
    None
}

/// Cells visited by sampled trajectories from `w`; with zero trials, the
/// seed cells of `w`.
pub fn reach_under(
    sys: &SystemSpec,
    w: &RegionSpec,
    delta: f64,
    grid: &Grid,
    sampling: &Sampling,
) -> Result<GridSet, ReachError> {
    let seeds = seed_cells(w, grid)?;
    let mut set = GridSet::from_members(grid.clone(), Flag::Under, delta, seeds.iter().copied());
    if sampling.trials == 0 || seeds.is_empty() {
        return Ok(set);
    }
    let center = w
        .boxes()
        .and_then(|b| b.first().map(IntervalBox::center))
        .unwrap_or_else(|| grid.domain.center());
    let runs: Vec<Result<(Vec<usize>, bool), ReachError>> = (0..sampling.trials)
        .into_par_iter()
        .map(|k| {
            let seed = sampling.trial_seed(k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
            let Some(x0) = sample_in(w, &seeds, grid, &mut rng) else { return Ok((vec![], false)) };
            let policy = policy_for_trial(k, seed, sys.dim, delta, &center);
            let tr = simulate(sys, &x0, &policy, sampling.horizon, sampling.step)?;
            let mut cells = Vec::with_capacity(tr.len());
            let mut left = false;
            for x in &tr.states {
                match grid.locate(x) {
                    Some(i) => cells.push(i),
                    None => left = true,
                }
            }
            Ok((cells, left))
        })
        .collect();
    for r in runs {
        let (cells, left) = r?;
        set.escaped |= left;
        for c in cells {
            set.insert(c);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SafetyVerdict {
    Safe,
    /// A sampled state of the under-approximation lies inside `U`.
    Unsafe { witness: IntervalBox },
    Unknown { reason: String },
}

/// Safe when no over-approximating cell meets `U`; unsafe only when an
/// under-approximation cell lies entirely inside `U`.
pub fn check_safety(over: &GridSet, u: &RegionSpec, under: Option<&GridSet>) -> SafetyVerdict {
    if over.flag != Flag::Over {
        return SafetyVerdict::Unknown { reason: "reach set is not an over-approximation".into() };
    }
    let touches = over.members().any(|i| u.may_intersect(&over.grid.cell_box(i)));
    if !touches && !over.escaped {
        return SafetyVerdict::Safe;
    }
    if let Some(under) = under {
        // prefer the witness closest to the middle of the reach set
        let mid = over.hull().map(|h| h.center()).unwrap_or_else(|| over.grid.domain.center());
        let witness = under
            .members()
            .map(|i| under.grid.cell_box(i))
            .filter(|b| u.surely_contains(b))
            .min_by(|a, b| a.distance_point(&mid).total_cmp(&b.distance_point(&mid)));
        if let Some(witness) = witness {
            return SafetyVerdict::Unsafe { witness };
        }
    }
    let reason = if over.escaped {
        "reach set escaped the grid domain".to_string()
    } else {
        "over-approximation meets U but no sampled witness was found".to_string()
    };
    SafetyVerdict::Unknown { reason }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assumption1Report {
    pub holds: bool,
    /// The one-cell dilation of the reach set misses the closure of `U`.
    pub disjoint: bool,
    /// The reach set stayed inside the grid domain.
    pub bounded: bool,
    /// Distance between the reach set and `U` (infinite if `U` is empty or
    /// out of reach of the grid).
    pub clearance: f64,
}

pub fn check_assumption1(over: &GridSet, u: &RegionSpec) -> Assumption1Report {
    let dilated = over.dilated();
    let disjoint = !dilated.members().any(|i| u.may_intersect(&dilated.grid.cell_box(i)));
    let bounded = !over.escaped;
    let clearance = if u.is_empty() || over.is_empty() {
        f64::INFINITY
    } else if u.boxes().is_some() {
        over.members()
            .map(|i| u.box_distance(&over.grid.cell_box(i)).unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min)
    } else {
        let grid = &over.grid;
        let u_cells: Vec<IntervalBox> =
            (0..grid.len()).map(|i| grid.cell_box(i)).filter(|b| u.may_intersect(b)).collect();
        over.boundary_cells()
            .par_iter()
            .map(|&i| {
                let b = grid.cell_box(i);
                u_cells.iter().map(|c| b.distance_to(c)).fold(f64::INFINITY, f64::min)
            })
            .reduce(|| f64::INFINITY, f64::min)
    };
    Assumption1Report { holds: disjoint && bounded, disjoint, bounded, clearance }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum InvarianceVerdict {
    Consistent { trials: usize },
    Violation { witness: Trajectory },
}

/// Samples trajectories from boundary cells of `omega` and looks for exits.
pub fn check_invariance(
    sys: &SystemSpec,
    omega: &GridSet,
    delta: f64,
    sampling: &Sampling,
) -> Result<InvarianceVerdict, ReachError> {
    let starts = omega.boundary_cells();
    if starts.is_empty() {
        return Ok(InvarianceVerdict::Consistent { trials: 0 });
    }
    let center = omega.hull().map(|h| h.center()).expect("nonempty set");
    let tol = 1e-9 * omega.grid.resolution();
    let results: Vec<Result<Option<Trajectory>, ReachError>> = (0..sampling.trials)
        .into_par_iter()
        .map(|k| {
            let seed = sampling.trial_seed(k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
            let cell = omega.grid.cell_box(starts[rng.gen_range(0..starts.len())]);
            let x0: Vec<f64> = cell.0.iter().map(|i| rng.gen_range(i.lo..=i.hi)).collect();
            let policy = policy_for_trial(k, seed, sys.dim, delta, &center);
            let mut tr = simulate(sys, &x0, &policy, sampling.horizon, sampling.step)?;
            if let Some(exit) = tr.states.iter().position(|x| !omega.contains_point(x, tol)) {
                tr.times.truncate(exit + 1);
                tr.states.truncate(exit + 1);
                tr.disturbances.truncate(exit + 1);
                return Ok(Some(tr));
            }
            Ok(None)
        })
        .collect();
    for r in results {
        if let Some(witness) = r? {
            return Ok(InvarianceVerdict::Violation { witness });
        }
    }
    Ok(InvarianceVerdict::Consistent { trials: sampling.trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TimeDomain;

    fn sys(f: &str) -> SystemSpec {
        SystemSpec::parse(&[f], TimeDomain::Continuous).unwrap()
    }

    fn line(res: f64) -> Grid {
        Grid::new(IntervalBox::from_bounds(&[[-1.0, 1.0]]).unwrap(), res).unwrap()
    }

    fn w() -> RegionSpec {
        RegionSpec::interval(-0.1, 0.1)
    }

    #[test]
    fn zero_disturbance_keeps_the_initial_set() {
        let g = line(1e-2);
        let r = reach_over(&sys("-x1"), &w(), 0.0, &g).unwrap();
        let h = r.hull().unwrap();
        assert!(h.0[0].lo >= -0.11 - 1e-12 && h.0[0].hi <= 0.11 + 1e-12, "{h}");
    }

    #[test]
    fn decay_reach_reaches_the_perturbed_equilibria() {
        let r = reach_over(&sys("-x1"), &w(), 0.2, &line(1e-3)).unwrap();
        let h = r.hull().unwrap();
        assert!((h.0[0].lo + 0.2).abs() <= 5e-3 && (h.0[0].hi - 0.2).abs() <= 5e-3, "{h}");
        assert!(!r.escaped);
    }

    #[test]
    fn growth_past_equilibrium_escapes() {
        let r = reach_over(&sys("x1"), &w(), 0.1, &line(1e-2)).unwrap();
        assert!(r.escaped);
    }

    #[test]
    fn discrete_reach_of_contraction() {
        let s = SystemSpec::parse(&["0.5 * x1"], TimeDomain::Discrete).unwrap();
        let r = reach_over(&s, &w(), 0.1, &line(1e-2)).unwrap();
        let h = r.hull().unwrap();
        // fixpoint of |x| <= 0.5|x| + 0.1 is 0.2
        assert!(h.0[0].hi >= 0.2 - 1e-9 && h.0[0].hi <= 0.23, "{h}");
    }

    #[test]
    fn initial_set_outside_domain_is_rejected() {
        let r = reach_over(&sys("-x1"), &RegionSpec::interval(0.5, 2.0), 0.1, &line(0.1));
        assert!(matches!(r, Err(ReachError::Invalid(_))));
    }

    #[test]
    fn zero_budget_gives_seed_cells() {
        let g = line(1e-2);
        let s = Sampling { trials: 0, horizon: 1.0, step: 0.01, seed: 1 };
        let u = reach_under(&sys("-x1"), &w(), 0.2, &g, &s).unwrap();
        assert_eq!(u.members().collect::<Vec<_>>(), seed_cells(&w(), &g).unwrap());
    }

    #[test]
    fn safety_and_assumption_on_decay() {
        let g = line(1e-3);
        let s = sys("-x1");
        let over = reach_over(&s, &w(), 0.2, &g).unwrap();
        let under = reach_under(&s, &w(), 0.2, &g, &Sampling { trials: 200, horizon: 20.0, step: 0.01, seed: 3 }).unwrap();
        assert_eq!(check_safety(&over, &RegionSpec::outside_symmetric(0.5), Some(&under)), SafetyVerdict::Safe);
        match check_safety(&over, &RegionSpec::outside_symmetric(0.15), Some(&under)) {
            SafetyVerdict::Unsafe { witness } => assert!(witness.0[0].mag_lo() >= 0.15 && witness.0[0].mag_hi() < 0.2),
            v => panic!("{v:?}"),
        }
        let empty = reach_over(&s, &RegionSpec::empty(), 0.2, &g).unwrap();
        assert_eq!(check_safety(&empty, &RegionSpec::outside_symmetric(0.15), None), SafetyVerdict::Safe);

        let a = check_assumption1(&over, &RegionSpec::outside_symmetric(0.2));
        assert!(!a.holds && a.clearance == 0.0);
        let a = check_assumption1(&over, &RegionSpec::outside_symmetric(0.5));
        assert!(a.holds && (a.clearance - 0.3).abs() < 5e-3);
        assert!(check_assumption1(&over, &RegionSpec::empty()).holds);
    }

    #[test]
    fn invariance_checks() {
        let g = line(1e-3);
        let s = sys("-x1");
        let smp = Sampling { trials: 64, horizon: 5.0, step: 0.01, seed: 9 };
        let small = GridSet::from_box(g.clone(), Flag::Over, &IntervalBox::from_bounds(&[[-0.1, 0.1]]).unwrap());
        assert!(matches!(check_invariance(&s, &small, 0.2, &smp).unwrap(), InvarianceVerdict::Violation { .. }));
        assert!(matches!(check_invariance(&s, &small, 0.0, &smp).unwrap(), InvarianceVerdict::Consistent { .. }));
    }
}
