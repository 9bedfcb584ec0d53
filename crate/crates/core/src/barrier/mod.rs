//! Robust barrier functions: constructions from Lyapunov certificates and
//! certification of candidates against each condition variant.

mod conditions;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classk::{self, Alpha0, ClassK, ExtAlpha, Side};
use crate::dynamics::{simulate, SystemSpec, TimeDomain};
use crate::expr::{EvalError, Expr};
use crate::grid::{Flag, Grid, GridSet};
use crate::interval::IntervalBox;
use crate::lyapunov::{self, LyapunovCertificate};
use crate::reach::policy_for_trial;
use crate::region::RegionSpec;

pub use conditions::{check_condition, BarrierCondition, ConditionResult, PartResult};

/// Reserve used when refitting comparison functions for a fixed level.
const LEVEL_RESERVE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum BarrierError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no admissible level: {0}")]
    NoLevel(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierKind {
    NegV,
    Levelled { c: f64 },
    Reciprocal { c: f64 },
    Custom,
}

/// `B = 1/h` with the comparison function bounding its growth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reciprocal {
    pub h: Expr,
    pub alpha3: ClassK,
}

/// A candidate barrier together with the data its conditions refer to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Barrier {
    pub b: Expr,
    pub kind: BarrierKind,
    pub time: TimeDomain,
    pub delta_prime: f64,
    pub domain: IntervalBox,
    /// Attracting box and excluded band for the decrease-type conditions.
    pub target: Option<IntervalBox>,
    pub band: f64,
    pub alpha0: Option<Alpha0>,
    /// Extended class-K function for B0, DTB0 and BARRIERDT.
    pub alpha: Option<ExtAlpha>,
    pub reciprocal: Option<Reciprocal>,
}

impl Barrier {
    pub fn custom(b: Expr, time: TimeDomain, delta_prime: f64, domain: IntervalBox) -> Self {
        Barrier {
            b,
            kind: BarrierKind::Custom,
            time,
            delta_prime,
            domain,
            target: None,
            band: 0.0,
            alpha0: None,
            alpha: None,
            reciprocal: None,
        }
    }

    pub fn with_alpha(mut self, alpha: ExtAlpha) -> Self {
        self.alpha = Some(alpha);
        self
    }

    /// `α3(α2⁻¹(c))` for a levelled barrier.
    pub fn pb_bound(&self) -> Option<f64> {
        match (self.kind, self.alpha0) {
            (BarrierKind::Levelled { c }, Some(a)) => Some(a.alpha3.eval(a.alpha2.inverse(c))),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierCertificate {
    pub barrier: Barrier,
    pub w: RegionSpec,
    pub u: RegionSpec,
    pub resolution: f64,
    pub cells: usize,
    pub results: Vec<ConditionResult>,
    pub verified: Vec<BarrierCondition>,
    /// Smallest certified worst-case rate on the zero-level band.
    pub zero_level_margin: Option<f64>,
    pub pb_bound: Option<f64>,
    pub warnings: Vec<String>,
}

impl BarrierCertificate {
    pub fn valid(&self) -> bool {
        self.verified.contains(&BarrierCondition::Def4) || self.verified.contains(&BarrierCondition::Def10)
    }

    pub fn passed(&self, cond: BarrierCondition) -> bool {
        self.verified.contains(&cond)
    }

    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn result(&self, cond: BarrierCondition) -> Option<&ConditionResult> {
        self.results.iter().find(|r| r.condition == cond)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// `B = -V` on the certificate's domain.
pub fn construct_neg_v(cert: &LyapunovCertificate) -> Barrier {
    Barrier {
        b: -cert.v.clone(),
        kind: BarrierKind::NegV,
        time: cert.time,
        delta_prime: cert.delta_prime,
        domain: cert.domain.clone(),
        target: Some(cert.target.clone()),
        band: cert.band,
        alpha0: Some(Alpha0::new(cert.alpha2, cert.alpha3, 0.0)),
        alpha: None,
        reciprocal: None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelChoice {
    pub c: f64,
    /// Smallest lower bound of V over the cells meeting the closure of U
    /// (or the boundary of the domain).
    pub c_star: f64,
    /// Cells on which V may fall below c.
    pub neighborhood: GridSet,
}

/// Largest level `c` whose sublevel cells stay away from `Ū` and `∂D` at the
/// given resolution. With an empty `U` the level is the maximum of V over D.
pub fn choose_level_c(cert: &LyapunovCertificate, u: &RegionSpec, resolution: f64) -> Result<LevelChoice, BarrierError> {
    let grid = Grid::new(cert.domain.clone(), resolution).map_err(BarrierError::Precondition)?;
    let n = grid.len();
    let values: Vec<_> = (0..n).into_par_iter().map(|k| cert.v.eval_interval(&grid.cell_box(k))).collect();
    let values = values.into_iter().collect::<Result<Vec<_>, _>>()?;
    let c = if u.is_empty() {
        let c = values.iter().map(|v| v.hi).fold(0.0, f64::max);
        LevelChoice { c, c_star: c, neighborhood: GridSet::from_members(grid.clone(), Flag::Over, 0.0, 0..n) }
    } else {
        let on_edge = |k: usize| {
            let m = grid.multi_index(k);
            m.iter().zip(&grid.counts).any(|(&i, &cnt)| i == 0 || i + 1 == cnt)
        };
        let c_star = (0..n)
            .filter(|&k| on_edge(k) || u.may_intersect(&grid.cell_box(k)))
            .map(|k| values[k].lo)
            .fold(f64::INFINITY, f64::min);
        if !(c_star > 0.0) {
            return Err(BarrierError::NoLevel(format!(
                "V vanishes on a cell meeting the unsafe set or the domain boundary (c* = {c_star})"
            )));
        }
        let c = c_star * (1.0 - 1e-9);
        let members = (0..n).filter(|&k| values[k].lo < c);
        LevelChoice { c, c_star, neighborhood: GridSet::from_members(grid.clone(), Flag::Over, 0.0, members) }
    };
    Ok(c)
}

/// Comparison functions refitted for the level `c`, chosen to make the
/// zero-level bound `α3(α2⁻¹(c))` as large as the samples allow.
fn refit_for_level(cert: &LyapunovCertificate, sys: &SystemSpec, c: f64) -> Result<(ClassK, ClassK), BarrierError> {
    let cells = lyapunov::verification_cells(&cert.target, &cert.domain, cert.band, cert.resolution)
        .map_err(BarrierError::Precondition)?;
    let mut vs = Vec::with_capacity(cells.len());
    let mut ds = Vec::with_capacity(cells.len());
    for cell in &cells {
        let x = cell.center();
        let s = cert.target.distance_point(&x);
        vs.push((s, cert.v.eval(&x)?));
        ds.push((s, lyapunov::decrease_at(&cert.v, sys, cert.delta_prime, &x)?));
    }
    let grid = classk::exponent_grid(0.05);
    let uppers: Vec<(f64, f64)> = grid
        .iter()
        .filter_map(|&p| classk::coefficient(&vs, p, Side::Upper).map(|a| (a * (1.0 + LEVEL_RESERVE), p)))
        .collect();
    let lowers: Vec<(f64, f64)> = grid
        .iter()
        .filter_map(|&p| classk::coefficient(&ds, p, Side::Lower).map(|a| (a * (1.0 - LEVEL_RESERVE), p)))
        .collect();
    let mut best: Option<(f64, (f64, f64), (f64, f64))> = None;
    for &(a2, p2) in &uppers {
        for &(a3, p3) in &lowers {
            let v = a3 * (c / a2).powf(p3 / p2);
            if best.map_or(true, |b| v > b.0) {
                best = Some((v, (a2, p2), (a3, p3)));
            }
        }
    }
    let (_, (a2, p2), (a3, p3)) =
        best.ok_or_else(|| BarrierError::Precondition("the certificate admits no comparison functions".into()))?;
    let smax = cert.alpha2.s_max;
    let mk = |a, p| ClassK::new(a, p, smax).map_err(|e| BarrierError::Precondition(e.to_string()));
    Ok((mk(a2, p2)?, mk(a3, p3)?))
}

/// `B_c = c - V`, with α2 and α3 refitted for the level.
pub fn construct_levelled(cert: &LyapunovCertificate, sys: &SystemSpec, c: f64) -> Result<Barrier, BarrierError> {
    if !(c > 0.0) {
        return Err(BarrierError::Precondition("the level must be positive".into()));
    }
    let (alpha2, alpha3) = refit_for_level(cert, sys, c)?;
    Ok(Barrier {
        b: Expr::num(c) - cert.v.clone(),
        kind: BarrierKind::Levelled { c },
        time: cert.time,
        delta_prime: cert.delta_prime,
        domain: cert.domain.clone(),
        target: Some(cert.target.clone()),
        band: cert.band,
        alpha0: Some(Alpha0::new(alpha2, alpha3, c)),
        alpha: None,
        reciprocal: None,
    })
}

/// `B = 1/(c - V)`, checked on `{c - V > 0}` minus one cell layer.
pub fn construct_reciprocal(cert: &LyapunovCertificate, c: f64) -> Result<Barrier, BarrierError> {
    if !(c > 0.0) {
        return Err(BarrierError::Precondition("the level must be positive".into()));
    }
    let h = Expr::num(c) - cert.v.clone();
    Ok(Barrier {
        b: Expr::num(1.0) / h.clone(),
        kind: BarrierKind::Reciprocal { c },
        time: cert.time,
        delta_prime: cert.delta_prime,
        domain: cert.domain.clone(),
        target: Some(cert.target.clone()),
        band: cert.band,
        alpha0: None,
        alpha: None,
        reciprocal: Some(Reciprocal { h, alpha3: cert.alpha3 }),
    })
}

fn certification_cells(barrier: &Barrier, resolution: f64) -> Result<Vec<IntervalBox>, BarrierError> {
    let grid = Grid::new(barrier.domain.clone(), resolution).map_err(BarrierError::Precondition)?;
    let n = grid.len();
    let Some(rec) = &barrier.reciprocal else {
        return Ok((0..n).map(|k| grid.cell_box(k)).collect());
    };
    let inside: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|k| rec.h.eval_interval(&grid.cell_box(k)).is_ok_and(|h| h.lo > 0.0))
        .collect();
    let offsets = grid.offsets();
    Ok((0..n)
        .filter(|&k| inside[k] && offsets.iter().all(|o| grid.neighbor(k, o).map_or(false, |j| inside[j])))
        .map(|k| grid.cell_box(k))
        .collect())
}

/// Checks each requested condition on the grid cells of the candidate's domain.
pub fn certify(
    barrier: &Barrier,
    sys: &SystemSpec,
    w: &RegionSpec,
    u: &RegionSpec,
    resolution: f64,
    conditions: &[BarrierCondition],
) -> Result<BarrierCertificate, BarrierError> {
    if barrier.domain.dim() != sys.dim {
        return Err(BarrierError::Precondition("domain and system dimensions differ".into()));
    }
    w.validate(sys.dim).map_err(BarrierError::Precondition)?;
    u.validate(sys.dim).map_err(BarrierError::Precondition)?;
    if let (Some(wb), Some(ub)) = (w.boxes(), u.boxes()) {
        if wb.iter().any(|a| ub.iter().any(|b| a.intersects(b))) {
            return Err(BarrierError::Precondition("the initial and unsafe sets overlap".into()));
        }
    }
    if sys.time != barrier.time {
        return Err(BarrierError::Precondition("candidate and system use different time domains".into()));
    }
    let cells = certification_cells(barrier, resolution)?;
    let mut results = Vec::new();
    let mut warnings = Vec::new();
    for &cond in conditions {
        let r = check_condition(barrier, sys, w, u, cond, &cells);
        if let Some(note) = &r.note {
            warnings.push(format!("{cond}: {note}"));
        }
        results.push(r);
    }
    let verified = results.iter().filter(|r| r.passed).map(|r| r.condition).collect();
    let pb_bound = barrier.pb_bound();
    let zero_level_margin = results
        .iter()
        .find(|r| r.condition == BarrierCondition::Pb)
        .and_then(|r| r.parts.first().filter(|p| !p.vacuous).map(|p| p.margin + pb_bound.unwrap_or(0.0)))
        .or_else(|| {
            results
                .iter()
                .find(|r| r.condition == BarrierCondition::Def4)
                .and_then(|r| r.parts.get(2).filter(|p| !p.vacuous).map(|p| p.margin))
        });
    Ok(BarrierCertificate {
        barrier: barrier.clone(),
        w: w.clone(),
        u: u.clone(),
        resolution,
        cells: cells.len(),
        results,
        verified,
        zero_level_margin,
        pb_bound,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub trials: usize,
    pub exits: usize,
    /// Start of the first trajectory that left `{B >= 0}`.
    pub witness: Option<Vec<f64>>,
}

/// Simulates trajectories from `{B >= 0}` under sampled disturbances of size
/// δ′ and counts those that reach a state with `B < 0`.
pub fn replay_invariance(
    barrier: &Barrier,
    sys: &SystemSpec,
    resolution: f64,
    trials: usize,
    horizon: f64,
    step: f64,
    seed: u64,
) -> Result<ReplayReport, BarrierError> {
    let grid = Grid::new(barrier.domain.clone(), resolution).map_err(BarrierError::Precondition)?;
    let starts: Vec<IntervalBox> = (0..grid.len())
        .map(|k| grid.cell_box(k))
        .filter(|b| barrier.b.eval_interval(b).is_ok_and(|v| v.hi >= 0.0))
        .collect();
    if starts.is_empty() {
        return Err(BarrierError::Precondition("the set {B >= 0} has no cells".into()));
    }
    let center = barrier.target.as_ref().unwrap_or(&barrier.domain).center();
    let outcomes: Vec<Option<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|k| -> Result<Option<Vec<f64>>, BarrierError> {
            let s = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let x0 = loop {
                let cell = &starts[rng.gen_range(0..starts.len())];
                let x: Vec<f64> = cell.0.iter().map(|i| if i.width() > 0.0 { rng.gen_range(i.lo..=i.hi) } else { i.lo }).collect();
                if barrier.b.eval(&x)? >= 0.0 {
                    break x;
                }
            };
            let policy = policy_for_trial(k, s, sys.dim, barrier.delta_prime, &center);
            let traj = simulate(sys, &x0, &policy, horizon, step).map_err(|e| BarrierError::Precondition(e.to_string()))?;
            let left = traj.blow_up.is_some() || traj.states.iter().any(|x| barrier.b.eval(x).map_or(true, |v| v < 0.0));
            Ok(left.then_some(x0))
        })
        .collect::<Result<_, _>>()?;
    let exits = outcomes.iter().filter(|o| o.is_some()).count();
    let witness = outcomes.into_iter().flatten().next();
    Ok(ReplayReport { trials, exits, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::lyapunov::{synthesize_v, Basis, SynthOptions};

    fn ib(lo: f64, hi: f64) -> IntervalBox {
        IntervalBox::from_bounds(&[[lo, hi]]).unwrap()
    }

    fn example_one() -> SystemSpec {
        SystemSpec::parse(&["-x1"], TimeDomain::Continuous).unwrap()
    }

    fn example_cert(sys: &SystemSpec) -> LyapunovCertificate {
        synthesize_v(sys, &ib(-0.2, 0.2), Some(0.2), &ib(-0.5, 0.5), 0.1, Basis::SmoothedDistance { kappa: 200.0 },
            &SynthOptions { resolution: Some(1e-3), ..Default::default() }).unwrap()
    }

    #[test]
    fn hand_written_barrier() {
        let sys = example_one();
        let w = RegionSpec::interval(-0.1, 0.1);
        let u = RegionSpec::outside_symmetric(0.5);
        let b = |d| Barrier::custom(parse("0.04 - x1^2").unwrap(), TimeDomain::Continuous, d, ib(-1.0, 1.0));
        let ok = certify(&b(0.1), &sys, &w, &u, 1e-3, &[BarrierCondition::Def4]).unwrap();
        assert!(ok.valid(), "{:?}", ok.results);
        let bad = certify(&b(0.25), &sys, &w, &u, 1e-3, &[BarrierCondition::Def4]).unwrap();
        assert!(!bad.valid());
        let x = bad.results[0].witness().unwrap().center()[0].abs();
        assert!((x - 0.2).abs() < 5e-3, "{x}");
    }

    #[test]
    fn constant_barrier_is_vacuous() {
        let sys = example_one();
        let b = Barrier::custom(parse("1").unwrap(), TimeDomain::Continuous, 0.1, ib(-1.0, 1.0));
        let c = certify(&b, &sys, &RegionSpec::interval(-0.1, 0.1), &RegionSpec::empty(), 0.01, &[BarrierCondition::Def4]).unwrap();
        assert!(c.valid());
        assert!(!c.warnings.is_empty());
    }

    #[test]
    fn lyapunov_chain() {
        let sys = example_one();
        let cert = example_cert(&sys);
        let w = RegionSpec::interval(-0.1, 0.1);
        let u = RegionSpec::outside_symmetric(0.5);
        let neg = construct_neg_v(&cert);
        let c = certify(&neg, &sys, &w, &u, 1e-3, &[BarrierCondition::Def4, BarrierCondition::B1, BarrierCondition::B2]).unwrap();
        assert!(c.all_passed(), "{:?}", c.results);

        let level = choose_level_c(&cert, &u, 0.05).unwrap();
        assert!((level.c - 0.0613).abs() < 2e-3, "{}", level.c);
        let hull = level.neighborhood.hull().unwrap();
        assert!((hull.0[0].hi - 0.45).abs() < 1e-12);
        let lev = construct_levelled(&cert, &sys, level.c).unwrap();
        let c = certify(&lev, &sys, &w, &u, 1e-3, &[BarrierCondition::Def4, BarrierCondition::Bc1, BarrierCondition::Pb]).unwrap();
        assert!(c.all_passed(), "{:?}", c.results);
        let (m, b) = (c.zero_level_margin.unwrap(), c.pb_bound.unwrap());
        assert!((m - b).abs() <= 0.05 * b, "{m} vs {b}");

        let rec = construct_reciprocal(&cert, level.c).unwrap();
        let c = certify(&rec, &sys, &w, &RegionSpec::empty(), 1e-3, &[BarrierCondition::Rb]).unwrap();
        assert!(c.all_passed(), "{:?}", c.results);
        assert_eq!(rec.b.eval(&[0.0]).unwrap(), 1.0 / level.c);
    }

    #[test]
    fn level_fails_when_unsafe_touches_target() {
        let sys = example_one();
        let cert = example_cert(&sys);
        assert!(matches!(choose_level_c(&cert, &RegionSpec::outside_symmetric(0.2), 0.01), Err(BarrierError::NoLevel(_))));
        let all = choose_level_c(&cert, &RegionSpec::empty(), 0.01).unwrap();
        assert!(all.c >= cert.v.eval(&[0.5]).unwrap());
    }

    #[test]
    fn condition_names_round_trip() {
        for c in BarrierCondition::ALL {
            assert_eq!(BarrierCondition::from_name(c.name()), Some(c));
            let j = serde_json::to_string(&c).unwrap();
            assert_eq!(j, format!("\"{}\"", c.name()));
        }
    }
}
