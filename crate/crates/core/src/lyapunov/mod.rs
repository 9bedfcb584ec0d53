//! Robust Lyapunov functions: synthesis, cell-wise verification and
//! empirical checks of robust uniform asymptotic stability.

mod poly;
mod ruas;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cellcheck::{check_boxes, CheckStats, Probe};
use crate::classk::{self, ClassK, Side};
use crate::dynamics::{norm, SystemSpec, TimeDomain};
use crate::expr::{EvalError, Expr};
use crate::grid::{Grid, GridSet};
use crate::interval::{Interval, IntervalBox};

pub use ruas::{check_ruas_empirical, CounterexampleKind, RuasCounterexample, RuasOptions, RuasReport};

/// Widths below this are treated as degenerate target dimensions.
const DEGENERATE: f64 = 1e-12;
/// Bisection depth used when a cell bound is inconclusive.
pub const CHECK_DEPTH: usize = 8;

#[derive(Debug, Error)]
pub enum LyapunovError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("synthesis failed: {reason}")]
    Synthesis { reason: String, margins: Option<Margins> },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    SmoothedDistance { kappa: f64 },
    Polynomial { degree: u32 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Verification cell width; derived from the domain when absent.
    pub resolution: Option<f64>,
    /// Width of the excluded band around the target; `0.2 · dist(A, ∂D)` when absent.
    pub band: Option<f64>,
    /// Factor applied to the fitted lower comparison functions α1 and α3.
    pub lower_reserve: f64,
    /// Factor applied to the fitted upper comparison function α2.
    pub upper_reserve: f64,
    /// Sample count for the polynomial linear program.
    pub lp_samples: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { resolution: None, band: None, lower_reserve: 0.5, upper_reserve: 1.5, lp_samples: 200 }
    }
}

/// Worst slack per condition: `V - α1`, `α2 - V`, and the decrease slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub lower: f64,
    pub upper: f64,
    pub decrease: f64,
}

impl Margins {
    pub fn all_positive(&self) -> bool {
        self.lower > 0.0 && self.upper > 0.0 && self.decrease > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Alpha1,
    Alpha2,
    Decrease,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub v: Expr,
    pub basis: Option<Basis>,
    /// Box enclosing the attracting set.
    pub target: IntervalBox,
    pub domain: IntervalBox,
    /// Cells closer than this to the target are not checked.
    pub band: f64,
    pub delta_prime: f64,
    pub time: TimeDomain,
    pub alpha1: ClassK,
    pub alpha2: ClassK,
    pub alpha3: ClassK,
    pub margins: Margins,
    pub resolution: f64,
    pub cells: usize,
    /// Disturbance bound used to compute the attracting set, if known.
    pub omega_delta: Option<f64>,
}

impl LyapunovCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verification {
    Pass { margins: Margins },
    Fail { cell: IntervalBox, condition: Condition, slack: f64 },
}

impl Verification {
    pub fn passed(&self) -> bool {
        matches!(self, Verification::Pass { .. })
    }
}

/// `Σ_i (sp(a_i - x_i) + sp(x_i - b_i))²` for the box `[a, b]`, a C¹
/// surrogate of the squared distance to the box. Degenerate axes use
/// `(x_i - a_i)²`.
pub fn smoothed_distance(target: &IntervalBox, kappa: f64) -> Expr {
    target
        .0
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let x = Expr::var(i);
            if a.width() < DEGENERATE {
                (x - Expr::num(a.lo)).powi(2)
            } else {
                let below = (Expr::num(a.lo) - x.clone()).smoothplus(kappa);
                let above = (x - Expr::num(a.hi)).smoothplus(kappa);
                (below + above).powi(2)
            }
        })
        .reduce(|a, b| a + b)
        .expect("nonempty target")
}

/// Enclosure of `max_{‖d‖ ≤ δ} g·(f + d) = g·f + δ‖g‖`. In one dimension with
/// a sign-definite gradient the factored form avoids the dependency between
/// the two terms.
pub fn sup_rate(g: &[Interval], f: &[Interval], delta: f64) -> Interval {
    if g.len() == 1 {
        let (g, f) = (g[0], f[0]);
        if g.lo >= 0.0 {
            return g * (f + Interval::point(delta));
        }
        if g.hi <= 0.0 {
            return (-g) * (Interval::point(delta) - f);
        }
    }
    let dot = g.iter().zip(f).fold(Interval::point(0.0), |acc, (&gi, &fi)| acc + gi * fi);
    let sq = g.iter().fold(Interval::point(0.0), |acc, &gi| acc + gi.sqr());
    dot + sq.map_monotone(f64::sqrt).scale(delta)
}

/// Point version of [`sup_rate`].
pub fn sup_rate_point(g: &[f64], f: &[f64], delta: f64) -> f64 {
    g.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() + delta * norm(g)
}

fn precondition(msg: impl Into<String>) -> LyapunovError {
    LyapunovError::Precondition(msg.into())
}

/// Default verification resolution: at most about 40000 cells.
pub fn default_resolution(domain: &IntervalBox, target_resolution: Option<f64>) -> f64 {
    let n = domain.dim() as f64;
    let vol: f64 = domain.0.iter().map(|i| i.width()).product();
    let coarse = (vol / 40000.0).powf(1.0 / n);
    match target_resolution {
        Some(r) => r.max(coarse),
        None => coarse,
    }
}

/// Default band: a fifth of the clearance between the target and `∂D`.
pub fn default_band(target: &IntervalBox, domain: &IntervalBox) -> f64 {
    0.2 * clearance(target, domain)
}

fn clearance(target: &IntervalBox, domain: &IntervalBox) -> f64 {
    target
        .0
        .iter()
        .zip(&domain.0)
        .map(|(a, d)| (a.lo - d.lo).min(d.hi - a.hi))
        .fold(f64::INFINITY, f64::min)
}

/// Grid cells of `domain` lying at distance at least `band` from `target`.
pub fn verification_cells(target: &IntervalBox, domain: &IntervalBox, band: f64, resolution: f64) -> Result<Vec<IntervalBox>, String> {
    let grid = Grid::new(domain.clone(), resolution)?;
    Ok((0..grid.len())
        .map(|k| grid.cell_box(k))
        .filter(|b| b.distance_interval_to(target).lo >= band)
        .collect())
}

pub(crate) fn s_max(target: &IntervalBox, domain: &IntervalBox) -> f64 {
    domain.distance_interval_to(target).hi
}

/// Box enclosure of the δ-ball around `f`.
fn disturbed_image(f: &[Interval], delta: f64) -> IntervalBox {
    IntervalBox(f.iter().map(|i| Interval::new(i.lo - delta, i.hi + delta)).collect())
}

/// Sample disturbances for pointwise discrete estimates: the axis
/// directions and the scaled corners of the cube.
fn discrete_directions(dim: usize, delta: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dim]];
    for i in 0..dim {
        for s in [-1.0, 1.0] {
            let mut d = vec![0.0; dim];
            d[i] = s * delta;
            out.push(d);
        }
    }
    if dim > 1 {
        let k = delta / (dim as f64).sqrt();
        for mask in 0..(1usize << dim) {
            out.push((0..dim).map(|i| if mask >> i & 1 == 1 { k } else { -k }).collect());
        }
    }
    out
}

/// Pointwise decrease slack `-(sup_d rate)` at `x`.
pub(crate) fn decrease_at(v: &Expr, sys: &SystemSpec, delta: f64, x: &[f64]) -> Result<f64, EvalError> {
    let f = sys.eval(x)?;
    match sys.time {
        TimeDomain::Continuous => {
            let g = v.grad(x)?;
            Ok(-sup_rate_point(&g, &f, delta))
        }
        TimeDomain::Discrete => {
            let vx = v.eval(x)?;
            let mut worst = f64::NEG_INFINITY;
            for d in discrete_directions(sys.dim, delta) {
                let y: Vec<f64> = f.iter().zip(&d).map(|(a, b)| a + b).collect();
                worst = worst.max(v.eval(&y)?);
            }
            Ok(vx - worst)
        }
    }
}

struct Setting<'a> {
    v: &'a Expr,
    sys: &'a SystemSpec,
    target: &'a IntervalBox,
    delta: f64,
}

impl Setting<'_> {
    fn lower(&self, b: &IntervalBox, a1: &ClassK) -> f64 {
        let s = b.distance_interval_to(self.target);
        match self.v.eval_interval(b) {
            Ok(v) => v.lo - a1.eval(s.hi),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn upper(&self, b: &IntervalBox, a2: &ClassK) -> f64 {
        let s = b.distance_interval_to(self.target);
        match self.v.eval_interval(b) {
            Ok(v) => a2.eval(s.lo) - v.hi,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn decrease(&self, b: &IntervalBox, a3: &ClassK) -> f64 {
        let s = b.distance_interval_to(self.target);
        let Ok(f) = self.sys.eval_box(b) else { return f64::NEG_INFINITY };
        let rate = match self.sys.time {
            TimeDomain::Continuous => match self.v.grad_interval(b) {
                Ok((_, g)) => sup_rate(&g, &f, self.delta).hi,
                Err(_) => return f64::NEG_INFINITY,
            },
            TimeDomain::Discrete => {
                let image = disturbed_image(&f, self.delta);
                match (self.v.eval_interval(&image), self.v.eval_interval(b)) {
                    (Ok(vi), Ok(vx)) => vi.hi - vx.lo,
                    _ => return f64::NEG_INFINITY,
                }
            }
        };
        -(rate + a3.eval(s.hi))
    }
}

fn stats_to_result(stats: [(Condition, CheckStats); 3]) -> Verification {
    for (cond, s) in &stats {
        if let Some(cell) = &s.failure {
            return Verification::Fail { cell: cell.clone(), condition: *cond, slack: s.failure_slack };
        }
    }
    Verification::Pass {
        margins: Margins { lower: stats[0].1.margin, upper: stats[1].1.margin, decrease: stats[2].1.margin },
    }
}

/// Checks the three conditions of a candidate on the cells of `cert.domain`
/// at the given resolution that lie outside the band.
pub fn verify_v(cert: &LyapunovCertificate, sys: &SystemSpec, resolution: f64) -> Result<Verification, LyapunovError> {
    if sys.time != cert.time {
        return Err(precondition("certificate and system use different time domains"));
    }
    let cells = verification_cells(&cert.target, &cert.domain, cert.band, resolution).map_err(precondition)?;
    Ok(verify_cells(cert, sys, &cells))
}

fn verify_cells(cert: &LyapunovCertificate, sys: &SystemSpec, cells: &[IntervalBox]) -> Verification {
    let st = Setting { v: &cert.v, sys, target: &cert.target, delta: cert.delta_prime };
    let lower = check_boxes(cells, CHECK_DEPTH, true, |b| Probe::slack(st.lower(b, &cert.alpha1)));
    let upper = check_boxes(cells, CHECK_DEPTH, true, |b| Probe::slack(st.upper(b, &cert.alpha2)));
    let decrease = check_boxes(cells, CHECK_DEPTH, true, |b| Probe::slack(st.decrease(b, &cert.alpha3)));
    stats_to_result([(Condition::Alpha1, lower), (Condition::Alpha2, upper), (Condition::Decrease, decrease)])
}

/// Builds and verifies a robust Lyapunov function for the target box on
/// `domain`. `omega_delta` is the disturbance bound the target was computed
/// for; `delta_prime` must be smaller unless it is zero.
pub fn synthesize_v(
    sys: &SystemSpec,
    target: &IntervalBox,
    omega_delta: Option<f64>,
    domain: &IntervalBox,
    delta_prime: f64,
    basis: Basis,
    opts: &SynthOptions,
) -> Result<LyapunovCertificate, LyapunovError> {
    if target.dim() != sys.dim || domain.dim() != sys.dim {
        return Err(precondition("target, domain and system dimensions differ"));
    }
    if !(delta_prime >= 0.0) {
        return Err(precondition("δ′ must be nonnegative"));
    }
    if let Some(d) = omega_delta {
        if delta_prime > 0.0 && delta_prime >= d {
            return Err(precondition(format!("δ′ = {delta_prime} must be below the reach bound δ = {d}")));
        }
    }
    let clear = clearance(target, domain);
    if !(clear > 0.0) {
        return Err(precondition("the target is not inside the interior of the domain"));
    }
    let band = opts.band.unwrap_or(0.2 * clear);
    let resolution = opts.resolution.unwrap_or_else(|| default_resolution(domain, None));
    let cells = verification_cells(target, domain, band, resolution).map_err(precondition)?;
    if cells.is_empty() {
        return Err(precondition("no verification cells outside the band"));
    }

    let v = match basis {
        Basis::SmoothedDistance { kappa } => {
            if !(kappa > 0.0) {
                return Err(precondition("κ must be positive"));
            }
            smoothed_distance(target, kappa)
        }
        Basis::Polynomial { degree } => poly::fit(sys, target, &cells, delta_prime, degree, opts.lp_samples)?,
    };

    let smax = s_max(target, domain);
    let mut vs = Vec::with_capacity(cells.len());
    let mut ds = Vec::with_capacity(cells.len());
    for c in &cells {
        let x = c.center();
        let s = target.distance_point(&x);
        vs.push((s, v.eval(&x)?));
        ds.push((s, decrease_at(&v, sys, delta_prime, &x)?));
    }
    let grid = classk::exponent_grid(0.25);
    let (a1, a2, p12) = classk::fit_sandwich(&vs, &grid)
        .ok_or_else(|| synthesis_failure("V is not positive away from the target", None))?;
    let (a3, p3) = classk::fit(&ds, Side::Lower, &grid)
        .ok_or_else(|| synthesis_failure("V does not decrease at every sample", None))?;
    let alpha1 = ClassK::new(a1 * opts.lower_reserve, p12, smax).map_err(|e| synthesis_failure(&e.to_string(), None))?;
    let alpha2 = ClassK::new(a2 * opts.upper_reserve, p12, smax).map_err(|e| synthesis_failure(&e.to_string(), None))?;
    let alpha3 = ClassK::new(a3 * opts.lower_reserve, p3, smax).map_err(|e| synthesis_failure(&e.to_string(), None))?;

    let mut cert = LyapunovCertificate {
        v,
        basis: Some(basis),
        target: target.clone(),
        domain: domain.clone(),
        band,
        delta_prime,
        time: sys.time,
        alpha1,
        alpha2,
        alpha3,
        margins: Margins { lower: 0.0, upper: 0.0, decrease: 0.0 },
        resolution,
        cells: cells.len(),
        omega_delta,
    };
    match verify_cells(&cert, sys, &cells) {
        Verification::Pass { margins } => {
            cert.margins = margins;
            Ok(cert)
        }
        Verification::Fail { cell, condition, slack } => Err(synthesis_failure(
            &format!("{condition:?} fails on {cell} (slack {slack:e})"),
            None,
        )),
    }
}

fn synthesis_failure(reason: &str, margins: Option<Margins>) -> LyapunovError {
    LyapunovError::Synthesis { reason: reason.to_string(), margins }
}

/// [`synthesize_v`] with the target taken as the hull of a computed set.
pub fn synthesize_v_for_set(
    sys: &SystemSpec,
    omega: &GridSet,
    domain: &IntervalBox,
    delta_prime: f64,
    basis: Basis,
    opts: &SynthOptions,
) -> Result<LyapunovCertificate, LyapunovError> {
    let target = omega.hull().ok_or_else(|| precondition("the attracting set is empty"))?;
    let omega_delta = (omega.delta > 0.0).then_some(omega.delta);
    let mut opts = *opts;
    if opts.resolution.is_none() {
        opts.resolution = Some(default_resolution(domain, Some(omega.grid.resolution())));
    }
    synthesize_v(sys, &target, omega_delta, domain, delta_prime, basis, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TimeDomain::{Continuous, Discrete};

    fn ib(lo: f64, hi: f64) -> IntervalBox {
        IntervalBox::from_bounds(&[[lo, hi]]).unwrap()
    }

    fn hand_cert(v: &str, time: TimeDomain, a3: ClassK, delta: f64) -> LyapunovCertificate {
        LyapunovCertificate {
            v: crate::expr::parse(v).unwrap(),
            basis: None,
            target: ib(0.0, 0.0),
            domain: ib(-1.0, 1.0),
            band: 0.05,
            delta_prime: delta,
            time,
            alpha1: ClassK::new(0.5, 2.0, 1.0).unwrap(),
            alpha2: ClassK::new(2.0, 2.0, 1.0).unwrap(),
            alpha3: a3,
            margins: Margins { lower: 0.0, upper: 0.0, decrease: 0.0 },
            resolution: 0.01,
            cells: 0,
            omega_delta: None,
        }
    }

    #[test]
    fn example_one_certificate() {
        let sys = SystemSpec::parse(&["-x1"], Continuous).unwrap();
        let cert = synthesize_v(&sys, &ib(-0.2, 0.2), Some(0.2), &ib(-0.5, 0.5), 0.1,
            Basis::SmoothedDistance { kappa: 200.0 }, &SynthOptions { resolution: Some(1e-3), ..Default::default() }).unwrap();
        assert!(cert.margins.decrease >= 0.005, "{:?}", cert.margins);
        assert!(cert.alpha1.eval(0.2) <= cert.alpha2.eval(0.2));
        assert!(verify_v(&cert, &sys, 5e-4).unwrap().passed());
    }

    #[test]
    fn point_target_gives_quadratic() {
        let sys = SystemSpec::parse(&["-x1"], Continuous).unwrap();
        let cert = synthesize_v(&sys, &ib(0.0, 0.0), None, &ib(-1.0, 1.0), 0.0,
            Basis::SmoothedDistance { kappa: 100.0 }, &SynthOptions::default()).unwrap();
        assert_eq!(cert.v.to_string(), "(x1 - 0.0)^2");
        // fitted 2 s^2, reported with the 0.5 reserve
        assert!((cert.alpha3.a - 1.0).abs() < 1e-9 && cert.alpha3.p == 2.0);
    }

    #[test]
    fn precondition_errors() {
        let sys = SystemSpec::parse(&["-x1"], Continuous).unwrap();
        let b = Basis::SmoothedDistance { kappa: 200.0 };
        let o = SynthOptions::default();
        assert!(matches!(synthesize_v(&sys, &ib(-0.2, 0.2), Some(0.2), &ib(-0.5, 0.5), 0.25, b, &o), Err(LyapunovError::Precondition(_))));
        assert!(matches!(synthesize_v(&sys, &ib(-0.2, 0.2), Some(0.2), &ib(-0.2, 0.5), 0.1, b, &o), Err(LyapunovError::Precondition(_))));
    }

    #[test]
    fn unstable_system_fails_decrease() {
        let sys = SystemSpec::parse(&["x1"], Continuous).unwrap();
        let cert = hand_cert("x1^2", Continuous, ClassK::new(0.1, 2.0, 1.0).unwrap(), 0.0);
        match verify_v(&cert, &sys, 0.01).unwrap() {
            Verification::Fail { condition, .. } => assert_eq!(condition, Condition::Decrease),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn discrete_contraction_passes() {
        let sys = SystemSpec::parse(&["0.5*x1"], Discrete).unwrap();
        let cert = hand_cert("x1^2", Discrete, ClassK::new(0.7, 2.0, 1.0).unwrap(), 0.0);
        assert!(verify_v(&cert, &sys, 0.01).unwrap().passed());
        let too_greedy = hand_cert("x1^2", Discrete, ClassK::new(0.8, 2.0, 1.0).unwrap(), 0.0);
        assert!(!verify_v(&too_greedy, &sys, 0.01).unwrap().passed());
    }

    #[test]
    fn polynomial_basis_for_point_target() {
        let sys = SystemSpec::parse(&["-x1 - x1^3"], Continuous).unwrap();
        let cert = synthesize_v(&sys, &ib(0.0, 0.0), None, &ib(-1.0, 1.0), 0.0,
            Basis::Polynomial { degree: 4 }, &SynthOptions { resolution: Some(0.01), ..Default::default() }).unwrap();
        assert!(cert.margins.all_positive());
    }

    #[test]
    fn sup_rate_matches_factored_and_general_forms() {
        let g = [Interval::new(0.5, 1.0)];
        let f = [Interval::new(-2.0, -1.0)];
        let r = sup_rate(&g, &f, 0.1);
        assert!(r.hi <= 0.5 * (-1.0 + 0.1) + 1e-15 || r.hi <= -0.45 + 1e-15);
        let r2 = sup_rate(&[Interval::point(3.0), Interval::point(4.0)], &[Interval::point(1.0), Interval::point(0.0)], 0.2);
        assert!((r2.lo - 4.0).abs() < 1e-12 && (r2.hi - 4.0).abs() < 1e-12);
    }
}
