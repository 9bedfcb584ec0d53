//! Nominal and δ-perturbed systems, disturbance signals, and trajectories.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse, EvalError, Expr, ParseError};
use crate::interval::{Interval, IntervalBox};

/// States with norm at or above this are treated as finite-time escape.
pub const BLOW_UP_GUARD: f64 = 1e6;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDomain {
    Continuous,
    Discrete,
}

/// `x' = f(x)` (continuous) or `x(t+1) = f(x(t))` (discrete).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    pub dim: usize,
    pub f: Vec<Expr>,
    pub time: TimeDomain,
    pub lipschitz_hint: Option<f64>,
}

impl SystemSpec {
    pub fn new(f: Vec<Expr>, time: TimeDomain) -> Result<Self, DynamicsError> {
        let dim = f.len();
        if dim == 0 {
            return Err(DynamicsError::Invalid("system needs at least one state".into()));
        }
        if let Some(bad) = f.iter().position(|e| e.arity() > dim) {
            return Err(DynamicsError::Invalid(format!(
                "f{} references x{} but the state has dimension {dim}",
                bad + 1,
                f[bad].arity()
            )));
        }
        Ok(SystemSpec { dim, f, time, lipschitz_hint: None })
    }

    pub fn parse(f: &[&str], time: TimeDomain) -> Result<Self, DynamicsError> {
        let exprs = f.iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?;
        SystemSpec::new(exprs, time)
    }

    pub fn with_lipschitz_hint(mut self, hint: f64) -> Self {
        self.lipschitz_hint = Some(hint);
        self
    }

    pub fn is_discrete(&self) -> bool {
        self.time == TimeDomain::Discrete
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.f.iter().map(|e| e.eval(x)).collect()
    }

    pub fn eval_box(&self, b: &IntervalBox) -> Result<Vec<Interval>, EvalError> {
        self.f.iter().map(|e| e.eval_interval(b)).collect()
    }

    /// Forward-Euler map `x + h f(x)` of a continuous system.
    pub fn euler_discretization(&self, h: f64) -> SystemSpec {
        let f = self
            .f
            .iter()
            .enumerate()
            .map(|(i, fi)| Expr::Var(i) + Expr::num(h) * fi.clone())
            .collect();
        SystemSpec { dim: self.dim, f, time: TimeDomain::Discrete, lipschitz_hint: None }
    }
}

/// How the disturbance direction is chosen for extremal policies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremal {
    /// `d = δ v(x)/‖v(x)‖` for an expression vector `v`.
    Direction(Vec<Expr>),
    /// `d = δ ∇g(x)/‖∇g(x)‖`, pushing `g` upward as fast as possible.
    AlignGradient(Expr),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    Zero,
    Constant(Vec<f64>),
    /// Piecewise-constant, uniform in the ball (or on its boundary sphere).
    Random { seed: u64, on_boundary: bool },
    Extremal(Extremal),
}

/// A piecewise-constant disturbance signal with `‖d‖ ≤ delta`.
///
/// `dwell` is the hold time in continuous time (default `10 h`) and is
/// rounded to a whole number of steps in discrete time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisturbancePolicy {
    pub kind: DisturbanceKind,
    pub delta: f64,
    pub dwell: Option<f64>,
}

impl DisturbancePolicy {
    pub fn zero() -> Self {
        DisturbancePolicy { kind: DisturbanceKind::Zero, delta: 0.0, dwell: None }
    }

    pub fn constant(d: Vec<f64>, delta: f64) -> Result<Self, DynamicsError> {
        if norm(&d) > delta * (1.0 + 1e-12) + 1e-15 {
            return Err(DynamicsError::Invalid(format!(
                "constant disturbance has norm {} > δ = {delta}",
                norm(&d)
            )));
        }
        Ok(DisturbancePolicy { kind: DisturbanceKind::Constant(d), delta, dwell: None })
    }

    pub fn random(seed: u64, delta: f64) -> Self {
        DisturbancePolicy { kind: DisturbanceKind::Random { seed, on_boundary: false }, delta, dwell: None }
    }

    pub fn random_boundary(seed: u64, delta: f64) -> Self {
        DisturbancePolicy { kind: DisturbanceKind::Random { seed, on_boundary: true }, delta, dwell: None }
    }

    pub fn extremal(e: Extremal, delta: f64) -> Self {
        DisturbancePolicy { kind: DisturbanceKind::Extremal(e), delta, dwell: None }
    }

    pub fn with_dwell(mut self, dwell: f64) -> Self {
        self.dwell = Some(dwell);
        self
    }

    pub fn seed(&self) -> Option<u64> {
        match self.kind {
            DisturbanceKind::Random { seed, .. } => Some(seed),
            _ => None,
        }
    }

    fn sampler(&self, dim: usize) -> Result<Sampler<'_>, DynamicsError> {
        if !(self.delta >= 0.0) {
            return Err(DynamicsError::Invalid(format!("δ must be nonnegative, got {}", self.delta)));
        }
        if let DisturbanceKind::Constant(d) = &self.kind {
            if d.len() != dim {
                return Err(DynamicsError::Invalid(format!("constant disturbance has length {}, state has {dim}", d.len())));
            }
        }
        if let DisturbanceKind::Extremal(Extremal::Direction(v)) = &self.kind {
            if v.len() != dim {
                return Err(DynamicsError::Invalid(format!("direction has length {}, state has {dim}", v.len())));
            }
        }
        let rng = match self.kind {
            DisturbanceKind::Random { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Ok(Sampler { policy: self, dim, rng })
    }
}

struct Sampler<'a> {
    policy: &'a DisturbancePolicy,
    dim: usize,
    rng: Option<ChaCha8Rng>,
}

impl Sampler<'_> {
    fn next(&mut self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let delta = self.policy.delta;
        Ok(match &self.policy.kind {
            DisturbanceKind::Zero => vec![0.0; self.dim],
            DisturbanceKind::Constant(d) => d.clone(),
            DisturbanceKind::Random { on_boundary, .. } => {
                let rng = self.rng.as_mut().expect("random policy carries an rng");
                sample_ball(rng, self.dim, delta, *on_boundary)
            }
            DisturbanceKind::Extremal(Extremal::Direction(v)) => {
                let dir = v.iter().map(|e| e.eval(x)).collect::<Result<Vec<_>, _>>()?;
                scale_to(&dir, delta)
            }
            DisturbanceKind::Extremal(Extremal::AlignGradient(g)) => scale_to(&g.grad(x)?, delta),
        })
    }
}

/// Uniform sample from the closed ball of radius `r` (or its boundary sphere).
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, r: f64, on_boundary: bool) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n < 1e-12 {
            continue;
        }
        let radius = if on_boundary { r } else { r * rng.gen::<f64>().powf(1.0 / dim as f64) };
        return g.iter().map(|v| v * radius / n).collect();
    }
}

fn scale_to(v: &[f64], len: f64) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        vec![0.0; v.len()]
    } else {
        // keep the result inside the ball despite rounding
        let k = len / n;
        let out: Vec<f64> = v.iter().map(|c| c * k).collect();
        let m = norm(&out);
        if m > len { out.iter().map(|c| c * (len / m)).collect() } else { out }
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sampled solution. `disturbances[k]` acts on `[times[k], times[k+1])`; the
/// final entry repeats the last applied value so all sequences have equal length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    /// Time at which the blow-up guard fired, if it did.
    pub blow_up: Option<f64>,
    pub step: f64,
    pub time: TimeDomain,
    pub policy: Option<DisturbancePolicy>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::new();
        if let Some(p) = &self.policy {
            let _ = writeln!(out, "# policy: {}", serde_json::to_string(p).unwrap_or_default());
            if let Some(seed) = p.seed() {
                let _ = writeln!(out, "# seed: {seed}");
            }
        }
        let _ = writeln!(out, "# step: {}", self.step);
        if let Some(t) = self.blow_up {
            let _ = writeln!(out, "# blow_up: {t}");
        }
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|i| format!("x{i}")));
        cols.extend((1..=n).map(|i| format!("d{i}")));
        let _ = writeln!(out, "{}", cols.join(","));
        for k in 0..self.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.states[k].iter().map(f64::to_string));
            row.extend(self.disturbances[k].iter().map(f64::to_string));
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }
}

fn axpy(x: &[f64], k: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(a, b)| a + k * b).collect()
}

fn perturbed(sys: &SystemSpec, x: &[f64], d: &[f64]) -> Result<Vec<f64>, EvalError> {
    let mut y = sys.eval(x)?;
    for (yi, di) in y.iter_mut().zip(d) {
        *yi += di;
    }
    Ok(y)
}

/// One classical RK4 step of `x' = f(x) + d` with `d` held constant.
pub fn rk4_step(sys: &SystemSpec, x: &[f64], d: &[f64], h: f64) -> Result<Vec<f64>, EvalError> {
    let k1 = perturbed(sys, x, d)?;
    let k2 = perturbed(sys, &axpy(x, 0.5 * h, &k1), d)?;
    let k3 = perturbed(sys, &axpy(x, 0.5 * h, &k2), d)?;
    let k4 = perturbed(sys, &axpy(x, h, &k3), d)?;
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Solution from `x0` under `policy` up to `horizon`. In discrete time the
/// horizon is a step count and `step` is ignored.
pub fn simulate(
    sys: &SystemSpec,
    x0: &[f64],
    policy: &DisturbancePolicy,
    horizon: f64,
    step: f64,
) -> Result<Trajectory, DynamicsError> {
    if x0.len() != sys.dim {
        return Err(DynamicsError::Invalid(format!("x0 has length {}, system has {}", x0.len(), sys.dim)));
    }
    if !(horizon > 0.0) {
        return Err(DynamicsError::Invalid(format!("horizon must be positive, got {horizon}")));
    }
    let discrete = sys.is_discrete();
    let h = if discrete { 1.0 } else { step };
    if !(h > 0.0) {
        return Err(DynamicsError::Invalid(format!("step must be positive, got {step}")));
    }
    let steps = (horizon / h).round().max(1.0) as usize;
    let dwell_steps = match policy.dwell {
        None if discrete => 1,
        None => 10,
        Some(dw) => {
            let q = dw / h;
            if !(q >= 1.0 - 1e-9) || (q - q.round()).abs() > 1e-9 * q.max(1.0) {
                return Err(DynamicsError::Invalid(format!("dwell {dw} is not a positive multiple of the step {h}")));
            }
            q.round() as usize
        }
    };
    let mut sampler = policy.sampler(sys.dim)?;

    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut disturbances = Vec::with_capacity(steps + 1);
    let mut blow_up = None;
    let mut d = vec![0.0; sys.dim];
    let mut x = x0.to_vec();
    for k in 0..steps {
        if k % dwell_steps == 0 {
            d = sampler.next(&x)?;
        }
        let next = if discrete { perturbed(sys, &x, &d)? } else { rk4_step(sys, &x, &d, h)? };
        disturbances.push(d.clone());
        let t = (k + 1) as f64 * h;
        let n = norm(&next);
        if !n.is_finite() {
            blow_up = Some(t);
            break;
        }
        times.push(t);
        states.push(next.clone());
        if n >= BLOW_UP_GUARD {
            blow_up = Some(t);
            break;
        }
        x = next;
    }
    // disturbances has one entry per completed or attempted step; align with states
    disturbances.truncate(states.len() - 1);
    let last = disturbances.last().cloned().unwrap_or(d);
    disturbances.push(last);
    Ok(Trajectory { times, states, disturbances, blow_up, step: h, time: sys.time, policy: Some(policy.clone()) })
}

/// Sampled Lipschitz estimate of `f` over `b`, inflated by 10%.
///
/// Half the pairs are drawn globally, half as close neighbours so that the
/// local slope near the box edges is seen. The result is never below
/// `sys.lipschitz_hint`.
pub fn estimate_lipschitz(sys: &SystemSpec, b: &IntervalBox, samples: usize) -> Result<f64, DynamicsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1195);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        b.0.iter().map(|i| if i.width() > 0.0 { rng.gen_range(i.lo..=i.hi) } else { i.lo }).collect()
    };
    let mut best: f64 = 0.0;
    for s in 0..samples.max(1) {
        let x = draw(&mut rng);
        let y = if s % 2 == 0 {
            draw(&mut rng)
        } else {
            x.iter()
                .zip(&b.0)
                .map(|(&v, i)| (v + 1e-3 * i.width() * rng.gen_range(-1.0..=1.0)).clamp(i.lo, i.hi))
                .collect()
        };
        let dx = dist(&x, &y);
        if dx <= 0.0 {
            continue;
        }
        let ratio = dist(&sys.eval(&x)?, &sys.eval(&y)?) / dx;
        if ratio.is_finite() {
            best = best.max(ratio);
        }
    }
    let est = 1.1 * best;
    Ok(sys.lipschitz_hint.map_or(est, |h| h.max(est)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> SystemSpec {
        SystemSpec::parse(&["-x1"], TimeDomain::Continuous).unwrap()
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let tr = simulate(&decay(), &[1.0], &DisturbancePolicy::zero(), 1.0, 1e-3).unwrap();
        assert!((tr.last()[0] - (-1.0f64).exp()).abs() <= 1e-8);
        assert_eq!(tr.len(), tr.disturbances.len());
    }

    #[test]
    fn constant_disturbance_matches_closed_form() {
        let p = DisturbancePolicy::constant(vec![0.2], 0.2).unwrap();
        let tr = simulate(&decay(), &[0.1], &p, 10.0, 1e-3).unwrap();
        let expected = 0.2 - 0.1 * (-10.0f64).exp();
        assert!((tr.last()[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn discrete_halving_is_exact() {
        let sys = SystemSpec::parse(&["0.5 * x1"], TimeDomain::Discrete).unwrap();
        let tr = simulate(&sys, &[1.0], &DisturbancePolicy::zero(), 3.0, 0.0).unwrap();
        assert_eq!(tr.last()[0], 0.125);
        assert_eq!(tr.times, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |h: f64| {
            let tr = simulate(&decay(), &[1.0], &DisturbancePolicy::zero(), 1.0, h).unwrap();
            (tr.last()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn blow_up_is_flagged() {
        let sys = SystemSpec::parse(&["x1^2"], TimeDomain::Continuous).unwrap();
        let tr = simulate(&sys, &[1.0], &DisturbancePolicy::zero(), 5.0, 1e-3).unwrap();
        let t = tr.blow_up.expect("x' = x^2 from 1 escapes at t = 1");
        assert!((t - 1.0).abs() < 0.01);
        assert!(tr.len() < 5000);
    }

    #[test]
    fn dwell_must_be_a_multiple_of_the_step() {
        let p = DisturbancePolicy::random(1, 0.1).with_dwell(0.015);
        assert!(simulate(&decay(), &[0.0], &p, 1.0, 0.01).is_err());
        let p = DisturbancePolicy::random(1, 0.1).with_dwell(0.03);
        assert!(simulate(&decay(), &[0.0], &p, 1.0, 0.01).is_ok());
    }

    #[test]
    fn oversized_constant_is_rejected() {
        assert!(DisturbancePolicy::constant(vec![0.3], 0.2).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let b = IntervalBox::from_bounds(&[[-1.0, 1.0]]).unwrap();
        assert!((estimate_lipschitz(&decay(), &b, 1000).unwrap() - 1.1).abs() < 1e-12);
        let quad = SystemSpec::parse(&["-x1 + x1^2"], TimeDomain::Continuous).unwrap();
        let b = IntervalBox::from_bounds(&[[-0.5, 0.5]]).unwrap();
        let l = estimate_lipschitz(&quad, &b, 10_000).unwrap();
        assert!((1.9..=2.2).contains(&l), "{l}");
        let zero = SystemSpec::parse(&["0"], TimeDomain::Continuous).unwrap();
        assert_eq!(estimate_lipschitz(&zero, &b, 100).unwrap(), 0.0);
        assert_eq!(estimate_lipschitz(&zero.with_lipschitz_hint(3.0), &b, 100).unwrap(), 3.0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = DisturbancePolicy::random(42, 0.1);
        let tr = simulate(&decay(), &[0.5], &p, 0.05, 0.01).unwrap();
        let csv = tr.to_csv();
        assert!(csv.contains("# seed: 42"));
        assert!(csv.contains("t,x1,d1"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), tr.len() + 1);
    }
}
