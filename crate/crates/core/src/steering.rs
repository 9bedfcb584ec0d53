//! Steering a δ′-solution onto nearby endpoints while staying a δ-solution.
//!
//! Given a solution `x` on `[0, T]` and endpoints `y0`, `y1` within `r` of
//! `x(0)`, `x(T)`, the path
//!
//! ```text
//! y(s) = x(s) + (s/T)(y1 - x(T)) + (1 - s/T)(y0 - x(0))
//! ```
//!
//! stays within `r` of `x`, and its velocity deviates from `f(y)` by at most
//! `δ′ + 2r/T + L r` (continuous) or `δ′ + r + L r` (discrete).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, dist, norm, estimate_lipschitz, SystemSpec, TimeDomain, Trajectory};
use crate::expr::EvalError;
use crate::interval::IntervalBox;

/// Fraction of the admissible radius actually used, leaving a strict margin.
pub const RADIUS_FACTOR: f64 = 0.99;

#[derive(Debug, Error)]
pub enum SteeringError {
    #[error("inner bound δ′ = {inner} must be below δ = {outer}")]
    NoMargin { inner: f64, outer: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("{which} endpoint is {dist} from the reference, more than r = {r}")]
    EndpointTooFar { which: &'static str, dist: f64, r: f64 },
    #[error("trajectory lasts {duration}, shorter than τ = {tau}")]
    TooShort { duration: f64, tau: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dynamics(#[from] dynamics::DynamicsError),
}

/// Admissible steering radius. `tau` is ignored in discrete time.
pub fn steering_radius(time: TimeDomain, tau: f64, inner: f64, outer: f64, lipschitz: f64) -> Result<f64, SteeringError> {
    if !(inner < outer) {
        return Err(SteeringError::NoMargin { inner, outer });
    }
    if !(lipschitz >= 0.0) || inner < 0.0 {
        return Err(SteeringError::Invalid("L and δ′ must be nonnegative".into()));
    }
    let slack = outer - inner;
    Ok(match time {
        TimeDomain::Continuous => {
            if !(tau > 0.0) {
                return Err(SteeringError::Invalid(format!("τ must be positive, got {tau}")));
            }
            RADIUS_FACTOR * slack / (2.0 / tau + lipschitz)
        }
        TimeDomain::Discrete => RADIUS_FACTOR * slack / (1.0 + lipschitz),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteeringParams {
    pub k: IntervalBox,
    /// Minimal duration; unused in discrete time.
    pub tau: f64,
    pub inner: f64,
    pub outer: f64,
    pub lipschitz: f64,
    pub r: f64,
    pub time: TimeDomain,
}

impl SteeringParams {
    /// Estimates `L` on `K`, computes `r`, re-estimates `L` on `B_r(K)` and
    /// recomputes `r` once.
    pub fn derive(sys: &SystemSpec, k: IntervalBox, tau: f64, inner: f64, outer: f64, samples: usize) -> Result<Self, SteeringError> {
        let l0 = estimate_lipschitz(sys, &k, samples)?;
        let r0 = steering_radius(sys.time, tau, inner, outer, l0)?;
        let l1 = estimate_lipschitz(sys, &k.dilate(r0), samples)?.max(l0);
        let r = steering_radius(sys.time, tau, inner, outer, l1)?;
        Ok(SteeringParams { k, tau, inner, outer, lipschitz: l1, r, time: sys.time })
    }
}

/// Reference solution plus the steered path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteeringPath {
    pub reference: Trajectory,
    /// `y`; its disturbance record is the residual `y' - f(y)` (continuous)
    /// or `y(s+1) - f(y(s))` (discrete).
    pub path: Trajectory,
    pub start_offset: Vec<f64>,
    pub end_offset: Vec<f64>,
}

impl SteeringPath {
    /// A trajectory viewed as its own steering (zero offsets).
    pub fn identity(x: Trajectory) -> Self {
        let n = x.dim();
        SteeringPath { path: x.clone(), reference: x, start_offset: vec![0.0; n], end_offset: vec![0.0; n] }
    }

    pub fn duration(&self) -> f64 {
        self.reference.duration()
    }

    /// `y1 - x1 + x0 - y0`, the total drift added over `[0, T]`.
    pub fn drift(&self) -> Vec<f64> {
        self.end_offset.iter().zip(&self.start_offset).map(|(e, s)| e - s).collect()
    }

    /// Largest `‖y(s) - x(s)‖` over the samples.
    pub fn tube_width(&self) -> f64 {
        self.path.states.iter().zip(&self.reference.states).map(|(y, x)| dist(y, x)).fold(0.0, f64::max)
    }

    /// Residual at every sample, computed from the interpolant's exact derivative.
    pub fn residuals(&self, sys: &SystemSpec) -> Result<Vec<Vec<f64>>, EvalError> {
        let x = &self.reference;
        let y = &self.path;
        let m = x.len();
        match sys.time {
            TimeDomain::Continuous => {
                let t = self.duration();
                let c = self.drift();
                (0..m)
                    .map(|k| {
                        let fx = sys.eval(&x.states[k])?;
                        let fy = sys.eval(&y.states[k])?;
                        Ok((0..sys.dim).map(|i| fx[i] + x.disturbances[k][i] + c[i] / t - fy[i]).collect())
                    })
                    .collect()
            }
            TimeDomain::Discrete => {
                let mut out = (0..m.saturating_sub(1))
                    .map(|k| {
                        let fy = sys.eval(&y.states[k])?;
                        Ok(y.states[k + 1].iter().zip(&fy).map(|(a, b)| a - b).collect())
                    })
                    .collect::<Result<Vec<Vec<f64>>, EvalError>>()?;
                if let Some(last) = out.last().cloned() {
                    out.push(last);
                } else {
                    out.push(vec![0.0; sys.dim]);
                }
                Ok(out)
            }
        }
    }

    pub fn residual_csv(&self, sys: &SystemSpec) -> Result<String, EvalError> {
        let res = self.residuals(sys)?;
        let n = sys.dim;
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",y{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",residual\n");
        for (k, r) in res.iter().enumerate() {
            out.push_str(&self.path.times[k].to_string());
            for v in self.path.states[k].iter().chain(&self.reference.states[k]) {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", norm(r)));
        }
        Ok(out)
    }
}

/// Builds the steered path from `x` to the endpoints `y0`, `y1`.
pub fn construct_steering(
    sys: &SystemSpec,
    x: &Trajectory,
    y0: &[f64],
    y1: &[f64],
    params: &SteeringParams,
) -> Result<SteeringPath, SteeringError> {
    if x.len() < 2 || x.blow_up.is_some() {
        return Err(SteeringError::Invalid("reference needs at least two samples and no blow-up".into()));
    }
    let n = x.dim();
    if y0.len() != n || y1.len() != n {
        return Err(SteeringError::Invalid("endpoint dimension mismatch".into()));
    }
    let t = x.duration();
    if params.time == TimeDomain::Continuous && t < params.tau * (1.0 - 1e-12) {
        return Err(SteeringError::TooShort { duration: t, tau: params.tau });
    }
    let tol = 1e-12 * (1.0 + params.r);
    let d0 = dist(y0, &x.states[0]);
    if d0 > params.r + tol {
        return Err(SteeringError::EndpointTooFar { which: "start", dist: d0, r: params.r });
    }
    let d1 = dist(y1, x.last());
    if d1 > params.r + tol {
        return Err(SteeringError::EndpointTooFar { which: "end", dist: d1, r: params.r });
    }
    let kbox = params.k.dilate(1e-12);
    if let Some(p) = x.states.iter().position(|s| !kbox.contains(s)) {
        return Err(SteeringError::Invalid(format!("reference leaves K at t = {}", x.times[p])));
    }

    let start_offset: Vec<f64> = y0.iter().zip(&x.states[0]).map(|(a, b)| a - b).collect();
    let end_offset: Vec<f64> = y1.iter().zip(x.last()).map(|(a, b)| a - b).collect();
    let t0 = x.times[0];
    let m = x.len();
    let states: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            if k == 0 {
                return y0.to_vec();
            }
            if k == m - 1 {
                return y1.to_vec();
            }
            let w = (x.times[k] - t0) / t;
            (0..n).map(|i| x.states[k][i] + w * end_offset[i] + (1.0 - w) * start_offset[i]).collect()
        })
        .collect();
    let mut out = SteeringPath {
        reference: x.clone(),
        path: Trajectory {
            times: x.times.clone(),
            states,
            disturbances: vec![],
            blow_up: None,
            step: x.step,
            time: x.time,
            policy: None,
        },
        start_offset,
        end_offset,
    };
    out.path.disturbances = out.residuals(sys)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Membership {
    Pass { max_residual: f64 },
    Fail { time: f64, residual: f64 },
}

impl Membership {
    pub fn passed(&self) -> bool {
        matches!(self, Membership::Pass { .. })
    }
}

/// Checks `‖y' - f(y)‖ < δ` at every sample of a steered path.
pub fn verify_membership(path: &SteeringPath, sys: &SystemSpec, delta: f64) -> Result<Membership, EvalError> {
    let res = path.residuals(sys)?;
    let limit = if sys.is_discrete() { res.len().saturating_sub(1).max(1) } else { res.len() };
    judge(res.iter().take(limit).map(|r| norm(r)), &path.path.times, delta)
}

/// Checks a plain trajectory: the recorded disturbance in continuous time
/// (the states satisfy the integrator update with it), the exact one-step
/// residual in discrete time.
pub fn verify_trajectory(y: &Trajectory, sys: &SystemSpec, delta: f64) -> Result<Membership, EvalError> {
    match sys.time {
        TimeDomain::Continuous => judge(y.disturbances.iter().map(|d| norm(d)), &y.times, delta),
        TimeDomain::Discrete => {
            let res = (0..y.len().saturating_sub(1))
                .map(|k| Ok(dist(&y.states[k + 1], &sys.eval(&y.states[k])?)))
                .collect::<Result<Vec<f64>, EvalError>>()?;
            judge(res.into_iter(), &y.times, delta)
        }
    }
}

fn judge(res: impl Iterator<Item = f64>, times: &[f64], delta: f64) -> Result<Membership, EvalError> {
    let mut worst: f64 = 0.0;
    for (k, r) in res.enumerate() {
        if !(r < delta) {
            return Ok(Membership::Fail { time: times[k], residual: r });
        }
        worst = worst.max(r);
    }
    Ok(Membership::Pass { max_residual: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, DisturbancePolicy};

    #[test]
    fn radius_formulas() {
        let r = steering_radius(TimeDomain::Continuous, 1.0, 0.1, 0.2, 1.0).unwrap();
        assert!((r - 0.99 * 0.1 / 3.0).abs() < 1e-15);
        let r = steering_radius(TimeDomain::Discrete, 1.0, 0.1, 0.2, 1.0).unwrap();
        assert!((r - 0.0495).abs() < 1e-15);
        assert!(matches!(
            steering_radius(TimeDomain::Discrete, 1.0, 0.2, 0.2, 1.0),
            Err(SteeringError::NoMargin { .. })
        ));
    }

    fn decay() -> SystemSpec {
        SystemSpec::parse(&["-x1"], TimeDomain::Continuous).unwrap()
    }

    fn params(r: f64) -> SteeringParams {
        SteeringParams {
            k: IntervalBox::from_bounds(&[[-1.0, 1.0]]).unwrap(),
            tau: 1.0,
            inner: 0.0,
            outer: 0.2,
            lipschitz: 1.1,
            r,
            time: TimeDomain::Continuous,
        }
    }

    #[test]
    fn constant_interpolant_at_equilibrium() {
        let sys = decay();
        let x = simulate(&sys, &[0.0], &DisturbancePolicy::zero(), 1.0, 1e-3).unwrap();
        let p = construct_steering(&sys, &x, &[0.01], &[0.01], &params(0.033)).unwrap();
        assert!(p.path.states.iter().all(|y| (y[0] - 0.01).abs() < 1e-15));
        match verify_membership(&p, &sys, 0.2).unwrap() {
            Membership::Pass { max_residual } => assert!((max_residual - 0.01).abs() < 1e-15),
            m => panic!("{m:?}"),
        }
    }

    #[test]
    fn steering_a_decaying_solution() {
        let sys = decay();
        let r = 0.033;
        let x = simulate(&sys, &[0.1], &DisturbancePolicy::zero(), 1.0, 1e-3).unwrap();
        let p = construct_steering(&sys, &x, &[0.1 + r], &[x.last()[0] - r], &params(r)).unwrap();
        assert_eq!(p.path.states[0][0], 0.1 + r);
        assert!(p.tube_width() <= r + 1e-12);
        assert!(verify_membership(&p, &sys, 0.2).unwrap().passed());
        let far = construct_steering(&sys, &x, &[0.1], &[x.last()[0] + 2.0 * r], &params(r));
        assert!(matches!(far, Err(SteeringError::EndpointTooFar { .. })));
    }

    #[test]
    fn plain_trajectories() {
        let sys = decay();
        let x = simulate(&sys, &[0.3], &DisturbancePolicy::random(5, 0.1), 2.0, 1e-2).unwrap();
        assert!(verify_trajectory(&x, &sys, 0.2).unwrap().passed());
        assert!(verify_membership(&SteeringPath::identity(x), &sys, 0.2).unwrap().passed());

        let half = SystemSpec::parse(&["0.5 * x1"], TimeDomain::Discrete).unwrap();
        let p = DisturbancePolicy::constant(vec![0.3], 0.3).unwrap();
        let y = simulate(&half, &[1.0], &p, 3.0, 0.0).unwrap();
        match verify_trajectory(&y, &half, 0.2).unwrap() {
            Membership::Fail { time, residual } => {
                assert_eq!(time, 0.0);
                assert!((residual - 0.3).abs() < 1e-12);
            }
            m => panic!("{m:?}"),
        }
    }

    #[test]
    fn derived_params_satisfy_the_strict_inequality() {
        let sys = SystemSpec::parse(&["-x1 + x1^2"], TimeDomain::Continuous).unwrap();
        let k = IntervalBox::from_bounds(&[[-0.5, 0.5]]).unwrap();
        let p = SteeringParams::derive(&sys, k, 1.0, 0.1, 0.2, 2000).unwrap();
        assert!(2.0 * p.r / p.tau + p.inner + p.lipschitz * p.r < p.outer);
        assert!(p.lipschitz >= 2.0);
    }
}
