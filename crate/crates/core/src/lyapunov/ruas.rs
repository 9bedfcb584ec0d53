//! Sampling-based evidence for robust uniform asymptotic stability of a
//! computed set: an ε → δ_ε stability table and an ε → T attraction table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LyapunovError;
use crate::dynamics::{simulate, DisturbancePolicy, SystemSpec, TimeDomain, Trajectory};
use crate::grid::GridSet;
use crate::interval::IntervalBox;
use crate::reach::policy_for_trial;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RuasOptions {
    pub trials: usize,
    /// Time horizon, or number of steps in discrete time.
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
    /// Radius for the attraction check; half the clearance to the grid boundary when absent.
    pub rho: Option<f64>,
    pub bisection_steps: usize,
}

impl Default for RuasOptions {
    fn default() -> Self {
        RuasOptions { trials: 1000, horizon: 5.0, step: 0.02, seed: 0, rho: None, bisection_steps: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterexampleKind {
    /// The distance to the set grows without bound or keeps growing.
    Divergence,
    /// No positive δ_ε keeps trajectories within ε.
    StabilityCollapse,
    /// A trajectory from the ρ-neighborhood did not come within ε.
    NoAttraction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuasCounterexample {
    pub kind: CounterexampleKind,
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub policy: DisturbancePolicy,
    pub max_distance: f64,
    pub final_distance: f64,
    pub blow_up: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuasReport {
    pub delta_prime: f64,
    pub trials: usize,
    pub rho: f64,
    /// `(ε, δ_ε)`, nondecreasing in both columns.
    pub stability: Vec<(f64, f64)>,
    /// `(ε, T)`: the last time any sampled trajectory was at distance `>= ε`.
    pub attraction: Vec<(f64, f64)>,
    /// Largest distance observed over all attraction trials.
    pub worst_excursion: f64,
    pub counterexample: Option<RuasCounterexample>,
}

impl RuasReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

struct Run {
    x0: Vec<f64>,
    policy: DisturbancePolicy,
    traj: Trajectory,
    dist: Vec<f64>,
}

impl Run {
    fn max_distance(&self) -> f64 {
        if self.traj.blow_up.is_some() {
            return f64::INFINITY;
        }
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    fn diverges(&self, eps: f64) -> bool {
        let last = *self.dist.last().unwrap_or(&0.0);
        self.traj.blow_up.is_some() || (last >= eps && last > self.dist[0])
    }

    fn counterexample(&self, kind: CounterexampleKind, eps: f64) -> RuasCounterexample {
        let kind = if self.diverges(eps) { CounterexampleKind::Divergence } else { kind };
        RuasCounterexample {
            kind,
            epsilon: eps,
            x0: self.x0.clone(),
            policy: self.policy.clone(),
            max_distance: self.max_distance(),
            final_distance: *self.dist.last().unwrap_or(&f64::NAN),
            blow_up: self.traj.blow_up,
        }
    }
}

/// Starting point with `dist(x0, A) < r`. Even trials are pushed out to
/// nearly the full radius.
fn sample_start(rng: &mut ChaCha8Rng, target: &IntervalBox, r: f64, push: bool) -> Vec<f64> {
    let outer = target.dilate(r);
    loop {
        let x: Vec<f64> = outer.0.iter().map(|i| if i.width() > 0.0 { rng.gen_range(i.lo..i.hi) } else { i.lo }).collect();
        let d = target.distance_point(&x);
        if d >= r {
            continue;
        }
        if !push || d == 0.0 {
            return x;
        }
        let p = target.project(&x);
        let k = r * (1.0 - 1e-9) / d;
        return x.iter().zip(&p).map(|(xi, pi)| pi + (xi - pi) * k).collect();
    }
}

fn run_trials(
    sys: &SystemSpec,
    target: &IntervalBox,
    delta: f64,
    r: f64,
    opts: &RuasOptions,
    salt: u64,
) -> Result<Vec<Run>, LyapunovError> {
    let center = target.center();
    (0..opts.trials)
        .into_par_iter()
        .map(|k| {
            let seed = opts.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt << 32).wrapping_add(k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = sample_start(&mut rng, target, r, k % 2 == 0);
            let policy = policy_for_trial(k, seed, sys.dim, delta, &center);
            let traj = simulate(sys, &x0, &policy, opts.horizon, opts.step)
                .map_err(|e| LyapunovError::Precondition(e.to_string()))?;
            let dist = traj.states.iter().map(|x| target.distance_point(x)).collect();
            Ok(Run { x0, policy, traj, dist })
        })
        .collect()
}

/// Checks both stability conditions by simulation. `omega` supplies the set
/// (through its hull) and the bound δ it was computed for.
pub fn check_ruas_empirical(
    sys: &SystemSpec,
    omega: &GridSet,
    delta_prime: f64,
    epsilons: &[f64],
    opts: &RuasOptions,
) -> Result<RuasReport, LyapunovError> {
    let target = omega.hull().ok_or_else(|| LyapunovError::Precondition("the set is empty".into()))?;
    if omega.delta > 0.0 && delta_prime > omega.delta {
        return Err(LyapunovError::Precondition(format!("δ′ = {delta_prime} exceeds the reach bound {}", omega.delta)));
    }
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(LyapunovError::Precondition("ε values must be positive".into()));
    }
    let horizon = if sys.time == TimeDomain::Discrete { opts.horizon.max(1.0) } else { opts.horizon };
    let opts = RuasOptions { horizon, ..*opts };
    let mut eps: Vec<f64> = epsilons.to_vec();
    eps.sort_by(|a, b| a.total_cmp(b));
    let rho = opts.rho.unwrap_or_else(|| {
        let g = &omega.grid.domain;
        0.5 * target.0.iter().zip(&g.0).map(|(a, d)| (a.lo - d.lo).min(d.hi - a.hi)).fold(f64::INFINITY, f64::min)
    });

    let mut report = RuasReport {
        delta_prime,
        trials: opts.trials,
        rho,
        stability: Vec::new(),
        attraction: Vec::new(),
        worst_excursion: 0.0,
        counterexample: None,
    };

    // condition (1)
    let mut best = 0.0f64;
    for (ei, &e) in eps.iter().enumerate() {
        let probe = |r: f64, salt: u64| -> Result<Option<Run>, LyapunovError> {
            let runs = run_trials(sys, &target, delta_prime, r, &opts, salt)?;
            Ok(runs.into_iter().find(|run| run.max_distance() >= e))
        };
        let salt = (ei as u64) << 8;
        let mut lo = 0.0;
        let mut hi = e;
        let mut witness = None;
        match probe(e, salt)? {
            None => lo = e,
            Some(w) => {
                witness = Some(w);
                for it in 0..opts.bisection_steps {
                    let mid = 0.5 * (lo + hi);
                    match probe(mid, salt + 1 + it as u64)? {
                        None => lo = mid,
                        Some(w) => {
                            hi = mid;
                            witness = Some(w);
                        }
                    }
                }
            }
        }
        if lo == 0.0 {
            let w = witness.expect("a failing run exists");
            report.counterexample = Some(w.counterexample(CounterexampleKind::StabilityCollapse, e));
            report.stability.push((e, 0.0));
            return Ok(report);
        }
        best = best.max(lo);
        report.stability.push((e, best));
    }

    // condition (2)
    let runs = run_trials(sys, &target, delta_prime, rho, &opts, 0xa77)?;
    report.worst_excursion = runs.iter().map(Run::max_distance).fold(0.0, f64::max);
    for &e in &eps {
        let mut t_eps = 0.0f64;
        for run in &runs {
            let last = *run.dist.last().unwrap_or(&f64::INFINITY);
            if run.traj.blow_up.is_some() || last >= e {
                report.counterexample = Some(run.counterexample(CounterexampleKind::NoAttraction, e));
                return Ok(report);
            }
            if let Some(k) = run.dist.iter().rposition(|d| *d >= e) {
                t_eps = t_eps.max(run.traj.times[k + 1]);
            }
        }
        report.attraction.push((e, t_eps));
    }
    Ok(report)
}
