//! Scenario files: a TOML document with the sections `[system]`,
//! `[perturbation]`, `[sets]`, `[grid]`, `[solver]` and optional task blocks.
//!
//! ```toml
//! [system]
//! time = "continuous"
//! f = ["-x1"]
//!
//! [perturbation]
//! delta = 0.2
//! delta_prime = 0.1
//!
//! [sets]
//! W = { form = "box", bounds = [[-0.1, 0.1]] }
//! U = { form = "box_union", boxes = [[[-1e9, -0.5]], [[0.5, 1e9]]] }
//!
//! [grid]
//! domain = [[-1.0, 1.0]]
//! resolution = 0.001
//! ```

use serde::Deserialize;
use thiserror::Error;

use crate::dynamics::{SystemSpec, TimeDomain};
use crate::expr::parse;
use crate::grid::Grid;
use crate::interval::IntervalBox;
use crate::region::RegionSpec;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: &str, message: impl ToString) -> ScenarioError {
    ScenarioError::Field { field: field.to_string(), message: message.to_string() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub f: Vec<String>,
    #[serde(default = "continuous")]
    pub time: TimeDomain,
    pub lipschitz_hint: Option<f64>,
}

fn continuous() -> TimeDomain {
    TimeDomain::Continuous
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub delta: Option<f64>,
    pub delta_prime: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sets {
    #[serde(rename = "W")]
    pub w: Option<RegionSpec>,
    #[serde(rename = "U")]
    pub u: Option<RegionSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub domain: Vec<[f64; 2]>,
    pub resolution: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solver {
    #[serde(default = "default_step")]
    pub step: f64,
    pub dwell: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_step() -> f64 {
    0.01
}
fn default_horizon() -> f64 {
    10.0
}
fn default_trials() -> usize {
    200
}

impl Default for Solver {
    fn default() -> Self {
        Solver { step: default_step(), dwell: None, horizon: default_horizon(), seed: 0, trials: default_trials() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTask {
    pub x0: Vec<f64>,
    /// `zero`, `random`, `random_boundary`, `constant` or `extremal`.
    #[serde(default = "default_policy")]
    pub policy: String,
    pub d: Option<Vec<f64>>,
}

fn default_policy() -> String {
    "random".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuasTask {
    pub epsilons: Vec<f64>,
    pub rho: Option<f64>,
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovTask {
    /// `smoothed_distance` or `polynomial`.
    #[serde(default = "default_basis")]
    pub basis: String,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_degree")]
    pub degree: u32,
    pub domain: Vec<[f64; 2]>,
    pub resolution: Option<f64>,
    pub band: Option<f64>,
}

fn default_basis() -> String {
    "smoothed_distance".into()
}
fn default_kappa() -> f64 {
    200.0
}
fn default_degree() -> u32 {
    4
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierTask {
    /// Candidate for `certify-barrier`.
    pub expr: Option<String>,
    /// `neg_v`, `levelled` or `reciprocal` for `synthesize-barrier`.
    pub construction: Option<String>,
    #[serde(default)]
    pub conditions: Vec<String>,
    pub domain: Option<Vec<[f64; 2]>>,
    pub resolution: Option<f64>,
    /// Cell width used to choose the level `c`.
    pub level_resolution: Option<f64>,
    /// Slope of the linear class-K function used by B0, DTB0 and BARRIERDT.
    pub alpha_k: Option<f64>,
    #[serde(default)]
    pub replay_trials: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringTask {
    #[serde(rename = "K")]
    pub k: Vec<[f64; 2]>,
    pub tau: f64,
    pub inner: f64,
    pub outer: f64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    2000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSection,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub sets: Sets,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub solver: Solver,
    pub simulate: Option<SimulateTask>,
    pub ruas: Option<RuasTask>,
    pub lyapunov: Option<LyapunovTask>,
    pub barrier: Option<BarrierTask>,
    pub steering: Option<SteeringTask>,
}

pub fn to_box(field: &str, bounds: &[[f64; 2]]) -> Result<IntervalBox, ScenarioError> {
    IntervalBox::from_bounds(bounds).ok_or_else(|| field_err(field, "invalid bounds"))
}

impl Scenario {
    /// Parses and validates a scenario.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let sys = self.system_spec()?;
        if let (Some(d), Some(dp)) = (self.perturbation.delta, self.perturbation.delta_prime) {
            if dp >= d && dp > 0.0 {
                return Err(field_err("perturbation.delta_prime", format!("δ′ = {dp} must be below δ = {d}")));
            }
        }
        for (name, v) in [("perturbation.delta", self.perturbation.delta), ("perturbation.delta_prime", self.perturbation.delta_prime)] {
            if v.is_some_and(|v| !(v >= 0.0)) {
                return Err(field_err(name, "must be nonnegative"));
            }
        }
        for (name, r) in [("sets.W", &self.sets.w), ("sets.U", &self.sets.u)] {
            if let Some(r) = r {
                r.validate(sys.dim).map_err(|e| field_err(name, e))?;
            }
        }
        if let (Some(w), Some(u)) = (&self.sets.w, &self.sets.u) {
            if let (Some(wb), Some(ub)) = (w.boxes(), u.boxes()) {
                if wb.iter().any(|a| ub.iter().any(|b| a.intersects(b))) {
                    return Err(field_err("sets", "W and U overlap"));
                }
            }
        }
        if let Some(g) = &self.grid {
            if g.domain.len() != sys.dim {
                return Err(field_err("grid.domain", format!("expected {} bounds", sys.dim)));
            }
            self.grid(None)?;
        }
        if !(self.solver.step > 0.0 && self.solver.horizon > 0.0) {
            return Err(field_err("solver", "step and horizon must be positive"));
        }
        Ok(())
    }

    pub fn system_spec(&self) -> Result<SystemSpec, ScenarioError> {
        let mut exprs = Vec::new();
        for (i, src) in self.system.f.iter().enumerate() {
            exprs.push(parse(src).map_err(|e| field_err(&format!("system.f[{i}]"), e))?);
        }
        let mut sys = SystemSpec::new(exprs, self.system.time).map_err(|e| field_err("system", e))?;
        if let Some(h) = self.system.lipschitz_hint {
            sys = sys.with_lipschitz_hint(h);
        }
        Ok(sys)
    }

    pub fn grid(&self, resolution: Option<f64>) -> Result<Grid, ScenarioError> {
        let g = self.grid.as_ref().ok_or_else(|| field_err("grid", "section missing"))?;
        let domain = to_box("grid.domain", &g.domain)?;
        Grid::new(domain, resolution.unwrap_or(g.resolution)).map_err(|e| field_err("grid", e))
    }

    pub fn delta(&self) -> Result<f64, ScenarioError> {
        self.perturbation.delta.ok_or_else(|| field_err("perturbation.delta", "missing"))
    }

    pub fn delta_prime(&self) -> Result<f64, ScenarioError> {
        self.perturbation.delta_prime.ok_or_else(|| field_err("perturbation.delta_prime", "missing"))
    }

    pub fn w(&self) -> Result<&RegionSpec, ScenarioError> {
        self.sets.w.as_ref().ok_or_else(|| field_err("sets.W", "missing"))
    }

    /// The unsafe set, empty when absent.
    pub fn u(&self) -> RegionSpec {
        self.sets.u.clone().unwrap_or_else(RegionSpec::empty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[system]
f = ["-x1"]

[perturbation]
delta = 0.2
delta_prime = 0.1

[sets]
W = { form = "box", bounds = [[-0.1, 0.1]] }

[grid]
domain = [[-1.0, 1.0]]
resolution = 0.01
"#;

    #[test]
    fn parses_example() {
        let s = Scenario::parse(EXAMPLE).unwrap();
        assert_eq!(s.system_spec().unwrap().dim, 1);
        assert_eq!(s.grid(None).unwrap().len(), 200);
        assert_eq!(s.solver.trials, 200);
    }

    #[test]
    fn errors_carry_locations() {
        let bad = EXAMPLE.replace("delta = 0.2", "delta = ");
        let msg = Scenario::parse(&bad).unwrap_err().to_string();
        assert!(msg.contains("line 6"), "{msg}");
        let bad = EXAMPLE.replace("\"-x1\"", "\"-x1 +\"");
        let msg = Scenario::parse(&bad).unwrap_err().to_string();
        assert!(msg.starts_with("system.f[0]"), "{msg}");
        let bad = EXAMPLE.replace("delta_prime = 0.1", "delta_prime = 0.3");
        assert!(Scenario::parse(&bad).is_err());
    }
}
