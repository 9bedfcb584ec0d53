//! Command runner behind the `robust-barrier` binary.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::barrier::{self, Barrier, BarrierCondition};
use crate::classk::ExtAlpha;
use crate::dynamics::{simulate, DisturbancePolicy, Extremal, SystemSpec, TimeDomain};
use crate::expr::parse;
use crate::grid::Grid;
use crate::lyapunov::{self, Basis, LyapunovCertificate, RuasOptions, SynthOptions};
use crate::reach::{self, outward_from, Sampling, SafetyVerdict};
use crate::scenario::{to_box, Scenario, ScenarioError};
use crate::steering::{self, SteeringParams};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Reach,
    CheckSafety,
    CheckAssumption,
    CheckRuas,
    SynthesizeLyapunov,
    SynthesizeBarrier,
    CertifyBarrier,
    Steer,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Reach => "reach",
            Command::CheckSafety => "check-safety",
            Command::CheckAssumption => "check-assumption",
            Command::CheckRuas => "check-ruas",
            Command::SynthesizeLyapunov => "synthesize-lyapunov",
            Command::SynthesizeBarrier => "synthesize-barrier",
            Command::CertifyBarrier => "certify-barrier",
            Command::Steer => "steer",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub resolution: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Verdict,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Verdict => 0,
            Status::Inconclusive => 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Input(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}

fn input(e: impl ToString) -> CliError {
    CliError::Input(e.to_string())
}

pub struct Outcome {
    pub status: Status,
    pub report: Value,
    /// File name and contents of each artifact.
    pub artifacts: Vec<(String, String)>,
}

impl Outcome {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(&self.report).expect("report serializes");
        text.push('\n');
        std::fs::write(dir.join("report.json"), text)?;
        for (name, body) in &self.artifacts {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

struct Ctx {
    sc: Scenario,
    sys: SystemSpec,
    seed: u64,
    resolution: Option<f64>,
}

struct Partial {
    status: Status,
    result: Value,
    artifacts: Vec<(String, String)>,
}

fn verdict(result: Value) -> Partial {
    Partial { status: Status::Verdict, result, artifacts: Vec::new() }
}

fn inconclusive(result: Value) -> Partial {
    Partial { status: Status::Inconclusive, result, artifacts: Vec::new() }
}

impl Partial {
    fn with(mut self, name: &str, body: String) -> Self {
        self.artifacts.push((name.to_string(), body));
        self
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs one command on a scenario text.
pub fn execute(cmd: Command, scenario_text: &str, ov: Overrides) -> Result<Outcome, CliError> {
    let sc = Scenario::parse(scenario_text)?;
    let sys = sc.system_spec()?;
    let seed = ov.seed.unwrap_or(sc.solver.seed);
    let ctx = Ctx { resolution: ov.resolution.or(sc.grid.as_ref().map(|g| g.resolution)), sc, sys, seed };
    let part = match cmd {
        Command::Simulate => cmd_simulate(&ctx)?,
        Command::Reach => cmd_reach(&ctx)?,
        Command::CheckSafety => cmd_safety(&ctx)?,
        Command::CheckAssumption => cmd_assumption(&ctx)?,
        Command::CheckRuas => cmd_ruas(&ctx)?,
        Command::SynthesizeLyapunov => cmd_lyapunov(&ctx)?,
        Command::SynthesizeBarrier => cmd_synth_barrier(&ctx)?,
        Command::CertifyBarrier => cmd_certify(&ctx)?,
        Command::Steer => cmd_steer(&ctx)?,
    };
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let report = json!({
        "schema": SCHEMA,
        "tool": "robust-barrier",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd.name(),
        "scenario_sha256": sha256_hex(scenario_text),
        "seeds": [seed],
        "resolution": ctx.resolution,
        "timestamp": timestamp,
        "status": match part.status { Status::Verdict => "verdict", Status::Inconclusive => "inconclusive" },
        "result": part.result,
    });
    Ok(Outcome { status: part.status, report, artifacts: part.artifacts })
}

fn grid(ctx: &Ctx) -> Result<Grid, CliError> {
    Ok(ctx.sc.grid(ctx.resolution)?)
}

fn reach_set(ctx: &Ctx) -> Result<crate::grid::GridSet, CliError> {
    let g = grid(ctx)?;
    reach::reach_over(&ctx.sys, ctx.sc.w()?, ctx.sc.delta()?, &g).map_err(input)
}

fn sampling(ctx: &Ctx) -> Sampling {
    let s = &ctx.sc.solver;
    Sampling { trials: s.trials, horizon: s.horizon, step: s.step, seed: ctx.seed }
}

fn hull_json(set: &crate::grid::GridSet) -> Value {
    match set.hull() {
        Some(h) => json!(h.0.iter().map(|i| [i.lo, i.hi]).collect::<Vec<_>>()),
        None => Value::Null,
    }
}

fn cmd_simulate(ctx: &Ctx) -> Result<Partial, CliError> {
    let task = ctx.sc.simulate.as_ref().ok_or_else(|| input("[simulate] section missing"))?;
    let delta = ctx.sc.perturbation.delta.or(ctx.sc.perturbation.delta_prime).unwrap_or(0.0);
    let mut policy = match task.policy.as_str() {
        "zero" => DisturbancePolicy::zero(),
        "random" => DisturbancePolicy::random(ctx.seed, delta),
        "random_boundary" => DisturbancePolicy::random_boundary(ctx.seed, delta),
        "constant" => {
            let d = task.d.clone().ok_or_else(|| input("simulate.d is required for a constant policy"))?;
            DisturbancePolicy::constant(d, delta).map_err(input)?
        }
        "extremal" => {
            let c = vec![0.0; ctx.sys.dim];
            DisturbancePolicy::extremal(Extremal::AlignGradient(outward_from(&c)), delta)
        }
        other => return Err(input(format!("simulate.policy: unknown policy '{other}'"))),
    };
    if let Some(dw) = ctx.sc.solver.dwell {
        policy = policy.with_dwell(dw);
    }
    let traj = simulate(&ctx.sys, &task.x0, &policy, ctx.sc.solver.horizon, ctx.sc.solver.step).map_err(input)?;
    Ok(verdict(json!({
        "samples": traj.len(),
        "final_state": traj.last(),
        "blow_up": traj.blow_up,
        "policy": policy,
    }))
    .with("trajectory.csv", traj.to_csv()))
}

fn cmd_reach(ctx: &Ctx) -> Result<Partial, CliError> {
    let set = reach_set(ctx)?;
    let result = json!({
        "cells": set.count(),
        "hull": hull_json(&set),
        "escaped": set.escaped,
        "delta": set.delta,
        "set": set.to_json(),
    });
    let p = if set.escaped { inconclusive(result) } else { verdict(result) };
    Ok(p.with("omega.csv", set.to_csv()))
}

fn cmd_safety(ctx: &Ctx) -> Result<Partial, CliError> {
    let over = reach_set(ctx)?;
    let g = grid(ctx)?;
    let under = reach::reach_under(&ctx.sys, ctx.sc.w()?, ctx.sc.delta()?, &g, &sampling(ctx)).map_err(input)?;
    let v = reach::check_safety(&over, &ctx.sc.u(), Some(&under));
    let result = json!({ "verdict": v, "over_hull": hull_json(&over), "under_hull": hull_json(&under) });
    let p = match v {
        SafetyVerdict::Unknown { .. } => inconclusive(result),
        _ => verdict(result),
    };
    Ok(p.with("over.csv", over.to_csv()).with("under.csv", under.to_csv()))
}

fn cmd_assumption(ctx: &Ctx) -> Result<Partial, CliError> {
    let over = reach_set(ctx)?;
    let r = reach::check_assumption1(&over, &ctx.sc.u());
    let result = json!({ "assumption": r, "hull": hull_json(&over) });
    Ok(if over.escaped { inconclusive(result) } else { verdict(result) })
}

fn cmd_ruas(ctx: &Ctx) -> Result<Partial, CliError> {
    let task = ctx.sc.ruas.as_ref().ok_or_else(|| input("[ruas] section missing"))?;
    let over = reach_set(ctx)?;
    let opts = RuasOptions {
        trials: task.trials.unwrap_or(ctx.sc.solver.trials),
        horizon: ctx.sc.solver.horizon,
        step: ctx.sc.solver.step,
        seed: ctx.seed,
        rho: task.rho,
        ..Default::default()
    };
    let r = lyapunov::check_ruas_empirical(&ctx.sys, &over, ctx.sc.delta_prime()?, &task.epsilons, &opts).map_err(input)?;
    Ok(verdict(json!({ "ruas": r, "hull": hull_json(&over) })))
}

fn synthesize(ctx: &Ctx) -> Result<Result<LyapunovCertificate, String>, CliError> {
    let task = ctx.sc.lyapunov.as_ref().ok_or_else(|| input("[lyapunov] section missing"))?;
    let basis = match task.basis.as_str() {
        "smoothed_distance" => Basis::SmoothedDistance { kappa: task.kappa },
        "polynomial" => Basis::Polynomial { degree: task.degree },
        other => return Err(input(format!("lyapunov.basis: unknown basis '{other}'"))),
    };
    let domain = to_box("lyapunov.domain", &task.domain)?;
    let omega = reach_set(ctx)?;
    let opts = SynthOptions { resolution: task.resolution, band: task.band, ..Default::default() };
    match lyapunov::synthesize_v_for_set(&ctx.sys, &omega, &domain, ctx.sc.delta_prime()?, basis, &opts) {
        Ok(c) => Ok(Ok(c)),
        Err(lyapunov::LyapunovError::Precondition(m)) => Err(input(m)),
        Err(e) => Ok(Err(e.to_string())),
    }
}

fn cmd_lyapunov(ctx: &Ctx) -> Result<Partial, CliError> {
    Ok(match synthesize(ctx)? {
        Ok(cert) => {
            let doubled = lyapunov::verify_v(&cert, &ctx.sys, cert.resolution / 2.0).map_err(input)?;
            verdict(json!({ "certificate": cert, "double_resolution": doubled })).with("lyapunov.json", cert.to_json())
        }
        Err(reason) => inconclusive(json!({ "synthesis_failure": reason })),
    })
}

fn conditions(names: &[String]) -> Result<Vec<BarrierCondition>, CliError> {
    names
        .iter()
        .map(|n| BarrierCondition::from_name(n).ok_or_else(|| input(format!("barrier.conditions: unknown condition '{n}'"))))
        .collect()
}

fn cmd_synth_barrier(ctx: &Ctx) -> Result<Partial, CliError> {
    let task = ctx.sc.barrier.clone().unwrap_or_default();
    let cert = match synthesize(ctx)? {
        Ok(c) => c,
        Err(reason) => return Ok(inconclusive(json!({ "synthesis_failure": reason }))),
    };
    let discrete = ctx.sys.time == TimeDomain::Discrete;
    let u = ctx.sc.u();
    let construction = task.construction.clone().unwrap_or_else(|| "neg_v".into());
    let mut level = None;
    let b: Barrier = match construction.as_str() {
        "neg_v" => barrier::construct_neg_v(&cert),
        "levelled" | "reciprocal" => {
            let res = task.level_resolution.unwrap_or(cert.resolution);
            let choice = match barrier::choose_level_c(&cert, &u, res) {
                Ok(c) => c,
                Err(e) => return Ok(inconclusive(json!({ "level_failure": e.to_string() }))),
            };
            level = Some(json!({ "c": choice.c, "c_star": choice.c_star, "neighborhood": hull_json(&choice.neighborhood) }));
            if construction == "levelled" {
                barrier::construct_levelled(&cert, &ctx.sys, choice.c).map_err(input)?
            } else {
                barrier::construct_reciprocal(&cert, choice.c).map_err(input)?
            }
        }
        other => return Err(input(format!("barrier.construction: unknown construction '{other}'"))),
    };
    let conds = if task.conditions.is_empty() {
        use BarrierCondition::*;
        match (construction.as_str(), discrete) {
            ("neg_v", false) => vec![Def4, B1, B2],
            ("neg_v", true) => vec![Def10, Barrierdt],
            ("levelled", false) => vec![Def4, Bc1, Pb],
            ("levelled", true) => vec![Def10, Dtb2],
            (_, false) => vec![Rb],
            (_, true) => vec![Dtrb],
        }
    } else {
        conditions(&task.conditions)?
    };
    let w = ctx.sc.w()?.clone();
    let res = task.resolution.unwrap_or(cert.resolution);
    let bc = barrier::certify(&b, &ctx.sys, &w, &u, res, &conds).map_err(input)?;
    let replay = if task.replay_trials > 0 {
        Some(
            barrier::replay_invariance(&b, &ctx.sys, res, task.replay_trials, ctx.sc.solver.horizon, ctx.sc.solver.step, ctx.seed)
                .map_err(input)?,
        )
    } else {
        None
    };
    let result = json!({ "lyapunov": cert, "level": level, "barrier": bc, "replay": replay });
    let p = if bc.all_passed() { verdict(result) } else { inconclusive(result) };
    Ok(p.with("barrier.json", bc.to_json()))
}

fn cmd_certify(ctx: &Ctx) -> Result<Partial, CliError> {
    let task = ctx.sc.barrier.as_ref().ok_or_else(|| input("[barrier] section missing"))?;
    let src = task.expr.as_ref().ok_or_else(|| input("barrier.expr missing"))?;
    let e = parse(src).map_err(|e| input(format!("barrier.expr: {e}")))?;
    if e.arity() > ctx.sys.dim {
        return Err(input(format!("barrier.expr uses x{} but the system has dimension {}", e.arity(), ctx.sys.dim)));
    }
    let domain = match &task.domain {
        Some(d) => to_box("barrier.domain", d)?,
        None => grid(ctx)?.domain,
    };
    let res = task.resolution.or(ctx.resolution).ok_or_else(|| input("barrier.resolution missing"))?;
    let mut b = Barrier::custom(e, ctx.sys.time, ctx.sc.delta_prime()?, domain);
    if let Some(k) = task.alpha_k {
        b = b.with_alpha(ExtAlpha::Linear { k });
    }
    let conds = if task.conditions.is_empty() {
        vec![if ctx.sys.time == TimeDomain::Discrete { BarrierCondition::Def10 } else { BarrierCondition::Def4 }]
    } else {
        conditions(&task.conditions)?
    };
    let w = ctx.sc.sets.w.clone().unwrap_or_else(crate::region::RegionSpec::empty);
    let bc = barrier::certify(&b, &ctx.sys, &w, &ctx.sc.u(), res, &conds).map_err(input)?;
    let result = json!({ "barrier": bc, "valid": bc.valid() });
    let p = if bc.all_passed() { verdict(result) } else { inconclusive(result) };
    Ok(p.with("barrier.json", bc.to_json()))
}

fn cmd_steer(ctx: &Ctx) -> Result<Partial, CliError> {
    let task = ctx.sc.steering.as_ref().ok_or_else(|| input("[steering] section missing"))?;
    let k = to_box("steering.K", &task.k)?;
    let params = SteeringParams::derive(&ctx.sys, k, task.tau, task.inner, task.outer, task.samples).map_err(input)?;
    let x = simulate(&ctx.sys, &task.x0, &DisturbancePolicy::zero(), ctx.sc.solver.horizon, ctx.sc.solver.step).map_err(input)?;
    let path = match steering::construct_steering(&ctx.sys, &x, &task.y0, &task.y1, &params) {
        Ok(p) => p,
        Err(e) => return Ok(inconclusive(json!({ "steering_failure": e.to_string(), "params": params }))),
    };
    let delta = ctx.sc.delta()?;
    let m = steering::verify_membership(&path, &ctx.sys, delta).map_err(input)?;
    let csv = path.residual_csv(&ctx.sys).map_err(input)?;
    let result = json!({ "params": params, "tube_width": path.tube_width(), "membership": m });
    let p = if m.passed() { verdict(result) } else { inconclusive(result) };
    Ok(p.with("residuals.csv", csv).with("path.csv", path.path.to_csv()))
}
