//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints its `PASS`/`FAIL` line; the process exits nonzero if any failed.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robust_barrier::barrier::{self, BarrierCondition};
use robust_barrier::dynamics::{simulate, DisturbancePolicy, SystemSpec, TimeDomain};
use robust_barrier::grid::Grid;
use robust_barrier::interval::IntervalBox;
use robust_barrier::lyapunov::{
    check_ruas_empirical, synthesize_v, synthesize_v_for_set, verify_v, Basis, CounterexampleKind, LyapunovCertificate,
    RuasOptions, SynthOptions, Verification,
};
use robust_barrier::reach::{check_assumption1, reach_over};
use robust_barrier::region::RegionSpec;
use robust_barrier::steering::{construct_steering, verify_membership, SteeringParams};

static FAILED: AtomicUsize = AtomicUsize::new(0);

fn report(id: u32, ok: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        FAILED.fetch_add(1, Ordering::SeqCst);
    }
}

fn main() {
    let t = Instant::now();
    let criteria: [(u32, fn()); 9] = [
        (1, criterion_1_decay_reach),
        (2, criterion_2_separation),
        (3, criterion_3_quadratic_system),
        (4, criterion_4_steering_suite),
        (5, criterion_5_lyapunov_certificate),
        (6, criterion_6_barrier_chain),
        (7, criterion_7_discrete_chain),
        (8, criterion_8_ruas),
        (9, criterion_9_property_checks),
    ];
    for (id, f) in criteria {
        if std::panic::catch_unwind(f).is_err() {
            report(id, false, "panicked".into());
        }
    }
    let failed = FAILED.load(Ordering::SeqCst);
    println!("acceptance: {} of 9 criteria passed in {:.1} s", 9 - failed, t.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ib(b: &[[f64; 2]]) -> IntervalBox {
    IntervalBox::from_bounds(b).unwrap()
}

fn cont(f: &[&str]) -> SystemSpec {
    SystemSpec::parse(f, TimeDomain::Continuous).unwrap()
}

fn line(lo: f64, hi: f64, res: f64) -> Grid {
    Grid::new(ib(&[[lo, hi]]), res).unwrap()
}

fn w() -> RegionSpec {
    RegionSpec::interval(-0.1, 0.1)
}

fn criterion_1_decay_reach() {
    let t = Instant::now();
    let r = reach_over(&cont(&["-x1"]), &w(), 0.2, &line(-1.0, 1.0, 1e-3)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let h = r.hull().unwrap().0[0];
    let ok = (h.lo + 0.2).abs() <= 5e-3 && (h.hi - 0.2).abs() <= 5e-3 && !r.escaped && secs < 10.0;
    report(1, ok, format!("hull [{}, {}] (target ±0.2 within 5e-3), {secs:.2} s (< 10 s)", h.lo, h.hi));
}

fn criterion_2_separation() {
    let r = reach_over(&cont(&["-x1"]), &w(), 0.2, &line(-1.0, 1.0, 1e-3)).unwrap();
    let near = check_assumption1(&r, &RegionSpec::outside_symmetric(0.2));
    let far = check_assumption1(&r, &RegionSpec::outside_symmetric(0.5));
    let printed = check_assumption1(&r, &RegionSpec::outside_symmetric(2.0));
    let ok = !near.holds && near.clearance == 0.0 && far.holds && far.clearance >= 0.29;
    report(
        2,
        ok,
        format!(
            "|x|>=0.2: holds={} clearance={}; |x|>=0.5: holds={} clearance={}; |x|>=2: holds={}",
            near.holds, near.clearance, far.holds, far.clearance, printed.holds
        ),
    );
}

fn criterion_3_quadratic_system() {
    let sys = cont(&["-x1 + x1^2"]);
    let r = reach_over(&sys, &w(), 0.25, &line(-1.0, 1.0, 1e-3)).unwrap();
    let h = r.hull().unwrap().0[0];
    let lo_ref = (1.0 - 2f64.sqrt()) / 2.0;
    let reach_ok = (h.lo - lo_ref).abs() <= 1e-2 && (h.hi - 0.5).abs() <= 1e-2 && !r.escaped;
    let p = DisturbancePolicy::constant(vec![0.25], 0.25).unwrap();
    let traj = simulate(&sys, &[0.51], &p, 50.0, 0.01).unwrap();
    let blow_ok = traj.blow_up.is_some_and(|t| t < 50.0);
    report(
        3,
        reach_ok && blow_ok,
        format!(
            "hull [{}, {}] escaped={} (target ({lo_ref:.4}, 0.5) within 1e-2); blow-up from 0.51 at {:?}, state {} at t=50 (needs t < 50)",
            h.lo,
            h.hi,
            r.escaped,
            traj.blow_up,
            traj.last()[0]
        ),
    );
}

fn criterion_4_steering_suite() {
    let t = Instant::now();
    let systems = [
        cont(&["-x1"]),
        cont(&["-x1 + x1^2"]),
        cont(&["-x1 + 0.5 * x2", "-0.5 * x1 - x2"]),
        cont(&["x2", "-x1 - 0.5 * x2 + 0.1 * x1^3"]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut exact, mut tube, mut member) = (0, 0, 0);
    let mut worst_end = 0.0f64;
    let n = 200;
    for k in 0..n {
        let sys = &systems[k % systems.len()];
        let dim = sys.dim;
        let kbox = ib(&vec![[-1.0, 1.0]; dim]);
        let p = SteeringParams::derive(sys, kbox, 1.0, 0.1, 0.2, 500).unwrap();
        let x0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let pol = DisturbancePolicy::random(rng.gen(), 0.1);
        let x = simulate(sys, &x0, &pol, 1.0, 1e-3).unwrap();
        let jitter = |rng: &mut ChaCha8Rng, c: &[f64]| -> Vec<f64> {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            let s = p.r * rng.gen_range(0.0..1.0);
            c.iter().zip(&v).map(|(a, b)| a + s * b / n).collect()
        };
        let y0 = jitter(&mut rng, &x.states[0]);
        let y1 = jitter(&mut rng, x.last());
        let path = construct_steering(sys, &x, &y0, &y1, &p).unwrap();
        let e0 = path.path.states[0].iter().zip(&y0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let e1 = path.path.last().iter().zip(&y1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_end = worst_end.max(e0).max(e1);
        exact += (e0 <= 1e-12 && e1 <= 1e-12) as usize;
        tube += (path.tube_width() <= p.r + 1e-12) as usize;
        member += verify_membership(&path, sys, 0.2).unwrap().passed() as usize;
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = exact == n && tube == n && member == n && secs < 30.0;
    report(
        4,
        ok,
        format!("{n} instances: endpoints exact {exact} (worst {worst_end:e}), tube {tube}, membership {member}; {secs:.2} s (< 30 s)"),
    );
}

fn decay_certificate(resolution: f64) -> (SystemSpec, LyapunovCertificate) {
    let sys = cont(&["-x1"]);
    let cert = synthesize_v(
        &sys,
        &ib(&[[-0.2, 0.2]]),
        Some(0.2),
        &ib(&[[-0.5, 0.5]]),
        0.1,
        Basis::SmoothedDistance { kappa: 200.0 },
        &SynthOptions { resolution: Some(resolution), ..Default::default() },
    )
    .unwrap();
    (sys, cert)
}

fn criterion_5_lyapunov_certificate() {
    let (sys, cert) = decay_certificate(1e-3);
    let again = verify_v(&cert, &sys, cert.resolution / 2.0).unwrap();
    let double_ok = matches!(&again, Verification::Pass { margins } if margins.all_positive());
    let ok = cert.margins.decrease >= 0.005 && cert.margins.all_positive() && double_ok;
    report(
        5,
        ok,
        format!("decrease margin {} (>= 0.005), margins {:?}; double resolution: {:?}", cert.margins.decrease, cert.margins, again),
    );
}

fn criterion_6_barrier_chain() {
    let (sys, cert) = decay_certificate(1e-3);
    let u = RegionSpec::outside_symmetric(0.5);
    let neg = barrier::construct_neg_v(&cert);
    let c1 = barrier::certify(&neg, &sys, &w(), &u, 1e-3, &[BarrierCondition::Def4]).unwrap();
    let level = barrier::choose_level_c(&cert, &u, 0.05).unwrap();
    let lev = barrier::construct_levelled(&cert, &sys, level.c).unwrap();
    let c2 = barrier::certify(&lev, &sys, &w(), &u, 1e-3, &[BarrierCondition::Def4, BarrierCondition::Pb]).unwrap();
    let alpha0 = lev.alpha0.as_ref().unwrap();
    // α3(α2⁻¹(c))
    let bound = alpha0.alpha3.eval(alpha0.alpha2.inverse(level.c));
    let margin = c2.zero_level_margin.unwrap_or(f64::NAN);
    let ok = c1.valid() && c2.all_passed() && (margin - bound).abs() <= 0.05 * bound;
    report(
        6,
        ok,
        format!(
            "negV DEF4 {}; c = {}; levelled DEF4 {} PB {}; zero-level margin {margin} vs a3(a2^-1(c)) = {bound} (within 5%)",
            c1.valid(),
            level.c,
            c2.passed(BarrierCondition::Def4),
            c2.passed(BarrierCondition::Pb)
        ),
    );
}

fn criterion_7_discrete_chain() {
    let sys = cont(&["-x1"]).euler_discretization(0.1);
    let omega = reach_over(&sys, &w(), 0.02, &line(-1.0, 1.0, 1e-3)).unwrap();
    let cert = synthesize_v_for_set(
        &sys,
        &omega,
        &ib(&[[-0.5, 0.5]]),
        0.01,
        Basis::SmoothedDistance { kappa: 200.0 },
        &SynthOptions::default(),
    )
    .unwrap();
    let neg = barrier::construct_neg_v(&cert);
    let conds = [BarrierCondition::Def10, BarrierCondition::Barrierdt];
    let c = barrier::certify(&neg, &sys, &w(), &RegionSpec::empty(), cert.resolution, &conds).unwrap();
    let replay = barrier::replay_invariance(&neg, &sys, cert.resolution, 1000, 200.0, 1.0, 11).unwrap();
    let ok = c.all_passed() && replay.trials == 1000 && replay.exits == 0;
    report(
        7,
        ok,
        format!(
            "omega hull {:?}; DEF10 {} BARRIERDT {}; replay {} trajectories, {} exits",
            omega.hull().map(|h| (h.0[0].lo, h.0[0].hi)),
            c.passed(BarrierCondition::Def10),
            c.passed(BarrierCondition::Barrierdt),
            replay.trials,
            replay.exits
        ),
    );
}

fn criterion_8_ruas() {
    let g = line(-1.0, 1.0, 1e-3);
    let one = cont(&["-x1"]);
    let omega = reach_over(&one, &w(), 0.2, &g).unwrap();
    let opts = RuasOptions { trials: 1000, seed: 5, ..Default::default() };
    let eps = [0.01, 0.05, 0.1, 0.2];
    let r = check_ruas_empirical(&one, &omega, 0.1, &eps, &opts).unwrap();
    let monotone = r.stability.windows(2).all(|w| w[0].1 <= w[1].1);
    let at = r.stability.iter().find(|(e, _)| *e == 0.05).map(|p| p.1).unwrap_or(0.0);

    let two = cont(&["-x1 + x1^2"]);
    let omega2 = reach_over(&two, &w(), 0.25, &g).unwrap();
    let r2 = check_ruas_empirical(&two, &omega2, 0.25, &[0.05], &RuasOptions { trials: 1000, seed: 5, ..Default::default() }).unwrap();
    let kind = r2.counterexample.as_ref().map(|c| c.kind);
    let ok = r.passed() && monotone && at >= 0.04 && r.trials >= 1000 && kind == Some(CounterexampleKind::Divergence);
    report(8, ok, format!("table {:?} monotone={monotone}, δ_ε(0.05) = {at} (>= 0.04); quadratic system counterexample {kind:?}", r.stability));
}

fn criterion_9_property_checks() {
    use robust_barrier::expr::parse;
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0usize;

    // AD against central differences and interval enclosure of samples.
    let exprs = ["smoothplus(x1 - 0.3, 5) * x2 + x1^3", "exp(-x1^2) - 0.5 * x2 * x1", "sqrt(1 + x1^2 + x2^2)"];
    for src in exprs {
        let e = parse(src).unwrap();
        for _ in 0..200 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let (_, g) = e.value_and_grad(&x).unwrap();
            for i in 0..2 {
                let h = 1e-6;
                let (mut a, mut b) = (x, x);
                a[i] += h;
                b[i] -= h;
                let fd = (e.eval(&a).unwrap() - e.eval(&b).unwrap()) / (2.0 * h);
                if (fd - g[i]).abs() > 1e-5 * (1.0 + g[i].abs()) {
                    violations += 1;
                }
            }
            let lo = [x[0] - 0.1, x[1] - 0.1];
            let bx = ib(&[[lo[0], lo[0] + 0.2], [lo[1], lo[1] + 0.2]]);
            let enc = e.eval_interval(&bx).unwrap();
            for _ in 0..10 {
                let y = [lo[0] + rng.gen_range(0.0..0.2), lo[1] + rng.gen_range(0.0..0.2)];
                if !enc.contains(e.eval(&y).unwrap()) {
                    violations += 1;
                }
            }
        }
    }

    let calculus = violations;

    // Reach monotonicity in δ and the fixpoint property.
    let sys = cont(&["-x1"]);
    let g = line(-1.0, 1.0, 1e-2);
    let mut prev: Option<robust_barrier::grid::GridSet> = None;
    for d in [0.0, 0.05, 0.1, 0.2, 0.3] {
        let r = reach_over(&sys, &w(), d, &g).unwrap();
        if let Some(p) = &prev {
            violations += (!p.is_subset_of(&r)) as usize;
        }
        let again = robust_barrier::reach::close_under_transitions(&sys, r.clone(), d);
        violations += (again.count() != r.count()) as usize;
        prev = Some(r);
    }

    let reach = violations - calculus;

    // Worst-case disturbance reduction: sup over the δ-ball of ∇V·(f + d)
    // equals ∇V·f + δ‖∇V‖.
    let v = parse("x1^2 + 0.5 * x2^2 + 0.1 * x1 * x2").unwrap();
    let f = SystemSpec::parse(&["-x1 + x2", "-x2 - x1^3"], TimeDomain::Continuous).unwrap();
    for _ in 0..200 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let delta = rng.gen_range(0.01..0.5);
        let (_, gr) = v.value_and_grad(&x).unwrap();
        let fx = f.eval(&x).unwrap();
        let lie = gr[0] * fx[0] + gr[1] * fx[1];
        let closed = robust_barrier::lyapunov::sup_rate_point(&gr, &fx, delta);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = if rng.gen_bool(0.5) { delta } else { delta * rng.gen_range(0.0f64..1.0).sqrt() };
            best = best.max(gr[0] * (fx[0] + r * a.cos()) + gr[1] * (fx[1] + r * a.sin()));
        }
        let exact = lie + delta * (gr[0] * gr[0] + gr[1] * gr[1]).sqrt();
        let scale = 1.0 + exact.abs();
        if (closed - exact).abs() > 1e-12 * scale || best > exact + 1e-12 * scale || exact - best > 1e-3 * scale {
            violations += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let worst = violations - calculus - reach;
    report(
        9,
        violations == 0,
        format!("violations: AD/interval {calculus}, reach {reach}, worst-case disturbance {worst}; {secs:.2} s"),
    );
}
