//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line. Tolerances are pinned here, not read from scenarios.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfg_core::dynamics::Trajectory;
use mfg_core::equilibrium::{policy_dictionary, solve_minimax_mfg, verify_minimax};
use mfg_core::generator::{
    apply_generator, ControlSet, GeneratorArgs, GeneratorSpec, TestFunction,
};
use mfg_core::harness::{run_bounds_audit, run_convergence_study, solve_member};
use mfg_core::measures::{
    path_w2, pushforward_at, wasserstein2, wasserstein2_auto, EmpiricalMeasure,
    FlowOfProbabilities, PathMeasure, W2Method,
};
use mfg_core::scenario::Scenario;
use mfg_core::simulator::{martingale_residual, simulate, ControlPolicy, SimConfig};
use mfg_core::value::{
    check_deviation, expected_payoff, extract_policy, solve_deterministic_value,
    solve_stochastic_value, GridConfig,
};
use mfg_core::TimeGrid;

fn report(idx: u32, name: &str, pass: bool, detail: &str) {
    println!("acceptance {idx:02} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {idx} ({name}) failed: {detail}");
}

// ---------------------------------------------------------------------------
// 1. transport distance against brute force
// ---------------------------------------------------------------------------

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    for &i in &p {
                        seen[i] = true;
                    }
                    if seen.iter().all(|&s| s) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

#[test]
fn criterion_01_wasserstein_brute_force() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let perms = permutations4();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ma = EmpiricalMeasure::uniform(a.clone(), 2).unwrap();
        let mb = EmpiricalMeasure::uniform(b.clone(), 2).unwrap();
        let got = wasserstein2(&ma, &mb, W2Method::Assignment).unwrap();
        let mut best = f64::INFINITY;
        for p in &perms {
            let cost: f64 = (0..4)
                .map(|i| {
                    let (x, y) = (&a[2 * i..2 * i + 2], &b[2 * p[i]..2 * p[i] + 2]);
                    (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)
                })
                .sum::<f64>()
                / 4.0;
            best = best.min(cost);
        }
        worst = worst.max((got - best.sqrt()).abs());
    }
    // 1-D: quantile matching agrees with the assignment solver
    for _ in 0..50 {
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ma = EmpiricalMeasure::uniform(a, 1).unwrap();
        let mb = EmpiricalMeasure::uniform(b, 1).unwrap();
        let d1 = wasserstein2(&ma, &mb, W2Method::Exact1d).unwrap();
        let d2 = wasserstein2(&ma, &mb, W2Method::Assignment).unwrap();
        worst = worst.max((d1 - d2).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        1,
        "wasserstein-brute-force",
        worst <= 1e-9 && secs < 5.0,
        &format!("max deviation {worst:.2e}, {secs:.2}s"),
    );
}

// ---------------------------------------------------------------------------
// 2. marginal distances never exceed the path distance
// ---------------------------------------------------------------------------

fn random_path_measure(rng: &mut ChaCha8Rng, grid: &TimeGrid, paths: usize) -> PathMeasure {
    let nt = grid.len();
    let trajs: Vec<Trajectory> = (0..paths)
        .map(|_| {
            let mut x = Vec::with_capacity(nt * 2);
            let mut cur = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            for _ in 0..nt {
                x.extend_from_slice(&cur);
                cur[0] += rng.gen_range(-0.3..0.3);
                cur[1] += rng.gen_range(-0.3..0.3);
            }
            let z: Vec<f64> = (0..nt).map(|k| 0.1 * k as f64).collect();
            Trajectory::new(grid.clone(), 2, x, z, 0).unwrap()
        })
        .collect();
    PathMeasure::uniform(trajs).unwrap()
}

#[test]
fn criterion_02_path_marginal_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let grid = TimeGrid::uniform(1.0, 4).unwrap();
    let mut min_slack = f64::INFINITY;
    for _ in 0..20 {
        let chi1 = random_path_measure(&mut rng, &grid, 6);
        let chi2 = random_path_measure(&mut rng, &grid, 6);
        let dpath = path_w2(&chi1, &chi2).unwrap();
        for &t in grid.times() {
            let m1 = pushforward_at(&chi1, t).unwrap();
            let m2 = pushforward_at(&chi2, t).unwrap();
            let dm = wasserstein2_auto(&m1, &m2).unwrap();
            min_slack = min_slack.min(dpath - dm);
        }
    }
    report(2, "path-marginal-bound", min_slack >= -1e-9, &format!("min slack {min_slack:.2e}"));
}

// ---------------------------------------------------------------------------
// 3. generator action on the coupling test functions vs closed forms
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_generator_identities() {
    // raw ingredients, written out twice: once inside the spec closures and
    // once in the independent oracle below
    let g_mat = [0.6, 0.15, 0.15, 0.4];
    let drift_lin = [0.3, -0.7];
    let atoms: [(f64, [f64; 2]); 2] = [(2.0, [0.3, -0.2]), (0.25, [1.4, 1.1])];
    let spec = GeneratorSpec {
        dim: 2,
        controls: ControlSet::grid(&[-1.0, -1.0], &[1.0, 1.0], &[3, 3]).unwrap(),
        diffusion: Some(Arc::new(move |_t, _x, _m, _u, out: &mut [f64]| {
            out.copy_from_slice(&g_mat);
        })),
        drift: Arc::new(move |_t, x, _m, u, out: &mut [f64]| {
            out[0] = drift_lin[0] * x[0] + u[0];
            out[1] = drift_lin[1] * x[1] + u[1];
        }),
        jumps: vec![
            Arc::new(move |_t, _x, _m, _u, y: &mut [f64]| {
                y.copy_from_slice(&atoms[0].1);
                atoms[0].0
            }),
            Arc::new(move |_t, _x, _m, _u, y: &mut [f64]| {
                y.copy_from_slice(&atoms[1].1);
                atoms[1].0
            }),
        ],
        running_payoff: Arc::new(|_t, _x, _m, _u| 0.0),
        terminal_payoff: Arc::new(|_x, _m| 0.0),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x1: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x2: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x3: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let u: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = EmpiricalMeasure::uniform(vec![0.1, -0.4, 0.7, 0.2], 2).unwrap();
        let t = rng.gen_range(0.0..1.0);

        // oracle: total noise and effective drift assembled from the raw data
        let mut sigma = g_mat[0] + g_mat[3];
        for (rate, y) in &atoms {
            sigma += rate * (y[0] * y[0] + y[1] * y[1]);
        }
        let mut b = [drift_lin[0] * x1[0] + u[0], drift_lin[1] * x1[1] + u[1]];
        for (rate, y) in &atoms {
            if (y[0] * y[0] + y[1] * y[1]).sqrt() > 1.0 {
                b[0] += rate * y[0];
                b[1] += rate * y[1];
            }
        }
        let want_q = sigma + 2.0 * (b[0] * (x1[0] - x2[0]) + b[1] * (x1[1] - x2[1]));
        let want_l = b[0] * x3[0] + b[1] * x3[1];

        let args = GeneratorArgs { t, x1: &x1, x2: Some(&x2), x3: Some(&x3), m: &m, u: &u };
        let got_q = apply_generator(&spec, &TestFunction::CouplingQuadratic, &args).unwrap();
        let got_l = apply_generator(&spec, &TestFunction::CouplingLinear, &args).unwrap();
        let scale = 1.0 + want_q.abs().max(want_l.abs());
        worst = worst.max((got_q - want_q).abs() / scale).max((got_l - want_l).abs() / scale);
    }
    report(3, "generator-identities", worst <= 1e-12, &format!("max rel error {worst:.2e}"));
}

// ---------------------------------------------------------------------------
// 4. martingale residuals of the simulator
// ---------------------------------------------------------------------------

fn plain_spec(
    diffusion: Option<f64>,
    jump: Option<(f64, f64)>,
    mean_reverting: bool,
) -> GeneratorSpec {
    GeneratorSpec {
        dim: 1,
        controls: ControlSet::grid(&[0.0], &[0.0], &[1]).unwrap(),
        diffusion: diffusion
            .map(|g| -> mfg_core::generator::DiffusionFn {
                Arc::new(move |_t, _x, _m, _u, out: &mut [f64]| out[0] = g)
            }),
        drift: if mean_reverting {
            Arc::new(|_t, x, _m, _u, out: &mut [f64]| out[0] = -x[0])
        } else {
            Arc::new(|_t, _x, _m, _u, out: &mut [f64]| out[0] = 0.0)
        },
        jumps: jump
            .map(|(rate, y0)| -> mfg_core::generator::JumpFn {
                Arc::new(move |_t, _x, _m, _u, y: &mut [f64]| {
                    y[0] = y0;
                    rate
                })
            })
            .into_iter()
            .collect(),
        running_payoff: Arc::new(|_t, _x, _m, _u| 0.0),
        terminal_payoff: Arc::new(|_x, _m| 0.0),
    }
}

fn residuals_for(spec: &GeneratorSpec, particles: usize, dt: f64) -> (f64, f64, f64, f64) {
    let steps = (1.0 / dt).round() as usize;
    let grid = TimeGrid::uniform(1.0, steps).unwrap();
    let zeta = FlowOfProbabilities::constant(grid, EmpiricalMeasure::dirac(&[0.5]).unwrap());
    let m0 = EmpiricalMeasure::dirac(&[0.5]).unwrap();
    let ens = simulate(spec, &ControlPolicy::Constant(0), &zeta, &m0, &SimConfig::new(particles, dt, 404)).unwrap();
    let lin = martingale_residual(&ens, spec, &zeta, &TestFunction::Linear(vec![1.0]), 0.0, 1.0).unwrap();
    let quad = martingale_residual(&ens, spec, &zeta, &TestFunction::ShiftedQuadratic(vec![0.0]), 0.0, 1.0).unwrap();
    (lin.mean, lin.std_err, quad.mean, quad.std_err)
}

#[test]
fn criterion_04_martingale_residuals() {
    let t0 = Instant::now();
    let n = 20_000;
    let dt = 1e-3;
    // trapezoid bias budget for the shifted quadratic, linear in dt
    let bias = 20.0 * dt;
    let mut pass = true;
    let mut detail = String::new();
    for (name, spec) in [
        ("brownian", plain_spec(Some(0.3), None, false)),
        ("jump", plain_spec(None, Some((2.0, 0.3)), false)),
        ("deterministic", plain_spec(None, None, true)),
    ] {
        let (lm, ls, qm, qs) = residuals_for(&spec, n, dt);
        let ok = lm.abs() <= 3.0 * ls + bias && qm.abs() <= 3.0 * qs + bias;
        pass &= ok;
        detail.push_str(&format!("{name}: lin {lm:.2e} quad {qm:.2e}; "));
    }
    // deterministic bias shrinks at first order in dt
    let det = plain_spec(None, None, true);
    let (_, _, coarse, _) = residuals_for(&det, 4, 1e-3);
    let (_, _, fine, _) = residuals_for(&det, 4, 5e-4);
    let ratio = coarse.abs() / fine.abs().max(1e-300);
    pass &= ratio >= 1.8;
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    detail.push_str(&format!("bias ratio {ratio:.2}, {secs:.1}s"));
    report(4, "martingale-residuals", pass, &detail);
}

// ---------------------------------------------------------------------------
// 5. moment bounds at member n = 4 of the reference scenario
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_moment_bounds() {
    let audit = run_bounds_audit(&Scenario::reference(), 4).unwrap();
    report(
        5,
        "moment-bounds",
        audit.c1_pass && audit.c3_pass,
        &format!(
            "second moment sup {:.3} vs c1 {:.3}; normalized {:.3} vs c3 {:.3}",
            audit.c1_lhs, audit.c1, audit.c3_lhs, audit.c3
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. deterministic value sweep against the cone solution
// ---------------------------------------------------------------------------

fn cone_spec() -> GeneratorSpec {
    GeneratorSpec {
        dim: 1,
        controls: ControlSet::grid(&[-1.0], &[1.0], &[21]).unwrap(),
        diffusion: None,
        drift: Arc::new(|_t, _x, _m, u, out: &mut [f64]| out[0] = u[0]),
        jumps: Vec::new(),
        running_payoff: Arc::new(|_t, _x, _m, _u| 0.0),
        terminal_payoff: Arc::new(|x, _m| -x[0].abs()),
    }
}

/// Max and weighted-average error of the sweep against the cone solution.
fn cone_errors(h: f64, steps: usize) -> (f64, f64) {
    let spec = cone_spec();
    let grid = TimeGrid::uniform(1.0, steps).unwrap();
    let mu = FlowOfProbabilities::constant(grid, EmpiricalMeasure::dirac(&[0.0]).unwrap());
    let v = solve_deterministic_value(&spec, &mu, &GridConfig::new(2.0, h)).unwrap();
    let mut x = vec![0.0];
    let (mut sup, mut tot, mut cnt) = (0.0f64, 0.0f64, 0usize);
    for (k, &t) in mu.grid().times().iter().enumerate() {
        for i in 0..v.nodes_per_axis() {
            v.node_coord(i, &mut x);
            let exact = -(x[0].abs() - (1.0 - t)).max(0.0);
            let e = (v.slice(k)[i] - exact).abs();
            sup = sup.max(e);
            tot += e / (1.0 + x[0] * x[0]);
            cnt += 1;
        }
    }
    (sup, tot / cnt as f64)
}

#[test]
fn criterion_06_deterministic_value_oracle() {
    let t0 = Instant::now();
    let (sup, _) = cone_errors(1.0 / 200.0, 200);
    let secs = t0.elapsed().as_secs_f64();
    let bound = 2.0 * (1.0 / 200.0 + 1.0 / 200.0);
    // the kink limits the sup norm to a sqrt(h) rate, so the refinement
    // factor is measured in the weighted average norm on misaligned grids
    // (aligned h = dt transports the cone exactly)
    let (_, coarse) = cone_errors(0.05, 40);
    let (_, fine) = cone_errors(0.025, 80);
    let ratio = coarse / fine;
    report(
        6,
        "deterministic-value-oracle",
        sup <= bound && ratio >= 1.8 && secs < 30.0,
        &format!("max error {sup:.2e} (bound {bound}), refinement {ratio:.2}, {secs:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// 7. stochastic value sweep: linear terminal under driftless diffusion
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_stochastic_value_oracle() {
    let spec = GeneratorSpec {
        dim: 1,
        controls: ControlSet::grid(&[0.0], &[0.0], &[1]).unwrap(),
        diffusion: Some(Arc::new(|_t, _x, _m, _u, out: &mut [f64]| out[0] = 0.25)),
        drift: Arc::new(|_t, _x, _m, _u, out: &mut [f64]| out[0] = 0.0),
        jumps: Vec::new(),
        running_payoff: Arc::new(|_t, _x, _m, _u| 0.0),
        terminal_payoff: Arc::new(|x, _m| x[0]),
    };
    let (h, dt) = (0.02f64, 0.01f64);
    let grid = TimeGrid::uniform(1.0, (1.0 / dt).round() as usize).unwrap();
    let zeta = FlowOfProbabilities::constant(grid, EmpiricalMeasure::dirac(&[0.0]).unwrap());
    let v = solve_stochastic_value(&spec, &zeta, &GridConfig::new(2.0, h)).unwrap();
    let budget = 3.0 * (h + dt);
    let mut worst = 0.0f64;
    for x in [-1.5, -0.4, 0.0, 0.8, 1.7] {
        worst = worst.max((v.evaluate(0.0, &[x]).unwrap() - x).abs());
    }
    // Monte-Carlo cross-check of E[Y(T)] from one start
    let x0 = 0.3;
    let (mc, se) =
        expected_payoff(&spec, &ControlPolicy::Constant(0), &zeta, 0.0, &[x0], &SimConfig::new(20_000, dt, 707)).unwrap();
    let mc_gap = (v.evaluate(0.0, &[x0]).unwrap() - mc).abs();
    report(
        7,
        "stochastic-value-oracle",
        worst <= budget && mc_gap <= 3.0 * se + budget,
        &format!("grid error {worst:.2e} (budget {budget}), MC gap {mc_gap:.2e} (3se {:.2e})", 3.0 * se),
    );
}

// ---------------------------------------------------------------------------
// 8. along-path identity of the deterministic equilibrium
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_minimax_self_consistency() {
    let s = Scenario::reference();
    let spec = s.limit_spec().unwrap();
    let m0 = s.initial_measure().unwrap();
    let grid_cfg = s.grid_config().unwrap();
    let iter = s.iter_config();
    let sol = solve_minimax_mfg(&spec, s.scenario.horizon, &m0, &grid_cfg, &iter).unwrap();
    let tol = 3.0 * (s.numerics.h + s.numerics.dt);
    let clean = verify_minimax(&sol, &spec, tol).unwrap();

    // hand-corrupt one path: sit still far from the crowd, report zero cost
    let mut bad = sol;
    let chi = bad.traj_measure.take().unwrap();
    let grid = chi.grid().clone();
    let nt = grid.len();
    let mut trajs = chi.trajectories().to_vec();
    trajs[0] = Trajectory::new(grid, 1, vec![3.5; nt], vec![0.0; nt], 0).unwrap();
    bad.traj_measure = Some(PathMeasure::uniform(trajs).unwrap());
    let corrupted = verify_minimax(&bad, &spec, tol).unwrap();

    report(
        8,
        "minimax-self-consistency",
        clean.pass && !corrupted.pass && corrupted.support_residual >= 10.0 * tol,
        &format!(
            "residual {:.3e} (tol {tol}), corrupted {:.3}",
            clean.support_residual, corrupted.support_residual
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. deviation inequality on the converged stochastic member
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_deviation_inequality() {
    let s = Scenario::reference();
    let n = 4;
    let spec = s.family_spec(n).unwrap();
    let sol = solve_member(&s, n).unwrap();
    let scheme_tol = 3.0 * (s.numerics.h + s.numerics.dt);
    let policies = policy_dictionary(&spec, sol.flow.grid(), 50, 909).unwrap();
    let starts: Vec<(f64, Vec<f64>)> = [10usize, 100, 190]
        .iter()
        .map(|&i| (0.0, sol.m0.point(i).to_vec()))
        .collect();
    let cfg = SimConfig::new(1000, s.numerics.dt, 910);
    let dev = check_deviation(&sol.value, &spec, &sol.flow, &policies, &starts, &cfg).unwrap();
    let dev_ok = dev.max_gap <= 3.0 * dev.max_std_err + scheme_tol;

    // the extracted optimizer attains the value within the same budget
    let value = Arc::new(sol.value);
    let policy = extract_policy(value.clone(), &spec);
    let mut attain_gap = 0.0f64;
    let mut attain_se = 0.0f64;
    for (t, xi) in &starts {
        let (mc, se) = expected_payoff(&spec, &policy, &sol.flow, *t, xi, &cfg).unwrap();
        attain_gap = attain_gap.max((mc - value.evaluate(*t, xi).unwrap()).abs());
        attain_se = attain_se.max(se);
    }
    let attain_ok = attain_gap <= 3.0 * attain_se + scheme_tol;
    report(
        9,
        "deviation-inequality",
        dev_ok && attain_ok,
        &format!(
            "max gap {:.3e} (3se {:.2e} + tol {scheme_tol}), attainment {:.3e}",
            dev.max_gap,
            3.0 * dev.max_std_err,
            attain_gap
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. convergence of the family toward the deterministic limit
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_convergence_study() {
    let t0 = Instant::now();
    let s = Scenario::reference();
    let dir = tempfile::tempdir().unwrap();
    let rep = run_convergence_study(&s, Some(dir.path())).unwrap();
    let secs = t0.elapsed().as_secs_f64();

    let first = &rep.rows[0];
    let last = rep.rows.last().unwrap();
    let w2_drop = last.sup_w2 <= first.sup_w2 / 3.0;
    let val_drop = last.value_err <= first.value_err / 3.0;
    let w2_floor = last.sup_w2 <= 3.0 * rep.noise_floor_w2;
    let val_floor = last.value_err <= 3.0 * rep.noise_floor_value;
    // a single fitted constant bounds the coupled distance for every member:
    // per-row ratio_coupled = coupled_dist / (eps (1 + E||xi||^2)) <= C
    let c = rep.fitted_coupled_constant;
    let coupled_ok =
        c.is_finite() && c > 0.0 && rep.rows.iter().all(|r| r.ratio_coupled <= c * 1.0001);
    let time_ok = secs < 1200.0;
    report(
        10,
        "convergence-study",
        w2_drop && val_drop && w2_floor && val_floor && coupled_ok && time_ok,
        &format!(
            "sup_w2 {:.3e}->{:.3e} (floor {:.3e}), value {:.3e}->{:.3e} (floor {:.3e}), fitted C {:.3}, {secs:.0}s",
            first.sup_w2, last.sup_w2, rep.noise_floor_w2, first.value_err, last.value_err,
            rep.noise_floor_value, c
        ),
    );
}

// ---------------------------------------------------------------------------
// 11. byte-identical outputs across runs and thread counts
// ---------------------------------------------------------------------------

fn tiny_scenario() -> Scenario {
    let mut s = Scenario::reference();
    s.initial.points = 40;
    s.numerics.particles = 150;
    s.numerics.dt = 0.05;
    s.numerics.h = 0.1;
    s.numerics.box_radius = 2.5;
    s.numerics.max_iter = 6;
    s.numerics.tol = 0.05;
    s.family.n_list = vec![1, 4, 16];
    s
}

#[test]
fn criterion_11_reproducibility() {
    let s = tiny_scenario();
    let run = |threads: Option<usize>| -> String {
        let dir = tempfile::tempdir().unwrap();
        let go = || {
            run_convergence_study(&s, Some(dir.path())).unwrap();
            std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap()
        };
        match threads {
            Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap().install(go),
            None => go(),
        }
    };
    let a = run(None);
    let b = run(None);
    let one = run(Some(1));
    let four = run(Some(4));
    report(
        11,
        "reproducibility",
        a == b && a == one && a == four,
        &format!("{} csv bytes, identical across 2 runs and thread counts 1/4", a.len()),
    );
}
