use approx::assert_abs_diff_eq;

use super::*;
use crate::generator::ControlSet;

fn small_iter() -> IterConfig {
    IterConfig { max_iter: 10, damping: 0.5, tol: 1e-3, particles: 100, dt: 0.05, seed: 7 }
}

fn spec_1d(
    drift: crate::generator::DriftFn,
    running: crate::generator::RunningPayoffFn,
    terminal: crate::generator::TerminalPayoffFn,
) -> GeneratorSpec {
    GeneratorSpec {
        dim: 1,
        controls: ControlSet::grid(&[-1.0], &[1.0], &[5]).unwrap(),
        diffusion: None,
        drift,
        jumps: Vec::new(),
        running_payoff: running,
        terminal_payoff: terminal,
    }
}

fn frozen_spec() -> GeneratorSpec {
    spec_1d(
        Arc::new(|_t, _x, _m, _u, out: &mut [f64]| out[0] = 0.0),
        Arc::new(|_t, _x, _m, _u| 0.0),
        Arc::new(|x, m| -(x[0] - m.mean()[0]).powi(2)),
    )
}

fn cloud(n: usize) -> EmpiricalMeasure {
    let pts: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect();
    EmpiricalMeasure::uniform(pts, 1).unwrap()
}

#[test]
fn frozen_dynamics_converge_immediately_to_the_initial_law() {
    let spec = frozen_spec();
    let m0 = cloud(40);
    let sol = solve_minimax_mfg(&spec, 1.0, &m0, &GridConfig::new(2.0, 0.1), &small_iter()).unwrap();
    assert!(sol.diagnostics.converged);
    assert_eq!(sol.diagnostics.iterations, 1);
    // flow stays at m0 and chi is made of constant paths
    for k in 0..sol.flow.grid().len() {
        assert_abs_diff_eq!(
            wasserstein2_auto(sol.flow.at_index(k), &m0).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }
    let chi = sol.traj_measure.as_ref().unwrap();
    for traj in chi.trajectories() {
        assert_eq!(traj.state_at(0), traj.state_at(traj.grid().len() - 1));
    }
    // value equals sigma(x, m0) at every time; the support residual is pure
    // interpolation error of the quadratic terminal at off-node states,
    // bounded by h^2/4 * |sigma''| = 0.005
    let report = verify_minimax(&sol, &spec, 0.005).unwrap();
    assert!(report.pass, "{report:?}");
    assert_eq!(report.initial_gap, 0.0);
    assert_eq!(report.pushforward_gap, 0.0);
}

#[test]
fn minimax_eikonal_matches_closed_form() {
    let spec = spec_1d(
        Arc::new(|_t, _x, _m, u, out: &mut [f64]| out[0] = u[0]),
        Arc::new(|_t, _x, _m, _u| 0.0),
        Arc::new(|x, _m| -x[0].abs()),
    );
    let m0 = cloud(30);
    let mut iter = small_iter();
    iter.dt = 0.025;
    let sol =
        solve_minimax_mfg(&spec, 1.0, &m0, &GridConfig::new(2.5, 0.025), &iter).unwrap();
    // no coupling: converges immediately
    assert!(sol.diagnostics.converged);
    for x in [-1.8f64, -0.6, 0.3, 1.2] {
        let exact = -(x.abs() - 1.0).max(0.0);
        let got = sol.value.evaluate(0.0, &[x]).unwrap();
        assert!((got - exact).abs() <= 2.0 * (0.025 + 0.025), "V(0,{x}) = {got} vs {exact}");
    }
    // paths drive toward the origin; endpoints shrink accordingly
    let chi = sol.traj_measure.as_ref().unwrap();
    let last = chi.grid().len() - 1;
    for traj in chi.trajectories() {
        let xi = traj.state_at(0)[0];
        let end = traj.state_at(last)[0];
        assert!(end.abs() <= (xi.abs() - 1.0).max(0.0) + 0.1, "xi {xi} end {end}");
    }
    let report = verify_minimax(&sol, &spec, 3.0 * (0.025 + 0.025)).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn corrupted_path_is_detected_by_the_support_check() {
    let spec = spec_1d(
        Arc::new(|_t, _x, _m, u, out: &mut [f64]| out[0] = u[0]),
        Arc::new(|_t, _x, _m, _u| 0.0),
        Arc::new(|x, _m| -x[0].abs()),
    );
    let m0 = cloud(20);
    let mut iter = small_iter();
    iter.dt = 0.025;
    let mut sol =
        solve_minimax_mfg(&spec, 1.0, &m0, &GridConfig::new(2.5, 0.025), &iter).unwrap();
    let chi = sol.traj_measure.take().unwrap();
    let grid = chi.grid().clone();
    let nt = grid.len();
    let mut trajs: Vec<Trajectory> = chi.trajectories().to_vec();
    // replace one path by the do-nothing path from 0.95: value at its start
    // is ~0 but its own payoff identity gives -0.95
    trajs[0] = Trajectory::new(grid, 1, vec![0.95; nt], vec![0.0; nt], 0).unwrap();
    sol.traj_measure = Some(PathMeasure::uniform(trajs).unwrap());
    let report = verify_minimax(&sol, &spec, 0.15).unwrap();
    assert!(!report.pass);
    assert!(report.support_residual >= 0.8, "residual {}", report.support_residual);
}

#[test]
fn stochastic_frozen_game_fixes_the_sampled_law() {
    let spec = frozen_spec();
    let m0 = cloud(25);
    let sol =
        solve_stochastic_mfg(&spec, 1.0, &m0, &GridConfig::new(2.0, 0.1), &small_iter()).unwrap();
    assert!(sol.diagnostics.converged);
    let ens = sol.ensemble.as_ref().unwrap();
    // flow at 0 equals the sampled initial cloud, and nothing moves
    let sampled = ens.initial_measure().unwrap();
    assert_abs_diff_eq!(
        wasserstein2_auto(sol.flow.at_index(0), &sampled).unwrap(),
        0.0,
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(
        sol.flow.sup_distance(&FlowOfProbabilities::constant(
            sol.flow.grid().clone(),
            sampled
        ))
        .unwrap(),
        0.0,
        epsilon = 1e-12
    );
}

#[test]
fn crowd_aversion_equilibrium_stays_centered() {
    // f = u, g = -u^2/2 - (x - mean)^2 / 2 with symmetric m0: the
    // equilibrium mean stays at 0 by symmetry
    let spec = spec_1d(
        Arc::new(|_t, _x, _m, u, out: &mut [f64]| out[0] = u[0]),
        Arc::new(|_t, x, m, u| -0.5 * u[0] * u[0] - 0.5 * (x[0] - m.mean()[0]).powi(2)),
        Arc::new(|x, m| -(x[0] - m.mean()[0]).powi(2)),
    );
    let m0 = cloud(60);
    let mut iter = small_iter();
    iter.max_iter = 15;
    iter.particles = 400;
    let sol = solve_minimax_mfg(&spec, 1.0, &m0, &GridConfig::new(2.5, 0.05), &iter).unwrap();
    // the argmax tie-break at the symmetric center node introduces an O(h)
    // asymmetry, so the tolerance is one scheme-error unit, not zero
    for m in sol.flow.measures() {
        assert!(m.mean()[0].abs() < 0.1, "drifted mean {}", m.mean()[0]);
    }
    // iteration increments contract on this monotone-coupling game
    let inc = &sol.diagnostics.increments;
    assert!(inc.last().unwrap() <= inc.first().unwrap());
}

#[test]
fn verify_probabilistic_passes_on_a_no_coupling_game() {
    let spec = spec_1d(
        Arc::new(|_t, _x, _m, u, out: &mut [f64]| out[0] = u[0]),
        Arc::new(|_t, _x, _m, u| -0.5 * u[0] * u[0]),
        Arc::new(|x, _m| -x[0] * x[0]),
    );
    let m0 = cloud(30);
    let mut iter = small_iter();
    iter.particles = 300;
    let sol =
        solve_stochastic_mfg(&spec, 1.0, &m0, &GridConfig::new(2.5, 0.05), &iter).unwrap();
    let policies = policy_dictionary(&spec, sol.flow.grid(), 8, 11).unwrap();
    let starts = vec![(0.0, vec![0.4]), (0.0, vec![-0.9])];
    let report = verify_probabilistic(&sol, &spec, &policies, &starts, 200, 0.15).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn unconverged_coupled_solve_reports_a_flow_mismatch() {
    let spec = spec_1d(
        Arc::new(|_t, _x, m, u, out: &mut [f64]| out[0] = u[0] + m.mean()[0]),
        Arc::new(|_t, x, m, u| -0.5 * u[0] * u[0] - (x[0] - m.mean()[0] - 0.5).powi(2)),
        Arc::new(|x, _m| -x[0] * x[0]),
    );
    // asymmetric start so the mean genuinely moves between iterations
    let pts: Vec<f64> = (0..30).map(|i| 0.2 + 0.8 * (i as f64 + 0.5) / 30.0).collect();
    let m0 = EmpiricalMeasure::uniform(pts, 1).unwrap();
    let mut iter = small_iter();
    iter.max_iter = 1;
    iter.damping = 1.0;
    let sol =
        solve_stochastic_mfg(&spec, 1.0, &m0, &GridConfig::new(3.0, 0.05), &iter).unwrap();
    assert!(!sol.diagnostics.converged);
}

#[test]
fn mix_flows_with_full_damping_returns_the_new_flow() {
    let grid = crate::grid::TimeGrid::uniform(1.0, 2).unwrap();
    let a = FlowOfProbabilities::constant(grid.clone(), cloud(10));
    let pts: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let b = FlowOfProbabilities::constant(grid, EmpiricalMeasure::uniform(pts, 1).unwrap());
    let mixed = mix_flows(&a, &b, 1.0).unwrap();
    assert_abs_diff_eq!(mixed.sup_distance(&b).unwrap(), 0.0, epsilon = 1e-12);
    let kept = mix_flows(&a, &b, 0.0001).unwrap();
    assert_abs_diff_eq!(kept.sup_distance(&a).unwrap(), 0.0, epsilon = 1e-12);
}

#[test]
fn policy_dictionary_counts_and_kinds() {
    let spec = frozen_spec();
    let grid = crate::grid::TimeGrid::uniform(1.0, 4).unwrap();
    let dict = policy_dictionary(&spec, &grid, 12, 5).unwrap();
    assert_eq!(dict.len(), 12);
    assert!(matches!(dict[0], ControlPolicy::Constant(0)));
    assert!(matches!(dict[5], ControlPolicy::OpenLoop(_)));
    assert!(policy_dictionary(&spec, &grid, 0, 5).is_err());
}
