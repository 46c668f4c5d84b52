use approx::assert_abs_diff_eq;

use super::*;
use crate::generator::total_noise;

#[test]
fn reference_scenario_round_trips_through_toml() {
    let s = Scenario::reference();
    let text = s.to_toml_string().unwrap();
    let back = Scenario::from_toml_str(&text).unwrap();
    assert_eq!(back.scenario.name, "reference");
    assert_eq!(back.family.n_list, vec![1, 2, 4, 8, 16, 32]);
    assert_eq!(back.numerics.particles, 10_000);
    assert_eq!(back.controls.count, vec![21]);
    assert_eq!(back.terminal.kind, "crowd");
    assert_eq!(back.to_toml_string().unwrap(), text);
}

#[test]
fn validation_rejects_malformed_scenarios() {
    let mut s = Scenario::reference();
    s.family.n_list.clear();
    assert!(s.validate().is_err());

    let mut s = Scenario::reference();
    s.family.n_list = vec![4, 2];
    assert!(s.validate().is_err());

    let mut s = Scenario::reference();
    s.terminal.kind = "quartic".into();
    assert!(s.validate().is_err());

    let mut s = Scenario::reference();
    s.numerics.damping = 1.5;
    assert!(s.validate().is_err());

    let mut s = Scenario::reference();
    s.controls.lo = vec![-1.0, -1.0];
    assert!(s.validate().is_err());
}

#[test]
fn unknown_keys_are_rejected() {
    let mut text = Scenario::reference().to_toml_string().unwrap();
    text.push_str("\n[extra]\nfoo = 1\n");
    assert!(Scenario::from_toml_str(&text).is_err());
}

#[test]
fn family_noise_scales_inversely_with_n() {
    let s = Scenario::reference();
    let m0 = s.initial_measure().unwrap();
    let u = vec![0.0];
    for n in [1u32, 2, 8] {
        let spec = s.family_spec(n).unwrap();
        let sigma = total_noise(&spec, 0.0, &[0.0], &m0, &u);
        assert_abs_diff_eq!(sigma, 1.0 / n as f64, epsilon = 1e-12);
    }
    assert!(s.limit_spec().unwrap().is_deterministic());
}

#[test]
fn jump_family_scales_rate_and_displacement() {
    let mut s = Scenario::reference();
    s.family.diffusion_scale = 0.0;
    s.family.jumps = vec![JumpAtom { rate: 0.5, displacement: vec![0.8] }];
    let m0 = s.initial_measure().unwrap();
    let u = vec![0.0];
    for n in [1u32, 4] {
        let spec = s.family_spec(n).unwrap();
        // rate n/2, displacement 0.8/n: intensity = 0.5 n (0.8/n)^2 = 0.32/n
        let sigma = total_noise(&spec, 0.0, &[0.0], &m0, &u);
        assert_abs_diff_eq!(sigma, 0.32 / n as f64, epsilon = 1e-12);
    }
}

#[test]
fn initial_cloud_is_centered_and_shift_decays() {
    let s = Scenario::reference();
    let m0 = s.initial_measure().unwrap();
    assert_eq!(m0.len(), 200);
    assert_abs_diff_eq!(m0.mean()[0], 0.0, epsilon = 1e-12);
    assert!(m0.max_norm() <= 1.0);
    // uniform density on [-1,1] has second moment 1/3
    assert_abs_diff_eq!(m0.second_moment(), 1.0 / 3.0, epsilon = 1e-3);

    let mut s2 = s.clone();
    s2.family.initial_shift = 0.4;
    for n in [1u32, 4] {
        let m0n = s2.initial_measure_n(n).unwrap();
        assert_abs_diff_eq!(m0n.mean()[0], 0.4 / n as f64, epsilon = 1e-12);
    }
}

#[test]
fn reference_payoffs_penalize_control_and_crowding() {
    let s = Scenario::reference();
    let spec = s.limit_spec().unwrap();
    let m = EmpiricalMeasure::dirac(&[0.5]).unwrap();
    // g(x=1.5, mean=0.5, u=1) = -1/2 - 1/2
    let g = spec.running_payoff(0.0, &[1.5], &m, &[1.0]);
    assert_abs_diff_eq!(g, -1.0, epsilon = 1e-12);
    let sigma = spec.terminal_payoff(&[1.5], &m);
    assert_abs_diff_eq!(sigma, -1.0, epsilon = 1e-12);
    // drift is the control
    let mut f = vec![0.0];
    spec.drift_into(0.0, &[1.5], &m, &[-0.7], &mut f);
    assert_abs_diff_eq!(f[0], -0.7, epsilon = 1e-12);
}

#[test]
fn grid_config_uses_the_pinned_radius() {
    let s = Scenario::reference();
    let cfg = s.grid_config().unwrap();
    assert_eq!(cfg.radius, 4.0);
    assert_eq!(cfg.h, 0.01);

    // without a pinned radius the a-priori rule produces something finite
    // and at least as large as the initial support
    let mut s2 = s.clone();
    s2.numerics.box_radius = 0.0;
    let auto = s2.grid_config().unwrap();
    assert!(auto.radius.is_finite() && auto.radius > 1.0);
}

#[test]
fn missing_file_reports_the_path() {
    let err = Scenario::load(std::path::Path::new("/nonexistent/s.toml")).unwrap_err();
    assert!(matches!(err, crate::error::MfgError::Io(_)));
}
