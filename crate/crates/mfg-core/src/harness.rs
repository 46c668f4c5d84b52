//! Convergence studies and quantitative bound audits.
//!
//! The study solves the deterministic limiting game once, then for each
//! family member `n` solves the stochastic game, couples it to an auxiliary
//! deterministic ensemble driven by the same realized controls and initial
//! states, and reports the distance columns together with audits of the
//! explicit moment-bound constants.

use std::fmt::Write as _;
use std::path::Path;

use crate::equilibrium::{solve_minimax_mfg, solve_stochastic_mfg, EquilibriumSolution};
use crate::error::{MfgError, Result};
use crate::exec;
use crate::generator::{epsilon_estimate, growth_audit, GeneratorSpec, SamplePoint};
use crate::measures::{
    wasserstein2_auto, EmpiricalMeasure, FlowOfProbabilities,
};
use crate::scenario::Scenario;
use crate::simulator::PathEnsemble;

/// `C1 = (M0 + 2MT) e^{7MT}`: uniform second-moment bound of equilibrium
/// flows, from the initial second moment `M0` and the growth constant `M`.
pub fn c1_bound(m0_second_moment: f64, m_growth: f64, horizon: f64) -> f64 {
    let mt = m_growth * horizon;
    (m0_second_moment + 2.0 * mt) * (7.0 * mt).exp()
}

/// `C3 = 2MT (1 + C1) e^{5MT}`: conditional second-moment stability
/// constant.
pub fn c3_bound(m_growth: f64, horizon: f64, c1: f64) -> f64 {
    let mt = m_growth * horizon;
    2.0 * mt * (1.0 + c1) * (5.0 * mt).exp()
}

/// `C5 = c10' T e^{c9' T}` with the intermediate constants built from the
/// growth constant `M`, the Lipschitz constant `K`, and the moment bounds
/// `C1` (noisy flows) and `C2` (deterministic flows).
pub fn c5_bound(m_growth: f64, k_lipschitz: f64, horizon: f64, c1: f64, c2: f64) -> f64 {
    let m = m_growth;
    let k = k_lipschitz;
    let t = horizon;
    let c1p = 1.0 + 2.0 * c1;
    let c2p = m * m * (2.0 + 6.0 * c1);
    let _c3p = (c1p + c2p) * t.exp();
    let _c5p = m * m * (3.0 + 5.0 * c2);
    let c6p = 0.5 + c1;
    let c7p = 5.0 * k + 5.0;
    let c8p = c1p + c6p;
    let c9p = (c7p * t).exp() * k;
    let c10p = (c7p * t).exp() * c8p;
    c10p * t * (c9p * t).exp()
}

/// Deterministic auxiliary ensemble coupled to a stochastic equilibrium:
/// the same initial states and realized per-particle controls drive the
/// noiseless dynamics, whose own empirical law feeds the coefficients.
/// Returns the states (`particles * nt * dim`, particle-major) and the flow
/// of empirical laws.
pub fn coupled_ensemble(
    limit: &GeneratorSpec,
    ens: &PathEnsemble,
) -> Result<(Vec<f64>, FlowOfProbabilities)> {
    let d = limit.dim;
    if ens.dim() != d {
        return Err(MfgError::DimensionMismatch(ens.dim(), d));
    }
    let n = ens.particles();
    let grid = ens.grid().clone();
    let nt = grid.len();
    let times = grid.times().to_vec();
    let mut states = vec![0.0; n * nt * d];
    for p in 0..n {
        states[p * nt * d..p * nt * d + d].copy_from_slice(ens.state_at(p, 0));
    }
    let mut measures = Vec::with_capacity(nt);
    // step with the ensemble's exact dt, not with time-node differences,
    // so the noiseless replay reproduces the simulator bit for bit
    let dt = ens.dt;
    for k in 0..nt - 1 {
        let t = times[k];
        let mut cross = Vec::with_capacity(n * d);
        for p in 0..n {
            cross.extend_from_slice(&states[(p * nt + k) * d..(p * nt + k) * d + d]);
        }
        let m = EmpiricalMeasure::uniform(cross, d)?;
        let next: Vec<Vec<f64>> = exec::map_indexed(n, |p| {
            let x = &states[(p * nt + k) * d..(p * nt + k) * d + d];
            let u = limit.controls.point(ens.control_at(p, k));
            let mut f = vec![0.0; d];
            limit.drift_into(t, x, &m, u, &mut f);
            (0..d).map(|a| x[a] + f[a] * dt).collect()
        });
        for (p, nx) in next.iter().enumerate() {
            states[(p * nt + k + 1) * d..(p * nt + k + 1) * d + d].copy_from_slice(nx);
        }
        measures.push(m);
    }
    let mut cross = Vec::with_capacity(n * d);
    for p in 0..n {
        cross.extend_from_slice(&states[(p * nt + nt - 1) * d..(p * nt + nt - 1) * d + d]);
    }
    measures.push(EmpiricalMeasure::uniform(cross, d)?);
    let flow = FlowOfProbabilities::new(grid, measures)?;
    Ok((states, flow))
}

/// One row of the convergence report.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub n: u32,
    /// Normalized generator distance plus initial-measure distance.
    pub eps: f64,
    /// `sup_t W2(zeta_n[t], mu*[t])`.
    pub sup_w2: f64,
    /// `sup |V_n - V*| / (1 + ||x||^2)` over grid nodes.
    pub value_err: f64,
    /// `max_t mean_p ||Y_p(t) - X_p(t)||^2` of the coupled pair.
    pub coupled_dist: f64,
    /// `sup_t W2^2(zeta_n[t], mu_n[t])` of the coupled flows.
    pub coupled_w2_sq: f64,
    /// `coupled_w2_sq / eps`.
    pub ratio_flow: f64,
    /// `coupled_dist / (eps * (1 + mean ||xi||^2))`.
    pub ratio_coupled: f64,
    /// `max_t varsigma^2(zeta_n[t])` against `C1`.
    pub moment_lhs: f64,
    pub c1: f64,
    pub c1_pass: bool,
    pub c3_pass: bool,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Two-seed baseline: largest sup-W2 / weighted value distance from a
    /// noiseless-member pipeline run to the minimax solution, i.e. the pure
    /// Monte-Carlo-plus-grid floor the rows cannot drop below.
    pub noise_floor_w2: f64,
    pub noise_floor_value: f64,
    /// Largest `ratio_flow` over rows (single fitted constant, no growth
    /// in n expected).
    pub fitted_flow_constant: f64,
    /// Largest `ratio_coupled` over rows.
    pub fitted_coupled_constant: f64,
    /// Wall-clock seconds per phase; kept out of the CSV so outputs stay
    /// byte-identical across runs.
    pub runtimes: Vec<(String, f64)>,
}

impl ConvergenceReport {
    /// CSV with a fixed column order; content is a pure function of the
    /// scenario and seeds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,eps,sup_w2,value_err,coupled_dist,coupled_w2_sq,ratio_flow,ratio_coupled,moment_lhs,c1,c1_pass,c3_pass,converged\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.eps,
                r.sup_w2,
                r.value_err,
                r.coupled_dist,
                r.coupled_w2_sq,
                r.ratio_flow,
                r.ratio_coupled,
                r.moment_lhs,
                r.c1,
                r.c1_pass,
                r.c3_pass,
                r.converged
            );
        }
        out
    }

    pub fn plot_series(&self, column: &str) -> Result<String> {
        let mut out = String::new();
        for r in &self.rows {
            let y = match column {
                "sup_w2" => r.sup_w2,
                "value_err" => r.value_err,
                "coupled_dist" => r.coupled_dist,
                "eps" => r.eps,
                other => {
                    return Err(MfgError::InvalidParameter(format!("unknown plot column '{other}'")))
                }
            };
            let _ = writeln!(out, "{} {}", r.n, y);
        }
        Ok(out)
    }
}

/// Deterministic sample points for epsilon estimation and growth audits:
/// initial-cloud states crossed with a few times and extreme controls,
/// against the initial measure.
pub fn audit_sample(spec: &GeneratorSpec, m0: &EmpiricalMeasure, horizon: f64) -> Vec<SamplePoint> {
    let mut sample = Vec::new();
    let n = m0.len();
    let xs: Vec<usize> = [0, n / 2, n - 1].into_iter().collect();
    let us: Vec<usize> = [0, spec.controls.len() / 2, spec.controls.len() - 1]
        .into_iter()
        .collect();
    for &i in &xs {
        for &t in &[0.0, horizon / 2.0, horizon] {
            for &ci in &us {
                sample.push(SamplePoint {
                    t,
                    x: m0.point(i).to_vec(),
                    m: m0.clone(),
                    u: spec.controls.point(ci).to_vec(),
                });
            }
        }
    }
    sample
}

/// Total closeness parameter of member `n`: the normalized generator
/// distance maximized with `W2^2(m0^n, m0)`.
pub fn epsilon_total(
    scenario: &Scenario,
    n: u32,
    limit: &GeneratorSpec,
    m0: &EmpiricalMeasure,
) -> Result<f64> {
    let spec_n = scenario.family_spec(n)?;
    let sample = audit_sample(limit, m0, scenario.scenario.horizon);
    let eps_gen = epsilon_estimate(std::slice::from_ref(&spec_n), limit, &sample)?[0];
    let m0n = scenario.initial_measure_n(n)?;
    let w2 = wasserstein2_auto(&m0n, m0)?;
    Ok(eps_gen.max(w2 * w2))
}

fn mean_sq_distance(
    ens: &PathEnsemble,
    coupled_states: &[f64],
) -> f64 {
    let n = ens.particles();
    let nt = ens.grid().len();
    let d = ens.dim();
    let mut worst = 0.0f64;
    for k in 0..nt {
        let mut acc = 0.0;
        for p in 0..n {
            let y = ens.state_at(p, k);
            let x = &coupled_states[(p * nt + k) * d..(p * nt + k) * d + d];
            acc += y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        worst = worst.max(acc / n as f64);
    }
    worst
}

/// Runs the full study: limit solve, two-seed noise floor, per-n solves and
/// couplings. When `out_dir` is given, writes the CSV, plot series and a
/// runtimes file there.
pub fn run_convergence_study(scenario: &Scenario, out_dir: Option<&Path>) -> Result<ConvergenceReport> {
    scenario.validate()?;
    let t0 = std::time::Instant::now();
    let limit = scenario.limit_spec()?;
    let m0 = scenario.initial_measure()?;
    let grid_cfg = scenario.grid_config()?;
    let iter = scenario.iter_config();
    let horizon = scenario.scenario.horizon;

    let minimax = solve_minimax_mfg(&limit, horizon, &m0, &grid_cfg, &iter)?;
    let mut runtimes = vec![("minimax".to_string(), t0.elapsed().as_secs_f64())];

    // two-seed noise floor: the degenerate (noiseless) family member run
    // through the same particle pipeline, measured against the minimax
    // solution exactly as the rows are. This captures both Monte-Carlo
    // sampling noise and the shared grid/scheme error; the max over the two
    // seeds is reported.
    let t1 = std::time::Instant::now();
    let (floor_w2, floor_val) = {
        let mut fw = 0.0f64;
        let mut fv = 0.0f64;
        for shift in 0..2u64 {
            let mut s_iter = iter;
            s_iter.seed = iter.seed.wrapping_add(shift);
            let s = solve_stochastic_mfg(&limit, horizon, &m0, &grid_cfg, &s_iter)?;
            fw = fw.max(s.flow.sup_distance(&minimax.flow)?);
            fv = fv.max(s.value.weighted_sup_distance(&minimax.value)?);
        }
        (fw, fv)
    };
    runtimes.push(("noise_floor".to_string(), t1.elapsed().as_secs_f64()));

    let mut rows = Vec::with_capacity(scenario.family.n_list.len());
    for &n in &scenario.family.n_list {
        let tn = std::time::Instant::now();
        let spec_n = scenario.family_spec(n)?;
        let m0n = scenario.initial_measure_n(n)?;
        let eps = epsilon_total(scenario, n, &limit, &m0)?;

        let mut iter_n = iter;
        iter_n.seed = iter.seed.wrapping_add(1000 + n as u64);
        let sol = solve_stochastic_mfg(&spec_n, horizon, &m0n, &grid_cfg, &iter_n)?;
        let ens = sol.ensemble.as_ref().expect("stochastic solver returns an ensemble");

        let sup_w2 = sol.flow.sup_distance(&minimax.flow)?;
        let value_err = sol.value.weighted_sup_distance(&minimax.value)?;

        let (coupled_states, mu_n) = coupled_ensemble(&limit, ens)?;
        let coupled_dist = mean_sq_distance(ens, &coupled_states);
        let coupled_w2 = sol.flow.sup_distance(&mu_n)?;
        let coupled_w2_sq = coupled_w2 * coupled_w2;

        let mean_xi_sq = sol.flow.at_index(0).second_moment();
        let ratio_flow = if eps > 0.0 { coupled_w2_sq / eps } else { 0.0 };
        let ratio_coupled =
            if eps > 0.0 { coupled_dist / (eps * (1.0 + mean_xi_sq)) } else { 0.0 };

        let m_growth = scenario.constants.m_growth;
        let c1 = c1_bound(m0n.second_moment(), m_growth, horizon);
        let c3 = c3_bound(m_growth, horizon, c1);
        let moment_lhs =
            sol.flow.measures().iter().map(|m| m.second_moment()).fold(0.0, f64::max);
        let margin = 1.1;
        let c1_pass = moment_lhs <= c1 * margin;
        let c3_pass = moment_lhs <= c3 * (1.0 + sol.flow.at_index(0).second_moment()) * margin;

        rows.push(ConvergenceRow {
            n,
            eps,
            sup_w2,
            value_err,
            coupled_dist,
            coupled_w2_sq,
            ratio_flow,
            ratio_coupled,
            moment_lhs,
            c1,
            c1_pass,
            c3_pass,
            converged: sol.diagnostics.converged,
        });
        runtimes.push((format!("n={n}"), tn.elapsed().as_secs_f64()));
    }

    let report = ConvergenceReport {
        fitted_flow_constant: rows.iter().map(|r| r.ratio_flow).fold(0.0, f64::max),
        fitted_coupled_constant: rows.iter().map(|r| r.ratio_coupled).fold(0.0, f64::max),
        rows,
        noise_floor_w2: floor_w2,
        noise_floor_value: floor_val,
        runtimes,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("convergence.csv"), report.to_csv())?;
        std::fs::write(dir.join("plot_w2.dat"), report.plot_series("sup_w2")?)?;
        std::fs::write(dir.join("plot_value.dat"), report.plot_series("value_err")?)?;
        std::fs::write(dir.join("plot_coupled.dat"), report.plot_series("coupled_dist")?)?;
        let mut diag = String::new();
        let _ = writeln!(diag, "noise_floor_w2 {}", report.noise_floor_w2);
        let _ = writeln!(diag, "noise_floor_value {}", report.noise_floor_value);
        let _ = writeln!(diag, "fitted_flow_constant {}", report.fitted_flow_constant);
        let _ = writeln!(diag, "fitted_coupled_constant {}", report.fitted_coupled_constant);
        for (name, secs) in &report.runtimes {
            let _ = writeln!(diag, "runtime {name} {secs:.3}");
        }
        // a final W2 entry that plateaus above the floor is reported, not
        // auto-resolved: it may be residual generator bias at the largest n
        // or convergence to a different limit point
        if let Some(last) = report.rows.last() {
            if last.sup_w2 > 3.0 * report.noise_floor_w2 {
                let _ = writeln!(
                    diag,
                    "open_diagnostic sup_w2 plateau {} above 3x noise floor {} at n {}",
                    last.sup_w2, report.noise_floor_w2, last.n
                );
            }
        }
        std::fs::write(dir.join("study_diagnostics.txt"), diag)?;
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct BoundsAudit {
    pub n: u32,
    pub eps: f64,
    pub c1: f64,
    pub c1_lhs: f64,
    pub c1_pass: bool,
    pub c3: f64,
    pub c3_lhs: f64,
    pub c3_pass: bool,
    pub c5: f64,
    pub c5_lhs: f64,
    pub c5_pass: bool,
    /// Empirical coupled-distance constant `coupled / (eps (1 + E||xi||^2))`;
    /// reported, compared against nothing explicit (fitted across n by the
    /// study).
    pub c6_fit: f64,
}

impl BoundsAudit {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n {}", self.n);
        let _ = writeln!(out, "eps {}", self.eps);
        let _ = writeln!(out, "c1 lhs {} bound {} pass {}", self.c1_lhs, self.c1, self.c1_pass);
        let _ = writeln!(out, "c3 lhs {} bound {} pass {}", self.c3_lhs, self.c3, self.c3_pass);
        let _ = writeln!(out, "c5 lhs {} bound {} pass {}", self.c5_lhs, self.c5, self.c5_pass);
        let _ = writeln!(out, "c6 fit {}", self.c6_fit);
        out
    }
}

/// Audits the explicit constants at one family member: moment bound,
/// conditional stability, flow-coupling bound and the coupled-distance fit.
/// Refuses when the declared growth constant fails the sampled audit.
pub fn run_bounds_audit(scenario: &Scenario, n: u32) -> Result<BoundsAudit> {
    scenario.validate()?;
    let limit = scenario.limit_spec()?;
    let m0 = scenario.initial_measure()?;
    let m0n = scenario.initial_measure_n(n)?;
    let spec_n = scenario.family_spec(n)?;
    let horizon = scenario.scenario.horizon;

    let sample = audit_sample(&spec_n, &m0n, horizon);
    growth_audit(&spec_n, scenario.constants.m_growth, &sample)?;

    let eps = epsilon_total(scenario, n, &limit, &m0)?;
    let grid_cfg = scenario.grid_config()?;
    let mut iter = scenario.iter_config();
    iter.seed = iter.seed.wrapping_add(1000 + n as u64);
    let sol = solve_stochastic_mfg(&spec_n, horizon, &m0n, &grid_cfg, &iter)?;
    let ens = sol.ensemble.as_ref().expect("stochastic solver returns an ensemble");

    let m_growth = scenario.constants.m_growth;
    let c1 = c1_bound(m0n.second_moment(), m_growth, horizon);
    let c1_lhs = sol.flow.measures().iter().map(|m| m.second_moment()).fold(0.0, f64::max);
    let c3 = c3_bound(m_growth, horizon, c1);
    let c3_lhs = c1_lhs / (1.0 + sol.flow.at_index(0).second_moment());

    let (coupled_states, mu_n) = coupled_ensemble(&limit, ens)?;
    let c2 = c1_bound(m0.second_moment(), m_growth, horizon);
    let c5 = c5_bound(m_growth, scenario.constants.k_lipschitz, horizon, c1, c2);
    let coupled_w2 = sol.flow.sup_distance(&mu_n)?;
    let c5_lhs = if eps > 0.0 { coupled_w2 * coupled_w2 / eps } else { 0.0 };

    let coupled_dist = mean_sq_distance(ens, &coupled_states);
    let mean_xi_sq = sol.flow.at_index(0).second_moment();
    let c6_fit = if eps > 0.0 { coupled_dist / (eps * (1.0 + mean_xi_sq)) } else { 0.0 };

    let margin = 1.1;
    Ok(BoundsAudit {
        n,
        eps,
        c1,
        c1_lhs,
        c1_pass: c1_lhs <= c1 * margin,
        c3,
        c3_lhs,
        c3_pass: c3_lhs <= c3 * margin,
        c5,
        c5_lhs,
        c5_pass: c5_lhs <= c5 * margin,
        c6_fit,
    })
}

/// Full stochastic solve of family member `n`, as used by the study.
pub fn solve_member(scenario: &Scenario, n: u32) -> Result<EquilibriumSolution> {
    let spec_n = scenario.family_spec(n)?;
    let m0n = scenario.initial_measure_n(n)?;
    let grid_cfg = scenario.grid_config()?;
    let mut iter = scenario.iter_config();
    iter.seed = iter.seed.wrapping_add(1000 + n as u64);
    solve_stochastic_mfg(&spec_n, scenario.scenario.horizon, &m0n, &grid_cfg, &iter)
}
