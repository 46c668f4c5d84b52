//! Fixed-point equilibrium solvers.
//!
//! Both solvers run the same damped Picard loop: solve the backward value
//! problem against the current flow, extract the greedy feedback, propagate
//! the population under that feedback, and average the new empirical flow
//! into the old one with weight `beta`. The deterministic solver propagates
//! the initial cloud exactly and keeps the trajectory measure `chi` (with
//! accumulated payoffs) so the along-path optimality identity can be checked
//! without re-integration; the stochastic solver simulates particles with a
//! fixed seed each iteration, so the sampled initial cloud is identical
//! across iterations and equals the flow at time zero.

use std::sync::Arc;

use crate::dynamics::Trajectory;
use crate::error::{MfgError, Result};
use crate::exec;
use crate::generator::GeneratorSpec;
use crate::grid::TimeGrid;
use crate::measures::{
    pushforward_at, pushforward_flow, wasserstein2_auto, EmpiricalMeasure, FlowOfProbabilities,
    PathMeasure,
};
use crate::simulator::{empirical_flow, simulate, ControlPolicy, PathEnsemble, SimConfig};
use crate::value::{
    check_deviation, expected_payoff, extract_policy, solve_deterministic_value,
    solve_stochastic_value, GridConfig, ValueGrid,
};

#[derive(Clone, Copy, Debug)]
pub struct IterConfig {
    pub max_iter: usize,
    /// Averaging weight of the new flow iterate, in (0, 1].
    pub damping: f64,
    /// Stop once the sup-W2 flow increment falls below this.
    pub tol: f64,
    pub particles: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    /// Sup-W2 flow increment per iteration.
    pub increments: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct EquilibriumSolution {
    pub value: ValueGrid,
    pub flow: FlowOfProbabilities,
    /// Trajectory measure with payoff components; deterministic solver only.
    pub traj_measure: Option<PathMeasure>,
    /// Final best-response ensemble; stochastic solver only.
    pub ensemble: Option<PathEnsemble>,
    /// The initial measure handed to the solver.
    pub m0: EmpiricalMeasure,
    pub diagnostics: Diagnostics,
}

fn validate_iter(iter: &IterConfig) -> Result<()> {
    if !(iter.damping > 0.0 && iter.damping <= 1.0) {
        return Err(MfgError::InvalidParameter("damping must lie in (0, 1]".into()));
    }
    if iter.max_iter == 0 {
        return Err(MfgError::InvalidParameter("max_iter must be >= 1".into()));
    }
    Ok(())
}

/// Deterministic stride selection of `k` out of `n` indices, spread evenly.
fn stride_select(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| i * n / k).collect()
}

/// Damped mixture of two flows of uniform equal-count clouds: per node,
/// `(1 - beta)` of the particles are kept from `old` and `beta` taken from
/// `new`, both by stride selection, preserving the count.
fn mix_flows(
    old: &FlowOfProbabilities,
    new: &FlowOfProbabilities,
    beta: f64,
) -> Result<FlowOfProbabilities> {
    if !old.grid().same_grid(new.grid()) {
        return Err(MfgError::GridMismatch);
    }
    let d = old.dim();
    let measures = old
        .measures()
        .iter()
        .zip(new.measures())
        .map(|(a, b)| {
            if a.len() != b.len() {
                return Err(MfgError::UnequalCounts(a.len(), b.len()));
            }
            let n = a.len();
            let k_new = ((beta * n as f64).round() as usize).min(n);
            // replace a stride-selected subset of old particles in place, so
            // mixing a flow with itself is the identity
            let mut take_new = vec![false; n];
            for i in stride_select(n, k_new) {
                take_new[i] = true;
            }
            let mut pts = Vec::with_capacity(n * d);
            for i in 0..n {
                pts.extend_from_slice(if take_new[i] { b.point(i) } else { a.point(i) });
            }
            EmpiricalMeasure::uniform(pts, d)
        })
        .collect::<Result<Vec<_>>>()?;
    FlowOfProbabilities::new(old.grid().clone(), measures)
}

fn sup_increment(a: &FlowOfProbabilities, b: &FlowOfProbabilities) -> Result<f64> {
    a.sup_distance(b)
}

/// Probabilistic equilibrium: damped Picard over (value solve, feedback
/// extraction, particle simulation). The final iterate's best-response
/// ensemble and its empirical flow are returned.
pub fn solve_stochastic_mfg(
    spec: &GeneratorSpec,
    horizon: f64,
    m0: &EmpiricalMeasure,
    grid_config: &GridConfig,
    iter: &IterConfig,
) -> Result<EquilibriumSolution> {
    validate_iter(iter)?;
    if horizon <= 0.0 {
        return Err(MfgError::InvalidParameter("horizon must be positive".into()));
    }
    let steps = (horizon / iter.dt).round() as usize;
    let grid = TimeGrid::uniform(horizon, steps.max(1))?;
    let sim_cfg = SimConfig::new(iter.particles, grid.times()[1] - grid.times()[0], iter.seed);

    // free-flow start: population under the smallest-norm constant control
    let free = ControlPolicy::Constant(spec.controls.smallest_norm_index());
    let mut zeta = {
        let warm = FlowOfProbabilities::constant(grid.clone(), m0.clone());
        let ens = simulate(spec, &free, &warm, m0, &sim_cfg)?;
        empirical_flow(&ens, &grid)?
    };

    let mut diag = Diagnostics::default();
    let mut converged = false;
    for _ in 0..iter.max_iter {
        let value = Arc::new(solve_stochastic_value(spec, &zeta, grid_config)?);
        let policy = extract_policy(value, spec);
        let ens = simulate(spec, &policy, &zeta, m0, &sim_cfg)?;
        let eta = empirical_flow(&ens, &grid)?;
        let next = mix_flows(&zeta, &eta, iter.damping)?;
        let inc = sup_increment(&next, &zeta)?;
        diag.increments.push(inc);
        diag.iterations += 1;
        zeta = next;
        if inc < iter.tol {
            converged = true;
            break;
        }
    }
    diag.converged = converged;
    if !converged {
        diag.notes.push(format!(
            "flow increment {:.3e} above tol {:.3e} after {} iterations",
            diag.increments.last().copied().unwrap_or(f64::NAN),
            iter.tol,
            diag.iterations
        ));
    }

    // final best response against the converged flow
    let value = Arc::new(solve_stochastic_value(spec, &zeta, grid_config)?);
    let policy = extract_policy(value.clone(), spec);
    let ens = simulate(spec, &policy, &zeta, m0, &sim_cfg)?;
    let flow = empirical_flow(&ens, &grid)?;
    diag.notes.push(format!(
        "best-response flow distance to fixed point: {:.3e}",
        sup_increment(&flow, &zeta)?
    ));

    Ok(EquilibriumSolution {
        value: Arc::try_unwrap(value).unwrap_or_else(|v| (*v).clone()),
        flow,
        traj_measure: None,
        ensemble: Some(ens),
        m0: m0.clone(),
        diagnostics: diag,
    })
}

/// Euler integration of one particle under a feedback policy, with the
/// running payoff accumulated left-point to match the backward sweep.
fn integrate_feedback(
    spec: &GeneratorSpec,
    mu: &FlowOfProbabilities,
    policy: &ControlPolicy,
    xi: &[f64],
) -> Result<Trajectory> {
    let grid = mu.grid().clone();
    let nt = grid.len();
    let times = grid.times();
    let d = spec.dim;
    let mut x = vec![0.0; nt * d];
    let mut z = vec![0.0; nt];
    x[..d].copy_from_slice(xi);
    let mut f = vec![0.0; d];
    let mut cur = xi.to_vec();
    for k in 0..nt - 1 {
        let t = times[k];
        let dt = times[k + 1] - t;
        let m = mu.at_index(k);
        let ui = match policy {
            ControlPolicy::Feedback(p) => p(t, &cur, m),
            ControlPolicy::Constant(i) => *i,
            ControlPolicy::OpenLoop(_) => {
                return Err(MfgError::InvalidParameter(
                    "open-loop control not supported here".into(),
                ))
            }
        };
        let u = spec.controls.point(ui);
        z[k + 1] = z[k] + dt * spec.running_payoff(t, &cur, m, u);
        spec.drift_into(t, &cur, m, u, &mut f);
        for a in 0..d {
            cur[a] += dt * f[a];
        }
        x[(k + 1) * d..(k + 2) * d].copy_from_slice(&cur);
    }
    Trajectory::new(grid, d, x, z, 0)
}

/// Deterministic (minimax) equilibrium: the initial cloud's particles are
/// propagated under the greedy feedback; the returned flow is exactly the
/// node-wise pushforward of the returned trajectory measure.
pub fn solve_minimax_mfg(
    spec: &GeneratorSpec,
    horizon: f64,
    m0: &EmpiricalMeasure,
    grid_config: &GridConfig,
    iter: &IterConfig,
) -> Result<EquilibriumSolution> {
    validate_iter(iter)?;
    if !spec.is_deterministic() {
        return Err(MfgError::InvalidParameter(
            "minimax solver requires a noiseless generator".into(),
        ));
    }
    if !m0.is_uniform() {
        return Err(MfgError::InvalidWeights(
            "minimax solver requires a uniform initial cloud".into(),
        ));
    }
    let steps = (horizon / iter.dt).round() as usize;
    let grid = TimeGrid::uniform(horizon, steps.max(1))?;
    let n = m0.len();

    let propagate = |mu: &FlowOfProbabilities, policy: &ControlPolicy| -> Result<PathMeasure> {
        let trajs = exec::map_indexed(n, |i| integrate_feedback(spec, mu, policy, m0.point(i)));
        PathMeasure::uniform(trajs.into_iter().collect::<Result<Vec<_>>>()?)
    };

    // free-flow start
    let free = ControlPolicy::Constant(spec.controls.smallest_norm_index());
    let mut mu = {
        let warm = FlowOfProbabilities::constant(grid.clone(), m0.clone());
        pushforward_flow(&propagate(&warm, &free)?)?
    };

    let mut diag = Diagnostics::default();
    let mut converged = false;
    for _ in 0..iter.max_iter {
        let value = Arc::new(solve_deterministic_value(spec, &mu, grid_config)?);
        let policy = extract_policy(value, spec);
        let chi = propagate(&mu, &policy)?;
        let eta = pushforward_flow(&chi)?;
        let next = mix_flows(&mu, &eta, iter.damping)?;
        let inc = sup_increment(&next, &mu)?;
        diag.increments.push(inc);
        diag.iterations += 1;
        mu = next;
        if inc < iter.tol {
            converged = true;
            break;
        }
    }
    diag.converged = converged;
    if !converged {
        diag.notes.push(format!(
            "flow increment {:.3e} above tol {:.3e} after {} iterations",
            diag.increments.last().copied().unwrap_or(f64::NAN),
            iter.tol,
            diag.iterations
        ));
    }

    // final pass: chi against the converged flow; output flow = pushforward
    let value = Arc::new(solve_deterministic_value(spec, &mu, grid_config)?);
    let policy = extract_policy(value.clone(), spec);
    let chi = propagate(&mu, &policy)?;
    let flow = pushforward_flow(&chi)?;
    diag.notes.push(format!(
        "best-response flow distance to fixed point: {:.3e}",
        sup_increment(&flow, &mu)?
    ));

    Ok(EquilibriumSolution {
        value: Arc::try_unwrap(value).unwrap_or_else(|v| (*v).clone()),
        flow,
        traj_measure: Some(chi),
        ensemble: None,
        m0: m0.clone(),
        diagnostics: diag,
    })
}

#[derive(Clone, Debug)]
pub struct MinimaxReport {
    /// `W2(flow[0], m0)`.
    pub initial_gap: f64,
    /// `max_t W2(flow[t], pushforward of chi at t)`.
    pub pushforward_gap: f64,
    /// Max over chi-paths and grid times `s` of
    /// `|V(s, x(s)) - (sigma(x(T), flow[T]) + z(T) - z(s))|`.
    pub support_residual: f64,
    pub pass: bool,
}

/// Checks the deterministic solution: initial condition, marginal
/// consistency, and the along-path optimality identity on the support of
/// `chi`.
pub fn verify_minimax(sol: &EquilibriumSolution, spec: &GeneratorSpec, tol: f64) -> Result<MinimaxReport> {
    let chi = sol
        .traj_measure
        .as_ref()
        .ok_or_else(|| MfgError::InvalidParameter("deterministic solution required".into()))?;
    let initial_gap = wasserstein2_auto(sol.flow.at_index(0), &sol.m0)?;
    let times: Vec<f64> = sol.flow.grid().times().to_vec();
    let mut pushforward_gap = 0.0f64;
    for (k, &t) in times.iter().enumerate() {
        let marginal = pushforward_at(chi, t)?;
        pushforward_gap = pushforward_gap.max(wasserstein2_auto(sol.flow.at_index(k), &marginal)?);
    }
    let last = times.len() - 1;
    let m_t = sol.flow.at_index(last);
    let residuals: Vec<f64> = exec::map_indexed(chi.len(), |i| {
        let traj = &chi.trajectories()[i];
        let total = spec.terminal_payoff(traj.state_at(last), m_t) + traj.payoff_at(last);
        let mut worst = 0.0f64;
        for (k, &s) in times.iter().enumerate() {
            let v = sol.value.evaluate(s, traj.state_at(k)).unwrap_or(f64::NAN);
            worst = worst.max((v - (total - traj.payoff_at(k))).abs());
        }
        worst
    });
    let support_residual = residuals.into_iter().fold(0.0, f64::max);
    let pass = initial_gap <= tol && pushforward_gap <= tol && support_residual <= tol;
    Ok(MinimaxReport { initial_gap, pushforward_gap, support_residual, pass })
}

#[derive(Clone, Debug)]
pub struct ProbabilisticReport {
    /// Max over sampled starts of |Monte-Carlo payoff under the extracted
    /// policy - V(0, xi)|.
    pub value_gap: f64,
    pub value_std_err: f64,
    /// Sup-W2 between the stored flow and a fresh re-simulation against it.
    pub flow_gap: f64,
    /// Max deviation-inequality gap over the policy dictionary.
    pub deviation_gap: f64,
    pub deviation_std_err: f64,
    pub pass: bool,
}

/// Checks the stochastic solution: achieved value, flow consistency, and
/// the no-profitable-deviation inequality over a policy dictionary.
pub fn verify_probabilistic(
    sol: &EquilibriumSolution,
    spec: &GeneratorSpec,
    policies: &[ControlPolicy],
    starts: &[(f64, Vec<f64>)],
    payoff_particles: usize,
    tol: f64,
) -> Result<ProbabilisticReport> {
    let ens = sol
        .ensemble
        .as_ref()
        .ok_or_else(|| MfgError::InvalidParameter("stochastic solution required".into()))?;
    let value = Arc::new(sol.value.clone());
    let policy = extract_policy(value, spec);
    let cfg = SimConfig::new(payoff_particles, ens.dt, ens.seed);

    let mut value_gap = 0.0f64;
    let mut value_se = 0.0f64;
    for (s, xi) in starts {
        let (payoff, se) = expected_payoff(spec, &policy, &sol.flow, *s, xi, &cfg)?;
        value_gap = value_gap.max((payoff - sol.value.evaluate(*s, xi)?).abs());
        value_se = value_se.max(se);
    }

    let resim = simulate(spec, &policy, &sol.flow, &sol.m0, &SimConfig::new(ens.particles(), ens.dt, ens.seed))?;
    let resim_flow = empirical_flow(&resim, sol.flow.grid())?;
    let flow_gap = sol.flow.sup_distance(&resim_flow)?;

    let dev = check_deviation(&sol.value, spec, &sol.flow, policies, starts, &cfg)?;

    let pass = value_gap <= tol + 3.0 * value_se
        && flow_gap <= tol
        && dev.max_gap <= tol + 3.0 * dev.max_std_err;
    Ok(ProbabilisticReport {
        value_gap,
        value_std_err: value_se,
        flow_gap,
        deviation_gap: dev.max_gap,
        deviation_std_err: dev.max_std_err,
        pass,
    })
}

/// Policy dictionary for deviation testing: all constant controls first,
/// then seeded random open-loop controls on the given grid.
pub fn policy_dictionary(
    spec: &GeneratorSpec,
    grid: &TimeGrid,
    count: usize,
    seed: u64,
) -> Result<Vec<ControlPolicy>> {
    use rand::Rng;
    use rand::SeedableRng;
    if count == 0 {
        return Err(MfgError::InvalidParameter("dictionary must be nonempty".into()));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..spec.controls.len().min(count) {
        out.push(ControlPolicy::Constant(i));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    while out.len() < count {
        let values: Vec<usize> =
            (0..grid.len() - 1).map(|_| rng.gen_range(0..spec.controls.len())).collect();
        out.push(ControlPolicy::OpenLoop(crate::dynamics::PiecewiseControl::new(
            grid.clone(),
            values,
        )?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
