//! Particle simulation of controlled nonlinear Markov processes.
//!
//! The scheme is Euler-Maruyama for the diffusion part and Bernoulli
//! thinning for the finite-activity jump atoms, with the small-jump
//! compensator subtracted from the drift so the simulated process matches
//! the compensated generator. Coefficients see the flow `zeta` frozen at the
//! left node of each step. Every particle owns an independent counter-based
//! RNG stream derived from `(seed, particle index)`, so ensembles are
//! bit-identical regardless of thread count.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{PiecewiseControl, Trajectory};
use crate::error::{MfgError, Result};
use crate::exec;
use crate::generator::{apply_generator, GeneratorArgs, GeneratorSpec, TestFunction};
use crate::grid::TimeGrid;
use crate::measures::{EmpiricalMeasure, FlowOfProbabilities, PathMeasure};

/// Control rule used during simulation. Output is always an index into the
/// spec's control set.
#[derive(Clone)]
pub enum ControlPolicy {
    /// One fixed control for all times and states.
    Constant(usize),
    /// Open-loop piecewise-constant control, shared by all particles.
    OpenLoop(PiecewiseControl),
    /// Feedback rule `(t, x, m) -> control index`.
    Feedback(Arc<dyn Fn(f64, &[f64], &EmpiricalMeasure) -> usize + Send + Sync>),
}

impl std::fmt::Debug for ControlPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControlPolicy::Constant(i) => write!(f, "Constant({i})"),
            ControlPolicy::OpenLoop(_) => write!(f, "OpenLoop"),
            ControlPolicy::Feedback(_) => write!(f, "Feedback"),
        }
    }
}

impl ControlPolicy {
    fn index(&self, t: f64, x: &[f64], m: &EmpiricalMeasure) -> usize {
        match self {
            ControlPolicy::Constant(i) => *i,
            ControlPolicy::OpenLoop(pc) => {
                let times = pc.grid().times();
                // left interval containing t
                let mut i = match times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
                    Ok(i) => i,
                    Err(i) => i.saturating_sub(1),
                };
                if i + 1 >= times.len() {
                    i = times.len() - 2;
                }
                pc.index_at(i)
            }
            ControlPolicy::Feedback(f) => f(t, x, m),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub particles: usize,
    pub dt: f64,
    pub seed: u64,
    /// Simulation starts at the grid node nearest this time; earlier nodes
    /// hold the initial state with zero payoff.
    pub start_time: f64,
}

impl SimConfig {
    pub fn new(particles: usize, dt: f64, seed: u64) -> Self {
        Self { particles, dt, seed, start_time: 0.0 }
    }
}

/// Simulated ensemble: states, accumulated payoffs, realized controls and
/// jump flags at every node of a uniform grid, stored particle-major.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    grid: TimeGrid,
    dim: usize,
    particles: usize,
    states: Vec<f64>,   // particles * nt * dim
    payoffs: Vec<f64>,  // particles * nt
    controls: Vec<u32>, // particles * (nt - 1)
    jumps: Vec<u8>,     // particles * (nt - 1), 1 if any atom fired
    pub seed: u64,
    pub dt: f64,
    start_index: usize,
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn state_at(&self, particle: usize, node: usize) -> &[f64] {
        let nt = self.grid.len();
        let base = (particle * nt + node) * self.dim;
        &self.states[base..base + self.dim]
    }

    pub fn payoff_at(&self, particle: usize, node: usize) -> f64 {
        self.payoffs[particle * self.grid.len() + node]
    }

    pub fn control_at(&self, particle: usize, interval: usize) -> usize {
        self.controls[particle * (self.grid.len() - 1) + interval] as usize
    }

    pub fn jumped_at(&self, particle: usize, interval: usize) -> bool {
        self.jumps[particle * (self.grid.len() - 1) + interval] != 0
    }

    /// Initial states as an empirical measure (uniform weights).
    pub fn initial_measure(&self) -> Result<EmpiricalMeasure> {
        self.measure_at(self.start_index)
    }

    /// Cross-section of the ensemble at a node, uniform weights.
    pub fn measure_at(&self, node: usize) -> Result<EmpiricalMeasure> {
        let mut pts = Vec::with_capacity(self.particles * self.dim);
        for p in 0..self.particles {
            pts.extend_from_slice(self.state_at(p, node));
        }
        EmpiricalMeasure::uniform(pts, self.dim)
    }

    /// The ensemble as a path measure over `(x, z)` trajectories.
    pub fn to_path_measure(&self) -> Result<PathMeasure> {
        let nt = self.grid.len();
        let trajs = (0..self.particles)
            .map(|p| {
                let x = self.states[p * nt * self.dim..(p + 1) * nt * self.dim].to_vec();
                let z = self.payoffs[p * nt..(p + 1) * nt].to_vec();
                Trajectory::new(self.grid.clone(), self.dim, x, z, self.start_index)
            })
            .collect::<Result<Vec<_>>>()?;
        PathMeasure::uniform(trajs)
    }
}

/// Lower Cholesky factor of a symmetric PSD matrix, d <= 3; tiny negative
/// pivots are clamped to zero.
fn cholesky(g: &[f64], d: usize, out: &mut [f64]) -> Result<()> {
    out.fill(0.0);
    for i in 0..d {
        for j in 0..=i {
            let mut sum = g[i * d + j];
            for k in 0..j {
                sum -= out[i * d + k] * out[j * d + k];
            }
            if i == j {
                if sum < -1e-10 {
                    return Err(MfgError::NonPsdDiffusion);
                }
                out[i * d + i] = sum.max(0.0).sqrt();
            } else if out[j * d + j] > 0.0 {
                out[i * d + j] = sum / out[j * d + j];
            }
        }
    }
    Ok(())
}

/// Index of the zeta node at or immediately left of time `t`.
fn left_node(times: &[f64], t: f64) -> usize {
    let slack = 1e-9;
    match times.binary_search_by(|v| v.partial_cmp(&(t + slack)).unwrap()) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    }
}

/// Simulates `config.particles` independent particles of the controlled
/// process for generator `spec` against the frozen flow `zeta`, starting
/// from draws of `m0`.
pub fn simulate(
    spec: &GeneratorSpec,
    policy: &ControlPolicy,
    zeta: &FlowOfProbabilities,
    m0: &EmpiricalMeasure,
    config: &SimConfig,
) -> Result<PathEnsemble> {
    let d = spec.dim;
    if m0.dim() != d || zeta.dim() != d {
        return Err(MfgError::DimensionMismatch(m0.dim(), d));
    }
    if config.particles == 0 {
        return Err(MfgError::InvalidParameter("particle count must be >= 1".into()));
    }
    let horizon = zeta.grid().horizon();
    let steps = (horizon / config.dt).round() as usize;
    if steps == 0 || (horizon / steps as f64 - config.dt).abs() > 1e-9 * config.dt.max(1e-12) {
        return Err(MfgError::InvalidParameter(format!(
            "dt = {} must divide the horizon {}",
            config.dt, horizon
        )));
    }
    // dt must refine the zeta grid spacing
    for w in zeta.grid().times().windows(2) {
        let ratio = (w[1] - w[0]) / config.dt;
        if (ratio - ratio.round()).abs() > 1e-6 || ratio < 1.0 - 1e-9 {
            return Err(MfgError::InvalidParameter(
                "dt must divide the flow grid spacing".into(),
            ));
        }
    }
    let grid = TimeGrid::uniform(horizon, steps)?;
    let start = grid.nearest(config.start_time)?;
    let nt = grid.len();
    let times: Vec<f64> = grid.times().to_vec();
    let zeta_times = zeta.grid().times();
    let zeta_idx: Vec<usize> = times.iter().map(|&t| left_node(zeta_times, t)).collect();

    // weight CDF of the initial measure
    let cdf: Vec<f64> = {
        let mut acc = 0.0;
        m0.weights()
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    };

    struct ParticleOut {
        x: Vec<f64>,
        z: Vec<f64>,
        u: Vec<u32>,
        j: Vec<u8>,
        err: Option<MfgError>,
    }

    let seed = config.seed;
    let dt = config.dt;
    let per: Vec<ParticleOut> = exec::map_indexed(config.particles, |p| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64 + 1);

        let mut x = vec![0.0; nt * d];
        let mut z = vec![0.0; nt];
        let mut u_rec = vec![0u32; nt - 1];
        let mut j_rec = vec![0u8; nt - 1];

        // inverse-CDF draw of the initial state
        let r: f64 = rng.gen();
        let idx = match cdf.binary_search_by(|c| c.partial_cmp(&r).unwrap()) {
            Ok(i) => (i + 1).min(m0.len() - 1),
            Err(i) => i.min(m0.len() - 1),
        };
        let xi = m0.point(idx);
        for i in 0..=start {
            x[i * d..(i + 1) * d].copy_from_slice(xi);
        }

        let mut drift = vec![0.0; d];
        let mut comp = vec![0.0; d];
        let mut gmat = vec![0.0; d * d];
        let mut chol = vec![0.0; d * d];
        let mut y = vec![0.0; d];
        let mut cur = xi.to_vec();
        let mut err = None;

        'steps: for k in start..nt - 1 {
            let t = times[k];
            let m = zeta.at_index(zeta_idx[k]);
            let ui = policy.index(t, &cur, m);
            let u = spec.controls.point(ui);
            u_rec[k] = ui as u32;

            z[k + 1] = z[k] + dt * spec.running_payoff(t, &cur, m, u);

            spec.drift_into(t, &cur, m, u, &mut drift);
            crate::generator::small_jump_compensator(spec, t, &cur, m, u, &mut comp);
            for i in 0..d {
                cur[i] += (drift[i] - comp[i]) * dt;
            }
            if spec.diffusion.is_some() {
                spec.diffusion_into(t, &cur, m, u, &mut gmat);
                if let Err(e) = cholesky(&gmat, d, &mut chol) {
                    err = Some(e);
                    break 'steps;
                }
                let sdt = dt.sqrt();
                let gauss: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                for i in 0..d {
                    let mut inc = 0.0;
                    for kk in 0..=i {
                        inc += chol[i * d + kk] * gauss[kk];
                    }
                    cur[i] += sdt * inc;
                }
            }
            for atom in &spec.jumps {
                let rate = atom(t, &cur, m, u, &mut y);
                let prob = rate * dt;
                if prob > 0.5 {
                    err = Some(MfgError::StepTooCoarse(prob));
                    break 'steps;
                }
                let r: f64 = rng.gen();
                if r < prob {
                    for i in 0..d {
                        cur[i] += y[i];
                    }
                    j_rec[k] = 1;
                }
            }
            if cur.iter().any(|v| !v.is_finite()) {
                err = Some(MfgError::NonFinite("simulated state".into()));
                break 'steps;
            }
            x[(k + 1) * d..(k + 2) * d].copy_from_slice(&cur);
        }
        ParticleOut { x, z, u: u_rec, j: j_rec, err }
    });

    let mut states = Vec::with_capacity(config.particles * nt * d);
    let mut payoffs = Vec::with_capacity(config.particles * nt);
    let mut controls = Vec::with_capacity(config.particles * (nt - 1));
    let mut jumps = Vec::with_capacity(config.particles * (nt - 1));
    for p in per {
        if let Some(e) = p.err {
            return Err(e);
        }
        states.extend_from_slice(&p.x);
        payoffs.extend_from_slice(&p.z);
        controls.extend_from_slice(&p.u);
        jumps.extend_from_slice(&p.j);
    }

    Ok(PathEnsemble {
        grid,
        dim: d,
        particles: config.particles,
        states,
        payoffs,
        controls,
        jumps,
        seed,
        dt,
        start_index: start,
    })
}

/// Empirical law of the ensemble at the nodes of `coarse` (which must be a
/// subset of the simulation grid), uniform weights.
pub fn empirical_flow(ens: &PathEnsemble, coarse: &TimeGrid) -> Result<FlowOfProbabilities> {
    let sim_times = ens.grid().times();
    let measures = coarse
        .times()
        .iter()
        .map(|&t| {
            let i = ens.grid().nearest(t)?;
            if (sim_times[i] - t).abs() > 1e-9 * ens.grid().horizon().max(1.0) {
                return Err(MfgError::GridMismatch);
            }
            ens.measure_at(i)
        })
        .collect::<Result<Vec<_>>>()?;
    FlowOfProbabilities::new(coarse.clone(), measures)
}

#[derive(Clone, Copy, Debug)]
pub struct Residual {
    pub mean: f64,
    pub std_err: f64,
}

/// Mean and standard error over particles of the martingale residual
/// `phi(Y(t)) - phi(Y(s)) - int_s^t L phi(Y) dtau`, the time integral taken
/// by the trapezoid rule along each simulated path with the realized
/// controls.
pub fn martingale_residual(
    ens: &PathEnsemble,
    spec: &GeneratorSpec,
    zeta: &FlowOfProbabilities,
    phi: &TestFunction,
    s: f64,
    t: f64,
) -> Result<Residual> {
    if s >= t {
        return Err(MfgError::InvalidParameter("need s < t".into()));
    }
    let is = ens.grid().nearest(s)?;
    let it = ens.grid().nearest(t)?;
    let times = ens.grid().times();
    let zeta_times = zeta.grid().times();
    let eval_phi = |x: &[f64]| -> Result<f64> {
        match phi {
            TestFunction::Linear(xi) => Ok(crate::generator::dot(x, xi)),
            TestFunction::ShiftedQuadratic(xi) => {
                Ok(x.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum())
            }
            _ => Err(MfgError::UnsupportedTestFunction),
        }
    };
    // reject unsupported kinds up front
    eval_phi(ens.state_at(0, 0))?;

    let residuals: Vec<f64> = exec::map_indexed(ens.particles(), |p| {
        let mut integral = 0.0;
        for k in is..it {
            let dt = times[k + 1] - times[k];
            let m = zeta.at_index(left_node(zeta_times, times[k]));
            let u = spec.controls.point(ens.control_at(p, k));
            let l_left = apply_generator(
                spec,
                phi,
                &GeneratorArgs { t: times[k], x1: ens.state_at(p, k), x2: None, x3: None, m, u },
            )
            .unwrap();
            let l_right = apply_generator(
                spec,
                phi,
                &GeneratorArgs { t: times[k + 1], x1: ens.state_at(p, k + 1), x2: None, x3: None, m, u },
            )
            .unwrap();
            integral += 0.5 * dt * (l_left + l_right);
        }
        let phi_t = eval_phi(ens.state_at(p, it)).unwrap();
        let phi_s = eval_phi(ens.state_at(p, is)).unwrap();
        phi_t - phi_s - integral
    });

    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(Residual { mean, std_err: (var / n).sqrt() })
}
