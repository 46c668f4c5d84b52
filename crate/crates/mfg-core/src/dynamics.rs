//! Deterministic characteristics of the limiting game: controlled ODE
//! integration with payoff accumulation, the Hamiltonian
//! `H(t, x, m, p) = max_u [<p, f> + g]` and its argmax, and reachable
//! trajectory clouds generated by piecewise-constant controls.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MfgError, Result};
use crate::generator::{dot, GeneratorSpec};
use crate::grid::TimeGrid;
use crate::measures::{EmpiricalMeasure, FlowOfProbabilities};

/// Discretized element of `C([0, T], R^{d+1})`: state path `x` and
/// accumulated payoff `z`, with `z = 0` at the start node.
#[derive(Clone, Debug)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    x: Vec<f64>, // nt * dim
    z: Vec<f64>, // nt
    start_index: usize,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, dim: usize, x: Vec<f64>, z: Vec<f64>, start_index: usize) -> Result<Self> {
        let nt = grid.len();
        if x.len() != nt * dim || z.len() != nt {
            return Err(MfgError::DimensionMismatch(x.len(), nt * dim));
        }
        if start_index >= nt {
            return Err(MfgError::InvalidParameter("start index outside grid".into()));
        }
        if z[start_index].abs() > 1e-12 {
            return Err(MfgError::InvalidParameter("payoff must vanish at the start node".into()));
        }
        if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("trajectory".into()));
        }
        Ok(Self { grid, dim, x, z, start_index })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn state_at(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn payoff_at(&self, i: usize) -> f64 {
        self.z[i]
    }

    /// `sup_t ||x(t)||`.
    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| crate::measures::norm(self.state_at(i)))
            .fold(0.0, f64::max)
    }
}

/// Piecewise-constant control: one control-set index per grid interval.
#[derive(Clone, Debug)]
pub struct PiecewiseControl {
    grid: TimeGrid,
    values: Vec<usize>, // len = nt - 1
}

impl PiecewiseControl {
    pub fn new(grid: TimeGrid, values: Vec<usize>) -> Result<Self> {
        if values.len() + 1 != grid.len() {
            return Err(MfgError::DimensionMismatch(values.len() + 1, grid.len()));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, index: usize) -> Self {
        let n = grid.len() - 1;
        Self { grid, values: vec![index; n] }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn index_at(&self, interval: usize) -> usize {
        self.values[interval]
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }
}

/// `H(t, x, m, p) = max { <p, f(t,x,m,u)> + g(t,x,m,u) : u in U }`.
pub fn hamiltonian(spec: &GeneratorSpec, t: f64, x: &[f64], m: &EmpiricalMeasure, p: &[f64]) -> f64 {
    let mut f = vec![0.0; spec.dim];
    let mut best = f64::NEG_INFINITY;
    for u in spec.controls.iter() {
        spec.drift_into(t, x, m, u, &mut f);
        let v = dot(p, &f) + spec.running_payoff(t, x, m, u);
        if v > best {
            best = v;
        }
    }
    best
}

/// Maximizer of `<p, f> + g` over the control set; ties broken by the lowest
/// enumeration index. Returns the control index.
pub fn argmax_control(spec: &GeneratorSpec, t: f64, x: &[f64], m: &EmpiricalMeasure, p: &[f64]) -> usize {
    let mut f = vec![0.0; spec.dim];
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0;
    for (i, u) in spec.controls.iter().enumerate() {
        spec.drift_into(t, x, m, u, &mut f);
        let v = dot(p, &f) + spec.running_payoff(t, x, m, u);
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    best_idx
}

/// One RK4 step of `dx/dt = f(t, x, m, u)` with `m` and `u` held fixed.
pub(crate) fn rk4_step(
    spec: &GeneratorSpec,
    t: f64,
    dt: f64,
    x: &[f64],
    m: &EmpiricalMeasure,
    u: &[f64],
) -> Vec<f64> {
    let d = x.len();
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    spec.drift_into(t, x, m, u, &mut k1);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    spec.drift_into(t + 0.5 * dt, &tmp, m, u, &mut k2);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    spec.drift_into(t + 0.5 * dt, &tmp, m, u, &mut k3);
    for i in 0..d {
        tmp[i] = x[i] + dt * k3[i];
    }
    spec.drift_into(t + dt, &tmp, m, u, &mut k4);
    (0..d)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates `dx/dt = f(t, x, mu[t], v(t))` from `(s, xi)` by RK4 on the
/// flow grid, with `mu` held per node and the payoff accumulated by the
/// trapezoid rule. Nodes before the start carry the initial state with zero
/// payoff.
pub fn integrate_characteristic(
    spec: &GeneratorSpec,
    mu: &FlowOfProbabilities,
    s: f64,
    xi: &[f64],
    v: &PiecewiseControl,
) -> Result<Trajectory> {
    if !mu.grid().same_grid(v.grid()) {
        return Err(MfgError::GridMismatch);
    }
    if xi.len() != spec.dim {
        return Err(MfgError::DimensionMismatch(xi.len(), spec.dim));
    }
    let grid = mu.grid().clone();
    let start = grid.nearest(s)?;
    let nt = grid.len();
    let times = grid.times();
    let d = spec.dim;

    let mut x = vec![0.0; nt * d];
    let mut z = vec![0.0; nt];
    for i in 0..=start {
        x[i * d..(i + 1) * d].copy_from_slice(xi);
    }
    for i in start..nt - 1 {
        let t = times[i];
        let dt = times[i + 1] - t;
        let m = mu.at_index(i);
        let u = spec.controls.point(v.index_at(i));
        let cur = x[i * d..(i + 1) * d].to_vec();
        let next = rk4_step(spec, t, dt, &cur, m, u);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("characteristic state".into()));
        }
        let g_left = spec.running_payoff(t, &cur, m, u);
        let g_right = spec.running_payoff(times[i + 1], &next, m, u);
        z[i + 1] = z[i] + 0.5 * dt * (g_left + g_right);
        x[(i + 1) * d..(i + 2) * d].copy_from_slice(&next);
    }
    Trajectory::new(grid, d, x, z, start)
}

/// A deterministic dictionary of trajectories from `(s, xi)`: the constant
/// controls first, then piecewise-constant controls with seeded random
/// switchings. Approximates the relaxed solution set from inside.
pub fn reachable_cloud(
    spec: &GeneratorSpec,
    mu: &FlowOfProbabilities,
    s: f64,
    xi: &[f64],
    n_controls: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if n_controls == 0 {
        return Err(MfgError::InvalidParameter("n_controls must be >= 1".into()));
    }
    let grid = mu.grid().clone();
    let n_const = n_controls.min(spec.controls.len());
    let mut out = Vec::with_capacity(n_controls);
    for i in 0..n_const {
        let v = PiecewiseControl::constant(grid.clone(), i);
        out.push(integrate_characteristic(spec, mu, s, xi, &v)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < n_controls {
        let values: Vec<usize> = (0..grid.len() - 1)
            .map(|_| rng.gen_range(0..spec.controls.len()))
            .collect();
        let v = PiecewiseControl::new(grid.clone(), values)?;
        out.push(integrate_characteristic(spec, mu, s, xi, &v)?);
    }
    Ok(out)
}

/// Right-hand side of the a-priori bound
/// `||x(t)|| <= (||xi|| + MT + MT sup_t varsigma(mu[t])) e^{MT}`.
pub fn a_priori_bound(xi_norm: f64, m_growth: f64, horizon: f64, sup_sigma: f64) -> f64 {
    (xi_norm + m_growth * horizon + m_growth * horizon * sup_sigma) * (m_growth * horizon).exp()
}
