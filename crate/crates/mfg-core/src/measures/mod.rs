//! Probability measures as finite weighted particle clouds.
//!
//! A measure `m` in `P^2(R^d)` is stored as points with nonnegative weights
//! summing to one. The second moment `varsigma^2(m)` is the weighted sum of
//! squared norms. Wasserstein-2 distances are computed exactly (quantile
//! matching in 1-D, Hungarian assignment for uniform equal-count clouds) or
//! by debiased entropic regularization for large clouds.

mod assignment;
mod entropic;

pub use assignment::solve_assignment;
pub use entropic::sinkhorn_divergence;

use std::sync::OnceLock;

use crate::dynamics::Trajectory;
use crate::error::{MfgError, Result};
use crate::grid::TimeGrid;

const WEIGHT_TOL: f64 = 1e-12;

/// Exact assignment is used up to this cloud size; above it the entropic
/// fallback takes over.
pub const ASSIGNMENT_LIMIT: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum W2Method {
    /// Quantile matching; requires `d == 1`.
    Exact1d,
    /// Minimum-cost perfect matching; requires equal counts and uniform weights.
    Assignment,
    /// Debiased Sinkhorn with epsilon annealing down to the given regularization.
    Entropic { eps: f64 },
}

/// Weighted particle cloud on `R^d`. Immutable after construction; moment
/// statistics are computed lazily and cached.
#[derive(Debug)]
pub struct EmpiricalMeasure {
    points: Vec<f64>, // flat, len = n * dim
    weights: Vec<f64>,
    dim: usize,
    stats: OnceLock<Stats>,
}

#[derive(Clone, Debug)]
struct Stats {
    mean: Vec<f64>,
    second_moment: f64,
}

impl Clone for EmpiricalMeasure {
    fn clone(&self) -> Self {
        Self {
            points: self.points.clone(),
            weights: self.weights.clone(),
            dim: self.dim,
            stats: self.stats.clone(),
        }
    }
}

impl EmpiricalMeasure {
    /// Builds a measure from flat point data (`n * dim` scalars) and weights.
    pub fn new(points: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(MfgError::InvalidParameter("dim must be positive".into()));
        }
        if weights.is_empty() {
            return Err(MfgError::EmptyInput("empirical measure".into()));
        }
        if points.len() != weights.len() * dim {
            return Err(MfgError::DimensionMismatch(points.len(), weights.len() * dim));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(MfgError::NonFinite("measure points".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MfgError::InvalidWeights("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(MfgError::InvalidWeights(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { points, weights, dim, stats: OnceLock::new() })
    }

    /// Uniform weights over the given flat point data.
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(MfgError::DimensionMismatch(points.len(), dim));
        }
        let n = points.len() / dim;
        if n == 0 {
            return Err(MfgError::EmptyInput("empirical measure".into()));
        }
        // exact unit sum regardless of n
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        let correction = 1.0 - w * n as f64;
        weights[0] += correction;
        Self::new(points, weights, dim)
    }

    /// Dirac mass at a single point.
    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.to_vec(), vec![1.0], point.len())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= 1e-9 * w.max(1e-300))
    }

    fn stats(&self) -> &Stats {
        self.stats.get_or_init(|| {
            let mut mean = vec![0.0; self.dim];
            let mut second = 0.0;
            for (i, w) in self.weights.iter().enumerate() {
                let p = self.point(i);
                for (m, x) in mean.iter_mut().zip(p) {
                    *m += w * x;
                }
                second += w * p.iter().map(|x| x * x).sum::<f64>();
            }
            Stats { mean, second_moment: second }
        })
    }

    /// Weighted mean of the cloud.
    pub fn mean(&self) -> &[f64] {
        &self.stats().mean
    }

    /// `varsigma^2(m)`: the weighted second moment.
    pub fn second_moment(&self) -> f64 {
        self.stats().second_moment
    }

    /// `varsigma(m)`.
    pub fn sigma(&self) -> f64 {
        self.second_moment().sqrt()
    }

    /// Largest point norm; used for a-priori box sizing.
    pub fn max_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| norm(self.point(i)))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `varsigma^2(m)`, free-function form.
pub fn second_moment(m: &EmpiricalMeasure) -> f64 {
    m.second_moment()
}

/// Wasserstein-2 distance between two clouds with the requested method.
pub fn wasserstein2(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure, method: W2Method) -> Result<f64> {
    if m1.dim() != m2.dim() {
        return Err(MfgError::DimensionMismatch(m1.dim(), m2.dim()));
    }
    match method {
        W2Method::Exact1d => {
            if m1.dim() != 1 {
                return Err(MfgError::InvalidParameter("exact1d requires d = 1".into()));
            }
            Ok(w2_exact_1d(m1, m2))
        }
        W2Method::Assignment => {
            if m1.len() != m2.len() {
                return Err(MfgError::UnequalCounts(m1.len(), m2.len()));
            }
            if !m1.is_uniform() || !m2.is_uniform() {
                return Err(MfgError::InvalidWeights("assignment requires uniform weights".into()));
            }
            let n = m1.len();
            let cost = |i: usize, j: usize| sq_dist(m1.point(i), m2.point(j));
            let (_, total) = solve_assignment(n, &cost);
            Ok((total / n as f64).max(0.0).sqrt())
        }
        W2Method::Entropic { eps } => {
            if eps <= 0.0 {
                return Err(MfgError::InvalidParameter("entropic eps must be positive".into()));
            }
            sinkhorn_divergence(m1, m2, eps)
        }
    }
}

/// Picks a method suited to the cloud pair: exact in 1-D, assignment for
/// small uniform equal-count clouds, entropic otherwise.
pub fn wasserstein2_auto(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure) -> Result<f64> {
    if m1.dim() != m2.dim() {
        return Err(MfgError::DimensionMismatch(m1.dim(), m2.dim()));
    }
    if m1.dim() == 1 {
        return wasserstein2(m1, m2, W2Method::Exact1d);
    }
    if m1.len() == m2.len() && m1.len() <= ASSIGNMENT_LIMIT && m1.is_uniform() && m2.is_uniform() {
        return wasserstein2(m1, m2, W2Method::Assignment);
    }
    wasserstein2(m1, m2, W2Method::Entropic { eps: 1e-3 })
}

/// Exact 1-D W2 by quantile (CDF) matching of the two weighted samples.
fn w2_exact_1d(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure) -> f64 {
    let sorted = |m: &EmpiricalMeasure| {
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&a, &b| m.point(a)[0].partial_cmp(&m.point(b)[0]).unwrap());
        idx.into_iter()
            .map(|i| (m.point(i)[0], m.weights()[i]))
            .collect::<Vec<_>>()
    };
    let a = sorted(m1);
    let b = sorted(m2);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut wa, mut wb) = (a[0].1, b[0].1);
    let mut acc = 0.0;
    loop {
        let mass = wa.min(wb);
        let d = a[i].0 - b[j].0;
        acc += mass * d * d;
        wa -= mass;
        wb -= mass;
        if wa <= 1e-15 {
            i += 1;
            if i >= a.len() {
                break;
            }
            wa = a[i].1;
        }
        if wb <= 1e-15 {
            j += 1;
            if j >= b.len() {
                break;
            }
            wb = b[j].1;
        }
    }
    acc.max(0.0).sqrt()
}

/// Time-grid-indexed family of measures (the flows `mu`, `zeta`).
#[derive(Clone, Debug)]
pub struct FlowOfProbabilities {
    grid: TimeGrid,
    measures: Vec<EmpiricalMeasure>,
}

impl FlowOfProbabilities {
    pub fn new(grid: TimeGrid, measures: Vec<EmpiricalMeasure>) -> Result<Self> {
        if measures.len() != grid.len() {
            return Err(MfgError::DimensionMismatch(measures.len(), grid.len()));
        }
        let d = measures[0].dim();
        if measures.iter().any(|m| m.dim() != d) {
            return Err(MfgError::InvalidParameter("flow measures must share dim".into()));
        }
        Ok(Self { grid, measures })
    }

    /// Flow constant in time, equal to `m` at every node.
    pub fn constant(grid: TimeGrid, m: EmpiricalMeasure) -> Self {
        let n = grid.len();
        Self { grid, measures: vec![m; n] }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim()
    }

    pub fn at_index(&self, i: usize) -> &EmpiricalMeasure {
        &self.measures[i]
    }

    /// Measure at the node nearest to `t`.
    pub fn at_time(&self, t: f64) -> Result<&EmpiricalMeasure> {
        Ok(&self.measures[self.grid.nearest(t)?])
    }

    pub fn measures(&self) -> &[EmpiricalMeasure] {
        &self.measures
    }

    /// `sup_t varsigma(mu[t])`.
    pub fn sup_sigma(&self) -> f64 {
        self.measures.iter().map(|m| m.sigma()).fold(0.0, f64::max)
    }

    /// `max_t W2(self[t], other[t])` with an automatically chosen method.
    pub fn sup_distance(&self, other: &FlowOfProbabilities) -> Result<f64> {
        if !self.grid.same_grid(&other.grid) {
            return Err(MfgError::GridMismatch);
        }
        let mut sup = 0.0f64;
        for (a, b) in self.measures.iter().zip(&other.measures) {
            sup = sup.max(wasserstein2_auto(a, b)?);
        }
        Ok(sup)
    }
}

/// Probability on path space `C([0, T], R^{d+1})` carried by finitely many
/// trajectories (the measures `chi`).
#[derive(Clone, Debug)]
pub struct PathMeasure {
    trajectories: Vec<Trajectory>,
    weights: Vec<f64>,
}

impl PathMeasure {
    pub fn new(trajectories: Vec<Trajectory>, weights: Vec<f64>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(MfgError::EmptyInput("path measure".into()));
        }
        if trajectories.len() != weights.len() {
            return Err(MfgError::DimensionMismatch(trajectories.len(), weights.len()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > WEIGHT_TOL {
            return Err(MfgError::InvalidWeights(format!("weights sum to {total}, expected 1")));
        }
        let g = trajectories[0].grid().clone();
        if trajectories.iter().any(|t| !t.grid().same_grid(&g)) {
            return Err(MfgError::GridMismatch);
        }
        Ok(Self { trajectories, weights })
    }

    pub fn uniform(trajectories: Vec<Trajectory>) -> Result<Self> {
        let n = trajectories.len();
        if n == 0 {
            return Err(MfgError::EmptyInput("path measure".into()));
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        weights[0] += 1.0 - w * n as f64;
        Self::new(trajectories, weights)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid(&self) -> &TimeGrid {
        self.trajectories[0].grid()
    }
}

/// Marginal `e_t # chi`: the x-components at the node nearest to `t`, with
/// the weights of `chi`.
pub fn pushforward_at(chi: &PathMeasure, t: f64) -> Result<EmpiricalMeasure> {
    let idx = chi.grid().nearest(t)?;
    let dim = chi.trajectories()[0].dim();
    let mut points = Vec::with_capacity(chi.len() * dim);
    for traj in chi.trajectories() {
        points.extend_from_slice(traj.state_at(idx));
    }
    EmpiricalMeasure::new(points, chi.weights().to_vec(), dim)
}

/// All marginals of `chi` as a flow on its own grid.
pub fn pushforward_flow(chi: &PathMeasure) -> Result<FlowOfProbabilities> {
    let grid = chi.grid().clone();
    let times: Vec<f64> = grid.times().to_vec();
    let measures = times
        .iter()
        .map(|&t| pushforward_at(chi, t))
        .collect::<Result<Vec<_>>>()?;
    FlowOfProbabilities::new(grid, measures)
}

/// W2 on path space with ground cost `sup_t ||w1(t) - w2(t)||` over both x
/// and z components, solved by assignment. Requires uniform weights, equal
/// counts and a shared grid.
pub fn path_w2(chi1: &PathMeasure, chi2: &PathMeasure) -> Result<f64> {
    if chi1.len() != chi2.len() {
        return Err(MfgError::UnequalCounts(chi1.len(), chi2.len()));
    }
    if !chi1.grid().same_grid(chi2.grid()) {
        return Err(MfgError::GridMismatch);
    }
    let uniform = |w: &[f64]| {
        let u = 1.0 / w.len() as f64;
        w.iter().all(|x| (x - u).abs() <= 1e-9 * u)
    };
    if !uniform(chi1.weights()) || !uniform(chi2.weights()) {
        return Err(MfgError::InvalidWeights("path_w2 requires uniform weights".into()));
    }
    let n = chi1.len();
    let cost = |i: usize, j: usize| {
        let a = &chi1.trajectories()[i];
        let b = &chi2.trajectories()[j];
        let mut sup: f64 = 0.0;
        for k in 0..a.grid().len() {
            let dx = sq_dist(a.state_at(k), b.state_at(k));
            let dz = a.payoff_at(k) - b.payoff_at(k);
            sup = sup.max(dx + dz * dz);
        }
        sup
    };
    let (_, total) = solve_assignment(n, &cost);
    Ok((total / n as f64).max(0.0).sqrt())
}
