//! Backward value solvers on a rectangular space-time grid.
//!
//! One explicit sweep serves both problems: the drift is treated
//! semi-Lagrangian (evaluate the next slice at the characteristic foot),
//! diffusion by central second differences, jump atoms by interpolated
//! evaluation at the landing point, and the running payoff accumulated per
//! step; the maximum over the finite control set is taken node-wise. With
//! zero noise the scheme degenerates to the first-order Hamilton-Jacobi
//! sweep, so the deterministic solver is literally the same code path.
//!
//! The explicit noise terms carry the stability requirement
//! `dt (sum_i G_ii / h^2 + sum_j lambda_j) <= 0.45`; when a coarse step
//! violates it the sweep substeps automatically (coefficients frozen at the
//! left node of the coarse step), storing values only on the coarse grid.

use std::sync::Arc;

use crate::error::{MfgError, Result};
use crate::exec;
use crate::generator::{small_jump_compensator, GeneratorSpec};
use crate::grid::TimeGrid;
use crate::measures::{EmpiricalMeasure, FlowOfProbabilities};
use crate::simulator::{simulate, ControlPolicy, SimConfig};

/// Explicit-scheme stability bound on `dt * (trace G / h^2 + total rate)`.
pub const STABILITY_LIMIT: f64 = 0.45;

#[derive(Clone, Copy, Debug)]
pub struct GridConfig {
    /// Half-width `L` of the spatial box `[-L, L]^d`.
    pub radius: f64,
    /// Lattice spacing.
    pub h: f64,
    /// Substep coarse time steps that violate the stability bound instead of
    /// erroring out.
    pub auto_substep: bool,
    /// Feet and jump targets beyond `L * (1 + margin)` are counted as
    /// out-of-box diagnostics.
    pub extrapolation_margin: f64,
}

impl GridConfig {
    pub fn new(radius: f64, h: f64) -> Self {
        Self { radius, h, auto_substep: true, extrapolation_margin: 0.2 }
    }
}

/// Box half-width from the a-priori trajectory bound on the initial support,
/// with a 20% margin.
pub fn box_radius_for(m0: &EmpiricalMeasure, m_growth: f64, horizon: f64, sup_sigma: f64) -> f64 {
    1.2 * crate::dynamics::a_priori_bound(m0.max_norm(), m_growth, horizon, sup_sigma)
}

/// Value function sampled on a space-time grid: multilinear interpolation in
/// space with linear extrapolation outside the box, time snapped to the
/// nearest slice.
#[derive(Clone, Debug)]
pub struct ValueGrid {
    grid: TimeGrid,
    dim: usize,
    radius: f64,
    h: f64,
    npts: usize,          // nodes per axis
    values: Vec<f64>,     // nt * npts^dim, slice-major
    /// Number of characteristic feet / jump targets that landed beyond the
    /// extrapolation margin during the sweep (diagnostic, not fatal).
    pub out_of_box: usize,
}

impl ValueGrid {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.npts
    }

    pub fn nodes_total(&self) -> usize {
        self.npts.pow(self.dim as u32)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn from_raw(
        grid: TimeGrid,
        dim: usize,
        radius: f64,
        h: f64,
        npts: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != grid.len() * npts.pow(dim as u32) {
            return Err(MfgError::DimensionMismatch(
                values.len(),
                grid.len() * npts.pow(dim as u32),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("value grid".into()));
        }
        Ok(Self { grid, dim, radius, h, npts, values, out_of_box: 0 })
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.nodes_total();
        &self.values[k * n..(k + 1) * n]
    }

    /// Coordinates of a flat lattice node index.
    pub fn node_coord(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for k in 0..self.dim {
            let i = rem % self.npts;
            rem /= self.npts;
            out[k] = -self.radius + i as f64 * self.h;
        }
    }

    /// Value at `(s, xi)`: nearest time slice, multilinear in space.
    pub fn evaluate(&self, s: f64, xi: &[f64]) -> Result<f64> {
        if xi.len() != self.dim {
            return Err(MfgError::DimensionMismatch(xi.len(), self.dim));
        }
        let k = self.grid.nearest(s)?;
        Ok(interp(self.slice(k), self.dim, self.radius, self.h, self.npts, xi))
    }

    /// Weighted sup distance `max |V1 - V2| / (1 + ||x||^2)` over shared
    /// nodes of the coarser lattice.
    pub fn weighted_sup_distance(&self, other: &ValueGrid) -> Result<f64> {
        if self.dim != other.dim {
            return Err(MfgError::DimensionMismatch(self.dim, other.dim));
        }
        if !self.grid.same_grid(&other.grid) {
            return Err(MfgError::GridMismatch);
        }
        let (coarse, fine) = if self.npts <= other.npts { (self, other) } else { (other, self) };
        let mut x = vec![0.0; self.dim];
        let mut sup: f64 = 0.0;
        if coarse.npts == fine.npts && coarse.radius == fine.radius {
            // identical lattices: compare node values directly instead of
            // re-interpolating, which would add rounding noise
            for k in 0..self.grid.len() {
                for i in 0..coarse.nodes_total() {
                    coarse.node_coord(i, &mut x);
                    let w = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
                    sup = sup.max((coarse.slice(k)[i] - fine.slice(k)[i]).abs() / w);
                }
            }
            return Ok(sup);
        }
        for k in 0..self.grid.len() {
            let t = self.grid.times()[k];
            for i in 0..coarse.nodes_total() {
                coarse.node_coord(i, &mut x);
                let a = coarse.slice(k)[i];
                let b = fine.evaluate(t, &x)?;
                let w = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
                sup = sup.max((a - b).abs() / w);
            }
        }
        Ok(sup)
    }
}

/// Multilinear interpolation with linear extrapolation: out-of-box queries
/// use the unclamped local coordinate of the nearest edge cell, which
/// continues the boundary gradient linearly.
fn interp(slice: &[f64], dim: usize, radius: f64, h: f64, npts: usize, x: &[f64]) -> f64 {
    debug_assert!(dim <= 3);
    let mut cell = [0usize; 3];
    let mut theta = [0.0f64; 3];
    for k in 0..dim {
        let s = (x[k] + radius) / h;
        let c = (s.floor() as isize).clamp(0, npts as isize - 2) as usize;
        cell[k] = c;
        theta[k] = s - c as f64; // may lie outside [0, 1]: extrapolation
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << dim) {
        let mut w = 1.0;
        let mut flat = 0usize;
        let mut stride = 1usize;
        for k in 0..dim {
            let hi = (corner >> k) & 1;
            w *= if hi == 1 { theta[k] } else { 1.0 - theta[k] };
            flat += (cell[k] + hi) * stride;
            stride *= npts;
        }
        acc += w * slice[flat];
    }
    acc
}

/// Precomputed interpolation stencil (cell base + local coordinates).
#[derive(Clone, Copy)]
struct Stencil {
    cell: [usize; 3],
    theta: [f64; 3],
}

fn stencil(dim: usize, radius: f64, h: f64, npts: usize, x: &[f64]) -> Stencil {
    let mut cell = [0usize; 3];
    let mut theta = [0.0f64; 3];
    for k in 0..dim {
        let s = (x[k] + radius) / h;
        let c = (s.floor() as isize).clamp(0, npts as isize - 2) as usize;
        cell[k] = c;
        theta[k] = s - c as f64;
    }
    Stencil { cell, theta }
}

fn apply_stencil(slice: &[f64], dim: usize, npts: usize, st: &Stencil) -> f64 {
    let mut acc = 0.0;
    for corner in 0..(1usize << dim) {
        let mut w = 1.0;
        let mut flat = 0usize;
        let mut stride = 1usize;
        for k in 0..dim {
            let hi = (corner >> k) & 1;
            w *= if hi == 1 { st.theta[k] } else { 1.0 - st.theta[k] };
            flat += (st.cell[k] + hi) * stride;
            stride *= npts;
        }
        acc += w * slice[flat];
    }
    acc
}

/// Deterministic backward sweep (first-order Hamilton-Jacobi); requires a
/// spec without diffusion or jumps.
pub fn solve_deterministic_value(
    spec: &GeneratorSpec,
    mu: &FlowOfProbabilities,
    config: &GridConfig,
) -> Result<ValueGrid> {
    if !spec.is_deterministic() {
        return Err(MfgError::InvalidParameter(
            "deterministic solver requires a noiseless generator".into(),
        ));
    }
    solve_stochastic_value(spec, mu, config)
}

/// Backward explicit sweep for the full generator against the frozen flow
/// `zeta`; the value time grid is the flow grid.
pub fn solve_stochastic_value(
    spec: &GeneratorSpec,
    zeta: &FlowOfProbabilities,
    config: &GridConfig,
) -> Result<ValueGrid> {
    let d = spec.dim;
    if zeta.dim() != d {
        return Err(MfgError::DimensionMismatch(zeta.dim(), d));
    }
    if d > 3 || (d > 2 && !spec.is_deterministic()) {
        return Err(MfgError::InvalidParameter(
            "grid solver supports d <= 2 with noise, d <= 3 without".into(),
        ));
    }
    if config.radius <= 0.0 || config.h <= 0.0 {
        return Err(MfgError::InvalidParameter("grid radius and spacing must be positive".into()));
    }
    let npts = (2.0 * config.radius / config.h).round() as usize + 1;
    if npts < 2 {
        return Err(MfgError::InvalidParameter("grid too coarse for its box".into()));
    }
    // re-derive h so the lattice hits both box ends exactly
    let h = 2.0 * config.radius / (npts - 1) as f64;
    let radius = config.radius;
    let grid = zeta.grid().clone();
    let nt = grid.len();
    let times = grid.times();
    let total = npts.pow(d as u32);
    let nu = spec.controls.len();
    let margin = radius * (1.0 + config.extrapolation_margin);

    let mut values = vec![0.0; nt * total];

    // terminal slice: sigma exact on nodes
    {
        let m_t = zeta.at_index(nt - 1);
        let terminal: Vec<f64> = exec::map_indexed(total, |i| {
            let mut x = vec![0.0; d];
            node_coord(i, d, npts, radius, h, &mut x);
            spec.terminal_payoff(&x, m_t)
        });
        values[(nt - 1) * total..].copy_from_slice(&terminal);
    }

    let mut out_of_box = 0usize;
    let has_diffusion = spec.diffusion.is_some();
    let n_atoms = spec.jumps.len();

    for k in (0..nt - 1).rev() {
        let t = times[k];
        let dt_c = times[k + 1] - t;
        let m = zeta.at_index(k);

        // worst-case explicit rate over nodes and controls at the left node
        let mut max_rate = 0.0f64;
        if has_diffusion || n_atoms > 0 {
            let rates: Vec<f64> = exec::map_indexed(total, |i| {
                let mut x = vec![0.0; d];
                node_coord(i, d, npts, radius, h, &mut x);
                let mut g = vec![0.0; d * d];
                let mut y = vec![0.0; d];
                let mut worst = 0.0f64;
                for u in spec.controls.iter() {
                    let mut rate = 0.0;
                    if has_diffusion {
                        spec.diffusion_into(t, &x, m, u, &mut g);
                        for a in 0..d {
                            rate += g[a * d + a] / (h * h);
                        }
                    }
                    for atom in &spec.jumps {
                        rate += atom(t, &x, m, u, &mut y);
                    }
                    worst = worst.max(rate);
                }
                worst
            });
            max_rate = rates.into_iter().fold(0.0, f64::max);
        }
        let n_sub = if dt_c * max_rate <= STABILITY_LIMIT {
            1
        } else if config.auto_substep {
            (dt_c * max_rate / STABILITY_LIMIT).ceil() as usize
        } else {
            return Err(MfgError::StabilityViolation(dt_c * max_rate, STABILITY_LIMIT));
        };
        let dt_sub = dt_c / n_sub as f64;

        // per (node, control) coefficient cache, frozen at the left node
        struct NodeCache {
            // per control: foot stencil, payoff, diffusion matrix, jump data
            feet: Vec<Stencil>,
            payoff: Vec<f64>,
            gmats: Vec<f64>,              // nu * d * d (empty without diffusion)
            jump_rates: Vec<f64>,         // nu * n_atoms
            jump_targets: Vec<Stencil>,   // nu * n_atoms
            escaped: usize,
        }
        let cache: Vec<NodeCache> = exec::map_indexed(total, |i| {
            let mut x = vec![0.0; d];
            node_coord(i, d, npts, radius, h, &mut x);
            let mut f = vec![0.0; d];
            let mut comp = vec![0.0; d];
            let mut y = vec![0.0; d];
            let mut foot = vec![0.0; d];
            let mut c = NodeCache {
                feet: Vec::with_capacity(nu),
                payoff: Vec::with_capacity(nu),
                gmats: if has_diffusion { vec![0.0; nu * d * d] } else { Vec::new() },
                jump_rates: Vec::with_capacity(nu * n_atoms),
                jump_targets: Vec::with_capacity(nu * n_atoms),
                escaped: 0,
            };
            for (ci, u) in spec.controls.iter().enumerate() {
                spec.drift_into(t, &x, m, u, &mut f);
                small_jump_compensator(spec, t, &x, m, u, &mut comp);
                for a in 0..d {
                    foot[a] = x[a] + dt_sub * (f[a] - comp[a]);
                    if foot[a].abs() > margin {
                        c.escaped += 1;
                    }
                }
                c.feet.push(stencil(d, radius, h, npts, &foot));
                c.payoff.push(spec.running_payoff(t, &x, m, u));
                if has_diffusion {
                    spec.diffusion_into(t, &x, m, u, &mut c.gmats[ci * d * d..(ci + 1) * d * d]);
                }
                for atom in &spec.jumps {
                    let rate = atom(t, &x, m, u, &mut y);
                    let target: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                    if target.iter().any(|v| v.abs() > margin) {
                        c.escaped += 1;
                    }
                    c.jump_rates.push(rate);
                    c.jump_targets.push(stencil(d, radius, h, npts, &target));
                }
            }
            c
        });
        out_of_box += cache.iter().map(|c| c.escaped).sum::<usize>();

        let mut w_old: Vec<f64> = values[(k + 1) * total..(k + 2) * total].to_vec();
        for _ in 0..n_sub {
            let w_ref = &w_old;
            let cache_ref = &cache;
            let w_new: Vec<f64> = exec::map_indexed(total, |i| {
                let c = &cache_ref[i];
                let here = w_ref[i];
                let mut best = f64::NEG_INFINITY;
                for ci in 0..nu {
                    let mut v = apply_stencil(w_ref, d, npts, &c.feet[ci]) + dt_sub * c.payoff[ci];
                    if has_diffusion {
                        v += dt_sub
                            * diffusion_term(
                                w_ref,
                                &c.gmats[ci * d * d..(ci + 1) * d * d],
                                i,
                                d,
                                npts,
                                h,
                            );
                    }
                    for j in 0..n_atoms {
                        let rate = c.jump_rates[ci * n_atoms + j];
                        if rate > 0.0 {
                            let at = apply_stencil(w_ref, d, npts, &c.jump_targets[ci * n_atoms + j]);
                            v += dt_sub * rate * (at - here);
                        }
                    }
                    if v > best {
                        best = v;
                    }
                }
                best
            });
            w_old = w_new;
        }
        if w_old.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("value sweep".into()));
        }
        values[k * total..(k + 1) * total].copy_from_slice(&w_old);
    }

    let mut vg = ValueGrid::from_raw(grid, d, radius, h, npts, values)?;
    vg.out_of_box = out_of_box;
    Ok(vg)
}

fn node_coord(flat: usize, dim: usize, npts: usize, radius: f64, h: f64, out: &mut [f64]) {
    let mut rem = flat;
    for k in 0..dim {
        let i = rem % npts;
        rem /= npts;
        out[k] = -radius + i as f64 * h;
    }
}

/// `(1/2) G : D^2 W` by central differences; second differences vanish at
/// box faces (linear-extrapolation ghost nodes), mixed terms only in the
/// interior.
fn diffusion_term(w: &[f64], g: &[f64], flat: usize, dim: usize, npts: usize, h: f64) -> f64 {
    let mut idx = [0usize; 3];
    let mut rem = flat;
    let mut strides = [0usize; 3];
    let mut stride = 1usize;
    for k in 0..dim {
        idx[k] = rem % npts;
        rem /= npts;
        strides[k] = stride;
        stride *= npts;
    }
    let h2 = h * h;
    let mut acc = 0.0;
    for a in 0..dim {
        let gaa = g[a * dim + a];
        if gaa != 0.0 && idx[a] > 0 && idx[a] + 1 < npts {
            let up = w[flat + strides[a]];
            let dn = w[flat - strides[a]];
            acc += 0.5 * gaa * (up - 2.0 * w[flat] + dn) / h2;
        }
        for b in (a + 1)..dim {
            let gab = g[a * dim + b];
            if gab != 0.0 && idx[a] > 0 && idx[a] + 1 < npts && idx[b] > 0 && idx[b] + 1 < npts {
                let pp = w[flat + strides[a] + strides[b]];
                let mm = w[flat - strides[a] - strides[b]];
                let pm = w[flat + strides[a] - strides[b]];
                let mp = w[flat - strides[a] + strides[b]];
                acc += gab * (pp + mm - pm - mp) / (4.0 * h2);
            }
        }
    }
    acc
}

/// One-step-lookahead feedback extracted from a value grid: at `(t, x)` pick
/// the control maximizing the semi-Lagrangian score against the next slice,
/// ties broken by the lowest index.
pub fn extract_policy(value: Arc<ValueGrid>, spec: &GeneratorSpec) -> ControlPolicy {
    let spec = spec.clone();
    ControlPolicy::Feedback(Arc::new(move |t: f64, x: &[f64], m: &EmpiricalMeasure| {
        let times = value.grid().times();
        let mut k = match times.binary_search_by(|v| v.partial_cmp(&(t + 1e-9)).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if k + 1 >= times.len() {
            k = times.len() - 2;
        }
        let dt = times[k + 1] - times[k];
        let next = value.slice(k + 1);
        let d = spec.dim;
        let mut f = vec![0.0; d];
        let mut comp = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut foot = vec![0.0; d];
        let here = interp(next, d, value.radius(), value.h(), value.nodes_per_axis(), x);
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = 0usize;
        for (ci, u) in spec.controls.iter().enumerate() {
            spec.drift_into(t, x, m, u, &mut f);
            small_jump_compensator(&spec, t, x, m, u, &mut comp);
            for a in 0..d {
                foot[a] = x[a] + dt * (f[a] - comp[a]);
            }
            let mut v = interp(next, d, value.radius(), value.h(), value.nodes_per_axis(), &foot)
                + dt * spec.running_payoff(t, x, m, u);
            for atom in &spec.jumps {
                let rate = atom(t, x, m, u, &mut y);
                if rate > 0.0 {
                    let target: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                    let at =
                        interp(next, d, value.radius(), value.h(), value.nodes_per_axis(), &target);
                    v += dt * rate * (at - here);
                }
            }
            if v > best {
                best = v;
                best_idx = ci;
            }
        }
        best_idx
    }))
}

#[derive(Clone, Debug)]
pub struct DeviationReport {
    /// `max over starts and policies of (sample payoff - V(s, xi))`.
    pub max_gap: f64,
    /// Largest payoff standard error encountered.
    pub max_std_err: f64,
    /// Per-policy maximal gap over the sampled starts.
    pub per_policy: Vec<f64>,
}

/// Monte-Carlo expected payoff `E[z(T) + sigma(Y(T), zeta[T])]` of a policy
/// started from `(s, xi)`; returns `(mean, std_err)`.
pub fn expected_payoff(
    spec: &GeneratorSpec,
    policy: &ControlPolicy,
    zeta: &FlowOfProbabilities,
    s: f64,
    xi: &[f64],
    config: &SimConfig,
) -> Result<(f64, f64)> {
    let m0 = EmpiricalMeasure::dirac(xi)?;
    let mut cfg = *config;
    cfg.start_time = s;
    let ens = simulate(spec, policy, zeta, &m0, &cfg)?;
    let last = ens.grid().len() - 1;
    let m_t = zeta.at_index(zeta.grid().len() - 1);
    let payoffs: Vec<f64> = (0..ens.particles())
        .map(|p| ens.payoff_at(p, last) + spec.terminal_payoff(ens.state_at(p, last), m_t))
        .collect();
    let n = payoffs.len() as f64;
    let mean = payoffs.iter().sum::<f64>() / n;
    let var =
        payoffs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Tests the deviation inequality: no policy in the dictionary should beat
/// the value at any sampled start beyond statistical + scheme tolerance.
pub fn check_deviation(
    value: &ValueGrid,
    spec: &GeneratorSpec,
    zeta: &FlowOfProbabilities,
    policies: &[ControlPolicy],
    starts: &[(f64, Vec<f64>)],
    config: &SimConfig,
) -> Result<DeviationReport> {
    if policies.is_empty() {
        return Err(MfgError::EmptyInput("policy dictionary".into()));
    }
    if starts.is_empty() {
        return Err(MfgError::EmptyInput("deviation starts".into()));
    }
    let mut max_gap = f64::NEG_INFINITY;
    let mut max_se = 0.0f64;
    let mut per_policy = Vec::with_capacity(policies.len());
    for policy in policies {
        let mut worst = f64::NEG_INFINITY;
        for (s, xi) in starts {
            let (payoff, se) = expected_payoff(spec, policy, zeta, *s, xi, config)?;
            let gap = payoff - value.evaluate(*s, xi)?;
            worst = worst.max(gap);
            max_se = max_se.max(se);
        }
        per_policy.push(worst);
        max_gap = max_gap.max(worst);
    }
    Ok(DeviationReport { max_gap, max_std_err: max_se, per_policy })
}
