//! Levy-Khintchine generator specifications.
//!
//! A spec bundles the diffusion matrix `G`, the drift `f`, a finite list of
//! jump atoms realizing the jump measure `nu` as `sum_j lambda_j delta_{y_j}`,
//! the running payoff `g` and the terminal payoff `sigma`, together with a
//! finite control set `U`. The deterministic generator of the limiting game
//! is the special case with zero diffusion and no jumps.
//!
//! Derived quantities:
//! - total noise `Sigma = trace G + sum_j lambda_j ||y_j||^2`,
//! - effective drift `b = f + sum_{||y_j|| > 1} lambda_j y_j`
//!   (small jumps are compensated inside the generator and do not enter `b`).

use std::sync::Arc;

use crate::error::{MfgError, Result};
use crate::measures::{norm, EmpiricalMeasure};

/// Drift coefficient `f(t, x, m, u)`; writes the result into the out slice.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &EmpiricalMeasure, &[f64], &mut [f64]) + Send + Sync>;
/// Diffusion coefficient `G(t, x, m, u)`; writes a `d x d` row-major matrix.
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64], &EmpiricalMeasure, &[f64], &mut [f64]) + Send + Sync>;
/// Jump atom: writes the displacement `y(t, x, m, u)` and returns the rate.
pub type JumpFn = Arc<dyn Fn(f64, &[f64], &EmpiricalMeasure, &[f64], &mut [f64]) -> f64 + Send + Sync>;
/// Running payoff `g(t, x, m, u)`.
pub type RunningPayoffFn = Arc<dyn Fn(f64, &[f64], &EmpiricalMeasure, &[f64]) -> f64 + Send + Sync>;
/// Terminal payoff `sigma(x, m)`.
pub type TerminalPayoffFn = Arc<dyn Fn(&[f64], &EmpiricalMeasure) -> f64 + Send + Sync>;

/// Explicit finite discretization of the control space `U`.
#[derive(Clone, Debug)]
pub struct ControlSet {
    points: Vec<f64>, // flat, len = count * dim
    dim: usize,
}

impl ControlSet {
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(MfgError::InvalidParameter("control set must be nonempty with matching dim".into()));
        }
        let n = points.len() / dim;
        for i in 0..n {
            for j in (i + 1)..n {
                if points[i * dim..(i + 1) * dim] == points[j * dim..(j + 1) * dim] {
                    return Err(MfgError::InvalidParameter(format!("duplicate control point at {i} and {j}")));
                }
            }
        }
        Ok(Self { points, dim })
    }

    /// Uniform grid of `count` points on the segment `[lo, hi]` per axis
    /// (tensor product across axes).
    pub fn grid(lo: &[f64], hi: &[f64], count: &[usize]) -> Result<Self> {
        let dim = lo.len();
        if dim == 0 || hi.len() != dim || count.len() != dim || count.iter().any(|&c| c == 0) {
            return Err(MfgError::InvalidParameter("control grid shape".into()));
        }
        let total: usize = count.iter().product();
        let mut points = Vec::with_capacity(total * dim);
        for flat in 0..total {
            let mut rem = flat;
            for k in 0..dim {
                let i = rem % count[k];
                rem /= count[k];
                let v = if count[k] == 1 {
                    lo[k]
                } else {
                    lo[k] + (hi[k] - lo[k]) * i as f64 / (count[k] - 1) as f64
                };
                points.push(v);
            }
        }
        Self::new(points, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Index of the control of smallest norm (ties broken by lowest index).
    /// Used as the "free-flow" control for fixed-point initialization.
    pub fn smallest_norm_index(&self) -> usize {
        let mut best = 0;
        let mut best_norm = norm(self.point(0));
        for i in 1..self.len() {
            let n = norm(self.point(i));
            if n < best_norm {
                best_norm = n;
                best = i;
            }
        }
        best
    }
}

/// The triple `(G, f, nu)` plus control set and payoff data defining `L^n`
/// or, when `diffusion` is `None` and `jumps` is empty, the deterministic
/// generator `L*`.
#[derive(Clone)]
pub struct GeneratorSpec {
    pub dim: usize,
    pub controls: ControlSet,
    pub diffusion: Option<DiffusionFn>,
    pub drift: DriftFn,
    pub jumps: Vec<JumpFn>,
    pub running_payoff: RunningPayoffFn,
    pub terminal_payoff: TerminalPayoffFn,
}

impl std::fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("dim", &self.dim)
            .field("controls", &self.controls.len())
            .field("diffusion", &self.diffusion.is_some())
            .field("jumps", &self.jumps.len())
            .finish()
    }
}

impl GeneratorSpec {
    pub fn is_deterministic(&self) -> bool {
        self.diffusion.is_none() && self.jumps.is_empty()
    }

    pub fn drift_into(&self, t: f64, x: &[f64], m: &EmpiricalMeasure, u: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, m, u, out);
    }

    /// Diffusion matrix, row-major; zero when no diffusion is set.
    pub fn diffusion_into(&self, t: f64, x: &[f64], m: &EmpiricalMeasure, u: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Some(g) => g(t, x, m, u, out),
            None => out.fill(0.0),
        }
    }

    pub fn running_payoff(&self, t: f64, x: &[f64], m: &EmpiricalMeasure, u: &[f64]) -> f64 {
        (self.running_payoff)(t, x, m, u)
    }

    pub fn terminal_payoff(&self, x: &[f64], m: &EmpiricalMeasure) -> f64 {
        (self.terminal_payoff)(x, m)
    }
}

/// `Sigma(t, x, m, u) = trace G + sum_j lambda_j ||y_j||^2`.
pub fn total_noise(spec: &GeneratorSpec, t: f64, x: &[f64], m: &EmpiricalMeasure, u: &[f64]) -> f64 {
    let d = spec.dim;
    let mut acc = 0.0;
    if spec.diffusion.is_some() {
        let mut g = vec![0.0; d * d];
        spec.diffusion_into(t, x, m, u, &mut g);
        for i in 0..d {
            acc += g[i * d + i];
        }
    }
    let mut y = vec![0.0; d];
    for atom in &spec.jumps {
        let rate = atom(t, x, m, u, &mut y);
        acc += rate * y.iter().map(|v| v * v).sum::<f64>();
    }
    acc
}

/// `b(t, x, m, u) = f + sum over atoms with ||y|| > 1 of lambda y`.
pub fn effective_drift(
    spec: &GeneratorSpec,
    t: f64,
    x: &[f64],
    m: &EmpiricalMeasure,
    u: &[f64],
    out: &mut [f64],
) {
    spec.drift_into(t, x, m, u, out);
    let d = spec.dim;
    let mut y = vec![0.0; d];
    for atom in &spec.jumps {
        let rate = atom(t, x, m, u, &mut y);
        if norm(&y) > 1.0 {
            for (o, yi) in out.iter_mut().zip(&y) {
                *o += rate * yi;
            }
        }
    }
}

/// Compensator of the small jumps: `sum over atoms with ||y|| <= 1 of
/// lambda y`. Subtracted from the physical drift so the simulated process
/// matches the compensated generator.
pub fn small_jump_compensator(
    spec: &GeneratorSpec,
    t: f64,
    x: &[f64],
    m: &EmpiricalMeasure,
    u: &[f64],
    out: &mut [f64],
) {
    out.fill(0.0);
    let d = spec.dim;
    let mut y = vec![0.0; d];
    for atom in &spec.jumps {
        let rate = atom(t, x, m, u, &mut y);
        if norm(&y) <= 1.0 {
            for (o, yi) in out.iter_mut().zip(&y) {
                *o += rate * yi;
            }
        }
    }
}

/// Closed family of test functions with exact generator action.
#[derive(Clone, Debug)]
pub enum TestFunction {
    /// `phi(x) = <xi, x>`.
    Linear(Vec<f64>),
    /// `phi(x) = ||x - xi||^2`.
    ShiftedQuadratic(Vec<f64>),
    /// `q(x1, x2) = ||x1 - x2||^2`; the generator acts on `x1`.
    CouplingQuadratic,
    /// `lambda(x1, x2, x3) = <x1 - x2, x3>`; the generator acts on `x1`.
    CouplingLinear,
}

/// Evaluation point for [`apply_generator`]. `x2`/`x3` are only read by the
/// coupling test functions.
pub struct GeneratorArgs<'a> {
    pub t: f64,
    pub x1: &'a [f64],
    pub x2: Option<&'a [f64]>,
    pub x3: Option<&'a [f64]>,
    pub m: &'a EmpiricalMeasure,
    pub u: &'a [f64],
}

/// Exact generator action on the closed test-function family:
/// `L q = Sigma + 2 <b, x1 - x2>` for the coupling quadratic,
/// `L lambda = <b, x3>` for the coupling linear (so `<f, x3>` for the
/// deterministic generator), and the corresponding one-argument forms.
pub fn apply_generator(spec: &GeneratorSpec, phi: &TestFunction, args: &GeneratorArgs) -> Result<f64> {
    let d = spec.dim;
    let mut b = vec![0.0; d];
    effective_drift(spec, args.t, args.x1, args.m, args.u, &mut b);
    match phi {
        TestFunction::Linear(xi) => {
            if xi.len() != d {
                return Err(MfgError::DimensionMismatch(xi.len(), d));
            }
            Ok(dot(&b, xi))
        }
        TestFunction::ShiftedQuadratic(xi) => {
            if xi.len() != d {
                return Err(MfgError::DimensionMismatch(xi.len(), d));
            }
            let sigma = total_noise(spec, args.t, args.x1, args.m, args.u);
            let diff: Vec<f64> = args.x1.iter().zip(xi).map(|(a, b)| a - b).collect();
            Ok(sigma + 2.0 * dot(&b, &diff))
        }
        TestFunction::CouplingQuadratic => {
            let x2 = args.x2.ok_or(MfgError::UnsupportedTestFunction)?;
            let sigma = total_noise(spec, args.t, args.x1, args.m, args.u);
            let diff: Vec<f64> = args.x1.iter().zip(x2).map(|(a, b)| a - b).collect();
            Ok(sigma + 2.0 * dot(&b, &diff))
        }
        TestFunction::CouplingLinear => {
            let x3 = args.x3.ok_or(MfgError::UnsupportedTestFunction)?;
            Ok(dot(&b, x3))
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A sampled evaluation point for audits and epsilon estimation.
#[derive(Clone, Debug)]
pub struct SamplePoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub m: EmpiricalMeasure,
    pub u: Vec<f64>,
}

/// For each member of `family`, the normalized distance to `limit`:
/// `eps = max over sample of max(Sigma-ratio, (drift-ratio)^2)`, clamped to
/// `<= 1`, so that the Sigma ratio is `<= eps` and the drift ratio `<= sqrt(eps)`.
pub fn epsilon_estimate(
    family: &[GeneratorSpec],
    limit: &GeneratorSpec,
    sample: &[SamplePoint],
) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(MfgError::EmptyInput("epsilon sample".into()));
    }
    let d = limit.dim;
    let mut out = Vec::with_capacity(family.len());
    let mut b = vec![0.0; d];
    let mut f = vec![0.0; d];
    for spec in family {
        if spec.dim != d {
            return Err(MfgError::DimensionMismatch(spec.dim, d));
        }
        let mut eps: f64 = 0.0;
        for p in sample {
            let denom2 = 1.0 + norm(&p.x).powi(2) + p.m.second_moment();
            let denom1 = 1.0 + norm(&p.x) + p.m.sigma();
            let sigma = total_noise(spec, p.t, &p.x, &p.m, &p.u);
            effective_drift(spec, p.t, &p.x, &p.m, &p.u, &mut b);
            limit.drift_into(p.t, &p.x, &p.m, &p.u, &mut f);
            let drift_ratio = b
                .iter()
                .zip(&f)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
                / denom1;
            eps = eps.max(sigma / denom2).max(drift_ratio * drift_ratio);
        }
        out.push(eps.min(1.0));
    }
    Ok(out)
}

/// Sampled growth audit for the declared constant `M` of condition-style
/// bounds `||b|| <= M(1 + ||x|| + varsigma)`, `|Sigma| <= M(1 + ||x||^2 +
/// varsigma^2)`, plus a symmetry/PSD check of the diffusion output.
pub fn growth_audit(spec: &GeneratorSpec, m_growth: f64, sample: &[SamplePoint]) -> Result<()> {
    if sample.is_empty() {
        return Err(MfgError::EmptyInput("growth audit sample".into()));
    }
    let d = spec.dim;
    let mut b = vec![0.0; d];
    let mut g = vec![0.0; d * d];
    for p in sample {
        let denom1 = 1.0 + norm(&p.x) + p.m.sigma();
        let denom2 = 1.0 + norm(&p.x).powi(2) + p.m.second_moment();
        effective_drift(spec, p.t, &p.x, &p.m, &p.u, &mut b);
        if norm(&b) > m_growth * denom1 * (1.0 + 1e-12) {
            return Err(MfgError::GrowthAudit(format!(
                "||b|| = {:.4} exceeds M(1+||x||+sigma) = {:.4} at t={}",
                norm(&b),
                m_growth * denom1,
                p.t
            )));
        }
        let sigma = total_noise(spec, p.t, &p.x, &p.m, &p.u);
        if sigma.abs() > m_growth * denom2 * (1.0 + 1e-12) {
            return Err(MfgError::GrowthAudit(format!(
                "|Sigma| = {:.4} exceeds M(1+||x||^2+sigma^2) = {:.4} at t={}",
                sigma.abs(),
                m_growth * denom2,
                p.t
            )));
        }
        if spec.diffusion.is_some() {
            spec.diffusion_into(p.t, &p.x, &p.m, &p.u, &mut g);
            check_sym_psd(&g, d)?;
        }
    }
    Ok(())
}

/// Symmetry plus nonnegativity of all principal minors (sufficient for PSD
/// at the dimensions supported here, d <= 3).
fn check_sym_psd(g: &[f64], d: usize) -> Result<()> {
    let tol = 1e-10;
    for i in 0..d {
        for j in (i + 1)..d {
            if (g[i * d + j] - g[j * d + i]).abs() > tol {
                return Err(MfgError::NonPsdDiffusion);
            }
        }
        if g[i * d + i] < -tol {
            return Err(MfgError::NonPsdDiffusion);
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let det = g[i * d + i] * g[j * d + j] - g[i * d + j] * g[j * d + i];
            if det < -tol {
                return Err(MfgError::NonPsdDiffusion);
            }
        }
    }
    if d == 3 {
        let det = g[0] * (g[4] * g[8] - g[5] * g[7]) - g[1] * (g[3] * g[8] - g[5] * g[6])
            + g[2] * (g[3] * g[7] - g[4] * g[6]);
        if det < -tol {
            return Err(MfgError::NonPsdDiffusion);
        }
    }
    Ok(())
}
