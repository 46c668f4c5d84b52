//! Scenario files: declarative description of a game family.
//!
//! A scenario fixes the limiting deterministic game (drift, payoffs,
//! control set, initial cloud), a family rule mapping the index `n` to a
//! noisy generator (diffusion scale `1/n`, jump atoms with rate `n * r` and
//! displacement `y / n`, initial-cloud shift `s / n`), the list of `n`
//! values to study, numeric settings, and the declared growth/Lipschitz
//! constants used by the bound audits.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::equilibrium::IterConfig;
use crate::error::{MfgError, Result};
use crate::generator::{ControlSet, GeneratorSpec};
use crate::measures::EmpiricalMeasure;
use crate::value::GridConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario: Meta,
    pub controls: Controls,
    pub dynamics: Dynamics,
    pub payoff: Payoff,
    pub terminal: Terminal,
    pub initial: Initial,
    pub family: Family,
    pub numerics: Numerics,
    pub constants: Constants,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    pub dim: usize,
    pub horizon: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Controls {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub count: Vec<usize>,
}

/// Drift `f = control_gain * u + state_gain * x + mean_reversion * (mean(m) - x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    #[serde(default = "one")]
    pub control_gain: f64,
    #[serde(default)]
    pub state_gain: f64,
    #[serde(default)]
    pub mean_reversion: f64,
}

/// Running payoff `g = constant - control_cost ||u||^2 - crowd_aversion ||x - mean(m)||^2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payoff {
    #[serde(default)]
    pub control_cost: f64,
    #[serde(default)]
    pub crowd_aversion: f64,
    #[serde(default)]
    pub constant: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Terminal {
    /// zero | neg_abs | crowd | linear
    pub kind: String,
    #[serde(default = "one")]
    pub weight: f64,
}

/// Uniform cloud on the box `[lo, hi]`: evenly spaced cell midpoints.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Family {
    /// `G_n = (diffusion_scale / n) I`; zero disables diffusion.
    #[serde(default)]
    pub diffusion_scale: f64,
    /// Jump atoms; member `n` uses rate `n * rate` and displacement `y / n`.
    #[serde(default)]
    pub jumps: Vec<JumpAtom>,
    /// `m0^n` is `m0` shifted by `initial_shift / n` along the first axis.
    #[serde(default)]
    pub initial_shift: f64,
    pub n_list: Vec<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpAtom {
    pub rate: f64,
    pub displacement: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub particles: usize,
    pub dt: f64,
    pub h: f64,
    /// Zero means: derive from the a-priori trajectory bound.
    #[serde(default)]
    pub box_radius: f64,
    pub seed: u64,
    pub tol: f64,
    pub damping: f64,
    pub max_iter: usize,
}

/// Declared structural constants entering the explicit bound formulas.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// Growth constant `M`.
    pub m_growth: f64,
    /// Lipschitz constant `K`.
    pub k_lipschitz: f64,
    /// Control-set radius bound `R`.
    pub r_bound: f64,
}

fn one() -> f64 {
    1.0
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| MfgError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| MfgError::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.scenario.dim;
        if d == 0 || d > 3 {
            return Err(MfgError::InvalidParameter("dim must be 1..=3".into()));
        }
        if self.scenario.horizon <= 0.0 {
            return Err(MfgError::InvalidParameter("horizon must be positive".into()));
        }
        for (name, v) in [
            ("controls.lo", self.controls.lo.len()),
            ("controls.hi", self.controls.hi.len()),
            ("controls.count", self.controls.count.len()),
            ("initial.lo", self.initial.lo.len()),
            ("initial.hi", self.initial.hi.len()),
        ] {
            if v != d {
                return Err(MfgError::InvalidParameter(format!("{name} must have length {d}")));
            }
        }
        if self.initial.points == 0 {
            return Err(MfgError::InvalidParameter("initial.points must be >= 1".into()));
        }
        match self.terminal.kind.as_str() {
            "zero" | "neg_abs" | "crowd" | "linear" => {}
            other => {
                return Err(MfgError::InvalidParameter(format!("unknown terminal kind '{other}'")))
            }
        }
        if self.family.n_list.is_empty() {
            return Err(MfgError::InvalidParameter("family.n_list must be nonempty".into()));
        }
        if self.family.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MfgError::InvalidParameter("family.n_list must be increasing".into()));
        }
        if self.family.n_list[0] == 0 {
            return Err(MfgError::InvalidParameter("family indices must be >= 1".into()));
        }
        for atom in &self.family.jumps {
            if atom.rate < 0.0 || atom.displacement.len() != d {
                return Err(MfgError::InvalidParameter("malformed jump atom".into()));
            }
        }
        if self.numerics.dt <= 0.0 || self.numerics.h <= 0.0 {
            return Err(MfgError::InvalidParameter("dt and h must be positive".into()));
        }
        if !(self.numerics.damping > 0.0 && self.numerics.damping <= 1.0) {
            return Err(MfgError::InvalidParameter("damping must lie in (0, 1]".into()));
        }
        if self.numerics.max_iter == 0 || self.numerics.particles == 0 {
            return Err(MfgError::InvalidParameter("max_iter and particles must be >= 1".into()));
        }
        if self.constants.m_growth <= 0.0 || self.constants.k_lipschitz <= 0.0 {
            return Err(MfgError::InvalidParameter("declared constants must be positive".into()));
        }
        Ok(())
    }

    fn control_set(&self) -> Result<ControlSet> {
        ControlSet::grid(&self.controls.lo, &self.controls.hi, &self.controls.count)
    }

    fn build_spec(&self, n: Option<u32>) -> Result<GeneratorSpec> {
        let d = self.scenario.dim;
        let dyn_ = self.dynamics.clone();
        let drift: crate::generator::DriftFn = Arc::new(
            move |_t: f64, x: &[f64], m: &EmpiricalMeasure, u: &[f64], out: &mut [f64]| {
                let mean = m.mean();
                for i in 0..x.len() {
                    out[i] = dyn_.control_gain * u[i]
                        + dyn_.state_gain * x[i]
                        + dyn_.mean_reversion * (mean[i] - x[i]);
                }
            },
        );
        let pay = self.payoff.clone();
        let running: crate::generator::RunningPayoffFn =
            Arc::new(move |_t: f64, x: &[f64], m: &EmpiricalMeasure, u: &[f64]| {
                let mean = m.mean();
                let u2: f64 = u.iter().map(|v| v * v).sum();
                let dev2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
                pay.constant - pay.control_cost * u2 - pay.crowd_aversion * dev2
            });
        let term = self.terminal.clone();
        let terminal: crate::generator::TerminalPayoffFn =
            Arc::new(move |x: &[f64], m: &EmpiricalMeasure| match term.kind.as_str() {
                "zero" => 0.0,
                "neg_abs" => {
                    -term.weight * x.iter().map(|v| v * v).sum::<f64>().sqrt()
                }
                "crowd" => {
                    let mean = m.mean();
                    -term.weight
                        * x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                }
                "linear" => term.weight * x[0],
                _ => unreachable!("validated terminal kind"),
            });

        let (diffusion, jumps) = match n {
            None => (None, Vec::new()),
            Some(n) => {
                let diffusion: Option<crate::generator::DiffusionFn> =
                    if self.family.diffusion_scale > 0.0 {
                        let scale = self.family.diffusion_scale / n as f64;
                        let d = d;
                        Some(Arc::new(
                            move |_t: f64,
                                  _x: &[f64],
                                  _m: &EmpiricalMeasure,
                                  _u: &[f64],
                                  out: &mut [f64]| {
                                out.fill(0.0);
                                for i in 0..d {
                                    out[i * d + i] = scale;
                                }
                            },
                        ))
                    } else {
                        None
                    };
                let jumps = self
                    .family
                    .jumps
                    .iter()
                    .map(|atom| {
                        let rate = atom.rate * n as f64;
                        let disp: Vec<f64> =
                            atom.displacement.iter().map(|y| y / n as f64).collect();
                        let f: crate::generator::JumpFn = Arc::new(
                            move |_t: f64,
                                  _x: &[f64],
                                  _m: &EmpiricalMeasure,
                                  _u: &[f64],
                                  out: &mut [f64]| {
                                out.copy_from_slice(&disp);
                                rate
                            },
                        );
                        f
                    })
                    .collect();
                (diffusion, jumps)
            }
        };

        Ok(GeneratorSpec {
            dim: d,
            controls: self.control_set()?,
            diffusion,
            drift,
            jumps,
            running_payoff: running,
            terminal_payoff: terminal,
        })
    }

    /// The deterministic limiting generator.
    pub fn limit_spec(&self) -> Result<GeneratorSpec> {
        self.build_spec(None)
    }

    /// Family member `n`: limit dynamics plus scaled diffusion and jumps.
    pub fn family_spec(&self, n: u32) -> Result<GeneratorSpec> {
        if n == 0 {
            return Err(MfgError::InvalidParameter("family index must be >= 1".into()));
        }
        self.build_spec(Some(n))
    }

    /// The limiting initial cloud (cell midpoints of a uniform box).
    pub fn initial_measure(&self) -> Result<EmpiricalMeasure> {
        self.initial_with_shift(0.0)
    }

    /// `m0^n`: the limit cloud shifted by `initial_shift / n` along axis 0.
    pub fn initial_measure_n(&self, n: u32) -> Result<EmpiricalMeasure> {
        if n == 0 {
            return Err(MfgError::InvalidParameter("family index must be >= 1".into()));
        }
        self.initial_with_shift(self.family.initial_shift / n as f64)
    }

    fn initial_with_shift(&self, shift: f64) -> Result<EmpiricalMeasure> {
        let d = self.scenario.dim;
        let total = self.initial.points;
        // per-axis counts: as close to total^(1/d) as possible, axis 0 absorbs
        // the remainder so the product equals at least `total` in 1-D exactly
        let per_axis = if d == 1 {
            vec![total]
        } else {
            let base = (total as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
            let mut c = vec![base; d];
            c[0] = (total + base.pow(d as u32 - 1) - 1) / base.pow(d as u32 - 1);
            c
        };
        let counts = per_axis;
        let n_pts: usize = counts.iter().product();
        let mut pts = Vec::with_capacity(n_pts * d);
        for flat in 0..n_pts {
            let mut rem = flat;
            for k in 0..d {
                let i = rem % counts[k];
                rem /= counts[k];
                let lo = self.initial.lo[k];
                let hi = self.initial.hi[k];
                let mut v = lo + (hi - lo) * (i as f64 + 0.5) / counts[k] as f64;
                if k == 0 {
                    v += shift;
                }
                pts.push(v);
            }
        }
        EmpiricalMeasure::uniform(pts, d)
    }

    /// Grid config with the box radius derived from the a-priori trajectory
    /// bound when not set explicitly.
    pub fn grid_config(&self) -> Result<GridConfig> {
        let radius = if self.numerics.box_radius > 0.0 {
            self.numerics.box_radius
        } else {
            let m0 = self.initial_measure()?;
            let m = self.constants.m_growth;
            let t = self.scenario.horizon;
            // Gronwall estimate of the flow spread over the horizon
            let sup_sigma = (m0.sigma() + self.family.initial_shift.abs() + m * t) * (m * t).exp();
            crate::value::box_radius_for(&m0, m, t, sup_sigma)
        };
        Ok(GridConfig::new(radius, self.numerics.h))
    }

    pub fn iter_config(&self) -> IterConfig {
        IterConfig {
            max_iter: self.numerics.max_iter,
            damping: self.numerics.damping,
            tol: self.numerics.tol,
            particles: self.numerics.particles,
            dt: self.numerics.dt,
            seed: self.numerics.seed,
        }
    }

    /// The in-repo reference scenario: 1-D crowd-aversion game with control
    /// drift, vanishing diffusion `G_n = I/n`, and a genuinely coupled
    /// payoff.
    pub fn reference() -> Self {
        Scenario {
            scenario: Meta { name: "reference".into(), dim: 1, horizon: 1.0 },
            controls: Controls { lo: vec![-1.0], hi: vec![1.0], count: vec![21] },
            dynamics: Dynamics { control_gain: 1.0, state_gain: 0.0, mean_reversion: 0.0 },
            payoff: Payoff { control_cost: 0.5, crowd_aversion: 0.5, constant: 0.0 },
            terminal: Terminal { kind: "crowd".into(), weight: 1.0 },
            initial: Initial { lo: vec![-1.0], hi: vec![1.0], points: 200 },
            family: Family {
                diffusion_scale: 1.0,
                jumps: Vec::new(),
                initial_shift: 0.0,
                n_list: vec![1, 2, 4, 8, 16, 32],
            },
            numerics: Numerics {
                particles: 10_000,
                dt: 1.0 / 200.0,
                h: 1.0 / 100.0,
                box_radius: 4.0,
                seed: 42,
                tol: 0.02,
                damping: 0.5,
                max_iter: 30,
            },
            constants: Constants { m_growth: 1.0, k_lipschitz: 1.0, r_bound: 1.0 },
        }
    }
}

#[cfg(test)]
mod tests;
