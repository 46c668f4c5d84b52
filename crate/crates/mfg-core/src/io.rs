//! Text serialization of solution artifacts.
//!
//! All files start with a `mfg-<kind> v1` line. Floats are written with
//! Rust's shortest-roundtrip formatting, so reading back reproduces the
//! exact bit pattern and repeated runs produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::equilibrium::Diagnostics;
use crate::error::{MfgError, Result};
use crate::grid::TimeGrid;
use crate::measures::{EmpiricalMeasure, FlowOfProbabilities, PathMeasure};
use crate::simulator::PathEnsemble;
use crate::value::ValueGrid;

fn parse_err(msg: impl Into<String>) -> MfgError {
    MfgError::Parse(msg.into())
}

fn floats_line(out: &mut String, vals: &[f64]) {
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| tok.parse::<f64>().map_err(|e| parse_err(format!("bad float '{tok}': {e}"))))
        .collect()
}

fn expect_header<'a>(lines: &mut impl Iterator<Item = &'a str>, tag: &str) -> Result<()> {
    match lines.next() {
        Some(line) if line.trim() == format!("{tag} v1") => Ok(()),
        other => Err(parse_err(format!("expected '{tag} v1' header, found {other:?}"))),
    }
}

fn keyed_line<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<String> {
    let line = lines.next().ok_or_else(|| parse_err(format!("missing '{key}' line")))?;
    let rest = line
        .strip_prefix(key)
        .ok_or_else(|| parse_err(format!("expected '{key}', found '{line}'")))?;
    Ok(rest.trim().to_string())
}

pub fn write_value_grid(path: &Path, v: &ValueGrid) -> Result<()> {
    let mut out = String::new();
    out.push_str("mfg-value v1\n");
    let _ = writeln!(out, "dim {}", v.dim());
    let _ = writeln!(out, "radius {}", v.radius());
    let _ = writeln!(out, "h {}", v.h());
    let _ = writeln!(out, "npts {}", v.nodes_per_axis());
    out.push_str("times ");
    floats_line(&mut out, v.grid().times());
    for k in 0..v.grid().len() {
        floats_line(&mut out, v.slice(k));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_value_grid(path: &Path) -> Result<ValueGrid> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    expect_header(&mut lines, "mfg-value")?;
    let dim: usize = keyed_line(&mut lines, "dim")?.parse().map_err(|_| parse_err("bad dim"))?;
    let radius: f64 =
        keyed_line(&mut lines, "radius")?.parse().map_err(|_| parse_err("bad radius"))?;
    let h: f64 = keyed_line(&mut lines, "h")?.parse().map_err(|_| parse_err("bad h"))?;
    let npts: usize =
        keyed_line(&mut lines, "npts")?.parse().map_err(|_| parse_err("bad npts"))?;
    let times = parse_floats(&keyed_line(&mut lines, "times")?)?;
    let grid = TimeGrid::new(times)?;
    let total = npts.pow(dim as u32);
    let mut values = Vec::with_capacity(grid.len() * total);
    for k in 0..grid.len() {
        let row =
            parse_floats(lines.next().ok_or_else(|| parse_err(format!("missing slice {k}")))?)?;
        if row.len() != total {
            return Err(parse_err(format!("slice {k} has {} values, expected {total}", row.len())));
        }
        values.extend_from_slice(&row);
    }
    ValueGrid::from_raw(grid, dim, radius, h, npts, values)
}

pub fn write_flow(path: &Path, flow: &FlowOfProbabilities) -> Result<()> {
    let mut out = String::new();
    out.push_str("mfg-flow v1\n");
    let _ = writeln!(out, "dim {}", flow.dim());
    out.push_str("times ");
    floats_line(&mut out, flow.grid().times());
    for m in flow.measures() {
        let _ = writeln!(out, "measure {}", m.len());
        floats_line(&mut out, m.points_flat());
        floats_line(&mut out, m.weights());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_flow(path: &Path) -> Result<FlowOfProbabilities> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    expect_header(&mut lines, "mfg-flow")?;
    let dim: usize = keyed_line(&mut lines, "dim")?.parse().map_err(|_| parse_err("bad dim"))?;
    let times = parse_floats(&keyed_line(&mut lines, "times")?)?;
    let grid = TimeGrid::new(times)?;
    let mut measures = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let n: usize = keyed_line(&mut lines, "measure")?
            .parse()
            .map_err(|_| parse_err(format!("bad measure count at node {k}")))?;
        let pts = parse_floats(lines.next().ok_or_else(|| parse_err("missing points"))?)?;
        let w = parse_floats(lines.next().ok_or_else(|| parse_err("missing weights"))?)?;
        if pts.len() != n * dim || w.len() != n {
            return Err(parse_err(format!("measure {k} size mismatch")));
        }
        measures.push(EmpiricalMeasure::new(pts, w, dim)?);
    }
    FlowOfProbabilities::new(grid, measures)
}

pub fn write_path_measure(path: &Path, chi: &PathMeasure) -> Result<()> {
    let mut out = String::new();
    out.push_str("mfg-paths v1\n");
    let dim = chi.trajectories()[0].dim();
    let _ = writeln!(out, "dim {dim}");
    out.push_str("times ");
    floats_line(&mut out, chi.grid().times());
    out.push_str("weights ");
    floats_line(&mut out, chi.weights());
    for traj in chi.trajectories() {
        let nt = traj.grid().len();
        let mut x = Vec::with_capacity(nt * dim);
        let mut z = Vec::with_capacity(nt);
        for k in 0..nt {
            x.extend_from_slice(traj.state_at(k));
            z.push(traj.payoff_at(k));
        }
        floats_line(&mut out, &x);
        floats_line(&mut out, &z);
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_path_measure(path: &Path) -> Result<PathMeasure> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    expect_header(&mut lines, "mfg-paths")?;
    let dim: usize = keyed_line(&mut lines, "dim")?.parse().map_err(|_| parse_err("bad dim"))?;
    let times = parse_floats(&keyed_line(&mut lines, "times")?)?;
    let grid = TimeGrid::new(times)?;
    let weights = parse_floats(&keyed_line(&mut lines, "weights")?)?;
    let mut trajs = Vec::with_capacity(weights.len());
    for i in 0..weights.len() {
        let x = parse_floats(lines.next().ok_or_else(|| parse_err(format!("missing path {i}")))?)?;
        let z =
            parse_floats(lines.next().ok_or_else(|| parse_err(format!("missing payoffs {i}")))?)?;
        trajs.push(Trajectory::new(grid.clone(), dim, x, z, 0)?);
    }
    PathMeasure::new(trajs, weights)
}

/// Columnar ensemble dump: one record per (path, node) with time, state,
/// accumulated payoff, control index and jump flag.
pub fn write_ensemble(path: &Path, ens: &PathEnsemble) -> Result<()> {
    let dim = ens.dim();
    let mut out = String::new();
    out.push_str("path node t");
    for k in 0..dim {
        let _ = write!(out, " x{k}");
    }
    out.push_str(" z u jump\n");
    let times = ens.grid().times().to_vec();
    for p in 0..ens.particles() {
        for (node, t) in times.iter().enumerate() {
            let _ = write!(out, "{p} {node} {t}");
            for v in ens.state_at(p, node) {
                let _ = write!(out, " {v}");
            }
            let (u, jump) = if node + 1 < times.len() {
                (ens.control_at(p, node) as i64, ens.jumped_at(p, node) as u8)
            } else {
                (-1, 0)
            };
            let _ = writeln!(out, " {} {u} {jump}", ens.payoff_at(p, node));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Solver provenance needed to reconstruct the best-response ensemble.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionMeta {
    /// "stochastic" or "minimax".
    pub kind: String,
    pub seed: u64,
    pub dt: f64,
    pub particles: usize,
    pub converged: bool,
}

pub fn write_meta(path: &Path, meta: &SolutionMeta) -> Result<()> {
    let text = toml::to_string_pretty(meta).map_err(|e| parse_err(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<SolutionMeta> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| parse_err(e.to_string()))
}

pub fn write_diagnostics(path: &Path, diag: &Diagnostics) -> Result<()> {
    let mut out = String::new();
    out.push_str("mfg-diagnostics v1\n");
    let _ = writeln!(out, "converged {}", diag.converged);
    let _ = writeln!(out, "iterations {}", diag.iterations);
    out.push_str("increments ");
    floats_line(&mut out, &diag.increments);
    for note in &diag.notes {
        let _ = writeln!(out, "note {note}");
    }
    std::fs::write(path, out)?;
    Ok(())
}
