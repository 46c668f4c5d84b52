//! `mfg` — command line front end for the mfg-core solvers.
//!
//! Exit codes: 0 on success, 1 on configuration/validation problems,
//! 2 when a solve or verification fails numerically.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfg_core::equilibrium::{
    policy_dictionary, solve_minimax_mfg, solve_stochastic_mfg, verify_minimax,
    verify_probabilistic, Diagnostics, EquilibriumSolution,
};
use mfg_core::harness::{run_bounds_audit, run_convergence_study};
use mfg_core::io::{
    read_flow, read_meta, read_path_measure, read_value_grid, write_diagnostics, write_ensemble,
    write_flow, write_meta, write_path_measure, write_value_grid, SolutionMeta,
};
use mfg_core::measures::FlowOfProbabilities;
use mfg_core::scenario::Scenario;
use mfg_core::simulator::{simulate, ControlPolicy, SimConfig};
use mfg_core::value::extract_policy;
use mfg_core::TimeGrid;

#[derive(Parser)]
#[command(name = "mfg", version, about = "Mean field game solvers and convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Path to the scenario description (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory. Falls back to $MFG_OUT_DIR, then to "./out".
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the sampling seed from the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the particle count.
    #[arg(long)]
    particles: Option<usize>,
    /// Override the time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the spatial mesh width.
    #[arg(long, value_name = "H")]
    grid_h: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a particle ensemble of one family member under the least-effort
    /// constant control and dump all paths.
    Simulate {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Which member of the family to simulate (defaults to the first).
        #[arg(long)]
        member: Option<u32>,
    },
    /// Compute the stochastic equilibrium of one family member.
    SolveMfg {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        member: Option<u32>,
    },
    /// Compute the deterministic (minimax) equilibrium of the limit game.
    SolveMinimax {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// Re-check a stored solution directory against its own scenario copy.
    Verify {
        /// Directory previously produced by solve-mfg or solve-minimax.
        #[arg(long)]
        solution: PathBuf,
        /// Acceptance tolerance for the self-consistency reports.
        #[arg(long, default_value_t = 0.15)]
        tol: f64,
    },
    /// Run the full convergence study of the family toward its limit.
    Converge {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// Audit the quantitative moment and coupling bounds for one member.
    AuditBounds {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long, default_value_t = 4)]
        n: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    };
    ExitCode::from(code)
}

enum CliError {
    /// Bad input: missing files, malformed scenarios, invalid overrides.
    Config(String),
    /// The solve or verification itself failed.
    Numerical(String),
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn numerical_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, member } => cmd_simulate(&common, member),
        Command::SolveMfg { common, member } => cmd_solve_mfg(&common, member),
        Command::SolveMinimax { common } => cmd_solve_minimax(&common),
        Command::Verify { solution, tol } => cmd_verify(&solution, tol),
        Command::Converge { common } => cmd_converge(&common),
        Command::AuditBounds { common, n } => cmd_audit(&common, n),
    }
}

/// Load the scenario, apply the command line overrides, and resolve the
/// output directory.
fn prepare(common: &ScenarioArgs) -> Result<(Scenario, PathBuf), CliError> {
    if !common.scenario.exists() {
        return Err(CliError::Config(format!(
            "scenario file not found: {}",
            common.scenario.display()
        )));
    }
    let mut scenario = Scenario::load(&common.scenario).map_err(config_err)?;
    if let Some(seed) = common.seed {
        scenario.numerics.seed = seed;
    }
    if let Some(p) = common.particles {
        scenario.numerics.particles = p;
    }
    if let Some(dt) = common.dt {
        scenario.numerics.dt = dt;
    }
    if let Some(h) = common.grid_h {
        scenario.numerics.h = h;
    }
    scenario.validate().map_err(config_err)?;
    let out = match &common.out {
        Some(dir) => dir.clone(),
        None => std::env::var_os("MFG_OUT_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out")),
    };
    std::fs::create_dir_all(&out).map_err(config_err)?;
    Ok((scenario, out))
}

fn member_or_first(scenario: &Scenario, member: Option<u32>) -> Result<u32, CliError> {
    let n = member.unwrap_or(scenario.family.n_list[0]);
    if !scenario.family.n_list.contains(&n) {
        return Err(CliError::Config(format!(
            "member {n} is not in the scenario family {:?}",
            scenario.family.n_list
        )));
    }
    Ok(n)
}

fn cmd_simulate(common: &ScenarioArgs, member: Option<u32>) -> Result<(), CliError> {
    let (scenario, out) = prepare(common)?;
    let n = member_or_first(&scenario, member)?;
    let spec = scenario.family_spec(n).map_err(config_err)?;
    let m0 = scenario.initial_measure_n(n).map_err(config_err)?;
    let steps = (scenario.scenario.horizon / scenario.numerics.dt).round() as usize;
    let grid = TimeGrid::uniform(scenario.scenario.horizon, steps).map_err(config_err)?;
    let zeta = FlowOfProbabilities::constant(grid, m0.clone());
    let policy = ControlPolicy::Constant(spec.controls.smallest_norm_index());
    let cfg = SimConfig::new(
        scenario.numerics.particles,
        scenario.numerics.dt,
        scenario.numerics.seed,
    );
    let ens = simulate(&spec, &policy, &zeta, &m0, &cfg).map_err(numerical_err)?;
    write_ensemble(&out.join("ensemble.txt"), &ens).map_err(numerical_err)?;
    scenario.save(&out.join("scenario.toml")).map_err(numerical_err)?;
    println!(
        "simulated member n={n}: {} particles over {} steps -> {}",
        ens.particles(),
        ens.grid().len() - 1,
        out.display()
    );
    Ok(())
}

fn write_solution(
    out: &Path,
    scenario: &Scenario,
    sol: &EquilibriumSolution,
    kind: &str,
) -> Result<(), CliError> {
    write_value_grid(&out.join("value.txt"), &sol.value).map_err(numerical_err)?;
    write_flow(&out.join("flow.txt"), &sol.flow).map_err(numerical_err)?;
    if let Some(chi) = &sol.traj_measure {
        write_path_measure(&out.join("chi.txt"), chi).map_err(numerical_err)?;
    }
    if let Some(ens) = &sol.ensemble {
        write_ensemble(&out.join("ensemble.txt"), ens).map_err(numerical_err)?;
    }
    let meta = SolutionMeta {
        kind: kind.to_string(),
        seed: scenario.numerics.seed,
        dt: scenario.numerics.dt,
        particles: scenario.numerics.particles,
        converged: sol.diagnostics.converged,
    };
    write_meta(&out.join("meta.toml"), &meta).map_err(numerical_err)?;
    write_diagnostics(&out.join("diagnostics.txt"), &sol.diagnostics).map_err(numerical_err)?;
    // keep the run self-contained so `verify --solution` needs nothing else
    scenario.save(&out.join("scenario.toml")).map_err(numerical_err)?;
    Ok(())
}

fn print_diagnostics(diag: &Diagnostics) {
    let status = if diag.converged { "converged" } else { "did not converge" };
    println!(
        "{status} after {} iterations (last increment {})",
        diag.iterations,
        diag.increments.last().copied().unwrap_or(0.0)
    );
    for note in &diag.notes {
        println!("  {note}");
    }
}

fn cmd_solve_mfg(common: &ScenarioArgs, member: Option<u32>) -> Result<(), CliError> {
    let (scenario, out) = prepare(common)?;
    let n = member_or_first(&scenario, member)?;
    let spec = scenario.family_spec(n).map_err(config_err)?;
    let m0 = scenario.initial_measure_n(n).map_err(config_err)?;
    let grid_cfg = scenario.grid_config().map_err(config_err)?;
    let iter = scenario.iter_config();
    let sol = solve_stochastic_mfg(&spec, scenario.scenario.horizon, &m0, &grid_cfg, &iter)
        .map_err(numerical_err)?;
    write_solution(&out, &scenario, &sol, "stochastic")?;
    println!("stochastic equilibrium of member n={n} -> {}", out.display());
    print_diagnostics(&sol.diagnostics);
    Ok(())
}

fn cmd_solve_minimax(common: &ScenarioArgs) -> Result<(), CliError> {
    let (scenario, out) = prepare(common)?;
    let spec = scenario.limit_spec().map_err(config_err)?;
    let m0 = scenario.initial_measure().map_err(config_err)?;
    let grid_cfg = scenario.grid_config().map_err(config_err)?;
    let iter = scenario.iter_config();
    let sol = solve_minimax_mfg(&spec, scenario.scenario.horizon, &m0, &grid_cfg, &iter)
        .map_err(numerical_err)?;
    write_solution(&out, &scenario, &sol, "minimax")?;
    println!("minimax equilibrium -> {}", out.display());
    print_diagnostics(&sol.diagnostics);
    Ok(())
}

fn cmd_verify(dir: &Path, tol: f64) -> Result<(), CliError> {
    let meta = read_meta(&dir.join("meta.toml")).map_err(config_err)?;
    let scenario = Scenario::load(&dir.join("scenario.toml")).map_err(config_err)?;
    let value = read_value_grid(&dir.join("value.txt")).map_err(config_err)?;
    let flow = read_flow(&dir.join("flow.txt")).map_err(config_err)?;
    match meta.kind.as_str() {
        "minimax" => {
            let spec = scenario.limit_spec().map_err(config_err)?;
            let chi = read_path_measure(&dir.join("chi.txt")).map_err(config_err)?;
            let m0 = scenario.initial_measure().map_err(config_err)?;
            let sol = EquilibriumSolution {
                value,
                flow,
                traj_measure: Some(chi),
                ensemble: None,
                m0,
                diagnostics: Diagnostics { converged: meta.converged, ..Default::default() },
            };
            let report = verify_minimax(&sol, &spec, tol).map_err(numerical_err)?;
            println!(
                "initial gap {} | pushforward gap {} | support residual {}",
                report.initial_gap, report.pushforward_gap, report.support_residual
            );
            if report.pass {
                println!("verify: pass");
                Ok(())
            } else {
                Err(CliError::Numerical(format!(
                    "minimax self-consistency failed at tolerance {tol}"
                )))
            }
        }
        "stochastic" => {
            // the ensemble is not stored in replayable form; rebuild it from
            // the recorded seed by simulating the extracted policy
            let n = scenario.family.n_list[0];
            let spec = scenario.family_spec(n).map_err(config_err)?;
            let m0 = scenario.initial_measure_n(n).map_err(config_err)?;
            let value = std::sync::Arc::new(value);
            let policy = extract_policy(value.clone(), &spec);
            let cfg = SimConfig::new(meta.particles, meta.dt, meta.seed);
            let ens = simulate(&spec, &policy, &flow, &m0, &cfg).map_err(numerical_err)?;
            let sol = EquilibriumSolution {
                value: std::sync::Arc::try_unwrap(value).unwrap_or_else(|v| (*v).clone()),
                flow,
                traj_measure: None,
                ensemble: Some(ens),
                m0,
                diagnostics: Diagnostics { converged: meta.converged, ..Default::default() },
            };
            let policies =
                policy_dictionary(&spec, sol.flow.grid(), 8, meta.seed).map_err(config_err)?;
            let starts: Vec<(f64, Vec<f64>)> = [0usize, sol.m0.len() / 2, sol.m0.len() - 1]
                .iter()
                .map(|&i| (0.0, sol.m0.point(i).to_vec()))
                .collect();
            let report = verify_probabilistic(&sol, &spec, &policies, &starts, 400, tol)
                .map_err(numerical_err)?;
            println!(
                "value gap {} (se {}) | flow gap {} | deviation gap {} (se {})",
                report.value_gap,
                report.value_std_err,
                report.flow_gap,
                report.deviation_gap,
                report.deviation_std_err
            );
            if report.pass {
                println!("verify: pass");
                Ok(())
            } else {
                Err(CliError::Numerical(format!(
                    "stochastic self-consistency failed at tolerance {tol}"
                )))
            }
        }
        other => Err(CliError::Config(format!("unknown solution kind {other:?}"))),
    }
}

fn cmd_converge(common: &ScenarioArgs) -> Result<(), CliError> {
    let (scenario, out) = prepare(common)?;
    let report = run_convergence_study(&scenario, Some(&out)).map_err(numerical_err)?;
    scenario.save(&out.join("scenario.toml")).map_err(numerical_err)?;
    print!("{}", report.to_csv());
    println!(
        "noise floor: w2 {} value {} | fitted constants: flow {} coupled {}",
        report.noise_floor_w2,
        report.noise_floor_value,
        report.fitted_flow_constant,
        report.fitted_coupled_constant
    );
    Ok(())
}

fn cmd_audit(common: &ScenarioArgs, n: u32) -> Result<(), CliError> {
    let (scenario, _out) = prepare(common)?;
    let audit = run_bounds_audit(&scenario, n).map_err(numerical_err)?;
    println!("{}", audit.summary());
    if audit.c1_pass && audit.c3_pass && audit.c5_pass {
        Ok(())
    } else {
        Err(CliError::Numerical("a quantitative bound was violated".into()))
    }
}
