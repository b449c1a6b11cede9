//! `lagflow`: identity checks, flow runs and Hodge splits from the command line.
//!
//! Exit codes: 0 success, 1 bad configuration or unreadable input, 2 a
//! numerical check failed (identity threshold, Lagrangian violation, solver
//! divergence, degenerate geometry).

mod commands;
mod config;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use lagflow_core::flow::ThetaSource;
use lagflow_core::{Error as CoreError, Scheme};

use crate::config::RunConfig;
use crate::manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "lagflow", version, about)]
struct Cli {
    /// JSON config with keys `scenario`, `params`, `grid`, `flow`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "LAGFLOW_OUT",
        default_value = "lagflow-out"
    )]
    out: PathBuf,
    /// Worker threads for node-parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single thread; outputs are then bit-for-bit reproducible.
    #[arg(long, global = true, conflicts_with = "threads")]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario, e.g. `circle`, `product_torus(1,3)`.
    #[arg(long)]
    scenario: Option<String>,
    /// Nodes per parameter axis.
    #[arg(long)]
    n_grid: Option<usize>,
    /// `spectral` or `central4`.
    #[arg(long)]
    scheme: Option<Scheme>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate every applicable structural identity against its threshold.
    VerifyIdentities {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Raise ω on the wrong index (exercises the consistency gate).
        #[arg(long, hide = true)]
        flip_omega_raising: bool,
    },
    /// Integrate the flow and write diagnostics and snapshots.
    Flow {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        /// `mcf` or `grad:<function>`.
        #[arg(long)]
        theta: Option<ThetaSource>,
        /// Steps between records.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Split a snapshot's one-form into coclosed and exact parts.
    Hodge {
        snapshot: PathBuf,
        /// Node where the potential is pinned to zero.
        #[arg(long, default_value_t = 0)]
        basepoint: usize,
    },
}

impl ScenarioArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = &self.scenario {
            cfg.scenario = Some(s.clone());
        }
        if let Some(n) = self.n_grid {
            cfg.grid.n = n;
        }
        if let Some(s) = self.scheme {
            cfg.grid.scheme = s;
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<CoreError>()) {
        Some(
            CoreError::LagrangianViolation { .. }
            | CoreError::SolverDivergence { .. }
            | CoreError::NIsomorphismFailure { .. }
            | CoreError::DegenerateImmersion { .. }
            | CoreError::NotLagrangian { .. }
            | CoreError::SingularityStop { .. },
        ) => commands::EXIT_CHECK_FAILED,
        _ => 1,
    }
}

fn run(cli: &Cli, cfg: &RunConfig, manifest: &mut RunManifest) -> Result<u8> {
    match &cli.command {
        Command::VerifyIdentities {
            flip_omega_raising, ..
        } => commands::verify_identities(cfg, *flip_omega_raising, &cli.out, manifest),
        Command::Flow { .. } => commands::flow(cfg, &cli.out, manifest),
        Command::Hodge {
            snapshot,
            basepoint,
        } => commands::hodge(snapshot, *basepoint, &cli.out, manifest),
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::VerifyIdentities { scenario, .. } => scenario.apply(&mut cfg),
        Command::Flow {
            scenario,
            dt,
            t_end,
            theta,
            stride,
        } => {
            scenario.apply(&mut cfg);
            if let Some(v) = dt {
                cfg.flow.dt = *v;
            }
            if let Some(v) = t_end {
                cfg.flow.t_end = *v;
            }
            if let Some(v) = theta {
                cfg.flow.theta = v.clone();
            }
            if let Some(v) = stride {
                cfg.flow.snapshot_stride = *v;
            }
        }
        Command::Hodge { .. } => {}
    }
    Ok(cfg)
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::VerifyIdentities { .. } => "verify-identities",
        Command::Flow { .. } => "flow",
        Command::Hodge { .. } => "hodge",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let threads = if cli.serial { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let start = Instant::now();
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let mut manifest = RunManifest::new(command_name(&cli.command), &cfg);
    let code = match run(&cli, &cfg, &mut manifest) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            manifest.summary = serde_json::json!({ "error": format!("{e:#}") });
            exit_code(&e)
        }
    };
    manifest.exit_code = code;
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    if let Err(e) = manifest.write(&cli.out) {
        eprintln!("error: writing manifest: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_failures_exit_two() {
        let lv = anyhow::Error::new(CoreError::LagrangianViolation {
            t: 0.1,
            omega_max: 1.0,
        });
        assert_eq!(exit_code(&lv), 2);
        let sd = anyhow::Error::new(CoreError::SolverDivergence {
            iterations: 10,
            residual: 1.0,
        })
        .context("decomposing");
        assert_eq!(exit_code(&sd), 2);
        let bad = anyhow::Error::new(CoreError::UnknownScenario("x".into()));
        assert_eq!(exit_code(&bad), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("missing file")), 1);
    }
}
