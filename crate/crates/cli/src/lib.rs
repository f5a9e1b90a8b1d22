//! Command-line driver for qubit feedback-control experiments.
//!
//! `qubit-control <simulate|solve|evaluate|compare|lq>` reads an optional
//! TOML config (`--config`), applies flag overrides, runs the experiment,
//! writes its data files atomically and prints a JSON summary to stdout (or
//! `--output`) and a short table to stderr.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::LqMesh;
use crate::config::{resolve_params, GridSection, InitialSection, OutputSection, ParamsSection, RawConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "qubit-control", version, about = "Feedback control of a continuously monitored qubit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for Monte Carlo batches and grid sweeps.
    #[arg(long, global = true, env = "QUBIT_CONTROL_THREADS")]
    pub threads: Option<usize>,

    /// Leave wall time and generation time out of reports.
    #[arg(long, global = true)]
    pub no_timestamps: bool,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo cost of one policy, with optional trajectory CSVs.
    Simulate(ExperimentArgs),
    /// Backward solve on a state grid, saved as a .vgrid file.
    Solve(ExperimentArgs),
    /// Monte Carlo cost of a policy read from a .vgrid file.
    Evaluate(ExperimentArgs),
    /// Rank several policies on common random numbers.
    Compare(ExperimentArgs),
    /// Exact value function and feedback law of the angle model as CSV.
    Lq(LqArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// TOML experiment file; flags override its entries.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// diffusive-qubit, counting-qubit or angle-lq.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// zero, constant:<v>[,<v>], lq-closed-form or grid:<path>. Repeat for compare.
    #[arg(long = "policy")]
    pub policies: Vec<String>,
    /// euler-maruyama or milstein.
    #[arg(long)]
    pub integrator: Option<String>,
    #[arg(long)]
    pub kappa_s_sq: Option<f64>,
    #[arg(long)]
    pub kappa_f_sq: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Initial angle (angle-lq).
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<f64>,
    /// Initial Bloch vector `x,y,z` (qubit models).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub p0: Option<Vec<f64>>,
    /// Grid points per axis.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Time step of the backward solve.
    #[arg(long)]
    pub grid_dt: Option<f64>,
    /// Number of backward steps; 0 keeps only the terminal slice.
    #[arg(long)]
    pub steps: Option<usize>,
    /// closed-form or exhaustive.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub control_bound: Option<f64>,
    #[arg(long)]
    pub control_resolution: Option<usize>,
    /// Number of trajectory CSVs written by simulate.
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// JSON summary file (default: stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long)]
    pub vgrid: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

impl ExperimentArgs {
    fn overrides(&self) -> RawConfig {
        let policies = self.policies.clone();
        RawConfig {
            model: self.model.clone(),
            dt: self.dt,
            n_paths: self.n_paths,
            seed: self.seed,
            policy: None,
            policies: (!policies.is_empty()).then_some(policies),
            integrator: self.integrator.clone(),
            trajectories: self.trajectories,
            params: ParamsSection {
                kappa_s_sq: self.kappa_s_sq,
                kappa_f_sq: self.kappa_f_sq,
                alpha: self.alpha,
                horizon: self.horizon,
            },
            initial: InitialSection {
                theta: self.theta0,
                r: None,
                bloch: self.p0.clone(),
            },
            grid: GridSection {
                nodes: self.nodes,
                dt: self.grid_dt,
                steps: self.steps,
                mode: self.mode.clone(),
                control_bound: self.control_bound,
                control_resolution: self.control_resolution,
                lower: None,
                upper: None,
            },
            output: OutputSection {
                summary: self.output.clone(),
                trajectory: self.trajectory.clone(),
                vgrid: self.vgrid.clone(),
                csv: self.csv.clone(),
            },
        }
    }

    /// Loads the config file, if any, and applies the flags on top. Policies
    /// given as flags replace those in the file.
    pub fn resolve(&self, timestamps: bool) -> CliResult<config::ExperimentConfig> {
        let mut base = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        if !self.policies.is_empty() {
            base.policy = None;
            base.policies = None;
        }
        let mut cfg = base.overlay(self.overrides()).resolve()?;
        cfg.timestamps = timestamps;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct LqArgs {
    /// TOML file; only its `[params]` section is used.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 11)]
    pub t_points: usize,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub theta_min: f64,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub theta_max: f64,
    #[arg(long, default_value_t = 61)]
    pub theta_points: usize,
    /// Output file (default: stdout).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn emit_summary<T: serde::Serialize>(report: &T, path: Option<&PathBuf>) -> CliResult<()> {
    let json = output::to_json(report);
    match path {
        Some(p) => output::write_atomic(p, json.as_bytes()),
        None => std::io::stdout()
            .write_all(json.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

/// Runs one command. Tables go to stderr, summaries to stdout or a file.
pub fn run(cli: &Cli) -> CliResult<()> {
    let timestamps = !cli.no_timestamps;
    match &cli.command {
        Command::Simulate(args) => {
            let cfg = args.resolve(timestamps)?;
            let r = commands::simulate(&cfg)?;
            eprintln!("{:<24} {:>14} {:>12} {:>8}", "policy", "mean cost", "stderr", "paths");
            eprintln!("{:<24} {:>14.6} {:>12.3e} {:>8}", r.policy, r.mean_cost, r.stderr, r.n_paths);
            emit_summary(&r, cfg.output.summary.as_ref())
        }
        Command::Solve(args) => {
            let cfg = args.resolve(timestamps)?;
            let (_, r) = commands::solve(&cfg)?;
            eprintln!(
                "{}: {} nodes, {} slices, values in [{:.6}, {:.6}] -> {}",
                r.model, r.node_count, r.slices, r.value_min, r.value_max, r.vgrid
            );
            if let Some(c) = &r.lq_check {
                eprintln!(
                    "J(0, {:.4}) grid {:.6} closed form {:.6} error {:.3e}",
                    c.theta, c.grid_value, c.closed_form, c.abs_error
                );
            }
            emit_summary(&r, cfg.output.summary.as_ref())
        }
        Command::Evaluate(args) => {
            let cfg = args.resolve(timestamps)?;
            let r = commands::evaluate(&cfg)?;
            eprintln!("{:<24} {:>14.6} {:>12.3e} {:>8}", r.policy, r.mean_cost, r.stderr, r.n_paths);
            if let Some(j) = r.closed_form {
                eprintln!("{:<24} {:>14.6}", "closed-form optimum", j);
            }
            emit_summary(&r, cfg.output.summary.as_ref())
        }
        Command::Compare(args) => {
            let cfg = args.resolve(timestamps)?;
            let r = commands::compare(&cfg)?;
            eprintln!(
                "{:>4} {:<24} {:>14} {:>12} {:>14} {:>12}",
                "rank", "policy", "mean", "stderr", "vs best", "paired se"
            );
            for row in &r.rows {
                eprintln!(
                    "{:>4} {:<24} {:>14.6} {:>12.3e} {:>14.6} {:>12.3e}",
                    row.rank, row.policy, row.mean, row.stderr, row.diff_vs_best, row.diff_stderr
                );
            }
            emit_summary(&r, cfg.output.summary.as_ref())
        }
        Command::Lq(args) => {
            let mut params = match &args.config {
                Some(path) => RawConfig::load(path)?.params,
                None => ParamsSection::default(),
            };
            params.alpha = args.alpha.or(params.alpha);
            params.horizon = args.horizon.or(params.horizon);
            let params = resolve_params(&params)?;
            let mesh = LqMesh {
                t_points: args.t_points,
                theta_min: args.theta_min,
                theta_max: args.theta_max,
                theta_points: args.theta_points,
            };
            let table = commands::lq_table(&params, &mesh)?;
            match &args.csv {
                Some(p) => output::write_atomic(p, table.as_bytes()),
                None => std::io::stdout()
                    .write_all(table.as_bytes())
                    .map_err(|e| CliError::io("<stdout>", e)),
            }
        }
    }
}
