//! Experiment configuration: an optional TOML file overlaid by command-line
//! flags, resolved into validated core types.
//!
//! ```toml
//! model = "angle-lq"
//! dt = 1e-3
//! n_paths = 10000
//! seed = 7
//! policies = ["lq-closed-form", "zero"]
//!
//! [params]
//! kappa_s_sq = 0.5
//! alpha = 0.5
//! horizon = 1.0
//!
//! [initial]
//! theta = 1.0
//!
//! [grid]
//! nodes = 401
//! dt = 1e-4
//!
//! [output]
//! summary = "out/summary.json"
//! csv = "out/compare.csv"
//! ```

use std::path::{Path, PathBuf};

use qubit_control::bellman::{ControlMode, GridSpec};
use qubit_control::sim::{Integrator, PolicySpec, SimConfig};
use qubit_control::{AngleState, BlochVector, ModelId, ModelParams, State};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_N_PATHS: usize = 1000;
pub const DEFAULT_GRID_DT: f64 = 1e-4;

/// Raw configuration; every field optional so that files and flags can be
/// merged before validation.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: Option<String>,
    pub dt: Option<f64>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub policy: Option<String>,
    pub policies: Option<Vec<String>>,
    pub integrator: Option<String>,
    pub trajectories: Option<usize>,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub kappa_s_sq: Option<f64>,
    pub kappa_f_sq: Option<f64>,
    pub alpha: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub theta: Option<f64>,
    pub r: Option<f64>,
    pub bloch: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nodes: Option<usize>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub mode: Option<String>,
    pub control_bound: Option<f64>,
    pub control_resolution: Option<usize>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub summary: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub vgrid: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

fn pick<T>(top: &mut Option<T>, over: Option<T>) {
    if over.is_some() {
        *top = over;
    }
}

impl RawConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(mut self, over: RawConfig) -> Self {
        pick(&mut self.model, over.model);
        pick(&mut self.dt, over.dt);
        pick(&mut self.n_paths, over.n_paths);
        pick(&mut self.seed, over.seed);
        pick(&mut self.policy, over.policy);
        pick(&mut self.policies, over.policies);
        pick(&mut self.integrator, over.integrator);
        pick(&mut self.trajectories, over.trajectories);

        let (p, o) = (&mut self.params, over.params);
        pick(&mut p.kappa_s_sq, o.kappa_s_sq);
        pick(&mut p.kappa_f_sq, o.kappa_f_sq);
        pick(&mut p.alpha, o.alpha);
        pick(&mut p.horizon, o.horizon);

        let (i, o) = (&mut self.initial, over.initial);
        pick(&mut i.theta, o.theta);
        pick(&mut i.r, o.r);
        pick(&mut i.bloch, o.bloch);

        let (g, o) = (&mut self.grid, over.grid);
        pick(&mut g.nodes, o.nodes);
        pick(&mut g.dt, o.dt);
        pick(&mut g.steps, o.steps);
        pick(&mut g.mode, o.mode);
        pick(&mut g.control_bound, o.control_bound);
        pick(&mut g.control_resolution, o.control_resolution);
        pick(&mut g.lower, o.lower);
        pick(&mut g.upper, o.upper);

        let (out, o) = (&mut self.output, over.output);
        pick(&mut out.summary, o.summary);
        pick(&mut out.trajectory, o.trajectory);
        pick(&mut out.vgrid, o.vgrid);
        pick(&mut out.csv, o.csv);
        self
    }

    pub fn resolve(self) -> CliResult<ExperimentConfig> {
        let model: ModelId = self
            .model
            .as_deref()
            .ok_or_else(|| CliError::config("missing `model` (diffusive-qubit, counting-qubit or angle-lq)"))?
            .parse()?;
        let params = resolve_params(&self.params)?;
        let initial = resolve_initial(model, &self.initial)?;
        let dt = self.dt.unwrap_or(DEFAULT_DT);
        let n_paths = self.n_paths.unwrap_or(DEFAULT_N_PATHS);
        if n_paths == 0 {
            return Err(CliError::config("`n_paths` must be at least 1"));
        }
        let integrator = match self.integrator.as_deref() {
            Some(s) => s.parse()?,
            None => Integrator::default(),
        };
        let mut policies = Vec::new();
        if let Some(p) = &self.policy {
            policies.push(p.parse::<PolicySpec>()?);
        }
        for p in self.policies.iter().flatten() {
            policies.push(p.parse::<PolicySpec>()?);
        }
        for p in &policies {
            if let PolicySpec::Grid(path) = p {
                if !path.is_file() {
                    return Err(CliError::config(format!("grid file {} does not exist", path.display())));
                }
            }
        }
        Ok(ExperimentConfig {
            model,
            params,
            initial,
            dt,
            n_paths,
            seed: self.seed.unwrap_or(0),
            integrator,
            policies,
            trajectories: self.trajectories.unwrap_or(1),
            grid: self.grid,
            output: self.output,
            timestamps: true,
        })
    }
}

pub fn resolve_params(p: &ParamsSection) -> CliResult<ModelParams> {
    let kappa_s_sq = p.kappa_s_sq.unwrap_or(0.5);
    let kappa_f_sq = p.kappa_f_sq.unwrap_or(1.0 - kappa_s_sq);
    Ok(ModelParams::new(
        kappa_s_sq,
        kappa_f_sq,
        p.alpha.unwrap_or(0.0),
        p.horizon.unwrap_or(1.0),
    )?)
}

fn resolve_initial(model: ModelId, i: &InitialSection) -> CliResult<State> {
    if model.is_qubit() {
        if i.theta.is_some() || i.r.is_some() {
            return Err(CliError::config("`initial.theta`/`initial.r` apply to angle-lq only"));
        }
        let p = match i.bloch.as_deref() {
            None => BlochVector::new(1.0, 0.0, 0.0),
            Some([x, y, z]) => BlochVector::new(*x, *y, *z),
            Some(v) => {
                return Err(CliError::config(format!(
                    "`initial.bloch` needs 3 components, got {}",
                    v.len()
                )))
            }
        };
        Ok(State::Bloch(p))
    } else {
        if i.bloch.is_some() {
            return Err(CliError::config("`initial.bloch` applies to qubit models only"));
        }
        Ok(State::Angle(AngleState::new(
            i.theta.unwrap_or(1.0),
            i.r.unwrap_or(1.0),
        )?))
    }
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelId,
    pub params: ModelParams,
    pub initial: State,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub integrator: Integrator,
    pub policies: Vec<PolicySpec>,
    pub trajectories: usize,
    pub grid: GridSection,
    pub output: OutputSection,
    /// Include wall time and generation time in reports.
    pub timestamps: bool,
}

impl ExperimentConfig {
    pub fn sim_config(&self) -> CliResult<SimConfig> {
        Ok(SimConfig::new(self.model, self.params, self.dt)?.with_integrator(self.integrator))
    }

    /// Grid for `solve`; the step count defaults to `horizon / grid.dt`.
    pub fn grid_spec(&self) -> CliResult<GridSpec> {
        let g = &self.grid;
        let dt = g.dt.unwrap_or(DEFAULT_GRID_DT);
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CliError::config(format!("`grid.dt` must be > 0, got {dt}")));
        }
        let horizon = self.params.horizon();
        let steps = match g.steps {
            Some(n) => {
                if n != 0 && (n as f64 * dt - horizon).abs() > 1e-9 * horizon {
                    return Err(CliError::config(format!(
                        "`grid.steps` * `grid.dt` = {} must equal the horizon {horizon}",
                        n as f64 * dt
                    )));
                }
                n
            }
            None => {
                let n = (horizon / dt).round();
                if n < 1.0 || (n * dt - horizon).abs() > 1e-9 * horizon {
                    return Err(CliError::config(format!("`grid.dt` = {dt} does not divide the horizon {horizon}")));
                }
                n as usize
            }
        };
        let mut spec = if self.model.is_qubit() {
            GridSpec::qubit(self.model, g.nodes.unwrap_or(21), dt, steps)
        } else {
            GridSpec::angle(g.nodes.unwrap_or(401), dt, steps)
        };
        if let Some(mode) = &g.mode {
            spec = spec.with_mode(mode.parse::<ControlMode>()?);
        }
        if g.control_bound.is_some() {
            spec = spec.with_control_bound(g.control_bound);
        }
        if let Some(r) = g.control_resolution {
            spec = spec.with_control_resolution(r);
        }
        if let Some(lower) = &g.lower {
            spec.lower = lower.clone();
        }
        if let Some(upper) = &g.upper {
            spec.upper = upper.clone();
        }
        spec.validate(&self.params)?;
        Ok(spec)
    }

    pub fn single_policy(&self) -> CliResult<&PolicySpec> {
        match self.policies.as_slice() {
            [] => Err(CliError::config("missing `policy`")),
            [p] => Ok(p),
            _ => Err(CliError::config("this command takes exactly one policy")),
        }
    }
}
