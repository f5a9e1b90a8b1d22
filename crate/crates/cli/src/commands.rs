//! The subcommands. Each returns a serializable report and writes its data
//! files atomically; printing is left to the caller.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use qubit_control::bellman::{solve_backward, ValueGrid};
use qubit_control::lq;
use qubit_control::sim::{batch_costs, format_f64, simulate_path, PolicySpec};
use qubit_control::{CostStatistics, ModelId, ModelParams, State};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{numbered, write_atomic};

/// Wall time and generation time; omitted when timestamps are disabled so
/// that reports are reproducible byte for byte.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Timing {
    pub wall_time_s: f64,
    pub generated_unix: u64,
}

fn timing(cfg: &ExperimentConfig, start: Instant) -> Option<Timing> {
    cfg.timestamps.then(|| Timing {
        wall_time_s: start.elapsed().as_secs_f64(),
        generated_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SimulateReport {
    pub model: ModelId,
    pub policy: String,
    pub mean_cost: f64,
    pub stderr: f64,
    pub std_dev: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub trajectory_files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

pub fn simulate(cfg: &ExperimentConfig) -> CliResult<SimulateReport> {
    let start = Instant::now();
    let spec = cfg.single_policy()?;
    let policy = spec.build(cfg.model, &cfg.params)?;
    let sim = cfg.sim_config()?;
    let costs = batch_costs(&sim, &policy, cfg.initial, cfg.n_paths, cfg.seed)?;
    let stats = CostStatistics::from_samples(&costs);

    let mut files = Vec::new();
    if let Some(path) = &cfg.output.trajectory {
        let count = cfg.trajectories.min(cfg.n_paths);
        for k in 0..count {
            let target = if count == 1 { path.clone() } else { numbered(path, k) };
            let traj = simulate_path(&sim, &policy, cfg.initial, cfg.seed, k as u64)?;
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).map_err(|e| CliError::io(&target, e))?;
            write_atomic(&target, &buf)?;
            files.push(target.display().to_string());
        }
    }
    Ok(SimulateReport {
        model: cfg.model,
        policy: spec.to_string(),
        mean_cost: stats.mean,
        stderr: stats.std_error,
        std_dev: stats.std_dev,
        n_paths: stats.count,
        seed: cfg.seed,
        dt: cfg.dt,
        trajectory_files: files,
        timing: timing(cfg, start),
    })
}

/// Value of the solved grid at `(0, theta0)` next to the exact LQ value.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LqCheck {
    pub theta: f64,
    pub grid_value: f64,
    pub closed_form: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SolveReport {
    pub model: ModelId,
    pub nodes: Vec<usize>,
    pub node_count: usize,
    pub slices: usize,
    pub dt: f64,
    pub mode: String,
    pub value_min: f64,
    pub value_max: f64,
    pub vgrid: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lq_check: Option<LqCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

/// Solves backward and saves the grid to `output.vgrid`. Validation and the
/// stability check run before any slice is computed.
pub fn solve(cfg: &ExperimentConfig) -> CliResult<(ValueGrid, SolveReport)> {
    let start = Instant::now();
    let path = cfg
        .output
        .vgrid
        .clone()
        .ok_or_else(|| CliError::config("missing `output.vgrid` for solve"))?;
    let spec = cfg.grid_spec()?;
    let grid = solve_backward(&spec, &cfg.params)?;
    grid.save(&path)?;
    let (value_min, value_max) = grid.value_range();
    let lq_check = match (cfg.model, cfg.initial) {
        (ModelId::AngleLq, State::Angle(a)) if grid.steps() > 0 => {
            let grid_value = grid.value(0.0, &cfg.initial)?;
            let closed_form = lq::value(0.0, a.theta, cfg.params.horizon(), cfg.params.alpha())?;
            Some(LqCheck {
                theta: a.theta,
                grid_value,
                closed_form,
                abs_error: (grid_value - closed_form).abs(),
            })
        }
        _ => None,
    };
    let report = SolveReport {
        model: cfg.model,
        nodes: spec.nodes.clone(),
        node_count: spec.node_count(),
        slices: grid.steps() + 1,
        dt: spec.dt,
        mode: spec.mode.to_string(),
        value_min,
        value_max,
        vgrid: path.display().to_string(),
        lq_check,
        timing: timing(cfg, start),
    };
    Ok((grid, report))
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvaluateReport {
    pub model: ModelId,
    pub policy: String,
    pub mean_cost: f64,
    pub stderr: f64,
    pub std_dev: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    /// Exact optimal cost from the initial state, for the angle model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

/// Monte Carlo cost of a `grid:<path>` policy.
pub fn evaluate(cfg: &ExperimentConfig) -> CliResult<EvaluateReport> {
    let start = Instant::now();
    let spec = cfg.single_policy()?;
    if !matches!(spec, PolicySpec::Grid(_)) {
        return Err(CliError::config(format!("evaluate expects a grid:<path> policy, got `{spec}`")));
    }
    let policy = spec.build(cfg.model, &cfg.params)?;
    let sim = cfg.sim_config()?;
    let stats = CostStatistics::from_samples(&batch_costs(&sim, &policy, cfg.initial, cfg.n_paths, cfg.seed)?);
    let closed_form = match cfg.initial {
        State::Angle(a) => Some(lq::value(0.0, a.theta, cfg.params.horizon(), cfg.params.alpha())?),
        State::Bloch(_) => None,
    };
    Ok(EvaluateReport {
        model: cfg.model,
        policy: spec.to_string(),
        mean_cost: stats.mean,
        stderr: stats.std_error,
        std_dev: stats.std_dev,
        n_paths: stats.count,
        seed: cfg.seed,
        dt: cfg.dt,
        closed_form,
        timing: timing(cfg, start),
    })
}

/// One policy in a comparison. The paired difference to the best policy uses
/// the shared random streams, so its standard error is usually far smaller
/// than either marginal one.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CompareRow {
    pub rank: usize,
    pub policy: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub diff_vs_best: f64,
    pub diff_stderr: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CompareReport {
    pub model: ModelId,
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub rows: Vec<CompareRow>,
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl CompareReport {
    pub fn row(&self, policy: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    /// `policy,mean,stderr,n`, best first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,mean,stderr,n\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.policy, format_f64(r.mean), format_f64(r.stderr), r.n));
        }
        out
    }
}

/// Runs every policy on the same seeds and ranks them by mean cost.
pub fn compare(cfg: &ExperimentConfig) -> CliResult<CompareReport> {
    let start = Instant::now();
    if cfg.policies.len() < 2 {
        return Err(CliError::config("compare needs at least two policies"));
    }
    let sim = cfg.sim_config()?;
    let mut runs = Vec::with_capacity(cfg.policies.len());
    for spec in &cfg.policies {
        let policy = spec.build(cfg.model, &cfg.params)?;
        let costs = batch_costs(&sim, &policy, cfg.initial, cfg.n_paths, cfg.seed)?;
        let stats = CostStatistics::from_samples(&costs);
        runs.push((spec.to_string(), costs, stats));
    }
    runs.sort_by(|a, b| a.2.mean.total_cmp(&b.2.mean));
    let best = runs[0].1.clone();
    let rows = runs
        .into_iter()
        .enumerate()
        .map(|(i, (policy, costs, stats))| {
            let diffs: Vec<f64> = costs.iter().zip(&best).map(|(c, b)| c - b).collect();
            let paired = CostStatistics::from_samples(&diffs);
            CompareRow {
                rank: i + 1,
                policy,
                mean: stats.mean,
                stderr: stats.std_error,
                n: stats.count,
                diff_vs_best: paired.mean,
                diff_stderr: paired.std_error,
            }
        })
        .collect();
    let mut report = CompareReport {
        model: cfg.model,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        dt: cfg.dt,
        rows,
        csv: cfg.output.csv.as_ref().map(|p| p.display().to_string()),
        timing: None,
    };
    if let Some(path) = &cfg.output.csv {
        write_atomic(path, report.to_csv().as_bytes())?;
    }
    report.timing = timing(cfg, start);
    Ok(report)
}

/// Mesh for the `lq` table: `t_points` times on `[0, T]` and `theta_points`
/// angles on `[theta_min, theta_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqMesh {
    pub t_points: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_points: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// CSV `t,theta,value,control` of the exact value function and feedback law.
pub fn lq_table(params: &ModelParams, mesh: &LqMesh) -> CliResult<String> {
    if mesh.t_points == 0 || mesh.theta_points == 0 {
        return Err(CliError::config("the lq mesh needs at least one point per axis"));
    }
    if !(mesh.theta_min.is_finite() && mesh.theta_max.is_finite() && mesh.theta_min <= mesh.theta_max) {
        return Err(CliError::config("`theta_min` must not exceed `theta_max`"));
    }
    let sol = lq::LqSolution::new(params.horizon(), params.alpha())?;
    let mut out = String::from("t,theta,value,control\n");
    for t in linspace(0.0, params.horizon(), mesh.t_points) {
        for theta in linspace(mesh.theta_min, mesh.theta_max, mesh.theta_points) {
            out.push_str(&format!(
                "{},{},{},{}\n",
                format_f64(t),
                format_f64(theta),
                format_f64(sol.value(t, theta)?),
                format_f64(sol.control(t, theta)?)
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;

    fn cfg(toml: &str) -> ExperimentConfig {
        let mut c = RawConfig::from_toml(toml).unwrap().resolve().unwrap();
        c.timestamps = false;
        c
    }

    #[test]
    fn uncontrolled_angle_at_rest_costs_nothing() {
        let c = cfg("model = \"angle-lq\"\npolicy = \"zero\"\nn_paths = 50\n[initial]\ntheta = 0.0\n");
        let r = simulate(&c).unwrap();
        assert_eq!((r.mean_cost, r.stderr), (0.0, 0.0));
    }

    #[test]
    fn ground_state_is_a_fixed_point() {
        let c = cfg("model = \"diffusive-qubit\"\npolicy = \"zero\"\nn_paths = 50\ndt = 0.01\n[initial]\nbloch = [0, 0, -1]\n");
        let r = simulate(&c).unwrap();
        assert_eq!((r.mean_cost, r.stderr), (2.0, 0.0));
    }

    #[test]
    fn identical_policies_give_identical_rows() {
        let c = cfg("model = \"angle-lq\"\npolicies = [\"zero\", \"zero\"]\nn_paths = 200\ndt = 0.01\n[params]\nalpha = 0.5\n");
        let r = compare(&c).unwrap();
        assert_eq!(r.rows[0].mean, r.rows[1].mean);
        assert_eq!(r.rows[0].stderr, r.rows[1].stderr);
        assert_eq!(r.rows[1].diff_vs_best, 0.0);
    }

    #[test]
    fn compare_needs_two_policies() {
        let c = cfg("model = \"angle-lq\"\npolicy = \"zero\"\n");
        assert_eq!(compare(&c).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn evaluate_rejects_non_grid_policies() {
        let c = cfg("model = \"angle-lq\"\npolicy = \"zero\"\n");
        assert_eq!(evaluate(&c).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn lq_table_matches_the_closed_form() {
        let params = ModelParams::with_side_rate(0.5, 0.5, 1.0).unwrap();
        let mesh = LqMesh {
            t_points: 3,
            theta_min: -1.0,
            theta_max: 1.0,
            theta_points: 5,
        };
        let csv = lq_table(&params, &mesh).unwrap();
        let rows: Vec<Vec<f64>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 15);
        let first = &rows[0];
        assert_eq!(first[..2], [0.0, -1.0]);
        assert!((first[2] - (0.2 + 0.25 * 5f64.ln())).abs() < 1e-15);
        assert!((first[3] - 0.4).abs() < 1e-15);
        let last = rows.last().unwrap();
        assert_eq!(last[..4], [1.0, 1.0, 1.0, -2.0]);
    }
}
