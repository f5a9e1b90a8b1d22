//! Forward simulation of the filtered models under feedback.
//!
//! The simulator drives each filter directly with its innovation process:
//! a Wiener increment for the diffusive qubit and the angle model, a thinned
//! Bernoulli detection for the counting qubit. The homodyne record `dY` is
//! reconstructed from the state for output only.
//!
//! Every path `i` of a batch draws from its own ChaCha stream `(seed, i)`, so a
//! batch is bit-reproducible regardless of thread count, and two policies run
//! with the same seed see common random numbers.

mod policy;
mod stats;
mod trajectory;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::terminal_cost;
use crate::filter::{
    counting_drift, diffusive_diffusion, diffusive_diffusion_derivative, diffusive_drift,
    jump_intensity, jump_target, observation_drift, wrap_angle, AngleState, BlochVector,
    ControlPair, ModelParams, DEFAULT_BALL_TOLERANCE,
};
use crate::{Control, Error, ModelId, Result, State};

pub use policy::{Policy, PolicySpec};
pub use stats::CostStatistics;
pub use trajectory::{format_f64, Trajectory};

/// One-step scheme for the diffusive qubit filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    EulerMaruyama,
    /// Adds `(grad b) b (dW^2 - dt) / 2`; strong order one for this scalar-noise SDE.
    Milstein,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler-maruyama" => Ok(Integrator::EulerMaruyama),
            "milstein" => Ok(Integrator::Milstein),
            other => Err(Error::param(
                "integrator",
                format!("unknown integrator `{other}` (expected euler-maruyama or milstein)"),
            )),
        }
    }
}

/// Raw increment of the diffusive filter for one step, without projection.
pub fn diffusive_increment(
    p: BlochVector,
    u: ControlPair,
    dt: f64,
    dw: f64,
    params: &ModelParams,
    integrator: Integrator,
) -> [f64; 3] {
    let a = diffusive_drift(p, u);
    let b = diffusive_diffusion(p, params);
    let mut inc = [0.0; 3];
    for k in 0..3 {
        inc[k] = a[k] * dt + b[k] * dw;
    }
    if integrator == Integrator::Milstein {
        let c = diffusive_diffusion_derivative(p, params);
        let w = 0.5 * (dw * dw - dt);
        for k in 0..3 {
            inc[k] += c[k] * w;
        }
    }
    inc
}

/// Euler-Maruyama step of the diffusive filter followed by ball projection.
pub fn step_diffusive(
    p: BlochVector,
    u: ControlPair,
    dt: f64,
    dw: f64,
    params: &ModelParams,
) -> BlochVector {
    (p + diffusive_increment(p, u, dt, dw, params, Integrator::EulerMaruyama))
        .project_into_ball(DEFAULT_BALL_TOLERANCE)
}

fn check_jump_step(dt: f64, params: &ModelParams) -> Result<()> {
    // The intensity is largest at the excited state, where it equals kappa_s^2.
    let product = dt * params.kappa_s_sq();
    if product >= 1.0 {
        return Err(Error::JumpStepTooLarge { dt, product });
    }
    Ok(())
}

/// Step of the counting filter without projection: compensated drift first,
/// then the reset to the ground state if a detection occurred in the step.
pub fn counting_increment(
    p: BlochVector,
    u: ControlPair,
    dt: f64,
    jumped: bool,
    params: &ModelParams,
) -> Result<BlochVector> {
    check_jump_step(dt, params)?;
    if jumped {
        return Ok(jump_target(p));
    }
    let c = counting_drift(p, u, params);
    Ok(p + [c[0] * dt, c[1] * dt, c[2] * dt])
}

/// One step of the counting filter, projected back into the ball.
pub fn step_counting(
    p: BlochVector,
    u: ControlPair,
    dt: f64,
    jumped: bool,
    params: &ModelParams,
) -> Result<BlochVector> {
    Ok(counting_increment(p, u, dt, jumped, params)?.project_into_ball(DEFAULT_BALL_TOLERANCE))
}

/// `theta' = wrap(theta + 2 B dt + 2 alpha dW)`; the radius is untouched.
pub fn step_angle(state: AngleState, b: f64, dt: f64, dw: f64, params: &ModelParams) -> AngleState {
    let theta = state.theta + 2.0 * b * dt + 2.0 * params.alpha() * dw;
    AngleState {
        theta: wrap_angle(theta),
        r: state.r,
    }
}

/// Draws whether a photon is detected during `[t, t + dt)`: a Bernoulli trial
/// with success probability `jump_intensity(p) dt`.
pub fn sample_jump<R: Rng + ?Sized>(
    p: BlochVector,
    dt: f64,
    params: &ModelParams,
    rng: &mut R,
) -> Result<bool> {
    check_jump_step(dt, params)?;
    let prob = jump_intensity(p, params) * dt;
    Ok(rng.random::<f64>() < prob)
}

/// Random stream for path `path` of a batch seeded with `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Model, parameters and time step shared by all paths of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub model: ModelId,
    pub params: ModelParams,
    pub dt: f64,
    pub integrator: Integrator,
    pub ball_tolerance: f64,
    steps: usize,
}

impl SimConfig {
    /// Requires `dt > 0` to divide the horizon, and `dt kappa_s^2 < 1` for the
    /// counting model.
    pub fn new(model: ModelId, params: ModelParams, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("must be > 0, got {dt}")));
        }
        let horizon = params.horizon();
        let steps = (horizon / dt).round();
        if steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon {
            return Err(Error::param("dt", format!("{dt} does not divide the horizon {horizon}")));
        }
        if model == ModelId::CountingQubit {
            check_jump_step(dt, &params)?;
        }
        Ok(Self {
            model,
            params,
            dt,
            integrator: Integrator::EulerMaruyama,
            ball_tolerance: DEFAULT_BALL_TOLERANCE,
            steps: steps as usize,
        })
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn validate_initial(&self, initial: State) -> Result<State> {
        if !initial.matches(self.model) {
            return Err(Error::ModelMismatch {
                expected: self.model.to_string(),
                found: format!("initial state {initial:?}"),
            });
        }
        Ok(match initial {
            State::Bloch(p) => State::Bloch(
                p.validate(self.ball_tolerance)?
                    .project_into_ball(self.ball_tolerance),
            ),
            State::Angle(a) => State::Angle(AngleState::new(a.theta, a.r)?),
        })
    }
}

/// What happened during one step `[t_n, t_n + dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub state: State,
    pub control: Control,
    /// `dW` for diffusive and angle models, `dN` (0 or 1) for counting.
    pub noise: f64,
    /// Observation increment `dY` (equal to `dN` for counting).
    pub observation: f64,
    /// Running cost accumulated on `[0, t_n)`.
    pub running_cost: f64,
}

/// Final state and realized cost of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub final_state: State,
    pub running_cost: f64,
    pub terminal_cost: f64,
}

impl PathOutcome {
    pub fn total_cost(&self) -> f64 {
        self.terminal_cost + self.running_cost
    }
}

fn applied_control(config: &SimConfig, policy: &Policy, t: f64, state: &State) -> Result<Control> {
    let c = policy.control(t, state)?;
    if !c.matches(config.model) {
        return Err(Error::ModelMismatch {
            expected: config.model.to_string(),
            found: format!("control {c:?}"),
        });
    }
    if !c.is_finite() {
        return Err(Error::InvalidState(format!("policy returned non-finite control at t = {t}")));
    }
    if config.model.is_qubit() && !config.params.controllable() {
        return Ok(Control::zero_for(config.model));
    }
    Ok(c)
}

/// Runs one path, calling `on_step` before each state update.
pub fn run_path<R, F>(
    config: &SimConfig,
    policy: &Policy,
    initial: State,
    rng: &mut R,
    mut on_step: F,
) -> Result<PathOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&StepRecord),
{
    let mut state = config.validate_initial(initial)?;
    let params = &config.params;
    let dt = config.dt;
    let sqrt_dt = dt.sqrt();
    let mut running = 0.0;
    for n in 0..config.steps {
        let t = n as f64 * dt;
        let control = applied_control(config, policy, t, &state)?;
        let (next, noise, observation) = match (state, control) {
            (State::Bloch(p), Control::Pair(u)) => match config.model {
                ModelId::DiffusiveQubit => {
                    let dw = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                    let q = p + diffusive_increment(p, u, dt, dw, params, config.integrator);
                    let dy = observation_drift(p, params) * dt + dw;
                    (State::Bloch(q.project_into_ball(config.ball_tolerance)), dw, dy)
                }
                _ => {
                    let jumped = sample_jump(p, dt, params, rng)?;
                    let q = counting_increment(p, u, dt, jumped, params)?;
                    let dn = if jumped { 1.0 } else { 0.0 };
                    (State::Bloch(q.project_into_ball(config.ball_tolerance)), dn, dn)
                }
            },
            (State::Angle(a), Control::Field(b)) => {
                let dw = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                (State::Angle(step_angle(a, b, dt, dw, params)), dw, dw)
            }
            _ => unreachable!("state and control kinds were checked against the model"),
        };
        on_step(&StepRecord {
            step: n,
            t,
            state,
            control,
            noise,
            observation,
            running_cost: running,
        });
        running += control.energy() * dt;
        state = next;
    }
    Ok(PathOutcome {
        final_state: state,
        running_cost: running,
        terminal_cost: terminal_cost(config.model, &state),
    })
}

/// Simulates and records a single path; identical to path 0 of a batch with
/// the same seed.
pub fn simulate(config: &SimConfig, policy: &Policy, initial: State, seed: u64) -> Result<Trajectory> {
    simulate_path(config, policy, initial, seed, 0)
}

/// Records path `path` of a batch seeded with `seed`.
pub fn simulate_path(config: &SimConfig, policy: &Policy, initial: State, seed: u64, path: u64) -> Result<Trajectory> {
    let mut traj = Trajectory::with_capacity(config.model, config.dt, config.steps + 1);
    let mut rng = path_rng(seed, path);
    let outcome = run_path(config, policy, initial, &mut rng, |rec| traj.push(rec))?;
    traj.finish(config.params.horizon(), &outcome);
    Ok(traj)
}

/// Realized costs of `n_paths` independent paths, in path order.
pub fn batch_costs(
    config: &SimConfig,
    policy: &Policy,
    initial: State,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be at least 1"));
    }
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            run_path(config, policy, initial, &mut rng, |_| {}).map(|o| o.total_cost())
        })
        .collect()
}

/// Monte Carlo estimate of the expected cost of `policy` from `initial`.
pub fn run_batch(
    config: &SimConfig,
    policy: &Policy,
    initial: State,
    n_paths: usize,
    seed: u64,
) -> Result<CostStatistics> {
    let costs = batch_costs(config, policy, initial, n_paths, seed)?;
    Ok(CostStatistics::from_samples(&costs))
}

/// One row of a policy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScore {
    pub label: String,
    pub stats: CostStatistics,
}

/// Runs every policy on the same random streams and ranks them by mean cost,
/// lowest first. Ties keep the input order.
pub fn compare_policies(
    config: &SimConfig,
    policies: &[(String, Policy)],
    initial: State,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PolicyScore>> {
    let mut scores = policies
        .iter()
        .map(|(label, policy)| {
            Ok(PolicyScore {
                label: label.clone(),
                stats: run_batch(config, policy, initial, n_paths, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| a.stats.mean.total_cmp(&b.stats.mean));
    Ok(scores)
}

/// Mean and standard deviation of the state coordinates over an ensemble at
/// one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMoments {
    pub step: usize,
    pub t: f64,
    pub count: usize,
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
}

impl StateMoments {
    /// Standard error of the mean of coordinate `k`.
    pub fn std_error(&self, k: usize) -> f64 {
        self.std_dev[k] / (self.count as f64).sqrt()
    }
}

/// Ensemble moments of the state at the given step indices (`0..=steps`).
pub fn ensemble_moments(
    config: &SimConfig,
    policy: &Policy,
    initial: State,
    n_paths: usize,
    seed: u64,
    checkpoints: &[usize],
) -> Result<Vec<StateMoments>> {
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be at least 1"));
    }
    if let Some(&bad) = checkpoints.iter().find(|&&c| c > config.steps) {
        return Err(Error::param("checkpoints", format!("step {bad} beyond {}", config.steps)));
    }
    let samples: Vec<Vec<Vec<f64>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut at = vec![Vec::new(); checkpoints.len()];
            let outcome = run_path(config, policy, initial, &mut rng, |rec| {
                for (slot, &c) in checkpoints.iter().enumerate() {
                    if c == rec.step {
                        at[slot] = rec.state.coords();
                    }
                }
            })?;
            for (slot, &c) in checkpoints.iter().enumerate() {
                if c == config.steps {
                    at[slot] = outcome.final_state.coords();
                }
            }
            Ok(at)
        })
        .collect::<Result<_>>()?;

    let dim = config.model.state_dim();
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(slot, &step)| {
            let mut mean = vec![0.0; dim];
            let mut std_dev = vec![0.0; dim];
            for k in 0..dim {
                let column: Vec<f64> = samples.iter().map(|s| s[slot][k]).collect();
                let st = CostStatistics::from_samples(&column);
                mean[k] = st.mean;
                std_dev[k] = st.std_dev;
            }
            StateMoments {
                step,
                t: step as f64 * config.dt,
                count: n_paths,
                mean,
                std_dev,
            }
        })
        .collect())
}

/// Solution of the unconditional master equation `dP/dt = drift(P, u)` under a
/// constant control, integrated by the diffusive stepper with the noise off.
/// Returns `steps + 1` states starting with `p0`.
pub fn master_equation_path(
    p0: BlochVector,
    u: ControlPair,
    dt: f64,
    steps: usize,
    params: &ModelParams,
) -> Vec<BlochVector> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut p = p0;
    out.push(p);
    for _ in 0..steps {
        p = step_diffusive(p, u, dt, 0.0, params);
        out.push(p);
    }
    out
}
