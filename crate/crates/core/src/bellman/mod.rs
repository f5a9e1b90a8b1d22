//! Backward solvers for the optimal cost-to-go.
//!
//! [`solve_backward`] steps the HJB equation explicitly in time with finite
//! differences; [`dp_recursion_step`] performs one step of the discrete
//! recursion directly, taking expectations by quadrature. Both store the
//! minimizing control at each node so that [`extract_policy`] can turn a solved
//! [`ValueGrid`] into a feedback law.

mod dp;
mod fd;
mod lattice;
mod policy;
mod value_grid;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::filter::{
    counting_drift, diffusive_diffusion, diffusive_drift, dot, jump_intensity, BlochVector,
    ControlPair,
};
use crate::{Error, ModelId, ModelParams, Result, State};

pub use dp::{dp_recursion_step, dp_recursion_step_with, Quadrature, SliceUpdate};
pub use policy::{extract_policy, GridPolicy};
pub use value_grid::{ValueGrid, VGRID_EXTENSION};

/// Exhaustive-mode control box half-width for the qubit models.
pub const DEFAULT_QUBIT_CONTROL_BOUND: f64 = 5.0;
/// Exhaustive-mode control box half-width for the angle model.
pub const DEFAULT_ANGLE_CONTROL_BOUND: f64 = 20.0;
/// `c` in the explicit-scheme bound `dt <= c h^2 / max diffusion`.
pub const STABILITY_CONSTANT: f64 = 0.25;

const DEFAULT_CONTROL_RESOLUTION: usize = 41;

/// How the minimizing control is found at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// Completed-squares formula evaluated on the discrete gradient.
    #[default]
    ClosedForm,
    /// Brute-force search over a uniform control grid inside the box.
    Exhaustive,
}

impl std::str::FromStr for ControlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-form" => Ok(ControlMode::ClosedForm),
            "exhaustive" => Ok(ControlMode::Exhaustive),
            other => Err(Error::param(
                "mode",
                format!("unknown control mode `{other}` (expected closed-form or exhaustive)"),
            )),
        }
    }
}

impl std::fmt::Display for ControlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControlMode::ClosedForm => "closed-form",
            ControlMode::Exhaustive => "exhaustive",
        })
    }
}

/// Geometry, time stepping and control search of a backward solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub model: ModelId,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nodes: Vec<usize>,
    pub dt: f64,
    pub steps: usize,
    pub mode: ControlMode,
    /// Half-width of the control box. Closed-form controls are unbounded
    /// unless this is set; exhaustive mode falls back to the model default.
    pub control_bound: Option<f64>,
    /// Points per control axis in exhaustive mode.
    pub control_resolution: usize,
}

impl GridSpec {
    /// Cube `[-1, 1]^3` with `nodes` points per axis.
    pub fn qubit(model: ModelId, nodes: usize, dt: f64, steps: usize) -> Self {
        GridSpec {
            model,
            lower: vec![-1.0; 3],
            upper: vec![1.0; 3],
            nodes: vec![nodes; 3],
            dt,
            steps,
            mode: ControlMode::ClosedForm,
            control_bound: None,
            control_resolution: DEFAULT_CONTROL_RESOLUTION,
        }
    }

    /// Interval `[-pi, pi]` with `nodes` points.
    pub fn angle(nodes: usize, dt: f64, steps: usize) -> Self {
        GridSpec {
            model: ModelId::AngleLq,
            lower: vec![-PI],
            upper: vec![PI],
            nodes: vec![nodes],
            dt,
            steps,
            mode: ControlMode::ClosedForm,
            control_bound: None,
            control_resolution: DEFAULT_CONTROL_RESOLUTION,
        }
    }

    pub fn with_mode(mut self, mode: ControlMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_control_bound(mut self, bound: Option<f64>) -> Self {
        self.control_bound = bound;
        self
    }

    pub fn with_control_resolution(mut self, resolution: usize) -> Self {
        self.control_resolution = resolution;
        self
    }

    /// Box half-width used by exhaustive search.
    pub fn effective_control_bound(&self) -> f64 {
        self.control_bound.unwrap_or(if self.model.is_qubit() {
            DEFAULT_QUBIT_CONTROL_BOUND
        } else {
            DEFAULT_ANGLE_CONTROL_BOUND
        })
    }

    /// Candidate values along one control axis in exhaustive mode.
    pub fn control_values(&self) -> Vec<f64> {
        let b = self.effective_control_bound();
        let n = self.control_resolution;
        if n <= 1 {
            return vec![0.0];
        }
        (0..n)
            .map(|i| -b + 2.0 * b * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.nodes.len())
            .map(|k| (self.upper[k] - self.lower[k]) / (self.nodes[k] - 1) as f64)
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    /// Checks the spec against the model parameters.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let dim = self.model.state_dim();
        if self.nodes.len() != dim {
            return Err(Error::param(
                "nodes",
                format!("{} needs {dim} axes, got {}", self.model, self.nodes.len()),
            ));
        }
        if self.lower.len() != dim {
            return Err(Error::param("lower", format!("expected {dim} entries")));
        }
        if self.upper.len() != dim {
            return Err(Error::param("upper", format!("expected {dim} entries")));
        }
        if let Some(&n) = self.nodes.iter().find(|&&n| n < 3) {
            return Err(Error::param("nodes", format!("need at least 3 nodes per axis, got {n}")));
        }
        for k in 0..dim {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !lo.is_finite() {
                return Err(Error::param("lower", format!("{lo} is not finite")));
            }
            if !hi.is_finite() || hi <= lo {
                return Err(Error::param("upper", format!("{hi} must be finite and above {lo}")));
            }
            if self.model.is_qubit() && (lo > -1.0 || hi < 1.0) {
                return Err(Error::param(
                    if lo > -1.0 { "lower" } else { "upper" },
                    "qubit grids must contain [-1, 1] on every axis",
                ));
            }
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", format!("{} must be positive", self.dt)));
        }
        let horizon = params.horizon();
        if self.steps > 0 && (self.steps as f64 * self.dt - horizon).abs() > 1e-9 * horizon {
            return Err(Error::param(
                "steps",
                format!("{} steps of {} do not cover the horizon {horizon}", self.steps, self.dt),
            ));
        }
        if let Some(b) = self.control_bound {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::param("control_bound", format!("{b} must be finite and >= 0")));
            }
        }
        if self.control_resolution == 0 {
            return Err(Error::param("control_resolution", "must be at least 1"));
        }
        if self.model.is_qubit() && !params.controllable() && self.control_bound.is_some_and(|b| b > 0.0) {
            log::warn!("kappa_f = 0: the control has no effect, the control box is ignored");
        }
        Ok(())
    }
}

/// Terminal cost `1 - p_z` for qubit states and `theta^2` for the angle model.
pub fn terminal_cost(model: ModelId, state: &State) -> f64 {
    debug_assert!(state.matches(model));
    match state {
        State::Bloch(p) => 1.0 - p.pz,
        State::Angle(a) => a.theta * a.theta,
    }
}

/// Completed-squares minimizer of the control terms for the gradient `grad`
/// of the cost-to-go: `u+ = p_z J_x - p_x J_z`, `u- = p_y J_z - p_z J_y`.
pub fn optimal_controls_from_gradient(p: BlochVector, grad: [f64; 3]) -> ControlPair {
    ControlPair::new(
        p.pz * grad[0] - p.px * grad[2],
        p.py * grad[2] - p.pz * grad[1],
    )
}

fn control_squares(p: BlochVector, grad: &[f64; 3]) -> f64 {
    let u = optimal_controls_from_gradient(p, *grad);
    u.energy()
}

/// `-dJ/dt` of the diffusive HJB equation at `p` for the given derivatives.
///
/// The second-order part is `1/2 (b b^T) : hess` with `b` the diffusion
/// vector of the filter.
pub fn hjb_rhs_diffusive(
    p: BlochVector,
    grad: &[f64; 3],
    hess: &[[f64; 3]; 3],
    params: &ModelParams,
) -> f64 {
    let drift = diffusive_drift(p, ControlPair::zero());
    let b = diffusive_diffusion(p, params);
    let mut second = 0.0;
    for k in 0..3 {
        for l in 0..3 {
            second += 0.5 * b[k] * b[l] * hess[k][l];
        }
    }
    dot(&drift, grad) + second - control_squares(p, grad)
}

/// `-dJ/dt` of the counting HJB equation at `p`; `j_ground` is the
/// cost-to-go at the post-jump state.
pub fn hjb_rhs_counting(
    p: BlochVector,
    grad: &[f64; 3],
    j_here: f64,
    j_ground: f64,
    params: &ModelParams,
) -> f64 {
    let drift = counting_drift(p, ControlPair::zero(), params);
    jump_intensity(p, params) * (j_ground - j_here) + dot(&drift, grad) - control_squares(p, grad)
}

/// `-dJ/dt = -(J_theta)^2 + 2 alpha^2 J_thetatheta` for the angle model.
pub fn hjb_rhs_angle(d1: f64, d2: f64, params: &ModelParams) -> f64 {
    -d1 * d1 + 2.0 * params.alpha() * params.alpha() * d2
}

/// Solves backward from the terminal cost with the explicit finite-difference
/// scheme, recording the minimizing control at every node and slice.
pub fn solve_backward(spec: &GridSpec, params: &ModelParams) -> Result<ValueGrid> {
    spec.validate(params)?;
    let lattice = lattice::Lattice::new(spec);
    fd::check_stability(&lattice, spec, params)?;
    let m = lattice.len;
    let width = spec.model.control_dim();
    let n = spec.steps;
    let mut values = vec![0.0; (n + 1) * m];
    let mut controls = vec![0.0; (n + 1) * m * width];

    let terminal = &mut values[n * m..];
    for (i, v) in terminal.iter_mut().enumerate() {
        *v = terminal_cost(spec.model, &node_state(spec.model, &lattice.coords(i)));
    }
    lattice.fill_masked(terminal, 1);

    let last = fd::step(&lattice, spec, params, &values[n * m..], n)?;
    controls[n * m * width..].copy_from_slice(&last.controls);
    for slice in (0..n).rev() {
        let (head, tail) = values.split_at_mut((slice + 1) * m);
        let update = fd::step(&lattice, spec, params, &tail[..m], slice)?;
        head[slice * m..].copy_from_slice(&update.values);
        controls[slice * m * width..(slice + 1) * m * width].copy_from_slice(&update.controls);
        if slice % 1000 == 0 {
            log::debug!("backward slice {slice} of {n}");
        }
    }
    ValueGrid::from_parts(spec.clone(), *params, values, controls)
}

/// One explicit finite-difference step from slice `next` (node order), as
/// taken by [`solve_backward`].
pub fn fd_step(next: &[f64], spec: &GridSpec, params: &ModelParams) -> Result<SliceUpdate> {
    spec.validate(params)?;
    let lattice = lattice::Lattice::new(spec);
    if next.len() != lattice.len {
        return Err(Error::param(
            "slice",
            format!("expected {} node values, got {}", lattice.len, next.len()),
        ));
    }
    fd::step(&lattice, spec, params, next, spec.steps.saturating_sub(1))
}

/// Grid state with the given coordinates. Only the coordinates matter to the
/// solvers, so the angle state carries radius 1 and the Bloch vector is not
/// validated.
pub(crate) fn node_state(model: ModelId, c: &[f64; 3]) -> State {
    if model.is_qubit() {
        State::Bloch(BlochVector::new(c[0], c[1], c[2]))
    } else {
        State::Angle(crate::AngleState { theta: c[0], r: 1.0 })
    }
}

#[cfg(test)]
mod tests;
