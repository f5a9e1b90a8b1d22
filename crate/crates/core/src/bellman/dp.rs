//! One step of the discrete dynamic-programming recursion
//! `J(n, x) = min_u { |u|^2 dt + E[J(n + 1, X_{n+1}) | X_n = x, u] }`.
//!
//! The transition is a single Euler step of the filter. Gaussian increments
//! are integrated by quadrature, the counting increment by its two branches,
//! and `J(n + 1, .)` is evaluated off-grid by multilinear interpolation.

use rayon::prelude::*;

use super::fd::{axis_diff, closed_form_control, control_candidates, drift, ground_value, intensity, noise};
use super::lattice::Lattice;
use super::{ControlMode, GridSpec};
use crate::{Error, ModelId, ModelParams, Result};

/// Quadrature rule for a standard normal increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    /// `+-1` with weight 1/2 each; exact for cubic integrands.
    TwoPoint,
    /// Three-point Gauss-Hermite; exact up to degree five.
    #[default]
    GaussHermite3,
    /// Five-point Gauss-Hermite; exact up to degree nine.
    GaussHermite5,
}

impl Quadrature {
    /// `(node, weight)` pairs for `E[f(xi)]`, `xi ~ N(0, 1)`.
    pub fn rule(self) -> &'static [(f64, f64)] {
        const TWO: [(f64, f64); 2] = [(-1.0, 0.5), (1.0, 0.5)];
        const THREE: [(f64, f64); 3] = [
            (-1.732_050_807_568_877_2, 1.0 / 6.0),
            (0.0, 2.0 / 3.0),
            (1.732_050_807_568_877_2, 1.0 / 6.0),
        ];
        const FIVE: [(f64, f64); 5] = [
            (-2.856_970_013_872_805_6, 0.011_257_411_327_720_691),
            (-1.355_626_179_974_266, 0.222_075_922_005_612_6),
            (0.0, 0.533_333_333_333_333_3),
            (1.355_626_179_974_266, 0.222_075_922_005_612_6),
            (2.856_970_013_872_805_6, 0.011_257_411_327_720_691),
        ];
        match self {
            Quadrature::TwoPoint => &TWO,
            Quadrature::GaussHermite3 => &THREE,
            Quadrature::GaussHermite5 => &FIVE,
        }
    }
}

/// Values and per-node minimizing controls of one time slice, both in node
/// order; controls have `control_dim` entries per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceUpdate {
    pub values: Vec<f64>,
    pub controls: Vec<f64>,
}

/// One backward step from `next` with the default quadrature.
pub fn dp_recursion_step(
    next: &[f64],
    spec: &GridSpec,
    params: &ModelParams,
    mode: ControlMode,
) -> Result<SliceUpdate> {
    dp_recursion_step_with(next, spec, params, mode, Quadrature::default())
}

pub fn dp_recursion_step_with(
    next: &[f64],
    spec: &GridSpec,
    params: &ModelParams,
    mode: ControlMode,
    quadrature: Quadrature,
) -> Result<SliceUpdate> {
    spec.validate(params)?;
    let lat = Lattice::new(spec);
    if next.len() != lat.len {
        return Err(Error::param(
            "slice",
            format!("expected {} node values, got {}", lat.len, next.len()),
        ));
    }
    if spec.model == ModelId::CountingQubit {
        let product = spec.dt * params.kappa_s_sq();
        if product >= 1.0 {
            return Err(Error::JumpStepTooLarge { dt: spec.dt, product });
        }
    }
    let width = spec.model.control_dim();
    let j_ground = match spec.model {
        ModelId::CountingQubit => ground_value(&lat, next),
        _ => 0.0,
    };
    let candidates = match mode {
        ControlMode::Exhaustive => control_candidates(spec, params),
        ControlMode::ClosedForm => Vec::new(),
    };
    let rule = quadrature.rule();
    let dt = spec.dt;
    let sqrt_dt = dt.sqrt();

    let results: Vec<(f64, [f64; 2])> = lat
        .stencils
        .par_iter()
        .with_min_len(32)
        .map(|st| {
            let c = lat.coords(st.center);
            let v = noise(spec.model, &c, params);
            let lambda = intensity(spec.model, &c, params);
            let cost = |u: [f64; 2]| {
                let b = drift(spec.model, &c, u, params);
                let mean = [c[0] + b[0] * dt, c[1] + b[1] * dt, c[2] + b[2] * dt];
                let expected = match spec.model {
                    ModelId::CountingQubit => {
                        let p = lambda * dt;
                        (1.0 - p) * lat.interpolate_scalar(next, &into_ball(mean)) + p * j_ground
                    }
                    _ if v == [0.0; 3] => lat.interpolate_scalar(next, &mean),
                    model => rule
                        .iter()
                        .map(|&(xi, w)| {
                            let s = sqrt_dt * xi;
                            let x = [mean[0] + v[0] * s, mean[1] + v[1] * s, mean[2] + v[2] * s];
                            let x = if model.is_qubit() { into_ball(x) } else { x };
                            w * lat.interpolate_scalar(next, &x)
                        })
                        .sum(),
                };
                (u[0] * u[0] + u[1] * u[1]) * dt + expected
            };
            match mode {
                ControlMode::ClosedForm => {
                    let mut grad = [0.0; 3];
                    for (k, g) in grad.iter_mut().enumerate().take(lat.dim) {
                        let j0 = next[st.center];
                        *g = axis_diff(&st.axes[k], next, j0, lat.spacing[k]).central;
                    }
                    let u = closed_form_control(spec, &c, &grad, params);
                    (cost(u), u)
                }
                ControlMode::Exhaustive => {
                    let mut best = (cost(candidates[0]), candidates[0]);
                    for &u in &candidates[1..] {
                        let value = cost(u);
                        if value < best.0 {
                            best = (value, u);
                        }
                    }
                    best
                }
            }
        })
        .collect();

    let mut values = vec![0.0; lat.len];
    let mut controls = vec![0.0; lat.len * width];
    for (st, (value, u)) in lat.stencils.iter().zip(results) {
        let node = st.center;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                slice: spec.steps.saturating_sub(1),
                node,
            });
        }
        values[node] = value;
        controls[node * width..(node + 1) * width].copy_from_slice(&u[..width]);
    }
    lat.fill_masked(&mut values, 1);
    lat.fill_masked(&mut controls, width);
    Ok(SliceUpdate { values, controls })
}

fn into_ball(x: [f64; 3]) -> [f64; 3] {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if r > 1.0 {
        [x[0] / r, x[1] / r, x[2] / r]
    } else {
        x
    }
}
