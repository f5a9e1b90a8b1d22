//! Explicit finite-difference step of the HJB equations.
//!
//! First derivatives are central, with the minimal artificial diffusion that
//! makes them equivalent to upwind differences wherever the cell Peclet number
//! exceeds one. Second derivatives are central, with the seven-point
//! cross stencil whose off-axis weights are non-negative. Nodes next to the
//! sphere or the grid edge fall back to one-sided differences taken inward.

use rayon::prelude::*;

use super::lattice::{AxisStencil, Lattice, Stencil, AXIS_PAIRS};
use super::{optimal_controls_from_gradient, ControlMode, GridSpec, SliceUpdate, STABILITY_CONSTANT};
use crate::filter::{
    counting_drift, diffusive_diffusion, diffusive_drift, jump_intensity, BlochVector, ControlPair,
};
use crate::{Error, ModelId, ModelParams, Result};

/// Slack on the per-node coefficient bound before a node is reported.
const MONOTONICITY_SLACK: f64 = 1e-9;

/// Drift of the filter at grid coordinates `c` under control `u`.
pub(super) fn drift(model: ModelId, c: &[f64; 3], u: [f64; 2], params: &ModelParams) -> [f64; 3] {
    let p = BlochVector::new(c[0], c[1], c[2]);
    let pair = ControlPair::new(u[0], u[1]);
    match model {
        ModelId::DiffusiveQubit => diffusive_drift(p, pair),
        ModelId::CountingQubit => counting_drift(p, pair, params),
        ModelId::AngleLq => [2.0 * u[0], 0.0, 0.0],
    }
}

/// Noise coefficient vector: the filter's dW coefficient, zero for counting,
/// `2 alpha` for the angle.
pub(super) fn noise(model: ModelId, c: &[f64; 3], params: &ModelParams) -> [f64; 3] {
    match model {
        ModelId::DiffusiveQubit => diffusive_diffusion(BlochVector::new(c[0], c[1], c[2]), params),
        ModelId::CountingQubit => [0.0; 3],
        ModelId::AngleLq => [2.0 * params.alpha(), 0.0, 0.0],
    }
}

pub(super) fn intensity(model: ModelId, c: &[f64; 3], params: &ModelParams) -> f64 {
    match model {
        ModelId::CountingQubit => jump_intensity(BlochVector::new(c[0], c[1], c[2]), params),
        _ => 0.0,
    }
}

/// Completed-squares control for the discrete gradient, clamped to the box
/// when one is configured.
pub(super) fn closed_form_control(
    spec: &GridSpec,
    c: &[f64; 3],
    grad: &[f64; 3],
    params: &ModelParams,
) -> [f64; 2] {
    let u = match spec.model {
        ModelId::AngleLq => [-grad[0], 0.0],
        _ if !params.controllable() => [0.0, 0.0],
        _ => {
            let u = optimal_controls_from_gradient(BlochVector::new(c[0], c[1], c[2]), *grad);
            [u.u_plus, u.u_minus]
        }
    };
    match spec.control_bound {
        Some(b) => [u[0].clamp(-b, b), u[1].clamp(-b, b)],
        None => u,
    }
}

/// Control grid searched in exhaustive mode.
pub(super) fn control_candidates(spec: &GridSpec, params: &ModelParams) -> Vec<[f64; 2]> {
    let values = spec.control_values();
    match spec.model {
        ModelId::AngleLq => values.iter().map(|&b| [b, 0.0]).collect(),
        _ if !params.controllable() => vec![[0.0, 0.0]],
        _ => values
            .iter()
            .flat_map(|&a| values.iter().map(move |&b| [a, b]))
            .collect(),
    }
}

/// A priori bound `dt <= c h^2 / max_node tr(a)` with `a = sigma sigma^T / 2`.
pub(super) fn check_stability(lat: &Lattice, spec: &GridSpec, params: &ModelParams) -> Result<()> {
    let max_diffusion = lat
        .stencils
        .iter()
        .map(|s| {
            let v = noise(spec.model, &lat.coords(s.center), params);
            0.5 * v.iter().map(|x| x * x).sum::<f64>()
        })
        .fold(0.0, f64::max);
    if max_diffusion == 0.0 || spec.steps == 0 {
        return Ok(());
    }
    let h = lat.min_spacing();
    let limit = STABILITY_CONSTANT * h * h / max_diffusion;
    if spec.dt > limit * (1.0 + 1e-12) {
        return Err(Error::Unstable { dt: spec.dt, limit });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub(super) struct AxisDiff {
    pub central: f64,
    pub forward: Option<f64>,
    pub backward: Option<f64>,
    pub second: f64,
}

pub(super) fn axis_diff(st: &AxisStencil, j: &[f64], j0: f64, h: f64) -> AxisDiff {
    let jp = st.plus.map(|i| j[i]);
    let jm = st.minus.map(|i| j[i]);
    let jp2 = st.plus2.map(|i| j[i]);
    let jm2 = st.minus2.map(|i| j[i]);
    let central = match (jp, jm) {
        (Some(p), Some(m)) => (p - m) / (2.0 * h),
        (Some(p), None) => match jp2 {
            Some(p2) => (-3.0 * j0 + 4.0 * p - p2) / (2.0 * h),
            None => (p - j0) / h,
        },
        (None, Some(m)) => match jm2 {
            Some(m2) => (3.0 * j0 - 4.0 * m + m2) / (2.0 * h),
            None => (j0 - m) / h,
        },
        (None, None) => 0.0,
    };
    let second = match (jp, jm) {
        (Some(p), Some(m)) => (p - 2.0 * j0 + m) / (h * h),
        (Some(p), None) => jp2.map_or(0.0, |p2| (j0 - 2.0 * p + p2) / (h * h)),
        (None, Some(m)) => jm2.map_or(0.0, |m2| (j0 - 2.0 * m + m2) / (h * h)),
        (None, None) => 0.0,
    };
    AxisDiff {
        central,
        forward: jp.map(|p| (p - j0) / h),
        backward: jm.map(|m| (j0 - m) / h),
        second,
    }
}

/// Extra diffusion that turns the central difference against drift `b` into
/// the upwind one where the cell Peclet number `|b| h / (2 a)` exceeds one.
/// Axes with a missing neighbour use the one-sided difference instead.
fn artificial_diffusion(d: &AxisDiff, b: f64, a: f64, h: f64) -> f64 {
    if d.forward.is_some() && d.backward.is_some() {
        (0.5 * b.abs() * h - a).max(0.0)
    } else {
        0.0
    }
}

/// Mixed derivative `J_kl`. The stencil is chosen by the sign of the
/// coefficient `a_kl` so that the diagonal weights are non-negative.
fn cross(st: &Stencil, slot: usize, j: &[f64], j0: f64, a_kl: f64, hk: f64, hl: f64) -> f64 {
    let (k, l) = AXIS_PAIRS[slot];
    let get = |i: Option<usize>| i.map(|i| j[i]);
    let [pp, pm, mp, mm] = st.diagonals[slot].map(get);
    let (pk, mk) = (get(st.axes[k].plus), get(st.axes[k].minus));
    let (pl, ml) = (get(st.axes[l].plus), get(st.axes[l].minus));
    let hh = hk * hl;
    if let (Some(pk), Some(mk), Some(pl), Some(ml)) = (pk, mk, pl, ml) {
        let axis_sum = pk + mk + pl + ml;
        if a_kl >= 0.0 {
            if let (Some(pp), Some(mm)) = (pp, mm) {
                return (2.0 * j0 + pp + mm - axis_sum) / (2.0 * hh);
            }
        } else if let (Some(pm), Some(mp)) = (pm, mp) {
            return -(2.0 * j0 + pm + mp - axis_sum) / (2.0 * hh);
        }
    }
    if let (Some(pp), Some(pm), Some(mp), Some(mm)) = (pp, pm, mp, mm) {
        return (pp - pm - mp + mm) / (4.0 * hh);
    }
    let quadrants = [(pp, pk, pl, 1.0), (pm, pk, ml, -1.0), (mp, mk, pl, -1.0), (mm, mk, ml, 1.0)];
    let mut sum = 0.0;
    let mut count = 0;
    for (d, a, b, sign) in quadrants {
        if let (Some(d), Some(a), Some(b)) = (d, a, b) {
            sum += sign * (d - a - b + j0) / hh;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Value at the post-jump state on slice `j`.
pub(super) fn ground_value(lat: &Lattice, j: &[f64]) -> f64 {
    let g = BlochVector::ground();
    lat.interpolate_scalar(j, &[g.px, g.py, g.pz])
}

struct NodeResult {
    value: f64,
    control: [f64; 2],
    coefficient: f64,
}

#[allow(clippy::too_many_arguments)]
fn update_node(
    lat: &Lattice,
    st: &Stencil,
    spec: &GridSpec,
    params: &ModelParams,
    j: &[f64],
    j_ground: f64,
    candidates: &[[f64; 2]],
) -> NodeResult {
    let dim = lat.dim;
    let c = lat.coords(st.center);
    let j0 = j[st.center];
    let h = lat.spacing;
    let mut diffs = [AxisDiff::default(); 3];
    for k in 0..dim {
        diffs[k] = axis_diff(&st.axes[k], j, j0, h[k]);
    }
    let grad = [diffs[0].central, diffs[1].central, diffs[2].central];

    let v = noise(spec.model, &c, params);
    let a = |k: usize, l: usize| 0.5 * v[k] * v[l];

    // Artificial diffusion is sized once per node from the drift under the
    // completed-squares control, which keeps the scheme monotone there. The
    // discrete Hamiltonian is then quadratic in the control and the
    // completed-squares control is its exact minimizer.
    let predicted = closed_form_control(spec, &c, &grad, params);
    let predicted_drift = drift(spec.model, &c, predicted, params);
    let mut diffusion = 0.0;
    let mut coefficient = 0.0;
    let mut one_sided = [false; 3];
    for k in 0..dim {
        let nu = artificial_diffusion(&diffs[k], predicted_drift[k], a(k, k), h[k]);
        diffusion += (a(k, k) + nu) * diffs[k].second;
        coefficient += 2.0 * (a(k, k) + nu) / (h[k] * h[k]);
        one_sided[k] = diffs[k].forward.is_none() || diffs[k].backward.is_none();
    }
    if dim == 3 {
        for (slot, &(k, l)) in AXIS_PAIRS.iter().enumerate() {
            let akl = a(k, l);
            if akl != 0.0 {
                diffusion += 2.0 * akl * cross(st, slot, j, j0, akl, h[k], h[l]);
            }
        }
    }
    let lambda = intensity(spec.model, &c, params);
    let jump = lambda * (j_ground - j0);
    coefficient += lambda;

    let hamiltonian = |u: [f64; 2]| -> f64 {
        let b = drift(spec.model, &c, u, params);
        let mut value = u[0] * u[0] + u[1] * u[1];
        for k in 0..dim {
            value += b[k] * grad[k];
        }
        value
    };
    let (control, ham) = match spec.mode {
        ControlMode::ClosedForm => (predicted, hamiltonian(predicted)),
        ControlMode::Exhaustive => {
            let mut best = (candidates[0], hamiltonian(candidates[0]));
            for &u in &candidates[1..] {
                let value = hamiltonian(u);
                if value < best.1 {
                    best = (u, value);
                }
            }
            best
        }
    };
    // One-sided first differences put weight 3 / (2 h) on the node itself.
    let b = drift(spec.model, &c, control, params);
    for k in (0..dim).filter(|&k| one_sided[k]) {
        coefficient += 1.5 * b[k].abs() / h[k];
    }
    NodeResult {
        value: j0 + spec.dt * (ham + diffusion + jump),
        control,
        coefficient: spec.dt * coefficient,
    }
}

/// Computes slice `slice` from the next slice `j`.
pub(super) fn step(
    lat: &Lattice,
    spec: &GridSpec,
    params: &ModelParams,
    j: &[f64],
    slice: usize,
) -> Result<SliceUpdate> {
    let width = spec.model.control_dim();
    let j_ground = match spec.model {
        ModelId::CountingQubit => ground_value(lat, j),
        _ => 0.0,
    };
    let candidates = match spec.mode {
        ControlMode::Exhaustive => control_candidates(spec, params),
        ControlMode::ClosedForm => Vec::new(),
    };
    let results: Vec<NodeResult> = lat
        .stencils
        .par_iter()
        .with_min_len(64)
        .map(|st| update_node(lat, st, spec, params, j, j_ground, &candidates))
        .collect();

    let mut values = vec![0.0; lat.len];
    let mut controls = vec![0.0; lat.len * width];
    for (st, r) in lat.stencils.iter().zip(&results) {
        let node = st.center;
        if !r.value.is_finite() || !r.control.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { slice, node });
        }
        // The pass over the terminal slice only records controls.
        if slice < spec.steps && r.coefficient > 1.0 + MONOTONICITY_SLACK {
            return Err(Error::UnstableAtNode {
                slice,
                node,
                coefficient: r.coefficient,
            });
        }
        values[node] = r.value;
        controls[node * width..(node + 1) * width].copy_from_slice(&r.control[..width]);
    }
    lat.fill_masked(&mut values, 1);
    lat.fill_masked(&mut controls, width);
    Ok(SliceUpdate { values, controls })
}
