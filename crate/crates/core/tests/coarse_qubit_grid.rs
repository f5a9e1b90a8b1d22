//! End-to-end backward solves of the qubit models on a coarse masked ball.

use qubit_control::bellman::{fd_step, solve_backward, ControlMode, GridSpec, ValueGrid};
use qubit_control::{ModelId, ModelParams};

const HORIZON: f64 = 0.2;
const DT: f64 = 0.0025;
const STEPS: usize = 80;
const BOX: f64 = 5.0;
const RESOLUTION: usize = 41;

fn params() -> ModelParams {
    ModelParams::with_side_rate(0.5, 0.0, HORIZON).unwrap()
}

fn spec(model: ModelId, mode: ControlMode) -> GridSpec {
    GridSpec::qubit(model, 21, DT, STEPS)
        .with_mode(mode)
        .with_control_bound(Some(BOX))
        .with_control_resolution(RESOLUTION)
}

fn max_mode_gap(a: &ValueGrid, b: &ValueGrid) -> f64 {
    let mut gap = 0.0f64;
    for n in 0..=a.steps() {
        for node in (0..a.node_count()).filter(|&i| a.is_active(i)) {
            gap = gap.max((a.slice(n)[node] - b.slice(n)[node]).abs());
        }
    }
    gap
}

#[test]
fn coarse_ball_solves_are_exact_at_the_horizon_bounded_and_mode_consistent() {
    let spacing = 2.0 * BOX / (RESOLUTION - 1) as f64;
    // The discrete Hamiltonian is an isotropic quadratic in the control, so
    // rounding both components to the grid costs at most this per step.
    let per_step = DT * 2.0 * (spacing / 2.0).powi(2);
    for model in [ModelId::DiffusiveQubit, ModelId::CountingQubit] {
        let closed = solve_backward(&spec(model, ControlMode::ClosedForm), &params()).unwrap();
        let exhaustive_spec = spec(model, ControlMode::Exhaustive);
        let exhaustive = solve_backward(&exhaustive_spec, &params()).unwrap();
        for vg in [&closed, &exhaustive] {
            let last = vg.slice(vg.steps());
            for node in (0..vg.node_count()).filter(|&i| vg.is_active(i)) {
                assert_eq!(last[node], 1.0 - vg.node_coords(node)[2]);
            }
            let (lo, hi) = vg.value_range();
            assert!(lo >= 0.0 && hi <= 2.0 + BOX * BOX * HORIZON, "{model}: [{lo}, {hi}]");
        }

        let mut worst = 0.0f64;
        for n in 1..=STEPS {
            let step = fd_step(closed.slice(n), &exhaustive_spec, &params()).unwrap();
            for node in (0..closed.node_count()).filter(|&i| closed.is_active(i)) {
                let diff = step.values[node] - closed.slice(n - 1)[node];
                assert!(diff >= -1e-12 && diff <= per_step + 1e-12, "{model} slice {n}: {diff}");
                worst = worst.max(diff);
            }
        }
        println!(
            "{model}: per-slice mode gap {worst:.3e} (bound {per_step:.3e}), whole solve {:.3e}",
            max_mode_gap(&closed, &exhaustive)
        );
    }
}
