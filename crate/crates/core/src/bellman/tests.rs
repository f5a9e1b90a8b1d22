use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::filter::AngleState;
use crate::lq;
use crate::Control;

fn angle_params(alpha: f64, horizon: f64) -> ModelParams {
    ModelParams::with_side_rate(0.5, alpha, horizon).unwrap()
}

fn qubit_params(kappa_s_sq: f64, horizon: f64) -> ModelParams {
    ModelParams::with_side_rate(kappa_s_sq, 0.0, horizon).unwrap()
}

fn angle_state(theta: f64) -> State {
    State::Angle(AngleState { theta, r: 1.0 })
}

fn field(c: Control) -> f64 {
    match c {
        Control::Field(b) => b,
        Control::Pair(_) => panic!("expected a field"),
    }
}

#[test]
fn terminal_cost_examples() {
    let q = ModelId::DiffusiveQubit;
    assert_eq!(terminal_cost(q, &State::Bloch(BlochVector::excited())), 0.0);
    assert_eq!(terminal_cost(q, &State::Bloch(BlochVector::ground())), 2.0);
    assert_eq!(terminal_cost(ModelId::AngleLq, &angle_state(0.0)), 0.0);
    assert_eq!(terminal_cost(ModelId::AngleLq, &angle_state(-1.5)), 2.25);
}

#[test]
fn completed_squares_examples() {
    let u = optimal_controls_from_gradient(BlochVector::new(0.3, -0.2, 0.5), [0.0; 3]);
    assert_eq!((u.u_plus, u.u_minus), (0.0, 0.0));
    let u = optimal_controls_from_gradient(BlochVector::excited(), [1.0, 0.0, 0.0]);
    assert_eq!((u.u_plus, u.u_minus), (1.0, 0.0));
    let u = optimal_controls_from_gradient(BlochVector::new(1.0, 0.0, 0.0), [0.0, 0.0, 1.0]);
    assert_eq!((u.u_plus, u.u_minus), (-1.0, 0.0));
}

#[test]
fn hjb_rhs_examples() {
    let params = qubit_params(1.0, 1.0);
    let zero_h = [[0.0; 3]; 3];
    let p = BlochVector::new(0.2, -0.4, 0.1);
    assert_eq!(hjb_rhs_diffusive(p, &[0.0; 3], &zero_h, &params), 0.0);
    let center = BlochVector::new(0.0, 0.0, 0.0);
    assert_abs_diff_eq!(hjb_rhs_diffusive(center, &[0.0, 0.0, -1.0], &zero_h, &params), 1.0);
    let mut hxx = zero_h;
    hxx[0][0] = 1.0;
    assert_abs_diff_eq!(
        hjb_rhs_diffusive(BlochVector::excited(), &[0.0; 3], &hxx, &params),
        2.0,
        epsilon = 1e-15
    );

    assert_eq!(hjb_rhs_counting(p, &[0.0; 3], 0.7, 0.7, &params), 0.0);
    let g = [0.3, -1.2, 0.8];
    assert_abs_diff_eq!(
        hjb_rhs_counting(BlochVector::ground(), &g, 1.0, 5.0, &params),
        -g[1] * g[1] - g[0] * g[0],
        epsilon = 1e-15
    );
    assert_abs_diff_eq!(
        hjb_rhs_counting(BlochVector::excited(), &[0.0; 3], 0.0, 2.0, &params),
        2.0
    );

    let ap = angle_params(0.5, 1.0);
    assert_eq!(hjb_rhs_angle(0.0, 0.0, &ap), 0.0);
    assert_eq!(hjb_rhs_angle(1.0, 0.0, &ap), -1.0);
    assert_eq!(hjb_rhs_angle(0.0, 1.0, &ap), 0.5);
}

#[test]
fn closed_form_angle_value_solves_the_rhs() {
    // -dJ/dt = -(J_theta)^2 + 2 alpha^2 J_thetatheta for the exact solution.
    let (alpha, horizon) = (0.5, 1.0);
    let params = angle_params(alpha, horizon);
    let sol = lq::LqSolution::new(horizon, alpha).unwrap();
    for (t, theta) in [(0.0, 1.0), (0.4, -2.0), (0.9, 0.3)] {
        let f = sol.f(t).unwrap();
        let dt_j = {
            let h = 1e-5;
            (sol.value(t + h, theta).unwrap() - sol.value(t - h, theta).unwrap()) / (2.0 * h)
        };
        let rhs = hjb_rhs_angle(2.0 * f * theta, 2.0 * f, &params);
        assert_abs_diff_eq!(-dt_j, rhs, epsilon = 1e-8);
    }
}

proptest! {
    #[test]
    fn second_order_part_is_half_diffusion_squared(
        x in -0.6f64..0.6, y in -0.6f64..0.6, z in -0.6f64..0.6,
        v0 in -2.0f64..2.0, v1 in -2.0f64..2.0, v2 in -2.0f64..2.0,
        ks in 0.0f64..=1.0,
    ) {
        let params = qubit_params(ks, 1.0);
        let p = BlochVector::new(x, y, z);
        let v = [v0, v1, v2];
        let mut hess = [[0.0; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                hess[k][l] = v[k] * v[l];
            }
        }
        let b = crate::filter::diffusive_diffusion(p, &params);
        let expected = 0.5 * dot(&b, &v).powi(2);
        let got = hjb_rhs_diffusive(p, &[0.0; 3], &hess, &params);
        prop_assert!((got - expected).abs() <= 1e-10);
    }
}

#[test]
fn spec_validation_names_the_field() {
    let params = angle_params(0.5, 1.0);
    let field_of = |spec: GridSpec| match spec.validate(&params) {
        Err(Error::InvalidParameter { name, .. }) => name,
        other => panic!("expected a parameter error, got {other:?}"),
    };
    assert_eq!(field_of(GridSpec::angle(2, 0.01, 100)), "nodes");
    assert_eq!(field_of(GridSpec::angle(11, 0.01, 99)), "steps");
    assert_eq!(field_of(GridSpec::angle(11, -0.01, 100)), "dt");
    let mut spec = GridSpec::angle(11, 0.01, 100);
    spec.upper = vec![-4.0];
    assert_eq!(field_of(spec), "upper");
    assert_eq!(field_of(GridSpec::angle(11, 0.01, 100).with_control_bound(Some(-1.0))), "control_bound");
    let q = GridSpec::qubit(ModelId::DiffusiveQubit, 5, 0.01, 100);
    assert_eq!(field_of(GridSpec { nodes: vec![5, 5], ..q }), "nodes");
    assert!(GridSpec::angle(11, 0.01, 100).validate(&params).is_ok());
}

#[test]
fn unstable_time_step_is_rejected() {
    let params = angle_params(0.5, 1.0);
    let err = solve_backward(&GridSpec::angle(401, 0.01, 100), &params).unwrap_err();
    assert!(matches!(err, Error::Unstable { .. }), "{err}");
}

#[test]
fn zero_steps_give_the_terminal_cost() {
    let params = angle_params(0.5, 1.0);
    let vg = solve_backward(&GridSpec::angle(21, 0.05, 0), &params).unwrap();
    assert_eq!(vg.steps(), 0);
    for node in 0..vg.node_count() {
        let theta = vg.node_coords(node)[0];
        assert_eq!(vg.slice(0)[node], theta * theta);
    }
}

#[test]
fn terminal_slice_is_exact_on_qubit_grids() {
    for model in [ModelId::DiffusiveQubit, ModelId::CountingQubit] {
        let params = qubit_params(0.5, 0.1);
        let vg = solve_backward(&GridSpec::qubit(model, 9, 0.002, 50), &params).unwrap();
        let last = vg.slice(vg.steps());
        for node in (0..vg.node_count()).filter(|&i| vg.is_active(i)) {
            assert_eq!(last[node], 1.0 - vg.node_coords(node)[2]);
        }
    }
}

fn solve_reference_angle() -> ValueGrid {
    let params = angle_params(0.5, 1.0);
    solve_backward(&GridSpec::angle(401, 1e-4, 10_000), &params).unwrap()
}

#[test]
fn angle_grid_matches_closed_form_and_its_symmetries() {
    let vg = solve_reference_angle();
    let sol = lq::LqSolution::new(1.0, 0.5).unwrap();
    let mut max_err = 0.0f64;
    for node in 0..vg.node_count() {
        let theta = vg.node_coords(node)[0];
        if theta.abs() <= 2.0 + 1e-12 {
            max_err = max_err.max((vg.slice(0)[node] - sol.value(0.0, theta).unwrap()).abs());
        }
    }
    assert!(max_err <= 1e-2, "max error {max_err}");

    let m = vg.node_count();
    let mid = m / 2;
    for n in (0..=vg.steps()).step_by(500) {
        let s = vg.slice(n);
        for k in 0..=mid {
            assert!((s[mid + k] - s[mid - k]).abs() <= 1e-9, "slice {n} not even");
            if k > 0 {
                assert!(s[mid + k] >= s[mid + k - 1] - 1e-9, "slice {n} not monotone at {k}");
            }
        }
    }

    let policy = GridPolicy::new(std::sync::Arc::new(vg));
    let b = field(policy.control(0.0, &angle_state(1.0)).unwrap());
    assert_abs_diff_eq!(b, -0.4, epsilon = 1e-2);
    for t in [0.0, 0.37, 0.9, 1.0] {
        for theta in [0.1, 0.8, 2.5] {
            let plus = field(policy.control(t, &angle_state(theta)).unwrap());
            let minus = field(policy.control(t, &angle_state(-theta)).unwrap());
            assert!((plus + minus).abs() <= 1e-9);
        }
    }
}

#[test]
fn deterministic_limit_matches_pure_lq() {
    let horizon = 1.0;
    let params = angle_params(0.0, horizon);
    let vg = solve_backward(&GridSpec::angle(201, 1e-3, 1000), &params).unwrap();
    for theta in [-1.5, -0.5, 0.0, 0.7, 1.2] {
        let j = vg.value(0.0, &angle_state(theta)).unwrap();
        assert_abs_diff_eq!(j, theta * theta / (4.0 * horizon + 1.0), epsilon = 2e-2);
    }
}

#[test]
fn policy_rejects_times_outside_the_horizon_and_clamps_t_equals_t() {
    let params = angle_params(0.5, 1.0);
    let vg = solve_backward(&GridSpec::angle(41, 0.002, 500), &params).unwrap();
    assert_eq!(vg.control_slice_index(1.0).unwrap(), 499);
    assert_eq!(vg.control_slice_index(0.0).unwrap(), 0);
    assert_eq!(vg.control_slice_index(0.015).unwrap(), 7);
    let policy = GridPolicy::new(std::sync::Arc::new(vg));
    assert!(matches!(
        policy.control(1.5, &angle_state(0.0)),
        Err(Error::TimeOutOfRange { .. })
    ));
    assert!(policy.control(-0.1, &angle_state(0.0)).is_err());
    assert!(matches!(
        policy.control(0.5, &State::Bloch(BlochVector::ground())),
        Err(Error::ModelMismatch { .. })
    ));
    let at_end = field(policy.control(1.0, &angle_state(1.0)).unwrap());
    let last = field(policy.grid().interpolate_control(499, &[1.0]));
    assert_eq!(at_end, last);
}

#[test]
fn exhaustive_matches_closed_form_when_the_minimizer_is_on_the_grid() {
    // Three nodes: the closed-form fields are 2 pi, 0 and -2 pi.
    let params = angle_params(0.5, 0.1);
    let base = GridSpec::angle(3, 0.01, 10);
    let closed = solve_backward(&base, &params).unwrap();
    let exhaustive = solve_backward(
        &base
            .clone()
            .with_mode(ControlMode::Exhaustive)
            .with_control_bound(Some(4.0 * PI))
            .with_control_resolution(9),
        &params,
    )
    .unwrap();
    let last = base.steps;
    assert_eq!(closed.control_slice(last), exhaustive.control_slice(last));
    for (a, b) in closed.control_slice(last).iter().zip([2.0 * PI, 0.0, -2.0 * PI]) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
    }
}

#[test]
fn exhaustive_and_closed_form_values_agree_to_control_spacing() {
    let horizon = 0.5;
    let params = angle_params(0.5, horizon);
    let base = GridSpec::angle(101, 1e-3, 500);
    let closed = solve_backward(&base, &params).unwrap();
    let bound = 8.0;
    for resolution in [33, 65] {
        let spec = base
            .clone()
            .with_mode(ControlMode::Exhaustive)
            .with_control_bound(Some(bound))
            .with_control_resolution(resolution);
        let exhaustive = solve_backward(&spec, &params).unwrap();
        let spacing = 2.0 * bound / (resolution - 1) as f64;
        let tol = horizon * (spacing / 2.0).powi(2) + 1e-9;
        for node in 0..closed.node_count() {
            let theta = closed.node_coords(node)[0];
            if theta.abs() > 2.5 {
                // The closed-form field leaves the box near the edge.
                continue;
            }
            let diff = exhaustive.slice(0)[node] - closed.slice(0)[node];
            assert!(diff >= -1e-9 && diff <= tol, "theta {theta}: {diff} vs {tol}");
        }
    }
}

#[test]
fn values_stay_within_bounds() {
    let params = angle_params(0.5, 0.5);
    let bound = 3.0;
    let spec = GridSpec::angle(61, 1e-3, 500)
        .with_mode(ControlMode::Exhaustive)
        .with_control_bound(Some(bound))
        .with_control_resolution(31);
    let vg = solve_backward(&spec, &params).unwrap();
    let (lo, hi) = vg.value_range();
    assert!(lo >= 0.0, "{lo}");
    assert!(hi <= PI * PI + bound * bound * 0.5, "{hi}");

    for model in [ModelId::DiffusiveQubit, ModelId::CountingQubit] {
        let params = qubit_params(0.5, 0.2);
        let spec = GridSpec::qubit(model, 11, 0.002, 100)
            .with_mode(ControlMode::Exhaustive)
            .with_control_bound(Some(2.0))
            .with_control_resolution(9);
        let vg = solve_backward(&spec, &params).unwrap();
        let (lo, hi) = vg.value_range();
        assert!(lo >= -1e-12, "{model}: {lo}");
        assert!(hi <= 2.0 + 8.0 * 0.2, "{model}: {hi}");
    }
}

#[test]
fn qubit_control_never_increases_the_cost_to_go() {
    for model in [ModelId::DiffusiveQubit, ModelId::CountingQubit] {
        let params = qubit_params(0.5, 0.5);
        let spec = GridSpec::qubit(model, 11, 0.002, 250);
        let controlled = solve_backward(&spec, &params).unwrap();
        let free = solve_backward(&spec.clone().with_control_bound(Some(0.0)), &params).unwrap();
        for n in [0, controlled.steps()] {
            assert!(controlled.slice(n).iter().all(|v| v.is_finite()));
        }
        let mut best_gain = 0.0f64;
        for node in (0..controlled.node_count()).filter(|&i| controlled.is_active(i)) {
            let gain = free.slice(0)[node] - controlled.slice(0)[node];
            assert!(gain >= -1e-6, "{model}, node {node}: {gain}");
            best_gain = best_gain.max(gain);
        }
        assert!(best_gain > 0.05, "{model}: {best_gain}");
        let side = State::Bloch(BlochVector::new(0.6, 0.0, 0.0));
        let top = State::Bloch(BlochVector::excited());
        assert!(controlled.value(0.0, &top).unwrap() < controlled.value(0.0, &side).unwrap());
    }
}

#[test]
fn uncontrollable_qubit_records_zero_controls() {
    let params = ModelParams::new(1.0, 0.0, 0.0, 0.1).unwrap();
    let vg = solve_backward(&GridSpec::qubit(ModelId::DiffusiveQubit, 7, 0.001, 100), &params).unwrap();
    assert!(vg.control_slice(0).iter().all(|&u| u == 0.0));
}

#[test]
fn dp_step_without_dynamics_leaves_the_slice_unchanged() {
    let params = angle_params(0.0, 1.0);
    let spec = GridSpec::angle(31, 0.1, 10)
        .with_control_bound(Some(0.0))
        .with_control_resolution(1);
    let next: Vec<f64> = (0..31).map(|i| (i as f64 * 0.3).sin() + 2.0).collect();
    let out = dp_recursion_step(&next, &spec, &params, ControlMode::Exhaustive).unwrap();
    assert_eq!(out.values, next);
    assert!(out.controls.iter().all(|&b| b == 0.0));
}

#[test]
fn dp_step_from_the_terminal_cost_matches_the_gaussian_moment_identity() {
    let (alpha, dt) = (0.5, 0.01);
    let params = angle_params(alpha, 1.0);
    let nodes = 2001;
    let spec = GridSpec::angle(nodes, dt, 100);
    let lat = lattice::Lattice::new(&spec);
    let next: Vec<f64> = (0..nodes).map(|i| lat.coords(i)[0].powi(2)).collect();
    let h = lat.spacing[0];
    // Linear interpolation of theta^2 overshoots by at most h^2 / 4.
    let interp = h * h / 4.0;
    let exact = |theta: f64| theta * theta / (1.0 + 4.0 * dt) + 4.0 * alpha * alpha * dt;

    let closed = dp_recursion_step(&next, &spec, &params, ControlMode::ClosedForm).unwrap();
    let ex_spec = spec
        .clone()
        .with_mode(ControlMode::Exhaustive)
        .with_control_bound(Some(8.0))
        .with_control_resolution(1601);
    let exhaustive = dp_recursion_step(&next, &ex_spec, &params, ControlMode::Exhaustive).unwrap();
    let control_step = 16.0 / 1600.0;
    for node in 0..nodes {
        let theta = lat.coords(node)[0];
        if theta.abs() > 2.5 {
            continue;
        }
        // The completed-squares field -2 theta misses the one-step minimizer
        // -2 theta / (1 + 4 dt) by O(dt^2 theta^2) in value.
        let slack = interp + 64.0 * dt.powi(3) * theta * theta + 1e-12;
        assert!((closed.values[node] - exact(theta)).abs() <= slack, "theta {theta}");
        let b_star = -2.0 * theta / (1.0 + 4.0 * dt);
        assert!((exhaustive.controls[node] - b_star).abs() <= control_step, "theta {theta}");
        assert!((exhaustive.values[node] - exact(theta)).abs() <= interp + dt * control_step.powi(2) + 1e-12);
    }
}

#[test]
fn dp_modes_agree_to_control_spacing() {
    let params = qubit_params(0.5, 0.1);
    let spec = GridSpec::qubit(ModelId::DiffusiveQubit, 17, 0.01, 10).with_control_bound(Some(3.0));
    let lat = lattice::Lattice::new(&spec);
    let next: Vec<f64> = (0..lat.len).map(|i| 1.0 - lat.coords(i)[2]).collect();
    let closed = dp_recursion_step(&next, &spec, &params, ControlMode::ClosedForm).unwrap();
    let resolution = 61;
    let fine = spec.clone().with_control_resolution(resolution);
    let exhaustive = dp_recursion_step(&next, &fine, &params, ControlMode::Exhaustive).unwrap();
    let spacing = 6.0 / (resolution - 1) as f64;
    // Away from the sphere every quadrature point interpolates a linear
    // field exactly, so the one-step objective is quadratic in the control
    // and the completed-squares control is its exact minimizer.
    let tol = spec.dt * 2.0 * (spacing / 2.0).powi(2) + 1e-12;
    let mut checked = 0;
    for node in 0..lat.len {
        let c = lat.coords(node);
        if (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() > 0.4 {
            continue;
        }
        checked += 1;
        let diff = exhaustive.values[node] - closed.values[node];
        assert!(diff >= -1e-12 && diff <= tol, "node {node}: {diff} vs {tol}");
    }
    assert!(checked > 100);
}

#[test]
fn dp_counting_step_uses_the_two_branches() {
    let params = qubit_params(1.0, 1.0);
    let spec = GridSpec::qubit(ModelId::CountingQubit, 5, 0.1, 10)
        .with_control_bound(Some(0.0))
        .with_control_resolution(1);
    let lat = lattice::Lattice::new(&spec);
    let next: Vec<f64> = (0..lat.len).map(|i| 1.0 - lat.coords(i)[2]).collect();
    let out = dp_recursion_step(&next, &spec, &params, ControlMode::Exhaustive).unwrap();
    // At the excited state: jump with probability 0.1 to the ground state
    // (cost 2), else drift by dt * (0, 0, -2 + 2) = 0.
    let top = lat.index_of(&[2, 2, 4]);
    assert_abs_diff_eq!(out.values[top], 0.9 * 0.0 + 0.1 * 2.0, epsilon = 1e-12);
    let bad = GridSpec::qubit(ModelId::CountingQubit, 5, 1.0, 1);
    assert!(matches!(
        dp_recursion_step(&next, &bad, &params, ControlMode::ClosedForm),
        Err(Error::JumpStepTooLarge { .. })
    ));
    assert!(dp_recursion_step(&next[1..], &spec, &params, ControlMode::ClosedForm).is_err());
}

#[test]
fn vgrid_round_trip_is_bit_exact() {
    let params = qubit_params(0.5, 0.05);
    let spec = GridSpec::qubit(ModelId::DiffusiveQubit, 7, 0.005, 10).with_control_bound(Some(2.5));
    let vg = solve_backward(&spec, &params).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(format!("g.{VGRID_EXTENSION}"));
    vg.save(&path).unwrap();
    let back = ValueGrid::load(&path).unwrap();
    assert_eq!(back.spec(), vg.spec());
    assert_eq!(back.params(), vg.params());
    for n in 0..=vg.steps() {
        let bits = |s: &[f64]| s.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.slice(n)), bits(vg.slice(n)));
        assert_eq!(bits(back.control_slice(n)), bits(vg.control_slice(n)));
    }
    back.check_compatible(ModelId::DiffusiveQubit, &params).unwrap();
    assert!(back.check_compatible(ModelId::CountingQubit, &params).is_err());
    assert!(back
        .check_compatible(ModelId::DiffusiveQubit, &qubit_params(0.25, 0.05))
        .is_err());
}

#[test]
fn malformed_vgrid_files_are_rejected() {
    let params = angle_params(0.5, 0.1);
    let vg = solve_backward(&GridSpec::angle(11, 0.01, 10), &params).unwrap();
    let mut bytes = Vec::new();
    vg.write_to(&mut bytes).unwrap();
    assert!(ValueGrid::read_from(bytes.as_slice()).is_ok());

    let truncated = &bytes[..bytes.len() - 3];
    assert!(matches!(ValueGrid::read_from(truncated), Err(Error::Format(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(ValueGrid::read_from(extra.as_slice()), Err(Error::Format(_))));
    assert!(matches!(ValueGrid::read_from(&b"not json\n"[..]), Err(Error::Format(_))));
    assert!(matches!(ValueGrid::read_from(&b"{}"[..]), Err(Error::Format(_))));
}
