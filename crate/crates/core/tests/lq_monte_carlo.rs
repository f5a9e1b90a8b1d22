//! Monte Carlo cost of the closed-form LQ law against the exact value and
//! against the exact expectation of its Euler discretization.

use qubit_control::lq;
use qubit_control::sim::{run_batch, SimConfig};
use qubit_control::{AngleState, ModelId, ModelParams, Policy, State};

const ALPHA: f64 = 0.5;
const HORIZON: f64 = 1.0;
const THETA0: f64 = 1.0;

fn config(dt: f64) -> SimConfig {
    let params = ModelParams::with_side_rate(0.5, ALPHA, HORIZON).unwrap();
    SimConfig::new(ModelId::AngleLq, params, dt).unwrap()
}

fn start() -> State {
    State::Angle(AngleState::new(THETA0, 1.0).unwrap())
}

/// Expected cost of the Euler scheme under `B_n = -2 f(t_n) theta_n`, from
/// the exact recursion of the mean `m` and variance `v` of `theta_n`.
fn euler_expected_cost(dt: f64) -> f64 {
    let steps = (HORIZON / dt).round() as usize;
    let (mut m, mut v, mut cost) = (THETA0, 0.0, 0.0);
    for n in 0..steps {
        let f = lq::riccati_f(n as f64 * dt, HORIZON).unwrap();
        cost += 4.0 * f * f * (m * m + v) * dt;
        let gain = 1.0 - 4.0 * f * dt;
        m *= gain;
        v = gain * gain * v + 4.0 * ALPHA * ALPHA * dt;
    }
    cost + m * m + v
}

#[test]
fn euler_bias_is_first_order_in_dt() {
    let exact = lq::value(0.0, THETA0, HORIZON, ALPHA).unwrap();
    let errors: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&dt| (euler_expected_cost(dt) - exact).abs())
        .collect();
    println!("Euler bias: {:?}", errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>());
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((8.0..12.5).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn monte_carlo_matches_the_euler_expectation_at_every_step_size() {
    let policy = Policy::LqClosedForm { horizon: HORIZON };
    for (dt, n) in [(1e-2, 100_000), (1e-3, 40_000), (1e-4, 10_000)] {
        let stats = run_batch(&config(dt), &policy, start(), n, 7).unwrap();
        let oracle = euler_expected_cost(dt);
        let z = (stats.mean - oracle) / stats.std_error;
        println!("dt {dt:e}: mean {:.5} oracle {oracle:.5} z {z:.2}", stats.mean);
        assert!(z.abs() <= 3.0, "dt {dt}: z = {z}");
    }
}

#[test]
fn monte_carlo_matches_the_closed_form_value() {
    let policy = Policy::LqClosedForm { horizon: HORIZON };
    let stats = run_batch(&config(1e-3), &policy, start(), 100_000, 11).unwrap();
    let exact = lq::value(0.0, THETA0, HORIZON, ALPHA).unwrap();
    assert!(
        (stats.mean - exact).abs() <= 3.0 * stats.std_error,
        "{} vs {exact} (se {})",
        stats.mean,
        stats.std_error
    );
}
