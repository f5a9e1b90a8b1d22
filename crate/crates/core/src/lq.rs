//! Exact solution of the linear-quadratic angle problem.
//!
//! With `dTheta = 2 B dt + 2 alpha dW` and cost `Theta_T^2 + int B^2 dt`, the
//! quadratic Ansatz `J*(t, theta) = theta^2 f(t) + g(t)` reduces the HJB equation
//! `-dJ/dt = -(dJ/dtheta)^2 + 2 alpha^2 d2J/dtheta2` to
//!
//! ```text
//! f' = 4 f^2,        f(T) = 1   =>  f(t) = 1 / (4 (T - t) + 1)
//! g' = -4 alpha^2 f,  g(T) = 0   =>  g(t) = alpha^2 ln(4 (T - t) + 1)
//! ```
//!
//! and the optimal feedback is `B*(t, theta) = -dJ/dtheta = -2 theta f(t)`.
//! Theta is treated on the real line here; wrapping onto the circle is the
//! simulator's business.

use crate::{Error, Result};

fn check_time(t: f64, horizon: f64) -> Result<f64> {
    if !(t.is_finite() && horizon.is_finite()) {
        return Err(Error::param("t", "time and horizon must be finite"));
    }
    if t > horizon {
        return Err(Error::TimeOutOfRange { t, horizon });
    }
    Ok(4.0 * (horizon - t) + 1.0)
}

/// `f(t) = 1 / (4 (T - t) + 1)`.
pub fn riccati_f(t: f64, horizon: f64) -> Result<f64> {
    Ok(1.0 / check_time(t, horizon)?)
}

/// `g(t) = alpha^2 ln(4 (T - t) + 1)`.
pub fn g_term(t: f64, horizon: f64, alpha: f64) -> Result<f64> {
    let s = check_time(t, horizon)?;
    Ok(alpha * alpha * s.ln())
}

/// Optimal cost-to-go `theta^2 f(t) + g(t)`.
pub fn value(t: f64, theta: f64, horizon: f64, alpha: f64) -> Result<f64> {
    Ok(theta * theta * riccati_f(t, horizon)? + g_term(t, horizon, alpha)?)
}

/// Optimal field `B = -2 theta / (4 (T - t) + 1)`.
pub fn optimal_b(t: f64, theta: f64, horizon: f64) -> Result<f64> {
    Ok(-2.0 * theta * riccati_f(t, horizon)?)
}

/// Closed-form solution for one `(T, alpha)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqSolution {
    pub horizon: f64,
    pub alpha: f64,
}

impl LqSolution {
    pub fn new(horizon: f64, alpha: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param("horizon", format!("must be > 0, got {horizon}")));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::param("alpha", format!("must be >= 0, got {alpha}")));
        }
        Ok(Self { horizon, alpha })
    }

    pub fn f(&self, t: f64) -> Result<f64> {
        riccati_f(t, self.horizon)
    }

    pub fn g(&self, t: f64) -> Result<f64> {
        g_term(t, self.horizon, self.alpha)
    }

    pub fn value(&self, t: f64, theta: f64) -> Result<f64> {
        value(t, theta, self.horizon, self.alpha)
    }

    pub fn control(&self, t: f64, theta: f64) -> Result<f64> {
        optimal_b(t, theta, self.horizon)
    }
}

/// `|dJ/dt - (dJ/dtheta)^2 + 2 alpha^2 d2J/dtheta2|` for an arbitrary candidate
/// value function, with every derivative taken by central differences of step `h`.
pub fn hjb_residual_of<F>(j: F, t: f64, theta: f64, alpha: f64, h: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let dt = (j(t + h, theta) - j(t - h, theta)) / (2.0 * h);
    let jp = j(t, theta + h);
    let jm = j(t, theta - h);
    let j0 = j(t, theta);
    let dth = (jp - jm) / (2.0 * h);
    let dthth = (jp - 2.0 * j0 + jm) / (h * h);
    (dt - dth * dth + 2.0 * alpha * alpha * dthth).abs()
}

/// HJB residual of the closed-form value function at `(t, theta)`.
pub fn hjb_residual(t: f64, theta: f64, horizon: f64, alpha: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::param("h", format!("must be > 0, got {h}")));
    }
    if t + h > horizon {
        return Err(Error::param("t", format!("t + h = {} exceeds the horizon {horizon}", t + h)));
    }
    let sol = LqSolution::new(horizon, alpha)?;
    Ok(hjb_residual_of(
        |s, x| sol.value(s, x).expect("times checked above"),
        t,
        theta,
        alpha,
        h,
    ))
}

/// Integrates `f' = 4 f^2, g' = -4 alpha^2 f` backward from `t = T` with classical
/// RK4 and returns the largest deviations `(max_f_err, max_g_err)` from the
/// closed forms over the time grid.
pub fn ode_check(horizon: f64, alpha: f64, dt: f64) -> Result<(f64, f64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be > 0, got {dt}")));
    }
    let sol = LqSolution::new(horizon, alpha)?;
    let steps = (horizon / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::param("dt", format!("{dt} does not divide the horizon {horizon}")));
    }
    let a2 = alpha * alpha;
    // Integrate in reversed time s = T - t: df/ds = -4 f^2, dg/ds = 4 alpha^2 f.
    let rhs = |y: [f64; 2]| [-4.0 * y[0] * y[0], 4.0 * a2 * y[0]];
    let mut y = [1.0, 0.0];
    let (mut max_f, mut max_g) = (0.0f64, 0.0f64);
    for n in 1..=steps {
        let k1 = rhs(y);
        let k2 = rhs([y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]]);
        let k3 = rhs([y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]]);
        let k4 = rhs([y[0] + dt * k3[0], y[1] + dt * k3[1]]);
        for c in 0..2 {
            y[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        let t = horizon - n as f64 * dt;
        max_f = max_f.max((y[0] - sol.f(t)?).abs());
        max_g = max_g.max((y[1] - sol.g(t)?).abs());
    }
    Ok((max_f, max_g))
}
