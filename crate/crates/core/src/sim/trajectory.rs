use std::io::{self, Write};

use super::{PathOutcome, StepRecord};
use crate::{Control, ModelId, State};

/// Time-indexed record of one simulated path.
///
/// Row `n` holds the state at `t_n = n dt`, the control applied on
/// `[t_n, t_{n+1})`, that step's noise and observation increments, and the
/// running cost accumulated on `[0, t_n)`. The last row is the state at the
/// horizon with a zero control and zero increments.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub model: ModelId,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    pub noise: Vec<f64>,
    pub observations: Vec<f64>,
    pub running_cost: Vec<f64>,
    pub terminal_cost: f64,
    /// Realized cost `terminal_cost + running_cost.last()`.
    pub total_cost: f64,
}

impl Trajectory {
    pub(crate) fn with_capacity(model: ModelId, dt: f64, rows: usize) -> Self {
        Self {
            model,
            dt,
            times: Vec::with_capacity(rows),
            states: Vec::with_capacity(rows),
            controls: Vec::with_capacity(rows),
            noise: Vec::with_capacity(rows),
            observations: Vec::with_capacity(rows),
            running_cost: Vec::with_capacity(rows),
            terminal_cost: 0.0,
            total_cost: 0.0,
        }
    }

    pub(crate) fn push(&mut self, rec: &StepRecord) {
        self.times.push(rec.t);
        self.states.push(rec.state);
        self.controls.push(rec.control);
        self.noise.push(rec.noise);
        self.observations.push(rec.observation);
        self.running_cost.push(rec.running_cost);
    }

    pub(crate) fn finish(&mut self, horizon: f64, outcome: &PathOutcome) {
        self.times.push(horizon);
        self.states.push(outcome.final_state);
        self.controls.push(Control::zero_for(self.model));
        self.noise.push(0.0);
        self.observations.push(0.0);
        self.running_cost.push(outcome.running_cost);
        self.terminal_cost = outcome.terminal_cost;
        self.total_cost = outcome.terminal_cost + outcome.running_cost;
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn csv_header(model: ModelId) -> &'static str {
        if model.is_qubit() {
            "t,px,py,pz,u_plus,u_minus,dW_or_dN,dY,running_cost"
        } else {
            "t,theta,B,dW,running_cost"
        }
    }

    /// Writes the trajectory as CSV, every number with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::csv_header(self.model))?;
        for i in 0..self.len() {
            let mut fields = vec![self.times[i]];
            match (self.states[i], self.controls[i]) {
                (State::Bloch(p), Control::Pair(u)) => {
                    fields.extend([p.px, p.py, p.pz, u.u_plus, u.u_minus]);
                    fields.extend([self.noise[i], self.observations[i]]);
                }
                (State::Angle(a), Control::Field(b)) => {
                    fields.extend([a.theta, b, self.noise[i]]);
                }
                _ => unreachable!("state and control kinds always agree"),
            }
            fields.push(self.running_cost[i]);
            let line: Vec<String> = fields.iter().map(|x| format_f64(*x)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits; parses back bit-exactly.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, Policy, SimConfig};
    use crate::{AngleState, BlochVector, ModelParams};

    #[test]
    fn csv_layout_and_cost_bookkeeping() {
        let params = ModelParams::with_side_rate(0.6, 0.5, 0.1).unwrap();
        let cfg = SimConfig::new(ModelId::DiffusiveQubit, params, 0.01).unwrap();
        let policy = Policy::Constant(Control::Pair(crate::ControlPair::new(0.5, 0.0)));
        let traj = simulate(&cfg, &policy, State::Bloch(BlochVector::new(0.1, 0.2, 0.3)), 1).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.running_cost.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(traj.total_cost, traj.terminal_cost + traj.running_cost[10]);

        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,px,py,pz,u_plus,u_minus,dW_or_dN,dY,running_cost");
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row.len(), 9);
        assert_eq!(row[1..4], [0.1, 0.2, 0.3]);
        assert_eq!(text.lines().count(), 12);
    }

    #[test]
    fn angle_csv_header() {
        let params = ModelParams::with_side_rate(1.0, 0.5, 0.1).unwrap();
        let cfg = SimConfig::new(ModelId::AngleLq, params, 0.05).unwrap();
        let traj = simulate(&cfg, &Policy::Zero, State::Angle(AngleState::new(1.0, 1.0).unwrap()), 1).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,theta,B,dW,running_cost\n"));
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 5);
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert_eq!(s.split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
        }
    }
}
