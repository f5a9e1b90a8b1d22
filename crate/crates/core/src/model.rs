use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::filter::{AngleState, BlochVector, ControlPair};
use crate::{Error, Result};

/// The three filtered models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    /// Qubit under homodyne detection of the side channel.
    DiffusiveQubit,
    /// Qubit under photon counting in the side channel.
    CountingQubit,
    /// Linear cavity model reduced to an angle on a circle.
    AngleLq,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::DiffusiveQubit => "diffusive-qubit",
            ModelId::CountingQubit => "counting-qubit",
            ModelId::AngleLq => "angle-lq",
        }
    }

    pub fn is_qubit(self) -> bool {
        !matches!(self, ModelId::AngleLq)
    }

    /// Number of state coordinates the solvers grid over.
    pub fn state_dim(self) -> usize {
        if self.is_qubit() {
            3
        } else {
            1
        }
    }

    /// Number of real control inputs.
    pub fn control_dim(self) -> usize {
        if self.is_qubit() {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusive-qubit" => Ok(ModelId::DiffusiveQubit),
            "counting-qubit" => Ok(ModelId::CountingQubit),
            "angle-lq" => Ok(ModelId::AngleLq),
            other => Err(Error::param(
                "model",
                format!("unknown model `{other}` (expected diffusive-qubit, counting-qubit or angle-lq)"),
            )),
        }
    }
}

/// Filter state of either kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum State {
    Bloch(BlochVector),
    Angle(AngleState),
}

impl State {
    pub fn bloch(self) -> Option<BlochVector> {
        match self {
            State::Bloch(p) => Some(p),
            State::Angle(_) => None,
        }
    }

    pub fn angle(self) -> Option<AngleState> {
        match self {
            State::Angle(a) => Some(a),
            State::Bloch(_) => None,
        }
    }

    /// Grid coordinates of the state: `[px, py, pz]` or `[theta]`.
    pub fn coords(self) -> Vec<f64> {
        match self {
            State::Bloch(p) => p.to_array().to_vec(),
            State::Angle(a) => vec![a.theta],
        }
    }

    pub fn matches(self, model: ModelId) -> bool {
        matches!(
            (self, model),
            (State::Bloch(_), ModelId::DiffusiveQubit | ModelId::CountingQubit)
                | (State::Angle(_), ModelId::AngleLq)
        )
    }
}

/// A control value: the laser quadratures for the qubit models or the
/// magnetic field `B` for the angle model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Control {
    Pair(ControlPair),
    Field(f64),
}

impl Control {
    pub fn zero_for(model: ModelId) -> Self {
        if model.is_qubit() {
            Control::Pair(ControlPair::zero())
        } else {
            Control::Field(0.0)
        }
    }

    /// Running-cost rate: `u+^2 + u-^2` or `B^2`.
    pub fn energy(self) -> f64 {
        match self {
            Control::Pair(u) => u.energy(),
            Control::Field(b) => b * b,
        }
    }

    pub fn is_finite(self) -> bool {
        match self {
            Control::Pair(u) => u.is_finite(),
            Control::Field(b) => b.is_finite(),
        }
    }

    pub fn components(self) -> Vec<f64> {
        match self {
            Control::Pair(u) => vec![u.u_plus, u.u_minus],
            Control::Field(b) => vec![b],
        }
    }

    pub fn matches(self, model: ModelId) -> bool {
        matches!(self, Control::Pair(_)) == model.is_qubit()
    }

    pub fn clamp(self, bound: f64) -> Self {
        match self {
            Control::Pair(u) => Control::Pair(u.clamp(bound)),
            Control::Field(b) => Control::Field(b.clamp(-bound, bound)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_id_parses_and_prints() {
        for m in [ModelId::DiffusiveQubit, ModelId::CountingQubit, ModelId::AngleLq] {
            assert_eq!(m.as_str().parse::<ModelId>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("qutrit".parse::<ModelId>().is_err());
    }

    #[test]
    fn control_kinds_match_models() {
        assert!(Control::zero_for(ModelId::AngleLq).matches(ModelId::AngleLq));
        assert!(!Control::Field(1.0).matches(ModelId::CountingQubit));
        assert_eq!(Control::Pair(ControlPair::new(3.0, 4.0)).energy(), 25.0);
    }
}
