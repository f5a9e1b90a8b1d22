use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use crate::bellman::{GridPolicy, ValueGrid};
use crate::filter::ControlPair;
use crate::lq;
use crate::{Control, Error, ModelId, ModelParams, Result, State};

/// Feedback law mapping `(t, state)` to a control.
#[derive(Debug, Clone)]
pub enum Policy {
    /// No control at all.
    Zero,
    /// The same control at every time and state.
    Constant(Control),
    /// Exact optimal field of the angle model, `B = -2 theta / (4 (T - t) + 1)`.
    LqClosedForm { horizon: f64 },
    /// Controls interpolated from a solved value grid.
    Grid(Arc<GridPolicy>),
}

impl Policy {
    pub fn control(&self, t: f64, state: &State) -> Result<Control> {
        match self {
            Policy::Zero => Ok(match state {
                State::Bloch(_) => Control::Pair(ControlPair::zero()),
                State::Angle(_) => Control::Field(0.0),
            }),
            Policy::Constant(c) => Ok(*c),
            Policy::LqClosedForm { horizon } => match state {
                State::Angle(a) => Ok(Control::Field(lq::optimal_b(t, a.theta, *horizon)?)),
                State::Bloch(_) => Err(Error::ModelMismatch {
                    expected: ModelId::AngleLq.to_string(),
                    found: "qubit state for the closed-form LQ policy".into(),
                }),
            },
            Policy::Grid(g) => g.control(t, state),
        }
    }
}

/// Textual policy description: `zero`, `constant:<v>[,<v>]`, `lq-closed-form`
/// or `grid:<path>`.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Zero,
    Constant(Vec<f64>),
    LqClosedForm,
    Grid(PathBuf),
}

impl PolicySpec {
    /// Resolves the description into a policy for `model`; `grid:` specs load
    /// and check the value grid file.
    pub fn build(&self, model: ModelId, params: &ModelParams) -> Result<Policy> {
        match self {
            PolicySpec::Zero => Ok(Policy::Zero),
            PolicySpec::Constant(v) => match (model.is_qubit(), v.as_slice()) {
                (true, [a, b]) => Ok(Policy::Constant(Control::Pair(ControlPair::new(*a, *b)))),
                (false, [b]) => Ok(Policy::Constant(Control::Field(*b))),
                _ => Err(Error::param(
                    "policy",
                    format!("{model} expects {} constant control value(s)", model.control_dim()),
                )),
            },
            PolicySpec::LqClosedForm => {
                if model != ModelId::AngleLq {
                    return Err(Error::ModelMismatch {
                        expected: ModelId::AngleLq.to_string(),
                        found: model.to_string(),
                    });
                }
                Ok(Policy::LqClosedForm {
                    horizon: params.horizon(),
                })
            }
            PolicySpec::Grid(path) => {
                let grid = ValueGrid::load(path)?;
                grid.check_compatible(model, params)?;
                Ok(Policy::Grid(Arc::new(GridPolicy::new(Arc::new(grid)))))
            }
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "zero" => return Ok(PolicySpec::Zero),
            "lq-closed-form" | "lq" => return Ok(PolicySpec::LqClosedForm),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("constant:") {
            let values = rest
                .split(',')
                .map(|v| {
                    let v = v.trim();
                    // accept `B=-0.4` style labels
                    let v = v.rsplit('=').next().unwrap_or(v);
                    v.parse::<f64>()
                        .map_err(|_| Error::param("policy", format!("bad constant value `{v}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("policy", "constant controls must be finite"));
            }
            return Ok(PolicySpec::Constant(values));
        }
        if let Some(rest) = s.strip_prefix("grid:") {
            return Ok(PolicySpec::Grid(PathBuf::from(rest)));
        }
        Err(Error::param(
            "policy",
            format!("unknown policy `{s}` (expected zero, constant:<v>, lq-closed-form or grid:<path>)"),
        ))
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Zero => f.write_str("zero"),
            PolicySpec::LqClosedForm => f.write_str("lq-closed-form"),
            PolicySpec::Constant(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "constant:{}", parts.join(","))
            }
            PolicySpec::Grid(p) => write!(f, "grid:{}", p.display()),
        }
    }
}
