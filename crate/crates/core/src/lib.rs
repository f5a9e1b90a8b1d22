//! Optimal feedback control of a continuously monitored qubit.
//!
//! The crate is organised around four pieces:
//!
//! * [`filter`]: state and parameter types, the drift/diffusion coefficients of
//!   the diffusive and photon-counting qubit filters and of the cavity angle
//!   model, and the Lindblad generator they share.
//! * [`sim`]: forward simulation of those filters under a feedback [`Policy`],
//!   realized costs, and seeded parallel Monte Carlo.
//! * [`bellman`]: backward solvers for the dynamic-programming recursion and the
//!   HJB equations on state grids, with policy extraction and `.vgrid` files.
//! * [`lq`]: the closed-form solution of the linear-quadratic angle problem and
//!   residual checks against its HJB equation and ODEs.

pub mod bellman;
mod error;
pub mod filter;
pub mod lq;
mod model;
pub mod sim;

pub use error::{Error, Result};
pub use filter::{AngleState, BlochVector, ControlPair, DensityMatrix, ModelParams};
pub use model::{Control, ModelId, State};
pub use sim::{CostStatistics, Policy, Trajectory};
