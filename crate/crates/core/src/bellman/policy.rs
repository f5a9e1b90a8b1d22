use std::sync::Arc;

use super::ValueGrid;
use crate::sim::Policy;
use crate::{Control, Result, State};

/// Feedback law read off a solved value grid.
#[derive(Debug, Clone)]
pub struct GridPolicy {
    grid: Arc<ValueGrid>,
}

impl GridPolicy {
    pub fn new(grid: Arc<ValueGrid>) -> Self {
        GridPolicy { grid }
    }

    pub fn grid(&self) -> &ValueGrid {
        &self.grid
    }

    /// Stored control of the slice covering `t`, interpolated at the state
    /// (clamped into the grid) and clamped to the control box if one is set.
    pub fn control(&self, t: f64, state: &State) -> Result<Control> {
        self.grid.check_state(state)?;
        let n = self.grid.control_slice_index(t)?;
        let u = self.grid.interpolate_control(n, &state.coords());
        Ok(match self.grid.spec().control_bound {
            Some(b) => u.clamp(b),
            None => u,
        })
    }
}

/// Wraps a solved grid as a simulation policy.
pub fn extract_policy(grid: ValueGrid) -> Policy {
    Policy::Grid(Arc::new(GridPolicy::new(Arc::new(grid))))
}
