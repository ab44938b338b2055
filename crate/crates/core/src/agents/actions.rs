use crate::accounting::BatteryParams;
use crate::error::{GridError, Result};

/// Evenly spaced battery commands from full discharge to full charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionGrid {
    n: usize,
}

impl ActionGrid {
    pub const DEFAULT_ACTIONS: usize = 40;

    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "an action grid needs at least two points");
        ActionGrid { n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed power fraction for `index`: 0 is `-p_discharge_max`, the last
    /// index is `+p_charge_max`.
    pub fn power(&self, index: usize, battery: &BatteryParams) -> Result<f64> {
        if index >= self.n {
            return Err(GridError::ActionOutOfRange {
                index,
                n_actions: self.n,
            });
        }
        let lo = -battery.p_discharge_max;
        let hi = battery.p_charge_max;
        Ok(if index == self.n - 1 {
            hi
        } else {
            lo + (hi - lo) * index as f64 / (self.n - 1) as f64
        })
    }

    pub fn powers(&self, battery: &BatteryParams) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.power(i, battery).expect("index in range"))
            .collect()
    }
}

impl Default for ActionGrid {
    fn default() -> Self {
        ActionGrid::new(Self::DEFAULT_ACTIONS)
    }
}

/// Convenience wrapper over the default 40-point grid.
pub fn action_to_power(index: usize, battery: &BatteryParams) -> Result<f64> {
    ActionGrid::default().power(index, battery)
}
