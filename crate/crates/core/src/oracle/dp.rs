//! Discretized single-household dispatch problem and its exact solution by
//! backward dynamic programming.
//!
//! State of charge lives on an evenly spaced lattice over [soc_min, soc_max].
//! From a lattice level the battery may move to any level it can reach in
//! one step: the reach in each direction is what `battery_step` achieves
//! under the extreme commands of the action grid, truncated toward the
//! starting level so that every move stays within the power limits.
//! Intermediate levels correspond to partial commands. Refining the lattice
//! by subdivision therefore never removes a path, so the optimum can only
//! improve.

use serde::{Deserialize, Serialize};

use crate::accounting::{battery_step, BatteryParams, BatteryState, Cost};
use crate::agents::ActionGrid;
use crate::error::{GridError, Result};

pub const DEFAULT_SOC_LEVELS: usize = 201;

/// Slack, in lattice steps, when truncating a reached state of charge.
const SNAP_SLACK: f64 = 1e-9;

/// Per-step cost of a household as a function of its battery energy at the meter.
pub trait StageCost {
    fn horizon(&self) -> usize;
    fn stage_cost(&self, t: usize, e_batt: f64) -> Cost;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocLattice {
    pub soc_min: f64,
    pub soc_max: f64,
    pub levels: usize,
}

impl SocLattice {
    pub fn new(soc_min: f64, soc_max: f64, levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(GridError::Config(format!("soc_levels must be >= 2, got {levels}")));
        }
        Ok(SocLattice {
            soc_min,
            soc_max,
            levels,
        })
    }

    pub fn step(&self) -> f64 {
        (self.soc_max - self.soc_min) / (self.levels - 1) as f64
    }

    pub fn soc(&self, i: usize) -> f64 {
        if i + 1 == self.levels {
            self.soc_max
        } else {
            self.soc_min + self.step() * i as f64
        }
    }

    /// Nearest level and whether `soc` sits on it (to 1e-12).
    pub fn nearest(&self, soc: f64) -> (usize, bool) {
        let x = ((soc - self.soc_min) / self.step()).round();
        let i = x.clamp(0.0, (self.levels - 1) as f64) as usize;
        (i, (self.soc(i) - soc).abs() <= 1e-12)
    }

    /// Level reached from `from` when the continuous state ends at `raw`,
    /// rounded toward `from`.
    pub fn snap_toward(&self, from: usize, raw: f64) -> usize {
        let here = self.soc(from);
        let steps = ((raw - here).abs() / self.step() + SNAP_SLACK).floor() as usize;
        if raw >= here {
            (from + steps).min(self.levels - 1)
        } else {
            from.saturating_sub(steps)
        }
    }
}

/// A single-household dispatch instance on a lattice.
///
/// An initial state of charge that is not a lattice level becomes an extra
/// start node, index `levels`, whose first move lands on any level it can
/// reach exactly.
pub struct DispatchModel<'a, S: StageCost + ?Sized> {
    pub battery: BatteryParams,
    pub lattice: SocLattice,
    pub start: usize,
    pub start_soc: f64,
    /// The initial state of charge had to be moved onto the lattice because
    /// no level is reachable from it.
    pub start_snapped: bool,
    /// Inclusive `(lowest, highest)` reachable level from each level, plus
    /// the off-lattice start node when present.
    pub reach: Vec<(usize, usize)>,
    stage: &'a S,
    /// `costs[t][k + levels - 1]` for a move of `k` levels.
    costs: Vec<Vec<Cost>>,
    /// First-step costs from an off-lattice start, by target level minus the lowest.
    start_costs: Vec<Cost>,
}

impl<'a, S: StageCost + ?Sized> DispatchModel<'a, S> {
    pub fn new(battery: BatteryParams, soc0: f64, levels: usize, grid: &ActionGrid, stage: &'a S) -> Result<Self> {
        battery.validate()?;
        let lattice = SocLattice::new(battery.soc_min, battery.soc_max, levels)?;
        let commands = grid.powers(&battery);
        let mut reach: Vec<(usize, usize)> = (0..levels)
            .map(|i| {
                let here = BatteryState { soc: lattice.soc(i) };
                commands.iter().fold((i, i), |(lo, hi), &u| {
                    let j = lattice.snap_toward(i, battery_step(here, &battery, u).state.soc);
                    (lo.min(j), hi.max(j))
                })
            })
            .collect();

        let (mut start, exact) = lattice.nearest(soc0);
        let mut start_soc = lattice.soc(start);
        let mut start_snapped = false;
        let mut start_range = None;
        if !exact {
            let here = BatteryState { soc: soc0 };
            let (raw_lo, raw_hi) = commands.iter().fold((soc0, soc0), |(lo, hi), &u| {
                let s = battery_step(here, &battery, u).state.soc;
                (lo.min(s), hi.max(s))
            });
            let step = lattice.step();
            let lo = ((raw_lo - lattice.soc_min) / step - SNAP_SLACK).ceil().max(0.0) as usize;
            let hi = (((raw_hi - lattice.soc_min) / step + SNAP_SLACK).floor() as usize).min(levels - 1);
            if lo <= hi {
                start = levels;
                start_soc = soc0;
                start_range = Some((lo, hi));
                reach.push((lo, hi));
            } else {
                start_snapped = true;
                log::warn!(
                    "initial soc {soc0} reaches no level of the {levels}-level lattice; snapped to {start_soc}"
                );
            }
        }

        let mut model = DispatchModel {
            battery,
            lattice,
            start,
            start_soc,
            start_snapped,
            reach,
            stage,
            costs: Vec::new(),
            start_costs: Vec::new(),
        };
        if let (Some((lo, hi)), true) = (start_range, stage.horizon() > 0) {
            model.start_costs = (lo..=hi)
                .map(|j| stage.stage_cost(0, model.delta_e_batt(model.lattice.soc(j) - soc0)))
                .collect();
        }
        let span = 2 * levels - 1;
        model.costs = (0..stage.horizon())
            .map(|t| {
                (0..span)
                    .map(|idx| {
                        let k = idx as isize - (levels as isize - 1);
                        stage.stage_cost(t, model.e_batt(k))
                    })
                    .collect()
            })
            .collect();
        Ok(model)
    }

    pub fn horizon(&self) -> usize {
        self.stage.horizon()
    }

    /// Meter energy for a move of `k` lattice levels.
    pub fn e_batt(&self, k: isize) -> f64 {
        self.delta_e_batt(k as f64 * self.lattice.step())
    }

    /// Meter energy for a change of `delta` in state of charge.
    pub fn delta_e_batt(&self, delta: f64) -> f64 {
        let stored = delta * self.battery.capacity;
        if delta > 0.0 {
            stored / self.battery.efficiency
        } else {
            stored * self.battery.efficiency
        }
    }

    /// State of charge at a node; `levels` is the off-lattice start.
    pub fn soc_at(&self, i: usize) -> f64 {
        if i == self.lattice.levels {
            self.start_soc
        } else {
            self.lattice.soc(i)
        }
    }

    /// Battery command that realizes the move `from -> to`.
    pub fn command(&self, from: usize, to: usize) -> f64 {
        let delta = self.soc_at(to) - self.soc_at(from);
        if delta > 0.0 {
            delta / self.battery.efficiency
        } else {
            delta
        }
    }

    pub fn cost(&self, t: usize, from: usize, to: usize) -> Cost {
        if from == self.lattice.levels {
            debug_assert_eq!(t, 0);
            return self.start_costs[to - self.reach[from].0];
        }
        self.costs[t][to + self.lattice.levels - 1 - from]
    }

    pub fn successors(&self, from: usize) -> std::ops::RangeInclusive<usize> {
        let (lo, hi) = self.reach[from];
        lo..=hi
    }

    /// Assemble a plan from a level path of length `horizon + 1`.
    pub fn plan_from_path(&self, path: &[usize], objective: f64) -> DispatchPlan {
        let horizon = self.horizon();
        debug_assert_eq!(path.len(), horizon + 1);
        let mut commands = Vec::with_capacity(horizon);
        let mut stage_costs = Vec::with_capacity(horizon);
        let mut total = Cost::default();
        for t in 0..horizon {
            commands.push(self.command(path[t], path[t + 1]));
            let c = self.cost(t, path[t], path[t + 1]);
            stage_costs.push(c);
            total += c;
        }
        DispatchPlan {
            commands,
            soc_path: path.iter().map(|&i| self.soc_at(i)).collect(),
            stage_costs,
            total_cost_price: total.price,
            total_cost_emission: total.emission,
            objective,
            start_snapped: self.start_snapped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchPlan {
    /// Power fraction per step.
    pub commands: Vec<f64>,
    /// State of charge before each step and after the last.
    pub soc_path: Vec<f64>,
    pub stage_costs: Vec<Cost>,
    pub total_cost_price: f64,
    pub total_cost_emission: f64,
    /// Minimized scalar objective.
    pub objective: f64,
    pub start_snapped: bool,
}

impl DispatchPlan {
    pub fn total(&self) -> Cost {
        Cost {
            price: self.total_cost_price,
            emission: self.total_cost_emission,
        }
    }

    /// Idle plan for a household that cannot act.
    pub fn idle<S: StageCost + ?Sized>(stage: &S, soc0: f64) -> Self {
        let horizon = stage.horizon();
        let stage_costs: Vec<Cost> = (0..horizon).map(|t| stage.stage_cost(t, 0.0)).collect();
        let total = stage_costs.iter().fold(Cost::default(), |a, c| a + *c);
        let objective = stage_costs.iter().rev().fold(0.0, |acc, c| c.scalar() + acc);
        DispatchPlan {
            commands: vec![0.0; horizon],
            soc_path: vec![soc0; horizon + 1],
            stage_costs,
            total_cost_price: total.price,
            total_cost_emission: total.emission,
            objective,
            start_snapped: false,
        }
    }
}

/// Exact optimum over the lattice by backward induction.
pub fn optimal_dispatch_dp<S: StageCost + ?Sized>(model: &DispatchModel<'_, S>) -> DispatchPlan {
    let horizon = model.horizon();
    let levels = model.lattice.levels;
    // one extra node for an off-lattice start, live only at t = 0
    let nodes = model.reach.len();
    let mut value = vec![0.0f64; nodes];
    let mut choice = vec![vec![0usize; nodes]; horizon];

    for t in (0..horizon).rev() {
        let mut next = vec![f64::INFINITY; nodes];
        let active = if t == 0 { nodes } else { levels };
        for i in 0..active {
            for j in model.successors(i) {
                let v = model.cost(t, i, j).scalar() + value[j];
                if v < next[i] {
                    next[i] = v;
                    choice[t][i] = j;
                }
            }
        }
        value = next;
    }

    let mut path = Vec::with_capacity(horizon + 1);
    path.push(model.start);
    for row in &choice {
        let here = *path.last().expect("non-empty");
        path.push(row[here]);
    }
    model.plan_from_path(&path, value[model.start])
}
