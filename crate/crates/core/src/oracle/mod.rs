//! Reference solutions: the no-battery baseline, the per-household optimal
//! dispatch under fixed prices, and scoring against the baseline.
//!
//! Each household is optimized on its own with every other household idle,
//! against the episode's exogenous price path. Its stage cost is read from
//! the full market settlement, so a plan replayed through the environment
//! under the same conditions reproduces the planned cost.

pub mod brute;
pub mod dp;
pub mod score;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::accounting::{Cost, CostMode, PriceSet};
use crate::agents::ActionGrid;
use crate::datagen::EpisodeData;
use crate::env::{episode_prices, initial_socs, settle_step, Env, EnvConfig, StepResult};
use crate::error::Result;

pub use brute::brute_force_dispatch;
pub use dp::{optimal_dispatch_dp, DispatchModel, DispatchPlan, SocLattice, StageCost, DEFAULT_SOC_LEVELS};
pub use score::{relative_change, score, AggregateScore, HouseholdScore, ScoreReport};

/// One household's cost as a function of its own battery energy, everyone
/// else idle.
pub struct HouseholdProblem<'a> {
    data: &'a EpisodeData,
    positions: Vec<Vec<f64>>,
    prices: Vec<PriceSet>,
    mode: CostMode,
    microgrid: usize,
    household: usize,
}

impl<'a> HouseholdProblem<'a> {
    pub fn new(config: &EnvConfig, data: &'a EpisodeData, microgrid: usize, household: usize) -> Result<Self> {
        Ok(HouseholdProblem {
            data,
            positions: config.positions(),
            prices: episode_prices(data, &config.pricing)?,
            mode: config.mode,
            microgrid,
            household,
        })
    }
}

impl StageCost for HouseholdProblem<'_> {
    fn horizon(&self) -> usize {
        self.data.horizon
    }

    fn stage_cost(&self, t: usize, e_batt: f64) -> Cost {
        let mut batt: Vec<Vec<f64>> = self.data.households.iter().map(|hs| vec![0.0; hs.len()]).collect();
        batt[self.microgrid][self.household] = e_batt;
        let settled = settle_step(self.data, &self.positions, t, &self.prices[t], &batt, self.mode);
        settled.costs[self.microgrid][self.household]
    }
}

/// Play an episode where every household's command comes from `commands[t][m][h]`.
pub fn run_commands(config: &EnvConfig, data: &EpisodeData, commands: impl Fn(usize, usize, usize) -> f64) -> Result<Vec<StepResult>> {
    let mut env = Env::with_data(config.clone(), data.clone())?;
    let mut steps = Vec::with_capacity(config.horizon);
    while !env.is_done() {
        let t = env.t();
        let cmd: Vec<Vec<f64>> = config
            .microgrids
            .iter()
            .enumerate()
            .map(|(m, hs)| (0..hs.len()).map(|h| commands(t, m, h)).collect())
            .collect();
        steps.push(env.step_all(&cmd)?);
    }
    Ok(steps)
}

/// The episode with every battery idle.
pub fn no_battery_steps(config: &EnvConfig, data: &EpisodeData) -> Result<Vec<StepResult>> {
    run_commands(config, data, |_, _, _| 0.0)
}

/// Per-household cost totals over an episode, indexed `[microgrid][household]`.
pub fn episode_costs(steps: &[StepResult]) -> Vec<Vec<Cost>> {
    let Some(first) = steps.first() else {
        return Vec::new();
    };
    let mut totals: Vec<Vec<Cost>> = first.households.iter().map(|hs| vec![Cost::default(); hs.len()]).collect();
    for s in steps {
        for (row, hs) in totals.iter_mut().zip(&s.households) {
            for (c, h) in row.iter_mut().zip(hs) {
                *c += h.cost;
            }
        }
    }
    totals
}

pub fn episode_rewards(steps: &[StepResult]) -> Vec<Vec<f64>> {
    let Some(first) = steps.first() else {
        return Vec::new();
    };
    let mut totals: Vec<Vec<f64>> = first.households.iter().map(|hs| vec![0.0; hs.len()]).collect();
    for s in steps {
        for (row, hs) in totals.iter_mut().zip(&s.households) {
            for (r, h) in row.iter_mut().zip(hs) {
                *r += h.reward;
            }
        }
    }
    totals
}

pub fn no_battery_costs(config: &EnvConfig, data: &EpisodeData) -> Result<Vec<Vec<Cost>>> {
    Ok(episode_costs(&no_battery_steps(config, data)?))
}

/// Optimal lattice dispatch for one household.
pub fn solve_household(
    config: &EnvConfig,
    data: &EpisodeData,
    microgrid: usize,
    household: usize,
    soc_levels: usize,
) -> Result<DispatchPlan> {
    let problem = HouseholdProblem::new(config, data, microgrid, household)?;
    let house = &config.microgrids[microgrid][household];
    let soc0 = initial_socs(config, data.seed)[microgrid][household].soc;
    if !house.battery.is_actionable() {
        return Ok(DispatchPlan::idle(&problem, soc0));
    }
    let grid = ActionGrid::new(config.n_actions);
    let model = DispatchModel::new(house.battery, soc0, soc_levels, &grid, &problem)?;
    Ok(optimal_dispatch_dp(&model))
}

/// Optimal plans for every household, solved in parallel.
pub fn solve_fleet(config: &EnvConfig, data: &EpisodeData, soc_levels: usize) -> Result<Vec<Vec<DispatchPlan>>> {
    config.validate()?;
    let slots: Vec<(usize, usize)> = config
        .microgrids
        .iter()
        .enumerate()
        .flat_map(|(m, hs)| (0..hs.len()).map(move |h| (m, h)))
        .collect();
    let plans: Vec<DispatchPlan> = slots
        .par_iter()
        .map(|&(m, h)| solve_household(config, data, m, h, soc_levels))
        .collect::<Result<_>>()?;
    let mut it = plans.into_iter();
    Ok(config
        .microgrids
        .iter()
        .map(|hs| it.by_ref().take(hs.len()).collect())
        .collect())
}

/// Replay a plan for one household with everyone else idle; returns the
/// household's realized cost.
pub fn replay_plan(config: &EnvConfig, data: &EpisodeData, microgrid: usize, household: usize, plan: &DispatchPlan) -> Result<Cost> {
    let steps = run_commands(config, data, |t, m, h| {
        if (m, h) == (microgrid, household) {
            plan.commands[t]
        } else {
            0.0
        }
    })?;
    Ok(episode_costs(&steps)[microgrid][household])
}

/// Scores of the oracle plans against the no-battery baseline.
pub fn oracle_report(config: &EnvConfig, data: &EpisodeData, plans: &[Vec<DispatchPlan>]) -> Result<ScoreReport> {
    let baseline = no_battery_costs(config, data)?;
    let mut entries = Vec::new();
    for (m, hs) in config.microgrids.iter().enumerate() {
        for (h, house) in hs.iter().enumerate() {
            let plan = &plans[m][h];
            let scale = config.reward_scale(house);
            let reward = plan.stage_costs.iter().map(|c| -c.scalar() / scale).sum();
            entries.push((m, house.id.clone(), plan.total(), baseline[m][h], reward));
        }
    }
    Ok(ScoreReport::from_households(entries))
}

/// Scores of a played episode against the no-battery baseline on the same data.
pub fn policy_report(config: &EnvConfig, data: &EpisodeData, steps: &[StepResult]) -> Result<ScoreReport> {
    let baseline = no_battery_costs(config, data)?;
    let costs = episode_costs(steps);
    let rewards = episode_rewards(steps);
    let mut entries = Vec::new();
    for (m, hs) in config.microgrids.iter().enumerate() {
        for (h, house) in hs.iter().enumerate() {
            entries.push((m, house.id.clone(), costs[m][h], baseline[m][h], rewards[m][h]));
        }
    }
    Ok(ScoreReport::from_households(entries))
}

pub const PLAN_HEADER: &str = "t,command,soc,stage_cost_price,stage_cost_emission";

pub fn write_plan_csv(path: &Path, plan: &DispatchPlan) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{PLAN_HEADER}")?;
    for (t, (cmd, c)) in plan.commands.iter().zip(&plan.stage_costs).enumerate() {
        writeln!(out, "{t},{cmd},{},{},{}", plan.soc_path[t], c.price, c.emission)?;
    }
    out.flush()?;
    Ok(())
}
