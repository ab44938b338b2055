//! Episodic three-layer microgrid environment.
//!
//! One step: batteries move, households net their flows, the local and
//! inter-microgrid markets clear, residuals go to the grid, and every
//! household is charged at its layer's posted prices.

pub mod market;
pub mod pricing;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accounting::{
    aggregate_distributor, aggregate_microgrid, battery_step, distributor_cost, household_cost, microgrid_cost,
    BatteryState, Cost, CostMode, DistributorBalance, EnergyBalance, HouseholdConfig, MicrogridBalance, PriceSet,
};
use crate::agents::actions::ActionGrid;
use crate::datagen::{generate_episode, DatagenOptions, EpisodeData, GridSettings, HOURS_PER_DAY};
use crate::error::{GridError, Result};
use crate::rng::{household_key, substream, Domain};

pub use market::{clear_inter_microgrid_market, clear_local_market, clear_markets, MarketOutcome};
pub use pricing::{price_policy_distributor, price_policy_microgrid, price_set, PricingParams};

/// Length of every observation vector.
pub const OBS_DIM: usize = 18;

/// Floor on the peak load used to normalize rewards.
pub const REWARD_PEAK_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub microgrids: Vec<Vec<HouseholdConfig>>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub mode: CostMode,
    #[serde(default)]
    pub datagen: DatagenOptions,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub pricing: PricingParams,
    #[serde(default = "default_n_actions")]
    pub n_actions: usize,
}

fn default_horizon() -> usize {
    HOURS_PER_DAY
}

fn default_n_actions() -> usize {
    ActionGrid::DEFAULT_ACTIONS
}

impl EnvConfig {
    pub fn new(microgrids: Vec<Vec<HouseholdConfig>>) -> Self {
        EnvConfig {
            microgrids,
            horizon: HOURS_PER_DAY,
            mode: CostMode::Economic,
            datagen: DatagenOptions::default(),
            grid: GridSettings::default(),
            pricing: PricingParams::default(),
            n_actions: ActionGrid::DEFAULT_ACTIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.microgrids.is_empty() {
            return Err(GridError::Config("at least one microgrid is required".into()));
        }
        if let Some(i) = self.microgrids.iter().position(|m| m.is_empty()) {
            return Err(GridError::Config(format!("microgrid {i} has no households")));
        }
        if self.horizon == 0 {
            return Err(GridError::Config("horizon must be >= 1".into()));
        }
        if self.n_actions < 2 {
            return Err(GridError::Config("n_actions must be >= 2".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for h in self.microgrids.iter().flatten() {
            h.validate()?;
            if !ids.insert(h.id.as_str()) {
                return Err(GridError::Config(format!("duplicate household id '{}'", h.id)));
            }
        }
        self.pricing.validate()
    }

    pub fn household_count(&self) -> usize {
        self.microgrids.iter().map(Vec::len).sum()
    }

    /// `(microgrid, household)` indices of every household with a usable battery.
    pub fn actionable(&self) -> Vec<(usize, usize)> {
        self.microgrids
            .iter()
            .enumerate()
            .flat_map(|(m, hs)| {
                hs.iter()
                    .enumerate()
                    .filter(|(_, h)| h.battery.is_actionable())
                    .map(move |(h, _)| (m, h))
            })
            .collect()
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        self.microgrids
            .iter()
            .map(|hs| {
                hs.iter()
                    .enumerate()
                    .map(|(i, h)| h.position.unwrap_or(i as f64))
                    .collect()
            })
            .collect()
    }

    pub fn action_grid(&self) -> ActionGrid {
        ActionGrid::new(self.n_actions)
    }

    /// Reward scale for a household.
    pub fn reward_scale(&self, house: &HouseholdConfig) -> f64 {
        house.profile_peak_load.max(REWARD_PEAK_FLOOR) * (self.grid.gas_price + self.grid.gas_emission)
    }
}

/// Fixed-length numeric observation for one household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn observe(house: &HouseholdConfig, t: usize, load: f64, pv: f64, soc: f64, prices: &PriceSet) -> Observation {
    let angle = 2.0 * PI * (t % HOURS_PER_DAY) as f64 / HOURS_PER_DAY as f64;
    let [f, b, y] = house.profile_type.one_hot();
    let bat = &house.battery;
    Observation(vec![
        angle.sin(),
        angle.cos(),
        load,
        pv,
        soc,
        prices.r_sd,
        prices.r_bd,
        prices.c_t,
        prices.r_sh,
        prices.r_bh,
        f,
        b,
        y,
        house.profile_peak_load,
        house.pv_peak_pv_gen,
        bat.capacity,
        bat.p_charge_max,
        bat.p_discharge_max,
    ])
}

/// Everything settled for one step given each household's battery energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Settlement {
    pub balances: Vec<Vec<EnergyBalance>>,
    pub costs: Vec<Vec<Cost>>,
    pub microgrids: Vec<MicrogridBalance>,
    pub microgrid_costs: Vec<Cost>,
    pub distributor: DistributorBalance,
    pub distributor_cost: Cost,
    pub market: MarketOutcome,
}

/// Clear the markets and price every household for step `t`.
pub fn settle_step(
    data: &EpisodeData,
    positions: &[Vec<f64>],
    t: usize,
    prices: &PriceSet,
    e_batt: &[Vec<f64>],
    mode: CostMode,
) -> Settlement {
    let flows: Vec<Vec<EnergyBalance>> = data
        .households
        .iter()
        .zip(e_batt)
        .map(|(hs, eb)| {
            hs.iter()
                .zip(eb)
                .map(|(s, &e)| EnergyBalance::from_flows(s.load[t], s.pv[t], e))
                .collect()
        })
        .collect();
    let nets: Vec<Vec<f64>> = flows.iter().map(|hs| hs.iter().map(|b| b.e_net).collect()).collect();
    let market = clear_markets(&nets, positions);

    let mut balances = flows;
    for (hs, splits) in balances.iter_mut().zip(&market.splits) {
        for (b, s) in hs.iter_mut().zip(splits) {
            [b.imp1, b.imp2, b.imp3] = s.imp;
            [b.exp1, b.exp2, b.exp3] = s.exp;
        }
    }
    let costs: Vec<Vec<Cost>> = balances
        .iter()
        .map(|hs| hs.iter().map(|b| household_cost(b, prices, mode)).collect())
        .collect();
    let microgrids: Vec<MicrogridBalance> = balances.iter().map(|hs| aggregate_microgrid(hs)).collect();
    let microgrid_costs = microgrids.iter().map(|m| microgrid_cost(m, prices, mode)).collect();
    let distributor = aggregate_distributor(&microgrids);
    let distributor_cost = distributor_cost(&distributor, prices, mode);
    Settlement {
        balances,
        costs,
        microgrids,
        microgrid_costs,
        distributor,
        distributor_cost,
        market,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdStep {
    /// Observation for the next step.
    pub observation: Observation,
    pub reward: f64,
    pub balance: EnergyBalance,
    pub cost: Cost,
    /// State of charge after the step.
    pub soc: f64,
    /// Battery command after projection.
    pub command: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridStep {
    pub balance: MicrogridBalance,
    pub prices: PriceSet,
    pub cost: Cost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// The step that was simulated.
    pub t: usize,
    pub households: Vec<Vec<HouseholdStep>>,
    pub microgrids: Vec<MicrogridStep>,
    pub distributor: DistributorBalance,
    pub distributor_cost: Cost,
    pub done: bool,
}

impl StepResult {
    /// Rewards of the actionable households, in action-slot order.
    pub fn actionable_rewards(&self, slots: &[(usize, usize)]) -> Vec<f64> {
        slots.iter().map(|&(m, h)| self.households[m][h].reward).collect()
    }

    pub fn actionable_observations(&self, slots: &[(usize, usize)]) -> Vec<Observation> {
        slots
            .iter()
            .map(|&(m, h)| self.households[m][h].observation.clone())
            .collect()
    }
}

pub struct Env {
    config: EnvConfig,
    positions: Vec<Vec<f64>>,
    actionable: Vec<(usize, usize)>,
    data: EpisodeData,
    prices: Vec<PriceSet>,
    socs: Vec<Vec<BatteryState>>,
    t: usize,
}

impl Env {
    /// Validate the configuration and reset to the episode for `seed`.
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let data = generate_episode(&config.microgrids, &config.grid, &config.datagen, config.horizon, seed)?;
        Self::with_data(config, data)
    }

    /// Build an environment over already generated episode data.
    pub fn with_data(config: EnvConfig, data: EpisodeData) -> Result<Self> {
        config.validate()?;
        if data.horizon != config.horizon
            || data.households.len() != config.microgrids.len()
            || data
                .households
                .iter()
                .zip(&config.microgrids)
                .any(|(d, c)| d.len() != c.len())
        {
            return Err(GridError::Config("episode data does not match the configuration".into()));
        }
        let mut env = Env {
            positions: config.positions(),
            actionable: config.actionable(),
            prices: Vec::new(),
            socs: Vec::new(),
            t: 0,
            config,
            data,
        };
        env.prices = episode_prices(&env.data, &env.config.pricing)?;
        env.socs = initial_socs(&env.config, env.data.seed);
        Ok(env)
    }

    /// Start a fresh episode from `seed`; returns the actionable observations.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<Observation>> {
        let c = &self.config;
        self.data = generate_episode(&c.microgrids, &c.grid, &c.datagen, c.horizon, seed)?;
        self.restart()
    }

    /// Replay the current episode data from t = 0.
    pub fn restart(&mut self) -> Result<Vec<Observation>> {
        self.prices = episode_prices(&self.data, &self.config.pricing)?;
        self.socs = initial_socs(&self.config, self.data.seed);
        self.t = 0;
        Ok(self.observations())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn data(&self) -> &EpisodeData {
        &self.data
    }

    pub fn prices(&self) -> &[PriceSet] {
        &self.prices
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn actionable(&self) -> &[(usize, usize)] {
        &self.actionable
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.horizon
    }

    pub fn socs(&self) -> &[Vec<BatteryState>] {
        &self.socs
    }

    fn observation_for(&self, m: usize, h: usize) -> Observation {
        let house = &self.config.microgrids[m][h];
        let (load, pv, prices) = if self.t < self.config.horizon {
            let s = &self.data.households[m][h];
            (s.load[self.t], s.pv[self.t], self.prices[self.t])
        } else {
            (0.0, 0.0, *self.prices.last().expect("horizon >= 1"))
        };
        observe(house, self.t, load, pv, self.socs[m][h].soc, &prices)
    }

    /// Current observations of the actionable households.
    pub fn observations(&self) -> Vec<Observation> {
        self.actionable.iter().map(|&(m, h)| self.observation_for(m, h)).collect()
    }

    /// Step with one action index per actionable household.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if actions.len() != self.actionable.len() {
            return Err(GridError::ActionCount {
                expected: self.actionable.len(),
                got: actions.len(),
            });
        }
        let grid = self.config.action_grid();
        let mut commands = Vec::with_capacity(actions.len());
        for (&a, &(m, h)) in actions.iter().zip(&self.actionable) {
            commands.push(grid.power(a, &self.config.microgrids[m][h].battery)?);
        }
        self.step_commands(&commands)
    }

    /// Step with one signed power command per actionable household.
    pub fn step_commands(&mut self, commands: &[f64]) -> Result<StepResult> {
        if commands.len() != self.actionable.len() {
            return Err(GridError::ActionCount {
                expected: self.actionable.len(),
                got: commands.len(),
            });
        }
        let mut all: Vec<Vec<f64>> = self.config.microgrids.iter().map(|hs| vec![0.0; hs.len()]).collect();
        for (&c, &(m, h)) in commands.iter().zip(&self.actionable) {
            all[m][h] = c;
        }
        self.step_all(&all)
    }

    /// Step with a command for every household, indexed `[microgrid][household]`.
    /// Passive households ignore theirs.
    pub fn step_all(&mut self, commands: &[Vec<f64>]) -> Result<StepResult> {
        if self.is_done() {
            return Err(GridError::EpisodeFinished(self.t));
        }
        let t = self.t;
        let prices = self.prices[t];

        let mut applied = Vec::with_capacity(commands.len());
        let mut e_batt = Vec::with_capacity(commands.len());
        for (m, hs) in self.config.microgrids.iter().enumerate() {
            let mut a_row = Vec::with_capacity(hs.len());
            let mut e_row = Vec::with_capacity(hs.len());
            for (h, house) in hs.iter().enumerate() {
                let cmd = commands[m][h];
                if !cmd.is_finite() {
                    return Err(GridError::NonFinite(format!("battery command of household {}", house.id)));
                }
                let out = battery_step(self.socs[m][h], &house.battery, cmd);
                self.socs[m][h] = out.state;
                a_row.push(out.applied_command);
                e_row.push(out.e_batt);
            }
            applied.push(a_row);
            e_batt.push(e_row);
        }

        let settled = settle_step(&self.data, &self.positions, t, &prices, &e_batt, self.config.mode);
        self.t += 1;
        let done = self.is_done();

        let households = self
            .config
            .microgrids
            .iter()
            .enumerate()
            .map(|(m, hs)| {
                hs.iter()
                    .enumerate()
                    .map(|(h, house)| {
                        let cost = settled.costs[m][h];
                        HouseholdStep {
                            observation: self.observation_for(m, h),
                            reward: -cost.scalar() / self.config.reward_scale(house),
                            balance: settled.balances[m][h],
                            cost,
                            soc: self.socs[m][h].soc,
                            command: applied[m][h],
                        }
                    })
                    .collect()
            })
            .collect();
        let microgrids = settled
            .microgrids
            .iter()
            .zip(&settled.microgrid_costs)
            .map(|(b, c)| MicrogridStep {
                balance: *b,
                prices,
                cost: *c,
            })
            .collect();

        Ok(StepResult {
            t,
            households,
            microgrids,
            distributor: settled.distributor,
            distributor_cost: settled.distributor_cost,
            done,
        })
    }
}

/// Price sets for every step of an episode. Prices depend only on the
/// exogenous grid signals, so they are fixed for the whole episode.
pub fn episode_prices(data: &EpisodeData, params: &PricingParams) -> Result<Vec<PriceSet>> {
    (0..data.horizon)
        .map(|t| price_set(data.grid.r_sd[t], data.grid.r_bd[t], data.grid.c[t], params))
        .collect()
}

/// Midpoint of the SoC range, or a seeded uniform draw when requested.
pub fn initial_socs(config: &EnvConfig, seed: u64) -> Vec<Vec<BatteryState>> {
    config
        .microgrids
        .iter()
        .enumerate()
        .map(|(m, hs)| {
            hs.iter()
                .enumerate()
                .map(|(h, house)| {
                    let b = &house.battery;
                    let soc = if house.battery_random_soc_0 {
                        substream(seed, Domain::InitialSoc, household_key(m, h)).random_range(b.soc_min..=b.soc_max)
                    } else {
                        b.soc_midpoint()
                    };
                    BatteryState { soc }
                })
                .collect()
        })
        .collect()
}

pub const TRACE_HEADER: &str =
    "t,microgrid_id,household_id,load,pv,batt_power,soc,net,imp1,imp2,imp3,exp1,exp2,exp3,reward,cost_price,cost_emission";

/// Write an episode trace, one row per household per step.
pub fn write_trace_csv(path: &Path, config: &EnvConfig, steps: &[StepResult]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{TRACE_HEADER}")?;
    for step in steps {
        for (m, hs) in step.households.iter().enumerate() {
            for (h, s) in hs.iter().enumerate() {
                let b = &s.balance;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    step.t,
                    m,
                    config.microgrids[m][h].id,
                    b.e_load,
                    b.e_pv,
                    b.e_batt,
                    s.soc,
                    b.e_net,
                    b.imp1,
                    b.imp2,
                    b.imp3,
                    b.exp1,
                    b.exp2,
                    b.exp3,
                    s.reward,
                    s.cost.price,
                    s.cost.emission
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
