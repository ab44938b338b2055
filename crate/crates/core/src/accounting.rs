//! Household, microgrid, and distributor energy accounting.
//!
//! Every quantity here is an energy per one-hour step in normalized units.
//! The functions are pure; the market and the environment build on them.

use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};

/// Tolerance used when checking the balance identities.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileType {
    Family,
    Business,
    Teenagers,
}

impl ProfileType {
    pub const ALL: [ProfileType; 3] = [ProfileType::Family, ProfileType::Business, ProfileType::Teenagers];

    pub fn one_hot(self) -> [f64; 3] {
        match self {
            ProfileType::Family => [1.0, 0.0, 0.0],
            ProfileType::Business => [0.0, 1.0, 0.0],
            ProfileType::Teenagers => [0.0, 0.0, 1.0],
        }
    }
}

/// How the surplus branch of a cost function is signed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// Export proceeds are booked as a positive quantity to be minimized.
    Literal,
    /// Export proceeds are revenue and reduce cost.
    #[default]
    Economic,
}

impl std::str::FromStr for CostMode {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(CostMode::Literal),
            "economic" => Ok(CostMode::Economic),
            other => Err(GridError::Config(format!("unknown cost mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryParams {
    pub capacity: f64,
    pub efficiency: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Max charge per step as a fraction of capacity.
    pub p_charge_max: f64,
    /// Max discharge per step as a fraction of capacity.
    pub p_discharge_max: f64,
    /// Carried for completeness; no objective prices battery use.
    #[serde(default)]
    pub sell_price: f64,
    #[serde(default)]
    pub buy_price: f64,
}

impl BatteryParams {
    /// A household without storage.
    pub fn none() -> Self {
        BatteryParams {
            capacity: 0.0,
            efficiency: 1.0,
            soc_min: 0.0,
            soc_max: 1.0,
            p_charge_max: 0.0,
            p_discharge_max: 0.0,
            sell_price: 0.0,
            buy_price: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.capacity,
            self.efficiency,
            self.soc_min,
            self.soc_max,
            self.p_charge_max,
            self.p_discharge_max,
            self.sell_price,
            self.buy_price,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(GridError::Config("battery parameters must be finite".into()));
        }
        if self.capacity < 0.0 {
            return Err(GridError::Config(format!("battery capacity {} < 0", self.capacity)));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(GridError::Config(format!(
                "battery efficiency {} outside (0, 1]",
                self.efficiency
            )));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(GridError::Config(format!(
                "battery soc bounds [{}, {}] must satisfy 0 <= min < max <= 1",
                self.soc_min, self.soc_max
            )));
        }
        if self.p_charge_max < 0.0 || self.p_discharge_max < 0.0 {
            return Err(GridError::Config("battery power limits must be >= 0".into()));
        }
        Ok(())
    }

    /// True when the battery can actually move energy.
    pub fn is_actionable(&self) -> bool {
        self.capacity > 0.0 && (self.p_charge_max > 0.0 || self.p_discharge_max > 0.0)
    }

    pub fn soc_midpoint(&self) -> f64 {
        0.5 * (self.soc_min + self.soc_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
}

/// Result of applying one command to a battery for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryStep {
    pub state: BatteryState,
    /// Signed energy at the meter: positive draws from the household bus.
    pub e_batt: f64,
    /// Command actually realized after projection onto the feasible set.
    pub applied_command: f64,
    /// |requested - applied|, reported for diagnostics.
    pub projection: f64,
}

/// Advance a battery by one hour under a signed power command.
///
/// The command is a fraction of capacity per step. Efficiency applies once
/// on the way in and once on the way out. Infeasible commands are projected
/// onto the power and state-of-charge limits.
pub fn battery_step(state: BatteryState, params: &BatteryParams, command: f64) -> BatteryStep {
    let requested = if command.is_finite() { command } else { 0.0 };
    if params.capacity <= 0.0 {
        return BatteryStep {
            state,
            e_batt: 0.0,
            applied_command: 0.0,
            projection: requested.abs(),
        };
    }
    let cap = params.capacity;
    let eff = params.efficiency;
    let cmd = requested.clamp(-params.p_discharge_max, params.p_charge_max);

    if cmd > 0.0 {
        let headroom = ((params.soc_max - state.soc) * cap).max(0.0);
        let wanted = cmd * cap * eff;
        let (stored, soc) = if wanted >= headroom {
            (headroom, params.soc_max)
        } else {
            (wanted, state.soc + wanted / cap)
        };
        let applied = stored / (cap * eff);
        BatteryStep {
            state: BatteryState { soc },
            e_batt: stored / eff,
            applied_command: applied,
            projection: (requested - applied).abs(),
        }
    } else if cmd < 0.0 {
        let available = ((state.soc - params.soc_min) * cap).max(0.0);
        let wanted = -cmd * cap;
        let (withdrawn, soc) = if wanted >= available {
            (available, params.soc_min)
        } else {
            (wanted, state.soc - wanted / cap)
        };
        let applied = -withdrawn / cap;
        BatteryStep {
            state: BatteryState { soc },
            e_batt: -withdrawn * eff,
            applied_command: applied,
            projection: (requested - applied).abs(),
        }
    } else {
        BatteryStep {
            state,
            e_batt: 0.0,
            applied_command: 0.0,
            projection: requested.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdConfig {
    pub id: String,
    pub profile_type: ProfileType,
    pub profile_peak_load: f64,
    pub pv_peak_pv_gen: f64,
    pub battery: BatteryParams,
    #[serde(default)]
    pub battery_random_soc_0: bool,
    /// Coordinate used for local-market distances; defaults to the index
    /// within the microgrid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<f64>,
}

impl HouseholdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.profile_peak_load.is_finite() && self.profile_peak_load >= 0.0) {
            return Err(GridError::Config(format!(
                "household {}: profile_peak_load must be >= 0",
                self.id
            )));
        }
        if !(self.pv_peak_pv_gen.is_finite() && self.pv_peak_pv_gen >= 0.0) {
            return Err(GridError::Config(format!(
                "household {}: pv_peak_pv_gen must be >= 0",
                self.id
            )));
        }
        if let Some(p) = self.position {
            if !p.is_finite() {
                return Err(GridError::Config(format!("household {}: non-finite position", self.id)));
            }
        }
        self.battery
            .validate()
            .map_err(|e| GridError::Config(format!("household {}: {e}", self.id)))
    }
}

/// One household's flows for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub e_load: f64,
    pub e_pv: f64,
    pub e_batt: f64,
    pub e_shortage: f64,
    pub e_surplus: f64,
    pub e_net: f64,
    pub imp1: f64,
    pub imp2: f64,
    pub imp3: f64,
    pub exp1: f64,
    pub exp2: f64,
    pub exp3: f64,
}

/// Net household demand: positive is a shortage, negative a surplus.
pub fn household_net(e_load: f64, e_pv: f64, e_batt: f64) -> f64 {
    e_load - e_pv + e_batt
}

impl EnergyBalance {
    /// Flows with shortage/surplus classified but no channel assigned yet.
    pub fn from_flows(e_load: f64, e_pv: f64, e_batt: f64) -> Self {
        let e_net = household_net(e_load, e_pv, e_batt);
        EnergyBalance {
            e_load,
            e_pv,
            e_batt,
            e_shortage: e_net.max(0.0),
            e_surplus: (-e_net).max(0.0),
            e_net,
            ..Default::default()
        }
    }

    /// Largest violation of the channel and net identities.
    pub fn identity_residual(&self) -> f64 {
        let r1 = (self.e_shortage - (self.imp1 + self.imp2 + self.imp3)).abs();
        let r2 = (self.e_surplus - (self.exp1 + self.exp2 + self.exp3)).abs();
        let r3 = (self.e_net - (self.e_shortage - self.e_surplus)).abs();
        let r4 = (self.e_net - household_net(self.e_load, self.e_pv, self.e_batt)).abs();
        r1.max(r2).max(r3).max(r4)
    }
}

/// Prices and the emission rate in force for one microgrid at one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PriceSet {
    pub r_sh: f64,
    pub r_bh: f64,
    pub r_sm: f64,
    pub r_bm: f64,
    pub r_sd: f64,
    pub r_bd: f64,
    pub c_t: f64,
}

impl PriceSet {
    pub fn is_non_negative(&self) -> bool {
        [self.r_sh, self.r_bh, self.r_sm, self.r_bm, self.r_sd, self.r_bd, self.c_t]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }

    /// r_bd <= r_bm <= r_bh <= r_sh <= r_sm <= r_sd + c_t.
    pub fn is_ordered(&self) -> bool {
        self.r_bd <= self.r_bm
            && self.r_bm <= self.r_bh
            && self.r_bh <= self.r_sh
            && self.r_sh <= self.r_sm
            && self.r_sm <= self.r_sd + self.c_t
    }
}

/// A cost split into its monetary and emission components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cost {
    pub price: f64,
    pub emission: f64,
}

impl Cost {
    pub fn scalar(&self) -> f64 {
        self.price + self.emission
    }
}

impl std::ops::Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        Cost {
            price: self.price + rhs.price,
            emission: self.emission + rhs.emission,
        }
    }
}

impl std::ops::AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        self.price += rhs.price;
        self.emission += rhs.emission;
    }
}

fn surplus_sign(mode: CostMode) -> f64 {
    match mode {
        CostMode::Literal => 1.0,
        CostMode::Economic => -1.0,
    }
}

pub fn household_cost(balance: &EnergyBalance, prices: &PriceSet, mode: CostMode) -> Cost {
    if balance.e_net >= 0.0 {
        Cost {
            price: balance.imp3 * prices.r_sd + balance.imp2 * prices.r_sm + balance.imp1 * prices.r_sh,
            emission: balance.imp3 * prices.c_t,
        }
    } else {
        let proceeds = balance.exp3 * prices.r_bd + balance.exp2 * prices.r_bm + balance.exp1 * prices.r_bh;
        Cost {
            price: surplus_sign(mode) * proceeds,
            emission: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MicrogridBalance {
    pub e_shortage: f64,
    pub e_surplus: f64,
    pub e_net: f64,
    pub imp2: f64,
    pub imp3: f64,
    pub exp2: f64,
    pub exp3: f64,
}

pub fn aggregate_microgrid(balances: &[EnergyBalance]) -> MicrogridBalance {
    let mut mg = MicrogridBalance::default();
    for b in balances {
        mg.imp2 += b.imp2;
        mg.imp3 += b.imp3;
        mg.exp2 += b.exp2;
        mg.exp3 += b.exp3;
    }
    mg.e_shortage = mg.imp2 + mg.imp3;
    mg.e_surplus = mg.exp2 + mg.exp3;
    mg.e_net = mg.e_shortage - mg.e_surplus;
    mg
}

pub fn microgrid_cost(balance: &MicrogridBalance, prices: &PriceSet, mode: CostMode) -> Cost {
    if balance.e_net >= 0.0 {
        Cost {
            price: balance.imp3 * prices.r_sd + balance.imp2 * prices.r_sm,
            emission: balance.imp3 * prices.c_t,
        }
    } else {
        Cost {
            price: surplus_sign(mode) * (balance.exp3 * prices.r_bd + balance.exp2 * prices.r_bm),
            emission: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistributorBalance {
    pub e_shortage: f64,
    pub e_surplus: f64,
    pub e_net: f64,
    pub imp3: f64,
    pub exp3: f64,
}

pub fn aggregate_distributor(balances: &[MicrogridBalance]) -> DistributorBalance {
    let imp3: f64 = balances.iter().map(|b| b.imp3).sum();
    let exp3: f64 = balances.iter().map(|b| b.exp3).sum();
    DistributorBalance {
        e_shortage: imp3,
        e_surplus: exp3,
        e_net: imp3 - exp3,
        imp3,
        exp3,
    }
}

pub fn distributor_cost(balance: &DistributorBalance, prices: &PriceSet, mode: CostMode) -> Cost {
    if balance.e_net >= 0.0 {
        Cost {
            price: balance.imp3 * prices.r_sd,
            emission: balance.imp3 * prices.c_t,
        }
    } else {
        Cost {
            price: surplus_sign(mode) * balance.exp3 * prices.r_bd,
            emission: 0.0,
        }
    }
}
