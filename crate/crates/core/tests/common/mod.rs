#![allow(dead_code)]

use gridweave::accounting::{BatteryParams, CostMode, HouseholdConfig, ProfileType};
use gridweave::env::EnvConfig;
use rand::Rng;

pub fn battery(capacity: f64) -> BatteryParams {
    BatteryParams {
        capacity,
        efficiency: 1.0,
        soc_min: 0.1,
        soc_max: 0.9,
        p_charge_max: 0.8,
        p_discharge_max: 0.8,
        sell_price: 0.0,
        buy_price: 0.0,
    }
}

pub fn house(id: &str, profile_type: ProfileType, peak: f64, pv: f64, capacity: f64) -> HouseholdConfig {
    HouseholdConfig {
        id: id.to_string(),
        profile_type,
        profile_peak_load: peak,
        pv_peak_pv_gen: pv,
        battery: battery(capacity),
        battery_random_soc_0: false,
        position: None,
    }
}

/// The six-house training fleet.
pub fn train_fleet() -> EnvConfig {
    let peaks = [1.0, 1.0, 1.0, 0.5, 0.3, 0.2];
    let pvs = [1.0, 1.0, 1.0, 0.0, 1.0, 0.6];
    let houses = (0..6)
        .map(|i| house(&format!("house_{}", i + 1), ProfileType::ALL[i % 3], peaks[i], pvs[i], 1.0))
        .collect();
    EnvConfig::new(vec![houses])
}

pub fn random_battery<R: Rng>(rng: &mut R) -> BatteryParams {
    if rng.random_bool(0.15) {
        return BatteryParams::none();
    }
    let soc_min = rng.random_range(0.0..0.3);
    BatteryParams {
        capacity: rng.random_range(0.1..2.0),
        efficiency: rng.random_range(0.7..=1.0),
        soc_min,
        soc_max: rng.random_range(soc_min + 0.2..=1.0),
        p_charge_max: rng.random_range(0.05..1.0),
        p_discharge_max: rng.random_range(0.05..1.0),
        sell_price: 0.0,
        buy_price: 0.0,
    }
}

/// A random multi-microgrid configuration with every feature toggled at random.
pub fn random_config<R: Rng>(rng: &mut R) -> EnvConfig {
    let n_mg = rng.random_range(1..=3);
    let mut id = 0;
    let microgrids = (0..n_mg)
        .map(|_| {
            (0..rng.random_range(1..=4))
                .map(|_| {
                    id += 1;
                    HouseholdConfig {
                        id: format!("h{id}"),
                        profile_type: ProfileType::ALL[rng.random_range(0..3)],
                        profile_peak_load: rng.random_range(0.0..1.5),
                        pv_peak_pv_gen: if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.5) },
                        battery: random_battery(rng),
                        battery_random_soc_0: rng.random_bool(0.5),
                        position: rng.random_bool(0.3).then(|| rng.random_range(-5.0..5.0)),
                    }
                })
                .collect()
        })
        .collect();
    let mut cfg = EnvConfig::new(microgrids);
    cfg.mode = if rng.random_bool(0.5) { CostMode::Economic } else { CostMode::Literal };
    cfg.datagen.noise_enabled = rng.random_bool(0.7);
    cfg.datagen.temperature_enabled = rng.random_bool(0.3);
    cfg.pricing.spread_m = rng.random_range(0.0..=1.0);
    cfg.pricing.spread_h = rng.random_range(0.0..=1.0);
    cfg
}
