//! Seeded synthesis of household demand, PV generation, and grid signals.
//!
//! Demand follows one of three fixed daily shapes scaled by the household's
//! peak load, with optional additive Gaussian noise and an optional daily
//! temperature swing. PV is a half sine between 05:00 and 19:00. Grid
//! prices and emission rates come from a two-source merit order: nuclear
//! up to its capacity, gas for the rest.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::accounting::{HouseholdConfig, ProfileType};
use crate::error::{GridError, Result};
use crate::rng::{household_key, substream, Domain};

pub const HOURS_PER_DAY: usize = 24;

/// Variance of the additive load noise.
pub const LOAD_NOISE_VAR: f64 = 0.01;
/// Variance of the additive PV noise.
pub const PV_NOISE_VAR: f64 = 0.1;
/// Amplitude of the optional temperature scaling of demand.
pub const TEMPERATURE_SWING: f64 = 0.1;

// Base demand shapes, hour 0..23, normalized to a peak of exactly 1.
// family: morning (07-09) and early-afternoon (13-15) peaks
const FAMILY: [f64; 24] = [
    0.30, 0.25, 0.22, 0.20, 0.22, 0.30, 0.50, 0.85, 1.00, 0.90, 0.60, 0.50, //
    0.60, 0.85, 0.95, 0.80, 0.55, 0.50, 0.55, 0.60, 0.55, 0.45, 0.40, 0.35,
];
// business: plateau through the working day (10-16)
const BUSINESS: [f64; 24] = [
    0.20, 0.18, 0.17, 0.17, 0.18, 0.20, 0.25, 0.35, 0.50, 0.70, 0.90, 0.95, //
    1.00, 0.95, 0.95, 0.90, 0.85, 0.60, 0.40, 0.30, 0.25, 0.22, 0.21, 0.20,
];
// teenagers: late afternoon through early morning (17-02)
const TEENAGERS: [f64; 24] = [
    0.90, 0.80, 0.70, 0.45, 0.30, 0.25, 0.25, 0.30, 0.30, 0.25, 0.25, 0.30, //
    0.35, 0.35, 0.40, 0.45, 0.60, 0.80, 0.90, 0.95, 1.00, 1.00, 0.95, 0.95,
];

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileShape {
    pub profile_type: ProfileType,
    pub base_curve: Vec<f64>,
}

impl ProfileShape {
    /// Curve value at step `t`, wrapping around the day.
    pub fn at(&self, t: usize) -> f64 {
        self.base_curve[t % self.base_curve.len()]
    }
}

pub fn base_profile(profile_type: ProfileType) -> ProfileShape {
    let curve = match profile_type {
        ProfileType::Family => &FAMILY,
        ProfileType::Business => &BUSINESS,
        ProfileType::Teenagers => &TEENAGERS,
    };
    ProfileShape {
        profile_type,
        base_curve: curve.to_vec(),
    }
}

/// Noise-free PV shape for unit peak: sin(pi (h - 5) / 14) on 05:00-19:00.
pub fn pv_shape(t: usize) -> f64 {
    let h = (t % HOURS_PER_DAY) as f64;
    if h > 5.0 && h < 19.0 {
        (PI * (h - 5.0) / 14.0).sin()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenOptions {
    #[serde(default = "default_true")]
    pub noise_enabled: bool,
    #[serde(default)]
    pub temperature_enabled: bool,
}

fn default_true() -> bool {
    true
}

impl Default for DatagenOptions {
    fn default() -> Self {
        DatagenOptions {
            noise_enabled: true,
            temperature_enabled: false,
        }
    }
}

/// Demand series: `max(0, peak * curve[t] * scale[t] + eps)`, eps ~ N(0, 0.01).
pub fn gen_load<R: Rng + ?Sized>(
    shape: &ProfileShape,
    peak_load: f64,
    horizon: usize,
    temperature_scale: Option<&[f64]>,
    noise: Option<&mut R>,
) -> Vec<f64> {
    let mut base: Vec<f64> = (0..horizon)
        .map(|t| {
            let scale = temperature_scale.map_or(1.0, |s| s[t]);
            peak_load * shape.at(t) * scale
        })
        .collect();
    if let Some(rng) = noise {
        let dist = Normal::new(0.0, LOAD_NOISE_VAR.sqrt()).expect("valid sigma");
        for v in base.iter_mut() {
            *v += dist.sample(rng);
        }
    }
    base.iter_mut().for_each(|v| *v = v.max(0.0));
    base
}

/// PV series. Noise (variance 0.1) only perturbs daylight hours, so a
/// house without panels always produces zero.
pub fn gen_pv<R: Rng + ?Sized>(pv_peak: f64, horizon: usize, noise: Option<&mut R>) -> Vec<f64> {
    let mut pv: Vec<f64> = (0..horizon).map(|t| pv_peak * pv_shape(t)).collect();
    if let Some(rng) = noise {
        let dist = Normal::new(0.0, PV_NOISE_VAR.sqrt()).expect("valid sigma");
        for v in pv.iter_mut().filter(|v| **v > 0.0) {
            *v += dist.sample(rng);
        }
    }
    pv.iter_mut().for_each(|v| *v = v.max(0.0));
    pv
}

/// Multiplicative daily temperature effect on demand, within +-10%.
pub fn temperature_scale<R: Rng + ?Sized>(horizon: usize, rng: &mut R) -> Vec<f64> {
    let amplitude: f64 = rng.random_range(-1.0..=1.0);
    (0..horizon)
        .map(|t| {
            let h = (t % HOURS_PER_DAY) as f64;
            1.0 + TEMPERATURE_SWING * amplitude * (2.0 * PI * (h - 15.0) / 24.0).cos()
        })
        .collect()
}

/// Grid source settings as written in a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSettings {
    pub nuclear_price: f64,
    pub gas_price: f64,
    pub nuclear_emission: f64,
    pub gas_emission: f64,
    /// Absolute nuclear output per step. When absent, a fraction of the
    /// peak reference demand is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nuclear_capacity: Option<f64>,
    pub nuclear_capacity_fraction: f64,
    /// r_bd = buy_back_ratio * r_sd.
    pub buy_back_ratio: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            nuclear_price: 0.2,
            gas_price: 0.6,
            nuclear_emission: 0.05,
            gas_emission: 0.5,
            nuclear_capacity: None,
            nuclear_capacity_fraction: 0.6,
            buy_back_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSourceModel {
    pub nuclear_capacity: f64,
    pub nuclear_price: f64,
    pub gas_price: f64,
    pub nuclear_emission: f64,
    pub gas_emission: f64,
    pub buy_back_ratio: f64,
}

impl GridSourceModel {
    /// Resolve settings against a reference demand curve.
    pub fn resolve(settings: &GridSettings, reference_demand: &[f64]) -> Result<Self> {
        let capacity = match settings.nuclear_capacity {
            Some(c) => c,
            None => {
                let peak = reference_demand.iter().cloned().fold(0.0, f64::max);
                // An all-zero reference leaves nuclear covering everything.
                if peak > 0.0 {
                    settings.nuclear_capacity_fraction * peak
                } else {
                    1.0
                }
            }
        };
        let model = GridSourceModel {
            nuclear_capacity: capacity,
            nuclear_price: settings.nuclear_price,
            gas_price: settings.gas_price,
            nuclear_emission: settings.nuclear_emission,
            gas_emission: settings.gas_emission,
            buy_back_ratio: settings.buy_back_ratio,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nuclear_capacity.is_finite() && self.nuclear_capacity > 0.0) {
            return Err(GridError::Config(format!(
                "nuclear capacity must be > 0, got {}",
                self.nuclear_capacity
            )));
        }
        if !(self.nuclear_price >= 0.0 && self.nuclear_emission >= 0.0) {
            return Err(GridError::Config("nuclear price and emission must be >= 0".into()));
        }
        if !(self.gas_price > self.nuclear_price) {
            return Err(GridError::Config("gas must be more expensive than nuclear".into()));
        }
        if !(self.gas_emission > self.nuclear_emission) {
            return Err(GridError::Config("gas must emit more than nuclear".into()));
        }
        if !(self.buy_back_ratio > 0.0 && self.buy_back_ratio < 1.0) {
            return Err(GridError::Config(format!(
                "buy_back_ratio must lie in (0, 1), got {}",
                self.buy_back_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSignals {
    pub r_sd: Vec<f64>,
    pub r_bd: Vec<f64>,
    pub c: Vec<f64>,
}

/// Merit-order prices: nuclear covers demand up to its capacity, gas the
/// remainder; price and emission rate are the energy-share blend.
pub fn gen_grid_signals(model: &GridSourceModel, reference_demand: &[f64]) -> Result<GridSignals> {
    model.validate()?;
    let mut out = GridSignals {
        r_sd: Vec::with_capacity(reference_demand.len()),
        r_bd: Vec::with_capacity(reference_demand.len()),
        c: Vec::with_capacity(reference_demand.len()),
    };
    for &d in reference_demand {
        let nuclear_share = if d <= model.nuclear_capacity {
            1.0
        } else {
            model.nuclear_capacity / d
        };
        let gas_share = 1.0 - nuclear_share;
        let r_sd = nuclear_share * model.nuclear_price + gas_share * model.gas_price;
        out.r_sd.push(r_sd);
        out.r_bd.push(model.buy_back_ratio * r_sd);
        out.c
            .push(nuclear_share * model.nuclear_emission + gas_share * model.gas_emission);
    }
    Ok(out)
}

/// Expected aggregate grid demand without batteries or noise.
pub fn reference_demand(households: &[&HouseholdConfig], horizon: usize) -> Vec<f64> {
    (0..horizon)
        .map(|t| {
            let net: f64 = households
                .iter()
                .map(|h| h.profile_peak_load * base_profile(h.profile_type).at(t) - h.pv_peak_pv_gen * pv_shape(t))
                .sum();
            net.max(0.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdSeries {
    pub load: Vec<f64>,
    pub pv: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeData {
    pub seed: u64,
    pub horizon: usize,
    /// Indexed `[microgrid][household]`.
    pub households: Vec<Vec<HouseholdSeries>>,
    pub grid: GridSignals,
    pub model: GridSourceModel,
}

pub fn generate_episode(
    microgrids: &[Vec<HouseholdConfig>],
    settings: &GridSettings,
    options: &DatagenOptions,
    horizon: usize,
    seed: u64,
) -> Result<EpisodeData> {
    if horizon == 0 {
        return Err(GridError::Config("horizon must be >= 1".into()));
    }
    let all: Vec<&HouseholdConfig> = microgrids.iter().flatten().collect();
    let reference = reference_demand(&all, horizon);
    let model = GridSourceModel::resolve(settings, &reference)?;
    let grid = gen_grid_signals(&model, &reference)?;

    let temperature = options
        .temperature_enabled
        .then(|| temperature_scale(horizon, &mut substream(seed, Domain::Temperature, 0)));

    let households = microgrids
        .iter()
        .enumerate()
        .map(|(m, houses)| {
            houses
                .iter()
                .enumerate()
                .map(|(h, cfg)| {
                    let key = household_key(m, h);
                    let shape = base_profile(cfg.profile_type);
                    let mut load_rng = substream(seed, Domain::Load, key);
                    let mut pv_rng = substream(seed, Domain::Pv, key);
                    let (load_noise, pv_noise) = if options.noise_enabled {
                        (Some(&mut load_rng), Some(&mut pv_rng))
                    } else {
                        (None, None)
                    };
                    HouseholdSeries {
                        load: gen_load(&shape, cfg.profile_peak_load, horizon, temperature.as_deref(), load_noise),
                        pv: gen_pv(cfg.pv_peak_pv_gen, horizon, pv_noise),
                    }
                })
                .collect()
        })
        .collect();

    Ok(EpisodeData {
        seed,
        horizon,
        households,
        grid,
        model,
    })
}

/// Write one `t,value` CSV.
pub fn write_series_csv(path: &Path, series: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,value")?;
    for (t, v) in series.iter().enumerate() {
        writeln!(out, "{t},{v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Write the episode as one CSV per series; returns the file names written.
pub fn write_csv_bundle(
    data: &EpisodeData,
    microgrids: &[Vec<HouseholdConfig>],
    dir: &Path,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut emit = |name: String, series: &[f64]| -> Result<()> {
        write_series_csv(&dir.join(&name), series)?;
        files.push(name);
        Ok(())
    };
    for (m, houses) in microgrids.iter().enumerate() {
        for (h, cfg) in houses.iter().enumerate() {
            let s = &data.households[m][h];
            emit(format!("load_{}.csv", cfg.id), &s.load)?;
            emit(format!("pv_{}.csv", cfg.id), &s.pv)?;
        }
    }
    emit("r_sd.csv".into(), &data.grid.r_sd)?;
    emit("r_bd.csv".into(), &data.grid.r_bd)?;
    emit("c.csv".into(), &data.grid.c)?;
    Ok(files)
}
